#pragma once

#include <cstddef>
#include <set>
#include <string_view>

#include "fastface/numerics.hpp"

namespace fastface {

enum class BlockGroup { Down, Mid, Up };

std::string_view to_string(BlockGroup g);
BlockGroup block_group_from_string(std::string_view name);

// Decoupled attention probabilities (n_query x n_tokens) for one block and step.
struct AttentionMap {
  Matrix probs;
  BlockGroup block_group = BlockGroup::Up;
  int step_index = 0;
};

// Projections of one decoupled cross-attention block.
//   wq: d_model x head_dim, wk/wk_id: d_ctx x head_dim, wv/wv_id: d_ctx x d_model
struct DecoupledBlockParams {
  Matrix wq, wk, wv, wk_id, wv_id;
  std::size_t head_dim = 0;
  double adapter_scale = 0.0;
  BlockGroup group = BlockGroup::Up;
};

enum class TransformKind { None, ScalePower, ScheduledSoftmask };

std::string_view to_string(TransformKind k);
TransformKind transform_kind_from_string(std::string_view name);

struct AMConfig {
  TransformKind kind = TransformKind::None;
  double s_down = 1.0;
  double s_mid = 1.0;
  double s_up = 1.0;
  double p_power = 1.0;
  double quantile_p = 0.65;
  double d_first = 7.5;
  double d_rest = 5.0;
  double s_first = 1.0;
  double blend_w = 0.7;
  // +1 moves entries above the quantile up; -1 reproduces the printed formula.
  double softmask_sign = 1.0;
  std::set<BlockGroup> target_groups{BlockGroup::Down, BlockGroup::Up};
  bool invert_first_token = false;
  bool adain_output = false;

  // Scale-power preset: p=1.3, s=1.45 down / 1.55 up.
  static AMConfig scale_power_preset();
  // Scheduled-softmask preset: s=1.55, p=0.65, d=7.5 first / 5 after, w=0.7.
  static AMConfig scheduled_softmask_preset();

  double scale_for(BlockGroup g) const;
  bool targets(BlockGroup g) const { return target_groups.contains(g); }
  void validate() const;
};

// Elementwise s * A^p. No row renormalization.
AttentionMap scale_power(const AttentionMap& a, double s, double p);

// s * sigmoid(norm(sigmoid(sign * d * (norm(A) - Q_p(norm(A)))))), with norm the
// global min-max normalization and Q_p the global quantile.
AttentionMap softmask(const AttentionMap& a, double d, double p, double s,
                      double sign = 1.0);

// w * m + (1 - w) * AdaIN(stats(A), m) with m the step-scheduled softmask.
AttentionMap scheduled_softmask(const AttentionMap& a, const AMConfig& config,
                                int step_index);

// First column x -> (max + min) - x; other columns untouched.
AttentionMap invert_first_token(const AttentionMap& a);

Matrix adain_block_output(const Matrix& original, const Matrix& transformed, double w);

// f(A) as selected by config and the map's block group; identity when the
// group is not targeted or kind is None.
AttentionMap apply_transform(const AttentionMap& a, const AMConfig& config, int step_index);

// Whether apply_transform changes anything for this group.
bool transform_active(const AMConfig& config, BlockGroup group);

// Maps captured from one decoupled block evaluation.
struct AttentionTrace {
  AttentionMap before;
  AttentionMap after;
  bool transformed = false;
};

// softmax(QK^T/sqrt(d)) V + adapter_scale * f(softmax(QK'^T/sqrt(d))) V'.
// z: n_query x d_model, context rows have d_ctx columns. With adapter_scale 0
// the identity branch is skipped.
Matrix decoupled_attention(const Matrix& z, const DecoupledBlockParams& params,
                           const Matrix& context_text, const Matrix& context_id,
                           const AMConfig& transform, int step_index, int total_steps,
                           AttentionTrace* trace = nullptr);

// Plain single-branch scaled dot-product attention of z over `context`.
Matrix cross_attention(const Matrix& z, const Matrix& wq, const Matrix& wk, const Matrix& wv,
                       const Matrix& context, std::size_t head_dim);

}  // namespace fastface
