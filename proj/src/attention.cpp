#include "fastface/attention.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fastface/errors.hpp"

namespace fastface {

std::string_view to_string(BlockGroup g) {
  switch (g) {
    case BlockGroup::Down: return "down";
    case BlockGroup::Mid: return "mid";
    case BlockGroup::Up: return "up";
  }
  return "unknown";
}

BlockGroup block_group_from_string(std::string_view name) {
  for (auto g : {BlockGroup::Down, BlockGroup::Mid, BlockGroup::Up}) {
    if (to_string(g) == name) return g;
  }
  throw ConfigError("unknown block group '" + std::string(name) + "'");
}

std::string_view to_string(TransformKind k) {
  switch (k) {
    case TransformKind::None: return "none";
    case TransformKind::ScalePower: return "scale_power";
    case TransformKind::ScheduledSoftmask: return "scheduled_softmask";
  }
  return "unknown";
}

TransformKind transform_kind_from_string(std::string_view name) {
  for (auto k : {TransformKind::None, TransformKind::ScalePower,
                 TransformKind::ScheduledSoftmask}) {
    if (to_string(k) == name) return k;
  }
  throw ConfigError("unknown attention transform '" + std::string(name) + "'");
}

AMConfig AMConfig::scale_power_preset() {
  AMConfig c;
  c.kind = TransformKind::ScalePower;
  c.s_down = 1.45;
  c.s_up = 1.55;
  c.p_power = 1.3;
  return c;
}

AMConfig AMConfig::scheduled_softmask_preset() {
  AMConfig c;
  c.kind = TransformKind::ScheduledSoftmask;
  c.s_down = 1.55;
  c.s_up = 1.55;
  c.s_first = 1.0;
  c.quantile_p = 0.65;
  c.d_first = 7.5;
  c.d_rest = 5.0;
  c.blend_w = 0.7;
  c.invert_first_token = true;
  c.adain_output = true;
  return c;
}

double AMConfig::scale_for(BlockGroup g) const {
  switch (g) {
    case BlockGroup::Down: return s_down;
    case BlockGroup::Mid: return s_mid;
    case BlockGroup::Up: return s_up;
  }
  return 1.0;
}

void AMConfig::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw ConfigError(std::string("attention.") + name + " must be positive");
    }
  };
  positive(s_down, "s_down");
  positive(s_mid, "s_mid");
  positive(s_up, "s_up");
  positive(s_first, "s_first");
  positive(d_first, "d_first");
  positive(d_rest, "d_rest");
  positive(p_power, "p_power");
  if (!(quantile_p >= 0.0 && quantile_p <= 1.0)) {
    throw ConfigError("attention.quantile_p must lie in [0, 1]");
  }
  if (!(blend_w >= 0.0 && blend_w <= 1.0)) {
    throw ConfigError("attention.blend_w must lie in [0, 1]");
  }
  if (softmask_sign != 1.0 && softmask_sign != -1.0) {
    throw ConfigError("attention.softmask_sign must be +1 or -1");
  }
}

AttentionMap scale_power(const AttentionMap& a, double s, double p) {
  AttentionMap out = a;
  for (double& x : out.probs.data) x = s * std::pow(x, p);
  return out;
}

AttentionMap softmask(const AttentionMap& a, double d, double p, double s, double sign) {
  if (!(d > 0.0)) throw ConfigError("softmask: d must be positive");
  const std::vector<double> normed = minmax_norm(a.probs.data);
  const double q = quantile(normed, p);
  std::vector<double> inner(normed.size());
  for (std::size_t i = 0; i < normed.size(); ++i) {
    inner[i] = sigmoid(sign * d * (normed[i] - q));
  }
  const std::vector<double> renormed = minmax_norm(inner);
  AttentionMap out = a;
  for (std::size_t i = 0; i < renormed.size(); ++i) {
    out.probs.data[i] = s * sigmoid(renormed[i]);
  }
  return out;
}

AttentionMap scheduled_softmask(const AttentionMap& a, const AMConfig& config,
                                int step_index) {
  const bool first = step_index == 0;
  const double d = first ? config.d_first : config.d_rest;
  const double s = first ? config.s_first : config.scale_for(a.block_group);
  AttentionMap m = softmask(a, d, config.quantile_p, s, config.softmask_sign);
  const std::vector<double> aligned = adain(mean_std(a.probs.data), m.probs.data);
  const double w = config.blend_w;
  for (std::size_t i = 0; i < aligned.size(); ++i) {
    m.probs.data[i] = w * m.probs.data[i] + (1.0 - w) * aligned[i];
  }
  return m;
}

AttentionMap invert_first_token(const AttentionMap& a) {
  AttentionMap out = a;
  if (a.probs.rows == 0 || a.probs.cols == 0) return out;
  double lo = a.probs(0, 0);
  double hi = lo;
  for (std::size_t r = 0; r < a.probs.rows; ++r) {
    lo = std::min(lo, a.probs(r, 0));
    hi = std::max(hi, a.probs(r, 0));
  }
  for (std::size_t r = 0; r < a.probs.rows; ++r) out.probs(r, 0) = (hi + lo) - a.probs(r, 0);
  return out;
}

Matrix adain_block_output(const Matrix& original, const Matrix& transformed, double w) {
  if (!original.same_shape(transformed)) {
    throw ConfigError("adain_block_output: original and transformed shapes differ");
  }
  const std::vector<double> aligned = adain(mean_std(original.data), transformed.data);
  Matrix out = transformed;
  for (std::size_t i = 0; i < aligned.size(); ++i) {
    out.data[i] = w * transformed.data[i] + (1.0 - w) * aligned[i];
  }
  return out;
}

bool transform_active(const AMConfig& config, BlockGroup group) {
  return config.kind != TransformKind::None && config.targets(group);
}

AttentionMap apply_transform(const AttentionMap& a, const AMConfig& config, int step_index) {
  if (!transform_active(config, a.block_group)) return a;
  const AttentionMap source = config.invert_first_token ? invert_first_token(a) : a;
  AttentionMap out;
  if (config.kind == TransformKind::ScalePower) {
    out = scale_power(source, config.scale_for(a.block_group), config.p_power);
  } else {
    out = scheduled_softmask(source, config, step_index);
  }
  return config.invert_first_token ? invert_first_token(out) : out;
}

Matrix cross_attention(const Matrix& z, const Matrix& wq, const Matrix& wk, const Matrix& wv,
                       const Matrix& context, std::size_t head_dim) {
  const Matrix q = matmul(z, wq);
  const Matrix k = matmul(context, wk);
  const Matrix v = matmul(context, wv);
  const Matrix probs =
      softmax_rows(matmul_transposed(q, k), 1.0 / std::sqrt(static_cast<double>(head_dim)));
  return matmul(probs, v);
}

namespace {

void check_projection(const Matrix& w, std::size_t rows, std::size_t cols, const char* name) {
  if (w.rows != rows || w.cols != cols) {
    throw ConfigError(std::string("decoupled_attention: projection ") + name + " is " +
                      std::to_string(w.rows) + "x" + std::to_string(w.cols) + ", expected " +
                      std::to_string(rows) + "x" + std::to_string(cols));
  }
}

}  // namespace

Matrix decoupled_attention(const Matrix& z, const DecoupledBlockParams& params,
                           const Matrix& context_text, const Matrix& context_id,
                           const AMConfig& transform, int step_index, int total_steps,
                           AttentionTrace* trace) {
  const std::size_t d_model = z.cols;
  const std::size_t hd = params.head_dim;
  if (hd == 0) throw ConfigError("decoupled_attention: head_dim must be positive");
  if (step_index < 0 || step_index >= total_steps) {
    throw ConfigError("decoupled_attention: step index out of range");
  }
  if (!std::isfinite(params.adapter_scale) || params.adapter_scale < 0.0) {
    throw ConfigError("decoupled_attention: adapter scale must be finite and >= 0");
  }
  check_projection(params.wq, d_model, hd, "Wq");
  check_projection(params.wk, context_text.cols, hd, "Wk");
  check_projection(params.wv, context_text.cols, d_model, "Wv");

  Matrix out = cross_attention(z, params.wq, params.wk, params.wv, context_text, hd);
  if (params.adapter_scale == 0.0) return out;

  check_projection(params.wk_id, context_id.cols, hd, "Wk_id");
  check_projection(params.wv_id, context_id.cols, d_model, "Wv_id");
  const Matrix q = matmul(z, params.wq);
  const Matrix k_id = matmul(context_id, params.wk_id);
  const Matrix v_id = matmul(context_id, params.wv_id);
  AttentionMap map{softmax_rows(matmul_transposed(q, k_id), 1.0 / std::sqrt(static_cast<double>(hd))),
                   params.group, step_index};

  const bool active = transform_active(transform, params.group);
  AttentionMap transformed = apply_transform(map, transform, step_index);
  Matrix id_out = matmul(transformed.probs, v_id);
  if (active && transform.kind == TransformKind::ScheduledSoftmask && transform.adain_output) {
    id_out = adain_block_output(matmul(map.probs, v_id), id_out, transform.blend_w);
  }
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    out.data[i] += params.adapter_scale * id_out.data[i];
  }
  if (trace) {
    trace->before = std::move(map);
    trace->after = std::move(transformed);
    trace->transformed = active;
  }
  return out;
}

}  // namespace fastface
