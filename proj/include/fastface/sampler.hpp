#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "fastface/attention.hpp"
#include "fastface/guidance.hpp"

namespace fastface {

// Cumulative signal coefficients a_t indexed by integer timestep; a_0 = 1.
class NoiseSchedule {
 public:
  // a_t = prod_{i=1..t} (1 - beta_i), beta linearly spaced over num_steps.
  static NoiseSchedule linear(std::size_t num_steps = 1000, double beta_start = 1e-4,
                              double beta_end = 2e-2);
  // Explicit table; entry 0 must be 1 and entries must strictly decrease in [0, 1].
  static NoiseSchedule from_alpha_bar(std::vector<double> alpha_bar);

  double alpha_bar(int t) const;
  int max_timestep() const { return static_cast<int>(alpha_bar_.size()) - 1; }

 private:
  explicit NoiseSchedule(std::vector<double> a) : alpha_bar_(std::move(a)) {}
  std::vector<double> alpha_bar_;
};

// Target distribution N(mean, sigma^2 I) of the analytic backend.
struct GaussianTarget {
  std::vector<double> mean;
  double sigma = 0.0;
};

enum class ConditionKind { Null, Text, Id };

struct Condition {
  ConditionKind kind = ConditionKind::Null;
  std::vector<double> embedding;         // toy backend payload
  std::optional<GaussianTarget> target;  // analytic backend payload

  static Condition null() { return {}; }
  bool is_null() const { return kind == ConditionKind::Null; }
};

struct SamplerState {
  std::vector<double> x;
  int t = 0;
  int step_index = 0;
  std::uint64_t rng_seed = 0;
};

// sqrt(a_t) x0 + sqrt(1 - a_t) eps
std::vector<double> forward_noise(std::span<const double> x0, int t,
                                  std::span<const double> eps, const NoiseSchedule& schedule);

// Deterministic update through the predicted clean sample.
SamplerState ddim_step(const SamplerState& state, std::span<const double> eps_hat, int t_next,
                       const NoiseSchedule& schedule);

// Exact noise prediction for data distributed as N(target.mean, target.sigma^2 I):
//   sqrt(1 - a_t) (x_t - sqrt(a_t) mean) / (a_t sigma^2 + 1 - a_t)
NoisePrediction gaussian_denoiser(std::span<const double> x_t, int t,
                                  const GaussianTarget& target, const NoiseSchedule& schedule);

// The four condition combinations a guided step may evaluate.
enum class Slot { Uncond, IdOnly, TextOnly, Full };

struct StepContext {
  int step_index = 0;
  int total_steps = 1;
  const AMConfig* am = nullptr;
};

class Denoiser {
 public:
  virtual ~Denoiser() = default;
  virtual std::size_t state_dim() const = 0;
  // `traces`, when non-null, receives one entry per decoupled block.
  virtual NoisePrediction predict(std::span<const double> x_t, int t, Slot slot,
                                  const StepContext& ctx,
                                  std::vector<AttentionTrace>* traces) const = 0;
};

// Analytic backend. The joint condition composes additively around the prior:
// mean = text.mean + id.mean - prior.mean, sigma = (text.sigma + id.sigma) / 2.
class GaussianBackend : public Denoiser {
 public:
  GaussianBackend(GaussianTarget prior, GaussianTarget text, GaussianTarget id,
                  NoiseSchedule schedule);

  std::size_t state_dim() const override { return prior_.mean.size(); }
  NoisePrediction predict(std::span<const double> x_t, int t, Slot slot,
                          const StepContext& ctx,
                          std::vector<AttentionTrace>* traces) const override;
  GaussianTarget target_for(Slot slot) const;

 private:
  GaussianTarget prior_, text_, id_;
  NoiseSchedule schedule_;
};

struct ToyDims {
  std::size_t positions = 16;
  std::size_t channels = 4;
  std::size_t model_dim = 8;
  std::size_t head_dim = 4;
  std::size_t context_dim = 8;
  std::size_t text_tokens = 4;
  std::size_t id_tokens = 4;
  std::size_t blocks = 2;

  std::size_t state_dim() const { return positions * channels; }
  void validate() const;
};

// Fixed-weight denoiser: per block a self-attention, a decoupled cross-attention
// and a tanh, all with weights drawn from `weight_seed`. Block 0 is a "down"
// block, the last block is "up", any in between are "mid".
class ToyDenoiser : public Denoiser {
 public:
  ToyDenoiser(std::uint64_t weight_seed, ToyDims dims, double adapter_scale,
              Condition text, Condition id);

  std::size_t state_dim() const override { return dims_.state_dim(); }
  const ToyDims& dims() const { return dims_; }

  NoisePrediction predict(std::span<const double> x_t, int t, Slot slot,
                          const StepContext& ctx,
                          std::vector<AttentionTrace>* traces) const override;

  // Direct evaluation with explicit conditions; a null id condition removes the
  // identity branch.
  NoisePrediction evaluate(std::span<const double> x_t, int t, const Condition& text,
                           const Condition& id, const StepContext& ctx,
                           std::vector<AttentionTrace>* traces) const;

 private:
  struct Block {
    Matrix self_q, self_k, self_v;
    DecoupledBlockParams cross;
  };
  ToyDims dims_;
  double adapter_scale_;
  Condition text_, id_;
  Matrix w_in_, w_out_;
  std::vector<Block> blocks_;
};

// Random embedding for a toy condition, deterministic in `seed`.
Condition make_toy_condition(ConditionKind kind, const ToyDims& dims, std::uint64_t seed);

struct SamplerSettings {
  std::vector<int> timesteps{999, 749, 499, 249};
  NoiseSchedule schedule = NoiseSchedule::linear();
};

struct Trajectory {
  std::vector<SamplerState> states;                  // initial state + one per step
  std::vector<NoisePrediction> eps;                  // guided prediction per step
  std::vector<std::vector<AttentionTrace>> traces;   // per step, per block
  std::size_t evaluations_per_step = 0;
};

// Standard normal initial state x_T drawn from `seed`.
std::vector<double> initial_noise(std::size_t dim, std::uint64_t seed);

Trajectory sample(const SamplerSettings& settings, const GuidanceConfig& guidance,
                  const AMConfig& am, std::uint64_t seed, const Denoiser& denoiser);

}  // namespace fastface
