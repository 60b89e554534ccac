#include "fastface/sampler.hpp"

#include <cmath>
#include <random>
#include <string>

#include "fastface/errors.hpp"

namespace fastface {

NoiseSchedule NoiseSchedule::linear(std::size_t num_steps, double beta_start,
                                    double beta_end) {
  if (num_steps < 2) throw ConfigError("noise schedule needs at least two steps");
  if (!(beta_start > 0.0 && beta_end < 1.0 && beta_start <= beta_end)) {
    throw ConfigError("noise schedule betas must satisfy 0 < beta_start <= beta_end < 1");
  }
  std::vector<double> a(num_steps + 1, 1.0);
  for (std::size_t i = 0; i < num_steps; ++i) {
    const double beta = beta_start + (beta_end - beta_start) * static_cast<double>(i) /
                                         static_cast<double>(num_steps - 1);
    a[i + 1] = a[i] * (1.0 - beta);
  }
  return NoiseSchedule(std::move(a));
}

NoiseSchedule NoiseSchedule::from_alpha_bar(std::vector<double> alpha_bar) {
  if (alpha_bar.empty() || alpha_bar.front() != 1.0) {
    throw ConfigError("noise schedule must start with a_0 = 1");
  }
  for (std::size_t i = 1; i < alpha_bar.size(); ++i) {
    if (!(alpha_bar[i] >= 0.0 && alpha_bar[i] < alpha_bar[i - 1])) {
      throw ConfigError("noise schedule must strictly decrease within [0, 1] (index " +
                        std::to_string(i) + ")");
    }
  }
  return NoiseSchedule(std::move(alpha_bar));
}

double NoiseSchedule::alpha_bar(int t) const {
  if (t < 0 || t > max_timestep()) {
    throw ConfigError("timestep " + std::to_string(t) + " is not in the schedule [0, " +
                      std::to_string(max_timestep()) + "]");
  }
  return alpha_bar_[static_cast<std::size_t>(t)];
}

std::vector<double> forward_noise(std::span<const double> x0, int t,
                                  std::span<const double> eps, const NoiseSchedule& schedule) {
  if (x0.size() != eps.size()) throw ConfigError("forward_noise: x0 and eps sizes differ");
  const double a = schedule.alpha_bar(t);
  const double sa = std::sqrt(a);
  const double sn = std::sqrt(1.0 - a);
  std::vector<double> out(x0.size());
  for (std::size_t i = 0; i < x0.size(); ++i) out[i] = sa * x0[i] + sn * eps[i];
  return out;
}

SamplerState ddim_step(const SamplerState& state, std::span<const double> eps_hat, int t_next,
                       const NoiseSchedule& schedule) {
  if (t_next >= state.t) {
    throw ConfigError("ddim_step: next timestep " + std::to_string(t_next) +
                      " must precede current " + std::to_string(state.t));
  }
  if (eps_hat.size() != state.x.size()) throw ConfigError("ddim_step: eps size mismatch");
  const double a = schedule.alpha_bar(state.t);
  const double a_next = schedule.alpha_bar(t_next);
  const double sa = std::sqrt(a);
  const double sn = std::sqrt(1.0 - a);
  SamplerState next{std::vector<double>(state.x.size()), t_next, state.step_index + 1,
                    state.rng_seed};
  for (std::size_t i = 0; i < state.x.size(); ++i) {
    const double x0_hat = (state.x[i] - sn * eps_hat[i]) / sa;
    if (!std::isfinite(x0_hat)) {
      throw NumericError("ddim_step: non-finite clean-sample estimate at index " +
                         std::to_string(i));
    }
    next.x[i] = std::sqrt(a_next) * x0_hat + std::sqrt(1.0 - a_next) * eps_hat[i];
  }
  return next;
}

NoisePrediction gaussian_denoiser(std::span<const double> x_t, int t,
                                  const GaussianTarget& target, const NoiseSchedule& schedule) {
  if (target.mean.size() != x_t.size()) {
    throw ConfigError("gaussian_denoiser: target mean size differs from state size");
  }
  const double a = schedule.alpha_bar(t);
  const double denom = a * target.sigma * target.sigma + 1.0 - a;
  if (denom <= 0.0) throw NumericError("gaussian_denoiser: degenerate posterior at t=0");
  const double sn = std::sqrt(1.0 - a);
  const double sa = std::sqrt(a);
  std::vector<double> eps(x_t.size());
  for (std::size_t i = 0; i < x_t.size(); ++i) {
    eps[i] = sn * (x_t[i] - sa * target.mean[i]) / denom;
  }
  return NoisePrediction(std::move(eps));
}

GaussianBackend::GaussianBackend(GaussianTarget prior, GaussianTarget text, GaussianTarget id,
                                 NoiseSchedule schedule)
    : prior_(std::move(prior)), text_(std::move(text)), id_(std::move(id)),
      schedule_(std::move(schedule)) {
  if (text_.mean.size() != prior_.mean.size() || id_.mean.size() != prior_.mean.size()) {
    throw ConfigError("gaussian backend: condition means must match the prior dimension");
  }
}

GaussianTarget GaussianBackend::target_for(Slot slot) const {
  switch (slot) {
    case Slot::Uncond: return prior_;
    case Slot::TextOnly: return text_;
    case Slot::IdOnly: return id_;
    case Slot::Full: {
      GaussianTarget joint{prior_.mean, 0.5 * (text_.sigma + id_.sigma)};
      for (std::size_t i = 0; i < joint.mean.size(); ++i) {
        joint.mean[i] = text_.mean[i] + id_.mean[i] - prior_.mean[i];
      }
      return joint;
    }
  }
  return prior_;
}

NoisePrediction GaussianBackend::predict(std::span<const double> x_t, int t, Slot slot,
                                         const StepContext&,
                                         std::vector<AttentionTrace>*) const {
  return gaussian_denoiser(x_t, t, target_for(slot), schedule_);
}

void ToyDims::validate() const {
  if (positions == 0 || channels == 0 || model_dim == 0 || head_dim == 0 ||
      context_dim == 0 || text_tokens == 0 || id_tokens == 0 || blocks == 0) {
    throw ConfigError("toy denoiser dimensions must all be positive");
  }
  if (state_dim() > 64) throw ConfigError("toy denoiser state dimension must be <= 64");
}

namespace {

Matrix random_matrix(std::mt19937_64& rng, std::size_t rows, std::size_t cols) {
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(rows)));
  Matrix m(rows, cols);
  for (double& v : m.data) v = normal(rng);
  return m;
}

BlockGroup group_for_block(std::size_t index, std::size_t count) {
  if (index == 0) return BlockGroup::Down;
  if (index + 1 == count) return BlockGroup::Up;
  return BlockGroup::Mid;
}

}  // namespace

ToyDenoiser::ToyDenoiser(std::uint64_t weight_seed, ToyDims dims, double adapter_scale,
                         Condition text, Condition id)
    : dims_(dims), adapter_scale_(adapter_scale), text_(std::move(text)), id_(std::move(id)) {
  dims_.validate();
  if (!std::isfinite(adapter_scale_) || adapter_scale_ < 0.0) {
    throw ConfigError("adapter scale must be finite and >= 0");
  }
  std::mt19937_64 rng(weight_seed);
  w_in_ = random_matrix(rng, dims_.channels, dims_.model_dim);
  for (std::size_t b = 0; b < dims_.blocks; ++b) {
    Block block;
    block.self_q = random_matrix(rng, dims_.model_dim, dims_.head_dim);
    block.self_k = random_matrix(rng, dims_.model_dim, dims_.head_dim);
    block.self_v = random_matrix(rng, dims_.model_dim, dims_.model_dim);
    block.cross.wq = random_matrix(rng, dims_.model_dim, dims_.head_dim);
    block.cross.wk = random_matrix(rng, dims_.context_dim, dims_.head_dim);
    block.cross.wv = random_matrix(rng, dims_.context_dim, dims_.model_dim);
    block.cross.wk_id = random_matrix(rng, dims_.context_dim, dims_.head_dim);
    block.cross.wv_id = random_matrix(rng, dims_.context_dim, dims_.model_dim);
    block.cross.head_dim = dims_.head_dim;
    block.cross.adapter_scale = adapter_scale_;
    block.cross.group = group_for_block(b, dims_.blocks);
    blocks_.push_back(std::move(block));
  }
  w_out_ = random_matrix(rng, dims_.model_dim, dims_.channels);
}

NoisePrediction ToyDenoiser::predict(std::span<const double> x_t, int t, Slot slot,
                                     const StepContext& ctx,
                                     std::vector<AttentionTrace>* traces) const {
  const bool with_text = slot == Slot::TextOnly || slot == Slot::Full;
  const bool with_id = slot == Slot::IdOnly || slot == Slot::Full;
  return evaluate(x_t, t, with_text ? text_ : Condition::null(),
                  with_id ? id_ : Condition::null(), ctx, traces);
}

NoisePrediction ToyDenoiser::evaluate(std::span<const double> x_t, int t,
                                      const Condition& text, const Condition& id,
                                      const StepContext& ctx,
                                      std::vector<AttentionTrace>* traces) const {
  const std::size_t text_size = dims_.text_tokens * dims_.context_dim;
  const std::size_t id_size = dims_.id_tokens * dims_.context_dim;
  if (x_t.size() != dims_.state_dim()) {
    throw ConfigError("toy denoiser: state has " + std::to_string(x_t.size()) +
                      " values, expected " + std::to_string(dims_.state_dim()));
  }
  if (!text.is_null() && text.embedding.size() != text_size) {
    throw ConfigError("toy denoiser: text embedding has wrong size");
  }
  if (!id.is_null() && id.embedding.size() != id_size) {
    throw ConfigError("toy denoiser: id embedding has wrong size");
  }
  const AMConfig none;
  const AMConfig& am = ctx.am ? *ctx.am : none;

  Matrix h(dims_.positions, dims_.channels, std::vector<double>(x_t.begin(), x_t.end()));
  for (std::size_t c = 0; c < dims_.channels; ++c) {
    const double freq = std::pow(1000.0, -static_cast<double>(c / 2 * 2) /
                                             static_cast<double>(dims_.channels));
    const double emb = (c % 2 == 0) ? std::sin(t * freq) : std::cos(t * freq);
    for (std::size_t p = 0; p < dims_.positions; ++p) h(p, c) += 0.1 * emb;
  }
  h = matmul(h, w_in_);

  const Matrix ctx_text = text.is_null()
                              ? Matrix(dims_.text_tokens, dims_.context_dim)
                              : Matrix(dims_.text_tokens, dims_.context_dim, text.embedding);
  const Matrix ctx_id = id.is_null()
                            ? Matrix(dims_.id_tokens, dims_.context_dim)
                            : Matrix(dims_.id_tokens, dims_.context_dim, id.embedding);

  if (traces) traces->clear();
  for (const Block& block : blocks_) {
    const Matrix self = cross_attention(h, block.self_q, block.self_k, block.self_v, h,
                                        dims_.head_dim);
    for (std::size_t i = 0; i < h.data.size(); ++i) h.data[i] += self.data[i];

    DecoupledBlockParams params = block.cross;
    if (id.is_null()) params.adapter_scale = 0.0;
    AttentionTrace trace;
    const Matrix cross = decoupled_attention(h, params, ctx_text, ctx_id, am, ctx.step_index,
                                             ctx.total_steps, &trace);
    for (std::size_t i = 0; i < h.data.size(); ++i) h.data[i] = std::tanh(h.data[i] + cross.data[i]);
    if (traces && params.adapter_scale > 0.0) traces->push_back(std::move(trace));
  }
  Matrix out = matmul(h, w_out_);
  require_finite(out.data, "toy denoiser output");
  return NoisePrediction(std::move(out.data), {dims_.positions, dims_.channels});
}

Condition make_toy_condition(ConditionKind kind, const ToyDims& dims, std::uint64_t seed) {
  Condition c;
  c.kind = kind;
  if (kind == ConditionKind::Null) return c;
  const std::size_t tokens = kind == ConditionKind::Text ? dims.text_tokens : dims.id_tokens;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  c.embedding.resize(tokens * dims.context_dim);
  for (double& v : c.embedding) v = normal(rng);
  return c;
}

std::vector<double> initial_noise(std::size_t dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> x(dim);
  for (double& v : x) v = normal(rng);
  return x;
}

Trajectory sample(const SamplerSettings& settings, const GuidanceConfig& guidance,
                  const AMConfig& am, std::uint64_t seed, const Denoiser& denoiser) {
  const auto& ts = settings.timesteps;
  if (ts.empty()) throw ConfigError("sampler: timestep list is empty");
  for (std::size_t i = 0; i < ts.size(); ++i) {
    settings.schedule.alpha_bar(ts[i]);
    if (ts[i] <= 0 || (i > 0 && ts[i] >= ts[i - 1])) {
      throw ConfigError("sampler: timesteps must be positive and strictly descending");
    }
  }
  guidance.validate(ts.size());
  am.validate();

  const RequiredSlots slots = required_slots(guidance.variant);
  const int total = static_cast<int>(ts.size());
  Trajectory traj;
  traj.evaluations_per_step = slots.count();
  traj.states.push_back({initial_noise(denoiser.state_dim(), seed), ts.front(), 0, seed});

  for (int i = 0; i < total; ++i) {
    const SamplerState& state = traj.states.back();
    const StepContext ctx{i, total, &am};
    const Slot traced = slots.full ? Slot::Full : Slot::IdOnly;
    std::vector<AttentionTrace> traces;
    auto eval = [&](Slot s) {
      return denoiser.predict(state.x, state.t, s, ctx, s == traced ? &traces : nullptr);
    };
    GuidanceInputs inputs;
    if (slots.uu) inputs.eps_uu = eval(Slot::Uncond);
    if (slots.id) inputs.eps_id = eval(Slot::IdOnly);
    if (slots.text) inputs.eps_text = eval(Slot::TextOnly);
    if (slots.full) inputs.eps_full = eval(Slot::Full);

    NoisePrediction eps = scheduled_guidance(static_cast<std::size_t>(i), ts.size(), guidance,
                                             inputs);
    const int t_next = i + 1 < total ? ts[static_cast<std::size_t>(i) + 1] : 0;
    SamplerState next = ddim_step(state, eps.values, t_next, settings.schedule);
    traj.eps.push_back(std::move(eps));
    traj.traces.push_back(std::move(traces));
    traj.states.push_back(std::move(next));
  }
  return traj;
}

}  // namespace fastface
