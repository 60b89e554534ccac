#include "fastface/guidance.hpp"

#include <string>

#include "fastface/errors.hpp"
#include "fastface/numerics.hpp"

namespace fastface {
namespace {

const NoisePrediction& slot(const std::optional<NoisePrediction>& p, GuidanceVariant variant,
                            const char* name) {
  if (!p) {
    throw ConfigError(std::string(to_string(variant)) + " requires the " + name +
                      " prediction");
  }
  return *p;
}

void require_same_shape(const NoisePrediction& a, const NoisePrediction& b) {
  if (a.shape != b.shape || a.values.size() != b.values.size()) {
    throw ConfigError("noise predictions have mismatched shapes");
  }
}

// base + ca * (a1 - a0) + cb * (b1 - b0), elementwise.
DcgTerms two_term(const NoisePrediction& base, double ca, const NoisePrediction& a1,
                  const NoisePrediction& a0, double cb, const NoisePrediction& b1,
                  const NoisePrediction& b0) {
  for (const auto* p : {&a1, &a0, &b1, &b0}) require_same_shape(base, *p);
  DcgTerms out{base, base, base};
  for (std::size_t i = 0; i < base.size(); ++i) {
    const double ta = ca * (a1.values[i] - a0.values[i]);
    const double tb = cb * (b1.values[i] - b0.values[i]);
    out.term_a.values[i] = ta;
    out.term_b.values[i] = tb;
    out.combined.values[i] = base.values[i] + ta + tb;
  }
  return out;
}

}  // namespace

std::string_view to_string(GuidanceVariant v) {
  switch (v) {
    case GuidanceVariant::None: return "none";
    case GuidanceVariant::CFG: return "cfg";
    case GuidanceVariant::DCG1: return "dcg1";
    case GuidanceVariant::DCG2: return "dcg2";
    case GuidanceVariant::DCG3: return "dcg3";
  }
  return "unknown";
}

GuidanceVariant guidance_variant_from_string(std::string_view name) {
  for (auto v : {GuidanceVariant::None, GuidanceVariant::CFG, GuidanceVariant::DCG1,
                 GuidanceVariant::DCG2, GuidanceVariant::DCG3}) {
    if (to_string(v) == name) return v;
  }
  throw ConfigError("unknown guidance variant '" + std::string(name) + "'");
}

void GuidanceConfig::validate(std::size_t total_steps) const {
  if (!(phi >= 0.0 && phi <= 1.0)) throw ConfigError("guidance.phi must lie in [0, 1]");
  if (variant == GuidanceVariant::DCG1 || variant == GuidanceVariant::DCG2 ||
      variant == GuidanceVariant::DCG3) {
    if (alpha_schedule.size() != total_steps || beta_schedule.size() != total_steps) {
      throw ConfigError("guidance schedules must have " + std::to_string(total_steps) +
                        " entries (alpha has " + std::to_string(alpha_schedule.size()) +
                        ", beta has " + std::to_string(beta_schedule.size()) + ")");
    }
  }
  require_finite(alpha_schedule, "guidance.alpha");
  require_finite(beta_schedule, "guidance.beta");
}

RequiredSlots required_slots(GuidanceVariant variant) {
  switch (variant) {
    case GuidanceVariant::None: return {.full = true};
    case GuidanceVariant::CFG: return {.uu = true, .full = true};
    case GuidanceVariant::DCG1: return {.uu = true, .text = true, .full = true};
    case GuidanceVariant::DCG2: return {.uu = true, .id = true, .full = true};
    case GuidanceVariant::DCG3: return {.uu = true, .id = true, .text = true};
  }
  return {};
}

NoisePrediction cfg_combine(const NoisePrediction& eps_uu, const NoisePrediction& eps_full,
                            double w) {
  require_same_shape(eps_uu, eps_full);
  NoisePrediction out = eps_uu;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out.values[i] = eps_uu.values[i] + w * (eps_full.values[i] - eps_uu.values[i]);
  }
  return out;
}

DcgTerms dcg_terms(GuidanceVariant variant, const GuidanceInputs& in, double alpha,
                   double beta) {
  const auto& uu = slot(in.eps_uu, variant, "eps_uu");
  switch (variant) {
    case GuidanceVariant::DCG1: {
      const auto& text = slot(in.eps_text, variant, "eps_text");
      const auto& full = slot(in.eps_full, variant, "eps_full");
      return two_term(uu, alpha, text, uu, beta, full, text);
    }
    case GuidanceVariant::DCG2: {
      const auto& id = slot(in.eps_id, variant, "eps_id");
      const auto& full = slot(in.eps_full, variant, "eps_full");
      return two_term(uu, alpha, id, uu, beta, full, id);
    }
    case GuidanceVariant::DCG3: {
      const auto& text = slot(in.eps_text, variant, "eps_text");
      const auto& id = slot(in.eps_id, variant, "eps_id");
      return two_term(uu, alpha, text, uu, beta, id, uu);
    }
    default:
      throw ConfigError("dcg_terms: " + std::string(to_string(variant)) +
                        " is not a decoupled variant");
  }
}

NoisePrediction dcg_combine(GuidanceVariant variant, const GuidanceInputs& inputs,
                            double alpha, double beta) {
  return dcg_terms(variant, inputs, alpha, beta).combined;
}

NoisePrediction dcg_rescale(const NoisePrediction& eps_dcg, const NoisePrediction& term_a,
                            const NoisePrediction& term_b, double phi) {
  require_same_shape(eps_dcg, term_a);
  require_same_shape(eps_dcg, term_b);
  if (!(phi >= 0.0 && phi <= 1.0)) throw ConfigError("dcg_rescale: phi must lie in [0, 1]");
  const double std_a = mean_std(term_a.values).std;
  const double std_b = mean_std(term_b.values).std;
  const double std_dcg = mean_std(eps_dcg.values).std;
  const double factor = (std_a + std_b) / (2.0 * std_dcg + kEpsilonGuard);
  NoisePrediction out = eps_dcg;
  for (double& v : out.values) v = phi * (factor * v) + (1.0 - phi) * v;
  return out;
}

StepCoefficients step_coefficients(std::size_t step_index, std::size_t total_steps,
                                   const GuidanceConfig& config) {
  if (step_index >= total_steps) {
    throw ConfigError("step index " + std::to_string(step_index) + " out of range for " +
                      std::to_string(total_steps) + " steps");
  }
  if (step_index == 0 || step_index + 1 == total_steps) return {};
  StepCoefficients c;
  c.w = config.w;
  if (!config.alpha_schedule.empty()) c.alpha = config.alpha_schedule.at(step_index);
  if (!config.beta_schedule.empty()) c.beta = config.beta_schedule.at(step_index);
  return c;
}

NoisePrediction scheduled_guidance(std::size_t step_index, std::size_t total_steps,
                                   const GuidanceConfig& config,
                                   const GuidanceInputs& inputs) {
  config.validate(total_steps);
  const StepCoefficients c = step_coefficients(step_index, total_steps, config);
  switch (config.variant) {
    case GuidanceVariant::None:
      return slot(inputs.eps_full, config.variant, "eps_full");
    case GuidanceVariant::CFG:
      return cfg_combine(slot(inputs.eps_uu, config.variant, "eps_uu"),
                         slot(inputs.eps_full, config.variant, "eps_full"), c.w);
    default: {
      DcgTerms terms = dcg_terms(config.variant, inputs, c.alpha, c.beta);
      if (!config.rescale_enabled) return std::move(terms.combined);
      return dcg_rescale(terms.combined, terms.term_a, terms.term_b, config.phi);
    }
  }
}

}  // namespace fastface
