#pragma once

#include <cstddef>
#include <optional>
#include <string_view>
#include <vector>

namespace fastface {

// One noise prediction eps(., .) with its tensor shape.
struct NoisePrediction {
  std::vector<double> values;
  std::vector<std::size_t> shape;

  NoisePrediction() = default;
  explicit NoisePrediction(std::vector<double> v)
      : values(std::move(v)), shape{values.size()} {}
  NoisePrediction(std::vector<double> v, std::vector<std::size_t> s)
      : values(std::move(v)), shape(std::move(s)) {}

  std::size_t size() const { return values.size(); }
  friend bool operator==(const NoisePrediction&, const NoisePrediction&) = default;
};

enum class GuidanceVariant { None, CFG, DCG1, DCG2, DCG3 };

std::string_view to_string(GuidanceVariant v);
GuidanceVariant guidance_variant_from_string(std::string_view name);

struct GuidanceConfig {
  GuidanceVariant variant = GuidanceVariant::DCG2;
  std::vector<double> alpha_schedule;
  std::vector<double> beta_schedule;
  double w = 1.0;
  double phi = 0.75;
  bool rescale_enabled = true;

  // Throws ConfigError when schedule lengths differ from `total_steps` or
  // phi leaves [0, 1].
  void validate(std::size_t total_steps) const;
};

// Slots of the four condition combinations. Variants read the subset they need.
struct GuidanceInputs {
  std::optional<NoisePrediction> eps_uu;    // eps(null, null)
  std::optional<NoisePrediction> eps_id;    // eps(null, c_id)
  std::optional<NoisePrediction> eps_text;  // eps(c_text, null)
  std::optional<NoisePrediction> eps_full;  // eps(c_text, c_id)
};

// Which slots a variant evaluates. None needs only eps_full.
struct RequiredSlots {
  bool uu = false;
  bool id = false;
  bool text = false;
  bool full = false;
  std::size_t count() const { return uu + id + text + full; }
};
RequiredSlots required_slots(GuidanceVariant variant);

// Combined prediction together with the two guidance deltas that make it up.
struct DcgTerms {
  NoisePrediction combined;
  NoisePrediction term_a;  // alpha-weighted delta
  NoisePrediction term_b;  // beta-weighted delta
};

NoisePrediction cfg_combine(const NoisePrediction& eps_uu, const NoisePrediction& eps_full,
                            double w);

DcgTerms dcg_terms(GuidanceVariant variant, const GuidanceInputs& inputs, double alpha,
                   double beta);

NoisePrediction dcg_combine(GuidanceVariant variant, const GuidanceInputs& inputs,
                            double alpha, double beta);

// phi * ((std_a + std_b) / (2 std_dcg + guard)) * eps_dcg + (1 - phi) * eps_dcg
NoisePrediction dcg_rescale(const NoisePrediction& eps_dcg, const NoisePrediction& term_a,
                            const NoisePrediction& term_b, double phi);

// Guidance coefficients actually used at a step: the schedule entry at
// intermediate steps and 1 at the first and last step.
struct StepCoefficients {
  double alpha = 1.0;
  double beta = 1.0;
  double w = 1.0;
};
StepCoefficients step_coefficients(std::size_t step_index, std::size_t total_steps,
                                   const GuidanceConfig& config);

NoisePrediction scheduled_guidance(std::size_t step_index, std::size_t total_steps,
                                   const GuidanceConfig& config,
                                   const GuidanceInputs& inputs);

}  // namespace fastface
