#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fastface/attention.hpp"
#include "fastface/eval.hpp"
#include "fastface/guidance.hpp"
#include "fastface/sampler.hpp"

namespace fastface {

enum class Backend { Toy, Gaussian };

struct SamplerConfig {
  Backend backend = Backend::Toy;
  std::vector<int> timesteps{999, 749, 499, 249};
  std::size_t train_steps = 1000;
  double beta_start = 1e-4;
  double beta_end = 2e-2;

  SamplerSettings settings() const;
};

struct ToyConfig {
  std::uint64_t weight_seed = 0;
  ToyDims dims;
  double adapter_scale = 0.8;
};

struct GaussianConfig {
  std::vector<double> prior_mean = std::vector<double>(8, 0.0);
  std::vector<double> text_mean = std::vector<double>(8, 0.5);
  std::vector<double> id_mean = std::vector<double>(8, -0.25);
  double prior_sigma = 1.0;
  double text_sigma = 0.5;
  double id_sigma = 0.5;
};

// Desk-scale synthetic evaluation set used by simulate and sweep.
struct EvalSetConfig {
  std::size_t identities = 2;
  std::size_t prompts = 2;
  std::size_t embedding_dim = 16;
  Setting setting = Setting::Stylistic;
  std::uint64_t seed = 11;
  std::size_t identity_index = 0;  // pair used by simulate
  std::size_t prompt_index = 0;
  std::string model = "toy";
  double lora_scale = 1.0;
};

// Grid for sweep: either alpha x beta, or a list of adapter scales.
struct SweepConfig {
  std::vector<double> alpha;
  std::vector<double> beta;
  std::vector<double> adapter_scale;
};

struct AnalyzeConfig {
  int step_index = 0;
  BlockGroup group = BlockGroup::Up;
  std::size_t bins = 20;
};

struct RunConfig {
  std::uint64_t seed = 0;
  SamplerConfig sampler;
  GuidanceConfig guidance = default_guidance();
  AMConfig attention;
  ToyConfig toy;
  GaussianConfig gaussian;
  EvalSetConfig eval_set;
  SweepConfig sweep;
  AnalyzeConfig analyze;

  // DCG2 with alpha {1, 1.5, 1.5, 1}, beta {1, 3, 3, 1}, phi 0.75.
  static GuidanceConfig default_guidance();

  // Cross-field checks (schedule lengths, ranges).
  void validate() const;
};

// Strict parse: unknown keys and wrong types throw ConfigError whose message
// starts with the JSON path of the offending field (e.g. "$.guidance.phi").
RunConfig parse_run_config(const nlohmann::json& doc);
RunConfig load_run_config(const std::string& path);

// Fully resolved configuration, every field explicit.
nlohmann::json to_json(const RunConfig& config);
nlohmann::json to_json(const GuidanceConfig& config);
nlohmann::json to_json(const AMConfig& config);

GuidanceConfig parse_guidance(const nlohmann::json& doc, const std::string& path = "$");
AMConfig parse_attention(const nlohmann::json& doc, const std::string& path = "$");

}  // namespace fastface
