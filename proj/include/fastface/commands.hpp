#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include <nlohmann/json.hpp>

#include "fastface/config.hpp"
#include "fastface/dataset.hpp"

namespace fastface {

// Everything a single generation produces.
struct GenerationResult {
  Trajectory trajectory;
  EvalRecord record;
  std::uint64_t seed = 0;
};

// Seed of the (identity, prompt) generation: base + identity * prompts + prompt.
std::uint64_t generation_seed(const RunConfig& config, std::uint64_t base_seed,
                              std::size_t identity_index, std::size_t prompt_index);

// Runs one guided generation for an identity/prompt pair of the synthetic
// eval set and scores it.
GenerationResult run_generation(const RunConfig& config, const DatasetManifest& eval_set,
                                std::size_t identity_index, std::size_t prompt_index,
                                std::uint64_t base_seed);

DatasetManifest make_eval_set(const RunConfig& config);

// All identity x prompt generations for one configuration.
RecordSet evaluate_cell(const RunConfig& config, std::uint64_t base_seed,
                        const std::string& label);

struct SweepCell {
  std::string label;
  RunConfig config;
};

// Grid cells in iteration order (alpha outer, beta inner; or adapter scales).
std::vector<SweepCell> sweep_cells(const RunConfig& base);

nlohmann::json to_json(const ParetoPoint& p);
ParetoPoint parse_pareto_point(const nlohmann::json& doc, const std::string& path);
nlohmann::json to_json(const DistributionStats& s);

// CLI verbs. Each writes its artifacts plus a manifest.json into `out`.
void cmd_simulate(const RunConfig& config, std::uint64_t seed, const std::filesystem::path& out);
void cmd_sweep(const RunConfig& config, std::uint64_t seed, const std::filesystem::path& out,
               std::size_t workers);
void cmd_analyze_transform(const RunConfig& config, const std::filesystem::path& dump,
                           const std::filesystem::path& out,
                           std::optional<std::size_t> bins = std::nullopt);
void cmd_eval(const std::filesystem::path& manifest, const std::filesystem::path& records_dir,
              const std::filesystem::path& out);
void cmd_filter_identities(const std::filesystem::path& manifest, double threshold,
                           const std::filesystem::path& out);
void cmd_pareto(const std::filesystem::path& points, const std::filesystem::path& out);

}  // namespace fastface
