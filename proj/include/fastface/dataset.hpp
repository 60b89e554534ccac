#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fastface/eval.hpp"
#include "fastface/sampler.hpp"

namespace fastface {

inline constexpr std::size_t kProtocolIdentities = 54;
inline constexpr std::size_t kProtocolStylisticPrompts = 40;
inline constexpr std::size_t kProtocolRealisticPrompts = 80;

struct PromptRecord {
  std::string id;
  Setting setting = Setting::Realistic;
  std::string text;
  std::vector<double> embedding;  // optional; synthetic scorers use it
};

struct DatasetManifest {
  // "full" requires 54 identities, 40 stylistic and 80 realistic prompts.
  bool full_protocol = false;
  std::vector<IdentityRecord> identities;
  std::vector<PromptRecord> prompts;

  std::size_t prompt_count(Setting s) const;
  // Expected number of generations for a setting: identities x prompts.
  std::size_t expected_records(Setting s) const;
};

// Parses and validates a manifest. Embeddings are inline arrays or
// "embedding_file" references to tensor files resolved against `base_dir`.
DatasetManifest parse_manifest(const nlohmann::json& doc, const std::filesystem::path& base_dir);
DatasetManifest load_manifest(const std::filesystem::path& path);

// One evaluated configuration: the records of a full identity x prompt pass.
struct RecordSet {
  std::string model;
  std::string config;
  double lora_scale = 1.0;
  double adapter_scale = 0.8;
  std::vector<EvalRecord> records;
};

RecordSet parse_record_set(const nlohmann::json& doc, const std::string& path);
nlohmann::json to_json(const RecordSet& set);
nlohmann::json to_json(const EvalRecord& r);

// Checks that the set covers every identity x prompt pair of the manifest
// exactly once, per setting.
void validate_record_set(const RecordSet& set, const DatasetManifest& manifest);

// Record sets from every *.json file in `dir`, sorted by file name.
std::vector<RecordSet> load_record_sets(const std::filesystem::path& dir);

// Fixed CSV column order.
inline constexpr const char* kMetricsHeader =
    "model,config,lora_scale,adapter_scale,ID,CLIP,AE,IR,FSC,FFC";
std::string metrics_csv_row(const RecordSet& set, const MetricsRow& row);

// Points labelled by adapter scale, coordinates ID, CLIP, AE (all maximized).
ParetoPoint metrics_point(const std::string& label, const MetricsRow& row);

// One generation handed to a scorer.
struct Generation {
  const IdentityRecord* identity = nullptr;
  const PromptRecord* prompt = nullptr;
  std::span<const double> final_state;
};

class Scorer {
 public:
  virtual ~Scorer() = default;
  virtual EvalRecord score(const Generation& g) const = 0;
};

// Deterministic stand-in for face, CLIP, aesthetic and reward models: fixed
// random projections of the final state compared against identity and prompt
// embeddings.
class SyntheticScorer : public Scorer {
 public:
  SyntheticScorer(std::size_t state_dim, std::size_t embedding_dim, std::uint64_t seed,
                  double face_threshold = 0.1);
  EvalRecord score(const Generation& g) const override;

 private:
  std::size_t state_dim_;
  std::size_t embedding_dim_;
  double face_threshold_;
  Matrix face_proj_, clip_proj_, style_proj_;
};

// Unit-norm random embeddings: `identities` identities and `prompts` prompts,
// all in one setting.
DatasetManifest synthetic_eval_set(std::size_t identities, std::size_t prompts,
                                   std::size_t embedding_dim, Setting setting,
                                   std::uint64_t seed);

// Toy-backend condition derived from an identity or prompt embedding.
Condition condition_from_embedding(ConditionKind kind, std::span<const double> embedding,
                                   const ToyDims& dims, std::uint64_t seed);

}  // namespace fastface
