#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "fastface/dataset.hpp"

namespace fixture {

inline std::vector<double> unit_vec(std::mt19937_64& rng, std::size_t dim) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> v(dim);
  double norm = 0;
  for (auto& x : v) x = n(rng), norm += x * x;
  for (auto& x : v) x /= std::sqrt(norm);
  return v;
}

// Manifest document with `identities` people and the given prompt counts.
inline nlohmann::json manifest_json(std::size_t identities, std::size_t stylistic,
                                    std::size_t realistic, bool full, std::uint64_t seed = 5,
                                    std::size_t dim = 8) {
  std::mt19937_64 rng(seed);
  nlohmann::json ids = nlohmann::json::array();
  for (std::size_t i = 0; i < identities; ++i) {
    ids.push_back({{"id", fmt::format("person{:03}", i)},
                   {"group", {{"gender", i % 2 ? "f" : "m"}, {"age", i % 3 ? "young" : "old"}}},
                   {"embedding", unit_vec(rng, dim)}});
  }
  nlohmann::json prompts = nlohmann::json::array();
  for (std::size_t i = 0; i < stylistic; ++i)
    prompts.push_back({{"id", fmt::format("s{:03}", i)}, {"setting", "stylistic"}, {"text", "a painting"}});
  for (std::size_t i = 0; i < realistic; ++i)
    prompts.push_back({{"id", fmt::format("r{:03}", i)}, {"setting", "realistic"}, {"text", "a photo"}});
  nlohmann::json doc = {{"identities", ids}, {"prompts", prompts}};
  if (full) doc["protocol"] = "full";
  return doc;
}

// One complete record set for a manifest with deterministic pseudo-metrics.
inline fastface::RecordSet complete_records(const fastface::DatasetManifest& m, std::string config,
                                            double adapter_scale, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  fastface::RecordSet set{"toy", std::move(config), 1.0, adapter_scale, {}};
  for (const auto& id : m.identities) {
    for (const auto& p : m.prompts) {
      fastface::EvalRecord r;
      r.identity_id = id.id;
      r.prompt_id = p.id;
      r.setting = p.setting;
      r.face_found = u(rng) > 0.1;
      if (r.face_found) r.id_sim = u(rng);
      r.clip = u(rng);
      r.ae = 5 + u(rng);
      r.ir = u(rng) - 0.5;
      if (r.face_found && p.setting == fastface::Setting::Stylistic) r.fsc = u(rng);
      set.records.push_back(r);
    }
  }
  return set;
}

}  // namespace fixture
