#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace fastface {

struct IdentityRecord {
  std::string id;
  std::string group;  // "<gender>/<age band>"
  std::vector<double> embedding;
};

enum class Setting { Realistic, Stylistic };

std::string_view to_string(Setting s);
Setting setting_from_string(std::string_view name);

struct EvalRecord {
  std::string identity_id;
  std::string prompt_id;
  Setting setting = Setting::Realistic;
  std::optional<double> id_sim;  // absent iff no face was found
  double clip = 0.0;
  double ae = 0.0;
  double ir = 0.0;
  std::optional<double> fsc;
  bool face_found = true;
};

struct ParetoPoint {
  std::string config_label;
  std::vector<std::string> names;
  std::vector<double> coordinates;
  std::vector<bool> maximize;
};

double cosine_sim(std::span<const double> a, std::span<const double> b);

struct FilterResult {
  std::vector<IdentityRecord> kept;
  std::vector<IdentityRecord> discarded;
  std::size_t iterations = 0;
};

// Indices into a symmetric similarity matrix, in removal order for `discarded`.
struct FilterIndices {
  std::vector<std::size_t> kept;
  std::vector<std::size_t> discarded;
};

// Repeatedly drops the member whose mean similarity to the remaining members
// is largest, while that mean exceeds `threshold`. Ties go to the lower index.
FilterIndices filter_by_similarity(const std::vector<std::vector<double>>& sim,
                                   double threshold = 0.3);

// Repeatedly drops the member whose mean similarity to the remaining members
// is largest, while that mean exceeds `threshold`.
FilterResult filter_identities(const std::vector<IdentityRecord>& group,
                               double threshold = 0.3);

struct MetricsRow {
  std::optional<double> id;  // absent when no record found a face
  double clip = 0.0;
  double ae = 0.0;
  double ir = 0.0;
  std::optional<double> fsc;
  std::size_t ffc = 0;
  std::size_t count = 0;
};

MetricsRow aggregate(std::span<const EvalRecord> records,
                     std::optional<Setting> setting = std::nullopt);

// q dominates p iff q is at least as good everywhere and strictly better somewhere.
bool dominates(const ParetoPoint& q, const ParetoPoint& p);

// Non-dominated subset, input order preserved.
std::vector<ParetoPoint> pareto_front(const std::vector<ParetoPoint>& points);

struct DistributionStats {
  double min = 0.0;
  double max = 0.0;
  double mean = 0.0;
  double std = 0.0;
  std::vector<double> edges;          // bins + 1 entries
  std::vector<std::size_t> counts;    // bins entries
};

// Equal-width histogram over [min, max]; the max lands in the last bin.
DistributionStats distribution_stats(std::span<const double> values, std::size_t bins);

}  // namespace fastface
