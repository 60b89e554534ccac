#include "fastface/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fastface/errors.hpp"
#include "fastface/log.hpp"
#include "fastface/numerics.hpp"

namespace fastface {

std::string_view to_string(Setting s) {
  return s == Setting::Realistic ? "realistic" : "stylistic";
}

Setting setting_from_string(std::string_view name) {
  if (name == "realistic") return Setting::Realistic;
  if (name == "stylistic") return Setting::Stylistic;
  throw ConfigError("unknown setting '" + std::string(name) + "'");
}

double cosine_sim(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ConfigError("cosine_sim: vector sizes differ");
  const double dot = std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
  const double na = std::sqrt(std::inner_product(a.begin(), a.end(), a.begin(), 0.0));
  const double nb = std::sqrt(std::inner_product(b.begin(), b.end(), b.begin(), 0.0));
  if (na == 0.0 || nb == 0.0) throw ConfigError("cosine_sim: zero vector");
  return std::clamp(dot / (na * nb), -1.0, 1.0);
}

FilterIndices filter_by_similarity(const std::vector<std::vector<double>>& sim,
                                   double threshold) {
  const std::size_t n = sim.size();
  for (const auto& row : sim) {
    if (row.size() != n) throw ConfigError("filter_by_similarity: matrix must be square");
  }
  FilterIndices out;
  std::vector<bool> alive(n, true);
  std::size_t remaining = n;
  while (remaining >= 2) {
    std::size_t worst = n;
    double worst_mean = threshold;
    for (std::size_t i = 0; i < n; ++i) {
      if (!alive[i]) continue;
      double total = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        if (j != i && alive[j]) total += sim[i][j];
      }
      const double mean = total / static_cast<double>(remaining - 1);
      if (mean > worst_mean) {
        worst_mean = mean;
        worst = i;
      }
    }
    if (worst == n) break;
    alive[worst] = false;
    --remaining;
    out.discarded.push_back(worst);
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (alive[i]) out.kept.push_back(i);
  }
  return out;
}

FilterResult filter_identities(const std::vector<IdentityRecord>& group, double threshold) {
  FilterResult result;
  if (group.size() < 2) {
    log_warn("filter_identities: group of size " + std::to_string(group.size()) +
             " returned unchanged");
    result.kept = group;
    return result;
  }
  const std::size_t n = group.size();
  std::vector<std::vector<double>> sim(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      sim[i][j] = sim[j][i] = cosine_sim(group[i].embedding, group[j].embedding);
    }
  }
  const FilterIndices idx = filter_by_similarity(sim, threshold);
  for (std::size_t i : idx.kept) result.kept.push_back(group[i]);
  for (std::size_t i : idx.discarded) result.discarded.push_back(group[i]);
  result.iterations = idx.discarded.size();
  return result;
}

MetricsRow aggregate(std::span<const EvalRecord> records, std::optional<Setting> setting) {
  MetricsRow row;
  double id_sum = 0.0, fsc_sum = 0.0;
  std::size_t id_n = 0, fsc_n = 0;
  for (const EvalRecord& r : records) {
    if (setting && r.setting != *setting) continue;
    if (r.id_sim.has_value() != r.face_found) {
      throw ConfigError("eval record " + r.identity_id + "/" + r.prompt_id +
                        ": id_sim must be present exactly when a face was found");
    }
    ++row.count;
    row.clip += r.clip;
    row.ae += r.ae;
    row.ir += r.ir;
    if (!r.face_found) {
      ++row.ffc;
      continue;
    }
    id_sum += *r.id_sim;
    ++id_n;
    if (r.setting == Setting::Stylistic && r.fsc) {
      fsc_sum += *r.fsc;
      ++fsc_n;
    }
  }
  if (row.count == 0) throw ConfigError("aggregate: no records to aggregate");
  const double n = static_cast<double>(row.count);
  row.clip /= n;
  row.ae /= n;
  row.ir /= n;
  if (id_n > 0) row.id = id_sum / static_cast<double>(id_n);
  if (fsc_n > 0) row.fsc = fsc_sum / static_cast<double>(fsc_n);
  return row;
}

bool dominates(const ParetoPoint& q, const ParetoPoint& p) {
  bool strict = false;
  for (std::size_t k = 0; k < p.coordinates.size(); ++k) {
    const double better = p.maximize[k] ? q.coordinates[k] - p.coordinates[k]
                                        : p.coordinates[k] - q.coordinates[k];
    if (better < 0.0) return false;
    if (better > 0.0) strict = true;
  }
  return strict;
}

std::vector<ParetoPoint> pareto_front(const std::vector<ParetoPoint>& points) {
  for (const ParetoPoint& p : points) {
    if (p.names != points.front().names || p.maximize != points.front().maximize ||
        p.coordinates.size() != p.names.size()) {
      throw ConfigError("pareto_front: point '" + p.config_label +
                        "' has an inconsistent coordinate set");
    }
    require_finite(p.coordinates, "pareto point coordinates");
  }
  std::vector<ParetoPoint> front;
  for (const ParetoPoint& p : points) {
    const bool dominated = std::any_of(points.begin(), points.end(),
                                       [&](const ParetoPoint& q) { return dominates(q, p); });
    if (!dominated) front.push_back(p);
  }
  return front;
}

DistributionStats distribution_stats(std::span<const double> values, std::size_t bins) {
  if (values.empty()) throw ConfigError("distribution_stats: empty input");
  if (bins == 0) throw ConfigError("distribution_stats: bins must be >= 1");
  DistributionStats out;
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  out.min = *lo;
  out.max = *hi;
  const MapStats m = mean_std(values);
  out.mean = m.mean;
  out.std = m.std;
  out.counts.assign(bins, 0);
  const double width = (out.max - out.min) / static_cast<double>(bins);
  for (std::size_t b = 0; b <= bins; ++b) out.edges.push_back(out.min + width * static_cast<double>(b));
  out.edges.back() = out.max;
  for (double v : values) {
    std::size_t b = 0;
    if (width > 0.0) {
      b = static_cast<std::size_t>((v - out.min) / width);
      b = std::min(b, bins - 1);
    }
    ++out.counts[b];
  }
  return out;
}

}  // namespace fastface
