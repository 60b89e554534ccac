#include "fastface/commands.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <map>
#include <mutex>
#include <thread>

#include <fmt/format.h>

#include "fastface/errors.hpp"
#include "fastface/log.hpp"
#include "fastface/tensor_io.hpp"

namespace fastface {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Writes artifacts under one directory and records their content hashes for
// the run manifest.
class ArtifactWriter {
 public:
  explicit ArtifactWriter(fs::path root) : root_(std::move(root)) {
    std::error_code ec;
    fs::create_directories(root_, ec);
    if (ec) throw IoError("cannot create output directory " + root_.string());
  }

  void write(const std::string& relative, std::string_view bytes) {
    write_file(root_ / relative, bytes);
    files_[relative] = git_blob_hash(bytes);
  }

  void write_json(const std::string& relative, const json& doc) {
    write(relative, doc.dump(2) + "\n");
  }

  void finish(const std::string& command, const json& extra) {
    json files = json::array();
    for (const auto& [path, hash] : files_) files.push_back({{"path", path}, {"sha1", hash}});
    json manifest = extra;
    manifest["command"] = command;
    manifest["files"] = files;
    write_file(root_ / "manifest.json", manifest.dump(2) + "\n");
  }

 private:
  fs::path root_;
  std::map<std::string, std::string> files_;
};

json config_block(const RunConfig& config, std::uint64_t seed) {
  RunConfig resolved = config;
  resolved.seed = seed;
  const json doc = to_json(resolved);
  return {{"seed", seed}, {"config", doc}, {"config_hash", git_blob_hash(doc.dump())}};
}

std::unique_ptr<Denoiser> make_denoiser(const RunConfig& config, const IdentityRecord& identity,
                                        const PromptRecord& prompt) {
  if (config.sampler.backend == Backend::Gaussian) {
    const auto& g = config.gaussian;
    return std::make_unique<GaussianBackend>(
        GaussianTarget{g.prior_mean, g.prior_sigma}, GaussianTarget{g.text_mean, g.text_sigma},
        GaussianTarget{g.id_mean, g.id_sigma},
        NoiseSchedule::linear(config.sampler.train_steps, config.sampler.beta_start,
                              config.sampler.beta_end));
  }
  const ToyDims& dims = config.toy.dims;
  return std::make_unique<ToyDenoiser>(
      config.toy.weight_seed, dims, config.toy.adapter_scale,
      condition_from_embedding(ConditionKind::Text, prompt.embedding, dims, config.eval_set.seed + 1000),
      condition_from_embedding(ConditionKind::Id, identity.embedding, dims, config.eval_set.seed + 2000));
}

std::string stats_csv_header() { return std::string(kMetricsHeader) + "\n"; }

}  // namespace

std::uint64_t generation_seed(const RunConfig& config, std::uint64_t base_seed,
                              std::size_t identity_index, std::size_t prompt_index) {
  return base_seed + identity_index * config.eval_set.prompts + prompt_index;
}

DatasetManifest make_eval_set(const RunConfig& config) {
  const auto& e = config.eval_set;
  return synthetic_eval_set(e.identities, e.prompts, e.embedding_dim, e.setting, e.seed);
}

GenerationResult run_generation(const RunConfig& config, const DatasetManifest& eval_set,
                                std::size_t identity_index, std::size_t prompt_index,
                                std::uint64_t base_seed) {
  const IdentityRecord& identity = eval_set.identities.at(identity_index);
  const PromptRecord& prompt = eval_set.prompts.at(prompt_index);
  const auto denoiser = make_denoiser(config, identity, prompt);
  GenerationResult result;
  result.seed = generation_seed(config, base_seed, identity_index, prompt_index);
  result.trajectory = sample(config.sampler.settings(), config.guidance, config.attention,
                             result.seed, *denoiser);
  const SyntheticScorer scorer(denoiser->state_dim(), config.eval_set.embedding_dim,
                               config.eval_set.seed + 3000);
  result.record = scorer.score({&identity, &prompt, result.trajectory.states.back().x});
  return result;
}

RecordSet evaluate_cell(const RunConfig& config, std::uint64_t base_seed,
                        const std::string& label) {
  const DatasetManifest eval_set = make_eval_set(config);
  RecordSet set;
  set.model = config.eval_set.model;
  set.config = label;
  set.lora_scale = config.eval_set.lora_scale;
  set.adapter_scale = config.toy.adapter_scale;
  for (std::size_t i = 0; i < eval_set.identities.size(); ++i) {
    for (std::size_t j = 0; j < eval_set.prompts.size(); ++j) {
      set.records.push_back(run_generation(config, eval_set, i, j, base_seed).record);
    }
  }
  return set;
}

std::vector<SweepCell> sweep_cells(const RunConfig& base) {
  std::vector<SweepCell> cells;
  const SweepConfig& grid = base.sweep;
  if (!grid.adapter_scale.empty()) {
    for (double lambda : grid.adapter_scale) {
      RunConfig c = base;
      c.toy.adapter_scale = lambda;
      cells.push_back({fmt::format("adapter_scale={}", lambda), std::move(c)});
    }
  } else {
    for (double a : grid.alpha) {
      for (double b : grid.beta) {
        RunConfig c = base;
        const std::size_t n = c.sampler.timesteps.size();
        c.guidance.alpha_schedule.assign(n, 1.0);
        c.guidance.beta_schedule.assign(n, 1.0);
        for (std::size_t i = 1; i + 1 < n; ++i) {
          c.guidance.alpha_schedule[i] = a;
          c.guidance.beta_schedule[i] = b;
        }
        cells.push_back({fmt::format("alpha={};beta={}", a, b), std::move(c)});
      }
    }
  }
  if (cells.empty()) throw ConfigError("$.sweep: grid is empty");
  for (const auto& cell : cells) cell.config.validate();
  return cells;
}

json to_json(const ParetoPoint& p) {
  return {{"config_label", p.config_label},
          {"names", p.names},
          {"coordinates", p.coordinates},
          {"maximize", p.maximize}};
}

ParetoPoint parse_pareto_point(const json& doc, const std::string& path) {
  if (!doc.is_object()) throw ConfigError(path + ": expected an object");
  ParetoPoint p;
  try {
    p.config_label = doc.at("config_label").get<std::string>();
    p.names = doc.at("names").get<std::vector<std::string>>();
    p.coordinates = doc.at("coordinates").get<std::vector<double>>();
    p.maximize = doc.at("maximize").get<std::vector<bool>>();
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    if (it.key() != "config_label" && it.key() != "names" && it.key() != "coordinates" &&
        it.key() != "maximize") {
      throw ConfigError(path + "." + it.key() + ": unknown key");
    }
  }
  if (p.coordinates.size() != p.names.size() || p.maximize.size() != p.names.size()) {
    throw ConfigError(path + ": names, coordinates and maximize must have equal lengths");
  }
  return p;
}

json to_json(const DistributionStats& s) {
  return {{"min", s.min},   {"max", s.max},       {"mean", s.mean},
          {"std", s.std},   {"edges", s.edges},   {"counts", s.counts}};
}

void cmd_simulate(const RunConfig& config, std::uint64_t seed, const fs::path& out) {
  const DatasetManifest eval_set = make_eval_set(config);
  const GenerationResult result = run_generation(config, eval_set, config.eval_set.identity_index,
                                                 config.eval_set.prompt_index, seed);
  const Trajectory& traj = result.trajectory;
  ArtifactWriter writer(out);

  std::vector<std::vector<double>> states;
  for (const auto& s : traj.states) states.push_back(s.x);
  writer.write("trajectory.fftn", encode_tensor(stack_rows(states)));
  std::vector<std::vector<double>> eps;
  for (const auto& e : traj.eps) eps.push_back(e.values);
  writer.write("eps.fftn", encode_tensor(stack_rows(eps)));

  for (std::size_t step = 0; step < traj.traces.size(); ++step) {
    for (std::size_t b = 0; b < traj.traces[step].size(); ++b) {
      const AttentionTrace& tr = traj.traces[step][b];
      const std::string stem = fmt::format("attention/step{}_block{}_{}", step, b,
                                           to_string(tr.before.block_group));
      writer.write(stem + "_pre.fftn", encode_tensor(to_tensor(tr.before.probs)));
      if (tr.transformed) {
        writer.write(stem + "_post.fftn", encode_tensor(to_tensor(tr.after.probs)));
      }
    }
  }
  json timesteps = json::array();
  for (const auto& s : traj.states) timesteps.push_back(s.t);
  writer.write_json("record.json", to_json(result.record));

  json extra = config_block(config, seed);
  extra["generation_seed"] = result.seed;
  extra["timesteps"] = timesteps;
  extra["evaluations_per_step"] = traj.evaluations_per_step;
  writer.finish("simulate", extra);
  log_info(fmt::format("simulate: {} steps written to {}", traj.eps.size(), out.string()));
}

void cmd_sweep(const RunConfig& config, std::uint64_t seed, const fs::path& out,
               std::size_t workers) {
  const std::vector<SweepCell> cells = sweep_cells(config);
  std::vector<RecordSet> results(cells.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  auto work = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      try {
        results[i] = evaluate_cell(cells[i].config, seed, cells[i].label);
      } catch (...) {
        std::lock_guard lock(failure_mu);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const std::size_t n_threads = std::clamp<std::size_t>(workers, 1, cells.size());
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < n_threads; ++t) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);

  ArtifactWriter writer(out);
  std::string csv = stats_csv_header();
  std::vector<ParetoPoint> points;
  for (const RecordSet& set : results) {
    const MetricsRow row = aggregate(set.records);
    csv += metrics_csv_row(set, row) + "\n";
    points.push_back(metrics_point(set.config, row));
    writer.write_json(fmt::format("records/{:03}.json", points.size() - 1), to_json(set));
  }
  writer.write("sweep.csv", csv);
  json front = json::array();
  for (const auto& p : pareto_front(points)) front.push_back(to_json(p));
  writer.write_json("front.json", front);
  json extra = config_block(config, seed);
  extra["cells"] = cells.size();
  writer.finish("sweep", extra);
}

void cmd_analyze_transform(const RunConfig& config, const fs::path& dump, const fs::path& out,
                           std::optional<std::size_t> bins) {
  const Tensor t = read_tensor(dump);
  std::vector<Matrix> maps;
  if (t.dims.size() == 2) {
    maps.push_back(tensor_to_matrix(t));
  } else if (t.dims.size() == 3) {
    const std::size_t stride = static_cast<std::size_t>(t.dims[1]) * t.dims[2];
    for (std::size_t k = 0; k < t.dims[0]; ++k) {
      maps.emplace_back(t.dims[1], t.dims[2],
                        std::vector<double>(t.data.begin() + k * stride,
                                            t.data.begin() + (k + 1) * stride));
    }
  } else {
    throw IoError(dump.string() + ": expected a rank-2 map or a rank-3 stack of maps");
  }
  const std::size_t n_bins = bins.value_or(config.analyze.bins);
  json entries = json::array();
  for (std::size_t k = 0; k < maps.size(); ++k) {
    if (maps[k].data.empty()) throw IoError(dump.string() + ": empty attention map");
    const AttentionMap before{maps[k], config.analyze.group, config.analyze.step_index};
    const AttentionMap after = apply_transform(before, config.attention, config.analyze.step_index);
    entries.push_back({{"index", k},
                       {"before", to_json(distribution_stats(before.probs.data, n_bins))},
                       {"after", to_json(distribution_stats(after.probs.data, n_bins))}});
  }
  ArtifactWriter writer(out);
  writer.write_json("analysis.json", {{"transform", to_json(config.attention)},
                                      {"step_index", config.analyze.step_index},
                                      {"group", to_string(config.analyze.group)},
                                      {"bins", n_bins},
                                      {"maps", entries}});
  json extra = config_block(config, config.seed);
  extra["input"] = dump.filename().string();
  extra["input_sha1"] = git_blob_hash(read_file(dump));
  writer.finish("analyze-transform", extra);
}

void cmd_eval(const fs::path& manifest_path, const fs::path& records_dir, const fs::path& out) {
  const DatasetManifest manifest = load_manifest(manifest_path);
  const std::vector<RecordSet> sets = load_record_sets(records_dir);
  if (sets.empty()) throw ConfigError(records_dir.string() + ": no record files found");
  for (const auto& set : sets) validate_record_set(set, manifest);

  std::string csv = stats_csv_header();
  std::map<std::tuple<std::string, std::string, double>, std::vector<ParetoPoint>> groups;
  for (const auto& set : sets) {
    const MetricsRow row = aggregate(set.records);
    csv += metrics_csv_row(set, row) + "\n";
    groups[{set.model, set.config, set.lora_scale}].push_back(
        metrics_point(fmt::format("adapter_scale={}", set.adapter_scale), row));
  }
  json fronts = json::array();
  for (const auto& [key, points] : groups) {
    json front = json::array();
    for (const auto& p : pareto_front(points)) front.push_back(to_json(p));
    fronts.push_back({{"model", std::get<0>(key)},
                      {"config", std::get<1>(key)},
                      {"lora_scale", std::get<2>(key)},
                      {"front", front}});
  }
  ArtifactWriter writer(out);
  writer.write("metrics.csv", csv);
  writer.write_json("fronts.json", fronts);
  writer.finish("eval", {{"manifest_sha1", git_blob_hash(read_file(manifest_path))},
                         {"record_sets", sets.size()}});
}

void cmd_filter_identities(const fs::path& manifest_path, double threshold, const fs::path& out) {
  const DatasetManifest manifest = load_manifest(manifest_path);
  std::map<std::string, std::vector<IdentityRecord>> groups;
  for (const auto& id : manifest.identities) groups[id.group].push_back(id);
  json result = json::array();
  for (const auto& [name, members] : groups) {
    const FilterResult r = filter_identities(members, threshold);
    json kept = json::array();
    json discarded = json::array();
    for (const auto& m : r.kept) kept.push_back(m.id);
    for (const auto& m : r.discarded) discarded.push_back(m.id);
    result.push_back({{"group", name},
                      {"kept", kept},
                      {"discarded", discarded},
                      {"iterations", r.iterations}});
  }
  ArtifactWriter writer(out);
  writer.write_json("filtered.json", {{"threshold", threshold}, {"groups", result}});
  writer.finish("filter-identities", {{"manifest_sha1", git_blob_hash(read_file(manifest_path))}});
}

void cmd_pareto(const fs::path& points_path, const fs::path& out) {
  json doc;
  try {
    doc = json::parse(read_file(points_path));
  } catch (const json::parse_error& e) {
    throw ConfigError(points_path.string() + ": invalid JSON: " + e.what());
  }
  if (!doc.is_array() || doc.empty()) {
    throw ConfigError(points_path.string() + ": expected a non-empty array of points");
  }
  std::vector<ParetoPoint> points;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    points.push_back(parse_pareto_point(doc[i], "$[" + std::to_string(i) + "]"));
  }
  json front = json::array();
  for (const auto& p : pareto_front(points)) front.push_back(to_json(p));
  ArtifactWriter writer(out);
  writer.write_json("front.json", front);
  writer.finish("pareto", {{"input_sha1", git_blob_hash(read_file(points_path))}});
}

}  // namespace fastface
