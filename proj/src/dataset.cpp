#include "fastface/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include <fmt/format.h>

#include "fastface/errors.hpp"
#include "fastface/tensor_io.hpp"

namespace fastface {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw ConfigError(path + ": " + what);
}

const json& member(const json& obj, const char* key, const std::string& path) {
  auto it = obj.find(key);
  if (it == obj.end()) fail(path + "." + key, "missing");
  return *it;
}

std::string string_member(const json& obj, const char* key, const std::string& path) {
  const json& v = member(obj, key, path);
  if (!v.is_string()) fail(path + "." + key, "expected a string");
  return v.get<std::string>();
}

std::vector<double> number_array(const json& v, const std::string& path) {
  if (!v.is_array()) fail(path, "expected an array of numbers");
  std::vector<double> out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!v[i].is_number()) fail(path + "[" + std::to_string(i) + "]", "expected a number");
    out.push_back(v[i].get<double>());
  }
  return out;
}

void check_keys(const json& obj, std::initializer_list<const char*> allowed,
                const std::string& path) {
  if (!obj.is_object()) fail(path, "expected an object");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (std::none_of(allowed.begin(), allowed.end(),
                     [&](const char* k) { return it.key() == k; })) {
      fail(path + "." + it.key(), "unknown key");
    }
  }
}

double l2_norm(std::span<const double> v) {
  return std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
}

std::vector<double> unit_gaussian(std::mt19937_64& rng, std::size_t dim) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> v(dim);
  for (double& x : v) x = normal(rng);
  const double n = l2_norm(v);
  for (double& x : v) x /= n;
  return v;
}

Matrix random_projection(std::mt19937_64& rng, std::size_t rows, std::size_t cols) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix m(rows, cols);
  for (double& v : m.data) v = normal(rng);
  return m;
}

std::vector<double> project(const Matrix& m, std::span<const double> x) {
  std::vector<double> out(m.rows, 0.0);
  for (std::size_t r = 0; r < m.rows; ++r) {
    for (std::size_t c = 0; c < m.cols; ++c) out[r] += m(r, c) * x[c];
  }
  return out;
}

double safe_cosine(std::span<const double> a, std::span<const double> b) {
  if (l2_norm(a) == 0.0 || l2_norm(b) == 0.0) return 0.0;
  return cosine_sim(a, b);
}

std::string format_double(double v) { return fmt::format("{:.10g}", v); }

}  // namespace

std::size_t DatasetManifest::prompt_count(Setting s) const {
  return static_cast<std::size_t>(std::count_if(
      prompts.begin(), prompts.end(), [&](const PromptRecord& p) { return p.setting == s; }));
}

std::size_t DatasetManifest::expected_records(Setting s) const {
  return identities.size() * prompt_count(s);
}

DatasetManifest parse_manifest(const json& doc, const std::filesystem::path& base_dir) {
  check_keys(doc, {"protocol", "identities", "prompts"}, "$");
  DatasetManifest m;
  if (auto it = doc.find("protocol"); it != doc.end()) {
    if (*it == "full") {
      m.full_protocol = true;
    } else if (*it != "custom") {
      fail("$.protocol", "expected \"full\" or \"custom\"");
    }
  }
  const json& ids = member(doc, "identities", "$");
  if (!ids.is_array()) fail("$.identities", "expected an array");
  std::set<std::string> seen;
  std::size_t dim = 0;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const std::string path = "$.identities[" + std::to_string(i) + "]";
    check_keys(ids[i], {"id", "group", "embedding", "embedding_file"}, path);
    IdentityRecord rec;
    rec.id = string_member(ids[i], "id", path);
    if (!seen.insert(rec.id).second) fail(path + ".id", "duplicate identity id '" + rec.id + "'");
    const json& group = member(ids[i], "group", path);
    if (group.is_string()) {
      rec.group = group.get<std::string>();
    } else {
      check_keys(group, {"gender", "age"}, path + ".group");
      rec.group = string_member(group, "gender", path + ".group") + "/" +
                  string_member(group, "age", path + ".group");
    }
    if (auto e = ids[i].find("embedding"); e != ids[i].end()) {
      rec.embedding = number_array(*e, path + ".embedding");
    } else if (auto file = ids[i].find("embedding_file"); file != ids[i].end()) {
      if (!file->is_string()) fail(path + ".embedding_file", "expected a path string");
      const Tensor t = read_tensor(base_dir / file->get<std::string>());
      rec.embedding.assign(t.data.begin(), t.data.end());
    } else {
      fail(path, "needs \"embedding\" or \"embedding_file\"");
    }
    if (rec.embedding.empty()) fail(path + ".embedding", "must not be empty");
    if (dim == 0) dim = rec.embedding.size();
    if (rec.embedding.size() != dim) fail(path + ".embedding", "dimension differs from identity 0");
    // float32 files carry ~1e-7 relative error per entry
    if (std::abs(l2_norm(rec.embedding) - 1.0) > 1e-5) fail(path + ".embedding", "must have unit L2 norm");
    m.identities.push_back(std::move(rec));
  }

  const json& prompts = member(doc, "prompts", "$");
  if (!prompts.is_array()) fail("$.prompts", "expected an array");
  seen.clear();
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    const std::string path = "$.prompts[" + std::to_string(i) + "]";
    check_keys(prompts[i], {"id", "setting", "text", "embedding"}, path);
    PromptRecord p;
    p.id = string_member(prompts[i], "id", path);
    if (!seen.insert(p.id).second) fail(path + ".id", "duplicate prompt id '" + p.id + "'");
    try {
      p.setting = setting_from_string(string_member(prompts[i], "setting", path));
    } catch (const ConfigError& e) {
      fail(path + ".setting", e.what());
    }
    if (prompts[i].contains("text")) p.text = string_member(prompts[i], "text", path);
    if (auto e = prompts[i].find("embedding"); e != prompts[i].end()) {
      p.embedding = number_array(*e, path + ".embedding");
    }
    m.prompts.push_back(std::move(p));
  }

  if (m.full_protocol) {
    const std::size_t stylistic = m.prompt_count(Setting::Stylistic);
    const std::size_t realistic = m.prompt_count(Setting::Realistic);
    if (m.identities.size() != kProtocolIdentities ||
        stylistic != kProtocolStylisticPrompts || realistic != kProtocolRealisticPrompts) {
      fail("$", fmt::format("full protocol expects {} identities, {} stylistic and {} realistic "
                            "prompts ({}x{}={} and {}x{}={} generations); found {}, {}, {}",
                            kProtocolIdentities, kProtocolStylisticPrompts,
                            kProtocolRealisticPrompts, kProtocolIdentities,
                            kProtocolStylisticPrompts,
                            kProtocolIdentities * kProtocolStylisticPrompts,
                            kProtocolIdentities, kProtocolRealisticPrompts,
                            kProtocolIdentities * kProtocolRealisticPrompts,
                            m.identities.size(), stylistic, realistic));
    }
  }
  return m;
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  json doc;
  try {
    doc = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": invalid JSON: " + e.what());
  }
  try {
    return parse_manifest(doc, path.parent_path());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

json to_json(const EvalRecord& r) {
  json j = {{"identity_id", r.identity_id},
            {"prompt_id", r.prompt_id},
            {"setting", to_string(r.setting)},
            {"id_sim", nullptr},
            {"clip", r.clip},
            {"ae", r.ae},
            {"ir", r.ir},
            {"fsc", nullptr},
            {"face_found", r.face_found}};
  if (r.id_sim) j["id_sim"] = *r.id_sim;
  if (r.fsc) j["fsc"] = *r.fsc;
  return j;
}

json to_json(const RecordSet& set) {
  json records = json::array();
  for (const auto& r : set.records) records.push_back(to_json(r));
  return {{"model", set.model},
          {"config", set.config},
          {"lora_scale", set.lora_scale},
          {"adapter_scale", set.adapter_scale},
          {"records", records}};
}

RecordSet parse_record_set(const json& doc, const std::string& path) {
  check_keys(doc, {"model", "config", "lora_scale", "adapter_scale", "records"}, path);
  RecordSet set;
  set.model = string_member(doc, "model", path);
  set.config = string_member(doc, "config", path);
  auto number = [&](const char* key) {
    const json& v = member(doc, key, path);
    if (!v.is_number()) fail(path + "." + key, "expected a number");
    return v.get<double>();
  };
  set.lora_scale = number("lora_scale");
  set.adapter_scale = number("adapter_scale");
  const json& records = member(doc, "records", path);
  if (!records.is_array()) fail(path + ".records", "expected an array");
  for (std::size_t i = 0; i < records.size(); ++i) {
    const std::string rp = path + ".records[" + std::to_string(i) + "]";
    const json& r = records[i];
    check_keys(r, {"identity_id", "prompt_id", "setting", "id_sim", "clip", "ae", "ir", "fsc",
                   "face_found"},
               rp);
    EvalRecord rec;
    rec.identity_id = string_member(r, "identity_id", rp);
    rec.prompt_id = string_member(r, "prompt_id", rp);
    try {
      rec.setting = setting_from_string(string_member(r, "setting", rp));
    } catch (const ConfigError& e) {
      fail(rp + ".setting", e.what());
    }
    auto num = [&](const char* key) {
      const json& v = member(r, key, rp);
      if (!v.is_number()) fail(rp + "." + key, "expected a number");
      return v.get<double>();
    };
    auto opt = [&](const char* key) -> std::optional<double> {
      auto it = r.find(key);
      if (it == r.end() || it->is_null()) return std::nullopt;
      if (!it->is_number()) fail(rp + "." + key, "expected a number or null");
      return it->get<double>();
    };
    rec.clip = num("clip");
    rec.ae = num("ae");
    rec.ir = num("ir");
    rec.id_sim = opt("id_sim");
    rec.fsc = opt("fsc");
    const json& found = member(r, "face_found", rp);
    if (!found.is_boolean()) fail(rp + ".face_found", "expected true or false");
    rec.face_found = found.get<bool>();
    if (rec.id_sim.has_value() != rec.face_found) {
      fail(rp, "id_sim must be present exactly when face_found is true");
    }
    set.records.push_back(std::move(rec));
  }
  return set;
}

void validate_record_set(const RecordSet& set, const DatasetManifest& manifest) {
  std::set<std::string> ids;
  for (const auto& i : manifest.identities) ids.insert(i.id);
  std::map<std::string, Setting> prompts;
  for (const auto& p : manifest.prompts) prompts.emplace(p.id, p.setting);

  std::set<std::pair<std::string, std::string>> pairs;
  std::map<Setting, std::size_t> counts;
  for (const EvalRecord& r : set.records) {
    if (!ids.contains(r.identity_id)) {
      throw ConfigError("record set '" + set.config + "': unknown identity '" + r.identity_id + "'");
    }
    auto p = prompts.find(r.prompt_id);
    if (p == prompts.end()) {
      throw ConfigError("record set '" + set.config + "': unknown prompt '" + r.prompt_id + "'");
    }
    if (p->second != r.setting) {
      throw ConfigError("record set '" + set.config + "': prompt '" + r.prompt_id +
                        "' belongs to the " + std::string(to_string(p->second)) + " setting");
    }
    if (!pairs.emplace(r.identity_id, r.prompt_id).second) {
      throw ConfigError("record set '" + set.config + "': duplicate record for " +
                        r.identity_id + "/" + r.prompt_id);
    }
    ++counts[r.setting];
  }
  for (Setting s : {Setting::Stylistic, Setting::Realistic}) {
    const std::size_t expected = manifest.expected_records(s);
    if (counts[s] != expected) {
      throw ConfigError(fmt::format(
          "record set '{}': {} records for the {} setting, expected {} identities x {} "
          "prompts = {} (full protocol: {}x{}={} stylistic, {}x{}={} realistic)",
          set.config, counts[s], to_string(s), manifest.identities.size(),
          manifest.prompt_count(s), expected, kProtocolIdentities, kProtocolStylisticPrompts,
          kProtocolIdentities * kProtocolStylisticPrompts, kProtocolIdentities,
          kProtocolRealisticPrompts, kProtocolIdentities * kProtocolRealisticPrompts));
    }
  }
}

std::vector<RecordSet> load_record_sets(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json") {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  std::vector<RecordSet> sets;
  for (const auto& f : files) {
    json doc;
    try {
      doc = json::parse(read_file(f));
    } catch (const json::parse_error& e) {
      throw ConfigError(f.string() + ": invalid JSON: " + e.what());
    }
    sets.push_back(parse_record_set(doc, f.string() + ": $"));
  }
  return sets;
}

std::string metrics_csv_row(const RecordSet& set, const MetricsRow& row) {
  auto opt = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string(); };
  return fmt::format("{},{},{},{},{},{},{},{},{},{}", set.model, set.config,
                     format_double(set.lora_scale), format_double(set.adapter_scale),
                     opt(row.id), format_double(row.clip), format_double(row.ae),
                     format_double(row.ir), opt(row.fsc), row.ffc);
}

ParetoPoint metrics_point(const std::string& label, const MetricsRow& row) {
  return {label, {"ID", "CLIP", "AE"}, {row.id.value_or(-1.0), row.clip, row.ae},
          {true, true, true}};
}

SyntheticScorer::SyntheticScorer(std::size_t state_dim, std::size_t embedding_dim,
                                 std::uint64_t seed, double face_threshold)
    : state_dim_(state_dim), embedding_dim_(embedding_dim), face_threshold_(face_threshold) {
  std::mt19937_64 rng(seed);
  face_proj_ = random_projection(rng, embedding_dim, state_dim);
  clip_proj_ = random_projection(rng, embedding_dim, state_dim);
  style_proj_ = random_projection(rng, embedding_dim, std::max<std::size_t>(1, state_dim / 4));
}

EvalRecord SyntheticScorer::score(const Generation& g) const {
  if (g.final_state.size() != state_dim_) throw ConfigError("scorer: state dimension mismatch");
  if (g.identity->embedding.size() != embedding_dim_ ||
      g.prompt->embedding.size() != embedding_dim_) {
    throw ConfigError("scorer: embedding dimension mismatch");
  }
  const auto face_region = g.final_state.subspan(0, std::max<std::size_t>(1, state_dim_ / 4));
  double face_energy = 0.0;
  for (double v : face_region) face_energy += v * v;
  face_energy = std::sqrt(face_energy / static_cast<double>(face_region.size()));

  EvalRecord r;
  r.identity_id = g.identity->id;
  r.prompt_id = g.prompt->id;
  r.setting = g.prompt->setting;
  r.face_found = face_energy > face_threshold_;
  if (r.face_found) r.id_sim = safe_cosine(project(face_proj_, g.final_state), g.identity->embedding);
  r.clip = safe_cosine(project(clip_proj_, g.final_state), g.prompt->embedding);
  const MapStats stats = mean_std(g.final_state);
  r.ae = 5.0 + 1.0 / (1.0 + std::abs(stats.std - 1.0));
  r.ir = std::tanh(stats.mean);
  if (r.face_found && r.setting == Setting::Stylistic) {
    r.fsc = safe_cosine(project(style_proj_, face_region), g.prompt->embedding);
  }
  return r;
}

DatasetManifest synthetic_eval_set(std::size_t identities, std::size_t prompts,
                                   std::size_t embedding_dim, Setting setting,
                                   std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  DatasetManifest m;
  for (std::size_t i = 0; i < identities; ++i) {
    m.identities.push_back({fmt::format("id{:02}", i), "synthetic/any",
                            unit_gaussian(rng, embedding_dim)});
  }
  for (std::size_t j = 0; j < prompts; ++j) {
    m.prompts.push_back({fmt::format("p{:02}", j), setting, fmt::format("synthetic prompt {}", j),
                         unit_gaussian(rng, embedding_dim)});
  }
  return m;
}

Condition condition_from_embedding(ConditionKind kind, std::span<const double> embedding,
                                   const ToyDims& dims, std::uint64_t seed) {
  Condition c;
  c.kind = kind;
  if (kind == ConditionKind::Null) return c;
  const std::size_t tokens = kind == ConditionKind::Text ? dims.text_tokens : dims.id_tokens;
  std::mt19937_64 rng(seed);
  const Matrix proj = random_projection(rng, tokens * dims.context_dim, embedding.size());
  c.embedding = project(proj, embedding);
  return c;
}

}  // namespace fastface
