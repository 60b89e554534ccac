#include "fastface/config.hpp"

#include <set>
#include <string>

#include "fastface/errors.hpp"
#include "fastface/tensor_io.hpp"

namespace fastface {
namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw ConfigError(path + ": " + what);
}

// Reads members of one JSON object, remembering which keys were consumed so
// that leftovers can be reported as unknown.
class Fields {
 public:
  Fields(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) fail(path_, "expected an object");
  }

  std::string path(const std::string& key) const { return path_ + "." + key; }

  const json* find(const std::string& key) {
    seen_.insert(key);
    auto it = obj_.find(key);
    return it == obj_.end() ? nullptr : &*it;
  }

  void number(const std::string& key, double& out) {
    if (const json* v = find(key)) {
      if (!v->is_number()) fail(path(key), "expected a number");
      out = v->get<double>();
    }
  }

  template <typename Int>
  void integer(const std::string& key, Int& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_integer()) fail(path(key), "expected an integer");
      if constexpr (std::is_unsigned_v<Int>) {
        if (v->is_number_unsigned() || v->get<std::int64_t>() >= 0) {
          out = v->get<Int>();
          return;
        }
        fail(path(key), "expected a non-negative integer");
      } else {
        out = v->get<Int>();
      }
    }
  }

  void boolean(const std::string& key, bool& out) {
    if (const json* v = find(key)) {
      if (!v->is_boolean()) fail(path(key), "expected true or false");
      out = v->get<bool>();
    }
  }

  void string(const std::string& key, std::string& out) {
    if (const json* v = find(key)) {
      if (!v->is_string()) fail(path(key), "expected a string");
      out = v->get<std::string>();
    }
  }

  template <typename T>
  void array(const std::string& key, std::vector<T>& out) {
    if (const json* v = find(key)) {
      if (!v->is_array()) fail(path(key), "expected an array");
      std::vector<T> values;
      for (std::size_t i = 0; i < v->size(); ++i) {
        const json& e = (*v)[i];
        const std::string where = path(key) + "[" + std::to_string(i) + "]";
        if constexpr (std::is_integral_v<T>) {
          if (!e.is_number_integer()) fail(where, "expected an integer");
        } else {
          if (!e.is_number()) fail(where, "expected a number");
        }
        values.push_back(e.get<T>());
      }
      out = std::move(values);
    }
  }

  // Calls parse(json, path) when the key is present.
  template <typename F>
  void object(const std::string& key, F&& parse) {
    if (const json* v = find(key)) parse(*v, path(key));
  }

  void finish() const {
    for (auto it = obj_.begin(); it != obj_.end(); ++it) {
      if (!seen_.contains(it.key())) fail(path(it.key()), "unknown key");
    }
  }

 private:
  const json& obj_;
  std::string path_;
  std::set<std::string> seen_;
};

template <typename F>
auto rethrow_at(const std::string& path, F&& f) {
  try {
    return f();
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    if (msg.rfind("$", 0) == 0) throw;
    fail(path, msg);
  }
}

SamplerConfig parse_sampler(const json& doc, const std::string& path) {
  SamplerConfig c;
  Fields f(doc, path);
  std::string backend = c.backend == Backend::Toy ? "toy" : "gaussian";
  f.string("backend", backend);
  if (backend == "toy") {
    c.backend = Backend::Toy;
  } else if (backend == "gaussian") {
    c.backend = Backend::Gaussian;
  } else {
    fail(f.path("backend"), "expected \"toy\" or \"gaussian\"");
  }
  f.array("timesteps", c.timesteps);
  f.integer("train_steps", c.train_steps);
  f.number("beta_start", c.beta_start);
  f.number("beta_end", c.beta_end);
  f.finish();
  return c;
}

ToyConfig parse_toy(const json& doc, const std::string& path) {
  ToyConfig c;
  Fields f(doc, path);
  f.integer("weight_seed", c.weight_seed);
  f.number("adapter_scale", c.adapter_scale);
  f.integer("positions", c.dims.positions);
  f.integer("channels", c.dims.channels);
  f.integer("model_dim", c.dims.model_dim);
  f.integer("head_dim", c.dims.head_dim);
  f.integer("context_dim", c.dims.context_dim);
  f.integer("text_tokens", c.dims.text_tokens);
  f.integer("id_tokens", c.dims.id_tokens);
  f.integer("blocks", c.dims.blocks);
  f.finish();
  rethrow_at(path, [&] { c.dims.validate(); });
  return c;
}

GaussianConfig parse_gaussian(const json& doc, const std::string& path) {
  GaussianConfig c;
  Fields f(doc, path);
  f.array("prior_mean", c.prior_mean);
  f.array("text_mean", c.text_mean);
  f.array("id_mean", c.id_mean);
  f.number("prior_sigma", c.prior_sigma);
  f.number("text_sigma", c.text_sigma);
  f.number("id_sigma", c.id_sigma);
  f.finish();
  return c;
}

EvalSetConfig parse_eval_set(const json& doc, const std::string& path) {
  EvalSetConfig c;
  Fields f(doc, path);
  f.integer("identities", c.identities);
  f.integer("prompts", c.prompts);
  f.integer("embedding_dim", c.embedding_dim);
  std::string setting(to_string(c.setting));
  f.string("setting", setting);
  c.setting = rethrow_at(f.path("setting"), [&] { return setting_from_string(setting); });
  f.integer("seed", c.seed);
  f.integer("identity_index", c.identity_index);
  f.integer("prompt_index", c.prompt_index);
  f.string("model", c.model);
  f.number("lora_scale", c.lora_scale);
  f.finish();
  return c;
}

SweepConfig parse_sweep(const json& doc, const std::string& path) {
  SweepConfig c;
  Fields f(doc, path);
  f.array("alpha", c.alpha);
  f.array("beta", c.beta);
  f.array("adapter_scale", c.adapter_scale);
  f.finish();
  return c;
}

AnalyzeConfig parse_analyze(const json& doc, const std::string& path) {
  AnalyzeConfig c;
  Fields f(doc, path);
  f.integer("step_index", c.step_index);
  std::string group(to_string(c.group));
  f.string("group", group);
  c.group = rethrow_at(f.path("group"), [&] { return block_group_from_string(group); });
  f.integer("bins", c.bins);
  f.finish();
  return c;
}

}  // namespace

SamplerSettings SamplerConfig::settings() const {
  return {timesteps, NoiseSchedule::linear(train_steps, beta_start, beta_end)};
}

GuidanceConfig RunConfig::default_guidance() {
  GuidanceConfig g;
  g.variant = GuidanceVariant::DCG2;
  g.alpha_schedule = {1.0, 1.5, 1.5, 1.0};
  g.beta_schedule = {1.0, 3.0, 3.0, 1.0};
  g.phi = 0.75;
  g.rescale_enabled = true;
  return g;
}

GuidanceConfig parse_guidance(const json& doc, const std::string& path) {
  GuidanceConfig g = RunConfig::default_guidance();
  Fields f(doc, path);
  std::string variant(to_string(g.variant));
  f.string("variant", variant);
  g.variant = rethrow_at(f.path("variant"), [&] { return guidance_variant_from_string(variant); });
  f.array("alpha", g.alpha_schedule);
  f.array("beta", g.beta_schedule);
  f.number("w", g.w);
  f.number("phi", g.phi);
  f.boolean("rescale", g.rescale_enabled);
  f.finish();
  if (!(g.phi >= 0.0 && g.phi <= 1.0)) fail(f.path("phi"), "must lie in [0, 1]");
  return g;
}

AMConfig parse_attention(const json& doc, const std::string& path) {
  Fields f(doc, path);
  std::string kind = "none";
  f.string("kind", kind);
  const TransformKind k =
      rethrow_at(f.path("kind"), [&] { return transform_kind_from_string(kind); });
  AMConfig c;
  if (k == TransformKind::ScalePower) c = AMConfig::scale_power_preset();
  if (k == TransformKind::ScheduledSoftmask) c = AMConfig::scheduled_softmask_preset();
  f.number("s_down", c.s_down);
  f.number("s_mid", c.s_mid);
  f.number("s_up", c.s_up);
  f.number("p_power", c.p_power);
  f.number("quantile_p", c.quantile_p);
  f.number("d_first", c.d_first);
  f.number("d_rest", c.d_rest);
  f.number("s_first", c.s_first);
  f.number("blend_w", c.blend_w);
  f.number("softmask_sign", c.softmask_sign);
  if (const json* groups = f.find("target_groups")) {
    if (!groups->is_array()) fail(f.path("target_groups"), "expected an array");
    c.target_groups.clear();
    for (std::size_t i = 0; i < groups->size(); ++i) {
      const std::string where = f.path("target_groups") + "[" + std::to_string(i) + "]";
      if (!(*groups)[i].is_string()) fail(where, "expected a string");
      c.target_groups.insert(
          rethrow_at(where, [&] { return block_group_from_string((*groups)[i].get<std::string>()); }));
    }
  }
  f.boolean("invert_first_token", c.invert_first_token);
  f.boolean("adain_output", c.adain_output);
  f.finish();
  rethrow_at(path, [&] { c.validate(); });
  return c;
}

void RunConfig::validate() const {
  rethrow_at("$.sampler", [&] { sampler.settings(); });
  rethrow_at("$.guidance", [&] { guidance.validate(sampler.timesteps.size()); });
  rethrow_at("$.attention", [&] { attention.validate(); });
  if (eval_set.identities == 0 || eval_set.prompts == 0 || eval_set.embedding_dim == 0) {
    fail("$.eval_set", "identities, prompts and embedding_dim must be positive");
  }
  if (eval_set.identity_index >= eval_set.identities ||
      eval_set.prompt_index >= eval_set.prompts) {
    fail("$.eval_set", "identity_index/prompt_index out of range");
  }
  if (sampler.backend == Backend::Gaussian) {
    const auto n = gaussian.prior_mean.size();
    if (n == 0 || gaussian.text_mean.size() != n || gaussian.id_mean.size() != n) {
      fail("$.gaussian", "prior_mean, text_mean and id_mean must share a positive length");
    }
  }
  if (!sweep.adapter_scale.empty() && (!sweep.alpha.empty() || !sweep.beta.empty())) {
    fail("$.sweep", "use either alpha/beta or adapter_scale, not both");
  }
  if (sweep.alpha.empty() != sweep.beta.empty()) {
    fail("$.sweep", "alpha and beta grids must both be given");
  }
  if (analyze.bins == 0) fail("$.analyze.bins", "must be >= 1");
}

RunConfig parse_run_config(const json& doc) {
  RunConfig c;
  Fields f(doc, "$");
  f.integer("seed", c.seed);
  f.object("sampler", [&](const json& j, const std::string& p) { c.sampler = parse_sampler(j, p); });
  f.object("guidance", [&](const json& j, const std::string& p) { c.guidance = parse_guidance(j, p); });
  f.object("attention", [&](const json& j, const std::string& p) { c.attention = parse_attention(j, p); });
  f.object("toy", [&](const json& j, const std::string& p) { c.toy = parse_toy(j, p); });
  f.object("gaussian", [&](const json& j, const std::string& p) { c.gaussian = parse_gaussian(j, p); });
  f.object("eval_set", [&](const json& j, const std::string& p) { c.eval_set = parse_eval_set(j, p); });
  f.object("sweep", [&](const json& j, const std::string& p) { c.sweep = parse_sweep(j, p); });
  f.object("analyze", [&](const json& j, const std::string& p) { c.analyze = parse_analyze(j, p); });
  f.finish();
  c.validate();
  return c;
}

RunConfig load_run_config(const std::string& path) {
  json doc;
  try {
    doc = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": invalid JSON: " + e.what());
  }
  try {
    return parse_run_config(doc);
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

json to_json(const GuidanceConfig& g) {
  return {{"variant", to_string(g.variant)},
          {"alpha", g.alpha_schedule},
          {"beta", g.beta_schedule},
          {"w", g.w},
          {"phi", g.phi},
          {"rescale", g.rescale_enabled}};
}

json to_json(const AMConfig& c) {
  json groups = json::array();
  for (auto g : c.target_groups) groups.push_back(to_string(g));
  return {{"kind", to_string(c.kind)},     {"s_down", c.s_down},
          {"s_mid", c.s_mid},              {"s_up", c.s_up},
          {"p_power", c.p_power},          {"quantile_p", c.quantile_p},
          {"d_first", c.d_first},          {"d_rest", c.d_rest},
          {"s_first", c.s_first},          {"blend_w", c.blend_w},
          {"softmask_sign", c.softmask_sign}, {"target_groups", groups},
          {"invert_first_token", c.invert_first_token},
          {"adain_output", c.adain_output}};
}

json to_json(const RunConfig& c) {
  const auto& d = c.toy.dims;
  return {
      {"seed", c.seed},
      {"sampler",
       {{"backend", c.sampler.backend == Backend::Toy ? "toy" : "gaussian"},
        {"timesteps", c.sampler.timesteps},
        {"train_steps", c.sampler.train_steps},
        {"beta_start", c.sampler.beta_start},
        {"beta_end", c.sampler.beta_end}}},
      {"guidance", to_json(c.guidance)},
      {"attention", to_json(c.attention)},
      {"toy",
       {{"weight_seed", c.toy.weight_seed},
        {"adapter_scale", c.toy.adapter_scale},
        {"positions", d.positions},
        {"channels", d.channels},
        {"model_dim", d.model_dim},
        {"head_dim", d.head_dim},
        {"context_dim", d.context_dim},
        {"text_tokens", d.text_tokens},
        {"id_tokens", d.id_tokens},
        {"blocks", d.blocks}}},
      {"gaussian",
       {{"prior_mean", c.gaussian.prior_mean},
        {"text_mean", c.gaussian.text_mean},
        {"id_mean", c.gaussian.id_mean},
        {"prior_sigma", c.gaussian.prior_sigma},
        {"text_sigma", c.gaussian.text_sigma},
        {"id_sigma", c.gaussian.id_sigma}}},
      {"eval_set",
       {{"identities", c.eval_set.identities},
        {"prompts", c.eval_set.prompts},
        {"embedding_dim", c.eval_set.embedding_dim},
        {"setting", to_string(c.eval_set.setting)},
        {"seed", c.eval_set.seed},
        {"identity_index", c.eval_set.identity_index},
        {"prompt_index", c.eval_set.prompt_index},
        {"model", c.eval_set.model},
        {"lora_scale", c.eval_set.lora_scale}}},
      {"sweep",
       {{"alpha", c.sweep.alpha}, {"beta", c.sweep.beta}, {"adapter_scale", c.sweep.adapter_scale}}},
      {"analyze",
       {{"step_index", c.analyze.step_index},
        {"group", to_string(c.analyze.group)},
        {"bins", c.analyze.bins}}},
  };
}

}  // namespace fastface
