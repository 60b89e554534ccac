#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <random>
#include <sstream>

#include "fastface/commands.hpp"
#include "fastface/config.hpp"
#include "fastface/errors.hpp"
#include "fastface/tensor_io.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace fastface;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("fastface_" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

std::vector<std::string> files_under(const fs::path& root) {
  std::vector<std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) out.push_back(fs::relative(e.path(), root).generic_string());
  std::sort(out.begin(), out.end());
  return out;
}

std::string fmt_num(double v) { return fmt::format("{:.10g}", v); }

}  // namespace

TEST_SUITE("commands") {
  TEST_CASE("simulate is deterministic and writes every snapshot") {
    TempDir a("sim_a"), b("sim_b");
    const RunConfig c = parse_run_config(json{{"attention", {{"kind", "scheduled_softmask"}}}});
    cmd_simulate(c, 42, a.path);
    cmd_simulate(c, 42, b.path);
    const auto names = files_under(a.path);
    REQUIRE(names == files_under(b.path));
    for (const auto& n : names) CHECK(read_file(a.path / n) == read_file(b.path / n));

    const Tensor traj = read_tensor(a.path / "trajectory.fftn");
    REQUIRE(traj.dims.size() == 2);
    CHECK(traj.dims[0] == 5);
    CHECK(traj.dims[1] == 64);
    CHECK(read_tensor(a.path / "eps.fftn").dims[0] == 4);
    CHECK(std::count_if(names.begin(), names.end(), [](auto& n) { return n.ends_with("_post.fftn"); }) > 0);

    const json manifest = json::parse(read_file(a.path / "manifest.json"));
    CHECK(manifest["command"] == "simulate");
    CHECK(manifest["files"].size() == names.size() - 1);
    for (const auto& f : manifest["files"])
      CHECK(f["sha1"] == git_blob_hash(read_file(a.path / f["path"].get<std::string>())));
  }

  TEST_CASE("adapter off writes no post-transform maps") {
    TempDir d("sim_off");
    RunConfig c = parse_run_config(json{{"attention", {{"kind", "scale_power"}}}});
    c.toy.adapter_scale = 0.0;
    cmd_simulate(c, 3, d.path);
    for (const auto& n : files_under(d.path)) CHECK_FALSE(n.ends_with("_post.fftn"));
  }

  TEST_CASE("different seeds give different trajectories") {
    TempDir a("seed_a"), b("seed_b");
    const RunConfig c;
    cmd_simulate(c, 1, a.path);
    cmd_simulate(c, 2, b.path);
    CHECK(read_file(a.path / "trajectory.fftn") != read_file(b.path / "trajectory.fftn"));
  }

  TEST_CASE("sweep over adapter scales") {
    TempDir d("sweep_scale");
    RunConfig c;
    c.eval_set.identities = 1;
    c.sweep.adapter_scale = {0.1, 0.35, 0.5, 0.65, 0.8, 0.95};
    cmd_sweep(c, 7, d.path, 3);
    const auto rows = lines(read_file(d.path / "sweep.csv"));
    REQUIRE(rows.size() == 7);
    CHECK(rows[0] == kMetricsHeader);
    CHECK(rows[1].find("adapter_scale=0.1,") != std::string::npos);
    CHECK(rows[6].find("adapter_scale=0.95,") != std::string::npos);
  }

  TEST_CASE("sweep over alpha x beta keeps grid order and is worker independent") {
    TempDir one("sweep_ab1"), many("sweep_ab4");
    RunConfig c;
    c.sweep.alpha = {1.0, 1.5};
    c.sweep.beta = {1.0, 3.0};
    cmd_sweep(c, 7, one.path, 1);
    cmd_sweep(c, 7, many.path, 4);
    const std::string csv = read_file(one.path / "sweep.csv");
    CHECK(csv == read_file(many.path / "sweep.csv"));
    const auto rows = lines(csv);
    REQUIRE(rows.size() == 5);
    const char* expected[] = {"alpha=1;beta=1", "alpha=1;beta=3", "alpha=1.5;beta=1", "alpha=1.5;beta=3"};
    for (int i = 0; i < 4; ++i) CHECK(rows[i + 1].find(std::string(",") + expected[i] + ",") != std::string::npos);

    const auto cells = sweep_cells(c);
    CHECK(cells[3].config.guidance.alpha_schedule == std::vector<double>{1.0, 1.5, 1.5, 1.0});
    CHECK(cells[3].config.guidance.beta_schedule == std::vector<double>{1.0, 3.0, 3.0, 1.0});
  }

  TEST_CASE("empty sweep grid is rejected") {
    TempDir d("sweep_empty");
    RunConfig c;
    CHECK_THROWS_AS(cmd_sweep(c, 1, d.path, 1), ConfigError);
    c.sweep.alpha = {1.0};
    CHECK_THROWS_AS(cmd_sweep(c, 1, d.path, 1), ConfigError);
  }

  TEST_CASE("a 1x1 sweep equals simulate followed by aggregate") {
    TempDir sim("one_sim"), sweep("one_sweep");
    RunConfig c;
    c.eval_set.identities = 1;
    c.eval_set.prompts = 1;
    c.sweep.alpha = {1.5};
    c.sweep.beta = {3.0};
    cmd_sweep(c, 19, sweep.path, 1);
    RunConfig single = sweep_cells(c)[0].config;
    cmd_simulate(single, 19, sim.path);

    RecordSet set{single.eval_set.model, "alpha=1.5;beta=3", single.eval_set.lora_scale,
                  single.toy.adapter_scale, {}};
    const json r = json::parse(read_file(sim.path / "record.json"));
    set.records = parse_record_set(json{{"model", set.model}, {"config", set.config},
                                        {"lora_scale", set.lora_scale},
                                        {"adapter_scale", set.adapter_scale}, {"records", {r}}},
                                   "record.json")
                      .records;
    const auto rows = lines(read_file(sweep.path / "sweep.csv"));
    REQUIRE(rows.size() == 2);
    CHECK(rows[1] == metrics_csv_row(set, aggregate(set.records)));
  }

  TEST_CASE("analyze-transform with no transform leaves histograms unchanged") {
    TempDir d("analyze_none");
    std::mt19937_64 rng(31);
    const auto logits = oracle::random_mat(rng, 16, 8, -2, 2);
    const auto probs = oracle::softmax(logits, 1.0);
    std::vector<std::vector<double>> rows(probs.begin(), probs.end());
    write_tensor(d.path / "map.fftn", stack_rows(rows));
    RunConfig c;
    cmd_analyze_transform(c, d.path / "map.fftn", d.path / "out", 10);
    const json a = json::parse(read_file(d.path / "out" / "analysis.json"));
    CHECK(a["maps"][0]["before"] == a["maps"][0]["after"]);
    CHECK(a["bins"] == 10);
  }

  TEST_CASE("analyze-transform scale_power maps every quantile monotonically") {
    TempDir d("analyze_sp");
    std::mt19937_64 rng(32);
    const auto probs = oracle::softmax(oracle::random_mat(rng, 16, 8, -2, 2), 1.0);
    const Tensor t = stack_rows(std::vector<std::vector<double>>(probs.begin(), probs.end()));
    write_tensor(d.path / "map.fftn", t);
    RunConfig c = parse_run_config(json{{"attention", {{"kind", "scale_power"}}},
                                        {"analyze", {{"group", "down"}}}});
    cmd_analyze_transform(c, d.path / "map.fftn", d.path / "out", std::nullopt);
    const json a = json::parse(read_file(d.path / "out" / "analysis.json"));
    const double before_mean = a["maps"][0]["before"]["mean"];
    const double after_mean = a["maps"][0]["after"]["mean"];
    // convex power: Jensen gap is non-negative
    CHECK(after_mean >= 1.45 * std::pow(before_mean, 1.3));

    const Matrix m = tensor_to_matrix(t);
    const AttentionMap after = apply_transform({m, BlockGroup::Down, 0}, c.attention, 0);
    std::vector<double> x = m.data, y = after.probs.data;
    std::sort(x.begin(), x.end());
    std::sort(y.begin(), y.end());
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(std::abs(y[i] - 1.45 * std::pow(x[i], 1.3)) <= 1e-12);
    double mean = 0;
    for (double v : y) mean += v;
    CHECK(std::abs(mean / y.size() - after_mean) <= 1e-12);
  }

  TEST_CASE("analyze-transform accepts stacks and rejects corrupt files") {
    TempDir d("analyze_bad");
    write_tensor(d.path / "stack.fftn", make_tensor({3, 2, 2}, std::vector<double>(12, 0.5)));
    cmd_analyze_transform(RunConfig{}, d.path / "stack.fftn", d.path / "out", 4);
    CHECK(json::parse(read_file(d.path / "out" / "analysis.json"))["maps"].size() == 3);

    std::string bytes = read_file(d.path / "stack.fftn");
    bytes.resize(bytes.size() - 3);
    write_file(d.path / "cut.fftn", bytes);
    try {
      cmd_analyze_transform(RunConfig{}, d.path / "cut.fftn", d.path / "out2", 4);
      FAIL("expected an error");
    } catch (const IoError& e) {
      CHECK(std::string(e.what()).find("byte offset") != std::string::npos);
    }
    write_tensor(d.path / "vec.fftn", make_tensor({4}, std::vector<double>(4, 0.25)));
    CHECK_THROWS_AS(cmd_analyze_transform(RunConfig{}, d.path / "vec.fftn", d.path / "out3", 4), IoError);
  }

  TEST_CASE("eval on a fixture manifest matches a flat recomputation") {
    TempDir d("eval");
    const json doc = fixture::manifest_json(4, 3, 2, false);
    write_file(d.path / "manifest.json", doc.dump());
    const DatasetManifest m = parse_manifest(doc, d.path);
    std::vector<RecordSet> sets{fixture::complete_records(m, "dcg2", 0.8, 1),
                                fixture::complete_records(m, "dcg2", 0.4, 2),
                                fixture::complete_records(m, "cfg", 0.8, 3)};
    for (std::size_t i = 0; i < sets.size(); ++i)
      write_file(d.path / "records" / fmt::format("{}.json", i), to_json(sets[i]).dump());
    cmd_eval(d.path / "manifest.json", d.path / "records", d.path / "out");

    const auto rows = lines(read_file(d.path / "out" / "metrics.csv"));
    REQUIRE(rows.size() == 4);
    for (std::size_t k = 0; k < sets.size(); ++k) {
      double id = 0, clip = 0, ae = 0, ir = 0, fsc = 0;
      int nid = 0, nfsc = 0, fails = 0;
      for (const auto& r : sets[k].records) {
        clip += r.clip, ae += r.ae, ir += r.ir;
        if (r.id_sim) id += *r.id_sim, ++nid; else ++fails;
        if (r.fsc) fsc += *r.fsc, ++nfsc;
      }
      const double n = static_cast<double>(sets[k].records.size());
      std::vector<std::string> cells;
      std::stringstream ss(rows[k + 1]);
      for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
      REQUIRE(cells.size() == 10);
      CHECK(cells[1] == sets[k].config);
      CHECK(std::abs(std::stod(cells[4]) - id / nid) <= 1e-9);
      CHECK(std::abs(std::stod(cells[5]) - clip / n) <= 1e-9);
      CHECK(std::abs(std::stod(cells[6]) - ae / n) <= 1e-9);
      CHECK(std::abs(std::stod(cells[7]) - ir / n) <= 1e-9);
      CHECK(std::abs(std::stod(cells[8]) - fsc / nfsc) <= 1e-9);
      CHECK(std::stoi(cells[9]) == fails);
    }
    const json fronts = json::parse(read_file(d.path / "out" / "fronts.json"));
    CHECK(fronts.size() == 2);

    RecordSet short_set = sets[0];
    short_set.records.pop_back();
    write_file(d.path / "records" / "3.json", to_json(short_set).dump());
    CHECK_THROWS_AS(cmd_eval(d.path / "manifest.json", d.path / "records", d.path / "out2"), ConfigError);
  }

  TEST_CASE("filter-identities groups by demographic label") {
    TempDir d("filter");
    json doc = {{"identities",
                 {{{"id", "a"}, {"group", "f/young"}, {"embedding", {1.0, 0.0}}},
                  {{"id", "b"}, {"group", "f/young"}, {"embedding", {1.0, 0.0}}},
                  {{"id", "c"}, {"group", "f/young"}, {"embedding", {0.0, 1.0}}},
                  {{"id", "d"}, {"group", "m/old"}, {"embedding", {0.0, 1.0}}}}},
                {"prompts", json::array()}};
    write_file(d.path / "m.json", doc.dump());
    cmd_filter_identities(d.path / "m.json", 0.3, d.path / "out");
    const json f = json::parse(read_file(d.path / "out" / "filtered.json"));
    REQUIRE(f["groups"].size() == 2);
    CHECK(f["groups"][0]["group"] == "f/young");
    CHECK(f["groups"][0]["discarded"] == json{"a"});
    CHECK(f["groups"][1]["kept"] == json{"d"});
  }

  TEST_CASE("pareto command") {
    TempDir d("pareto");
    json pts = json::array();
    pts.push_back(to_json(ParetoPoint{"a", {"x", "y"}, {1, 1}, {true, true}}));
    pts.push_back(to_json(ParetoPoint{"b", {"x", "y"}, {2, 2}, {true, true}}));
    pts.push_back(to_json(ParetoPoint{"c", {"x", "y"}, {3, 0}, {true, true}}));
    write_file(d.path / "p.json", pts.dump());
    cmd_pareto(d.path / "p.json", d.path / "out");
    const json front = json::parse(read_file(d.path / "out" / "front.json"));
    REQUIRE(front.size() == 2);
    CHECK(front[0]["config_label"] == "b");
    CHECK(front[1]["config_label"] == "c");

    pts[0]["extra"] = 1;
    write_file(d.path / "bad.json", pts.dump());
    CHECK_THROWS_AS(cmd_pareto(d.path / "bad.json", d.path / "out2"), ConfigError);
  }
}
