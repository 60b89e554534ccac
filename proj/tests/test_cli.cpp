#include <doctest.h>

#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fastface/tensor_io.hpp"

namespace fs = std::filesystem;
using fastface::read_file;
using fastface::write_file;

namespace {

const fs::path kRoot = fs::temp_directory_path() / "fastface_cli_test";

int run(const std::string& args) {
  const std::string cmd = std::string(FASTFACE_BIN) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

std::vector<std::string> files_under(const fs::path& root) {
  std::vector<std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) out.push_back(fs::relative(e.path(), root).generic_string());
  std::sort(out.begin(), out.end());
  return out;
}

struct Fresh {
  Fresh() {
    fs::remove_all(kRoot);
    fs::create_directories(kRoot);
  }
  ~Fresh() { fs::remove_all(kRoot); }
};

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("simulate twice gives byte-identical artifacts") {
    Fresh f;
    write_file(kRoot / "run.json", R"({"attention": {"kind": "scheduled_softmask"}})");
    REQUIRE(run("--config " + q(kRoot / "run.json") + " --seed 5 --out " + q(kRoot / "a") + " simulate") == 0);
    REQUIRE(run("--config " + q(kRoot / "run.json") + " --seed 5 --out " + q(kRoot / "b") + " simulate") == 0);
    const auto names = files_under(kRoot / "a");
    REQUIRE(names == files_under(kRoot / "b"));
    CHECK(names.size() > 3);
    for (const auto& n : names) CHECK(read_file(kRoot / "a" / n) == read_file(kRoot / "b" / n));
  }

  TEST_CASE("default config runs without --config") {
    Fresh f;
    CHECK(run("--out " + q(kRoot / "d") + " simulate") == 0);
    CHECK(fs::exists(kRoot / "d" / "manifest.json"));
  }

  TEST_CASE("exit codes") {
    Fresh f;
    CHECK(run("") == 1);
    CHECK(run("frobnicate") == 1);
    CHECK(run("pareto") == 1);

    write_file(kRoot / "bad.json", R"({"guidance": {"phi": 7}})");
    CHECK(run("--config " + q(kRoot / "bad.json") + " --out " + q(kRoot / "o") + " simulate") == 2);
    write_file(kRoot / "broken.json", "{not json");
    CHECK(run("--config " + q(kRoot / "broken.json") + " --out " + q(kRoot / "o") + " simulate") == 2);
    CHECK(run("--out " + q(kRoot / "o") + " sweep") == 2);

    CHECK(run("--config " + q(kRoot / "missing.json") + " --out " + q(kRoot / "o") + " simulate") == 3);
    write_file(kRoot / "junk.fftn", "FFTN\x01garbage");
    CHECK(run("--out " + q(kRoot / "o") + " analyze-transform --input " + q(kRoot / "junk.fftn")) == 3);

    nlohmann::json huge = {{"sampler", {{"backend", "gaussian"}}},
                           {"gaussian", {{"text_mean", std::vector<double>(8, 1e308)},
                                         {"id_mean", std::vector<double>(8, 1e308)}}}};
    write_file(kRoot / "huge.json", huge.dump());
    CHECK(run("--config " + q(kRoot / "huge.json") + " --out " + q(kRoot / "o") + " simulate") == 4);
  }

  TEST_CASE("pareto verb writes a front") {
    Fresh f;
    write_file(kRoot / "p.json",
               R"([{"config_label": "a", "names": ["x"], "coordinates": [1], "maximize": [true]},
                   {"config_label": "b", "names": ["x"], "coordinates": [2], "maximize": [true]}])");
    REQUIRE(run("--out " + q(kRoot / "o") + " pareto --input " + q(kRoot / "p.json")) == 0);
    const auto front = nlohmann::json::parse(read_file(kRoot / "o" / "front.json"));
    REQUIRE(front.size() == 1);
    CHECK(front[0]["config_label"] == "b");
  }
}
