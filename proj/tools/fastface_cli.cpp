#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "fastface/commands.hpp"
#include "fastface/errors.hpp"
#include "fastface/log.hpp"

namespace {

enum ExitCode : int {
  kOk = 0,
  kUsage = 1,
  kConfigError = 2,
  kIoError = 3,
  kNumericError = 4,
  kInternalError = 5,
};

struct GlobalOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
  std::size_t workers = 1;
};

fastface::RunConfig resolve_config(const GlobalOptions& g) {
  return g.config.empty() ? fastface::parse_run_config(nlohmann::json::object())
                          : fastface::load_run_config(g.config);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fastface: decoupled guidance and attention-map transforms for few-step samplers"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalOptions g;
  app.add_option("--config", g.config, "JSON run configuration");
  app.add_option("--seed", g.seed, "Base seed (overrides the config seed)");
  app.add_option("--out", g.out, "Output directory")->capture_default_str();
  app.add_option("--workers", g.workers, "Worker threads for sweeps")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();

  auto* simulate = app.add_subcommand("simulate", "Run one guided generation and dump tensors");
  auto* sweep = app.add_subcommand("sweep", "Evaluate a guidance or adapter-scale grid");

  auto* analyze = app.add_subcommand("analyze-transform",
                                     "Histograms of attention maps before and after a transform");
  std::string dump;
  std::optional<std::size_t> bins;
  analyze->add_option("--input", dump, "Attention map tensor file")->required();
  analyze->add_option("--bins", bins, "Histogram bins (overrides the config)");

  auto* eval = app.add_subcommand("eval", "Aggregate metrics and Pareto fronts from records");
  std::string manifest;
  std::string records;
  eval->add_option("--manifest", manifest, "Dataset manifest JSON")->required();
  eval->add_option("--records", records, "Directory of record-set JSON files")->required();

  auto* filter = app.add_subcommand("filter-identities", "Drop near-duplicate identities per group");
  double threshold = 0.3;
  filter->add_option("--manifest", manifest, "Dataset manifest JSON")->required();
  filter->add_option("--threshold", threshold, "Mean-similarity threshold")->capture_default_str();

  auto* pareto = app.add_subcommand("pareto", "Non-dominated subset of a point list");
  std::string points;
  pareto->add_option("--input", points, "JSON array of points")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    const std::filesystem::path out = g.out;
    if (simulate->parsed()) {
      const auto config = resolve_config(g);
      fastface::cmd_simulate(config, g.seed.value_or(config.seed), out);
    } else if (sweep->parsed()) {
      const auto config = resolve_config(g);
      fastface::cmd_sweep(config, g.seed.value_or(config.seed), out, g.workers);
    } else if (analyze->parsed()) {
      auto config = resolve_config(g);
      if (g.seed) config.seed = *g.seed;
      fastface::cmd_analyze_transform(config, dump, out, bins);
    } else if (eval->parsed()) {
      fastface::cmd_eval(manifest, records, out);
    } else if (filter->parsed()) {
      fastface::cmd_filter_identities(manifest, threshold, out);
    } else if (pareto->parsed()) {
      fastface::cmd_pareto(points, out);
    }
  } catch (const fastface::ConfigError& e) {
    fastface::log_error(std::string("config error: ") + e.what());
    return kConfigError;
  } catch (const fastface::IoError& e) {
    fastface::log_error(std::string("i/o error: ") + e.what());
    return kIoError;
  } catch (const std::filesystem::filesystem_error& e) {
    fastface::log_error(std::string("i/o error: ") + e.what());
    return kIoError;
  } catch (const fastface::NumericError& e) {
    fastface::log_error(std::string("numeric failure: ") + e.what());
    return kNumericError;
  } catch (const std::exception& e) {
    fastface::log_error(std::string("internal error: ") + e.what());
    return kInternalError;
  }
  return kOk;
}
