// Command-line front end: run experiments, run verification suites, plot CSVs.

#include "rfl/experiment.hpp"
#include "rfl/suites.hpp"

#include <CLI11.hpp>
#include <spdlog/cfg/helpers.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <iostream>

namespace {

constexpr int kUsageError = 2;

void configure_logging() {
  auto logger = spdlog::stderr_color_mt("rflsim");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::info);
  if (const char* level = std::getenv("RFL_LOG_LEVEL")) spdlog::cfg::helpers::load_levels(level);
}

}  // namespace

int main(int argc, char** argv) {
  configure_logging();
  CLI::App app{"Robust federated learning simulator"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  auto* run = app.add_subcommand("run", "Run every scheme x node count x seed of a config");
  run->add_option("--config", config_path, "YAML config file")->required();
  run->add_option("--out", out_dir, "Output directory (defaults to output.dir of the config)");

  std::string suite;
  auto* verify = app.add_subcommand("verify", "Run a verification suite");
  verify->add_option("--suite", suite, "equivalence | bounds | rates | gradients")->required();

  std::string kind, in_csv, out_file;
  auto* plot = app.add_subcommand("plot", "Render a metrics CSV as SVG");
  plot->add_option("--kind", kind, "acc_vs_round | loss_vs_round | acc_vs_nodes | loss_vs_nodes")->required();
  plot->add_option("--in", in_csv, "metrics.csv from a run")->required();
  plot->add_option("--out", out_file, "SVG file to write")->required();

  auto* reference = app.add_subcommand("config-reference", "Print every config key with its default");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsageError;
  }

  try {
    if (*run) {
      const auto config = rfl::load_config(config_path);
      run_experiment(config, out_dir.empty() ? config.output_dir : std::filesystem::path(out_dir));
      return 0;
    }
    if (*verify) {
      const auto report = rfl::run_suite(suite);
      std::cout << rfl::format_report(report);
      return report.passed() ? 0 : 1;
    }
    if (*plot) {
      rfl::emit_plot(in_csv, rfl::parse_plot_kind(kind), out_file);
      return 0;
    }
    if (*reference) {
      std::cout << rfl::config_reference();
      return 0;
    }
  } catch (const rfl::UnknownSuite& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kUsageError;
  } catch (const rfl::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kUsageError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
