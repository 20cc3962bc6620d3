#pragma once

// Experiment configuration, orchestration and persistence.

#include "rfl/simulation.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace rfl {

enum class DatasetKind { mnist, synthetic };
enum class Precision { float64, float32 };

struct DatasetConfig {
  DatasetKind kind = DatasetKind::synthetic;
  std::filesystem::path train_images;
  std::filesystem::path train_labels;
  std::filesystem::path test_images;  // optional for mnist
  std::filesystem::path test_labels;
  Index train_subsample = 0;  // 0 keeps everything
  Index test_subsample = 0;
  std::uint64_t subsample_seed = 0;
  SyntheticSpec synthetic;
};

struct NoiseConfig {
  NoiseKind kind = NoiseKind::expectation;
  double center = 0.0;
  std::vector<double> node{0.0};  // one entry applies to every node
  CombineRule combine = CombineRule::paper_sum;
  ChannelMode channel = ChannelMode::combined;
  UplinkMode uplink = UplinkMode::at_center;

  NoiseSpec for_nodes(int nodes) const;
};

struct ExperimentConfig {
  DatasetConfig dataset;
  std::vector<Scheme> schemes{Scheme::centralized};
  std::vector<int> nodes{1};
  std::vector<std::uint64_t> seeds{0};
  NoiseConfig noise;
  TrainerConfig trainer;  // scheme, nodes and seed are set per run
  Precision precision = Precision::float64;
  bool compute_optimum = true;  // synthetic only: F(w*) for the optimality gap
  std::filesystem::path output_dir = "results";
  bool record_timing = false;   // wall_ms column (disables byte-identical reruns)

  void validate() const;
};

/// Parses and validates a YAML config. Unknown keys, type errors and
/// constraint violations raise ConfigError naming the offending field.
ExperimentConfig load_config(const std::filesystem::path& path);
ExperimentConfig parse_config(const std::string& text, const std::string& source = "<string>");

/// Fully resolved config as YAML; parse_config(echo_config(c)) reproduces c.
std::string echo_config(const ExperimentConfig& config);

/// Documented reference of every config key with its default.
std::string config_reference();

struct RunResult {
  Scheme scheme = Scheme::centralized;
  int nodes = 1;
  std::uint64_t seed = 0;
  std::vector<RoundMetrics> trace;
  std::string model_digest;  // FNV-1a 64 of the final model's double values
  std::string config_hash;   // FNV-1a 64 of the echoed config
  double wall_ms = 0.0;
  bool stopped_early = false;
  int inner_capped = 0;

  const RoundMetrics& final_metrics() const { return trace.back(); }
};

struct LoadedData {
  Dataset train;
  std::optional<Dataset> test;
  std::optional<double> optimal_value;
};

LoadedData load_data(const ExperimentConfig& config);

/// One run of the product; `data` comes from load_data.
RunResult run_single(const ExperimentConfig& config, const LoadedData& data, Scheme scheme, int nodes,
                     std::uint64_t seed);

/// Every scheme x node count x seed. Writes metrics.csv, summary.json and
/// config.echo.yaml under `out_dir` when it is non-empty.
std::vector<RunResult> run_experiment(const ExperimentConfig& config,
                                      const std::optional<std::filesystem::path>& out_dir = std::nullopt);

// ---------------------------------------------------------------------------
// Files

inline constexpr const char* kMetricsHeader =
    "scheme,nodes,seed,round,train_loss,test_accuracy,grad_norm,optimality_gap,wall_ms";

struct MetricsRow {
  std::string scheme;
  int nodes = 0;
  std::uint64_t seed = 0;
  int round = 0;
  double train_loss = 0.0;
  double test_accuracy = 0.0;
  double grad_norm = 0.0;
  std::optional<double> optimality_gap;
  std::optional<double> wall_ms;
};

std::string metrics_csv(const std::vector<RunResult>& results, bool record_timing);
std::vector<MetricsRow> parse_metrics_csv(const std::string& text);
std::vector<MetricsRow> read_metrics_csv(const std::filesystem::path& path);
std::string summary_json(const std::vector<RunResult>& results, const ExperimentConfig& config);

/// Writes to a sibling temp file, then renames over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

std::string fnv1a_hex(const void* data, std::size_t size);

// ---------------------------------------------------------------------------
// Plots

enum class PlotKind { acc_vs_round, loss_vs_round, acc_vs_nodes, loss_vs_nodes };
PlotKind parse_plot_kind(std::string_view name);

/// SVG with one series per scheme: mean over seeds, min/max band when more than one seed.
std::string render_plot(const std::vector<MetricsRow>& rows, PlotKind kind);
void emit_plot(const std::filesystem::path& csv, PlotKind kind, const std::filesystem::path& out);

}  // namespace rfl
