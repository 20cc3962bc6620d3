#include "rfl/experiment.hpp"
#include "rfl/verify.hpp"

#include <fmt/format.h>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include <chrono>
#include <fstream>
#include <map>
#include <sstream>

namespace rfl {
namespace {

std::string fmt_double(double v) { return fmt::format("{:.17g}", v); }

template <typename Scalar>
RunResult run_typed(const TrainerConfig& trainer, const LoadedData& data, const NoiseSpec& noise) {
  const Dataset* test = data.test ? &*data.test : nullptr;
  auto trained = run_training<Scalar>(trainer, data.train, test, noise, data.optimal_value);
  RunResult r;
  r.trace = std::move(trained.trace);
  const Vector<double> model = trained.model.template cast<double>();
  r.model_digest = fnv1a_hex(model.data(), sizeof(double) * static_cast<std::size_t>(model.size()));
  r.stopped_early = trained.stopped_early;
  r.inner_capped = trained.inner_capped;
  return r;
}

}  // namespace

std::string fnv1a_hex(const void* data, std::size_t size) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  const auto* bytes = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < size; ++i) {
    h ^= bytes[i];
    h *= 0x100000001b3ULL;
  }
  return fmt::format("{:016x}", h);
}

LoadedData load_data(const ExperimentConfig& config) {
  LoadedData out;
  const DatasetConfig& ds = config.dataset;
  if (ds.kind == DatasetKind::mnist) {
    out.train = subsample(ingest_mnist(ds.train_images, ds.train_labels), ds.train_subsample, ds.subsample_seed);
    if (!ds.test_images.empty()) {
      out.test = subsample(ingest_mnist(ds.test_images, ds.test_labels), ds.test_subsample, ds.subsample_seed + 1);
    }
    spdlog::info("mnist: {} train rows, {} test rows, dim {}", out.train.size(), out.test ? out.test->size() : 0,
                 out.train.dim());
  } else {
    out.train = generate_synthetic(ds.synthetic);
    spdlog::info("synthetic: {} rows, dim {}", out.train.size(), out.train.dim());
    if (config.compute_optimum) {
      const Optimum opt = solve_to_optimum(out.train, config.trainer.ridge);
      out.optimal_value = opt.value;
      spdlog::info("reference optimum F* = {:.12g} (grad norm {:.3g}, {} iterations)", opt.value, opt.grad_norm,
                   opt.iterations);
    }
  }
  return out;
}

RunResult run_single(const ExperimentConfig& config, const LoadedData& data, Scheme scheme, int nodes,
                     std::uint64_t seed) {
  TrainerConfig trainer = config.trainer;
  trainer.scheme = scheme;
  trainer.nodes = nodes;
  trainer.seed = seed;
  const NoiseSpec noise = config.noise.for_nodes(nodes);
  const auto start = std::chrono::steady_clock::now();
  RunResult r = config.precision == Precision::float32 ? run_typed<float>(trainer, data, noise)
                                                       : run_typed<double>(trainer, data, noise);
  r.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  r.scheme = scheme;
  r.nodes = nodes;
  r.seed = seed;
  const std::string echo = echo_config(config);
  r.config_hash = fnv1a_hex(echo.data(), echo.size());
  return r;
}

std::vector<RunResult> run_experiment(const ExperimentConfig& config,
                                      const std::optional<std::filesystem::path>& out_dir) {
  config.validate();
  const LoadedData data = load_data(config);
  std::vector<RunResult> results;
  // The centralized baseline has no randomness and no dependence on N, so
  // one run is replicated across the product.
  std::optional<RunResult> centralized;
  for (Scheme scheme : config.schemes) {
    for (int nodes : config.nodes) {
      for (std::uint64_t seed : config.seeds) {
        RunResult r;
        if (scheme == Scheme::centralized && centralized) {
          r = *centralized;
          r.nodes = nodes;
          r.seed = seed;
        } else {
          spdlog::info("run scheme={} nodes={} seed={}", to_string(scheme), nodes, seed);
          r = run_single(config, data, scheme, nodes, seed);
          if (scheme == Scheme::centralized) centralized = r;
        }
        const RoundMetrics& last = r.final_metrics();
        spdlog::info("  rounds={} loss={:.6g} acc={:.4f} grad={:.3g}{}", last.round, last.train_loss,
                     last.test_accuracy, last.grad_norm, r.inner_capped ? fmt::format(" inner_capped={}", r.inner_capped) : "");
        results.push_back(std::move(r));
      }
    }
  }
  if (out_dir) {
    std::filesystem::create_directories(*out_dir);
    write_file_atomic(*out_dir / "metrics.csv", metrics_csv(results, config.record_timing));
    write_file_atomic(*out_dir / "summary.json", summary_json(results, config));
    write_file_atomic(*out_dir / "config.echo.yaml", echo_config(config));
    spdlog::info("wrote {}", out_dir->string());
  }
  return results;
}

std::string metrics_csv(const std::vector<RunResult>& results, bool record_timing) {
  std::string out = std::string(kMetricsHeader) + "\n";
  for (const auto& r : results) {
    for (const auto& m : r.trace) {
      out += fmt::format("{},{},{},{},{},{},{},{},{}\n", to_string(r.scheme), r.nodes, r.seed, m.round,
                         fmt_double(m.train_loss), fmt_double(m.test_accuracy), fmt_double(m.grad_norm),
                         m.optimality_gap ? fmt_double(*m.optimality_gap) : "",
                         record_timing ? fmt_double(m.wall_ms) : "");
    }
  }
  return out;
}

std::vector<MetricsRow> parse_metrics_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kMetricsHeader) {
    throw std::invalid_argument("metrics csv: header must be '" + std::string(kMetricsHeader) + "'");
  }
  std::vector<MetricsRow> rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::size_t pos = 0;
    while (true) {
      const auto comma = line.find(',', pos);
      f.push_back(line.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos));
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
    if (f.size() != 9) throw std::invalid_argument(fmt::format("metrics csv line {}: expected 9 fields", lineno));
    try {
      MetricsRow r;
      r.scheme = f[0];
      r.nodes = std::stoi(f[1]);
      r.seed = std::stoull(f[2]);
      r.round = std::stoi(f[3]);
      r.train_loss = std::stod(f[4]);
      r.test_accuracy = std::stod(f[5]);
      r.grad_norm = std::stod(f[6]);
      if (!f[7].empty()) r.optimality_gap = std::stod(f[7]);
      if (!f[8].empty()) r.wall_ms = std::stod(f[8]);
      rows.push_back(std::move(r));
    } catch (const std::logic_error&) {
      throw std::invalid_argument(fmt::format("metrics csv line {}: malformed number", lineno));
    }
  }
  return rows;
}

std::vector<MetricsRow> read_metrics_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_metrics_csv(buf.str());
}

std::string summary_json(const std::vector<RunResult>& results, const ExperimentConfig& config) {
  nlohmann::ordered_json runs = nlohmann::ordered_json::array();
  for (const auto& r : results) {
    const RoundMetrics& last = r.final_metrics();
    nlohmann::ordered_json rec;
    rec["scheme"] = std::string(to_string(r.scheme));
    rec["nodes"] = r.nodes;
    rec["seed"] = r.seed;
    rec["rounds"] = last.round;
    rec["train_loss"] = last.train_loss;
    rec["test_accuracy"] = last.test_accuracy;
    rec["grad_norm"] = last.grad_norm;
    rec["optimality_gap"] = last.optimality_gap ? nlohmann::ordered_json(*last.optimality_gap) : nullptr;
    rec["stopped_early"] = r.stopped_early;
    rec["inner_capped"] = r.inner_capped;
    rec["model_digest"] = r.model_digest;
    rec["config_hash"] = r.config_hash;
    if (config.record_timing) rec["wall_ms"] = r.wall_ms;
    runs.push_back(std::move(rec));
  }
  return runs.dump(2) + "\n";
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << contents;
    out.flush();
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace rfl
