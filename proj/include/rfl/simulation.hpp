#pragma once

// Round loop shared by all schemes: broadcast-corrupt, N local steps,
// (uplink-corrupt,) aggregate, (center noise,) metrics. Schemes differ only in
// the local-step kernel.

#include "rfl/data.hpp"
#include "rfl/noise.hpp"
#include "rfl/smoothness.hpp"
#include "rfl/trainers.hpp"

#include <chrono>
#include <optional>
#include <string>
#include <vector>

namespace rfl {

struct RoundMetrics {
  int round = 0;
  Scheme scheme = Scheme::centralized;
  double train_loss = 0.0;
  double test_accuracy = 0.0;
  double grad_norm = 0.0;
  std::optional<double> optimality_gap;
  double wall_ms = 0.0;
  int inner_capped = 0;  // surrogate solves that hit inner_iters this round
};

template <typename Scalar>
struct TrainingResult {
  std::vector<RoundMetrics> trace;
  Vector<Scalar> model;
  bool stopped_early = false;
  int inner_capped = 0;
};

template <typename Scalar>
class Simulation {
 public:
  /// `test` may be null, in which case accuracy is measured on `train`.
  /// `optimal_value` is F(w*) on `train` when known.
  Simulation(TrainerConfig config, const Dataset& train, const Dataset* test, NoiseSpec noise,
             std::optional<double> optimal_value = std::nullopt)
      : config_(std::move(config)), noise_(std::move(noise)), optimal_value_(optimal_value) {
    config_.validate();
    if (train.empty()) throw std::invalid_argument("Simulation: empty training set");
    if (noise_.nodes() != static_cast<std::size_t>(config_.nodes)) {
      throw ConfigError("Simulation: noise spec has " + std::to_string(noise_.nodes()) + " node entries for " +
                        std::to_string(config_.nodes) + " nodes");
    }
    noise_.validate();
    train_ = train.cast<Scalar>();
    if (test != nullptr) {
      require_same_size(test->dim(), train.dim(), "Simulation test set");
      test_ = test->cast<Scalar>();
    }
    if (config_.scheme != Scheme::centralized) {
      const auto plan = partition_iid(train.size(), config_.nodes, config_.seed);
      for (const auto& rows : plan.node_shards) {
        shards_.push_back(select_rows(train, rows).cast<Scalar>());
        sizes_.push_back(static_cast<double>(rows.size()));
      }
    }
    if (config_.scheme == Scheme::worst_case) {
      for (const auto& shard : shards_) {
        smoothness_.push_back(static_cast<double>(estimate_smoothness<Scalar>(shard, ridge())));
        accumulators_.push_back(Vector<Scalar>::Zero(train.dim()));
      }
    }
    model_ = Vector<Scalar>::Zero(train.dim());
    start_ = std::chrono::steady_clock::now();
  }

  const Vector<Scalar>& model() const { return model_; }
  const TrainerConfig& config() const { return config_; }
  const std::vector<LabeledDataset<Scalar>>& shards() const { return shards_; }
  const std::vector<double>& shard_sizes() const { return sizes_; }
  int round() const { return round_; }

  RoundMetrics metrics(int capped = 0) const {
    RoundMetrics m;
    m.round = round_;
    m.scheme = config_.scheme;
    auto [loss, grad] = loss_and_gradient<Scalar>(model_, train_, ridge());
    m.train_loss = static_cast<double>(loss);
    m.grad_norm = static_cast<double>(grad.norm());
    if (!std::isfinite(m.train_loss) || !std::isfinite(m.grad_norm)) {
      throw NumericalError("non-finite training loss at round " + std::to_string(round_) + " (scheme " +
                           std::string(to_string(config_.scheme)) + ", seed " + std::to_string(config_.seed) + ")");
    }
    m.test_accuracy = static_cast<double>(evaluate_accuracy<Scalar>(model_, test_ ? *test_ : train_));
    if (optimal_value_) m.optimality_gap = m.train_loss - *optimal_value_;
    m.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start_).count();
    m.inner_capped = capped;
    return m;
  }

  /// One communication round; returns metrics at the new global model.
  RoundMetrics run_round() {
    const int t = round_;
    int capped = 0;
    if (config_.scheme == Scheme::centralized) {
      model_ = centralized_step<Scalar>(model_, train_, eta(), ridge());
    } else {
      std::vector<Vector<Scalar>> locals;
      locals.reserve(shards_.size());
      for (std::size_t j = 0; j < shards_.size(); ++j) locals.push_back(local_step(j, t, capped));
      const auto received = corrupt_uplink<Scalar>(locals, noise_, [&](std::size_t j) {
        return RngStream(config_.seed, j, static_cast<std::uint64_t>(t), Purpose::uplink);
      });
      RngStream center(config_.seed, 0, static_cast<std::uint64_t>(t), Purpose::center);
      model_ = apply_center_noise<Scalar>(aggregate<Scalar>(received, sizes_), noise_, center);
    }
    ++round_;
    capped_total_ += capped;
    return metrics(capped);
  }

  int inner_capped_total() const { return capped_total_; }

 private:
  Scalar eta() const { return static_cast<Scalar>(config_.step_size); }
  Scalar ridge() const { return static_cast<Scalar>(config_.ridge); }

  Vector<Scalar> perturbation(std::size_t node, int t) const {
    if (config_.sample_sharing == SampleSharing::shared) {
      RngStream stream(config_.seed, 0, static_cast<std::uint64_t>(t), Purpose::shared_sample);
      return sample_perturbation<Scalar>(noise_.kind, model_.size(), downlink_param(noise_, 0), stream);
    }
    RngStream stream(config_.seed, node, static_cast<std::uint64_t>(t), Purpose::downlink);
    return sample_perturbation<Scalar>(noise_.kind, model_.size(), downlink_param(noise_, node), stream);
  }

  Vector<Scalar> local_step(std::size_t j, int t, int& capped) {
    const auto& shard = shards_[j];
    switch (config_.scheme) {
      case Scheme::conventional: {
        RngStream stream(config_.seed, j, static_cast<std::uint64_t>(t), Purpose::downlink);
        return conventional_local_step<Scalar>(corrupt_downlink<Scalar>(model_, noise_, j, stream), shard, eta(),
                                               ridge());
      }
      case Scheme::rla: {
        RngStream stream(config_.seed, j, static_cast<std::uint64_t>(t), Purpose::downlink);
        const double variance = config_.rla_variance.value_or(combined_noise_param(noise_, j));
        return rla_local_step<Scalar>(corrupt_downlink<Scalar>(model_, noise_, j, stream), shard, eta(),
                                      static_cast<Scalar>(variance), config_.rla_mode, ridge());
      }
      case Scheme::worst_case: {
        const Vector<Scalar> delta = perturbation(j, t);
        const SurrogateParams params{rho_schedule(t, config_.rho_exponent), config_.proximal};
        auto solved = sca_solve_surrogate<Scalar>(model_, delta, accumulators_[j], params, shard, smoothness_[j],
                                                  config_.inner_iters, config_.inner_tol, ridge());
        if (!solved.converged) ++capped;
        accumulators_[j] = sca_update_accumulator<Scalar>(accumulators_[j], model_, delta, params.rho, shard, ridge());
        return sca_local_step<Scalar>(model_, solved.point, gamma_schedule(t + 1, config_.gamma_exponent));
      }
      case Scheme::centralized:
        break;
    }
    throw std::logic_error("local_step: centralized scheme has no local step");
  }

  TrainerConfig config_;
  NoiseSpec noise_;
  std::optional<double> optimal_value_;
  LabeledDataset<Scalar> train_;
  std::optional<LabeledDataset<Scalar>> test_;
  std::vector<LabeledDataset<Scalar>> shards_;
  std::vector<double> sizes_;
  std::vector<double> smoothness_;
  std::vector<Vector<Scalar>> accumulators_;
  Vector<Scalar> model_;
  int round_ = 0;
  int capped_total_ = 0;
  std::chrono::steady_clock::time_point start_;
};

/// T rounds, or fewer when the global gradient norm drops below stop_tol.
/// The trace starts with the metrics of the initial (zero) model.
template <typename Scalar = double>
TrainingResult<Scalar> run_training(const TrainerConfig& config, const Dataset& train, const Dataset* test,
                                    const NoiseSpec& noise, std::optional<double> optimal_value = std::nullopt) {
  Simulation<Scalar> sim(config, train, test, noise, optimal_value);
  TrainingResult<Scalar> result;
  result.trace.push_back(sim.metrics());
  for (int t = 0; t < config.rounds; ++t) {
    if (result.trace.back().grad_norm < config.stop_tol) {
      result.stopped_early = true;
      break;
    }
    result.trace.push_back(sim.run_round());
  }
  result.model = sim.model();
  result.inner_capped = sim.inner_capped_total();
  return result;
}

}  // namespace rfl
