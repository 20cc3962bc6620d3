#include "rfl/data.hpp"
#include "rfl/rng.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <numeric>

namespace rfl {

PartitionPlan partition_iid(Index n_samples, Index n_nodes, std::uint64_t seed) {
  if (n_nodes < 1) throw std::invalid_argument("partition_iid: need at least one node");
  if (n_samples < n_nodes) {
    throw std::invalid_argument("partition_iid: more nodes (" + std::to_string(n_nodes) + ") than samples (" +
                                std::to_string(n_samples) + ")");
  }
  std::vector<Index> order(static_cast<std::size_t>(n_samples));
  std::iota(order.begin(), order.end(), Index{0});
  RngStream stream(seed, 0, 0, Purpose::partition);
  std::shuffle(order.begin(), order.end(), stream.engine());

  PartitionPlan plan;
  plan.seed = seed;
  plan.node_shards.resize(static_cast<std::size_t>(n_nodes));
  const Index base = n_samples / n_nodes;
  const Index extra = n_samples % n_nodes;
  auto it = order.begin();
  for (Index j = 0; j < n_nodes; ++j) {
    const Index len = base + (j < extra ? 1 : 0);
    plan.node_shards[static_cast<std::size_t>(j)].assign(it, it + len);
    it += len;
  }
  return plan;
}

Dataset select_rows(const Dataset& data, const std::vector<Index>& rows) {
  Matrix<double> x(static_cast<Index>(rows.size()), data.dim());
  Vector<double> y(static_cast<Index>(rows.size()));
  for (Index i = 0; i < x.rows(); ++i) {
    const Index src = rows[static_cast<std::size_t>(i)];
    if (src < 0 || src >= data.size()) throw std::out_of_range("select_rows: row index out of range");
    x.row(i) = data.features.row(src);
    y[i] = data.labels[src];
  }
  return {std::move(x), std::move(y)};
}

std::vector<Dataset> make_shards(const Dataset& data, const PartitionPlan& plan) {
  std::vector<Dataset> shards;
  shards.reserve(plan.nodes());
  for (const auto& rows : plan.node_shards) shards.push_back(select_rows(data, rows));
  return shards;
}

Dataset subsample(const Dataset& data, Index count, std::uint64_t seed) {
  if (count <= 0 || count >= data.size()) return data;
  std::vector<Index> order(static_cast<std::size_t>(data.size()));
  std::iota(order.begin(), order.end(), Index{0});
  RngStream stream(seed, 0, 0, Purpose::subsample);
  std::shuffle(order.begin(), order.end(), stream.engine());
  order.resize(static_cast<std::size_t>(count));
  return select_rows(data, order);
}

void SyntheticSpec::validate() const {
  if (dim < 2) throw std::invalid_argument("SyntheticSpec: dim must be >= 2 (features + bias)");
  if (samples < 1) throw std::invalid_argument("SyntheticSpec: samples must be >= 1");
  if (!(margin > 0.0)) throw std::invalid_argument("SyntheticSpec: margin must be > 0");
  if (!(flip_prob >= 0.0 && flip_prob < 0.5)) throw std::invalid_argument("SyntheticSpec: flip_prob must be in [0, 0.5)");
  if (samples < dim) spdlog::warn("synthetic problem has fewer samples ({}) than dimensions ({})", samples, dim);
}

SyntheticProblem generate_synthetic_problem(const SyntheticSpec& spec) {
  spec.validate();
  RngStream stream(spec.seed, 0, 0, Purpose::synthetic);
  auto& gen = stream.engine();
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);

  Vector<double> truth(spec.dim);
  for (Index k = 0; k < spec.dim; ++k) truth[k] = normal(gen);
  truth.normalize();

  Matrix<double> x(spec.samples, spec.dim);
  Vector<double> y(spec.samples);
  Vector<double> draw(spec.dim);
  // Rejection keeps |<w*, x>| >= margin; the acceptance rate is bounded away
  // from zero for the margins used here, but cap the attempts anyway.
  const long max_attempts = 1000L * spec.samples + 100000L;
  long attempts = 0;
  for (Index i = 0; i < spec.samples;) {
    if (++attempts > max_attempts) throw std::invalid_argument("SyntheticSpec: margin too large, rejection sampling stalled");
    for (Index k = 0; k + 1 < spec.dim; ++k) draw[k] = normal(gen);
    draw[spec.dim - 1] = 1.0;
    const double score = truth.dot(draw);
    if (std::abs(score) < spec.margin) continue;
    double label = score > 0.0 ? 1.0 : -1.0;
    if (uniform(gen) < spec.flip_prob) label = -label;
    x.row(i) = draw.transpose();
    y[i] = label;
    ++i;
  }
  return {Dataset(std::move(x), std::move(y)), std::move(truth)};
}

Dataset generate_synthetic(const SyntheticSpec& spec) { return generate_synthetic_problem(spec).data; }

}  // namespace rfl
