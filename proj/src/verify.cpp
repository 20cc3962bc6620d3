#include "rfl/verify.hpp"

#include <Eigen/QR>

#include <cmath>
#include <string>

namespace rfl {
namespace {

double bound_with_factor(int t, double eta, double smoothness, double factor, double dist_sq, const char* what) {
  if (t < 1) throw std::invalid_argument(std::string(what) + ": t must be >= 1");
  if (!(eta > 0.0)) throw std::invalid_argument(std::string(what) + ": step size must be > 0");
  const double slack = 1.0 - factor * smoothness * eta / 2.0;
  if (!(slack > 0.0)) {
    throw NonConvergentRegime(std::string(what) + ": non-convergent regime, 1 - " + std::to_string(factor) +
                              " * beta * eta / 2 = " + std::to_string(slack) + " <= 0");
  }
  return dist_sq / (eta * slack * static_cast<double>(t));
}

double relative_deviation(const Vector<double>& fed, const Vector<double>& cent) {
  return (fed - cent).norm() / std::max(1.0, cent.norm());
}

}  // namespace

double bound_gd(int t, double eta, double smoothness, double dist_sq) {
  return bound_with_factor(t, eta, smoothness, 1.0, dist_sq, "bound_gd");
}

double bound_rla(int t, double eta, double smoothness, double variance, double dist_sq, BoundVariant variant,
                 double lambda) {
  if (!(variance >= 0.0)) throw std::invalid_argument("bound_rla: negative variance");
  const double factor = variant == BoundVariant::lambda_weighted ? 1.0 + lambda * variance : 1.0 + variance;
  return bound_with_factor(t, eta, smoothness, factor, dist_sq, "bound_rla");
}

BoundReport check_bound_holds(std::span<const RoundMetrics> trace, const std::function<double(int)>& bound,
                              double optimal_value) {
  BoundReport report;
  for (const auto& m : trace) {
    if (m.round < 1) continue;
    const double gap = m.train_loss - optimal_value;
    const double b = bound(m.round);
    ++report.checked;
    if (b > 0.0) report.max_ratio = std::max(report.max_ratio, gap / b);
    if (gap > b * (1.0 + 1e-6) && report.holds) {
      report.holds = false;
      report.first_violation = m.round;
    }
  }
  return report;
}

RateFit fit_rate(std::span<const double> gaps, int t_min, int t_max, RateSchedule schedule, double alpha) {
  if (t_min < 1 || t_max < t_min) throw std::invalid_argument("fit_rate: invalid window");
  if (static_cast<std::size_t>(t_max) >= gaps.size()) throw std::invalid_argument("fit_rate: window exceeds series");
  const int n = t_max - t_min + 1;
  if (n < 20) throw std::invalid_argument("fit_rate: window needs at least 20 points");

  Eigen::MatrixXd design(n, 2);
  Eigen::VectorXd target(n);
  for (int k = 0; k < n; ++k) {
    const int t = t_min + k;
    const double gap = gaps[static_cast<std::size_t>(t)];
    if (!(gap > 0.0)) throw std::domain_error("fit_rate: non-positive gap at t=" + std::to_string(t));
    const double log_t = std::log(static_cast<double>(t));
    design(k, 0) = schedule == RateSchedule::one_over_t ? log_t : -alpha * log_t;
    design(k, 1) = 1.0;
    target[k] = std::log(gap);
  }
  const Eigen::Vector2d coef = design.colPivHouseholderQr().solve(target);
  const Eigen::VectorXd resid = target - design * coef;
  const double ss_tot = (target.array() - target.mean()).square().sum();
  RateFit fit;
  fit.slope = coef[0];
  fit.intercept = coef[1];
  fit.r_squared = ss_tot > 0.0 ? 1.0 - resid.squaredNorm() / ss_tot : 1.0;
  fit.t_min = t_min;
  fit.t_max = t_max;
  return fit;
}

Optimum solve_to_optimum(const Dataset& data, double ridge, double tol, long max_iters) {
  const double smoothness = estimate_smoothness<double>(data, ridge);
  if (!(smoothness > 0.0)) throw NumericalError("solve_to_optimum: zero smoothness");
  const double step = 1.0 / smoothness;
  Optimum opt;
  opt.point = Vector<double>::Zero(data.dim());
  for (opt.iterations = 0;; ++opt.iterations) {
    auto [value, grad] = loss_and_gradient<double>(opt.point, data, ridge);
    opt.value = value;
    opt.grad_norm = grad.norm();
    if (opt.grad_norm < tol) return opt;
    if (opt.iterations == max_iters) {
      throw NumericalError("solve_to_optimum: gradient norm " + std::to_string(opt.grad_norm) + " after " +
                           std::to_string(max_iters) + " iterations");
    }
    opt.point -= step * grad;
  }
}

Dataset pool(const std::vector<Dataset>& shards) {
  if (shards.empty()) throw std::invalid_argument("pool: no shards");
  Index rows = 0;
  for (const auto& s : shards) rows += s.size();
  Matrix<double> x(rows, shards.front().dim());
  Vector<double> y(rows);
  Index at = 0;
  for (const auto& s : shards) {
    require_same_size(s.dim(), x.cols(), "pool");
    x.middleRows(at, s.size()) = s.features;
    y.segment(at, s.size()) = s.labels;
    at += s.size();
  }
  return {std::move(x), std::move(y)};
}

EquivalenceReport rla_equivalence(const Vector<double>& w, const std::vector<Dataset>& shards, double eta,
                                  double variance, RlaMode mode, double ridge) {
  std::vector<Vector<double>> locals;
  std::vector<double> sizes;
  for (const auto& shard : shards) {
    locals.push_back(rla_local_step<double>(w, shard, eta, variance, mode, ridge));
    sizes.push_back(static_cast<double>(shard.size()));
  }
  EquivalenceReport report;
  report.federated = aggregate<double>(locals, sizes);

  // Pooled regularized gradient, sum_j (D_j / D) grad F_j^e, recomputed from
  // per-sample margins over the union rather than from the shard kernels.
  const Dataset all = pool(shards);
  Vector<double> pooled_grad = Vector<double>::Zero(w.size());
  if (mode == RlaMode::paper_closed_form) {
    pooled_grad = (1.0 + variance) * loss_gradient<double>(w, all, ridge);
  } else {
    Index at = 0;
    const double total = static_cast<double>(all.size());
    for (const auto& shard : shards) {
      const auto rows = all.features.middleRows(at, shard.size());
      const auto labels = all.labels.segment(at, shard.size());
      Vector<double> g = ridge * w;
      Vector<double> hg = Vector<double>::Zero(w.size());
      for (Index i = 0; i < shard.size(); ++i) {
        const double deficit = 1.0 - labels[i] * rows.row(i).dot(w);
        if (deficit > 0.0) g -= (2.0 / static_cast<double>(shard.size())) * labels[i] * deficit * rows.row(i).transpose();
      }
      for (Index i = 0; i < shard.size(); ++i) {
        const double deficit = 1.0 - labels[i] * rows.row(i).dot(w);
        if (deficit > 0.0) hg += (2.0 / static_cast<double>(shard.size())) * rows.row(i).dot(g) * rows.row(i).transpose();
      }
      hg += ridge * g;
      pooled_grad += (static_cast<double>(shard.size()) / total) * (g + 2.0 * variance * hg);
      at += shard.size();
    }
  }
  report.centralized = w - eta * pooled_grad;
  report.deviation = relative_deviation(report.federated, report.centralized);
  return report;
}

Vector<double> pooled_surrogate_minimizer(const Dataset& pooled, const Vector<double>& anchor,
                                          const Vector<double>& delta, const Vector<double>& g, double rho,
                                          double lambda, double ridge, double tol) {
  const Index d = anchor.size();
  const double n = static_cast<double>(pooled.size());
  auto value = [&](const Vector<double>& u) {
    const Vector<double> shifted = u + delta;
    const Vector<double> deficit =
        (Vector<double>::Ones(pooled.size()) - pooled.labels.cwiseProduct(pooled.features * shifted)).cwiseMax(0.0);
    return rho * (deficit.squaredNorm() / n + 0.5 * ridge * shifted.squaredNorm()) +
           lambda * (u - anchor).squaredNorm() + (1.0 - rho) * (u - anchor).dot(g);
  };

  Vector<double> u = anchor;
  for (int it = 0; it < 200; ++it) {
    const Vector<double> shifted = u + delta;
    const Vector<double> raw = Vector<double>::Ones(pooled.size()) - pooled.labels.cwiseProduct(pooled.features * shifted);
    Vector<double> grad = rho * ridge * shifted + 2.0 * lambda * (u - anchor) + (1.0 - rho) * g;
    Eigen::MatrixXd hess = (2.0 * lambda + rho * ridge) * Eigen::MatrixXd::Identity(d, d);
    for (Index i = 0; i < pooled.size(); ++i) {
      if (raw[i] > 0.0) {
        const auto x = pooled.features.row(i).transpose();
        grad -= rho * (2.0 / n) * pooled.labels[i] * raw[i] * x;
        hess.noalias() += rho * (2.0 / n) * x * x.transpose();
      }
    }
    if (grad.norm() <= tol) break;
    const Vector<double> dir = -hess.ldlt().solve(grad);
    const double f0 = value(u);
    double step = 1.0;
    while (step > 1e-12 && value(u + step * dir) > f0 + 1e-4 * step * grad.dot(dir)) step *= 0.5;
    u += step * dir;
  }
  return u;
}

EquivalenceReport sca_equivalence(const ScaRoundInput& in, const std::vector<Dataset>& shards) {
  if (in.g_prev.size() != shards.size()) throw DimensionError("sca_equivalence: one accumulator per shard required");
  const SurrogateParams params{in.rho, in.lambda};
  std::vector<Vector<double>> locals;
  std::vector<double> sizes;
  for (std::size_t j = 0; j < shards.size(); ++j) {
    const double smoothness = estimate_smoothness<double>(shards[j], in.ridge);
    auto solved = sca_solve_surrogate<double>(in.anchor, in.delta, in.g_prev[j], params, shards[j], smoothness,
                                              in.inner_iters, in.inner_tol, in.ridge);
    locals.push_back(sca_local_step<double>(in.anchor, solved.point, in.gamma));
    sizes.push_back(static_cast<double>(shards[j].size()));
  }
  EquivalenceReport report;
  report.federated = aggregate<double>(locals, sizes);

  const Dataset all = pool(shards);
  Vector<double> g_bar = Vector<double>::Zero(in.anchor.size());
  for (std::size_t j = 0; j < shards.size(); ++j) {
    g_bar += (static_cast<double>(shards[j].size()) / static_cast<double>(all.size())) * in.g_prev[j];
  }
  const Vector<double> w_hat = pooled_surrogate_minimizer(all, in.anchor, in.delta, g_bar, in.rho, in.lambda, in.ridge);
  report.centralized = in.anchor + in.gamma * (w_hat - in.anchor);
  report.deviation = relative_deviation(report.federated, report.centralized);
  return report;
}

}  // namespace rfl
