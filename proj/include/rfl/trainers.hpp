#pragma once

// Local-step kernels of the four training schemes and the weighted aggregation
// rule. All kernels are pure functions of their arguments.

#include "rfl/model.hpp"

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace rfl {

enum class Scheme { centralized, conventional, rla, worst_case };
enum class RlaMode { paper_closed_form, exact_hvp };
enum class SampleSharing { per_node, shared };

std::string_view to_string(Scheme scheme);
std::string_view to_string(RlaMode mode);
std::string_view to_string(SampleSharing sharing);
Scheme parse_scheme(std::string_view name);
RlaMode parse_rla_mode(std::string_view name);

struct TrainerConfig {
  Scheme scheme = Scheme::centralized;
  double step_size = 0.01;      // eta
  int rounds = 500;             // T
  int nodes = 1;                // N
  double gamma_exponent = 0.75; // alpha, gamma^t = t^-alpha
  double rho_exponent = 0.6;    // beta, rho^t = (t + 1)^-beta
  double proximal = 1.0;        // lambda
  int inner_iters = 200;
  double inner_tol = 1e-8;
  RlaMode rla_mode = RlaMode::paper_closed_form;
  std::optional<double> rla_variance;  // overrides the channel's sigma_e^2 in the RLA gradient
  SampleSharing sample_sharing = SampleSharing::per_node;
  double ridge = 0.0;           // mu
  double stop_tol = 1e-6;
  std::uint64_t seed = 0;

  void validate() const;
};

// ---------------------------------------------------------------------------
// Aggregation

/// sum_j D_j w_j / D, reduced in node order.
template <typename Scalar>
Vector<Scalar> aggregate(const std::vector<Vector<Scalar>>& locals, std::span<const double> sizes) {
  if (locals.empty()) throw std::invalid_argument("aggregate: no local models");
  if (locals.size() != sizes.size()) throw DimensionError("aggregate: models and sizes differ in length");
  double total = 0.0;
  for (double s : sizes) {
    if (!(s >= 0.0)) throw std::invalid_argument("aggregate: negative dataset size");
    total += s;
  }
  if (!(total > 0.0)) throw std::invalid_argument("aggregate: zero total dataset size");
  if (locals.size() == 1) return locals.front();
  Vector<Scalar> out = Vector<Scalar>::Zero(locals.front().size());
  for (std::size_t j = 0; j < locals.size(); ++j) {
    require_same_size(locals[j].size(), out.size(), "aggregate");
    out += static_cast<Scalar>(sizes[j] / total) * locals[j];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Gradient-descent schemes

template <typename Scalar>
Vector<Scalar> centralized_step(const Vector<Scalar>& w, const LabeledDataset<Scalar>& data, Scalar eta,
                                Scalar ridge = Scalar(0)) {
  if (!(eta > Scalar(0))) throw std::invalid_argument("centralized_step: step size must be > 0");
  return w - eta * loss_gradient(w, data, ridge);
}

/// Plain local step from the received (possibly corrupted) model.
template <typename Scalar>
Vector<Scalar> conventional_local_step(const Vector<Scalar>& received, const LabeledDataset<Scalar>& shard,
                                       Scalar eta, Scalar ridge = Scalar(0)) {
  if (!(eta > Scalar(0))) throw std::invalid_argument("conventional_local_step: step size must be > 0");
  return received - eta * loss_gradient(received, shard, ridge);
}

/// Gradient of F_j(w) + sigma_e^2 ||grad F_j(w)||^2.
/// paper_closed_form: (1 + sigma_e^2) grad F_j, dropping the Hessian factor.
/// exact_hvp: grad F_j + 2 sigma_e^2 H_j grad F_j.
template <typename Scalar>
Vector<Scalar> rla_gradient(const Vector<Scalar>& w, const LabeledDataset<Scalar>& shard, Scalar variance,
                            RlaMode mode, Scalar ridge = Scalar(0)) {
  if (!(variance >= Scalar(0))) throw std::invalid_argument("rla_gradient: negative noise variance");
  Vector<Scalar> grad = loss_gradient(w, shard, ridge);
  if (variance == Scalar(0)) return grad;
  if (mode == RlaMode::paper_closed_form) return (Scalar(1) + variance) * grad;
  Vector<Scalar> hv = hessian_vector_product(w, grad, shard, ridge);
  return grad + Scalar(2) * variance * hv;
}

/// The regularized local objective whose gradient exact_hvp mode returns.
template <typename Scalar>
Scalar rla_objective(const Vector<Scalar>& w, const LabeledDataset<Scalar>& shard, Scalar variance,
                     Scalar ridge = Scalar(0)) {
  auto [value, grad] = loss_and_gradient(w, shard, ridge);
  return value + variance * grad.squaredNorm();
}

template <typename Scalar>
Vector<Scalar> rla_local_step(const Vector<Scalar>& received, const LabeledDataset<Scalar>& shard, Scalar eta,
                              Scalar variance, RlaMode mode, Scalar ridge = Scalar(0)) {
  if (!(eta > Scalar(0))) throw std::invalid_argument("rla_local_step: step size must be > 0");
  return received - eta * rla_gradient(received, shard, variance, mode, ridge);
}

// ---------------------------------------------------------------------------
// Sampling-based successive convex approximation
//
// Surrogate around the anchor w^t with sampled perturbation delta:
//   rho F_j(w + delta) + lambda ||w - w^t||^2 + (1 - rho) <w - w^t, G_prev>

inline double gamma_schedule(int t, double alpha) {
  if (t < 1) throw std::invalid_argument("gamma_schedule: t must be >= 1");
  return std::pow(static_cast<double>(t), -alpha);
}

/// rho^0 = 1 and strictly decreasing afterwards.
inline double rho_schedule(int t, double beta) {
  if (t < 0) throw std::invalid_argument("rho_schedule: t must be >= 0");
  return std::pow(static_cast<double>(t + 1), -beta);
}

struct SurrogateParams {
  double rho = 1.0;
  double lambda = 1.0;

  void validate() const {
    if (!(rho > 0.0 && rho <= 1.0)) throw std::invalid_argument("surrogate: rho must be in (0, 1]");
    if (!(lambda > 0.0)) throw std::invalid_argument("surrogate: lambda must be > 0");
  }
};

template <typename Scalar>
Scalar sca_surrogate_value(const Vector<Scalar>& w, const Vector<Scalar>& anchor, const Vector<Scalar>& delta,
                           const Vector<Scalar>& g_prev, SurrogateParams params,
                           const LabeledDataset<Scalar>& shard, Scalar ridge = Scalar(0)) {
  params.validate();
  require_same_size(anchor.size(), w.size(), "sca_surrogate_value");
  require_same_size(delta.size(), w.size(), "sca_surrogate_value");
  require_same_size(g_prev.size(), w.size(), "sca_surrogate_value");
  const Scalar rho = static_cast<Scalar>(params.rho);
  const Vector<Scalar> step = w - anchor;
  return rho * loss_value<Scalar>(w + delta, shard, ridge) + static_cast<Scalar>(params.lambda) * step.squaredNorm() +
         (Scalar(1) - rho) * step.dot(g_prev);
}

template <typename Scalar>
Vector<Scalar> sca_surrogate_gradient(const Vector<Scalar>& w, const Vector<Scalar>& anchor,
                                      const Vector<Scalar>& delta, const Vector<Scalar>& g_prev,
                                      SurrogateParams params, const LabeledDataset<Scalar>& shard,
                                      Scalar ridge = Scalar(0)) {
  const Scalar rho = static_cast<Scalar>(params.rho);
  return rho * loss_gradient<Scalar>(w + delta, shard, ridge) +
         Scalar(2) * static_cast<Scalar>(params.lambda) * (w - anchor) + (Scalar(1) - rho) * g_prev;
}

template <typename Scalar>
struct SurrogateSolution {
  Vector<Scalar> point;
  int iterations = 0;
  double grad_norm = 0.0;
  bool converged = false;
};

/// Gradient descent on the (2 lambda)-strongly convex surrogate with step
/// 1 / (2 lambda + rho * smoothness), starting at the anchor.
template <typename Scalar>
SurrogateSolution<Scalar> sca_solve_surrogate(const Vector<Scalar>& anchor, const Vector<Scalar>& delta,
                                              const Vector<Scalar>& g_prev, SurrogateParams params,
                                              const LabeledDataset<Scalar>& shard, double smoothness,
                                              int inner_iters, double inner_tol, Scalar ridge = Scalar(0)) {
  params.validate();
  if (inner_iters < 0) throw std::invalid_argument("sca_solve_surrogate: inner_iters must be >= 0");
  if (!(smoothness >= 0.0)) throw std::invalid_argument("sca_solve_surrogate: smoothness must be >= 0");
  const Scalar step = static_cast<Scalar>(1.0 / (2.0 * params.lambda + params.rho * smoothness));

  SurrogateSolution<Scalar> out;
  out.point = anchor;
  for (int k = 0;; ++k) {
    const Vector<Scalar> g = sca_surrogate_gradient(out.point, anchor, delta, g_prev, params, shard, ridge);
    out.grad_norm = static_cast<double>(g.norm());
    if (!std::isfinite(out.grad_norm)) throw NumericalError("sca_solve_surrogate: non-finite surrogate gradient");
    if (out.grad_norm <= inner_tol) {
      out.converged = true;
      return out;
    }
    if (k == inner_iters) return out;
    out.point -= step * g;
    out.iterations = k + 1;
  }
}

/// (1 - rho) G_prev + rho * sampled_gradient.
template <typename Scalar>
Vector<Scalar> blend_accumulator(const Vector<Scalar>& g_prev, const Vector<Scalar>& sampled_gradient, double rho) {
  if (!(rho > 0.0 && rho <= 1.0)) throw std::invalid_argument("accumulator: rho must be in (0, 1]");
  require_same_size(g_prev.size(), sampled_gradient.size(), "sca_update_accumulator");
  if (rho == 1.0) return sampled_gradient;
  const Scalar r = static_cast<Scalar>(rho);
  return (Scalar(1) - r) * g_prev + r * sampled_gradient;
}

template <typename Scalar>
Vector<Scalar> sca_update_accumulator(const Vector<Scalar>& g_prev, const Vector<Scalar>& anchor,
                                      const Vector<Scalar>& delta, double rho, const LabeledDataset<Scalar>& shard,
                                      Scalar ridge = Scalar(0)) {
  require_same_size(anchor.size(), delta.size(), "sca_update_accumulator");
  return blend_accumulator<Scalar>(g_prev, loss_gradient<Scalar>(anchor + delta, shard, ridge), rho);
}

/// w^t + gamma (w_hat - w^t).
template <typename Scalar>
Vector<Scalar> sca_local_step(const Vector<Scalar>& anchor, const Vector<Scalar>& w_hat, double gamma) {
  if (!(gamma > 0.0 && gamma <= 1.0)) throw std::invalid_argument("sca_local_step: gamma must be in (0, 1]");
  require_same_size(anchor.size(), w_hat.size(), "sca_local_step");
  if (gamma == 1.0) return w_hat;
  return anchor + static_cast<Scalar>(gamma) * (w_hat - anchor);
}

}  // namespace rfl
