#pragma once

// Numerical checks of the convergence claims: O(1/t) bounds for gradient
// descent and the regularized scheme, rate fitting, and the one-round
// federated/centralized equivalences.

#include "rfl/simulation.hpp"
#include "rfl/smoothness.hpp"

#include <Eigen/Cholesky>

#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

namespace rfl {

class NonConvergentRegime : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// ---------------------------------------------------------------------------
// Bounds

struct BoundParams {
  double step_size = 0.0;   // eta
  double smoothness = 0.0;  // beta-hat
  double variance = 0.0;    // sigma_e^2
  double dist_sq = 0.0;     // ||w0 - w*||^2
};

/// ||w0 - w*||^2 / (eta (1 - beta eta / 2) t).
double bound_gd(int t, double eta, double smoothness, double dist_sq);

/// Which denominator of the regularized-scheme bound to use:
/// lambda_weighted reads 1 - (1 + lambda sigma_e^2) beta eta / 2 with the
/// regularizer constant lambda; proof_form reads 1 - (1 + sigma_e^2) beta eta / 2.
enum class BoundVariant { lambda_weighted, proof_form };

double bound_rla(int t, double eta, double smoothness, double variance, double dist_sq,
                 BoundVariant variant = BoundVariant::proof_form, double lambda = 1.0);

struct BoundReport {
  bool holds = true;
  std::optional<int> first_violation;
  double max_ratio = 0.0;  // max over t of gap / bound
  int checked = 0;
};

/// Checks F(w^t) - F(w*) <= bound(t) (1 + 1e-6) for every t >= 1 in the trace.
BoundReport check_bound_holds(std::span<const RoundMetrics> trace, const std::function<double(int)>& bound,
                              double optimal_value);

// ---------------------------------------------------------------------------
// Rate fitting

enum class RateSchedule { one_over_t, gamma_t };

struct RateFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  int t_min = 0;
  int t_max = 0;
};

/// Least squares of log(gap_t) against log(t) (one_over_t) or log(t^-alpha)
/// (gamma_t) over t in [t_min, t_max]; gaps[t] is the gap after t rounds.
RateFit fit_rate(std::span<const double> gaps, int t_min, int t_max, RateSchedule schedule, double alpha = 0.75);

// ---------------------------------------------------------------------------
// Reference optimum

struct Optimum {
  Vector<double> point;
  double value = 0.0;
  double grad_norm = 0.0;
  long iterations = 0;
};

/// Full-batch gradient descent with step 1/beta-hat until ||grad F|| < tol.
Optimum solve_to_optimum(const Dataset& data, double ridge = 0.0, double tol = 1e-10, long max_iters = 5'000'000);

// ---------------------------------------------------------------------------
// Equivalence of one federated round and one centralized round

struct EquivalenceReport {
  double deviation = 0.0;  // ||w_fed - w_cent|| / max(1, ||w_cent||)
  Vector<double> federated;
  Vector<double> centralized;
};

/// Regularized scheme, no noise: weighted aggregate of local steps from `w`
/// vs one step of the pooled regularized gradient recomputed on the union of
/// the shards.
EquivalenceReport rla_equivalence(const Vector<double>& w, const std::vector<Dataset>& shards, double eta,
                                  double variance, RlaMode mode = RlaMode::paper_closed_form, double ridge = 0.0);

struct ScaRoundInput {
  Vector<double> anchor;               // w^t
  Vector<double> delta;                // sampled perturbation shared by all nodes
  std::vector<Vector<double>> g_prev;  // per-node accumulators G_j^{t-1}
  double rho = 1.0;
  double lambda = 1.0;
  double gamma = 1.0;
  int inner_iters = 200;
  double inner_tol = 1e-8;
  double ridge = 0.0;
};

/// SCA with a shared sample: weighted aggregate of the per-node conditional
/// steps vs the conditional step toward the minimizer of the pooled surrogate
/// (found by an independent semismooth Newton solve).
EquivalenceReport sca_equivalence(const ScaRoundInput& input, const std::vector<Dataset>& shards);

/// Minimizer of rho F(u + delta) + lambda ||u - anchor||^2 + (1 - rho) <u - anchor, g>
/// over the pooled data, by damped semismooth Newton.
Vector<double> pooled_surrogate_minimizer(const Dataset& pooled, const Vector<double>& anchor,
                                          const Vector<double>& delta, const Vector<double>& g, double rho,
                                          double lambda, double ridge = 0.0, double tol = 1e-13);

Dataset pool(const std::vector<Dataset>& shards);

}  // namespace rfl
