#include "rfl/suites.hpp"
#include "rfl/verify.hpp"

#include <doctest.h>

#include <random>

using namespace rfl;

namespace {

Dataset gaussian_data(std::mt19937_64& rng, Index n, Index d) {
  std::normal_distribution<double> normal;
  Dataset data;
  data.features.resize(n, d);
  data.labels.resize(n);
  for (Index i = 0; i < n; ++i) {
    for (Index k = 0; k < d; ++k) data.features(i, k) = normal(rng);
    data.labels[i] = (rng() & 1) ? 1.0 : -1.0;
  }
  return data;
}

Vector<double> gaussian_vec(std::mt19937_64& rng, Index d, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  Vector<double> v(d);
  for (Index k = 0; k < d; ++k) v[k] = normal(rng);
  return v;
}

std::vector<RoundMetrics> trace_from(const std::vector<double>& losses) {
  std::vector<RoundMetrics> out;
  for (std::size_t t = 0; t < losses.size(); ++t) {
    RoundMetrics m;
    m.round = static_cast<int>(t);
    m.train_loss = losses[t];
    out.push_back(m);
  }
  return out;
}

}  // namespace

TEST_CASE("gradient-descent bound") {
  CHECK(bound_gd(1000000, 0.1, 2.0, 1.0) < 1e-4);
  CHECK(bound_gd(20, 0.1, 2.0, 1.0) == bound_gd(10, 0.1, 2.0, 1.0) / 2.0);
  const long double eta = 0.1L, beta = 2.0L;
  const long double expected = 1.0L / (eta * (1.0L - beta * eta / 2.0L) * 10.0L);
  CHECK(bound_gd(10, 0.1, 2.0, 1.0) == doctest::Approx(static_cast<double>(expected)).epsilon(1e-15));
  CHECK_THROWS_AS(bound_gd(10, 1.0, 2.0, 1.0), NonConvergentRegime);
  CHECK_THROWS(bound_gd(0, 0.1, 2.0, 1.0));
}

TEST_CASE("regularized-scheme bound") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.01, 0.9);
  for (int trial = 0; trial < 200; ++trial) {
    const double beta = 1.0 + u(rng), eta = u(rng) / beta, dist = u(rng) * 10;
    const int t = 1 + static_cast<int>(rng() % 1000);
    CHECK(bound_rla(t, eta, beta, 0.0, dist) == bound_gd(t, eta, beta, dist));
    CHECK(bound_rla(t, eta, beta, 0.0, dist, BoundVariant::lambda_weighted, 3.0) == bound_gd(t, eta, beta, dist));
  }
  double previous = 0.0;
  for (double variance : {0.0, 0.1, 0.3, 0.6, 0.9}) {
    const double b = bound_rla(10, 0.4, 2.0, variance, 1.0);
    CHECK(b > previous);
    previous = b;
  }
  CHECK(bound_rla(10, 0.2, 2.0, 0.7, 1.0, BoundVariant::lambda_weighted, 1.0) ==
        bound_rla(10, 0.2, 2.0, 0.7, 1.0, BoundVariant::proof_form));
  CHECK(bound_rla(10, 0.2, 2.0, 0.7, 1.0, BoundVariant::lambda_weighted, 2.0) >
        bound_rla(10, 0.2, 2.0, 0.7, 1.0, BoundVariant::proof_form));
  CHECK_THROWS_AS(bound_rla(10, 0.5, 2.0, 1.0, 1.0), NonConvergentRegime);  // (1 + 1) * 2 * 0.5 = 2
  CHECK_THROWS_AS(bound_rla(10, 0.6, 2.0, 1.0, 1.0), NonConvergentRegime);
}

TEST_CASE("bound checking") {
  const auto flat = trace_from(std::vector<double>(50, 0.25));
  const auto report = check_bound_holds(flat, [](int t) { return 1.0 / t; }, 0.25);
  CHECK(report.holds);
  CHECK(report.max_ratio == 0.0);
  CHECK(report.checked == 49);

  std::vector<double> losses(30);
  for (int t = 0; t < 30; ++t) losses[t] = 1.0 / (t + 1);
  losses[12] = 5.0;
  const auto broken = check_bound_holds(trace_from(losses), [](int t) { return 1.0 / t; }, 0.0);
  CHECK_FALSE(broken.holds);
  REQUIRE(broken.first_violation);
  CHECK(*broken.first_violation == 12);
}

TEST_CASE("rate fitting") {
  std::vector<double> gaps(1001);
  for (int t = 1; t <= 1000; ++t) gaps[t] = 3.0 / t;
  auto fit = fit_rate(gaps, 50, 1000, RateSchedule::one_over_t);
  CHECK(fit.slope == doctest::Approx(-1.0).epsilon(0.01));
  CHECK(fit.r_squared > 0.999);
  CHECK(fit.intercept == doctest::Approx(std::log(3.0)));
  for (int t = 1; t <= 1000; ++t) gaps[t] = 5.0 * gamma_schedule(t, 0.75);
  fit = fit_rate(gaps, 50, 1000, RateSchedule::gamma_t, 0.75);
  CHECK(fit.slope == doctest::Approx(1.0).epsilon(0.01));
  CHECK(fit.r_squared > 0.999);

  SUBCASE("planted slopes are recovered") {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(0.2, 2.5);
    for (int trial = 0; trial < 50; ++trial) {
      const double p = u(rng), c = u(rng);
      for (int t = 1; t <= 1000; ++t) gaps[t] = c * std::pow(t, -p);
      const auto f = fit_rate(gaps, 20, 1000, RateSchedule::one_over_t);
      CHECK(std::abs(f.slope + p) <= 0.01);
      CHECK(f.r_squared > 0.999);
    }
  }
  SUBCASE("invalid inputs") {
    for (int t = 1; t <= 1000; ++t) gaps[t] = 1.0 / t;
    CHECK_THROWS(fit_rate(gaps, 50, 60, RateSchedule::one_over_t));
    CHECK_THROWS(fit_rate(gaps, 50, 2000, RateSchedule::one_over_t));
    gaps[70] = 0.0;
    CHECK_THROWS(fit_rate(gaps, 50, 100, RateSchedule::one_over_t));
  }
}

TEST_CASE("reference optimum") {
  SyntheticSpec s;
  s.dim = 5;
  s.samples = 80;
  s.flip_prob = 0.1;
  const Dataset d = generate_synthetic(s);
  const Optimum opt = solve_to_optimum(d);
  CHECK(opt.grad_norm < 1e-10);
  CHECK(loss_gradient(opt.point, d).norm() < 1e-10);
  CHECK(opt.value == doctest::Approx(loss_value(opt.point, d)).epsilon(1e-15));
}

TEST_CASE("regularized-scheme equivalence") {
  std::mt19937_64 rng(3);
  std::vector<Dataset> shards;
  for (int j = 0; j < 4; ++j) shards.push_back(gaussian_data(rng, 30, 6));
  const Vector<double> w = gaussian_vec(rng, 6, 0.5);
  SUBCASE("one node is exact") {
    CHECK(rla_equivalence(w, {shards[0]}, 0.1, 1.0).deviation == 0.0);
  }
  SUBCASE("equal shards in both modes") {
    for (double variance : {0.0, 1.0}) {
      CHECK(rla_equivalence(w, shards, 0.1, variance).deviation < 1e-9);
      CHECK(rla_equivalence(w, shards, 0.1, variance, RlaMode::exact_hvp).deviation < 1e-9);
    }
  }
  SUBCASE("node order does not matter") {
    std::vector<Dataset> reversed(shards.rbegin(), shards.rend());
    const auto a = rla_equivalence(w, shards, 0.1, 1.0), b = rla_equivalence(w, reversed, 0.1, 1.0);
    CHECK(b.deviation < 1e-9);
    CHECK((a.federated - b.federated).norm() < 1e-14);
  }
  SUBCASE("the pooled recomputation matches an independent pooled gradient step") {
    const Dataset all = pool(shards);
    const Vector<double> expected = w - 0.1 * 2.0 * loss_gradient(w, all);
    CHECK((rla_equivalence(w, shards, 0.1, 1.0).centralized - expected).norm() < 1e-14);
  }
}

TEST_CASE("surrogate-scheme round machinery") {
  std::mt19937_64 rng(4);
  const Dataset shard = gaussian_data(rng, 40, 5);
  ScaRoundInput in;
  in.anchor = gaussian_vec(rng, 5, 0.5);
  RngStream s(1, 0, 0, Purpose::shared_sample);
  in.delta = sample_boundary_noise<double>(5, 1.0, s);
  in.g_prev = {gaussian_vec(rng, 5, 0.3)};
  in.rho = 0.5;
  in.gamma = 0.6;
  in.inner_iters = 100000;
  in.inner_tol = 1e-12;
  SUBCASE("pooled minimizer zeroes the surrogate gradient") {
    const Vector<double> u = pooled_surrogate_minimizer(shard, in.anchor, in.delta, in.g_prev[0], in.rho, in.lambda);
    CHECK(sca_surrogate_gradient(u, in.anchor, in.delta, in.g_prev[0], {in.rho, in.lambda}, shard).norm() < 1e-12);
  }
  SUBCASE("one node reproduces the centralized conditional step") {
    CHECK(sca_equivalence(in, {shard}).deviation < 1e-9);
  }
}

TEST_CASE("named suites") {
  CHECK(suite_names().size() == 4);
  CHECK_THROWS_AS(run_suite("nonsense"), UnknownSuite);
  const SuiteReport g = run_suite("gradients");
  CHECK(g.passed());
  CHECK(format_report(g).find("PASS") != std::string::npos);
  CHECK(run_suite("bounds").passed());
}
