#include "rfl/simulation.hpp"
#include "rfl/verify.hpp"

#include <doctest.h>

#include <cmath>
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

Vector<double> vec(std::initializer_list<double> xs) {
  Vector<double> v(static_cast<Index>(xs.size()));
  Index k = 0;
  for (double x : xs) v[k++] = x;
  return v;
}

SyntheticSpec small_problem() {
  SyntheticSpec s;
  s.dim = 6;
  s.samples = 120;
  s.margin = 0.1;
  s.seed = 3;
  return s;
}

}  // namespace

TEST_CASE("aggregate examples") {
  const std::vector<double> equal{1, 1}, skewed{1, 3};
  CHECK(aggregate<double>({vec({1, 0}), vec({3, 4})}, equal) == vec({2, 2}));
  CHECK(aggregate<double>({vec({0}), vec({4})}, skewed) == vec({3}));
  const std::vector<double> one{7};
  CHECK(aggregate<double>({vec({1.5, -2})}, one) == vec({1.5, -2}));
  const std::vector<double> zeros{0, 0};
  CHECK_THROWS(aggregate<double>({vec({1}), vec({2})}, zeros));
  CHECK_THROWS(aggregate<double>({}, std::vector<double>{}));
  CHECK_THROWS_AS(aggregate<double>({vec({1}), vec({2, 3})}, equal), DimensionError);
}

TEST_CASE("centralized step") {
  SUBCASE("stationary point does not move") {
    Dataset d(Matrix<double>::Constant(1, 1, 1.0), vec({1}));
    CHECK(centralized_step<double>(vec({2.0}), d, 0.5) == vec({2.0}));
  }
  SUBCASE("one-dimensional quadratic piece, step equal to inverse curvature lands on the minimizer") {
    // F(w) = (1 - w/2)^2 = (w - 2)^2 / 4 while w < 2; curvature 1/2.
    Dataset d(Matrix<double>::Constant(1, 1, 0.5), vec({1}));
    CHECK(centralized_step<double>(vec({0.0}), d, 2.0)[0] == doctest::Approx(2.0));
  }
  SUBCASE("loss is non-increasing for eta below 2 / beta-hat") {
    const Dataset d = generate_synthetic(small_problem());
    const double eta = 1.9 / estimate_smoothness(d);
    Vector<double> w = Vector<double>::Zero(d.dim());
    double previous = loss_value(w, d);
    for (int t = 0; t < 500; ++t) {
      w = centralized_step(w, d, eta);
      const double now = loss_value(w, d);
      CHECK(now <= previous + 1e-15);
      previous = now;
    }
  }
}

TEST_CASE("regularized gradient") {
  std::mt19937_64 rng(1);
  const Dataset d = gaussian_data(rng, 25, 5);
  const Vector<double> w = gaussian_vec(rng, 5, 0.4);
  const Vector<double> g = loss_gradient(w, d);
  CHECK(rla_gradient(w, d, 0.0, RlaMode::paper_closed_form) == g);
  CHECK(rla_gradient(w, d, 0.0, RlaMode::exact_hvp) == g);
  CHECK(rla_gradient(w, d, 1.0, RlaMode::paper_closed_form) == 2.0 * g);
  CHECK_THROWS(rla_gradient(w, d, -1.0, RlaMode::paper_closed_form));

  SUBCASE("exact mode differentiates the regularized objective") {
    for (double variance : {0.3, 1.0}) {
      Vector<double> fd(5);
      for (Index k = 0; k < 5; ++k) {
        Vector<double> p = w, m = w;
        p[k] += 1e-6;
        m[k] -= 1e-6;
        fd[k] = (rla_objective(p, d, variance) - rla_objective(m, d, variance)) / 2e-6;
      }
      CHECK((rla_gradient(w, d, variance, RlaMode::exact_hvp) - fd).norm() / std::max(1.0, fd.norm()) < 1e-4);
    }
  }
}

TEST_CASE("local steps") {
  std::mt19937_64 rng(2);
  const Dataset d = gaussian_data(rng, 20, 4);
  const Vector<double> w = gaussian_vec(rng, 4);
  CHECK(rla_local_step(w, d, 0.1, 0.0, RlaMode::paper_closed_form) == conventional_local_step(w, d, 0.1));
  CHECK(conventional_local_step(w, d, 0.1) == conventional_local_step(w, d, 0.1));
  CHECK_THROWS(conventional_local_step(w, d, 0.0));
  // A point with every margin satisfied is stationary for the regularized loss too.
  Dataset easy(Matrix<double>::Identity(2, 2), vec({1, 1}));
  CHECK(rla_local_step<double>(vec({3, 3}), easy, 0.5, 1.0, RlaMode::exact_hvp) == vec({3, 3}));
}

TEST_CASE("surrogate value") {
  std::mt19937_64 rng(3);
  const Dataset d = gaussian_data(rng, 15, 4);
  const Vector<double> anchor = gaussian_vec(rng, 4), delta = gaussian_vec(rng, 4, 0.3), g = gaussian_vec(rng, 4);
  CHECK(sca_surrogate_value(anchor, anchor, delta, g, {1.0, 2.0}, d) == loss_value<double>(anchor + delta, d));
  const Vector<double> w = gaussian_vec(rng, 4);
  const double rho = 0.4, lambda = 1.3;
  const double expected = rho * loss_value<double>(w + delta, d) + lambda * (w - anchor).squaredNorm() +
                          (1 - rho) * (w - anchor).dot(g);
  CHECK(sca_surrogate_value(w, anchor, delta, g, {rho, lambda}, d) == doctest::Approx(expected).epsilon(1e-14));
  CHECK_THROWS(sca_surrogate_value(w, anchor, delta, g, {0.0, 1.0}, d));
  CHECK_THROWS(sca_surrogate_value(w, anchor, delta, g, {0.5, 0.0}, d));
}

TEST_CASE("surrogate solver") {
  std::mt19937_64 rng(4);
  SUBCASE("inactive margins reduce the surrogate to a quadratic with a closed-form minimizer") {
    Dataset far(Matrix<double>::Identity(3, 3) * 0.01, vec({1, 1, 1}));
    const Vector<double> anchor = Vector<double>::Constant(3, 1000.0);
    const Vector<double> g = vec({0.3, -0.2, 0.1});
    const double rho = 0.25, lambda = 1.0;
    auto sol = sca_solve_surrogate<double>(anchor, Vector<double>::Zero(3), g, {rho, lambda}, far,
                                           estimate_smoothness(far), 1000, 1e-12);
    CHECK(sol.converged);
    CHECK((sol.point - (anchor - (1 - rho) * g / (2 * lambda))).norm() < 1e-10);
  }
  SUBCASE("huge proximal weight pins the minimizer to the anchor") {
    const Dataset d = gaussian_data(rng, 20, 4);
    const Vector<double> anchor = gaussian_vec(rng, 4);
    auto sol = sca_solve_surrogate<double>(anchor, gaussian_vec(rng, 4, 0.2), gaussian_vec(rng, 4), {1.0, 1e8}, d,
                                           estimate_smoothness(d), 200, 1e-12);
    CHECK((sol.point - anchor).norm() < 1e-6);
  }
  SUBCASE("returned point beats random probes and the anchor") {
    for (int trial = 0; trial < 5; ++trial) {
      const Dataset d = gaussian_data(rng, 30, 5);
      const Vector<double> anchor = gaussian_vec(rng, 5), delta = gaussian_vec(rng, 5, 0.3), g = gaussian_vec(rng, 5);
      const SurrogateParams p{0.6, 0.8};
      auto sol = sca_solve_surrogate<double>(anchor, delta, g, p, d, estimate_smoothness(d), 5000, 1e-10);
      const double best = sca_surrogate_value(sol.point, anchor, delta, g, p, d);
      CHECK(best <= sca_surrogate_value(anchor, anchor, delta, g, p, d));
      for (int probe = 0; probe < 100; ++probe) {
        const Vector<double> u = sol.point + gaussian_vec(rng, 5, 0.5);
        CHECK(best <= sca_surrogate_value(u, anchor, delta, g, p, d));
      }
    }
  }
  SUBCASE("capped solves are flagged and still descend") {
    const Dataset d = gaussian_data(rng, 30, 5);
    const Vector<double> anchor = gaussian_vec(rng, 5), delta = gaussian_vec(rng, 5, 0.3), g = gaussian_vec(rng, 5);
    const SurrogateParams p{0.9, 0.5};
    auto sol = sca_solve_surrogate<double>(anchor, delta, g, p, d, estimate_smoothness(d), 2, 1e-14);
    CHECK_FALSE(sol.converged);
    CHECK(sol.iterations == 2);
    CHECK(sca_surrogate_value(sol.point, anchor, delta, g, p, d) <= sca_surrogate_value(anchor, anchor, delta, g, p, d));
  }
}

TEST_CASE("accumulator") {
  std::mt19937_64 rng(5);
  const Dataset d = gaussian_data(rng, 20, 3);
  const Vector<double> w = gaussian_vec(rng, 3), delta = gaussian_vec(rng, 3, 0.2), prev = gaussian_vec(rng, 3);
  CHECK(sca_update_accumulator(prev, w, delta, 1.0, d) == loss_gradient<double>(w + delta, d));
  CHECK((sca_update_accumulator(prev, w, delta, 1e-12, d) - prev).norm() < 1e-10);
  Vector<double> acc = Vector<double>::Zero(3);
  const Vector<double> g = vec({1.0, -2.0, 0.5});
  for (int t = 0; t < 2000; ++t) acc = blend_accumulator<double>(acc, g, rho_schedule(t, 0.6));
  CHECK((acc - g).norm() < 1e-12);
  CHECK_THROWS(blend_accumulator<double>(acc, g, 0.0));
}

TEST_CASE("conditional step and schedules") {
  const Vector<double> a = vec({1, 2}), b = vec({3, -2});
  CHECK(sca_local_step<double>(a, b, 1.0) == b);
  CHECK(sca_local_step<double>(a, a, 0.3) == a);
  CHECK(sca_local_step<double>(a, b, 0.5) == vec({2, 0}));
  CHECK_THROWS(sca_local_step<double>(a, b, 0.0));
  CHECK_THROWS(sca_local_step<double>(a, b, 1.5));
  CHECK(gamma_schedule(4, 0.75) == doctest::Approx(static_cast<double>(std::pow(4.0L, -0.75L))).epsilon(1e-15));
  CHECK(rho_schedule(0, 0.6) == 1.0);
  double g_prev = 2.0, r_prev = 2.0;
  for (int t = 1; t < 1000; ++t) {
    const double g = gamma_schedule(t, 0.75), r = rho_schedule(t - 1, 0.6);
    CHECK(g > 0.0);
    CHECK(g <= 1.0);
    CHECK(g < g_prev);
    CHECK(r > 0.0);
    CHECK(r <= 1.0);
    CHECK(r < r_prev);
    g_prev = g;
    r_prev = r;
  }
  CHECK_THROWS(gamma_schedule(0, 0.75));
}

TEST_CASE("trainer config validation") {
  TrainerConfig c;
  c.scheme = Scheme::worst_case;
  c.gamma_exponent = 0.5;
  c.rho_exponent = 0.6;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.gamma_exponent = 0.75;
  CHECK_NOTHROW(c.validate());
  c.step_size = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK(parse_scheme("rla") == Scheme::rla);
  CHECK_THROWS(parse_scheme("sgd"));
}

TEST_CASE("round loop") {
  const Dataset data = generate_synthetic(small_problem());
  SUBCASE("one node without noise matches a centralized step") {
    TrainerConfig c;
    c.scheme = Scheme::conventional;
    c.step_size = 0.3;
    Simulation<double> sim(c, data, nullptr, NoiseSpec::none(1));
    const Vector<double> before = sim.model();
    sim.run_round();
    // The single shard is a row permutation, so only summation order differs.
    const Vector<double> expected = centralized_step(before, data, 0.3);
    CHECK((sim.model() - expected).norm() <= 1e-13 * expected.norm());
  }
  SUBCASE("equal shards without noise match the pooled step") {
    TrainerConfig c;
    c.scheme = Scheme::rla;
    c.nodes = 4;
    c.step_size = 0.3;
    c.rla_variance = 0.0;
    Simulation<double> sim(c, data, nullptr, NoiseSpec::none(4));
    Vector<double> w = sim.model();
    for (int t = 0; t < 5; ++t) {
      const RoundMetrics m = sim.run_round();
      CHECK(m.round == t + 1);
      w = centralized_step(w, data, 0.3);
      CHECK((sim.model() - w).norm() / std::max(1.0, w.norm()) < 1e-9);
    }
  }
  SUBCASE("regularized trace with zero variance reproduces the conventional trace under noise") {
    TrainerConfig c;
    c.nodes = 3;
    c.rounds = 30;
    c.seed = 9;
    c.rla_variance = 0.0;
    const NoiseSpec noise = NoiseSpec::uniform(NoiseKind::expectation, 0.1, 0.1, 3);
    c.scheme = Scheme::conventional;
    const auto conv = run_training<double>(c, data, nullptr, noise);
    c.scheme = Scheme::rla;
    const auto rla = run_training<double>(c, data, nullptr, noise);
    REQUIRE(conv.trace.size() == rla.trace.size());
    for (std::size_t t = 0; t < conv.trace.size(); ++t) CHECK(conv.trace[t].train_loss == rla.trace[t].train_loss);
    CHECK(conv.model == rla.model);
  }
}

TEST_CASE("training runs") {
  const Dataset data = generate_synthetic(small_problem());
  SUBCASE("zero rounds returns the initial state") {
    TrainerConfig c;
    c.rounds = 0;
    const auto r = run_training<double>(c, data, nullptr, NoiseSpec::none(1));
    CHECK(r.trace.size() == 1);
    CHECK(r.trace[0].round == 0);
    CHECK(r.model.isZero(0.0));
  }
  SUBCASE("identical configs give identical traces") {
    TrainerConfig c;
    c.scheme = Scheme::worst_case;
    c.nodes = 3;
    c.rounds = 20;
    c.seed = 4;
    const NoiseSpec noise = NoiseSpec::uniform(NoiseKind::worst_case, 0.2, 0.3, 3);
    const auto a = run_training<double>(c, data, nullptr, noise);
    const auto b = run_training<double>(c, data, nullptr, noise);
    CHECK(a.model == b.model);
    for (std::size_t t = 0; t < a.trace.size(); ++t) CHECK(a.trace[t].train_loss == b.trace[t].train_loss);
    c.seed = 5;
    CHECK(run_training<double>(c, data, nullptr, noise).model != a.model);
  }
  SUBCASE("worst-case scheme lowers the loss with a non-increasing trailing mean") {
    TrainerConfig c;
    c.scheme = Scheme::worst_case;
    c.nodes = 4;
    c.rounds = 300;
    c.stop_tol = 0.0;
    const auto r = run_training<double>(c, data, nullptr, NoiseSpec::uniform(NoiseKind::worst_case, 0.0, 0.05, 4));
    CHECK(r.trace.back().train_loss < r.trace.front().train_loss);
    double previous = INFINITY;
    for (std::size_t start = 1; start + 50 <= r.trace.size(); start += 50) {
      double mean = 0.0;
      for (std::size_t t = start; t < start + 50; ++t) mean += r.trace[t].train_loss / 50.0;
      CHECK(mean <= previous);
      previous = mean;
    }
  }
  SUBCASE("early stop once the gradient norm is below tolerance") {
    TrainerConfig c;
    c.step_size = 1.0 / estimate_smoothness(data);
    c.rounds = 100000;
    c.stop_tol = 1e-3;
    const auto r = run_training<double>(c, data, nullptr, NoiseSpec::none(1));
    CHECK(r.stopped_early);
    CHECK(r.trace.back().grad_norm < 1e-3);
    CHECK(r.trace[r.trace.size() - 2].grad_norm >= 1e-3);
  }
  SUBCASE("divergence aborts with a diagnostic") {
    TrainerConfig c;
    c.step_size = 1e6;
    c.rounds = 5000;
    CHECK_THROWS_AS(run_training<double>(c, data, nullptr, NoiseSpec::none(1)), NumericalError);
  }
  SUBCASE("mismatched noise spec is rejected") {
    TrainerConfig c;
    c.scheme = Scheme::conventional;
    c.nodes = 3;
    CHECK_THROWS_AS(Simulation<double>(c, data, nullptr, NoiseSpec::none(2)), ConfigError);
  }
  SUBCASE("single precision follows double precision") {
    TrainerConfig c;
    c.scheme = Scheme::rla;
    c.nodes = 2;
    c.rounds = 50;
    const auto d64 = run_training<double>(c, data, nullptr, NoiseSpec::none(2));
    const auto d32 = run_training<float>(c, data, nullptr, NoiseSpec::none(2));
    CHECK(d32.trace.back().train_loss == doctest::Approx(d64.trace.back().train_loss).epsilon(1e-4));
  }
}

TEST_CASE("conventional training on MNIST loses accuracy under unit noise") {
  const std::filesystem::path dir = std::filesystem::path(RFL_DATA_DIR) / "mnist-subset";
  const Dataset train = subsample(ingest_mnist(dir / "train-images-idx3-ubyte.gz", dir / "train-labels-idx1-ubyte.gz"), 3000, 0);
  const Dataset test = ingest_mnist(dir / "t10k-images-idx3-ubyte.gz", dir / "t10k-labels-idx1-ubyte.gz");
  TrainerConfig c;
  c.scheme = Scheme::conventional;
  c.nodes = 10;
  c.rounds = 100;
  c.seed = 2;
  const auto clean = run_training<double>(c, train, &test, NoiseSpec::none(10));
  const auto noisy = run_training<double>(c, train, &test, NoiseSpec::uniform(NoiseKind::expectation, 0.5, 0.5, 10));
  CHECK(noisy.trace.back().test_accuracy < clean.trace.back().test_accuracy);
}
