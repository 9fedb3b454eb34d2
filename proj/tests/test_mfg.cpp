#include <doctest.h>

#include <cmath>

#include "mfg/mfg.hpp"
#include "mfg/random.hpp"
#include "oracles.hpp"

using namespace mfg;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

CostModel theta_model(int d) { return make_quadratic_model(VectorField::diagonal(Vector::Ones(d)), VectorField::zero(d)); }

Trajectory constant_theta(const TimeGrid& g, const Vector& th) {
  return Trajectory(g, std::vector<Vector>(g.nodes(), th), std::vector<Vector>(g.nodes(), Vector::Zero(th.size())));
}

}  // namespace

TEST_CASE("HJ solve: trivial and symmetric closed forms") {
  const TimeGrid g(1.0, 200);
  SUBCASE("zero model") {
    const CostModel m = make_quadratic_model(VectorField::zero(3), VectorField::zero(3));
    const Trajectory u = solve_hj(m, constant_theta(g, vec({0.2, 0.3, 0.5})));
    for (std::size_t k = 0; k < u.size(); ++k) CHECK(u[k].isZero());
  }
  SUBCASE("symmetric two-state") {
    const Trajectory u = solve_hj(theta_model(2), constant_theta(g, vec({0.5, 0.5})));
    for (std::size_t k = 0; k < u.size(); ++k) {
      const double t = g.node(k);
      CHECK(std::abs(u[k](0) - 0.5 * (1 - t)) < 1e-13);
      CHECK(std::abs(u[k](1) - 0.5 * (1 - t)) < 1e-13);
    }
  }
}

TEST_CASE("HJ maximum principle on random instances") {
  Rng rng = stream_rng(21, 0);
  for (int trial = 0; trial < 10; ++trial) {
    const int d = 2 + trial % 2;
    Matrix A = Matrix::Random(d, d);
    A = A * A.transpose();
    const CostModel m = make_quadratic_model(VectorField::quadratic_form(A, sample_box(rng, d, -1, 1)),
                                             VectorField::diagonal(sample_box(rng, d, -2, 2)));
    const TimeGrid g(1.5, 150);
    // A time-varying population: linear blend between two random points.
    const Vector a = sample_simplex(rng, d), b = sample_simplex(rng, d);
    std::vector<Vector> th;
    for (std::size_t k = 0; k < g.nodes(); ++k) th.push_back((1 - g.node(k) / 1.5) * a + (g.node(k) / 1.5) * b);
    const Trajectory u = solve_hj(m, Trajectory(g, th));
    const MaxPrincipleCheck c = check_max_principle(u, sampled_h0_bound(m, 10000, trial));
    CHECK(c.holds);
  }
}

TEST_CASE("Kolmogorov solve") {
  const TimeGrid g(1.0, 1000);
  SUBCASE("zero controls keep theta") {
    const Trajectory th = solve_kolmogorov([](int, double) { return Vector(Vector::Zero(3)); },
                                           SimplexVec(vec({0.2, 0.3, 0.5})), g);
    for (std::size_t k = 0; k < th.size(); ++k) CHECK(th[k] == vec({0.2, 0.3, 0.5}));
  }
  SUBCASE("constant rate closed form") {
    auto rates = [](int i, double) { return i == 0 ? vec({-1, 1}) : vec({0, 0}); };
    const Trajectory th = solve_kolmogorov(rates, SimplexVec(vec({1, 0})), g);
    for (std::size_t k = 0; k < th.size(); k += 50) CHECK(std::abs(th[k](0) - std::exp(-g.node(k))) < 1e-9);
  }
  SUBCASE("negative rate rejected before integration") {
    int calls_after_reject = 0;
    auto rates = [&](int, double t) {
      if (t > 0.5) ++calls_after_reject;
      return t > 0.25 ? vec({1, -1}) : vec({-1, 1});
    };
    CHECK_THROWS_AS(solve_kolmogorov(rates, SimplexVec(vec({1, 0})), g), InvalidArgument);
    CHECK(calls_after_reject == 0);
  }
  SUBCASE("mass") {
    auto rates = [](int i, double t) {
      Vector r = Vector::Constant(4, 1.0 + std::sin(3 * t + i));
      r(i) = 0;
      r(i) = -r.sum();
      return r;
    };
    const Trajectory th = solve_kolmogorov(rates, SimplexVec(vec({0.7, 0.1, 0.1, 0.1})), g);
    for (std::size_t k = 0; k < th.size(); ++k) {
      CHECK(std::abs(th[k].sum() - 1) <= 1e-10);
      CHECK(th[k].minCoeff() >= 0);
    }
  }
}

TEST_CASE("symmetric MFG benchmark") {
  const TimeGrid g(1.0, 1000);
  const MfgSolution s = solve_mfg(theta_model(2), SimplexVec(vec({0.5, 0.5})), g);
  CHECK(s.theta.front() == vec({0.5, 0.5}));
  CHECK(s.residual <= 1e-8);
  for (std::size_t k = 0; k < g.nodes(); ++k) {
    CHECK(max_norm(Vector(s.theta[k] - vec({0.5, 0.5}))) < 1e-14);
    CHECK(std::abs(s.u[k](0) - 0.5 * (1 - g.node(k))) < 1e-12);
    CHECK(std::abs(s.u[k](1) - 0.5 * (1 - g.node(k))) < 1e-12);
  }
}

TEST_CASE("MFG solve matches the shooting oracle") {
  const double T = 0.5;
  const int M = 1000;
  const TimeGrid g(T, M);
  const CostModel m = theta_model(2);
  const SimplexVec th0(vec({0.9, 0.1}));
  const MfgSolution s = solve_mfg(m, th0, g);
  CHECK(s.theta.front() == th0.vec());
  CHECK(max_norm(Vector(s.u.back() - m.psi(s.theta.back()))) <= 1e-12);
  CHECK(s.residual <= 1e-7);

  const oracle::ShootingResult ref = oracle::shooting_oracle(oracle::TwoStateMfg{}, 0.9, T, M);
  double worst = 0.0;
  for (int k = 0; k <= M; ++k) {
    const auto& y = ref.nodes[k];
    worst = std::max(worst, max_norm(Vector(s.theta[k] - vec({y[0], y[1]}))));
    worst = std::max(worst, max_norm(Vector(s.u[k] - vec({y[2], y[3]}))));
  }
  CHECK(worst <= 1e-5);
  MESSAGE("sup distance to shooting oracle: " << worst);

  SUBCASE("one more best-response step barely moves theta") {
    const auto [next, u] = best_response_flow(m, s.theta, th0);
    CHECK(sup_distance(next, s.theta) <= 2 * MfgOptions{}.tol);
  }
  SUBCASE("max principle on the equilibrium value") {
    CHECK(check_max_principle(s.u, sampled_h0_bound(m, 10000, 1)).holds);
  }
  SUBCASE("mass") {
    for (std::size_t k = 0; k < s.theta.size(); ++k) CHECK(std::abs(s.theta[k].sum() - 1) <= 1e-10);
  }
}

TEST_CASE("small-T uniqueness from random initial trajectories") {
  const TimeGrid g(0.5, 200);
  const CostModel m = make_quadratic_model(VectorField::diagonal(vec({1, 2, 1.5})), VectorField::diagonal(vec({1, 1, 1})));
  const SimplexVec th0(vec({0.6, 0.3, 0.1}));
  MfgOptions opts;
  const MfgSolution ref = solve_mfg(m, th0, g, opts);
  Rng rng = stream_rng(33, 0);
  for (int s = 0; s < 10; ++s) {
    std::vector<Vector> init(g.nodes());
    const Vector a = sample_simplex(rng, 3);
    for (std::size_t k = 0; k < g.nodes(); ++k) init[k] = k == 0 ? th0.vec() : a;
    const Trajectory start(g, init);
    const MfgSolution sol = solve_mfg(m, th0, g, opts, &start);
    CHECK(sup_distance(sol.theta, ref.theta) <= 10 * opts.tol);
    CHECK(sup_distance(sol.u, ref.u) <= 10 * opts.tol);
  }
}

TEST_CASE("fixed point failure carries history") {
  MfgOptions opts;
  opts.max_iter = 2;
  opts.tol = 1e-15;
  try {
    solve_mfg(theta_model(2), SimplexVec(vec({0.9, 0.1})), TimeGrid(1.0, 50), opts);
    FAIL("expected FixedPointError");
  } catch (const FixedPointError& e) {
    CHECK(e.history().size() == 2);
  }
}

TEST_CASE("verification theorem by simulation") {
  SUBCASE("zero model costs exactly zero") {
    const CostModel m = make_quadratic_model(VectorField::zero(2), VectorField::zero(2));
    const MfgSolution s = solve_mfg(m, SimplexVec(vec({0.3, 0.7})), TimeGrid(1.0, 100));
    const VerificationReport r = verify_value_by_simulation(m, s, 100, 4, 0.0);
    for (const auto& e : r.optimal) {
      CHECK(e.mean == 0.0);
      CHECK(e.half_width == 0.0);
    }
  }
  SUBCASE("symmetric instance") {
    const CostModel m = theta_model(2);
    const MfgSolution s = solve_mfg(m, SimplexVec(vec({0.5, 0.5})), TimeGrid(1.0, 1000));
    const VerificationReport r = verify_value_by_simulation(m, s, 10000, 5);
    for (int i = 0; i < 2; ++i) {
      CHECK(std::abs(r.optimal[i].mean - 0.5) <= r.optimal[i].half_width + 1e-12);
      CHECK(r.perturbed[i].mean - r.perturbed[i].half_width > r.optimal[i].mean + r.optimal[i].half_width);
    }
  }
  SUBCASE("asymmetric instance and thread independence") {
    const CostModel m = theta_model(2);
    const MfgSolution s = solve_mfg(m, SimplexVec(vec({0.9, 0.1})), TimeGrid(1.0, 500));
    const VerificationReport a = verify_value_by_simulation(m, s, 4000, 6, 0.5, 1);
    const VerificationReport b = verify_value_by_simulation(m, s, 4000, 6, 0.5, 3);
    for (int i = 0; i < 2; ++i) {
      // State 2 never leaves, so its CI collapses; allow the O(h^2) error of
      // integrating node-linear running costs.
      CHECK(std::abs(a.optimal[i].mean - s.u.front()(i)) <= a.optimal[i].half_width + 1e-6);
      CHECK(a.optimal[i].mean == b.optimal[i].mean);
      CHECK(a.perturbed[i].mean == b.perturbed[i].mean);
    }
  }
}

TEST_CASE("stationary solutions") {
  SUBCASE("d = 2 symmetric") {
    const StationaryTriple s = solve_stationary(theta_model(2), {vec({0.8, 0.2}), vec({0.3, 0}), 0.1});
    CHECK(max_norm(Vector(s.theta_bar - vec({0.5, 0.5}))) < 1e-9);
    CHECK(max_norm(s.u_bar) < 1e-9);
    CHECK(s.kappa == doctest::Approx(0.5).epsilon(1e-9));
    const StationaryResidual r = stationary_residual(theta_model(2), s);
    CHECK(r.kolmogorov <= 1e-8);
    CHECK(r.hamilton_jacobi <= 1e-8);
  }
  SUBCASE("d = 3 symmetric") {
    const StationaryTriple s = solve_stationary(theta_model(3), {vec({0.5, 0.3, 0.2}), vec({0.1, -0.2, 0}), 0.0});
    CHECK(max_norm(Vector(s.theta_bar.array() - 1.0 / 3)) < 1e-9);
    CHECK(s.kappa == doctest::Approx(1.0 / 3).epsilon(1e-9));
    CHECK(s.u_bar(2) == 0.0);
  }
  SUBCASE("multi-start agreement") {
    const CostModel m = make_quadratic_model(VectorField::diagonal(vec({2, 1})), VectorField::zero(2));
    Rng rng = stream_rng(41, 0);
    std::vector<StationaryTriple> roots;
    for (int s = 0; s < 10; ++s) {
      StationaryTriple guess{sample_simplex(rng, 2), sample_box(rng, 2, -1, 1), sample_box(rng, 1, 0, 1)(0)};
      roots.push_back(solve_stationary(m, guess));
      const StationaryResidual r = stationary_residual(m, roots.back());
      CHECK(r.kolmogorov <= 1e-8);
      CHECK(r.hamilton_jacobi <= 1e-8);
    }
    for (const auto& r : roots) {
      CHECK(max_norm(Vector(r.theta_bar - roots[0].theta_bar)) <= 1e-7);
      CHECK(max_norm(Vector(r.u_bar - roots[0].u_bar)) <= 1e-7);
      CHECK(std::abs(r.kappa - roots[0].kappa) <= 1e-7);
    }
  }
}

TEST_CASE("trend experiment") {
  const CostModel m = theta_model(2);
  const StationaryTriple bar = solve_stationary(m, {vec({0.5, 0.5}), vec({0, 0}), 0.5});
  SUBCASE("starting at the stationary point") {
    const TrendReport r = trend_experiment(m, SimplexVec(bar.theta_bar), VectorField::constant(Vector(bar.u_bar.array() + 3)),
                                           {0.5, 1.0}, bar, 100);
    for (const auto& row : r.rows) {
      CHECK(row.theta_gap < 1e-12);
      CHECK(row.u_gap < 1e-12);
    }
  }
  SUBCASE("short horizons decay") {
    MfgOptions opts;
    opts.max_iter = 2000;
    const TrendReport r = trend_experiment(m, SimplexVec(vec({0.9, 0.1})), VectorField::zero(2), {0.5, 1.0, 1.5, 2.0}, bar,
                                           200, opts, 2);
    CHECK(r.theta_nonincreasing);
    CHECK(r.u_nonincreasing);
    CHECK(r.theta_rate > 0);
    CHECK(r.u_rate > 0);
  }
}

TEST_CASE("monotonicity audit") {
  SUBCASE("constant psi has zero slack") {
    const CostModel m = make_quadratic_model(VectorField::diagonal(vec({1, 1, 1})), VectorField::constant(vec({1, 2, 3})));
    const MonotonicityReport r = monotonicity_audit(m, 500, 1);
    CHECK(r.psi_min == 0.0);
    CHECK(r.psi_ok);
  }
  SUBCASE("f = theta is monotone with gamma = 1") {
    const MonotonicityReport r = monotonicity_audit(theta_model(3), 2000, 2);
    CHECK(r.monot_ok);
    CHECK(r.gamma == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(r.concavity_ok);
    CHECK(r.concavity_max <= 0.0);
  }
  SUBCASE("decreasing coupling is flagged") {
    const MonotonicityReport r = monotonicity_audit(
        make_quadratic_model(VectorField::diagonal(vec({-1, -1})), VectorField::diagonal(vec({-1, -1}))), 200, 3);
    CHECK_FALSE(r.monot_ok);
    CHECK_FALSE(r.psi_ok);
  }
}
