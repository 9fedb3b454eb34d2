#include <doctest.h>

#include <cmath>

#include "mfg/nplayer.hpp"
#include "mfg/potential.hpp"
#include "mfg/random.hpp"
#include "mfg/stats.hpp"

using namespace mfg;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

CostModel theta_model(int d, VectorField psi) { return make_quadratic_model(VectorField::diagonal(Vector::Ones(d)), std::move(psi)); }

// Brute force: nested grids around the best point; the objective is concave.
double grid_sup(const std::function<double(const Vector&)>& obj, Vector center, double radius) {
  const int n = 40;
  double best = -std::numeric_limits<double>::infinity();
  for (int level = 0; level < 12; ++level) {
    Vector arg = center;
    for (int a = 0; a <= n; ++a) {
      for (int b = 0; b <= n; ++b) {
        const Vector p = center + radius * vec({2.0 * a / n - 1, 2.0 * b / n - 1});
        const double v = obj(p);
        if (v > best) {
          best = v;
          arg = p;
        }
      }
    }
    center = arg;
    radius *= 0.25;
  }
  return best;
}

MfgOptions tight() { return MfgOptions{0.5, 1e-13, 5000, true, 1e-3, 1e-5}; }

}  // namespace

TEST_CASE("PotentialModel construction") {
  CHECK_NOTHROW(PotentialModel(theta_model(2, VectorField::zero(2))));
  const VectorField rot = VectorField::custom(
      2, [](const Vector& th) { return vec({th(1), -th(0)}); }, 1.0);
  CHECK_THROWS_AS(PotentialModel(make_quadratic_model(rot, VectorField::zero(2))), InvalidArgument);
  auto poly = std::make_shared<PolynomialCost>(0.5, 0.0, 0.3, VectorField::diagonal(Vector::Ones(2)));
  // A theta-dependent control cost breaks the separated form.
  CHECK_THROWS_AS(PotentialModel(CostModel(poly, VectorField::zero(2))), InvalidArgument);
  const PotentialModel pm(make_quadratic_model(VectorField::quadratic_form(vec({2, 1, 1, 3}).reshaped(2, 2), vec({0.1, -0.2})),
                                               VectorField::zero(2)));
  CHECK(pm.potential_consistency(200, 3) <= 1e-6);
}

TEST_CASE("Hamiltonian H: examples") {
  const PotentialModel pm(theta_model(2, VectorField::zero(2)));
  SUBCASE("constant u") {
    const Vector th = vec({0.3, 0.7});
    CHECK(hamiltonian_H(pm, vec({2.5, 2.5}), th) == doctest::Approx(0.5 * th.squaredNorm()).epsilon(1e-15));
  }
  SUBCASE("quadratic family") {
    CHECK(std::abs(hamiltonian_H(pm, vec({1, 0}), vec({0.5, 0.5}))) < 1e-15);
  }
  SUBCASE("h~ recovers the closed form") {
    CHECK(pm.h_tilde(vec({1, 0}), 0) == doctest::Approx(-0.5));
    CHECK(pm.h_tilde(vec({1, 0}), 1) == 0.0);
  }
}

TEST_CASE("Hamiltonian conservation along equilibria") {
  const Matrix A = vec({1.0, 0.2, 0.0, 0.2, 1.5, 0.1, 0.0, 0.1, 0.8}).reshaped(3, 3);
  const CostModel m = theta_model(3, VectorField::diagonal(vec({0.5, 1.0, 0.2})));
  const CostModel mA = make_quadratic_model(VectorField::quadratic_form(A, vec({0.0, 0.1, -0.1})),
                                            VectorField::diagonal(vec({0.5, 1.0, 0.2})));
  const SimplexVec th0(vec({0.6, 0.3, 0.1}));
  for (const CostModel* model : {&m, &mA}) {
    const PotentialModel pm(*model);
    const MfgSolution sol = solve_mfg(*model, th0, TimeGrid(1.0, 1000), tight());
    CHECK(hamiltonian_drift(pm, sol) <= 1e-6);
    for (std::size_t k = 0; k < sol.theta.size(); ++k) CHECK(std::abs(sol.theta[k].sum() - 1.0) <= 1e-10);
    const HamiltonResidual r = hamilton_residual(pm, sol);
    CHECK(r.theta_dot <= 1e-5);
    CHECK(r.u_dot <= 1e-5);
  }
  SUBCASE("fourth order in the step") {
    // No pair of values changes order along this solution; a control switching
    // on mid-horizon hits the kink of (x^+)^2 and costs accuracy order.
    const CostModel ms = make_quadratic_model(VectorField::diagonal(vec({1, 2, 1})), VectorField::constant(vec({2, 1, 0})));
    const PotentialModel pm(ms);
    std::vector<double> steps, drift;
    for (int M : {10, 20, 40, 80}) {
      const MfgSolution sol = solve_mfg(ms, th0, TimeGrid(2.0, M), MfgOptions{0.5, 1e-14, 20000, true, 1e-4, 1e-3});
      steps.push_back(2.0 / M);
      drift.push_back(hamiltonian_drift(pm, sol));
    }
    const LineFit fit = loglog_fit(steps, drift);
    CHECK(fit.slope >= 3.5);
    CHECK(fit.slope <= 4.5);
    CHECK(fit.r2 >= 0.99);
  }
}

TEST_CASE("Legendre transform F*") {
  SUBCASE("identity quadratic") {
    const PotentialModel pm(theta_model(3, VectorField::zero(3)));
    const Vector q = vec({0.3, -1.2, 0.5});
    CHECK(pm.Fstar(q) == doctest::Approx(0.5 * q.squaredNorm()).epsilon(1e-14));
    CHECK(max_norm(Vector(pm.Fstar_argmax(q) + q)) < 1e-14);
    CHECK(pm.Fstar(q, Method::Numeric) == doctest::Approx(0.5 * q.squaredNorm()).epsilon(1e-10));
  }
  SUBCASE("q = 0 gives -min F") {
    const Matrix A = vec({2, 0.5, 0.5, 1}).reshaped(2, 2);
    const Vector b = vec({0.4, -0.3});
    const PotentialModel pm(make_quadratic_model(VectorField::quadratic_form(A, b), VectorField::zero(2)));
    const Vector pmin = -A.ldlt().solve(b);
    CHECK(pm.Fstar(Vector::Zero(2)) == doctest::Approx(-pm.F(pmin)).epsilon(1e-13));
  }
  SUBCASE("random quadratics against grid search") {
    Rng rng = stream_rng(5, 0);
    for (int trial = 0; trial < 10; ++trial) {
      Matrix L = Matrix::Random(2, 2);
      const Matrix A = L * L.transpose() + 0.5 * Matrix::Identity(2, 2);
      const Vector b = sample_box(rng, 2, -1, 1);
      const PotentialModel pm(make_quadratic_model(VectorField::quadratic_form(A, b), VectorField::zero(2)));
      const Vector q = sample_box(rng, 2, -2, 2);
      const auto obj = [&](const Vector& p) { return -q.dot(p) - (0.5 * p.dot(A * p) + b.dot(p)); };
      const double oracle = grid_sup(obj, Vector::Zero(2), 20.0);
      CHECK(std::abs(pm.Fstar(q) - oracle) <= 1e-4);
      CHECK(std::abs(pm.Fstar(q, Method::Numeric) - oracle) <= 1e-4);
    }
  }
  SUBCASE("non-quadratic potential") {
    // F = sum exp(p) is strictly convex; F*(q) = sum (-q) log(-q) + q for q < 0.
    const VectorField f = VectorField::gradient_of(
        2, [](const Vector& p) { return p.array().exp().sum(); }, 3.0);
    const PotentialModel pm(make_quadratic_model(f, VectorField::zero(2)));
    const Vector q = vec({-0.5, -2.0});
    const double exact = ((-q.array()) * (-q.array()).log() + q.array()).sum();
    CHECK(std::abs(pm.Fstar(q) - exact) <= 1e-8);
    CHECK_THROWS_AS(pm.Fstar(q, Method::ClosedForm), InvalidArgument);
    CHECK_THROWS_AS(pm.Fstar(vec({0.5, -1.0})), ConvergenceError);
  }
}

TEST_CASE("Action functional") {
  const CostModel m = theta_model(2, VectorField::zero(2));
  const PotentialModel pm(m);
  const TimeGrid g(1.5, 300);
  SUBCASE("u = 0") {
    const Trajectory u(g, std::vector<Vector>(g.nodes(), Vector::Zero(2)));
    CHECK(action(pm, u) == doctest::Approx(1.5 * pm.Fstar(pm.h_tilde_all(Vector::Zero(2)))).epsilon(1e-13));
  }
  SUBCASE("stationary drift") {
    const CostModel m2 = make_quadratic_model(VectorField::diagonal(vec({2, 1})), VectorField::zero(2));
    const PotentialModel pm2(m2);
    const StationaryTriple s = solve_stationary(m2, {vec({0.5, 0.5}), vec({0, 0}), 0.5});
    std::vector<Vector> nodes;
    for (std::size_t k = 0; k < g.nodes(); ++k) nodes.push_back(Vector(s.u_bar.array() - s.kappa * g.node(k)));
    const double expected = 1.5 * pm2.Fstar(Vector(pm2.h_tilde_all(s.u_bar).array() - s.kappa));
    CHECK(action(pm2, Trajectory(g, nodes)) == doctest::Approx(expected).epsilon(1e-12));
  }
  SUBCASE("equilibria are critical points") {
    const CostModel mc = make_quadratic_model(VectorField::diagonal(vec({1.0, 1.5, 0.7})),
                                              VectorField::diagonal(vec({0.5, 1.0, 0.2})));
    const PotentialModel pmc(mc);
    const MfgSolution sol = solve_mfg(mc, SimplexVec(vec({0.6, 0.3, 0.1})), TimeGrid(1.0, 1000), tight());
    const CriticalityReport r = criticality_probe(pmc, sol, 20, 1e-3, 7);
    CHECK(r.max_first_order <= 1e-3 * r.epsilon);
    CHECK(r.max_second_order > 10 * r.max_first_order);
  }
}

TEST_CASE("Master field") {
  SUBCASE("terminal time") {
    const CostModel m = theta_model(3, VectorField::quadratic_form(Matrix::Identity(3, 3), vec({0.1, 0, 0})));
    const SimplexVec th(vec({0.2, 0.3, 0.5}));
    CHECK(master_field(m, th, 2.0, 2.0, 100) == m.psi(th.vec()));
  }
  SUBCASE("symmetric closed form") {
    const CostModel m = theta_model(2, VectorField::zero(2));
    for (double t : {0.0, 0.4, 0.9}) {
      const Vector U = master_field(m, SimplexVec(vec({0.5, 0.5})), t, 1.0, 200);
      CHECK(std::abs(U(0) - (1 - t) / 2) < 1e-12);
      CHECK(std::abs(U(1) - (1 - t) / 2) < 1e-12);
    }
  }
  SUBCASE("N-player fields approach the master field") {
    const CostModel m = theta_model(2, VectorField::diagonal(Vector::Ones(2)));
    const double T = 0.5;
    const TimeGrid g(T, 200);
    std::vector<double> Ns, errs;
    for (int N : {4, 8, 16, 32}) {
      const NField field = solve_equilibrium(m, N, g);
      double worst = 0.0;
      for (std::size_t s = 0; s < field.states(); ++s) {
        const Vector th = field.indexer().fraction(s);
        const Vector U = master_field(m, SimplexVec(th), 0.0, T, 200);
        worst = std::max(worst, max_norm(Vector(field.at_node(0, s) - U)));
      }
      Ns.push_back(N);
      errs.push_back(worst);
    }
    const LineFit fit = loglog_fit(Ns, errs);
    for (std::size_t k = 1; k < errs.size(); ++k) CHECK(errs[k] < errs[k - 1]);
    CHECK(fit.slope < -0.7);
  }
  SUBCASE("gradient terminal data gives a symmetric Jacobian") {
    const Matrix A = vec({1.0, 0.3, -0.2, 0.3, 0.5, 0.1, -0.2, 0.1, 0.8}).reshaped(3, 3);
    const CostModel m = theta_model(3, VectorField::quadratic_form(A, vec({0.1, 0.0, -0.3})));
    const SimplexVec th(vec({0.5, 0.3, 0.2}));
    const Matrix B = master_field_tangent_jacobian(m, th, 0.0, 0.8, 400, 1e-4, tight());
    CHECK(std::abs(B(0, 1) - B(1, 0)) <= 1e-6);
    // Terminal slice: B is the tangential Hessian of the potential.
    const Matrix BT = master_field_tangent_jacobian(m, th, 0.8, 0.8, 400);
    CHECK(std::abs(BT(0, 1) - BT(1, 0)) <= 1e-9);
    CHECK(std::abs(BT(0, 1) - (A(0, 1) - A(0, 2) - A(2, 1) + A(2, 2))) <= 1e-8);
  }
}

TEST_CASE("Planning by shooting") {
  const CostModel m = theta_model(2, VectorField::zero(2));
  SUBCASE("round trip") {
    const SimplexVec th0(vec({0.6, 0.4})), target(vec({0.5, 0.5}));
    const PlanningResult r = solve_planning(m, th0, target, 1.0);
    CHECK(r.gap <= 1e-6);
    CHECK(max_norm(Vector(r.solution.theta.back() - target.vec())) <= 1e-6);
    CHECK(r.psi_hat(1) == 0.0);
    PlanningOptions o;
    const MfgSolution again = solve_mfg(m.with_terminal(VectorField::constant(r.psi_hat)), th0, TimeGrid(1.0, o.steps), o.mfg);
    for (std::size_t k = 0; k < again.theta.size(); k += 50) {
      CHECK(max_norm(Vector(again.theta[k] - r.solution.theta[k])) <= 1e-9);
      CHECK(max_norm(Vector(again.u[k] - r.solution.u[k])) <= 1e-9);
    }
  }
  SUBCASE("stationary target needs no iterations") {
    const CostModel m2 = make_quadratic_model(VectorField::diagonal(vec({2, 1})), VectorField::zero(2));
    const StationaryTriple s = solve_stationary(m2, {vec({0.5, 0.5}), vec({0, 0}), 0.5}, {1e-12, 200, 1e-7});
    const SimplexVec bar(s.theta_bar);
    const PlanningResult r = solve_planning(m2, bar, bar, 1.0, {}, &s.u_bar);
    CHECK(r.iterations == 0);
    CHECK(std::abs((r.psi_hat(0) - r.psi_hat(1)) - (s.u_bar(0) - s.u_bar(1))) < 1e-9);
  }
  SUBCASE("unreachable target") {
    bool raised = false;
    try {
      solve_planning(m, SimplexVec(vec({0.9, 0.1})), SimplexVec(vec({0.1, 0.9})), 0.01);
    } catch (const PlanningError& e) {
      raised = true;
      CHECK(e.best_gap() > 0.1);
      CHECK(!e.history().empty());
    }
    CHECK(raised);
  }
  SUBCASE("boundary target rejected") {
    CHECK_THROWS_AS(solve_planning(m, SimplexVec(vec({0.5, 0.5})), SimplexVec(vec({1.0, 0.0})), 1.0), InvalidArgument);
  }
}
