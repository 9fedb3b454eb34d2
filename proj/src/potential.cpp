#include "mfg/potential.hpp"

#include <cmath>
#include <limits>
#include <optional>

#include "mfg/random.hpp"

namespace mfg {

PotentialModel::PotentialModel(CostModel model, std::uint64_t seed)
    : model_(std::move(model)), f_(model_.running().coupling()), theta_ref_(SimplexVec::uniform(model_.dim()).vec()) {
  if (f_ == nullptr) throw InvalidArgument("PotentialModel: running cost does not expose a separated coupling f");
  if (!f_->has_potential()) throw InvalidArgument("PotentialModel: coupling has no potential F");
  // h - f^i must not depend on theta.
  const int d = dim();
  Rng rng = stream_rng(seed, 0x9e7);
  for (int s = 0; s < 50; ++s) {
    const Vector z = sample_box(rng, d, -2, 2);
    const Vector th = sample_simplex(rng, d);
    const int i = s % d;
    const double a = hamiltonian(model_, z, th, i) - (*f_)(th)(i);
    const double b = h_tilde(z, i);
    if (std::abs(a - b) > 1e-8 * (1.0 + std::abs(b))) {
      throw InvalidArgument("PotentialModel: Hamiltonian is not of the form h~(z, i) + f^i(theta)");
    }
  }
}

double PotentialModel::h_tilde(const Vector& z, int i) const {
  return hamiltonian(model_, z, theta_ref_, i) - (*f_)(theta_ref_)(i);
}

Vector PotentialModel::h_tilde_all(const Vector& u) const {
  const Vector f0 = (*f_)(theta_ref_);
  Vector out(dim());
  for (int i = 0; i < dim(); ++i) out(i) = hamiltonian(model_, u, theta_ref_, i) - f0(i);
  return out;
}

Vector PotentialModel::Fstar_argmax(const Vector& q, Method method) const {
  const int d = dim();
  if (q.size() != d || !q.allFinite()) throw InvalidArgument("Fstar: q must be a finite d-vector");
  const auto& A = f_->quadratic_matrix();
  if (method != Method::Numeric && A.has_value()) {
    Eigen::LLT<Matrix> llt(*A);
    if (llt.info() == Eigen::Success) {
      // -q - A p - b = 0
      return llt.solve(Vector(-q - *f_->linear_term()));
    }
    if (method == Method::ClosedForm) throw InvalidArgument("Fstar: quadratic F is not strictly convex");
  } else if (method == Method::ClosedForm) {
    throw InvalidArgument("Fstar: no closed form for this potential");
  }

  // Damped Newton on q + f(p) = 0 with a finite-difference Jacobian of f.
  Vector p = Vector::Zero(d);
  auto objective = [&](const Vector& x) { return -q.dot(x) - F(x); };
  Vector g = -q - f(p);
  std::vector<double> history;
  for (int it = 0; it < 200; ++it) {
    const double gn = max_norm(g);
    history.push_back(gn);
    if (gn <= 1e-10) return p;
    Matrix J(d, d);
    for (int c = 0; c < d; ++c) {
      const double h = 1e-6 * (1.0 + std::abs(p(c)));
      Vector pp = p, pm = p;
      pp(c) += h;
      pm(c) -= h;
      J.col(c) = (f(pp) - f(pm)) / (2.0 * h);
    }
    Vector step = J.ldlt().solve(g);  // J dp = g  <=>  f(p + dp) ~ -q
    if (!step.allFinite()) step = g;
    double t = 1.0;
    const double base = objective(p);
    bool moved = false;
    for (int ls = 0; ls < 60; ++ls) {
      const Vector trial = p + t * step;
      if (objective(trial) >= base - 1e-14 * (1.0 + std::abs(base))) {
        p = trial;
        moved = true;
        break;
      }
      t *= 0.5;
    }
    if (!moved || max_norm(p) > 1e8) break;
    g = -q - f(p);
  }
  throw ConvergenceError("Fstar: maximizer did not converge (unbounded or not strictly convex F?)", history);
}

double PotentialModel::Fstar(const Vector& q, Method method) const {
  const Vector p = Fstar_argmax(q, method);
  return -q.dot(p) - F(p);
}

double PotentialModel::potential_consistency(int samples, std::uint64_t seed) const {
  Rng rng = stream_rng(seed, 0xf0);
  double worst = 0.0;
  const int d = dim();
  for (int s = 0; s < samples; ++s) {
    const Vector th = sample_simplex(rng, d);
    const Vector fv = f(th);
    for (int c = 0; c < d; ++c) {
      const double h = 1e-5;
      Vector a = th, b = th;
      a(c) += h;
      b(c) -= h;
      worst = std::max(worst, std::abs((F(a) - F(b)) / (2.0 * h) - fv(c)));
    }
  }
  return worst;
}

double hamiltonian_H(const PotentialModel& pm, const Vector& u, const Vector& theta) {
  return theta.dot(pm.h_tilde_all(u)) + pm.F(theta);
}

double hamiltonian_drift(const PotentialModel& pm, const MfgSolution& sol) {
  const double H0 = hamiltonian_H(pm, sol.u[0], sol.theta[0]);
  double worst = 0.0;
  for (std::size_t k = 1; k < sol.u.size(); ++k) {
    worst = std::max(worst, std::abs(hamiltonian_H(pm, sol.u[k], sol.theta[k]) - H0));
  }
  return worst;
}

HamiltonResidual hamilton_residual(const PotentialModel& pm, const MfgSolution& sol, double fd_step) {
  const int d = pm.dim();
  const double h = sol.u.grid().step();
  HamiltonResidual r;
  for (std::size_t k = 1; k + 1 < sol.u.size(); ++k) {
    const Vector& u = sol.u[k];
    const Vector& th = sol.theta[k];
    const Vector dth = (sol.theta[k + 1] - sol.theta[k - 1]) / (2.0 * h);
    const Vector du = (sol.u[k + 1] - sol.u[k - 1]) / (2.0 * h);
    for (int j = 0; j < d; ++j) {
      Vector up = u, um = u, tp = th, tm = th;
      up(j) += fd_step;
      um(j) -= fd_step;
      tp(j) += fd_step;
      tm(j) -= fd_step;
      const double dHdu = (hamiltonian_H(pm, up, th) - hamiltonian_H(pm, um, th)) / (2.0 * fd_step);
      const double dHdth = (hamiltonian_H(pm, u, tp) - hamiltonian_H(pm, u, tm)) / (2.0 * fd_step);
      r.theta_dot = std::max(r.theta_dot, std::abs(dth(j) - dHdu));
      r.u_dot = std::max(r.u_dot, std::abs(-du(j) - dHdth));
    }
  }
  return r;
}

namespace {

std::vector<Vector> time_derivative(const Trajectory& u) {
  const std::size_t n = u.size();
  const double h = u.grid().step();
  std::vector<Vector> du(n);
  for (std::size_t k = 0; k < n; ++k) {
    if (n < 3) {
      du[k] = (u[n - 1] - u[0]) / (h * static_cast<double>(n - 1));
    } else if (k == 0) {
      du[k] = (-3.0 * u[0] + 4.0 * u[1] - u[2]) / (2.0 * h);
    } else if (k + 1 == n) {
      du[k] = (3.0 * u[k] - 4.0 * u[k - 1] + u[k - 2]) / (2.0 * h);
    } else {
      du[k] = (u[k + 1] - u[k - 1]) / (2.0 * h);
    }
  }
  return du;
}

}  // namespace

double action(const PotentialModel& pm, const Trajectory& u) {
  if (u.size() < 2) throw InvalidArgument("action: need at least two nodes");
  const std::vector<Vector> du = time_derivative(u);
  const double h = u.grid().step();
  double total = 0.0;
  for (std::size_t k = 0; k < u.size(); ++k) {
    const double w = (k == 0 || k + 1 == u.size()) ? 0.5 : 1.0;
    total += w * pm.Fstar(Vector(du[k] + pm.h_tilde_all(u[k])));
  }
  return h * total;
}

CriticalityReport criticality_probe(const PotentialModel& pm, const MfgSolution& sol, int perturbations, double eps,
                                    std::uint64_t seed) {
  const int d = pm.dim();
  const TimeGrid& g = sol.u.grid();
  const double T = g.horizon();
  CriticalityReport rep;
  rep.perturbations = perturbations;
  rep.epsilon = eps;
  rep.base_action = action(pm, sol.u);
  Rng rng = stream_rng(seed, 0xc1);
  for (int p = 0; p < perturbations; ++p) {
    Matrix coeff(d, 3);
    for (int m = 0; m < 3; ++m) coeff.col(m) = sample_box(rng, d, -1, 1) / (m + 1.0);
    std::vector<Vector> plus(g.nodes()), minus(g.nodes());
    for (std::size_t k = 0; k < g.nodes(); ++k) {
      Vector eta = Vector::Zero(d);
      for (int m = 0; m < 3; ++m) eta += coeff.col(m) * std::sin((m + 1) * M_PI * g.node(k) / T);
      if (k == 0 || k + 1 == g.nodes()) eta.setZero();
      plus[k] = sol.u[k] + eps * eta;
      minus[k] = sol.u[k] - eps * eta;
    }
    const double ap = action(pm, Trajectory(g, plus));
    const double am = action(pm, Trajectory(g, minus));
    rep.max_first_order = std::max(rep.max_first_order, std::abs(ap - am) / 2.0);
    rep.max_second_order = std::max(rep.max_second_order, std::abs(ap + am - 2.0 * rep.base_action) / 2.0);
  }
  return rep;
}

Vector master_field(const CostModel& model, const SimplexVec& theta, double t, double T, int steps,
                    const MfgOptions& opts) {
  if (t > T) throw InvalidArgument("master_field: t must not exceed T");
  if (t == T) return model.psi(theta.vec());
  const MfgSolution sol = solve_mfg(model, theta, TimeGrid(T - t, steps), opts);
  return sol.u.front();
}

Matrix master_field_tangent_jacobian(const CostModel& model, const SimplexVec& theta, double t, double T, int steps,
                                     double fd_step, const MfgOptions& opts) {
  const int d = model.dim();
  std::vector<Vector> dU(d - 1);
  for (int a = 0; a + 1 < d; ++a) {
    Vector dir = Vector::Zero(d);
    dir(a) = 1.0;
    dir(d - 1) = -1.0;
    const Vector Up = master_field(model, SimplexVec(Vector(theta.vec() + fd_step * dir)), t, T, steps, opts);
    const Vector Um = master_field(model, SimplexVec(Vector(theta.vec() - fd_step * dir)), t, T, steps, opts);
    dU[a] = (Up - Um) / (2.0 * fd_step);
  }
  Matrix B(d - 1, d - 1);
  for (int a = 0; a + 1 < d; ++a) {
    for (int b = 0; b + 1 < d; ++b) B(a, b) = dU[a](b) - dU[a](d - 1);
  }
  return B;
}

PlanningResult solve_planning(const CostModel& model, const SimplexVec& theta0, const SimplexVec& target, double T,
                              const PlanningOptions& opts, const Vector* guess) {
  const int d = model.dim();
  if (target.size() != d || theta0.size() != d) throw InvalidArgument("solve_planning: dimension mismatch");
  if ((target.vec().array() <= 0.0).any()) throw InvalidArgument("solve_planning: target must lie in the simplex interior");
  const TimeGrid grid(T, opts.steps);

  auto psi_of = [&](const Vector& x) {
    Vector p = Vector::Zero(d);
    p.head(d - 1) = x;
    return p;
  };
  // Terminal distribution for gauge-fixed terminal value x; null on solver failure.
  auto run = [&](const Vector& x, MfgSolution* keep) -> std::optional<Vector> {
    try {
      MfgSolution s = solve_mfg(model.with_terminal(VectorField::constant(psi_of(x))), theta0, grid, opts.mfg);
      Vector end = s.theta.back();
      if (keep != nullptr) *keep = std::move(s);
      return end;
    } catch (const ConvergenceError&) {
      return std::nullopt;
    }
  };

  Vector x = Vector::Zero(d - 1);
  if (guess != nullptr) {
    if (guess->size() != d) throw InvalidArgument("solve_planning: guess must have d entries");
    x = (guess->array() - (*guess)(d - 1)).head(d - 1);
  }
  std::vector<double> history;
  MfgSolution best = solve_mfg(model.with_terminal(VectorField::constant(psi_of(x))), theta0, grid, opts.mfg);
  Vector end = best.theta.back();
  double gap = max_norm(Vector(end - target.vec()));
  history.push_back(gap);
  int it = 0;
  while (gap > opts.tol) {
    if (it >= opts.max_iter) {
      throw PlanningError("solve_planning: no convergence after " + std::to_string(opts.max_iter) + " iterations",
                          history, gap);
    }
    ++it;
    Matrix J(d - 1, d - 1);
    for (int c = 0; c + 1 < d; ++c) {
      Vector xp = x, xm = x;
      xp(c) += opts.fd_step;
      xm(c) -= opts.fd_step;
      const auto ep = run(xp, nullptr), em = run(xm, nullptr);
      if (!ep || !em) throw PlanningError("solve_planning: equilibrium solve failed near psi_hat", history, gap);
      J.col(c) = (ep->head(d - 1) - em->head(d - 1)) / (2.0 * opts.fd_step);
    }
    const Vector r = end.head(d - 1) - target.vec().head(d - 1);
    const Vector dx = J.colPivHouseholderQr().solve(Vector(-r));
    bool accepted = false;
    double step = 1.0;
    for (int ls = 0; ls < 30 && dx.allFinite(); ++ls) {
      const Vector trial = x + step * dx;
      if (max_norm(trial) > opts.psi_bound) {
        step *= 0.5;
        continue;
      }
      MfgSolution s = best;
      const auto e = run(trial, &s);
      if (e) {
        const double g = max_norm(Vector(*e - target.vec()));
        if (g < gap) {
          x = trial;
          end = *e;
          gap = g;
          best = std::move(s);
          accepted = true;
          break;
        }
      }
      step *= 0.5;
    }
    history.push_back(gap);
    if (!accepted) {
      throw PlanningError("solve_planning: shooting stagnated (target may be unreachable); best gap " +
                              std::to_string(gap),
                          history, gap);
    }
  }
  return PlanningResult{std::move(best), psi_of(x), it, gap};
}

}  // namespace mfg
