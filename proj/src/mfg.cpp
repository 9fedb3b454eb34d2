#include "mfg/mfg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mfg/ode.hpp"
#include "mfg/parallel.hpp"
#include "mfg/random.hpp"
#include "mfg/stats.hpp"

namespace mfg {

namespace {

constexpr double kZ99 = 2.5758293035489004;

// Rows alpha*(Delta_j u, theta, j) for every state j.
Matrix control_matrix(const CostModel& model, const Vector& u, const Vector& theta) {
  const int d = model.dim();
  Matrix rates(d, d);
  for (int j = 0; j < d; ++j) rates.row(j) = solve_control(model, u, theta, j).alpha.transpose();
  return rates;
}

void repair_simplex(Vector& theta) { theta = SimplexVec::projected(theta).vec(); }

// Node slopes by second-order differences (one-sided at the ends).
Trajectory with_difference_slopes(const Trajectory& y) {
  const std::size_t n = y.size();
  const double h = y.grid().step();
  std::vector<Vector> s(n);
  for (std::size_t k = 0; k < n; ++k) {
    if (n < 3) {
      s[k] = (y[n - 1] - y[0]) / (h * static_cast<double>(n - 1));
    } else if (k == 0) {
      s[k] = (-3.0 * y[0] + 4.0 * y[1] - y[2]) / (2.0 * h);
    } else if (k + 1 == n) {
      s[k] = (3.0 * y[k] - 4.0 * y[k - 1] + y[k - 2]) / (2.0 * h);
    } else {
      s[k] = (y[k + 1] - y[k - 1]) / (2.0 * h);
    }
  }
  return Trajectory(y.grid(), y.values(), std::move(s));
}

}  // namespace

Trajectory solve_hj(const CostModel& model, const Trajectory& theta) {
  const int d = model.dim();
  if (theta.front().size() != d) throw InvalidArgument("solve_hj: dimension mismatch");
  const Vector terminal = model.psi(theta.back());
  auto field = [&](double t, const Vector& u) {
    const Vector th = theta.at(t);
    Vector du(d);
    for (int i = 0; i < d; ++i) du(i) = -solve_control(model, u, th, i).h;
    return du;
  };
  return integrate(field, terminal, theta.grid(), Direction::Backward);
}

Trajectory solve_kolmogorov(const ControlField& control, const SimplexVec& theta0, const TimeGrid& grid) {
  const Eigen::Index d = theta0.size();
  const double half = 0.5 * grid.step();
  const std::size_t samples = 2 * static_cast<std::size_t>(grid.steps()) + 1;
  std::vector<Matrix> table(samples, Matrix(d, d));
  for (std::size_t s = 0; s < samples; ++s) {
    const double t = s + 1 == samples ? grid.horizon() : half * static_cast<double>(s);
    for (int i = 0; i < d; ++i) {
      const Vector row = control(i, t);
      if (row.size() != d) throw InvalidArgument("solve_kolmogorov: control row has wrong length");
      double off = 0.0;
      for (Eigen::Index j = 0; j < d; ++j) {
        if (j == i) continue;
        if (!std::isfinite(row(j)) || row(j) < 0.0) {
          throw InvalidArgument("solve_kolmogorov: negative or non-finite rate " + std::to_string(i) + "->" +
                                std::to_string(j) + " at t=" + std::to_string(t));
        }
        table[s](i, j) = row(j);
        off += row(j);
      }
      table[s](i, i) = -off;
    }
  }
  auto field = [&](double t, const Vector& th) -> Vector {
    const auto s = static_cast<std::size_t>(std::clamp<long>(std::lround(t / half), 0, static_cast<long>(samples) - 1));
    return table[s].transpose() * th;
  };
  return integrate(field, theta0.vec(), grid, Direction::Forward, repair_simplex);
}

ControlField equilibrium_control(const CostModel& model, const Trajectory& u, const Trajectory& theta) {
  return [&model, &u, &theta](int i, double t) {
    return solve_control(model, u.at(t), theta.at(t), i).alpha;
  };
}

std::pair<Trajectory, Trajectory> best_response_flow(const CostModel& model, const Trajectory& theta,
                                                     const SimplexVec& theta0) {
  Trajectory u = solve_hj(model, theta);
  Trajectory next = solve_kolmogorov(equilibrium_control(model, u, theta), theta0, theta.grid());
  return {std::move(next), std::move(u)};
}

double mfg_residual(const CostModel& model, const Trajectory& theta, const Trajectory& u) {
  const std::size_t n = theta.size();
  if (u.size() != n) throw InvalidArgument("mfg_residual: node count mismatch");
  const double h = theta.grid().step();
  const bool five = n >= 5;
  const std::size_t lo = five ? 2 : 1;
  if (n < 3) return 0.0;
  double worst = 0.0;
  for (std::size_t k = lo; k + lo < n; ++k) {
    Vector dth, du;
    if (five) {
      dth = (-theta[k + 2] + 8.0 * theta[k + 1] - 8.0 * theta[k - 1] + theta[k - 2]) / (12.0 * h);
      du = (-u[k + 2] + 8.0 * u[k + 1] - 8.0 * u[k - 1] + u[k - 2]) / (12.0 * h);
    } else {
      dth = (theta[k + 1] - theta[k - 1]) / (2.0 * h);
      du = (u[k + 1] - u[k - 1]) / (2.0 * h);
    }
    const Matrix rates = control_matrix(model, u[k], theta[k]);
    Vector hv(model.dim());
    for (int i = 0; i < model.dim(); ++i) hv(i) = solve_control(model, u[k], theta[k], i).h;
    worst = std::max(worst, max_norm(Vector(dth - rates.transpose() * theta[k])));
    worst = std::max(worst, max_norm(Vector(du + hv)));
  }
  return worst;
}

MfgSolution solve_mfg(const CostModel& model, const SimplexVec& theta0, const TimeGrid& grid, const MfgOptions& opts,
                      const Trajectory* initial) {
  if (theta0.size() != model.dim()) throw InvalidArgument("solve_mfg: theta0 dimension mismatch");
  if (!(opts.damping > 0.0 && opts.damping <= 1.0)) throw InvalidArgument("solve_mfg: damping must be in (0, 1]");

  Trajectory theta = initial != nullptr
                         ? *initial
                         : Trajectory(grid, std::vector<Vector>(grid.nodes(), theta0.vec()),
                                      std::vector<Vector>(grid.nodes(), Vector::Zero(model.dim())));
  if (!(theta.grid() == grid)) throw InvalidArgument("solve_mfg: initial trajectory grid mismatch");
  // Iterates are blended with integrator output, which carries slopes; a seed
  // without them would silently drop Hermite interpolation for good.
  if (!theta.has_slopes()) theta = with_difference_slopes(theta);

  std::vector<double> history;
  double omega = opts.damping;
  double prev = std::numeric_limits<double>::infinity();
  for (int it = 1; it <= opts.max_iter; ++it) {
    auto [next, u] = best_response_flow(model, theta, theta0);
    const double gap = sup_distance(next, theta);
    history.push_back(gap);
    if (gap <= opts.tol) {
      MfgSolution sol{std::move(next), std::move(u), 0.0, it, omega, std::move(history)};
      sol.u = solve_hj(model, sol.theta);
      sol.residual = mfg_residual(model, sol.theta, sol.u);
      return sol;
    }
    if (opts.adaptive_damping && gap >= prev) omega = std::max(0.5 * omega, opts.min_damping);
    prev = gap;
    theta = blend(theta, next, omega);
  }
  const std::string msg = "fixed point did not converge after " + std::to_string(opts.max_iter) +
                          " iterations (last gap " + std::to_string(history.back()) + ")";
  throw FixedPointError(msg, std::move(history));
}

MaxPrincipleCheck check_max_principle(const Trajectory& u, double h0_bound) {
  MaxPrincipleCheck c;
  c.h0_bound = h0_bound;
  c.worst_margin = std::numeric_limits<double>::infinity();
  const double terminal = max_norm(u.back());
  const double T = u.grid().horizon();
  for (std::size_t k = 0; k < u.size(); ++k) {
    const double bound = terminal + 2.0 * h0_bound * (T - u.grid().node(k));
    c.worst_margin = std::min(c.worst_margin, bound - max_norm(u[k]));
  }
  c.holds = c.worst_margin >= -1e-12;
  return c;
}

// ---------------------------------------------------------------- verification

namespace {

// A Markov policy of a single player given by node values; rates and running
// costs are linear in time between nodes.
struct NodePolicy {
  TimeGrid grid;
  std::vector<Matrix> rates;  // per node, row i = rates out of state i
  std::vector<Vector> cost;   // per node, running cost in each state
  std::vector<Vector> cumulative;  // per node, integral of cost from 0

  double integral(int i, double t) const {
    const auto [k, s] = grid.locate(t);
    const double h = grid.step();
    const double c0 = cost[k](i);
    const double c1 = cost[k + 1](i);
    return cumulative[k](i) + h * (s * c0 + 0.5 * s * s * (c1 - c0));
  }
  double max_out_rate() const {
    double m = 0.0;
    for (const auto& r : rates) {
      for (Eigen::Index i = 0; i < r.rows(); ++i) m = std::max(m, -r(i, i));
    }
    return m;
  }
};

NodePolicy make_policy(const CostModel& model, const MfgSolution& sol, double perturbation) {
  const int d = model.dim();
  const TimeGrid& grid = sol.theta.grid();
  NodePolicy p{grid, {}, {}, {}};
  for (std::size_t k = 0; k < grid.nodes(); ++k) {
    Matrix rates(d, d);
    Vector cost(d);
    for (int i = 0; i < d; ++i) {
      ControlSolution cs = solve_control(model, sol.u[k], sol.theta[k], i);
      Vector a = cs.alpha;
      if (perturbation != 0.0) {
        const int j = (i + 1) % d;
        a(j) += perturbation;
        a(i) -= perturbation;
        cost(i) = model.running().value(i, sol.theta[k], a);
      } else {
        cost(i) = cs.h - a.dot(delta(i, sol.u[k]));
      }
      rates.row(i) = a.transpose();
    }
    p.rates.push_back(std::move(rates));
    p.cost.push_back(std::move(cost));
  }
  p.cumulative.assign(grid.nodes(), Vector::Zero(d));
  for (std::size_t k = 0; k + 1 < grid.nodes(); ++k) {
    p.cumulative[k + 1] = p.cumulative[k] + 0.5 * grid.step() * (p.cost[k] + p.cost[k + 1]);
  }
  return p;
}

double simulate_cost(const NodePolicy& p, const Vector& terminal, int start, double bound, Rng& rng) {
  const double T = p.grid.horizon();
  int i = start;
  double t = 0.0;
  double total = 0.0;
  if (bound <= 0.0) return p.integral(i, T) - p.integral(i, 0.0) + terminal(i);
  std::exponential_distribution<double> wait(bound);
  const int d = static_cast<int>(terminal.size());
  while (true) {
    const double next = t + wait(rng);
    if (next >= T) {
      total += p.integral(i, T) - p.integral(i, t);
      break;
    }
    total += p.integral(i, next) - p.integral(i, t);
    t = next;
    const auto [k, s] = p.grid.locate(t);
    const double draw = uniform01(rng) * bound;
    double acc = 0.0;
    for (int j = 0; j < d; ++j) {
      if (j == i) continue;
      acc += (1.0 - s) * p.rates[k](i, j) + s * p.rates[k + 1](i, j);
      if (acc > bound) throw Error("verify_value_by_simulation: rate bound exceeded");
      if (draw < acc) {
        i = j;
        break;
      }
    }
  }
  return total + terminal(i);
}

}  // namespace

VerificationReport verify_value_by_simulation(const CostModel& model, const MfgSolution& solution, int paths,
                                              std::uint64_t seed, double perturbation, int threads) {
  if (paths < 2) throw InvalidArgument("verify_value_by_simulation: need at least two paths");
  const int d = model.dim();
  VerificationReport rep;
  rep.paths = paths;
  rep.value = solution.u.front();
  rep.perturbation = perturbation;
  const Vector terminal = model.psi(solution.theta.back());

  const NodePolicy optimal = make_policy(model, solution, 0.0);
  const NodePolicy perturbed = make_policy(model, solution, perturbation);
  const double bound_opt = 1.05 * optimal.max_out_rate();
  const double bound_pert = 1.05 * perturbed.max_out_rate();
  rep.rate_bound = std::max(bound_opt, bound_pert);

  auto run = [&](const NodePolicy& policy, double bound, int start, std::uint64_t tag) {
    std::vector<double> costs(static_cast<std::size_t>(paths));
    parallel_for(costs.size(), threads, [&](std::size_t p) {
      Rng rng = stream_rng(seed, (tag * d + start) * static_cast<std::uint64_t>(paths) + p);
      costs[p] = simulate_cost(policy, terminal, start, bound, rng);
    });
    const MeanEstimate e = mean_and_error(costs);
    return SimulationEstimate{e.mean, kZ99 * e.std_error};
  };
  for (int i = 0; i < d; ++i) {
    rep.optimal.push_back(run(optimal, bound_opt, i, 0));
    rep.perturbed.push_back(run(perturbed, bound_pert, i, 1));
  }
  return rep;
}

// ---------------------------------------------------------------- stationary

StationaryResidual stationary_residual(const CostModel& model, const StationaryTriple& s) {
  const int d = model.dim();
  const Matrix rates = control_matrix(model, s.u_bar, s.theta_bar);
  StationaryResidual r;
  r.kolmogorov = max_norm(Vector(rates.transpose() * s.theta_bar));
  for (int i = 0; i < d; ++i) {
    r.hamilton_jacobi = std::max(r.hamilton_jacobi, std::abs(hamiltonian(model, s.u_bar, s.theta_bar, i) - s.kappa));
  }
  return r;
}

namespace {

// x = [theta (d), u^0..u^{d-2}, kappa]; u^{d-1} = 0.
StationaryTriple unpack(const Vector& x, int d) {
  StationaryTriple s;
  s.theta_bar = x.head(d);
  s.u_bar = Vector::Zero(d);
  s.u_bar.head(d - 1) = x.segment(d, d - 1);
  s.kappa = x(2 * d - 1);
  return s;
}

Vector stationary_equations(const CostModel& model, const Vector& x) {
  const int d = model.dim();
  const StationaryTriple s = unpack(x, d);
  const Matrix rates = control_matrix(model, s.u_bar, s.theta_bar);
  const Vector flow = rates.transpose() * s.theta_bar;
  Vector F(2 * d);
  F.head(d - 1) = flow.head(d - 1);
  F(d - 1) = s.theta_bar.sum() - 1.0;
  for (int i = 0; i < d; ++i) F(d + i) = hamiltonian(model, s.u_bar, s.theta_bar, i) - s.kappa;
  return F;
}

}  // namespace

StationaryTriple solve_stationary(const CostModel& model, const StationaryTriple& guess, const StationaryOptions& opts) {
  const int d = model.dim();
  if (guess.theta_bar.size() != d || guess.u_bar.size() != d) throw InvalidArgument("solve_stationary: guess dimension");
  Vector x(2 * d);
  x.head(d) = guess.theta_bar;
  x.segment(d, d - 1) = (guess.u_bar.array() - guess.u_bar(d - 1)).head(d - 1);
  x(2 * d - 1) = guess.kappa;

  std::vector<double> history;
  Vector F = stationary_equations(model, x);
  double norm = max_norm(F);
  history.push_back(norm);
  for (int it = 0; it < opts.max_iter && norm > 1e-14; ++it) {
    Matrix J(2 * d, 2 * d);
    for (int c = 0; c < 2 * d; ++c) {
      Vector xp = x, xm = x;
      const double h = opts.fd_step * (1.0 + std::abs(x(c)));
      xp(c) += h;
      xm(c) -= h;
      J.col(c) = (stationary_equations(model, xp) - stationary_equations(model, xm)) / (2.0 * h);
    }
    const Vector dx = J.colPivHouseholderQr().solve(-F);
    if (!dx.allFinite()) break;
    double step = 1.0;
    bool accepted = false;
    for (int ls = 0; ls < 40; ++ls) {
      const Vector trial = x + step * dx;
      const Vector Ft = stationary_equations(model, trial);
      if (Ft.allFinite() && max_norm(Ft) < (1.0 - 1e-4 * step) * norm) {
        x = trial;
        F = Ft;
        norm = max_norm(Ft);
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    history.push_back(norm);
    if (!accepted) break;
  }
  StationaryTriple s = unpack(x, d);
  if (!(norm <= opts.tol)) {
    throw ConvergenceError("solve_stationary: Newton stagnated at residual " + std::to_string(norm), history);
  }
  if ((s.theta_bar.array() < -SimplexVec::kClipTolerance).any()) {
    throw ConvergenceError("solve_stationary: root lies outside the simplex", history);
  }
  s.theta_bar = SimplexVec::projected(s.theta_bar).vec();
  return s;
}

// ---------------------------------------------------------------- trend

TrendReport trend_experiment(const CostModel& model, const SimplexVec& theta0, const VectorField& psi,
                             const std::vector<double>& T_list, const StationaryTriple& stationary, int steps,
                             const MfgOptions& opts, int threads) {
  if (T_list.empty()) throw InvalidArgument("trend_experiment: empty horizon list");
  const CostModel m = model.with_terminal(psi);
  TrendReport rep;
  rep.rows.resize(T_list.size());
  parallel_for(T_list.size(), threads, [&](std::size_t r) {
    const double T = T_list[r];
    const MfgSolution sol = solve_mfg(m, theta0, TimeGrid(2.0 * T, steps), opts);
    TrendRow row;
    row.T = T;
    row.theta_gap = max_norm(Vector(sol.theta.at(T) - stationary.theta_bar));
    row.u_gap = sharp_norm(Vector(sol.u.at(T) - stationary.u_bar));
    row.iterations = sol.iterations;
    rep.rows[r] = row;
  });
  for (std::size_t r = 2; r < rep.rows.size(); ++r) {
    rep.theta_nonincreasing = rep.theta_nonincreasing && rep.rows[r].theta_gap <= rep.rows[r - 1].theta_gap;
    rep.u_nonincreasing = rep.u_nonincreasing && rep.rows[r].u_gap <= rep.rows[r - 1].u_gap;
  }
  if (rep.rows.size() >= 2) {
    const std::size_t first = rep.rows.size() >= 3 ? rep.rows.size() - 3 : 0;
    std::vector<double> Ts, lt, lu;
    for (std::size_t r = first; r < rep.rows.size(); ++r) {
      Ts.push_back(rep.rows[r].T);
      lt.push_back(std::log(std::max(rep.rows[r].theta_gap, 1e-300)));
      lu.push_back(std::log(std::max(rep.rows[r].u_gap, 1e-300)));
    }
    rep.theta_rate = -fit_line(Ts, lt).slope;
    rep.u_rate = -fit_line(Ts, lu).slope;
  }
  return rep;
}

// ---------------------------------------------------------------- monotonicity

MonotonicityReport monotonicity_audit(const CostModel& model, int samples, std::uint64_t seed) {
  if (samples < 1) throw InvalidArgument("monotonicity_audit: samples must be positive");
  const int d = model.dim();
  MonotonicityReport r;
  r.samples = samples;
  r.psi_min = std::numeric_limits<double>::infinity();
  r.concavity_max = -std::numeric_limits<double>::infinity();
  r.monot_max = -std::numeric_limits<double>::infinity();
  r.gamma_state.assign(d, std::numeric_limits<double>::infinity());
  r.gamma = std::numeric_limits<double>::infinity();
  Rng rng = stream_rng(seed, 0x307);

  auto hvec = [&](const Vector& z, const Vector& th) {
    Vector h(d);
    for (int i = 0; i < d; ++i) h(i) = hamiltonian(model, z, th, i);
    return h;
  };
  for (int s = 0; s < samples; ++s) {
    const Vector th = sample_simplex(rng, d);
    const Vector tt = sample_simplex(rng, d);
    const Vector z = sample_box(rng, d, -2.0, 2.0);
    const Vector w = sample_box(rng, d, -2.0, 2.0);

    r.psi_min = std::min(r.psi_min, (th - tt).dot(model.psi(th) - model.psi(tt)));

    for (int i = 0; i < d; ++i) {
      const ControlSolution at_w = solve_control(model, w, th, i);
      const Vector dz = delta(i, z) - delta(i, w);
      const double lhs = hamiltonian(model, z, th, i) - at_w.h - at_w.alpha.dot(dz);
      r.concavity_max = std::max(r.concavity_max, lhs);
      const double n2 = dz.squaredNorm();
      if (n2 > 0.0) r.gamma_state[i] = std::min(r.gamma_state[i], -lhs / n2);
    }

    const double lhs = th.dot(hvec(z, tt) - hvec(z, th)) + tt.dot(hvec(w, th) - hvec(w, tt));
    r.monot_max = std::max(r.monot_max, lhs);
    const double n2 = (th - tt).squaredNorm();
    if (n2 > 0.0) r.gamma = std::min(r.gamma, -lhs / n2);
  }
  r.psi_ok = r.psi_min >= -1e-12;
  r.concavity_ok = r.concavity_max <= 1e-12;
  r.monot_ok = r.monot_max <= 1e-12 && r.gamma > 0.0;
  return r;
}

}  // namespace mfg
