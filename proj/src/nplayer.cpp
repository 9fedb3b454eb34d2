#include "mfg/nplayer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mfg/ode.hpp"
#include "mfg/parallel.hpp"
#include "mfg/random.hpp"

namespace mfg {

NField::NField(StateIndexer indexer, TimeGrid grid, Matrix values)
    : indexer_(std::move(indexer)), grid_(std::move(grid)), values_(std::move(values)) {
  if (values_.rows() != static_cast<Eigen::Index>(indexer_.size()) * indexer_.dim() ||
      values_.cols() != static_cast<Eigen::Index>(grid_.nodes())) {
    throw InvalidArgument("NField: value array has the wrong shape");
  }
}

Vector NField::slice(double t) const {
  const auto [k, s] = grid_.locate(t);
  if (s == 0.0) return values_.col(k);
  return (1.0 - s) * values_.col(k) + s * values_.col(k + 1);
}

namespace {

// alpha*(Delta_k u_m, m/N, k) in row m d + k, and h in the same slot.
struct ControlTable {
  Matrix alpha;
  Vector h;
};

ControlTable control_table(const CostModel& model, const StateIndexer& idx, const std::vector<Vector>& frac,
                           const Vector& U) {
  const int d = idx.dim();
  const std::size_t S = idx.size();
  ControlTable t{Matrix(S * d, d), Vector(S * d)};
  for (std::size_t m = 0; m < S; ++m) {
    const Vector u = U.segment(m * d, d);
    for (int k = 0; k < d; ++k) {
      const ControlSolution cs = solve_control(model, u, frac[m], k);
      t.alpha.row(m * d + k) = cs.alpha.transpose();
      t.h(m * d + k) = cs.h;
    }
  }
  return t;
}

std::vector<Vector> fractions(const StateIndexer& idx) {
  std::vector<Vector> f(idx.size());
  for (std::size_t s = 0; s < idx.size(); ++s) f[s] = idx.fraction(s);
  return f;
}

// Rate at which an opponent in state k moves to j when the reference player
// is in state i and the others occupy n (state s): n_k alpha*_j(Delta_k u_{n+e_ik}, ., k).
double opponent_rate(const StateIndexer& idx, const Matrix& alpha, std::size_t s, int i, int k, int j) {
  const int nk = idx.state(s)[k];
  if (nk == 0) return 0.0;
  const auto view = idx.neighbor(s, i, k);  // n + e_i - e_k, the opponent's view
  return nk * alpha(static_cast<Eigen::Index>(view) * idx.dim() + k, j);
}

}  // namespace

NField solve_equilibrium(const CostModel& model, int N, const TimeGrid& grid, std::uint64_t cap) {
  const int d = model.dim();
  StateIndexer idx = enumerate_states(d, N, cap);
  const std::size_t S = idx.size();
  const std::vector<Vector> frac = fractions(idx);

  Vector terminal(S * d);
  for (std::size_t s = 0; s < S; ++s) terminal.segment(s * d, d) = model.psi(frac[s]);

  auto field = [&](double, const Vector& U) {
    const ControlTable ct = control_table(model, idx, frac, U);
    Vector dU(S * d);
    for (std::size_t s = 0; s < S; ++s) {
      for (int i = 0; i < d; ++i) {
        const double ui = U(s * d + i);
        double acc = ct.h(s * d + i);
        for (int k = 0; k < d; ++k) {
          if (idx.state(s)[k] == 0) continue;
          for (int j = 0; j < d; ++j) {
            if (j == k) continue;
            const double g = opponent_rate(idx, ct.alpha, s, i, k, j);
            if (g == 0.0) continue;
            const auto nb = static_cast<std::size_t>(idx.neighbor(s, j, k));
            acc += g * (U(nb * d + i) - ui);
          }
        }
        dU(s * d + i) = -acc;
      }
    }
    return dU;
  };
  const Trajectory traj = integrate(field, terminal, grid, Direction::Backward);
  Matrix values(S * d, grid.nodes());
  for (std::size_t k = 0; k < grid.nodes(); ++k) values.col(k) = traj[k];
  return NField(std::move(idx), grid, std::move(values));
}

std::vector<double> gradient_profile(const NField& field) {
  const StateIndexer& idx = field.indexer();
  const int d = field.dim();
  std::vector<double> out(field.grid().nodes(), 0.0);
  for (std::size_t k = 0; k < out.size(); ++k) {
    const auto col = field.values().col(k);
    double m = 0.0;
    for (std::size_t s = 0; s < idx.size(); ++s) {
      for (int r = 0; r < d; ++r) {
        for (int q = 0; q < d; ++q) {
          if (r == q) continue;
          const auto nb = idx.neighbor(s, r, q);  // n + e_r - e_q
          if (nb < 0) continue;
          for (int i = 0; i < d; ++i) {
            m = std::max(m, std::abs(col(static_cast<Eigen::Index>(nb) * d + i) - col(s * d + i)));
          }
        }
      }
    }
    out[k] = m;
  }
  return out;
}

MaxPrincipleCheck check_max_principle(const NField& field, double h0_bound) {
  MaxPrincipleCheck c;
  c.h0_bound = h0_bound;
  c.worst_margin = std::numeric_limits<double>::infinity();
  const TimeGrid& g = field.grid();
  const double terminal = max_norm(field.values().col(g.steps()));
  for (std::size_t k = 0; k < g.nodes(); ++k) {
    const double bound = terminal + 2.0 * h0_bound * (g.horizon() - g.node(k));
    c.worst_margin = std::min(c.worst_margin, bound - max_norm(field.values().col(k)));
  }
  c.holds = c.worst_margin >= -1e-12;
  return c;
}

// ---------------------------------------------------------------- joint chain

JointChain::JointChain(const CostModel& model, const NField& field) : field_(&field) {
  if (model.dim() != field.dim()) throw InvalidArgument("JointChain: dimension mismatch");
  const StateIndexer& idx = field.indexer();
  const int d = field.dim();
  const std::size_t S = idx.size();
  const std::vector<Vector> frac = fractions(idx);

  // Pattern: reference moves (j, s), then opponent moves (i, n + e_jk).
  struct Slot {
    int kind;  // 0 reference, 1 opponent
    int i, k, j;
    std::size_t s;
  };
  std::vector<Slot> slots;
  first_.push_back(0);
  for (std::size_t s = 0; s < S; ++s) {
    for (int i = 0; i < d; ++i) {
      for (int j = 0; j < d; ++j) {
        if (j == i) continue;
        slots.push_back({0, i, i, j, s});
        target_.push_back(s * d + j);
      }
      for (int k = 0; k < d; ++k) {
        if (idx.state(s)[k] == 0) continue;
        for (int j = 0; j < d; ++j) {
          if (j == k) continue;
          slots.push_back({1, i, k, j, s});
          target_.push_back(static_cast<std::size_t>(idx.neighbor(s, j, k)) * d + i);
        }
      }
      first_.push_back(target_.size());
    }
  }

  const std::size_t nodes = field.grid().nodes();
  rates_.resize(static_cast<Eigen::Index>(slots.size()), static_cast<Eigen::Index>(nodes));
  for (std::size_t n = 0; n < nodes; ++n) {
    const ControlTable ct = control_table(model, idx, frac, field.values().col(n));
    for (std::size_t e = 0; e < slots.size(); ++e) {
      const Slot& sl = slots[e];
      const double r = sl.kind == 0 ? ct.alpha(sl.s * d + sl.i, sl.j) : opponent_rate(idx, ct.alpha, sl.s, sl.i, sl.k, sl.j);
      if (!(r >= 0.0) || !std::isfinite(r)) throw Error("JointChain: inadmissible rate");
      rates_(e, n) = r;
    }
  }
  max_rate_ = rates_.size() > 0 ? rates_.maxCoeff() : 0.0;
}

double JointChain::rate_at(std::size_t e, double t) const {
  const auto [k, s] = field_->grid().locate(t);
  if (s == 0.0) return rates_(e, k);
  return (1.0 - s) * rates_(e, k) + s * rates_(e, k + 1);
}

double JointChain::intensity_bound() const {
  // Opponent rates carry the factor n_k; divide it back out to get per-player rates.
  double per_player = 0.0;
  const StateIndexer& idx = field_->indexer();
  const int d = field_->dim();
  for (std::size_t x = 0; x + 1 < first_.size(); ++x) {
    const std::size_t s = x / d;
    for (std::size_t e = first_[x]; e < first_[x + 1]; ++e) {
      const std::size_t y = target_[e];
      double scale = 1.0;
      if (y / d != s) {
        // Opponent move: find the source coordinate k (the one that decreased).
        const CountState& a = idx.state(s);
        const CountState& b = idx.state(y / d);
        for (int k = 0; k < d; ++k) {
          if (b[k] < a[k]) scale = a[k];
        }
      }
      per_player = std::max(per_player, rates_.row(e).maxCoeff() / scale);
    }
  }
  return 1.05 * (field_->players() + 1) * d * per_player;
}

Vector JointChain::initial_law(const SimplexVec& theta0) const {
  const StateIndexer& idx = field_->indexer();
  const int d = field_->dim();
  const int N = field_->players();
  if (theta0.size() != d) throw InvalidArgument("initial_law: dimension mismatch");
  Vector p(static_cast<Eigen::Index>(idx.size()) * d);
  for (std::size_t s = 0; s < idx.size(); ++s) {
    const CountState& n = idx.state(s);
    double logp = std::lgamma(N + 1.0);
    bool zero = false;
    for (int l = 0; l < d; ++l) {
      logp -= std::lgamma(n[l] + 1.0);
      if (n[l] > 0) {
        if (theta0(l) == 0.0) zero = true;
        else logp += n[l] * std::log(theta0(l));
      }
    }
    const double mult = zero ? 0.0 : std::exp(logp);
    for (int i = 0; i < d; ++i) p(s * d + i) = theta0(i) * mult;
  }
  return p;
}

JointLaw propagate_exact_law(const CostModel& model, const NField& field, const SimplexVec& theta0) {
  const JointChain chain(model, field);
  return propagate_exact_law(chain, theta0);
}

JointLaw propagate_exact_law(const JointChain& chain, const SimplexVec& theta0) {
  const TimeGrid& grid = chain.field().grid();
  const std::size_t X = chain.size();
  const std::size_t E = chain.transitions();
  Vector r(E);
  auto master = [&](double t, const Vector& p) {
    for (std::size_t e = 0; e < E; ++e) r(e) = chain.rate_at(e, t);
    Vector dp = Vector::Zero(X);
    for (std::size_t x = 0; x < X; ++x) {
      const double px = p(x);
      if (px == 0.0) continue;
      for (std::size_t e = chain.first(x); e < chain.first(x + 1); ++e) {
        const double flow = r(e) * px;
        dp(x) -= flow;
        dp(chain.target(e)) += flow;
      }
    }
    return dp;
  };
  auto repair = [](Vector& p) {
    const double lo = p.minCoeff();
    if (lo < -1e-10) throw Error("propagate_exact_law: negative probability " + std::to_string(lo) + " (step too coarse)");
    if (lo < 0.0) {
      const double mass = p.sum();
      p = p.cwiseMax(0.0);
      p *= mass / p.sum();
    }
  };
  const Trajectory traj = integrate(master, chain.initial_law(theta0), grid, Direction::Forward, repair);
  JointLaw law{grid, Matrix(X, grid.nodes())};
  for (std::size_t k = 0; k < grid.nodes(); ++k) law.probabilities.col(k) = traj[k];
  return law;
}

// ---------------------------------------------------------------- paths

std::uint32_t PathBatch::state_at(std::size_t p, double t) const {
  const auto& ev = events[p];
  auto it = std::upper_bound(ev.begin(), ev.end(), t, [](double v, const PathEvent& e) { return v < e.time; });
  return it == ev.begin() ? start[p] : std::prev(it)->state;
}

PathBatch simulate_paths(const JointChain& chain, const SimplexVec& theta0, int n_paths, std::uint64_t seed,
                         int threads) {
  if (n_paths < 1) throw InvalidArgument("simulate_paths: need at least one path");
  const NField& field = chain.field();
  const StateIndexer& idx = field.indexer();
  const int d = field.dim();
  const int N = field.players();
  const double T = field.grid().horizon();
  const double bound = chain.intensity_bound();
  if (!std::isfinite(bound)) throw Error("simulate_paths: intensity bound overflow");

  PathBatch batch;
  batch.seed = seed;
  batch.intensity_bound = bound;
  batch.start.resize(n_paths);
  batch.events.resize(n_paths);

  parallel_for(static_cast<std::size_t>(n_paths), threads, [&](std::size_t p) {
    Rng rng = stream_rng(seed, p);
    // Reference state ~ theta0, occupancy ~ Multinomial(N, theta0) by sequential binomials.
    auto categorical = [&]() {
      const double u = uniform01(rng);
      double acc = 0.0;
      for (int l = 0; l < d; ++l) {
        acc += theta0(l);
        if (u < acc) return l;
      }
      return d - 1;
    };
    const int i0 = categorical();
    CountState n(d, 0);
    int left = N;
    double mass = 1.0;
    for (int l = 0; l + 1 < d; ++l) {
      const double q = mass > 0.0 ? std::clamp(theta0(l) / mass, 0.0, 1.0) : 0.0;
      n[l] = left > 0 ? std::binomial_distribution<int>(left, q)(rng) : 0;
      left -= n[l];
      mass -= theta0(l);
    }
    n[d - 1] = left;
    std::size_t x = idx.index(n) * d + i0;
    batch.start[p] = static_cast<std::uint32_t>(x);

    std::vector<PathEvent>& ev = batch.events[p];
    if (bound <= 0.0) return;
    std::exponential_distribution<double> wait(bound);
    double t = 0.0;
    while (true) {
      t += wait(rng);
      if (t >= T) break;
      const double draw = uniform01(rng) * bound;
      double acc = 0.0;
      for (std::size_t e = chain.first(x); e < chain.first(x + 1); ++e) {
        acc += chain.rate_at(e, t);
        if (draw < acc) {
          x = chain.target(e);
          ev.push_back({t, static_cast<std::uint32_t>(x)});
          break;
        }
      }
      if (acc > bound) throw Error("simulate_paths: jump intensity exceeds the thinning bound");
    }
  });
  return batch;
}

// ---------------------------------------------------------------- V, W

namespace {

void check_horizon(const NField& field, const MfgSolution& mfg) {
  if (std::abs(field.grid().horizon() - mfg.theta.grid().horizon()) > 1e-12 * field.grid().horizon()) {
    throw InvalidArgument("estimate_VW: horizon mismatch between N-player field and MFG solution");
  }
}

std::pair<Vector, Vector> mfg_at(const MfgSolution& mfg, const TimeGrid& grid, std::size_t k) {
  if (mfg.theta.grid() == grid) return {mfg.theta[k], mfg.u[k]};
  const double t = grid.node(k);
  return {mfg.theta.at(t), mfg.u.at(t)};
}

}  // namespace

VWProfile estimate_VW(const NField& field, const JointLaw& law, const MfgSolution& mfg) {
  check_horizon(field, mfg);
  if (!(law.grid == field.grid())) throw InvalidArgument("estimate_VW: law and field grids differ");
  const StateIndexer& idx = field.indexer();
  const int d = field.dim();
  const std::size_t nodes = field.grid().nodes();
  VWProfile out;
  for (std::size_t k = 0; k < nodes; ++k) {
    const auto [theta, u] = mfg_at(mfg, field.grid(), k);
    Vector V = Vector::Zero(d), W = Vector::Zero(d);
    for (std::size_t s = 0; s < idx.size(); ++s) {
      double ps = 0.0;
      for (int i = 0; i < d; ++i) ps += law.probabilities(s * d + i, k);
      if (ps == 0.0) continue;
      const Vector frac = idx.fraction(s);
      for (int l = 0; l < d; ++l) {
        const double dv = frac(l) - theta(l);
        const double dw = u(l) - field.value(k, l, s);
        V(l) += ps * dv * dv;
        W(l) += ps * dw * dw;
      }
    }
    out.times.push_back(field.grid().node(k));
    out.V.push_back(V.maxCoeff());
    out.W.push_back(W.maxCoeff());
    out.V_se.push_back(0.0);
    out.W_se.push_back(0.0);
    out.VW_se.push_back(0.0);
  }
  return out;
}

VWProfile estimate_VW(const NField& field, const PathBatch& paths, const MfgSolution& mfg, int threads) {
  check_horizon(field, mfg);
  const StateIndexer& idx = field.indexer();
  const int d = field.dim();
  const std::size_t nodes = field.grid().nodes();
  const std::size_t P = paths.size();
  if (P < 2) throw InvalidArgument("estimate_VW: need at least two paths");
  VWProfile out;
  out.times.resize(nodes);
  out.V.resize(nodes);
  out.W.resize(nodes);
  out.V_se.resize(nodes);
  out.W_se.resize(nodes);
  out.VW_se.resize(nodes);
  parallel_for(nodes, threads, [&](std::size_t k) {
    const double t = field.grid().node(k);
    const auto [theta, u] = mfg_at(mfg, field.grid(), k);
    std::vector<std::vector<double>> v(d, std::vector<double>(P)), w(d, std::vector<double>(P));
    for (std::size_t p = 0; p < P; ++p) {
      const std::size_t s = paths.state_at(p, t) / d;
      const CountState& n = idx.state(s);
      for (int l = 0; l < d; ++l) {
        const double dv = static_cast<double>(n[l]) / field.players() - theta(l);
        const double dw = u(l) - field.value(k, l, s);
        v[l][p] = dv * dv;
        w[l][p] = dw * dw;
      }
    }
    MeanEstimate bv{-1.0, 0.0}, bw{-1.0, 0.0};
    int lv = 0, lw = 0;
    for (int l = 0; l < d; ++l) {
      const MeanEstimate ev = mean_and_error(v[l]);
      const MeanEstimate ew = mean_and_error(w[l]);
      if (ev.mean > bv.mean) bv = ev, lv = l;
      if (ew.mean > bw.mean) bw = ew, lw = l;
    }
    // V and W move together, so the error of the sum comes from per-path sums.
    std::vector<double> sum(P);
    for (std::size_t p = 0; p < P; ++p) sum[p] = v[lv][p] + w[lw][p];
    out.VW_se[k] = mean_and_error(sum).std_error;
    out.times[k] = t;
    out.V[k] = bv.mean;
    out.W[k] = bw.mean;
    out.V_se[k] = bv.std_error;
    out.W_se[k] = bw.std_error;
  });
  return out;
}

// ---------------------------------------------------------------- study

ConvergenceReport convergence_study(const CostModel& model, const SimplexVec& theta0, const VectorField& psi, double T,
                                    const std::vector<int>& N_list, const ConvergenceOptions& opts) {
  if (N_list.empty()) throw InvalidArgument("convergence_study: empty N list");
  for (std::size_t r = 1; r < N_list.size(); ++r) {
    if (N_list[r] <= N_list[r - 1]) throw InvalidArgument("convergence_study: N list must be increasing");
  }
  const CostModel m = model.with_terminal(psi);
  const TimeGrid grid(T, opts.steps);
  const MfgSolution mfg = solve_mfg(m, theta0, grid, opts.mfg);

  ConvergenceReport rep;
  rep.rows.resize(N_list.size());
  const bool mc = opts.mode == LawMode::MonteCarlo;
  // Exact mode parallelizes over N; Monte Carlo over paths and nodes.
  const int outer = mc ? 1 : opts.threads;
  const int inner = mc ? opts.threads : 1;
  parallel_for(N_list.size(), outer, [&](std::size_t r) {
    const NField field = solve_equilibrium(m, N_list[r], grid);
    const JointChain chain(m, field);
    ConvergenceRow row;
    row.N = N_list[r];
    if (mc) {
      const PathBatch batch = simulate_paths(chain, theta0, opts.paths, opts.seed + static_cast<std::uint64_t>(row.N),
                                             inner);
      row.profile = estimate_VW(field, batch, mfg, inner);
    } else {
      row.profile = estimate_VW(field, propagate_exact_law(chain, theta0), mfg);
    }
    std::size_t best = 0;
    for (std::size_t k = 0; k < row.profile.V.size(); ++k) {
      const double s = row.profile.V[k] + row.profile.W[k];
      if (s > row.sup_vw) {
        row.sup_vw = s;
        best = k;
      }
    }
    row.sup_vw_se = row.profile.VW_se[best];
    row.v0 = row.profile.V.front();
    const std::vector<double> g = gradient_profile(field);
    row.sup_gradient = *std::max_element(g.begin(), g.end());
    rep.rows[r] = std::move(row);
  });

  if (rep.rows.size() >= 2) {
    std::vector<double> Ns, vw, gr;
    for (const auto& row : rep.rows) {
      Ns.push_back(row.N);
      vw.push_back(row.sup_vw);
      gr.push_back(row.sup_gradient);
    }
    if (*std::min_element(vw.begin(), vw.end()) > 0.0) rep.vw_fit = loglog_fit(Ns, vw);
    if (*std::min_element(gr.begin(), gr.end()) > 0.0) rep.gradient_fit = loglog_fit(Ns, gr);
  }
  return rep;
}

}  // namespace mfg
