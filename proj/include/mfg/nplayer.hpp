#ifndef MFG_NPLAYER_HPP
#define MFG_NPLAYER_HPP

#include <cstdint>
#include <vector>

#include "mfg/core.hpp"
#include "mfg/cost.hpp"
#include "mfg/mfg.hpp"
#include "mfg/state_indexer.hpp"
#include "mfg/stats.hpp"

namespace mfg {

/// Value u^{N,i}_n(t_k) of the reference player in state i facing the
/// occupancy n of the other N players, on every grid node.
///
/// Stored as a (d |S^d_N|) x (M + 1) matrix; row s d + i holds (i, state s).
/// Between nodes values are interpolated linearly.
class NField {
 public:
  NField(StateIndexer indexer, TimeGrid grid, Matrix values);

  const StateIndexer& indexer() const { return indexer_; }
  const TimeGrid& grid() const { return grid_; }
  int dim() const { return indexer_.dim(); }
  int players() const { return indexer_.players(); }
  std::size_t states() const { return indexer_.size(); }

  const Matrix& values() const { return values_; }
  double value(std::size_t node, int i, std::size_t s) const { return values_(row(i, s), node); }
  /// u_n(t_k) as a d-vector.
  Vector at_node(std::size_t node, std::size_t s) const { return values_.col(node).segment(s * dim(), dim()); }
  /// Whole slice at time t, linear in time between nodes.
  Vector slice(double t) const;

  std::size_t row(int i, std::size_t s) const { return s * static_cast<std::size_t>(dim()) + i; }

 private:
  StateIndexer indexer_;
  TimeGrid grid_;
  Matrix values_;
};

/// Backward RK4 solve of the N+1-player equilibrium system
///   -du^i_n/dt = sum_{k != j} gamma^{n,i}_{kj} (u^i_{n+e_{jk}} - u^i_n) + h(Delta_i u_n, n/N, i),
///   gamma^{n,i}_{kj} = n_k alpha*_j(Delta_k u_{n+e_{ik}}, (n+e_{ik})/N, k),
/// with u^i_n(T) = psi^i(n/N).
NField solve_equilibrium(const CostModel& model, int N, const TimeGrid& grid,
                         std::uint64_t cap = StateIndexer::kDefaultCap);

/// Per node: max over r != s, i and n with n_s > 0 of |u^i_{n+e_{rs}} - u^i_n|.
std::vector<double> gradient_profile(const NField& field);

/// ||u^N(t)||_inf <= ||u^N(T)||_inf + 2 M (T - t) at every node.
MaxPrincipleCheck check_max_principle(const NField& field, double h0_bound);

/// The joint chain (reference state i, occupancy n) under equilibrium play.
///
/// Transitions have a fixed sparsity pattern; their rates are tabulated on the
/// grid nodes and are linear in time between nodes. Both the exact law and
/// the path simulator use this representation. The field must outlive the chain.
class JointChain {
 public:
  JointChain(const CostModel& model, const NField& field);

  const NField& field() const { return *field_; }
  std::size_t size() const { return field_->values().rows(); }
  std::size_t transitions() const { return target_.size(); }

  /// Transitions leaving joint state x are [first(x), first(x + 1)).
  std::size_t first(std::size_t x) const { return first_[x]; }
  std::size_t target(std::size_t e) const { return target_[e]; }
  double rate(std::size_t e, std::size_t node) const { return rates_(e, node); }
  double rate_at(std::size_t e, double t) const;

  /// Largest tabulated rate.
  double max_rate() const { return max_rate_; }
  /// 1.05 (N + 1) d max_rate: dominates the total jump intensity.
  double intensity_bound() const;

  /// Row (i, s) of the initial law theta0^i * Multinomial(N, theta0)(n).
  Vector initial_law(const SimplexVec& theta0) const;

 private:
  const NField* field_;
  std::vector<std::size_t> first_;
  std::vector<std::size_t> target_;
  Matrix rates_;  // transitions x nodes
  double max_rate_ = 0.0;
};

/// Probability of every joint state (rows as in NField) at every node.
struct JointLaw {
  TimeGrid grid;
  Matrix probabilities;  // (d |S|) x (M + 1)
};

/// Forward RK4 of the master equation from the product initial law.
/// Entries below -1e-10 abort (step too coarse); smaller roundoff is clipped.
JointLaw propagate_exact_law(const CostModel& model, const NField& field, const SimplexVec& theta0);
JointLaw propagate_exact_law(const JointChain& chain, const SimplexVec& theta0);

struct PathEvent {
  double time;
  std::uint32_t state;  ///< joint row after the jump
};

struct PathBatch {
  std::uint64_t seed = 0;
  double intensity_bound = 0.0;
  std::vector<std::uint32_t> start;             ///< joint row at t = 0, per path
  std::vector<std::vector<PathEvent>> events;  ///< per path, increasing in time

  std::size_t size() const { return start.size(); }
  /// Joint row of path p at time t (right-continuous).
  std::uint32_t state_at(std::size_t p, double t) const;
};

/// Thinning simulation of the joint chain. Path p draws from stream p of
/// `seed`, so the batch is identical for any thread count.
PathBatch simulate_paths(const JointChain& chain, const SimplexVec& theta0, int n_paths, std::uint64_t seed,
                         int threads = 1);

/// Per-node V_N(t) = max_l E(n^l/N - theta^l)^2 and W_N(t) = max_l E(u^l - u^{N,l}_n)^2.
struct VWProfile {
  std::vector<double> times;
  std::vector<double> V;
  std::vector<double> W;
  std::vector<double> V_se;  ///< standard errors (zero for exact laws)
  std::vector<double> W_se;
  std::vector<double> VW_se;  ///< standard error of V + W from per-path sums
};

VWProfile estimate_VW(const NField& field, const JointLaw& law, const MfgSolution& mfg);
VWProfile estimate_VW(const NField& field, const PathBatch& paths, const MfgSolution& mfg, int threads = 1);

enum class LawMode { Exact, MonteCarlo };

struct ConvergenceRow {
  int N = 0;
  double sup_vw = 0.0;        ///< sup over nodes of V_N + W_N
  double sup_vw_se = 0.0;     ///< standard error at the maximizing node (Monte Carlo only)
  double v0 = 0.0;            ///< V_N(0)
  double sup_gradient = 0.0;  ///< sup over nodes of the gradient profile
  VWProfile profile;
};

struct ConvergenceReport {
  std::vector<ConvergenceRow> rows;
  LineFit vw_fit;        ///< log sup(V + W) against log N
  LineFit gradient_fit;  ///< log sup gradient against log N
};

struct ConvergenceOptions {
  LawMode mode = LawMode::Exact;
  int steps = 1000;
  int paths = 10000;
  std::uint64_t seed = 1;
  int threads = 1;
  MfgOptions mfg;
};

/// Solves the MFG once and the N-player game for each N, then tabulates
/// sup_t (V_N + W_N) and the gradient profile with log-log fits.
ConvergenceReport convergence_study(const CostModel& model, const SimplexVec& theta0, const VectorField& psi, double T,
                                    const std::vector<int>& N_list, const ConvergenceOptions& opts = {});

}  // namespace mfg

#endif  // MFG_NPLAYER_HPP
