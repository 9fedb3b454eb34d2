#ifndef MFG_MFG_HPP
#define MFG_MFG_HPP

#include <cstdint>
#include <functional>
#include <vector>

#include "mfg/core.hpp"
#include "mfg/cost.hpp"

namespace mfg {

/// Transition-rate row for a player in state i at time t (d entries, the
/// diagonal equal to minus the off-diagonal sum).
using ControlField = std::function<Vector(int i, double t)>;

/// Backward solve of -du^i/dt = h(Delta_i u, theta(t), i), u^i(T) = psi^i(theta(T)).
Trajectory solve_hj(const CostModel& model, const Trajectory& theta);

/// Forward solve of dtheta^i/dt = sum_j theta^j beta_{ji}(t). Rates are
/// sampled at every node and midpoint first; a negative off-diagonal rate is
/// rejected before any integration.
Trajectory solve_kolmogorov(const ControlField& control, const SimplexVec& theta0, const TimeGrid& grid);

/// Rates of the population when everyone plays alpha*(Delta_i u, theta, i).
ControlField equilibrium_control(const CostModel& model, const Trajectory& u, const Trajectory& theta);

struct MfgOptions {
  double damping = 0.5;      ///< omega in theta <- (1 - omega) theta + omega xi(theta)
  double tol = 1e-9;         ///< sup-norm gap between successive iterates
  int max_iter = 500;
  bool adaptive_damping = true;  ///< halve omega whenever the gap fails to shrink
  double min_damping = 1e-3;
  double residual_tol = 1e-6;  ///< acceptance bound on the ODE defect
};

struct MfgSolution {
  Trajectory theta;
  Trajectory u;
  double residual = 0.0;  ///< sup-norm ODE defect of both equations on the grid
  int iterations = 0;
  double damping = 0.0;  ///< damping in force at convergence
  std::vector<double> gap_history;
};

/// Thrown by solve_mfg when the damped iteration exhausts max_iter; carries
/// the per-iteration gap history.
class FixedPointError : public ConvergenceError {
 public:
  using ConvergenceError::ConvergenceError;
};

/// One application of the best-response map: u = HJ(theta), then the
/// population flow under alpha*(Delta u, theta). Returns (xi(theta), u).
std::pair<Trajectory, Trajectory> best_response_flow(const CostModel& model, const Trajectory& theta,
                                                     const SimplexVec& theta0);

/// Solves the initial-terminal value problem by damped fixed-point iteration
/// on the population trajectory.
///
/// `initial` seeds the iteration (default: theta constant at theta0).
MfgSolution solve_mfg(const CostModel& model, const SimplexVec& theta0, const TimeGrid& grid,
                      const MfgOptions& opts = {}, const Trajectory* initial = nullptr);

/// Sup-norm defect of both ODE lines at interior nodes, using the five-point
/// central difference stencil (three-point when M < 4).
double mfg_residual(const CostModel& model, const Trajectory& theta, const Trajectory& u);

/// |u(t)|_inf <= |u(T)|_inf + 2 M (T - t) at every node, M sampled via sampled_h0_bound.
struct MaxPrincipleCheck {
  double h0_bound = 0.0;
  double worst_margin = 0.0;  ///< min over nodes of bound - |u(t)|_inf (>= 0 when satisfied)
  bool holds = true;
};
MaxPrincipleCheck check_max_principle(const Trajectory& u, double h0_bound);

struct SimulationEstimate {
  double mean = 0.0;
  double half_width = 0.0;  ///< 99% confidence half-width
};

struct VerificationReport {
  int paths = 0;
  Vector value;  ///< u^i(0) per start state
  std::vector<SimulationEstimate> optimal;
  std::vector<SimulationEstimate> perturbed;
  double perturbation = 0.5;
  double rate_bound = 0.0;
};

/// Monte Carlo check of the verification theorem: simulates the reference
/// player's chain from each state under alpha*(Delta_i u, theta, i) and under
/// the control with `perturbation` added to the rate i -> (i + 1) mod d.
/// Jumps are generated by thinning; controls and running costs are linear in
/// time between grid nodes.
VerificationReport verify_value_by_simulation(const CostModel& model, const MfgSolution& solution, int paths,
                                              std::uint64_t seed, double perturbation = 0.5, int threads = 1);

/// Stationary solution: population theta_bar, value u_bar (last entry 0) and cost rate kappa.
struct StationaryTriple {
  Vector theta_bar;
  Vector u_bar;
  double kappa = 0.0;
};

struct StationaryOptions {
  double tol = 1e-8;
  int max_iter = 200;
  double fd_step = 1e-7;
};

/// Residuals of both stationary equations (sup norm over components).
struct StationaryResidual {
  double kolmogorov = 0.0;
  double hamilton_jacobi = 0.0;
};
StationaryResidual stationary_residual(const CostModel& model, const StationaryTriple& s);

/// Damped Newton with finite-difference Jacobian on the 2d equations.
StationaryTriple solve_stationary(const CostModel& model, const StationaryTriple& guess,
                                  const StationaryOptions& opts = {});

struct TrendRow {
  double T = 0.0;
  double theta_gap = 0.0;  ///< |theta(T) - theta_bar|_inf on the horizon-2T problem
  double u_gap = 0.0;      ///< |u(T) - u_bar|_#
  int iterations = 0;
};

struct TrendReport {
  std::vector<TrendRow> rows;
  double theta_rate = 0.0;  ///< fitted exponential decay rate over the last three rows
  double u_rate = 0.0;
  bool theta_nonincreasing = true;  ///< beyond the first row
  bool u_nonincreasing = true;
};

/// For each T solves the problem on [0, 2T] from theta0 with terminal cost
/// psi and measures the gaps to the stationary triple at the midpoint.
TrendReport trend_experiment(const CostModel& model, const SimplexVec& theta0, const VectorField& psi,
                             const std::vector<double>& T_list, const StationaryTriple& stationary, int steps,
                             const MfgOptions& opts = {}, int threads = 1);

struct MonotonicityReport {
  int samples = 0;
  double psi_min = 0.0;             ///< min sum (th - th~)(psi(th) - psi(th~)); >= 0 required
  double concavity_max = 0.0;       ///< max of the concavity left side; <= 0 required
  std::vector<double> gamma_state;  ///< empirical gamma_i (min ratio to |Delta z - Delta w|^2)
  double monot_max = 0.0;           ///< max of the monotonicity left side; <= 0 required
  double gamma = 0.0;               ///< empirical gamma (min ratio to |th - th~|^2)
  bool psi_ok = true;
  bool concavity_ok = true;
  bool monot_ok = true;
};

MonotonicityReport monotonicity_audit(const CostModel& model, int samples, std::uint64_t seed);

}  // namespace mfg

#endif  // MFG_MFG_HPP
