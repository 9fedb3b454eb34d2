#ifndef MFG_POTENTIAL_HPP
#define MFG_POTENTIAL_HPP

#include <cstdint>
#include <vector>

#include "mfg/cost.hpp"
#include "mfg/mfg.hpp"

namespace mfg {

/// A model whose Hamiltonian separates as h(z, theta, i) = h~(z, i) + f^i(theta)
/// with f = grad F for a convex F on R^d.
///
/// Construction checks the separation on sampled points and that the
/// coupling carries its potential.
class PotentialModel {
 public:
  explicit PotentialModel(CostModel model, std::uint64_t seed = 1);

  const CostModel& model() const { return model_; }
  int dim() const { return model_.dim(); }

  /// h~(z, i) = h(z, theta, i) - f^i(theta), independent of theta.
  double h_tilde(const Vector& z, int i) const;
  Vector h_tilde_all(const Vector& u) const;  ///< (h~(Delta_i u, i))_i
  double F(const Vector& theta) const { return f_->potential(theta); }
  Vector f(const Vector& theta) const { return (*f_)(theta); }

  /// F*(q) = sup_p -q.p - F(p) over R^d. Closed form for quadratic F with a
  /// positive definite matrix; otherwise damped Newton on q + f(p) = 0.
  double Fstar(const Vector& q, Method method = Method::Automatic) const;
  /// The maximizer p = -grad F*(q).
  Vector Fstar_argmax(const Vector& q, Method method = Method::Automatic) const;

  /// Largest |grad F - f| over sampled simplex points (F differentiated by central differences).
  double potential_consistency(int samples, std::uint64_t seed) const;

 private:
  CostModel model_;
  const VectorField* f_;
  Vector theta_ref_;
};

/// H(u, theta) = sum_i theta^i h~(Delta_i u, i) + F(theta).
double hamiltonian_H(const PotentialModel& pm, const Vector& u, const Vector& theta);

/// max over nodes of |H(t_k) - H(0)|.
double hamiltonian_drift(const PotentialModel& pm, const MfgSolution& sol);

/// Central-difference time derivatives against finite-difference partials of H.
struct HamiltonResidual {
  double theta_dot = 0.0;  ///< max |dtheta/dt - dH/du|
  double u_dot = 0.0;      ///< max |-du/dt - dH/dtheta|
};
HamiltonResidual hamilton_residual(const PotentialModel& pm, const MfgSolution& sol, double fd_step = 1e-6);

/// Trapezoidal quadrature of F*(du/dt + h~(Delta u)) with du/dt by central
/// differences (second-order one-sided at the ends).
double action(const PotentialModel& pm, const Trajectory& u);

struct CriticalityReport {
  int perturbations = 0;
  double epsilon = 0.0;
  double max_first_order = 0.0;   ///< max |A(u + e eta) - A(u - e eta)| / 2
  double max_second_order = 0.0;  ///< max |A(u + e eta) + A(u - e eta) - 2 A(u)| / 2
  double base_action = 0.0;
};

/// Perturbs u by eps * eta with eta a random combination of sin(m pi t / T)
/// modes (m = 1..3), so eta vanishes at both ends.
CriticalityReport criticality_probe(const PotentialModel& pm, const MfgSolution& sol, int perturbations, double eps,
                                    std::uint64_t seed);

/// U(theta, t): value at time t of the MFG started from theta at t on [t, T].
/// Returns psi(theta) for t = T.
Vector master_field(const CostModel& model, const SimplexVec& theta, double t, double T, int steps,
                    const MfgOptions& opts = {});

/// Tangential Jacobian B_ab = (e_b - e_d) . dU/d(e_a - e_d) of the master field
/// by central differences; symmetric when psi is a gradient.
Matrix master_field_tangent_jacobian(const CostModel& model, const SimplexVec& theta, double t, double T, int steps,
                                     double fd_step = 1e-4, const MfgOptions& opts = {});

struct PlanningOptions {
  double tol = 1e-6;          ///< on |theta(T) - target|_inf
  int max_iter = 50;
  double fd_step = 1e-5;
  double psi_bound = 50.0;    ///< declare failure when |psi_hat|_inf exceeds this
  int steps = 1000;
  MfgOptions mfg{0.5, 1e-11, 2000, true, 1e-3, 1e-6};
};

struct PlanningResult {
  MfgSolution solution;
  Vector psi_hat;  ///< constant terminal value, last entry 0
  int iterations = 0;
  double gap = 0.0;
};

/// Raised when shooting stalls; carries the best terminal gap attained.
class PlanningError : public ConvergenceError {
 public:
  PlanningError(const std::string& what, std::vector<double> history, double best_gap)
      : ConvergenceError(what, std::move(history)), best_gap_(best_gap) {}
  double best_gap() const { return best_gap_; }

 private:
  double best_gap_;
};

/// Finds a constant terminal value psi_hat (gauge psi_hat^d = 0) whose
/// equilibrium steers theta0 to target at time T; Newton with a
/// finite-difference Jacobian and backtracking.
PlanningResult solve_planning(const CostModel& model, const SimplexVec& theta0, const SimplexVec& target, double T,
                              const PlanningOptions& opts = {}, const Vector* guess = nullptr);

}  // namespace mfg

#endif  // MFG_POTENTIAL_HPP
