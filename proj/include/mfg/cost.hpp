#ifndef MFG_COST_HPP
#define MFG_COST_HPP

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>

#include "mfg/core.hpp"

namespace mfg {

/// A map theta -> R^d, used both for the coupling f(theta) of the running
/// cost and for the terminal cost psi(theta). When the field is the gradient
/// of a known convex potential Phi the potential is carried along.
class VectorField {
 public:
  using Field = std::function<Vector(const Vector&)>;
  using Potential = std::function<double(const Vector&)>;

  static VectorField zero(int d);
  static VectorField constant(Vector values);
  /// f^i(theta) = w_i theta^i, the gradient of sum_i w_i (theta^i)^2 / 2.
  static VectorField diagonal(Vector weights);
  /// f(theta) = A theta + b with A symmetric, the gradient of theta'A theta / 2 + b'theta.
  static VectorField quadratic_form(Matrix A, Vector b);
  /// f = grad Phi by central finite differences with step `fd_step`.
  static VectorField gradient_of(int d, Potential phi, double lipschitz, double fd_step = 1e-6);
  static VectorField custom(int d, Field f, double lipschitz, std::string name = "custom");

  int dim() const { return d_; }
  Vector operator()(const Vector& theta) const { return f_(theta); }
  /// A bound on the Lipschitz constant in theta (Euclidean norms).
  double lipschitz() const { return lipschitz_; }
  const std::string& name() const { return name_; }

  bool has_potential() const { return static_cast<bool>(phi_); }
  double potential(const Vector& theta) const;

  /// Set for `quadratic_form`, `diagonal`, `zero` and `constant` fields.
  const std::optional<Matrix>& quadratic_matrix() const { return A_; }
  const std::optional<Vector>& linear_term() const { return b_; }

 private:
  VectorField() = default;
  int d_ = 0;
  Field f_;
  Potential phi_;
  double lipschitz_ = 0.0;
  std::string name_;
  std::optional<Matrix> A_;
  std::optional<Vector> b_;
};

/// Running cost c(i, theta, alpha) of the reference player in state i.
/// Implementations must not depend on alpha_i and must be uniformly convex
/// in the remaining coordinates with constant gamma():
///   c(a') - c(a) >= grad c(a).(a' - a) + gamma |a' - a|^2.
class RunningCost {
 public:
  virtual ~RunningCost() = default;

  virtual int dim() const = 0;
  virtual std::string name() const = 0;
  virtual double value(int i, const Vector& theta, const Vector& alpha) const = 0;
  /// grad_alpha c; coordinate i is ignored by callers. The default uses
  /// central finite differences.
  virtual Vector gradient(int i, const Vector& theta, const Vector& alpha) const;

  virtual double gamma() const = 0;
  /// Lipschitz constant of c in theta (over the admissible control box).
  virtual double lip_theta() const = 0;
  /// K_c: Lipschitz constant of grad_alpha c in theta.
  virtual double lip_grad_theta() const = 0;

  virtual bool has_closed_form() const { return false; }
  virtual double closed_hamiltonian(int i, const Vector& theta, const Vector& z) const;
  virtual Vector closed_control(int i, const Vector& theta, const Vector& z) const;

  /// Separated costs c = c0(alpha) + f^i(theta) expose f; others return null.
  virtual const VectorField* coupling() const { return nullptr; }
};

/// c(i, theta, alpha) = sum_{j != i} alpha_j^2 / 2 + f^i(theta).
/// Closed forms: h = f^i - 1/2 sum_j [(z^i - z^j)^+]^2 and alpha*_j = (z^i - z^j)^+.
class QuadraticCost final : public RunningCost {
 public:
  explicit QuadraticCost(VectorField f);

  int dim() const override { return f_.dim(); }
  std::string name() const override { return "quadratic"; }
  double value(int i, const Vector& theta, const Vector& alpha) const override;
  Vector gradient(int i, const Vector& theta, const Vector& alpha) const override;
  double gamma() const override { return 0.5; }
  double lip_theta() const override { return f_.lipschitz(); }
  double lip_grad_theta() const override { return 0.0; }
  bool has_closed_form() const override { return true; }
  double closed_hamiltonian(int i, const Vector& theta, const Vector& z) const override;
  Vector closed_control(int i, const Vector& theta, const Vector& z) const override;
  const VectorField* coupling() const override { return &f_; }

 private:
  VectorField f_;
};

/// c(i, theta, alpha) = sum_{j != i} (a alpha_j^2 + b alpha_j^4 + k theta^j alpha_j) + f^i(theta)
/// with a > 0, b >= 0. gamma = a, K_c = |k|. No closed form is provided; the
/// numeric minimizer handles it.
class PolynomialCost final : public RunningCost {
 public:
  PolynomialCost(double a, double b, double k, VectorField f, double alpha_cap = 1e3);

  int dim() const override { return f_.dim(); }
  std::string name() const override { return "polynomial"; }
  double value(int i, const Vector& theta, const Vector& alpha) const override;
  Vector gradient(int i, const Vector& theta, const Vector& alpha) const override;
  double gamma() const override { return a_; }
  double lip_theta() const override;
  double lip_grad_theta() const override { return std::abs(k_); }
  const VectorField* coupling() const override { return &f_; }

 private:
  double a_, b_, k_;
  VectorField f_;
  double alpha_cap_;
};

/// User-supplied convex cost given as a callable; gradient by finite differences.
class CustomCost final : public RunningCost {
 public:
  using Fn = std::function<double(int, const Vector&, const Vector&)>;
  CustomCost(int d, Fn c, double gamma, double lip_theta, double lip_grad_theta, std::string name = "custom");

  int dim() const override { return d_; }
  std::string name() const override { return name_; }
  double value(int i, const Vector& theta, const Vector& alpha) const override { return c_(i, theta, alpha); }
  double gamma() const override { return gamma_; }
  double lip_theta() const override { return lip_theta_; }
  double lip_grad_theta() const override { return lip_grad_theta_; }

 private:
  int d_;
  Fn c_;
  double gamma_, lip_theta_, lip_grad_theta_;
  std::string name_;
};

/// Settings of the projected-gradient minimizer behind the numeric transform.
struct ControlSolverOptions {
  double tolerance = 1e-10;  ///< on the projected-gradient norm
  int max_iterations = 10000;
};

/// Running cost, terminal cost psi and the control box bound.
class CostModel {
 public:
  CostModel(std::shared_ptr<const RunningCost> running, VectorField terminal, double alpha_cap = 1e3,
            ControlSolverOptions solver = {});

  int dim() const { return running_->dim(); }
  const RunningCost& running() const { return *running_; }
  std::shared_ptr<const RunningCost> running_ptr() const { return running_; }
  const VectorField& terminal() const { return terminal_; }
  Vector psi(const Vector& theta) const { return terminal_(theta); }
  double gamma() const { return running_->gamma(); }
  double alpha_cap() const { return alpha_cap_; }
  const ControlSolverOptions& solver() const { return solver_; }

  CostModel with_terminal(VectorField psi) const;

 private:
  std::shared_ptr<const RunningCost> running_;
  VectorField terminal_;
  double alpha_cap_;
  ControlSolverOptions solver_;
};

CostModel make_quadratic_model(VectorField f, VectorField psi);

enum class Method { Automatic, ClosedForm, Numeric };

/// h(z, theta, i) and its minimizer alpha*(z, theta, i).
struct ControlSolution {
  double h = 0.0;
  Vector alpha;  ///< alpha_j >= 0 for j != i; alpha_i = -sum of the others
  int iterations = 0;
  bool cap_active = false;  ///< the box bound alpha_cap binds in some coordinate
};

/// The minimizer did not reach its projected-gradient tolerance.
class ControlConvergenceError : public ConvergenceError {
 public:
  ControlConvergenceError(Vector last, double gradient_norm);
  const Vector& last_iterate() const { return last_; }
  double gradient_norm() const { return gradient_norm_; }

 private:
  Vector last_;
  double gradient_norm_;
};

/// Generalized Legendre transform and its argmin in one pass (i is 0-based).
ControlSolution solve_control(const CostModel& model, const Vector& z, const Vector& theta, int i,
                              Method method = Method::Automatic);

double hamiltonian(const CostModel& model, const Vector& z, const Vector& theta, int i,
                   Method method = Method::Automatic);

Vector optimal_control(const CostModel& model, const Vector& z, const Vector& theta, int i,
                       Method method = Method::Automatic);

/// h(z + v) - h(z) <= alpha*(z) . v up to `slack`.
bool superdifferential_check(const CostModel& model, const Vector& z, const Vector& v, const Vector& theta, int i,
                             double slack = 1e-8);

/// max_i |h(0, theta, i)| over `samples` uniform simplex draws plus the
/// vertices, inflated by `inflation`.
double sampled_h0_bound(const CostModel& model, int samples, std::uint64_t seed, double inflation = 0.01);

struct LipschitzReport {
  int samples = 0;
  double max_ratio_p = 0.0;      ///< max |a*(p') - a*(p)| / |p' - p|
  double max_ratio_theta = 0.0;  ///< max |a*(p, th) - a*(p, th')| / |th - th'|
  double bound_p = 0.0;          ///< 1 / gamma
  double bound_theta = 0.0;      ///< K_c / gamma
  bool flagged_p = false;        ///< ratio exceeded the bound by more than 1%
  bool flagged_theta = false;
  int cap_binding = 0;  ///< samples where alpha_cap was active
};

/// Sampled check of the Lipschitz bounds of alpha* in p and theta
/// (off-diagonal coordinates, Euclidean norms).
LipschitzReport lipschitz_audit(const CostModel& model, int samples, std::uint64_t seed);

struct ContractivityReport {
  double threshold = 0.0;  ///< |u|_# above which the sign conditions are tested
  int samples = 0;
  int violations = 0;
  double worst_max_margin = 0.0;  ///< max over samples of h_imax - <h> (must be < 0)
  double worst_min_margin = 0.0;  ///< min over samples of h_imin - <h> (must be > 0)
};

/// |u|_# threshold sqrt(d sup|f|) for separated quadratic costs, with sup|f|
/// sampled over the simplex and inflated 1%.
double quadratic_contractivity_threshold(const CostModel& model, int samples, std::uint64_t seed);

/// Samples u with |u|_# > threshold and checks that at the maximal state
/// h - <h> < 0 and at the minimal state h - <h> > 0.
ContractivityReport contractivity_audit(const CostModel& model, double threshold, int samples, std::uint64_t seed);

}  // namespace mfg

#endif  // MFG_COST_HPP
