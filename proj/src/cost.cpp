#include "mfg/cost.hpp"

#include <algorithm>
#include <cmath>

#include "mfg/random.hpp"

namespace mfg {

// ---------------------------------------------------------------- VectorField

VectorField VectorField::zero(int d) {
  VectorField v = constant(Vector::Zero(d));
  v.name_ = "zero";
  return v;
}

VectorField VectorField::constant(Vector values) {
  VectorField v;
  v.d_ = static_cast<int>(values.size());
  v.A_ = Matrix::Zero(v.d_, v.d_);
  v.b_ = values;
  v.f_ = [values](const Vector&) { return values; };
  v.phi_ = [values](const Vector& th) { return values.dot(th); };
  v.lipschitz_ = 0.0;
  v.name_ = "constant";
  return v;
}

VectorField VectorField::diagonal(Vector weights) {
  const int d = static_cast<int>(weights.size());
  VectorField v = quadratic_form(weights.asDiagonal().toDenseMatrix(), Vector::Zero(d));
  v.name_ = "diagonal";
  return v;
}

VectorField VectorField::quadratic_form(Matrix A, Vector b) {
  if (A.rows() != A.cols() || A.rows() != b.size()) throw InvalidArgument("quadratic_form: shape mismatch");
  if (!A.isApprox(A.transpose(), 1e-12) && A.norm() > 0) throw InvalidArgument("quadratic_form: A must be symmetric");
  VectorField v;
  v.d_ = static_cast<int>(b.size());
  v.A_ = A;
  v.b_ = b;
  v.f_ = [A, b](const Vector& th) -> Vector { return A * th + b; };
  v.phi_ = [A, b](const Vector& th) { return 0.5 * th.dot(A * th) + b.dot(th); };
  v.lipschitz_ = A.size() == 0 ? 0.0 : Eigen::SelfAdjointEigenSolver<Matrix>(A).eigenvalues().cwiseAbs().maxCoeff();
  v.name_ = "quadratic_form";
  return v;
}

VectorField VectorField::gradient_of(int d, Potential phi, double lipschitz, double fd_step) {
  VectorField v;
  v.d_ = d;
  v.phi_ = phi;
  v.f_ = [phi, fd_step](const Vector& th) -> Vector {
    Vector g(th.size());
    Vector x = th;
    for (Eigen::Index j = 0; j < th.size(); ++j) {
      const double x0 = x(j);
      x(j) = x0 + fd_step;
      const double fp = phi(x);
      x(j) = x0 - fd_step;
      const double fm = phi(x);
      x(j) = x0;
      g(j) = (fp - fm) / (2.0 * fd_step);
    }
    return g;
  };
  v.lipschitz_ = lipschitz;
  v.name_ = "gradient";
  return v;
}

VectorField VectorField::custom(int d, Field f, double lipschitz, std::string name) {
  VectorField v;
  v.d_ = d;
  v.f_ = std::move(f);
  v.lipschitz_ = lipschitz;
  v.name_ = std::move(name);
  return v;
}

double VectorField::potential(const Vector& theta) const {
  if (!phi_) throw InvalidArgument("VectorField '" + name_ + "' has no potential");
  return phi_(theta);
}

// ---------------------------------------------------------------- RunningCost

Vector RunningCost::gradient(int i, const Vector& theta, const Vector& alpha) const {
  Vector g = Vector::Zero(alpha.size());
  Vector a = alpha;
  for (Eigen::Index j = 0; j < alpha.size(); ++j) {
    if (j == i) continue;
    const double step = 1e-6 * (1.0 + std::abs(alpha(j)));
    const double a0 = a(j);
    a(j) = a0 + step;
    const double fp = value(i, theta, a);
    a(j) = a0 - step;
    const double fm = value(i, theta, a);
    a(j) = a0;
    g(j) = (fp - fm) / (2.0 * step);
  }
  return g;
}

double RunningCost::closed_hamiltonian(int, const Vector&, const Vector&) const {
  throw InvalidArgument("cost '" + name() + "' has no closed-form Hamiltonian");
}

Vector RunningCost::closed_control(int, const Vector&, const Vector&) const {
  throw InvalidArgument("cost '" + name() + "' has no closed-form control");
}

QuadraticCost::QuadraticCost(VectorField f) : f_(std::move(f)) {}

double QuadraticCost::value(int i, const Vector& theta, const Vector& alpha) const {
  double s = 0.0;
  for (Eigen::Index j = 0; j < alpha.size(); ++j) {
    if (j != i) s += 0.5 * alpha(j) * alpha(j);
  }
  return s + f_(theta)(i);
}

Vector QuadraticCost::gradient(int i, const Vector&, const Vector& alpha) const {
  Vector g = alpha;
  g(i) = 0.0;
  return g;
}

double QuadraticCost::closed_hamiltonian(int i, const Vector& theta, const Vector& z) const {
  double s = 0.0;
  for (Eigen::Index j = 0; j < z.size(); ++j) {
    const double d = std::max(z(i) - z(j), 0.0);
    s += d * d;
  }
  return f_(theta)(i) - 0.5 * s;
}

Vector QuadraticCost::closed_control(int i, const Vector&, const Vector& z) const {
  Vector a(z.size());
  double total = 0.0;
  for (Eigen::Index j = 0; j < z.size(); ++j) {
    a(j) = j == i ? 0.0 : std::max(z(i) - z(j), 0.0);
    total += a(j);
  }
  a(i) = -total;
  return a;
}

PolynomialCost::PolynomialCost(double a, double b, double k, VectorField f, double alpha_cap)
    : a_(a), b_(b), k_(k), f_(std::move(f)), alpha_cap_(alpha_cap) {
  if (!(a > 0.0)) throw InvalidArgument("PolynomialCost: a must be positive");
  if (b < 0.0) throw InvalidArgument("PolynomialCost: b must be nonnegative");
}

double PolynomialCost::value(int i, const Vector& theta, const Vector& alpha) const {
  double s = 0.0;
  for (Eigen::Index j = 0; j < alpha.size(); ++j) {
    if (j == i) continue;
    const double x = alpha(j);
    const double x2 = x * x;
    s += a_ * x2 + b_ * x2 * x2 + k_ * theta(j) * x;
  }
  return s + f_(theta)(i);
}

Vector PolynomialCost::gradient(int i, const Vector& theta, const Vector& alpha) const {
  Vector g(alpha.size());
  for (Eigen::Index j = 0; j < alpha.size(); ++j) {
    const double x = alpha(j);
    g(j) = j == i ? 0.0 : 2.0 * a_ * x + 4.0 * b_ * x * x * x + k_ * theta(j);
  }
  return g;
}

double PolynomialCost::lip_theta() const {
  return f_.lipschitz() + std::abs(k_) * alpha_cap_ * std::sqrt(static_cast<double>(dim() - 1));
}

CustomCost::CustomCost(int d, Fn c, double gamma, double lip_theta, double lip_grad_theta, std::string name)
    : d_(d), c_(std::move(c)), gamma_(gamma), lip_theta_(lip_theta), lip_grad_theta_(lip_grad_theta),
      name_(std::move(name)) {
  if (!(gamma > 0.0)) throw InvalidArgument("CustomCost: gamma must be positive");
}

// ---------------------------------------------------------------- CostModel

CostModel::CostModel(std::shared_ptr<const RunningCost> running, VectorField terminal, double alpha_cap,
                     ControlSolverOptions solver)
    : running_(std::move(running)), terminal_(std::move(terminal)), alpha_cap_(alpha_cap), solver_(solver) {
  if (!running_) throw InvalidArgument("CostModel: running cost is required");
  if (terminal_.dim() != running_->dim()) throw InvalidArgument("CostModel: terminal cost dimension mismatch");
  if (running_->dim() < 2) throw InvalidArgument("CostModel: at least two states are required");
  if (!(alpha_cap > 0.0)) throw InvalidArgument("CostModel: alpha_cap must be positive");
}

CostModel CostModel::with_terminal(VectorField psi) const {
  return CostModel(running_, std::move(psi), alpha_cap_, solver_);
}

CostModel make_quadratic_model(VectorField f, VectorField psi) {
  return CostModel(std::make_shared<QuadraticCost>(std::move(f)), std::move(psi));
}

ControlConvergenceError::ControlConvergenceError(Vector last, double gradient_norm)
    : ConvergenceError("optimal control: projected gradient did not converge (gradient norm " +
                           std::to_string(gradient_norm) + ")",
                       {gradient_norm}),
      last_(std::move(last)),
      gradient_norm_(gradient_norm) {}

// ---------------------------------------------------------------- transform

namespace {

void check_inputs(const CostModel& model, const Vector& z, const Vector& theta, int i) {
  if (i < 0 || i >= model.dim()) throw InvalidArgument("state index out of range");
  if (z.size() != model.dim() || theta.size() != model.dim()) throw InvalidArgument("dimension mismatch");
}

// Projected gradient on [0, cap]^{d-1} for mu -> c(i, theta, mu) + mu . p.
// The step s is accepted once s * L_loc <= 1, with L_loc the secant
// curvature of the gradient along the step; this avoids comparing nearly
// equal objective values near the optimum.
ControlSolution numeric_control(const CostModel& model, const Vector& z, const Vector& theta, int i) {
  const RunningCost& c = model.running();
  const double cap = model.alpha_cap();
  const Vector p = delta(i, z);
  const Eigen::Index d = z.size();

  auto project = [&](Vector v) {
    for (Eigen::Index j = 0; j < d; ++j) v(j) = j == i ? 0.0 : std::clamp(v(j), 0.0, cap);
    return v;
  };
  auto grad = [&](const Vector& mu) {
    Vector g = c.gradient(i, theta, mu) + p;
    g(i) = 0.0;
    return g;
  };

  Vector mu = Vector::Zero(d);
  Vector g = grad(mu);
  double s = 1.0;
  double pg = (project(mu - g) - mu).norm();
  int it = 0;
  while (pg > model.solver().tolerance) {
    if (++it > model.solver().max_iterations) throw ControlConvergenceError(mu, pg);
    Vector next = project(mu - s * g);
    const Vector step = next - mu;
    const double len = step.norm();
    if (len == 0.0) break;
    Vector gn = grad(next);
    const double curv = (gn - g).norm() / len;
    if (s * curv > 1.0 + 1e-12) {
      s = std::min(0.5 * s, 0.9 / curv);
      continue;
    }
    mu = std::move(next);
    g = std::move(gn);
    pg = (project(mu - g) - mu).norm();
    s *= 2.0;
  }

  ControlSolution out;
  out.iterations = it;
  out.h = c.value(i, theta, mu) + mu.dot(p);
  for (Eigen::Index j = 0; j < d; ++j) {
    if (j != i && mu(j) >= cap) out.cap_active = true;
  }
  mu(i) = -mu.sum();
  out.alpha = std::move(mu);
  return out;
}

}  // namespace

ControlSolution solve_control(const CostModel& model, const Vector& z, const Vector& theta, int i, Method method) {
  check_inputs(model, z, theta, i);
  const RunningCost& c = model.running();
  const bool closed = method == Method::ClosedForm || (method == Method::Automatic && c.has_closed_form());
  if (!closed) return numeric_control(model, z, theta, i);
  ControlSolution out;
  out.h = c.closed_hamiltonian(i, theta, z);
  out.alpha = c.closed_control(i, theta, z);
  return out;
}

double hamiltonian(const CostModel& model, const Vector& z, const Vector& theta, int i, Method method) {
  return solve_control(model, z, theta, i, method).h;
}

Vector optimal_control(const CostModel& model, const Vector& z, const Vector& theta, int i, Method method) {
  return solve_control(model, z, theta, i, method).alpha;
}

bool superdifferential_check(const CostModel& model, const Vector& z, const Vector& v, const Vector& theta, int i,
                             double slack) {
  const ControlSolution base = solve_control(model, z, theta, i);
  const double moved = hamiltonian(model, Vector(z + v), theta, i);
  return moved - base.h <= base.alpha.dot(v) + slack;
}

double sampled_h0_bound(const CostModel& model, int samples, std::uint64_t seed, double inflation) {
  const int d = model.dim();
  const Vector zero = Vector::Zero(d);
  Rng rng = stream_rng(seed, 0x68300);
  double m = 0.0;
  auto visit = [&](const Vector& th) {
    for (int i = 0; i < d; ++i) m = std::max(m, std::abs(hamiltonian(model, zero, th, i)));
  };
  for (int v = 0; v < d; ++v) visit(SimplexVec::vertex(d, v).vec());
  visit(SimplexVec::uniform(d).vec());
  for (int s = 0; s < samples; ++s) visit(sample_simplex(rng, d));
  return m * (1.0 + inflation);
}

LipschitzReport lipschitz_audit(const CostModel& model, int samples, std::uint64_t seed) {
  if (samples < 1) throw InvalidArgument("lipschitz_audit: samples must be positive");
  const int d = model.dim();
  LipschitzReport r;
  r.samples = samples;
  r.bound_p = 1.0 / model.gamma();
  r.bound_theta = model.running().lip_grad_theta() / model.gamma();
  Rng rng = stream_rng(seed, 0x11b5);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<int> state(0, d - 1);

  auto offdiag = [](Vector a, int i) {
    a(i) = 0.0;
    return a;
  };
  for (int s = 0; s < samples; ++s) {
    const int i = state(rng);
    const Vector theta = sample_simplex(rng, d);
    const Vector z = sample_box(rng, d, -2.0, 2.0);
    // Alternate far pairs and near pairs to probe both scales.
    const double scale = (s % 2 == 0) ? 1.0 : 1e-3;
    Vector dz(d);
    for (int j = 0; j < d; ++j) dz(j) = scale * normal(rng);
    const ControlSolution a = solve_control(model, z, theta, i);
    const ControlSolution b = solve_control(model, Vector(z + dz), theta, i);
    const double dp = (delta(i, Vector(z + dz)) - delta(i, z)).norm();
    if (dp > 0.0) {
      r.max_ratio_p = std::max(r.max_ratio_p, (offdiag(b.alpha, i) - offdiag(a.alpha, i)).norm() / dp);
    }

    Vector theta2 = (s % 2 == 0) ? sample_simplex(rng, d) : Vector(SimplexVec::projected(
                                                                   (theta + 1e-3 * sample_simplex(rng, d)) / 1.001)
                                                                   .vec());
    const double dth = (theta2 - theta).norm();
    const ControlSolution c = solve_control(model, z, theta2, i);
    if (dth > 0.0) {
      r.max_ratio_theta = std::max(r.max_ratio_theta, (offdiag(c.alpha, i) - offdiag(a.alpha, i)).norm() / dth);
    }
    if (a.cap_active || b.cap_active || c.cap_active) ++r.cap_binding;
  }
  r.flagged_p = r.max_ratio_p > 1.01 * r.bound_p;
  r.flagged_theta = r.max_ratio_theta > 1.01 * r.bound_theta + 1e-12;
  return r;
}

double quadratic_contractivity_threshold(const CostModel& model, int samples, std::uint64_t seed) {
  const VectorField* f = model.running().coupling();
  if (f == nullptr) throw InvalidArgument("contractivity threshold needs a separated cost");
  const int d = model.dim();
  Rng rng = stream_rng(seed, 0xc0417);
  double fmax = 0.0;
  auto visit = [&](const Vector& th) { fmax = std::max(fmax, max_norm((*f)(th))); };
  for (int v = 0; v < d; ++v) visit(SimplexVec::vertex(d, v).vec());
  for (int s = 0; s < samples; ++s) visit(sample_simplex(rng, d));
  return std::sqrt(d * fmax * 1.01);
}

ContractivityReport contractivity_audit(const CostModel& model, double threshold, int samples, std::uint64_t seed) {
  const int d = model.dim();
  ContractivityReport r;
  r.threshold = threshold;
  r.samples = samples;
  r.worst_max_margin = -std::numeric_limits<double>::infinity();
  r.worst_min_margin = std::numeric_limits<double>::infinity();
  Rng rng = stream_rng(seed, 0xc0a7);
  for (int s = 0; s < samples; ++s) {
    const Vector theta = sample_simplex(rng, d);
    Vector u = sample_box(rng, d, -1.0, 1.0);
    const double sn = sharp_norm(u);
    if (sn == 0.0) continue;
    const double target = threshold * (1.0 + 2.0 * uniform01(rng)) + 1e-9;
    u *= target / sn;
    Vector hv(d);
    for (int i = 0; i < d; ++i) hv(i) = hamiltonian(model, u, theta, i);
    const double mean = hv.mean();
    Eigen::Index imax = 0, imin = 0;
    u.maxCoeff(&imax);
    u.minCoeff(&imin);
    const double mmax = hv(imax) - mean;
    const double mmin = hv(imin) - mean;
    r.worst_max_margin = std::max(r.worst_max_margin, mmax);
    r.worst_min_margin = std::min(r.worst_min_margin, mmin);
    if (!(mmax < 0.0) || !(mmin > 0.0)) ++r.violations;
  }
  return r;
}

}  // namespace mfg
