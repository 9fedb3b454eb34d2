#ifndef MFG_CORE_HPP
#define MFG_CORE_HPP

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <vector>

#include "mfg/errors.hpp"

namespace mfg {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Value function of the reference player at one instant (one entry per state).
using ValueVec = Eigen::VectorXd;

/// Quotient norm on R^d / R: inf over constants c of max|v + c|, i.e. (max - min) / 2.
template <typename Derived>
typename Derived::Scalar sharp_norm(const Eigen::MatrixBase<Derived>& v) {
  if (v.size() == 0) return typename Derived::Scalar(0);
  return (v.maxCoeff() - v.minCoeff()) / typename Derived::Scalar(2);
}

/// Difference operator on state i (0-based): component j is z^j - z^i.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> delta(
    Eigen::Index i, const Eigen::MatrixBase<Derived>& z) {
  if (i < 0 || i >= z.size()) throw InvalidArgument("delta: state index out of range");
  return z.array() - z(i);
}

/// Largest absolute entry; zero for empty input.
template <typename Derived>
typename Derived::Scalar max_norm(const Eigen::MatrixBase<Derived>& v) {
  return v.size() == 0 ? typename Derived::Scalar(0) : v.cwiseAbs().maxCoeff();
}

/// A probability vector. Construction validates and repairs roundoff drift:
/// entries in [-1e-12, 0) are clipped to zero and the vector renormalized.
class SimplexVec {
 public:
  static constexpr double kClipTolerance = 1e-12;
  static constexpr double kSumTolerance = 1e-10;

  SimplexVec() = default;
  explicit SimplexVec(Vector p);

  /// Clip-and-renormalize without throwing on the sum check; still throws on
  /// negative entries beyond the clip tolerance.
  static SimplexVec projected(Vector p);
  static SimplexVec uniform(Eigen::Index d);
  static SimplexVec vertex(Eigen::Index d, Eigen::Index i);

  const Vector& vec() const { return p_; }
  operator const Vector&() const { return p_; }
  double operator()(Eigen::Index i) const { return p_(i); }
  Eigen::Index size() const { return p_.size(); }

 private:
  struct Unchecked {};
  SimplexVec(Vector p, Unchecked) : p_(std::move(p)) {}
  Vector p_;
};

/// Throws InvalidArgument unless p is a probability vector within the
/// SimplexVec tolerances.
void require_simplex(const Vector& p, const char* what);

/// Uniform nodes t_k = k T / M, k = 0..M.
class TimeGrid {
 public:
  TimeGrid(double horizon, int steps);

  double horizon() const { return horizon_; }
  int steps() const { return steps_; }
  std::size_t nodes() const { return static_cast<std::size_t>(steps_) + 1; }
  double step() const { return horizon_ / steps_; }
  double node(std::size_t k) const {
    return k == static_cast<std::size_t>(steps_) ? horizon_ : horizon_ * static_cast<double>(k) / steps_;
  }
  /// Cell index k with t in [t_k, t_{k+1}] and the local coordinate in [0, 1].
  std::pair<std::size_t, double> locate(double t) const;

  bool operator==(const TimeGrid& o) const { return horizon_ == o.horizon_ && steps_ == o.steps_; }

 private:
  double horizon_;
  int steps_;
};

/// Node values of a vector-valued function of time. When node slopes are
/// present (the integrator records them) queries between nodes use cubic
/// Hermite interpolation, otherwise linear interpolation.
class Trajectory {
 public:
  Trajectory(TimeGrid grid, std::vector<Vector> values, std::vector<Vector> slopes = {});

  const TimeGrid& grid() const { return grid_; }
  std::size_t size() const { return values_.size(); }
  const Vector& operator[](std::size_t k) const { return values_[k]; }
  const Vector& front() const { return values_.front(); }
  const Vector& back() const { return values_.back(); }
  const std::vector<Vector>& values() const { return values_; }

  bool has_slopes() const { return !slopes_.empty(); }
  const Vector& slope(std::size_t k) const { return slopes_[k]; }
  const std::vector<Vector>& slopes() const { return slopes_; }

  Vector at(double t) const;
  Vector linear_at(double t) const;

 private:
  TimeGrid grid_;
  std::vector<Vector> values_;
  std::vector<Vector> slopes_;
};

/// (1 - w) a + w b on values and slopes; grids must agree.
Trajectory blend(const Trajectory& a, const Trajectory& b, double w);

/// sup over nodes of max-norm difference.
double sup_distance(const Trajectory& a, const Trajectory& b);

}  // namespace mfg

#endif  // MFG_CORE_HPP
