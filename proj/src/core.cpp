#include "mfg/core.hpp"

#include <algorithm>
#include <string>

namespace mfg {

namespace {

Vector clip_and_normalize(Vector p) {
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (!std::isfinite(p(i))) throw InvalidArgument("simplex vector has a non-finite entry");
    if (p(i) < -SimplexVec::kClipTolerance) {
      throw InvalidArgument("simplex vector entry " + std::to_string(i) + " is negative (" +
                            std::to_string(p(i)) + ")");
    }
    if (p(i) < 0.0) p(i) = 0.0;
  }
  const double s = p.sum();
  if (s <= 0.0) throw InvalidArgument("simplex vector has zero mass");
  return p / s;
}

}  // namespace

void require_simplex(const Vector& p, const char* what) {
  if (p.size() < 1) throw InvalidArgument(std::string(what) + ": empty distribution");
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (!std::isfinite(p(i)) || p(i) < -SimplexVec::kClipTolerance) {
      throw InvalidArgument(std::string(what) + ": entry " + std::to_string(i) +
                            " is not a probability");
    }
  }
  if (std::abs(p.sum() - 1.0) > SimplexVec::kSumTolerance) {
    throw InvalidArgument(std::string(what) + ": entries do not sum to 1");
  }
}

SimplexVec::SimplexVec(Vector p) {
  require_simplex(p, "SimplexVec");
  p_ = clip_and_normalize(std::move(p));
}

SimplexVec SimplexVec::projected(Vector p) { return SimplexVec(clip_and_normalize(std::move(p)), Unchecked{}); }

SimplexVec SimplexVec::uniform(Eigen::Index d) {
  if (d < 1) throw InvalidArgument("SimplexVec::uniform: d must be positive");
  return SimplexVec(Vector::Constant(d, 1.0 / static_cast<double>(d)), Unchecked{});
}

SimplexVec SimplexVec::vertex(Eigen::Index d, Eigen::Index i) {
  if (i < 0 || i >= d) throw InvalidArgument("SimplexVec::vertex: index out of range");
  Vector p = Vector::Zero(d);
  p(i) = 1.0;
  return SimplexVec(std::move(p), Unchecked{});
}

TimeGrid::TimeGrid(double horizon, int steps) : horizon_(horizon), steps_(steps) {
  if (!(horizon > 0.0) || !std::isfinite(horizon)) throw InvalidArgument("TimeGrid: horizon must be positive");
  if (steps < 1) throw InvalidArgument("TimeGrid: step count must be at least 1");
}

std::pair<std::size_t, double> TimeGrid::locate(double t) const {
  const double s = std::clamp(t / horizon_, 0.0, 1.0) * steps_;
  auto k = static_cast<std::size_t>(std::floor(s));
  if (k >= static_cast<std::size_t>(steps_)) k = static_cast<std::size_t>(steps_) - 1;
  return {k, s - static_cast<double>(k)};
}

Trajectory::Trajectory(TimeGrid grid, std::vector<Vector> values, std::vector<Vector> slopes)
    : grid_(grid), values_(std::move(values)), slopes_(std::move(slopes)) {
  if (values_.size() != grid_.nodes()) throw InvalidArgument("Trajectory: one payload per node required");
  if (!slopes_.empty() && slopes_.size() != values_.size()) {
    throw InvalidArgument("Trajectory: slope count must match node count");
  }
}

Vector Trajectory::linear_at(double t) const {
  const auto [k, s] = grid_.locate(t);
  return (1.0 - s) * values_[k] + s * values_[k + 1];
}

Vector Trajectory::at(double t) const {
  if (slopes_.empty()) return linear_at(t);
  const auto [k, s] = grid_.locate(t);
  const double h = grid_.step();
  const double s2 = s * s;
  const double s3 = s2 * s;
  const double h00 = 2 * s3 - 3 * s2 + 1;
  const double h10 = s3 - 2 * s2 + s;
  const double h01 = -2 * s3 + 3 * s2;
  const double h11 = s3 - s2;
  return h00 * values_[k] + (h10 * h) * slopes_[k] + h01 * values_[k + 1] + (h11 * h) * slopes_[k + 1];
}

Trajectory blend(const Trajectory& a, const Trajectory& b, double w) {
  if (!(a.grid() == b.grid())) throw InvalidArgument("blend: grids differ");
  std::vector<Vector> v(a.size());
  for (std::size_t k = 0; k < a.size(); ++k) v[k] = (1.0 - w) * a[k] + w * b[k];
  std::vector<Vector> s;
  if (a.has_slopes() && b.has_slopes()) {
    s.resize(a.size());
    for (std::size_t k = 0; k < a.size(); ++k) s[k] = (1.0 - w) * a.slope(k) + w * b.slope(k);
  }
  return Trajectory(a.grid(), std::move(v), std::move(s));
}

double sup_distance(const Trajectory& a, const Trajectory& b) {
  if (a.size() != b.size()) throw InvalidArgument("sup_distance: node counts differ");
  double d = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) d = std::max(d, max_norm(a[k] - b[k]));
  return d;
}

}  // namespace mfg
