#ifndef MFG_ODE_HPP
#define MFG_ODE_HPP

#include <utility>
#include <vector>

#include "mfg/core.hpp"

namespace mfg {

enum class Direction { Forward, Backward };

/// No-op post-step hook.
struct KeepState {
  void operator()(Vector&) const {}
};

/// Classical fixed-step RK4 on the grid.
///
/// Forward: y0 is the value at t_0 and nodes are filled left to right.
/// Backward: y0 is the terminal value at t_M; the time-reversed system
/// ds y = -f(T - s, y) is stepped, which is the same RK4 scheme run with step -h.
/// The right-hand side at every node is stored as the trajectory slope.
///
/// `field(t, y)` returns dy/dt. `post_step(y)` may repair the state after each
/// step (e.g. simplex roundoff); it must not change y by more than roundoff.
template <typename Field, typename PostStep = KeepState>
Trajectory integrate(Field&& field, const Vector& y0, const TimeGrid& grid, Direction direction,
                     PostStep&& post_step = PostStep{}) {
  const std::size_t n = grid.nodes();
  const double h = direction == Direction::Forward ? grid.step() : -grid.step();
  std::vector<Vector> values(n);
  std::vector<Vector> slopes(n);

  auto check = [](const Vector& v, std::size_t node) {
    if (!v.allFinite()) throw NonFiniteError("integrate: non-finite state", node);
  };

  std::size_t k = direction == Direction::Forward ? 0 : n - 1;
  values[k] = y0;
  check(values[k], k);
  for (std::size_t step = 0; step + 1 < n; ++step) {
    const std::size_t next = direction == Direction::Forward ? k + 1 : k - 1;
    const double t = grid.node(k);
    const double tm = t + 0.5 * h;
    const Vector& y = values[k];
    Vector k1 = field(t, y);
    check(k1, k);
    Vector k2 = field(tm, Vector(y + (0.5 * h) * k1));
    Vector k3 = field(tm, Vector(y + (0.5 * h) * k2));
    Vector k4 = field(grid.node(next), Vector(y + h * k3));
    Vector y1 = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    check(y1, next);
    post_step(y1);
    slopes[k] = std::move(k1);
    values[next] = std::move(y1);
    k = next;
  }
  slopes[k] = field(grid.node(k), values[k]);
  check(slopes[k], k);
  return Trajectory(grid, std::move(values), std::move(slopes));
}

}  // namespace mfg

#endif  // MFG_ODE_HPP
