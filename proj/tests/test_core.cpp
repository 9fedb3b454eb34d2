#include <doctest.h>

#include <cmath>

#include "mfg/core.hpp"
#include "mfg/ode.hpp"
#include "mfg/random.hpp"
#include "mfg/state_indexer.hpp"

using namespace mfg;

namespace {
Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}
}  // namespace

TEST_CASE("sharp norm") {
  CHECK(sharp_norm(Vector::Constant(4, 3.7)) == 0.0);
  CHECK(sharp_norm(vec({1, -1})) == doctest::Approx(1.0));
  CHECK(sharp_norm(vec({3, 1, 2})) == doctest::Approx(1.0));
}

TEST_CASE("sharp norm is shift invariant and bounded by delta in max norm") {
  Rng rng = stream_rng(7, 0);
  for (int s = 0; s < 500; ++s) {
    const Vector v = sample_box(rng, 5, -3.0, 3.0);
    const double c = sample_box(rng, 1, -10.0, 10.0)(0);
    CHECK(sharp_norm(Vector(v.array() + c)) == doctest::Approx(sharp_norm(v)).epsilon(1e-12));
    for (int i = 0; i < 5; ++i) CHECK(max_norm(delta(i, v)) >= sharp_norm(v) - 1e-15);
  }
}

TEST_CASE("difference operator") {
  CHECK(delta(0, vec({5, 5, 5})).isZero());
  CHECK(delta(0, vec({0, 1})) == vec({0, 1}));
  CHECK(delta(1, vec({0, 1})) == vec({-1, 0}));
  CHECK_THROWS_AS(delta(2, vec({0, 1})), InvalidArgument);
  CHECK_THROWS_AS(delta(-1, vec({0, 1})), InvalidArgument);
}

TEST_CASE("simplex vector repairs roundoff and rejects larger violations") {
  const SimplexVec p(vec({1.0 + 5e-13, -5e-13}));
  CHECK(p(1) == 0.0);
  CHECK(p.vec().sum() == doctest::Approx(1.0).epsilon(1e-15));
  CHECK_THROWS_AS(SimplexVec(vec({1.1, -0.1})), InvalidArgument);
  CHECK_THROWS_AS(SimplexVec(vec({0.5, 0.4})), InvalidArgument);
  CHECK_THROWS_AS(SimplexVec(vec({0.5, NAN})), InvalidArgument);
}

TEST_CASE("time grid") {
  const TimeGrid g(2.0, 8);
  CHECK(g.nodes() == 9);
  CHECK(g.node(0) == 0.0);
  CHECK(g.node(8) == 2.0);
  for (std::size_t k = 0; k + 1 < g.nodes(); ++k) CHECK(g.node(k) < g.node(k + 1));
  CHECK_THROWS_AS(TimeGrid(0.0, 4), InvalidArgument);
  CHECK_THROWS_AS(TimeGrid(1.0, 0), InvalidArgument);
}

TEST_CASE("trajectory interpolation") {
  const TimeGrid g(1.0, 4);
  std::vector<Vector> v, s;
  for (std::size_t k = 0; k < g.nodes(); ++k) {
    const double t = g.node(k);
    v.push_back(vec({t * t * t}));
    s.push_back(vec({3 * t * t}));
  }
  const Trajectory hermite(g, v, s);
  const Trajectory linear(g, v);
  // Cubic Hermite reproduces cubics exactly.
  CHECK(hermite.at(0.33)(0) == doctest::Approx(0.33 * 0.33 * 0.33).epsilon(1e-13));
  CHECK(linear.at(0.125)(0) == doctest::Approx(0.5 * (0.0 + 0.25 * 0.25 * 0.25)));
  CHECK(linear.at(1.0)(0) == doctest::Approx(1.0));
}

TEST_CASE("state enumeration") {
  const StateIndexer a = enumerate_states(2, 2);
  REQUIRE(a.size() == 3);
  CHECK(a.state(0) == CountState{2, 0});
  CHECK(a.state(1) == CountState{1, 1});
  CHECK(a.state(2) == CountState{0, 2});
  CHECK(enumerate_states(3, 2).size() == 6);
  CHECK(enumerate_states(2, 64).size() == 65);
  CHECK_THROWS_AS(enumerate_states(10, 40, 1000), StateSpaceTooLarge);
  CHECK_THROWS_AS(enumerate_states(1, 4), InvalidArgument);
  CHECK_THROWS_AS(enumerate_states(2, 0), InvalidArgument);
  try {
    enumerate_states(10, 40, 1000);
  } catch (const StateSpaceTooLarge& e) {
    CHECK(e.size() == binomial(49, 9));
  }
}

TEST_CASE("state indexer round trip and neighbors") {
  for (int d = 2; d <= 4; ++d) {
    for (int N = 1; N <= 30; ++N) {
      const StateIndexer idx(d, N);
      REQUIRE(idx.size() == binomial(N + d - 1, d - 1));
      for (std::size_t s = 0; s < idx.size(); ++s) {
        REQUIRE(idx.index(idx.state(s)) == s);
        if (s > 0) REQUIRE(idx.state(s - 1) > idx.state(s));  // lexicographic, descending
      }
      if (N % 7 != 0) continue;
      for (std::size_t s = 0; s < idx.size(); ++s) {
        for (int j = 0; j < d; ++j) {
          for (int k = 0; k < d; ++k) {
            const auto nb = idx.neighbor(s, j, k);
            if (j == k) {
              CHECK(nb == static_cast<std::int64_t>(s));
            } else if (idx.state(s)[k] == 0) {
              CHECK(nb == -1);
            } else {
              CountState m = idx.state(s);
              --m[k];
              ++m[j];
              CHECK(idx.state(static_cast<std::size_t>(nb)) == m);
            }
          }
        }
      }
    }
  }
}

TEST_CASE("RK4 integration") {
  SUBCASE("constant field") {
    const Trajectory y = integrate([](double, const Vector& v) { return Vector::Zero(v.size()); }, vec({2.5, -1}),
                                   TimeGrid(3.0, 10), Direction::Forward);
    for (std::size_t k = 0; k < y.size(); ++k) CHECK(y[k] == vec({2.5, -1}));
  }
  SUBCASE("exponential decay") {
    const Trajectory y =
        integrate([](double, const Vector& v) { return Vector(-v); }, vec({1.0}), TimeGrid(1.0, 1000), Direction::Forward);
    CHECK(std::abs(y.back()(0) - std::exp(-1.0)) < 1e-10);
  }
  SUBCASE("backward solve of a terminal value problem") {
    // y' = y with y(1) = 1 has y(0) = e^{-1}.
    const Trajectory y =
        integrate([](double, const Vector& v) { return Vector(v); }, vec({1.0}), TimeGrid(1.0, 1000), Direction::Backward);
    CHECK(std::abs(y.front()(0) - std::exp(-1.0)) < 1e-10);
    CHECK(y.back()(0) == 1.0);
  }
  SUBCASE("two-state Kolmogorov with constant rate") {
    // beta_12 = 1, beta_21 = 0.
    auto field = [](double, const Vector& th) { return vec({-th(0), th(0)}); };
    const Trajectory y = integrate(field, vec({1.0, 0.0}), TimeGrid(1.0, 1000), Direction::Forward);
    CHECK(std::abs(y.back()(0) - std::exp(-1.0)) < 1e-9);
    CHECK(std::abs(y.back()(1) - (1.0 - std::exp(-1.0))) < 1e-9);
  }
  SUBCASE("non-finite state aborts with node") {
    auto field = [](double t, const Vector& v) { return t > 0.5 ? Vector::Constant(v.size(), NAN) : Vector(v); };
    CHECK_THROWS_AS(integrate(field, vec({1.0}), TimeGrid(1.0, 10), Direction::Forward), NonFiniteError);
  }
}

TEST_CASE("rate matrices with zero row sums conserve mass") {
  Rng rng = stream_rng(11, 0);
  for (int trial = 0; trial < 20; ++trial) {
    const int d = 2 + trial % 4;
    Matrix B = Matrix::Zero(d, d);
    for (int i = 0; i < d; ++i) {
      for (int j = 0; j < d; ++j) {
        if (i != j) B(i, j) = 3.0 * uniform01(rng);
      }
      B(i, i) = -B.row(i).sum();
    }
    auto field = [&](double t, const Vector& th) -> Vector { return (1.0 + std::sin(5 * t)) * (B.transpose() * th); };
    const Trajectory y = integrate(field, sample_simplex(rng, d), TimeGrid(2.0, 500), Direction::Forward);
    for (std::size_t k = 0; k < y.size(); ++k) CHECK(std::abs(y[k].sum() - 1.0) <= 1e-10);
  }
}
