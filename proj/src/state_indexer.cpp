#include "mfg/state_indexer.hpp"

#include <limits>
#include <numeric>

namespace mfg {

std::uint64_t binomial(std::uint64_t n, std::uint64_t k) {
  if (k > n) return 0;
  k = std::min(k, n - k);
  std::uint64_t r = 1;
  for (std::uint64_t i = 1; i <= k; ++i) {
    // r * (n - k + i) / i is exact at every step.
    const std::uint64_t num = n - k + i;
    const std::uint64_t g = std::gcd(r, i);
    const std::uint64_t rr = r / g;
    const std::uint64_t ii = i / g;
    const std::uint64_t nn = num / ii;
    if (rr > std::numeric_limits<std::uint64_t>::max() / nn) return std::numeric_limits<std::uint64_t>::max();
    r = rr * nn;
  }
  return r;
}

std::uint64_t count_states(int d, int N) {
  if (d < 1 || N < 0) return 0;
  return binomial(static_cast<std::uint64_t>(N + d - 1), static_cast<std::uint64_t>(d - 1));
}

namespace {

void fill(int d, int pos, int remaining, CountState& cur, std::vector<CountState>& out) {
  if (pos == d - 1) {
    cur[pos] = remaining;
    out.push_back(cur);
    return;
  }
  for (int v = remaining; v >= 0; --v) {
    cur[pos] = v;
    fill(d, pos + 1, remaining - v, cur, out);
  }
}

}  // namespace

StateIndexer::StateIndexer(int d, int N, std::uint64_t cap) : d_(d), N_(N) {
  if (d < 2) throw InvalidArgument("enumerate_states: d must be at least 2");
  if (N < 1) throw InvalidArgument("enumerate_states: N must be at least 1");
  const std::uint64_t size = count_states(d, N);
  if (size > cap) throw StateSpaceTooLarge(size, cap);

  states_.reserve(size);
  CountState cur(d, 0);
  fill(d, 0, N, cur, states_);

  moves_.assign(states_.size() * d * d, -1);
  for (std::size_t s = 0; s < states_.size(); ++s) {
    CountState m = states_[s];
    for (int j = 0; j < d; ++j) {
      for (int k = 0; k < d; ++k) {
        auto& slot = moves_[(s * d + j) * d + k];
        if (j == k) {
          slot = static_cast<std::int64_t>(s);
        } else if (m[k] > 0) {
          --m[k];
          ++m[j];
          slot = static_cast<std::int64_t>(index(m));
          ++m[k];
          --m[j];
        }
      }
    }
  }
}

std::size_t StateIndexer::index(const CountState& n) const {
  if (static_cast<int>(n.size()) != d_) throw InvalidArgument("StateIndexer::index: wrong dimension");
  std::uint64_t rank = 0;
  int remaining = N_;
  for (int p = 0; p + 1 < d_; ++p) {
    if (n[p] < 0 || n[p] > remaining) throw InvalidArgument("StateIndexer::index: not a state of S^d_N");
    // States preceding n at this position have a larger p-th count; the
    // completions of the tail sum to binomial(R - n^p + m, m + 1), m = d - p - 2.
    const int m = d_ - p - 2;
    rank += binomial(static_cast<std::uint64_t>(remaining - n[p] + m), static_cast<std::uint64_t>(m + 1));
    remaining -= n[p];
  }
  if (n[d_ - 1] != remaining) throw InvalidArgument("StateIndexer::index: counts do not sum to N");
  return static_cast<std::size_t>(rank);
}

Vector StateIndexer::fraction(std::size_t index) const {
  Vector f(d_);
  for (int l = 0; l < d_; ++l) f(l) = static_cast<double>(states_[index][l]) / N_;
  return f;
}

StateIndexer enumerate_states(int d, int N, std::uint64_t cap) { return StateIndexer(d, N, cap); }

}  // namespace mfg
