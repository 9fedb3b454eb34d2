#ifndef MFG_STATE_INDEXER_HPP
#define MFG_STATE_INDEXER_HPP

#include <cstdint>
#include <vector>

#include "mfg/core.hpp"

namespace mfg {

/// Occupancy vector n in S^d_N: player counts per state, summing to N.
using CountState = std::vector<int>;

/// Binomial coefficient, saturating at UINT64_MAX.
std::uint64_t binomial(std::uint64_t n, std::uint64_t k);

/// Dense lexicographic enumeration of S^d_N.
///
/// States are ordered by the first coordinate descending, then the second,
/// and so on: for d = 2, N = 2 the order is (2,0), (1,1), (0,2).
/// Neighbor tables give the index of n + e_j - e_k.
class StateIndexer {
 public:
  static constexpr std::uint64_t kDefaultCap = 2'000'000;

  StateIndexer(int d, int N, std::uint64_t cap = kDefaultCap);

  int dim() const { return d_; }
  int players() const { return N_; }
  std::size_t size() const { return states_.size(); }

  const CountState& state(std::size_t index) const { return states_[index]; }
  std::size_t index(const CountState& n) const;

  /// Index of n + e_j - e_k (one player moves from k to j), or -1 when n^k = 0.
  /// For j == k the state itself is returned.
  std::int64_t neighbor(std::size_t index, int j, int k) const {
    return moves_[(index * d_ + j) * d_ + k];
  }

  /// n / N as a distribution.
  Vector fraction(std::size_t index) const;

 private:
  int d_;
  int N_;
  std::vector<CountState> states_;
  std::vector<std::int64_t> moves_;
};

/// Size of S^d_N, i.e. binomial(N + d - 1, d - 1).
std::uint64_t count_states(int d, int N);

/// Validates inputs, checks the cap and builds the indexer.
StateIndexer enumerate_states(int d, int N, std::uint64_t cap = StateIndexer::kDefaultCap);

}  // namespace mfg

#endif  // MFG_STATE_INDEXER_HPP
