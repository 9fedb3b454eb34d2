#ifndef MFG_RANDOM_HPP
#define MFG_RANDOM_HPP

#include <cstdint>
#include <random>

#include "mfg/core.hpp"

namespace mfg {

using Rng = std::mt19937_64;

/// Independent generator for stream `stream` of master seed `seed`; the
/// result depends only on the pair, never on call order or thread.
inline Rng stream_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                    0x6d66u};
  return Rng(seq);
}

inline double uniform01(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

/// Uniform draw from the probability simplex (Dirichlet(1, ..., 1)).
inline Vector sample_simplex(Rng& rng, Eigen::Index d) {
  std::exponential_distribution<double> e(1.0);
  Vector p(d);
  for (Eigen::Index i = 0; i < d; ++i) p(i) = e(rng);
  return p / p.sum();
}

inline Vector sample_box(Rng& rng, Eigen::Index d, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  Vector v(d);
  for (Eigen::Index i = 0; i < d; ++i) v(i) = u(rng);
  return v;
}

}  // namespace mfg

#endif  // MFG_RANDOM_HPP
