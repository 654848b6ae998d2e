#pragma once

#include <cstdint>
#include <random>

namespace deepddm {

using Rng = std::mt19937_64;

// splitmix64 finalizer; used to derive independent streams from one base seed.
inline std::uint64_t mix_seed(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Seed for sub-stream `stream` of `base`. Stream ids are small integers
/// (subdomain index, purpose tag) so `base ^ stream` is whitened first.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  return mix_seed(mix_seed(base) ^ mix_seed(stream + 0x51ed2701ULL));
}

/// Uniform double in [0, 1) with 53 random bits; platform independent.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

/// Fisher-Yates with a platform independent index draw.
template <class Vec>
void shuffle_in_place(Vec& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(i));
    using std::swap;
    swap(v[i - 1], v[j < i ? j : i - 1]);
  }
}

}  // namespace deepddm
