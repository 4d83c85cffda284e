#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <vector>

namespace ff {

// The RNG used everywhere in this project is xoshiro256** seeded through
// splitmix64. Both are fixed, portable bit-for-bit algorithms; the standard
// library distributions are implementation-defined and must not be used
// anywhere a reproducible draw is required.

/// splitmix64 as a pure function of its input word.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Derives an independent stream seed from a base seed and a stream index
/// (e.g. one stream per tree).
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(seed + 0x9E3779B97F4A7C15ULL * (stream + 1));
}

/// xoshiro256** by Blackman & Vigna.
class Xoshiro256ss {
 public:
  explicit Xoshiro256ss(std::uint64_t seed) {
    std::uint64_t sm = seed;
    for (auto& word : state_) {
      sm = splitmix64(sm);
      word = sm;
    }
  }

  std::uint64_t next() {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  /// Unbiased draw in [0, bound) via rejection; bound must be > 0.
  std::uint64_t next_below(std::uint64_t bound) {
    const std::uint64_t limit = (UINT64_MAX / bound) * bound;
    std::uint64_t r = next();
    while (r >= limit) r = next();
    return r % bound;
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }
  std::uint64_t state_[4] = {};
};

/// Draws k distinct values from [0, n) by partial Fisher-Yates and returns
/// them sorted ascending. Requires k <= n.
inline std::vector<std::int32_t> sample_without_replacement(Xoshiro256ss& rng,
                                                            std::size_t n,
                                                            std::size_t k) {
  std::vector<std::int32_t> pool(n);
  for (std::size_t i = 0; i < n; ++i) pool[i] = static_cast<std::int32_t>(i);
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.next_below(n - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(k);
  std::sort(pool.begin(), pool.end());
  return pool;
}

/// Seeded in-place shuffle (Fisher-Yates, portable).
template <typename T>
void shuffle_inplace(Xoshiro256ss& rng, std::vector<T>& items) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.next_below(i));
    std::swap(items[i - 1], items[j]);
  }
}

}  // namespace ff
