#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace asrep {

// 64-bit FNV-1a. Used for substream tags and for artifact content hashes.
inline uint64_t fnv1a64(std::string_view bytes) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// splitmix64 finalizer, good avalanche for deriving seeds.
inline uint64_t mix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Reproducible seed for a named substream of a root seed. Keying streams by
// (root, tag, indices) instead of sharing one engine keeps results independent
// of batch composition, thread count and evaluation order.
inline uint64_t substream_seed(uint64_t root, std::string_view tag, uint64_t a = 0,
                               uint64_t b = 0) {
  uint64_t h = mix64(root ^ fnv1a64(tag));
  h = mix64(h ^ a);
  return mix64(h ^ b);
}

// Deterministic RNG. std::mt19937_64 is fully specified by the standard and
// every draw helper below is hand-rolled, so streams are bit-identical across
// standard library implementations.
class Rng {
 public:
  explicit Rng(uint64_t seed) : eng_(seed) {}

  uint64_t next() { return eng_(); }

  // Unbiased integer in [0, bound), bound > 0. Lemire-style rejection.
  uint64_t below(uint64_t bound) {
    const uint64_t threshold = (0 - bound) % bound;
    uint64_t r = next();
    while (r < threshold) r = next();
    return r % bound;
  }

  // Integer in [lo, hi], inclusive.
  int64_t uniform_int(int64_t lo, int64_t hi) {
    return lo + static_cast<int64_t>(below(static_cast<uint64_t>(hi - lo) + 1));
  }

  // Double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  // Standard normal via Box-Muller. One fresh pair per call; the sine half is
  // discarded so consumption is a predictable two draws per sample.
  double gauss() {
    const double u1 = 1.0 - uniform();  // (0, 1], keeps the log finite
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  // Normal(0, stddev) with samples beyond two standard deviations rejected.
  double truncated_normal(double stddev) {
    double z = gauss();
    while (std::abs(z) > 2.0) z = gauss();
    return z * stddev;
  }

 private:
  std::mt19937_64 eng_;
};

// In-place Fisher-Yates shuffle driven by the Rng above (std::shuffle is not
// reproducible across implementations).
template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (size_t i = v.size(); i > 1; --i) {
    std::swap(v[i - 1], v[rng.below(i)]);
  }
}

}  // namespace asrep
