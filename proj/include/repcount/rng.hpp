#ifndef REPCOUNT_RNG_HPP
#define REPCOUNT_RNG_HPP

#include <cmath>
#include <cstdint>

namespace repcount {

// SplitMix64. Chosen over std::mt19937_64 because the standard does not pin
// the distributions' algorithms, and every byte we emit must be reproducible
// across platforms and compilers. The generator algorithm is part of the
// documented output contract (see README).
class SplitMix64 {
 public:
  explicit SplitMix64(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // uniform in [0, 1): 53 mantissa bits, exactly representable grid
  double uniform() { return (next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // uniform integer in [0, n), n ≥ 1; modulo bias is < n / 2^64, irrelevant
  // for the desk-scale ranges used here but kept out of statistical tests
  // anyway by the ranges being tiny powers of magnitude below 2^32
  uint64_t uniform_int(uint64_t n) { return next_u64() % n; }

  // inclusive integer range
  int64_t uniform_range(int64_t lo, int64_t hi) {
    return lo + static_cast<int64_t>(uniform_int(static_cast<uint64_t>(hi - lo + 1)));
  }

  // Box–Muller, one value per call (second value discarded to keep the
  // stream position a pure function of the call count)
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  bool bernoulli(double p) { return uniform() < p; }

  // Independent substream addressed by (stream, index). Used so parallel
  // work items draw from disjoint deterministic streams no matter the
  // execution order.
  static SplitMix64 fork(uint64_t seed, uint64_t stream, uint64_t index) {
    SplitMix64 mix(seed);
    uint64_t a = mix.next_u64() ^ (0x9e3779b97f4a7c15ULL * (stream + 1));
    SplitMix64 mix2(a);
    uint64_t b = mix2.next_u64() ^ (0xbf58476d1ce4e5b9ULL * (index + 1));
    return SplitMix64(b);
  }

 private:
  uint64_t state_;
};

}  // namespace repcount

#endif
