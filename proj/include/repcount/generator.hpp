#ifndef REPCOUNT_GENERATOR_HPP
#define REPCOUNT_GENERATOR_HPP

#include <array>
#include <cstdint>
#include <vector>

#include "repcount/sequence.hpp"

namespace repcount {

// Synthetic irregular-repetition sequences: every cycle renders one shared
// smooth motif (per-cycle time warp + amplitude jitter + noise), while the
// frames between cycles carry slow drift or, with some probability, a
// distinct distractor motif. Fully determined by (seed, index).
struct GenConfig {
  int L = 200;     // raw generated length (training resamples later)
  int D = 16;      // feature dimension
  std::array<int, 2> count_range = {3, 11};
  std::array<int, 2> cycle_len_range = {8, 18};
  std::array<int, 2> interval_len_range = {2, 8};
  double noise_std = 0.12;
  double warp_strength = 0.45;
  double distractor_prob = 0.8;
  uint64_t seed = 1;

  void validate() const;  // throws config_error on nonsense ranges
};

struct GenDataset {
  std::vector<FeatureSequence> sequences;
  GenConfig config;
};

// Deterministic in (cfg.seed, index); throws runtime_failure when 100
// layout attempts cannot fit the drawn spans into L frames.
FeatureSequence gen_sequence(const GenConfig& cfg, int index);

// n sequences split by index into train/val/test by the given fractions
// (must sum to 1): train gets floor(f0·n), val floor(f1·n), test the rest.
std::array<GenDataset, 3> gen_dataset(const GenConfig& cfg, int n,
                                      const std::array<double, 3>& fractions);

}  // namespace repcount

#endif
