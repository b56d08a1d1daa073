#ifndef REPCOUNT_RCA_HPP
#define REPCOUNT_RCA_HPP

#include <cstdint>
#include <vector>

#include "repcount/rng.hpp"
#include "repcount/sequence.hpp"

namespace repcount {

// Random count augmentation: sequences whose count reaches the dataset
// average may be probabilistically cropped down to a uniformly drawn lower
// count, rebalancing the long tail of high-count videos.
struct RcaConfig {
  double tau = 0.0;   // threshold; ≤ 0 means "compute from the dataset"
  double prob = 0.5;  // chance of resampling an eligible sequence
  uint64_t seed = 1;

  void validate() const;
};

// Arithmetic mean of ground-truth counts.
double compute_tau(const std::vector<FeatureSequence>& dataset);

// count < τ → unchanged. Otherwise, with probability prob, draw
// T_new ∈ {1..⌊τ⌋} uniformly, keep the first T_new cycles and crop at
// min(L−1, end of cycle T_new + half the following gap). Never raises the
// count. Deterministic given the rng state.
FeatureSequence rca_apply(const FeatureSequence& seq, const RcaConfig& cfg, SplitMix64& rng);

}  // namespace repcount

#endif
