#ifndef REPCOUNT_SEQUENCE_HPP
#define REPCOUNT_SEQUENCE_HPP

#include <string>
#include <vector>

#include "repcount/tensor.hpp"

namespace repcount {

// Inclusive frame span of one repetition cycle.
struct CycleSpan {
  int start = 0;
  int end = 0;
  int length() const { return end - start + 1; }
};

// Inclusive frame span of non-cycle content between/around cycles.
struct IntervalSpan {
  int start = 0;
  int end = 0;
  int length() const { return end - start + 1; }
};

// A length-L sequence of D-dimensional frame features with cycle
// annotations and the ground-truth count.
struct FeatureSequence {
  std::string id;
  Tensor features;  // [L × D]
  std::vector<CycleSpan> cycles;
  int count = 0;

  int length() const { return features.dim(0); }
  int feature_dim() const { return features.dim(1); }

  // count == cycles.size(); spans sorted, pairwise disjoint, in range
  void validate() const;
};

// Per-frame action density; sums to the count for ground-truth maps.
struct DensityMap {
  enum class Kind { predicted, ground_truth };
  Tensor values;  // [L]
  Kind kind = Kind::predicted;

  double sum() const {
    double s = 0.0;
    for (int i = 0; i < values.dim(0); ++i) s += values.at(i);
    return s;
  }
};

// Maximal runs of frames not covered by any cycle span, including leading
// and trailing runs; runs shorter than min_interval_len are discarded.
std::vector<IntervalSpan> derive_intervals(const FeatureSequence& seq, int min_interval_len = 1);

// Ground-truth density map on frames 0..L-1: one Gaussian per cycle with
// μ = (start+end)/2 and σ = max(cycle length, 1)/6, each renormalized
// after truncation so it contributes exactly mass 1. Spans must already be
// expressed in the target frame space (resample first).
DensityMap gaussianize(const FeatureSequence& seq, int L);

// Uniform resampling to exactly L frames: output frame i takes raw frame
// floor(i·L_raw/L); span endpoints map through j ↦ floor(j·L/L_raw). When
// downsampling collapses neighbouring spans onto the same output frames, a
// left-to-right pass restores disjointness (count is never changed).
FeatureSequence resample(const FeatureSequence& seq, int L);

}  // namespace repcount

#endif
