#include "repcount/sequence.hpp"

#include <cmath>

#include "repcount/errors.hpp"

namespace repcount {

void FeatureSequence::validate() const {
  if (!features.store || features.rank() != 2)
    throw validation_error("sequence '" + id + "': features must be [L×D]");
  if (count != static_cast<int>(cycles.size()))
    throw validation_error("sequence '" + id + "': count does not match cycle spans");
  const int L = length();
  int prev_end = -1;
  for (const CycleSpan& c : cycles) {
    if (c.start < 0 || c.end < c.start || c.end >= L)
      throw validation_error("sequence '" + id + "': span out of range");
    if (c.start <= prev_end)
      throw validation_error("sequence '" + id + "': spans not sorted/disjoint");
    prev_end = c.end;
  }
}

std::vector<IntervalSpan> derive_intervals(const FeatureSequence& seq, int min_interval_len) {
  const int L = seq.length();
  std::vector<IntervalSpan> out;
  int cursor = 0;
  auto emit = [&](int s, int e) {
    if (e - s + 1 >= min_interval_len) out.push_back({s, e});
  };
  for (const CycleSpan& c : seq.cycles) {
    if (c.start > cursor) emit(cursor, c.start - 1);
    cursor = c.end + 1;
  }
  if (cursor < L) emit(cursor, L - 1);
  return out;
}

DensityMap gaussianize(const FeatureSequence& seq, int L) {
  DensityMap map;
  map.kind = DensityMap::Kind::ground_truth;
  map.values = Tensor::zeros({L});
  std::vector<double> bump(static_cast<size_t>(L));
  for (const CycleSpan& c : seq.cycles) {
    const double mu = 0.5 * (c.start + c.end);
    const double sigma = std::max(c.length(), 1) / 6.0;
    double mass = 0.0;
    for (int i = 0; i < L; ++i) {
      const double z = (i - mu) / sigma;
      bump[static_cast<size_t>(i)] = std::exp(-0.5 * z * z);
      mass += bump[static_cast<size_t>(i)];
    }
    // truncation to 0..L-1 happened implicitly; renormalize so this cycle
    // contributes exactly 1 to the sum
    const double inv = 1.0 / mass;
    for (int i = 0; i < L; ++i) map.values.at(i) += bump[static_cast<size_t>(i)] * inv;
  }
  return map;
}

FeatureSequence resample(const FeatureSequence& seq, int L) {
  if (L < 1) throw validation_error("resample: target length must be ≥ 1");
  if (!seq.features.store || seq.features.dim(0) < 1)
    throw validation_error("resample: empty input sequence");
  const int64_t lraw = seq.length();
  const int D = seq.feature_dim();

  FeatureSequence out;
  out.id = seq.id;
  out.count = seq.count;
  out.features = Tensor::zeros({L, D});
  for (int i = 0; i < L; ++i) {
    const int src = static_cast<int>(static_cast<int64_t>(i) * lraw / L);
    for (int j = 0; j < D; ++j) out.features.at(i, j) = seq.features.at(src, j);
  }

  auto map_idx = [&](int j) { return static_cast<int>(static_cast<int64_t>(j) * L / lraw); };
  out.cycles.reserve(seq.cycles.size());
  for (const CycleSpan& c : seq.cycles) out.cycles.push_back({map_idx(c.start), map_idx(c.end)});

  // Downsampling can land neighbouring spans on the same output frame;
  // nudge starts rightward to keep spans sorted and pairwise disjoint
  // without dropping any (the count must survive resampling).
  int prev_end = -1;
  for (CycleSpan& c : out.cycles) {
    if (c.start <= prev_end) c.start = prev_end + 1;
    if (c.end < c.start) c.end = c.start;
    if (c.end >= L)
      throw validation_error("resample: more cycles than frames after downsampling '" + seq.id + "'");
    prev_end = c.end;
  }
  out.validate();
  return out;
}

}  // namespace repcount
