#include "repcount/rca.hpp"

#include <algorithm>
#include <cmath>

#include "repcount/errors.hpp"

namespace repcount {

void RcaConfig::validate() const {
  if (tau > 0.0 && tau < 1.0) throw config_error("rca: tau must be ≥ 1 (or ≤ 0 for auto)");
  if (prob < 0.0 || prob > 1.0) throw config_error("rca: prob must be in [0,1]");
}

double compute_tau(const std::vector<FeatureSequence>& dataset) {
  if (dataset.empty()) throw validation_error("compute_tau: empty dataset");
  double s = 0.0;
  for (const FeatureSequence& seq : dataset) s += seq.count;
  return s / static_cast<double>(dataset.size());
}

FeatureSequence rca_apply(const FeatureSequence& seq, const RcaConfig& cfg, SplitMix64& rng) {
  cfg.validate();
  if (cfg.tau <= 0.0) throw config_error("rca_apply: tau must be resolved before use");
  if (seq.count < cfg.tau) return seq;
  if (!rng.bernoulli(cfg.prob)) return seq;

  const int cap = static_cast<int>(std::floor(cfg.tau));
  const int t_new = static_cast<int>(rng.uniform_range(1, cap));
  // the drawn count can equal the current one only when count == ⌊τ⌋ == t_new;
  // the crop below is still applied so trailing content gets trimmed consistently

  const CycleSpan& last = seq.cycles[static_cast<size_t>(t_new - 1)];
  int following_gap;
  if (t_new < seq.count) {
    following_gap = seq.cycles[static_cast<size_t>(t_new)].start - last.end - 1;
  } else {
    following_gap = seq.length() - 1 - last.end;
  }
  const int crop_end = std::min(seq.length() - 1, last.end + following_gap / 2);

  FeatureSequence out;
  out.id = seq.id;
  out.count = t_new;
  out.cycles.assign(seq.cycles.begin(), seq.cycles.begin() + t_new);
  const int new_len = crop_end + 1;
  const int D = seq.feature_dim();
  out.features = Tensor::zeros({new_len, D});
  for (int i = 0; i < new_len; ++i)
    for (int d = 0; d < D; ++d) out.features.at(i, d) = seq.features.at(i, d);
  out.validate();
  return out;
}

}  // namespace repcount
