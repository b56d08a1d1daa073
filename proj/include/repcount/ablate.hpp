#ifndef REPCOUNT_ABLATE_HPP
#define REPCOUNT_ABLATE_HPP

#include <string>
#include <vector>

#include "repcount/config.hpp"
#include "repcount/sequence.hpp"

namespace repcount {

// middle element (mean of the middle two when even); input copied
double median(std::vector<double> v);

struct AblateCell {
  std::string suite;
  std::string config;
  int seed_count = 0;
  double median_mae = 0.0;
  double median_obo = 0.0;
};

struct AblateResult {
  std::vector<AblateCell> cells;  // fixed row order per suite
};

// Runs the requested comparison matrix, 5 seeds per cell (base seed,
// base seed+1, …), training on train/val and scoring the test split.
// Suites and their rows:
//   phases         p2l loss with 1 / 2 / 3 phase blocks per cycle
//   losses         segment-term matrix: none / pull_only / push_only / both
//   variants       p2l / contrastive / triplet
//   rca            count augmentation off / on
//   sampling_rate  L = 64 / 128
//   all            every suite above, concatenated
// Per-seed artifacts (training log + test report) are stored under
// <out_dir>/<suite>/<config>/seed<k>/ so every cell is recomputable.
// Cells run in parallel; row order and results are deterministic.
AblateResult ablate(const std::vector<FeatureSequence>& train_seqs,
                    const std::vector<FeatureSequence>& val_seqs,
                    const std::vector<FeatureSequence>& test_seqs, const RunConfig& base,
                    const std::string& suite, const std::string& out_dir);

// header: suite,config,seed_count,median_MAE,median_OBO
void write_ablate_csv(const std::string& path, const AblateResult& result);

}  // namespace repcount

#endif
