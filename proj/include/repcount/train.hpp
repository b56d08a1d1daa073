#ifndef REPCOUNT_TRAIN_HPP
#define REPCOUNT_TRAIN_HPP

#include <string>
#include <vector>

#include <json.hpp>

#include "repcount/config.hpp"
#include "repcount/model.hpp"
#include "repcount/sequence.hpp"

namespace repcount {

// Counting error of one split. Rounding to integer counts uses
// round-to-nearest-even (std::nearbyint under the default rounding mode).
double round_count(double predicted);

// (1/K) Σ |round(T_i) − T̄_i| / T̄_i. Sequences with T̄ = 0 are dropped with
// a warning on stderr; an input with no positive-count sequence is an error.
double mae(const std::vector<double>& preds, const std::vector<int>& gts);

// fraction of sequences with |round(T_i) − T̄_i| ≤ 1; zero-count included
double obo(const std::vector<double>& preds, const std::vector<int>& gts);

struct EvalRecord {
  std::string id;
  int gt = 0;
  double predicted = 0.0;
  double rounded = 0.0;
};

struct EvalReport {
  std::string split;
  std::vector<EvalRecord> records;
  double mae_value = 0.0;
  double obo_value = 0.0;
};

// Forward every sequence (resampled to cfg.L) and aggregate MAE/OBO.
// Parallel across sequences; results are order-independent.
EvalReport evaluate(const std::vector<FeatureSequence>& split_seqs, const ModelParams& params,
                    const ModelConfig& cfg, const std::string& split_name);

// line-delimited JSON: one record line per sequence, then one summary line
void write_eval_report(const std::string& path, const EvalReport& report);
EvalReport read_eval_report(const std::string& path);

struct TrainResult {
  ModelParams best;        // parameters at the best validation MAE
  int best_epoch = -1;     // 0-based; ties keep the earlier epoch
  double best_val_mae = 0.0;
  double best_val_obo = 0.0;
  std::vector<nlohmann::json> log;  // one line per epoch
};

// Per epoch: seeded shuffle → optional count augmentation (substream per
// (epoch, sequence index)) → resample to L → density ground truth →
// forward → selected loss → gradients averaged over the batch in member
// order → Adam step; then a validation pass. Bit-deterministic for a fixed
// seed and config. Aborts with runtime_failure when the loss stops being
// finite. cfg.train.rca_cfg.seed is ignored here — augmentation streams
// derive from cfg.train.seed.
TrainResult train(const std::vector<FeatureSequence>& train_seqs,
                  const std::vector<FeatureSequence>& val_seqs, const RunConfig& cfg);

void write_train_log(const std::string& path, const std::vector<nlohmann::json>& log);

// One row per cycle/interval segment of every sequence: id, kind, then the
// d_model embedding coordinates. CSV with header.
void export_embeddings(const std::string& path, const std::vector<FeatureSequence>& split_seqs,
                       const ModelParams& params, const ModelConfig& cfg);

}  // namespace repcount

#endif
