#include "repcount/train.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <numeric>
#include <sstream>

#include "repcount/errors.hpp"
#include "repcount/losses.hpp"
#include "repcount/rca.hpp"
#include "repcount/rng.hpp"
#include "repcount/tape.hpp"
#include "repcount/threads.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace repcount {

namespace {

constexpr uint64_t kStreamShuffle = 0x7368756666606572ULL;
constexpr uint64_t kStreamRca = 0x7263615f73747265ULL;

using nlohmann::json;

void shuffle_indices(std::vector<int>& idx, SplitMix64& rng) {
  for (size_t i = idx.size(); i > 1; --i) {
    size_t j = static_cast<size_t>(rng.uniform_int(i));
    std::swap(idx[i - 1], idx[j]);
  }
}

Tensor density_column(const DensityMap& g) {
  const int L = g.values.dim(0);
  Tensor col = Tensor::zeros({L, 1});
  for (int i = 0; i < L; ++i) col.at(i, 0) = g.values.at(i);
  return col;
}

// Adam with bias correction; state tensors align with params.items.
struct Adam {
  double lr, b1, b2, eps;
  int64_t step_count = 0;
  std::vector<Tensor> m, v;

  Adam(const ModelParams& params, const TrainConfig& tc)
      : lr(tc.learning_rate), b1(tc.beta1), b2(tc.beta2), eps(tc.adam_eps) {
    for (auto& [name, t] : params.items) {
      m.push_back(Tensor::zeros(t.shape));
      v.push_back(Tensor::zeros(t.shape));
    }
  }

  void step(ModelParams& params, const std::vector<Tensor>& grads) {
    ++step_count;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_count));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_count));
    for (size_t p = 0; p < params.items.size(); ++p) {
      double* th = params.items[p].second.data();
      const double* g = grads[p].data();
      double* mp = m[p].data();
      double* vp = v[p].data();
      const int64_t n = params.items[p].second.numel();
      for (int64_t i = 0; i < n; ++i) {
        mp[i] = b1 * mp[i] + (1.0 - b1) * g[i];
        vp[i] = b2 * vp[i] + (1.0 - b2) * g[i] * g[i];
        const double mhat = mp[i] / c1;
        const double vhat = vp[i] / c2;
        th[i] -= lr * mhat / (std::sqrt(vhat) + eps);
      }
    }
  }
};

struct MemberResult {
  double loss = 0.0;
  std::vector<Tensor> grads;
  bool phase_fallback = false;
};

// forward + loss + backward for one already-augmented raw sequence
MemberResult member_pass(const FeatureSequence& raw, const ModelParams& params,
                         const RunConfig& cfg) {
  const FeatureSequence rs = resample(raw, cfg.model.L);
  const DensityMap g = gaussianize(rs, cfg.model.L);
  const std::vector<IntervalSpan> intervals = derive_intervals(rs);

  int pool_phases = (cfg.train.loss == LossKind::p2l) ? cfg.train.variant.phases : 1;
  bool fallback = false;
  if (pool_phases > 1)
    for (const CycleSpan& c : rs.cycles)
      if (c.length() < pool_phases) {
        pool_phases = 1;
        fallback = true;
        break;
      }

  Tape t;
  ForwardNodes f = model_forward(t, params, cfg.model, rs.features, true);
  Tape::NodeId gnode = t.input(density_column(g), false);
  RefEmbeddings refs = reference_embeddings(t, f.E, rs.cycles, intervals, pool_phases);
  VariantParams vp = cfg.train.variant;
  vp.phases = pool_phases;
  Tape::NodeId loss = training_loss(t, cfg.train.loss, f.p, gnode, refs, cfg.train.weights, vp);
  t.backward(loss);

  MemberResult r;
  r.loss = t.value(loss).at(0);
  r.phase_fallback = fallback;
  r.grads.reserve(f.param_ids.size());
  for (Tape::NodeId id : f.param_ids) r.grads.push_back(t.grad(id));
  return r;
}

}  // namespace

double round_count(double predicted) { return std::nearbyint(predicted); }

double mae(const std::vector<double>& preds, const std::vector<int>& gts) {
  if (preds.size() != gts.size()) throw validation_error("mae: length mismatch");
  double acc = 0.0;
  int64_t k = 0, dropped = 0;
  for (size_t i = 0; i < preds.size(); ++i) {
    if (gts[i] < 0) throw validation_error("mae: negative ground-truth count");
    if (gts[i] == 0) {
      ++dropped;
      continue;
    }
    acc += std::abs(round_count(preds[i]) - gts[i]) / static_cast<double>(gts[i]);
    ++k;
  }
  if (dropped > 0)
    std::fprintf(stderr, "warning: %lld zero-count sequence(s) excluded from MAE\n",
                 static_cast<long long>(dropped));
  if (k == 0) throw validation_error("mae: no sequence with a positive ground-truth count");
  return acc / static_cast<double>(k);
}

double obo(const std::vector<double>& preds, const std::vector<int>& gts) {
  if (preds.size() != gts.size()) throw validation_error("obo: length mismatch");
  if (preds.empty()) throw validation_error("obo: empty input");
  int64_t hits = 0;
  for (size_t i = 0; i < preds.size(); ++i)
    if (std::abs(round_count(preds[i]) - gts[i]) <= 1.0) ++hits;
  return static_cast<double>(hits) / static_cast<double>(preds.size());
}

EvalReport evaluate(const std::vector<FeatureSequence>& split_seqs, const ModelParams& params,
                    const ModelConfig& cfg, const std::string& split_name) {
  if (split_seqs.empty()) throw validation_error("evaluate: empty split " + split_name);
  cfg.validate();
  init_threads();

  EvalReport rep;
  rep.split = split_name;
  rep.records.resize(split_seqs.size());
  const int n = static_cast<int>(split_seqs.size());
  std::vector<std::exception_ptr> errs(static_cast<size_t>(n));
#pragma omp parallel for schedule(dynamic) num_threads(thread_count())
  for (int i = 0; i < n; ++i) {
    try {
      const FeatureSequence rs = resample(split_seqs[static_cast<size_t>(i)], cfg.L);
      Tape t;
      ForwardNodes f = model_forward(t, params, cfg, rs.features, false);
      EvalRecord& r = rep.records[static_cast<size_t>(i)];
      r.id = rs.id;
      r.gt = rs.count;
      r.predicted = count_readout(density_from_node(t, f.p));
      r.rounded = round_count(r.predicted);
    } catch (...) {
      errs[static_cast<size_t>(i)] = std::current_exception();
    }
  }
  for (auto& e : errs)
    if (e) std::rethrow_exception(e);

  std::vector<double> preds;
  std::vector<int> gts;
  preds.reserve(rep.records.size());
  gts.reserve(rep.records.size());
  for (const EvalRecord& r : rep.records) {
    preds.push_back(r.predicted);
    gts.push_back(r.gt);
  }
  rep.mae_value = mae(preds, gts);
  rep.obo_value = obo(preds, gts);
  return rep;
}

void write_eval_report(const std::string& path, const EvalReport& report) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw io_error("cannot write eval report: " + path);
  for (const EvalRecord& r : report.records) {
    json line = {{"id", r.id}, {"gt", r.gt}, {"predicted", r.predicted}, {"rounded", r.rounded}};
    out << line.dump() << '\n';
  }
  json summary = {{"split", report.split},
                  {"sequences", report.records.size()},
                  {"mae", report.mae_value},
                  {"obo", report.obo_value}};
  out << summary.dump() << '\n';
  if (!out) throw io_error("short write on eval report: " + path);
}

EvalReport read_eval_report(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open eval report: " + path);
  EvalReport rep;
  bool summary_seen = false;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded()) throw validation_error("malformed eval report line in " + path);
    if (j.contains("id")) {
      if (summary_seen) throw validation_error("record after summary line in " + path);
      EvalRecord r;
      r.id = j["id"].get<std::string>();
      r.gt = j["gt"].get<int>();
      r.predicted = j["predicted"].get<double>();
      r.rounded = j["rounded"].get<double>();
      rep.records.push_back(std::move(r));
    } else {
      if (summary_seen) throw validation_error("duplicate summary line in " + path);
      rep.split = j["split"].get<std::string>();
      rep.mae_value = j["mae"].get<double>();
      rep.obo_value = j["obo"].get<double>();
      if (j["sequences"].get<size_t>() != rep.records.size())
        throw validation_error("eval report record count mismatch in " + path);
      summary_seen = true;
    }
  }
  if (!summary_seen) throw validation_error("eval report missing summary line: " + path);
  return rep;
}

TrainResult train(const std::vector<FeatureSequence>& train_seqs,
                  const std::vector<FeatureSequence>& val_seqs, const RunConfig& cfg) {
  if (train_seqs.empty()) throw validation_error("train: empty training split");
  if (val_seqs.empty()) throw validation_error("train: empty validation split");
  cfg.model.validate();
  cfg.train.validate();
  for (const FeatureSequence& s : train_seqs)
    if (s.feature_dim() != cfg.model.D_in)
      throw validation_error("train: sequence " + s.id + " has feature_dim " +
                             std::to_string(s.feature_dim()) + ", config expects " +
                             std::to_string(cfg.model.D_in));
  init_threads();

  RcaConfig rca_cfg = cfg.train.rca_cfg;
  if (cfg.train.rca && rca_cfg.tau <= 0.0) rca_cfg.tau = compute_tau(train_seqs);

  ModelParams params = ModelParams::init(cfg.model, cfg.train.seed);
  Adam opt(params, cfg.train);

  TrainResult result;
  const int n = static_cast<int>(train_seqs.size());
  std::vector<int> order(static_cast<size_t>(n));
  std::atomic<bool> phase_warned{false};

  for (int epoch = 0; epoch < cfg.train.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    SplitMix64 shuffle_rng =
        SplitMix64::fork(cfg.train.seed, kStreamShuffle, static_cast<uint64_t>(epoch));
    shuffle_indices(order, shuffle_rng);

    double epoch_loss = 0.0;
    for (int b0 = 0; b0 < n; b0 += cfg.train.batch_size) {
      const int bs = std::min(cfg.train.batch_size, n - b0);

      // augmentation first (cheap, deterministic per (epoch, dataset index))
      std::vector<FeatureSequence> members;
      members.reserve(static_cast<size_t>(bs));
      for (int m = 0; m < bs; ++m) {
        const int idx = order[static_cast<size_t>(b0 + m)];
        if (cfg.train.rca) {
          SplitMix64 rng = SplitMix64::fork(
              cfg.train.seed, kStreamRca,
              static_cast<uint64_t>(epoch) * static_cast<uint64_t>(n) + static_cast<uint64_t>(idx));
          members.push_back(rca_apply(train_seqs[static_cast<size_t>(idx)], rca_cfg, rng));
        } else {
          members.push_back(train_seqs[static_cast<size_t>(idx)]);
        }
      }

      std::vector<MemberResult> results(static_cast<size_t>(bs));
      std::vector<std::exception_ptr> errs(static_cast<size_t>(bs));
#pragma omp parallel for schedule(dynamic) num_threads(thread_count())
      for (int m = 0; m < bs; ++m) {
        try {
          results[static_cast<size_t>(m)] = member_pass(members[static_cast<size_t>(m)], params, cfg);
        } catch (...) {
          errs[static_cast<size_t>(m)] = std::current_exception();
        }
      }
      for (auto& e : errs)
        if (e) std::rethrow_exception(e);

      // merge in member order so the sum is independent of thread count
      std::vector<Tensor> grads;
      grads.reserve(params.items.size());
      for (auto& [name, t] : params.items) grads.push_back(Tensor::zeros(t.shape));
      double batch_loss = 0.0;
      for (int m = 0; m < bs; ++m) {
        batch_loss += results[static_cast<size_t>(m)].loss;
        if (results[static_cast<size_t>(m)].phase_fallback && !phase_warned.exchange(true))
          std::fprintf(stderr,
                       "warning: cycle shorter than %d frames after resampling; "
                       "phase split disabled for affected sequences\n",
                       cfg.train.variant.phases);
        for (size_t p = 0; p < grads.size(); ++p) {
          const double* src = results[static_cast<size_t>(m)].grads[p].data();
          double* dst = grads[p].data();
          const int64_t sz = grads[p].numel();
          for (int64_t i = 0; i < sz; ++i) dst[i] += src[i];
        }
      }
      const double inv = 1.0 / bs;
      for (auto& g : grads)
        for (int64_t i = 0; i < g.numel(); ++i) g.data()[i] *= inv;
      if (!std::isfinite(batch_loss))
        throw runtime_failure("train: loss diverged at epoch " + std::to_string(epoch) +
                              ", batch " + std::to_string(b0 / cfg.train.batch_size));
      epoch_loss += batch_loss;

      opt.step(params, grads);
    }
    epoch_loss /= n;

    EvalReport val = evaluate(val_seqs, params, cfg.model, "val");
    json line = {{"epoch", epoch},
                 {"train_loss", epoch_loss},
                 {"val_mae", val.mae_value},
                 {"val_obo", val.obo_value}};
    result.log.push_back(line);

    if (result.best_epoch < 0 || val.mae_value < result.best_val_mae) {
      result.best_epoch = epoch;
      result.best_val_mae = val.mae_value;
      result.best_val_obo = val.obo_value;
      result.best.items.clear();
      for (auto& [name, t] : params.items) result.best.items.emplace_back(name, t.clone());
    }
  }
  return result;
}

void write_train_log(const std::string& path, const std::vector<nlohmann::json>& log) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw io_error("cannot write training log: " + path);
  for (const json& line : log) out << line.dump() << '\n';
  if (!out) throw io_error("short write on training log: " + path);
}

void export_embeddings(const std::string& path, const std::vector<FeatureSequence>& split_seqs,
                       const ModelParams& params, const ModelConfig& cfg) {
  if (split_seqs.empty()) throw validation_error("export_embeddings: empty split");
  cfg.validate();
  init_threads();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw io_error("cannot write embeddings file: " + path);
  out << "id,kind";
  for (int j = 0; j < cfg.d_model; ++j) out << ",e" << j;
  out << '\n';

  char buf[32];
  auto write_row = [&](const std::string& id, const char* kind, const Tensor& v) {
    out << id << ',' << kind;
    for (int j = 0; j < v.dim(0); ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", v.at(j));
      out << ',' << buf;
    }
    out << '\n';
  };

  for (const FeatureSequence& seq : split_seqs) {
    const FeatureSequence rs = resample(seq, cfg.L);
    const std::vector<IntervalSpan> intervals = derive_intervals(rs);
    Tape t;
    ForwardNodes f = model_forward(t, params, cfg, rs.features, false);
    RefEmbeddings refs = reference_embeddings(t, f.E, rs.cycles, intervals, 1);
    for (Tape::NodeId idn : refs.per_cycle) write_row(rs.id, "cycle", t.value(idn));
    for (Tape::NodeId idn : refs.per_interval) write_row(rs.id, "interval", t.value(idn));
  }
  if (!out) throw io_error("short write on embeddings file: " + path);
}

}  // namespace repcount
