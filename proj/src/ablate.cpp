#include "repcount/ablate.hpp"

#include <algorithm>
#include <exception>
#include <filesystem>
#include <fstream>

#include "repcount/errors.hpp"
#include "repcount/threads.hpp"
#include "repcount/train.hpp"

namespace repcount {

namespace {

constexpr int kSeedsPerCell = 5;

struct CellSpec {
  std::string suite;
  std::string config;
  RunConfig cfg;
};

std::vector<CellSpec> cells_for_suite(const std::string& suite, const RunConfig& base) {
  std::vector<CellSpec> cells;
  auto push = [&](const std::string& s, const std::string& label, RunConfig cfg) {
    cells.push_back({s, label, std::move(cfg)});
  };
  if (suite == "phases" || suite == "all") {
    for (int m = 1; m <= 3; ++m) {
      RunConfig c = base;
      c.train.loss = LossKind::p2l;
      c.train.variant.phases = m;
      push("phases", "phases=" + std::to_string(m), c);
    }
  }
  if (suite == "losses" || suite == "all") {
    const struct {
      const char* label;
      double alpha, beta;
    } rows[] = {{"none", 0, 0}, {"pull_only", 1, 0}, {"push_only", 0, 1}, {"both", 1, 1}};
    for (auto& r : rows) {
      RunConfig c = base;
      c.train.loss = LossKind::p2l;
      c.train.weights.alpha = r.alpha;
      c.train.weights.beta = r.beta;
      push("losses", r.label, c);
    }
  }
  if (suite == "variants" || suite == "all") {
    for (LossKind k : {LossKind::p2l, LossKind::contrastive, LossKind::triplet}) {
      RunConfig c = base;
      c.train.loss = k;
      push("variants", loss_kind_name(k), c);
    }
  }
  if (suite == "rca" || suite == "all") {
    for (bool on : {false, true}) {
      RunConfig c = base;
      c.train.rca = on;
      push("rca", on ? "on" : "off", c);
    }
  }
  if (suite == "sampling_rate" || suite == "all") {
    for (int L : {64, 128}) {
      RunConfig c = base;
      c.model.L = L;
      push("sampling_rate", "L=" + std::to_string(L), c);
    }
  }
  if (cells.empty()) throw config_error("unknown ablation suite: " + suite);
  return cells;
}

}  // namespace

double median(std::vector<double> v) {
  if (v.empty()) throw validation_error("median of empty set");
  std::sort(v.begin(), v.end());
  const size_t n = v.size();
  return (n % 2 == 1) ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

AblateResult ablate(const std::vector<FeatureSequence>& train_seqs,
                    const std::vector<FeatureSequence>& val_seqs,
                    const std::vector<FeatureSequence>& test_seqs, const RunConfig& base,
                    const std::string& suite, const std::string& out_dir) {
  if (test_seqs.empty()) throw validation_error("ablate: empty test split");
  init_threads();
  std::vector<CellSpec> cells = cells_for_suite(suite, base);

  struct Job {
    int cell;
    int seed_index;
  };
  std::vector<Job> jobs;
  for (int c = 0; c < static_cast<int>(cells.size()); ++c)
    for (int k = 0; k < kSeedsPerCell; ++k) jobs.push_back({c, k});

  for (const CellSpec& cell : cells)
    std::filesystem::create_directories(std::filesystem::path(out_dir) / cell.suite / cell.config);

  std::vector<double> maes(jobs.size()), obos(jobs.size());
  std::vector<std::exception_ptr> errs(jobs.size());
  const int nj = static_cast<int>(jobs.size());
#pragma omp parallel for schedule(dynamic) num_threads(thread_count())
  for (int j = 0; j < nj; ++j) {
    try {
      const CellSpec& cell = cells[static_cast<size_t>(jobs[static_cast<size_t>(j)].cell)];
      const int k = jobs[static_cast<size_t>(j)].seed_index;
      RunConfig cfg = cell.cfg;
      cfg.train.seed = cell.cfg.train.seed + static_cast<uint64_t>(k);

      std::filesystem::path dir = std::filesystem::path(out_dir) / cell.suite / cell.config /
                                  ("seed" + std::to_string(k));
      std::filesystem::create_directories(dir);

      TrainResult tr = train(train_seqs, val_seqs, cfg);
      EvalReport test = evaluate(test_seqs, tr.best, cfg.model, "test");
      write_train_log((dir / "train_log.jsonl").string(), tr.log);
      write_eval_report((dir / "eval_test.jsonl").string(), test);
      maes[static_cast<size_t>(j)] = test.mae_value;
      obos[static_cast<size_t>(j)] = test.obo_value;
    } catch (...) {
      errs[static_cast<size_t>(j)] = std::current_exception();
    }
  }
  for (auto& e : errs)
    if (e) std::rethrow_exception(e);

  AblateResult result;
  for (int c = 0; c < static_cast<int>(cells.size()); ++c) {
    std::vector<double> cm, co;
    for (int j = 0; j < nj; ++j)
      if (jobs[static_cast<size_t>(j)].cell == c) {
        cm.push_back(maes[static_cast<size_t>(j)]);
        co.push_back(obos[static_cast<size_t>(j)]);
      }
    AblateCell row;
    row.suite = cells[static_cast<size_t>(c)].suite;
    row.config = cells[static_cast<size_t>(c)].config;
    row.seed_count = kSeedsPerCell;
    row.median_mae = median(cm);
    row.median_obo = median(co);
    result.cells.push_back(std::move(row));
  }
  return result;
}

void write_ablate_csv(const std::string& path, const AblateResult& result) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw io_error("cannot write ablation table: " + path);
  out << "suite,config,seed_count,median_MAE,median_OBO\n";
  char buf[64];
  for (const AblateCell& c : result.cells) {
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g", c.median_mae, c.median_obo);
    out << c.suite << ',' << c.config << ',' << c.seed_count << ',' << buf << '\n';
  }
  if (!out) throw io_error("short write on ablation table: " + path);
}

}  // namespace repcount
