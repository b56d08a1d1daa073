#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "repcount/ablate.hpp"
#include "repcount/errors.hpp"
#include "repcount/generator.hpp"
#include "repcount/train.hpp"

namespace fs = std::filesystem;
using repcount::AblateResult;
using repcount::FeatureSequence;
using repcount::GenConfig;
using repcount::RunConfig;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("repcount_abl_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

RunConfig tiny_base() {
  RunConfig cfg;
  cfg.model.L = 12;
  cfg.model.D_in = 5;
  cfg.model.d_model = 16;
  cfg.model.heads = 2;
  cfg.model.scales = {1, 2};
  cfg.model.fusion_channels = 4;
  cfg.model.head_hidden = 8;
  cfg.model.encoder_layers = 1;
  cfg.train.epochs = 1;
  cfg.train.batch_size = 3;
  cfg.train.learning_rate = 1e-3;
  cfg.train.seed = 7;
  return cfg;
}

std::vector<FeatureSequence> gen_split(int first, int n) {
  GenConfig gc;
  gc.L = 40;
  gc.D = 5;
  gc.count_range = {2, 4};
  gc.cycle_len_range = {4, 8};
  gc.interval_len_range = {2, 6};
  gc.seed = 73;
  std::vector<FeatureSequence> out;
  for (int i = 0; i < n; ++i) out.push_back(repcount::gen_sequence(gc, first + i));
  return out;
}

}  // namespace

TEST_CASE("median of odd and even sets") {
  CHECK(repcount::median({3, 1, 2}) == 2.0);
  CHECK(repcount::median({4, 1, 3, 2}) == 2.5);
  CHECK(repcount::median({5}) == 5.0);
  CHECK_THROWS_AS(repcount::median({}), repcount::validation_error);
}

TEST_CASE("the full comparison matrix has the documented row structure") {
  TempDir dir("all");
  auto train_seqs = gen_split(0, 3);
  auto val_seqs = gen_split(3, 2);
  auto test_seqs = gen_split(5, 2);

  AblateResult res =
      repcount::ablate(train_seqs, val_seqs, test_seqs, tiny_base(), "all", dir.path.string());

  const std::vector<std::pair<std::string, std::string>> expect = {
      {"phases", "phases=1"},      {"phases", "phases=2"},  {"phases", "phases=3"},
      {"losses", "none"},          {"losses", "pull_only"}, {"losses", "push_only"},
      {"losses", "both"},          {"variants", "p2l"},     {"variants", "contrastive"},
      {"variants", "triplet"},     {"rca", "off"},          {"rca", "on"},
      {"sampling_rate", "L=64"},   {"sampling_rate", "L=128"}};
  REQUIRE(res.cells.size() == expect.size());
  for (size_t i = 0; i < expect.size(); ++i) {
    CHECK(res.cells[i].suite == expect[i].first);
    CHECK(res.cells[i].config == expect[i].second);
    CHECK(res.cells[i].seed_count == 5);
    CHECK(res.cells[i].median_mae >= 0.0);
    CHECK(res.cells[i].median_obo >= 0.0);
    CHECK(res.cells[i].median_obo <= 1.0);
  }

  // per-seed artifacts exist and reproduce every cell median
  for (const auto& cell : res.cells) {
    std::vector<double> maes, obos;
    for (int k = 0; k < 5; ++k) {
      fs::path seed_dir = dir.path / cell.suite / cell.config / ("seed" + std::to_string(k));
      CHECK(fs::exists(seed_dir / "train_log.jsonl"));
      REQUIRE(fs::exists(seed_dir / "eval_test.jsonl"));
      auto rep = repcount::read_eval_report((seed_dir / "eval_test.jsonl").string());
      maes.push_back(rep.mae_value);
      obos.push_back(rep.obo_value);
    }
    CHECK(repcount::median(maes) == cell.median_mae);
    CHECK(repcount::median(obos) == cell.median_obo);
  }

  // the emitted table matches the result row for row
  const std::string csv = (dir.path / "table.csv").string();
  repcount::write_ablate_csv(csv, res);
  std::ifstream in(csv);
  std::string line;
  REQUIRE(std::getline(in, line));
  CHECK(line == "suite,config,seed_count,median_MAE,median_OBO");
  size_t row = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    REQUIRE(row < res.cells.size());
    const std::string prefix = res.cells[row].suite + "," + res.cells[row].config + ",5,";
    CHECK(line.rfind(prefix, 0) == 0);
    ++row;
  }
  CHECK(row == res.cells.size());
}

TEST_CASE("single-suite runs carry only their own rows") {
  TempDir dir("rca");
  auto train_seqs = gen_split(0, 3);
  auto val_seqs = gen_split(3, 2);
  auto test_seqs = gen_split(5, 2);
  AblateResult res =
      repcount::ablate(train_seqs, val_seqs, test_seqs, tiny_base(), "rca", dir.path.string());
  REQUIRE(res.cells.size() == 2);
  CHECK(res.cells[0].config == "off");
  CHECK(res.cells[1].config == "on");
}

TEST_CASE("an empty test split is rejected") {
  TempDir dir("empty");
  auto seqs = gen_split(0, 3);
  CHECK_THROWS_AS(repcount::ablate(seqs, seqs, {}, tiny_base(), "all", dir.path.string()),
                  repcount::validation_error);
}
