#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "repcount/ablate.hpp"
#include "repcount/checkpoint.hpp"
#include "repcount/config.hpp"
#include "repcount/dataset.hpp"
#include "repcount/errors.hpp"
#include "repcount/generator.hpp"
#include "repcount/gradsuite.hpp"
#include "repcount/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace repcount;

namespace {

void error_record(const char* kind, const std::string& message) {
  json rec = {{"error", kind}, {"message", message}};
  std::cerr << rec.dump() << '\n';
}

void echo_config(const json& j) { std::cout << "resolved config:\n" << j.dump(2) << '\n'; }

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw io_error("cannot write " + path.string());
  out << text;
  if (!out) throw io_error("short write on " + path.string());
}

struct Args {
  std::string config, data, out, ckpt;
  std::string split = "test";
  uint64_t seed = 0;
  bool seed_set = false;
};

std::vector<FeatureSequence> read_split(const std::string& data_dir, const std::string& split) {
  const fs::path p = fs::path(data_dir) / split;
  if (!fs::exists(p / "manifest.json"))
    throw io_error("no dataset split at " + p.string());
  return read_dataset(p.string());
}

int resolve_feature_dim(RunConfig& cfg, const std::vector<FeatureSequence>& seqs) {
  if (cfg.model.D_in == 0) cfg.model.D_in = seqs.front().feature_dim();
  return cfg.model.D_in;
}

int cmd_gen(const Args& a) {
  GenRunConfig cfg =
      a.config.empty() ? gen_config_from_json(json::object()) : load_gen_config(a.config);
  if (a.seed_set) cfg.gen.seed = a.seed;
  cfg.validate();
  echo_config(gen_config_to_json(cfg));

  auto splits = gen_dataset(cfg.gen, cfg.n, cfg.fractions);
  const char* names[3] = {"train", "val", "test"};
  fs::create_directories(a.out);
  write_text(fs::path(a.out) / "gen_config.json", gen_config_to_json(cfg).dump(2) + "\n");
  for (int s = 0; s < 3; ++s) {
    write_dataset((fs::path(a.out) / names[s]).string(), splits[static_cast<size_t>(s)].sequences);
    std::cout << names[s] << ": " << splits[static_cast<size_t>(s)].sequences.size()
              << " sequences\n";
  }
  return 0;
}

int cmd_train(const Args& a) {
  RunConfig cfg =
      a.config.empty() ? run_config_from_json(json::object()) : load_run_config(a.config);
  if (a.seed_set) {
    cfg.train.seed = a.seed;
    cfg.train.rca_cfg.seed = a.seed;
  }
  auto train_seqs = read_split(a.data, "train");
  auto val_seqs = read_split(a.data, "val");
  resolve_feature_dim(cfg, train_seqs);
  cfg.model.validate();
  echo_config(run_config_to_json(cfg));

  fs::create_directories(a.out);
  write_text(fs::path(a.out) / "run_config.json", run_config_to_json(cfg).dump(2) + "\n");
  TrainResult tr = train(train_seqs, val_seqs, cfg);
  write_train_log((fs::path(a.out) / "train_log.jsonl").string(), tr.log);
  save_checkpoint((fs::path(a.out) / "checkpoint.bin").string(), cfg.model, tr.best);
  json summary = {{"best_epoch", tr.best_epoch},
                  {"best_val_mae", tr.best_val_mae},
                  {"best_val_obo", tr.best_val_obo}};
  std::cout << summary.dump() << '\n';
  return 0;
}

int cmd_eval(const Args& a) {
  Checkpoint ck = load_checkpoint(a.ckpt);
  echo_config(model_config_to_json(ck.config));
  auto seqs = read_split(a.data, a.split);
  EvalReport rep = evaluate(seqs, ck.params, ck.config, a.split);
  const std::string out = a.out.empty() ? ("eval_" + a.split + ".jsonl") : a.out;
  write_eval_report(out, rep);
  json summary = {{"split", rep.split},
                  {"sequences", rep.records.size()},
                  {"mae", rep.mae_value},
                  {"obo", rep.obo_value}};
  std::cout << summary.dump() << '\n';
  return 0;
}

int cmd_ablate(const Args& a) {
  AblateRunConfig cfg = a.config.empty()
                            ? AblateRunConfig{run_config_from_json(json::object()), "all"}
                            : load_ablate_config(a.config);
  if (a.seed_set) {
    cfg.base.train.seed = a.seed;
    cfg.base.train.rca_cfg.seed = a.seed;
  }
  auto train_seqs = read_split(a.data, "train");
  auto val_seqs = read_split(a.data, "val");
  auto test_seqs = read_split(a.data, "test");
  resolve_feature_dim(cfg.base, train_seqs);
  cfg.base.model.validate();
  json echo = run_config_to_json(cfg.base);
  echo["suite"] = cfg.suite;
  echo_config(echo);

  fs::create_directories(a.out);
  write_text(fs::path(a.out) / "run_config.json", echo.dump(2) + "\n");
  AblateResult result = ablate(train_seqs, val_seqs, test_seqs, cfg.base, cfg.suite, a.out);
  write_ablate_csv((fs::path(a.out) / "ablation.csv").string(), result);
  std::cout << "suite,config,seed_count,median_MAE,median_OBO\n";
  for (const AblateCell& c : result.cells)
    std::printf("%s,%s,%d,%.6g,%.6g\n", c.suite.c_str(), c.config.c_str(), c.seed_count,
                c.median_mae, c.median_obo);
  return 0;
}

int cmd_grad_check(const Args& a) {
  const uint64_t seed = a.seed_set ? a.seed : 1;
  auto cases = run_grad_suite(seed);
  for (const GradCheckCase& c : cases)
    std::printf("%s %-26s max rel err %.3e (tol %.0e)\n", c.pass ? "PASS" : "FAIL",
                c.name.c_str(), c.max_err, c.tol);
  if (!all_pass(cases)) {
    error_record("runtime", "gradient checks failed");
    return 2;
  }
  std::printf("all %zu gradient checks passed\n", cases.size());
  return 0;
}

int cmd_export(const Args& a) {
  Checkpoint ck = load_checkpoint(a.ckpt);
  echo_config(model_config_to_json(ck.config));
  auto seqs = read_split(a.data, a.split);
  export_embeddings(a.out, seqs, ck.params, ck.config);
  std::cout << "wrote " << a.out << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"repetition counting over per-frame feature sequences"};
  app.require_subcommand(1);
  Args a;

  auto add_seed = [&](CLI::App* cmd) {
    cmd->add_option("--seed", a.seed, "override the config seed")->each([&](const std::string&) {
      a.seed_set = true;
    });
  };

  CLI::App* gen = app.add_subcommand("gen", "generate a synthetic dataset (train/val/test)");
  gen->add_option("--config", a.config, "generator config JSON");
  gen->add_option("--out", a.out, "output dataset directory")->required();
  add_seed(gen);

  CLI::App* train_cmd = app.add_subcommand("train", "train a counting model");
  train_cmd->add_option("--config", a.config, "run config JSON");
  train_cmd->add_option("--data", a.data, "dataset directory (train/ and val/ splits)")
      ->required();
  train_cmd->add_option("--out", a.out, "output directory (checkpoint + log)")->required();
  add_seed(train_cmd);

  CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a split");
  eval_cmd->add_option("--ckpt", a.ckpt, "checkpoint file")->required();
  eval_cmd->add_option("--data", a.data, "dataset directory")->required();
  eval_cmd->add_option("--split", a.split, "split name (default test)");
  eval_cmd->add_option("--out", a.out, "report path (default eval_<split>.jsonl)");

  CLI::App* ablate_cmd = app.add_subcommand("ablate", "run an ablation suite");
  ablate_cmd->add_option("--config", a.config, "run config JSON (may set \"suite\")");
  ablate_cmd->add_option("--data", a.data, "dataset directory")->required();
  ablate_cmd->add_option("--out", a.out, "output directory (CSV + per-seed artifacts)")
      ->required();
  add_seed(ablate_cmd);

  CLI::App* gc = app.add_subcommand("grad-check", "finite-difference check of ops, losses, model");
  add_seed(gc);

  CLI::App* exp = app.add_subcommand("export-embeddings", "dump segment embeddings as CSV");
  exp->add_option("--ckpt", a.ckpt, "checkpoint file")->required();
  exp->add_option("--data", a.data, "dataset directory")->required();
  exp->add_option("--split", a.split, "split name (default test)");
  exp->add_option("--out", a.out, "output CSV path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    error_record("validation", e.what());
    return 1;
  }

  try {
    if (gen->parsed()) return cmd_gen(a);
    if (train_cmd->parsed()) return cmd_train(a);
    if (eval_cmd->parsed()) return cmd_eval(a);
    if (ablate_cmd->parsed()) return cmd_ablate(a);
    if (gc->parsed()) return cmd_grad_check(a);
    if (exp->parsed()) return cmd_export(a);
    error_record("validation", "no subcommand");
    return 1;
  } catch (const validation_error& e) {
    error_record("validation", e.what());
    return 1;
  } catch (const std::exception& e) {
    error_record("runtime", e.what());
    return 2;
  }
}
