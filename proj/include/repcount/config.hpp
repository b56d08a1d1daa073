#ifndef REPCOUNT_CONFIG_HPP
#define REPCOUNT_CONFIG_HPP

#include <array>
#include <cstdint>
#include <string>

#include <json.hpp>

#include "repcount/generator.hpp"
#include "repcount/losses.hpp"
#include "repcount/model.hpp"
#include "repcount/rca.hpp"

namespace repcount {

struct TrainConfig {
  int epochs = 30;
  int batch_size = 8;
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  LossKind loss = LossKind::p2l;
  LossWeights weights;    // alpha, beta, gamma — all default 1
  VariantParams variant;  // temperature 0.07, margin 2, phases 1
  bool rca = true;
  RcaConfig rca_cfg;  // tau ≤ 0 = auto (mean train count), prob 0.5
  uint64_t seed = 1;

  void validate() const;
};

// One training run: the model wiring plus the optimization recipe. model.D_in
// stays 0 ("take the dataset's feature_dim") until resolved against data.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
};

// dataset generation recipe: generator knobs plus corpus size and split
struct GenRunConfig {
  GenConfig gen;
  int n = 200;
  std::array<double, 3> fractions = {0.5, 0.25, 0.25};

  void validate() const;
};

// All loaders fill documented defaults, reject unknown keys, and reject
// out-of-range values. An empty JSON object is a valid config.
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::string& path);
nlohmann::json run_config_to_json(const RunConfig& c);  // fully resolved echo

// same key space as RunConfig plus "suite" ∈ {phases, losses, variants, rca,
// sampling_rate, all}
struct AblateRunConfig {
  RunConfig base;
  std::string suite = "all";
};
AblateRunConfig load_ablate_config(const std::string& path);

GenRunConfig gen_config_from_json(const nlohmann::json& j);
GenRunConfig load_gen_config(const std::string& path);
nlohmann::json gen_config_to_json(const GenRunConfig& c);

nlohmann::json model_config_to_json(const ModelConfig& m);
ModelConfig model_config_from_json(const nlohmann::json& j);  // all keys required

nlohmann::json load_json_file(const std::string& path);

}  // namespace repcount

#endif
