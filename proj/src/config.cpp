#include "repcount/config.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "repcount/errors.hpp"

namespace repcount {

namespace {

using nlohmann::json;

void require_object(const json& j) {
  if (!j.is_object()) throw config_error("config root must be a JSON object");
}

void reject_unknown(const json& j, const std::set<std::string>& allowed) {
  for (auto& [key, value] : j.items())
    if (!allowed.count(key)) throw config_error("unknown config key: " + key);
}

double get_num(const json& j, const char* key, double fallback) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_number()) throw config_error(std::string(key) + " must be a number");
  return j[key].get<double>();
}

int get_int(const json& j, const char* key, int fallback) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_number_integer()) throw config_error(std::string(key) + " must be an integer");
  return j[key].get<int>();
}

uint64_t get_u64(const json& j, const char* key, uint64_t fallback) {
  if (!j.contains(key)) return fallback;
  const json& v = j[key];
  if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<int64_t>() < 0))
    throw config_error(std::string(key) + " must be a nonnegative integer");
  return v.get<uint64_t>();
}

bool get_bool(const json& j, const char* key, bool fallback) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_boolean()) throw config_error(std::string(key) + " must be true or false");
  return j[key].get<bool>();
}

std::string get_str(const json& j, const char* key, const std::string& fallback) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_string()) throw config_error(std::string(key) + " must be a string");
  return j[key].get<std::string>();
}

const std::set<std::string> kRunKeys = {
    "L",           "feature_dim", "d_model",     "heads",       "scales",
    "fusion_channels", "head_hidden", "encoder_layers",
    "epochs",      "batch_size",  "learning_rate", "beta1",     "beta2",
    "adam_eps",    "loss",        "alpha",       "beta",        "gamma",
    "temperature", "margin",      "phases",      "rca",         "rca_tau",
    "rca_prob",    "seed"};

RunConfig parse_run(const json& j) {
  require_object(j);
  RunConfig c;
  c.model.D_in = 0;  // resolved from the dataset unless feature_dim is given
  c.model.L = get_int(j, "L", c.model.L);
  c.model.D_in = get_int(j, "feature_dim", c.model.D_in);
  c.model.d_model = get_int(j, "d_model", c.model.d_model);
  c.model.heads = get_int(j, "heads", c.model.heads);
  if (j.contains("scales")) {
    if (!j["scales"].is_array() || j["scales"].empty())
      throw config_error("scales must be a nonempty array of integers");
    c.model.scales.clear();
    for (auto& v : j["scales"]) {
      if (!v.is_number_integer()) throw config_error("scales must be integers");
      c.model.scales.push_back(v.get<int>());
    }
  }
  c.model.fusion_channels = get_int(j, "fusion_channels", c.model.fusion_channels);
  c.model.head_hidden = get_int(j, "head_hidden", c.model.head_hidden);
  c.model.encoder_layers = get_int(j, "encoder_layers", c.model.encoder_layers);

  c.train.epochs = get_int(j, "epochs", c.train.epochs);
  c.train.batch_size = get_int(j, "batch_size", c.train.batch_size);
  c.train.learning_rate = get_num(j, "learning_rate", c.train.learning_rate);
  c.train.beta1 = get_num(j, "beta1", c.train.beta1);
  c.train.beta2 = get_num(j, "beta2", c.train.beta2);
  c.train.adam_eps = get_num(j, "adam_eps", c.train.adam_eps);
  c.train.loss = parse_loss_kind(get_str(j, "loss", loss_kind_name(c.train.loss)));
  c.train.weights.alpha = get_num(j, "alpha", c.train.weights.alpha);
  c.train.weights.beta = get_num(j, "beta", c.train.weights.beta);
  c.train.weights.gamma = get_num(j, "gamma", c.train.weights.gamma);
  c.train.variant.temperature = get_num(j, "temperature", c.train.variant.temperature);
  c.train.variant.margin = get_num(j, "margin", c.train.variant.margin);
  c.train.variant.phases = get_int(j, "phases", c.train.variant.phases);
  c.train.rca = get_bool(j, "rca", c.train.rca);
  c.train.rca_cfg.tau = get_num(j, "rca_tau", c.train.rca_cfg.tau);
  c.train.rca_cfg.prob = get_num(j, "rca_prob", c.train.rca_cfg.prob);
  c.train.seed = get_u64(j, "seed", c.train.seed);
  c.train.rca_cfg.seed = c.train.seed;

  // model.validate() needs a resolved D_in; defer it, check the rest here
  if (c.model.D_in < 0) throw config_error("feature_dim must be ≥ 1 (or omitted to infer)");
  c.train.validate();
  return c;
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 1) throw config_error("epochs must be ≥ 1");
  if (batch_size < 1) throw config_error("batch_size must be ≥ 1");
  // zero is legal (a no-op run used by the determinism checks); negative is not
  if (learning_rate < 0.0) throw config_error("learning_rate must be ≥ 0");
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0)
    throw config_error("adam betas must lie in [0, 1)");
  if (adam_eps <= 0.0) throw config_error("adam_eps must be positive");
  weights.validate();
  variant.validate();
  rca_cfg.validate();
}

void GenRunConfig::validate() const {
  if (n < 1) throw config_error("gen: n must be ≥ 1");
  double s = 0.0;
  for (double f : fractions) {
    if (f < 0.0) throw config_error("gen: split fractions must be nonnegative");
    s += f;
  }
  if (std::abs(s - 1.0) > 1e-9) throw config_error("gen: split fractions must sum to 1");
  gen.validate();
}

RunConfig run_config_from_json(const nlohmann::json& j) {
  require_object(j);
  reject_unknown(j, kRunKeys);
  return parse_run(j);
}

RunConfig load_run_config(const std::string& path) {
  return run_config_from_json(load_json_file(path));
}

nlohmann::json run_config_to_json(const RunConfig& c) {
  json j;
  j["L"] = c.model.L;
  j["feature_dim"] = c.model.D_in;
  j["d_model"] = c.model.d_model;
  j["heads"] = c.model.heads;
  j["scales"] = c.model.scales;
  j["fusion_channels"] = c.model.fusion_channels;
  j["head_hidden"] = c.model.head_hidden;
  j["encoder_layers"] = c.model.encoder_layers;
  j["epochs"] = c.train.epochs;
  j["batch_size"] = c.train.batch_size;
  j["learning_rate"] = c.train.learning_rate;
  j["beta1"] = c.train.beta1;
  j["beta2"] = c.train.beta2;
  j["adam_eps"] = c.train.adam_eps;
  j["loss"] = loss_kind_name(c.train.loss);
  j["alpha"] = c.train.weights.alpha;
  j["beta"] = c.train.weights.beta;
  j["gamma"] = c.train.weights.gamma;
  j["temperature"] = c.train.variant.temperature;
  j["margin"] = c.train.variant.margin;
  j["phases"] = c.train.variant.phases;
  j["rca"] = c.train.rca;
  j["rca_tau"] = c.train.rca_cfg.tau;
  j["rca_prob"] = c.train.rca_cfg.prob;
  j["seed"] = c.train.seed;
  return j;
}

AblateRunConfig load_ablate_config(const std::string& path) {
  json j = load_json_file(path);
  require_object(j);
  std::set<std::string> keys = kRunKeys;
  keys.insert("suite");
  reject_unknown(j, keys);
  AblateRunConfig a;
  a.suite = get_str(j, "suite", a.suite);
  static const std::set<std::string> kSuites = {"phases", "losses",       "variants",
                                               "rca",    "sampling_rate", "all"};
  if (!kSuites.count(a.suite))
    throw config_error("suite must be one of phases, losses, variants, rca, sampling_rate, all");
  json base = j;
  base.erase("suite");
  a.base = parse_run(base);
  return a;
}

GenRunConfig gen_config_from_json(const nlohmann::json& j) {
  require_object(j);
  static const std::set<std::string> kGenKeys = {
      "n",          "fractions",       "length",           "feature_dim",
      "count_min",  "count_max",       "cycle_len_min",    "cycle_len_max",
      "interval_len_min", "interval_len_max", "noise_std", "warp_strength",
      "distractor_prob",  "seed"};
  reject_unknown(j, kGenKeys);
  GenRunConfig c;
  c.n = get_int(j, "n", c.n);
  if (j.contains("fractions")) {
    if (!j["fractions"].is_array() || j["fractions"].size() != 3)
      throw config_error("fractions must be an array of 3 numbers");
    for (int i = 0; i < 3; ++i) {
      if (!j["fractions"][i].is_number()) throw config_error("fractions must be numbers");
      c.fractions[static_cast<size_t>(i)] = j["fractions"][i].get<double>();
    }
  }
  c.gen.L = get_int(j, "length", c.gen.L);
  c.gen.D = get_int(j, "feature_dim", c.gen.D);
  c.gen.count_range[0] = get_int(j, "count_min", c.gen.count_range[0]);
  c.gen.count_range[1] = get_int(j, "count_max", c.gen.count_range[1]);
  c.gen.cycle_len_range[0] = get_int(j, "cycle_len_min", c.gen.cycle_len_range[0]);
  c.gen.cycle_len_range[1] = get_int(j, "cycle_len_max", c.gen.cycle_len_range[1]);
  c.gen.interval_len_range[0] = get_int(j, "interval_len_min", c.gen.interval_len_range[0]);
  c.gen.interval_len_range[1] = get_int(j, "interval_len_max", c.gen.interval_len_range[1]);
  c.gen.noise_std = get_num(j, "noise_std", c.gen.noise_std);
  c.gen.warp_strength = get_num(j, "warp_strength", c.gen.warp_strength);
  c.gen.distractor_prob = get_num(j, "distractor_prob", c.gen.distractor_prob);
  c.gen.seed = get_u64(j, "seed", c.gen.seed);
  c.validate();
  return c;
}

GenRunConfig load_gen_config(const std::string& path) {
  return gen_config_from_json(load_json_file(path));
}

nlohmann::json gen_config_to_json(const GenRunConfig& c) {
  json j;
  j["n"] = c.n;
  j["fractions"] = c.fractions;
  j["length"] = c.gen.L;
  j["feature_dim"] = c.gen.D;
  j["count_min"] = c.gen.count_range[0];
  j["count_max"] = c.gen.count_range[1];
  j["cycle_len_min"] = c.gen.cycle_len_range[0];
  j["cycle_len_max"] = c.gen.cycle_len_range[1];
  j["interval_len_min"] = c.gen.interval_len_range[0];
  j["interval_len_max"] = c.gen.interval_len_range[1];
  j["noise_std"] = c.gen.noise_std;
  j["warp_strength"] = c.gen.warp_strength;
  j["distractor_prob"] = c.gen.distractor_prob;
  j["seed"] = c.gen.seed;
  return j;
}

nlohmann::json model_config_to_json(const ModelConfig& m) {
  json j;
  j["L"] = m.L;
  j["feature_dim"] = m.D_in;
  j["d_model"] = m.d_model;
  j["heads"] = m.heads;
  j["scales"] = m.scales;
  j["fusion_channels"] = m.fusion_channels;
  j["head_hidden"] = m.head_hidden;
  j["encoder_layers"] = m.encoder_layers;
  return j;
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  require_object(j);
  static const std::set<std::string> kKeys = {"L",      "feature_dim",     "d_model",
                                              "heads",  "scales",          "fusion_channels",
                                              "head_hidden", "encoder_layers"};
  reject_unknown(j, kKeys);
  for (const std::string& k : kKeys)
    if (!j.contains(k)) throw config_error("model config missing key: " + k);
  ModelConfig m;
  m.L = get_int(j, "L", 0);
  m.D_in = get_int(j, "feature_dim", 0);
  m.d_model = get_int(j, "d_model", 0);
  m.heads = get_int(j, "heads", 0);
  m.scales.clear();
  for (auto& v : j["scales"]) {
    if (!v.is_number_integer()) throw config_error("scales must be integers");
    m.scales.push_back(v.get<int>());
  }
  m.fusion_channels = get_int(j, "fusion_channels", 0);
  m.head_hidden = get_int(j, "head_hidden", 0);
  m.encoder_layers = get_int(j, "encoder_layers", 0);
  m.validate();
  return m;
}

nlohmann::json load_json_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open config file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  std::string text = ss.str();
  // an empty file means "all defaults"
  bool blank = true;
  for (char ch : text)
    if (!std::isspace(static_cast<unsigned char>(ch))) {
      blank = false;
      break;
    }
  if (blank) return json::object();
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) throw config_error("malformed JSON in " + path);
  return j;
}

}  // namespace repcount
