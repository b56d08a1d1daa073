#include "repcount/model.hpp"

#include <cmath>
#include <cstdint>
#include <utility>

#include "repcount/errors.hpp"
#include "repcount/rng.hpp"

namespace repcount {

namespace {

constexpr uint64_t kStreamInit = 0x6d6f64656c496e69ULL;

// how a tensor is filled before training starts
enum class Fill { kUniform, kZero, kOne };

struct ParamSpec {
  std::string name;
  std::vector<int> shape;
  Fill fill;
  int fan_in;  // only meaningful for kUniform
};

std::vector<ParamSpec> build_specs(const ModelConfig& cfg) {
  cfg.validate();
  const int d = cfg.d_model, hd = cfg.head_dim();
  const int maps = static_cast<int>(cfg.scales.size()) * cfg.heads;
  std::vector<ParamSpec> specs;
  auto w = [&](std::string name, std::vector<int> shape, int fan) {
    specs.push_back({std::move(name), std::move(shape), Fill::kUniform, fan});
  };
  auto zero = [&](std::string name, std::vector<int> shape) {
    specs.push_back({std::move(name), std::move(shape), Fill::kZero, 0});
  };
  auto one = [&](std::string name, std::vector<int> shape) {
    specs.push_back({std::move(name), std::move(shape), Fill::kOne, 0});
  };

  w("input_proj.w", {cfg.D_in, d}, cfg.D_in);
  zero("input_proj.b", {d});
  w("temporal_conv.w", {3, d, d}, 3 * d);
  zero("temporal_conv.b", {d});
  for (int s : cfg.scales)
    for (int h = 0; h < cfg.heads; ++h) {
      const std::string base = "scale" + std::to_string(s) + ".head" + std::to_string(h);
      w(base + ".wq", {d, hd}, d);
      w(base + ".wk", {d, hd}, d);
    }
  w("fusion.conv.w", {cfg.fusion_channels, maps, 3, 3}, maps * 9);
  zero("fusion.conv.b", {cfg.fusion_channels});
  w("fusion.proj.w", {cfg.fusion_channels * cfg.L, d}, cfg.fusion_channels * cfg.L);
  zero("fusion.proj.b", {d});
  for (int l = 0; l < cfg.encoder_layers; ++l) {
    const std::string base = "enc" + std::to_string(l);
    one(base + ".ln1.g", {d});
    zero(base + ".ln1.b", {d});
    for (int h = 0; h < cfg.heads; ++h) {
      const std::string hb = base + ".h" + std::to_string(h);
      w(hb + ".wq", {d, hd}, d);
      w(hb + ".wk", {d, hd}, d);
      w(hb + ".wv", {d, hd}, d);
    }
    w(base + ".attn.wo", {d, d}, d);
    zero(base + ".attn.bo", {d});
    one(base + ".ln2.g", {d});
    zero(base + ".ln2.b", {d});
    w(base + ".ffn.w1", {d, d}, d);
    zero(base + ".ffn.b1", {d});
    w(base + ".ffn.w2", {d, d}, d);
    zero(base + ".ffn.b2", {d});
  }
  w("head.w1", {d, cfg.head_hidden}, d);
  zero("head.b1", {cfg.head_hidden});
  w("head.w2", {cfg.head_hidden, cfg.head_hidden}, cfg.head_hidden);
  zero("head.b2", {cfg.head_hidden});
  w("head.w3", {cfg.head_hidden, 1}, cfg.head_hidden);
  zero("head.b3", {1});
  return specs;
}

}  // namespace

void ModelConfig::validate() const {
  if (L < 2) throw config_error("model: L must be ≥ 2");
  if (D_in < 1) throw config_error("model: D_in must be ≥ 1");
  if (d_model < 1) throw config_error("model: d_model must be ≥ 1");
  if (heads < 1) throw config_error("model: heads must be ≥ 1");
  if (d_model % heads != 0) throw config_error("model: d_model must be divisible by heads");
  if (scales.empty()) throw config_error("model: at least one attention scale required");
  for (size_t i = 0; i < scales.size(); ++i) {
    if (scales[i] < 1) throw config_error("model: scales must be ≥ 1");
    if (scales[i] > L) throw config_error("model: scales must not exceed L");
    if (i > 0 && scales[i] <= scales[i - 1])
      throw config_error("model: scales must be strictly increasing");
  }
  if (fusion_channels < 1) throw config_error("model: fusion_channels must be ≥ 1");
  if (head_hidden < 1) throw config_error("model: head_hidden must be ≥ 1");
  if (encoder_layers < 0) throw config_error("model: encoder_layers must be ≥ 0");
}

std::vector<std::pair<std::string, std::vector<int>>> param_shapes(const ModelConfig& cfg) {
  std::vector<std::pair<std::string, std::vector<int>>> out;
  for (auto& s : build_specs(cfg)) out.emplace_back(s.name, s.shape);
  return out;
}

Tensor& ModelParams::find(const std::string& name) {
  for (auto& [n, t] : items)
    if (n == name) return t;
  throw validation_error("unknown parameter: " + name);
}

const Tensor& ModelParams::find(const std::string& name) const {
  for (auto& [n, t] : items)
    if (n == name) return t;
  throw validation_error("unknown parameter: " + name);
}

int64_t ModelParams::total_elems() const {
  int64_t n = 0;
  for (auto& [name, t] : items) n += t.numel();
  return n;
}

ModelParams ModelParams::init(const ModelConfig& cfg, uint64_t seed) {
  SplitMix64 rng = SplitMix64::fork(seed, kStreamInit, 0);
  ModelParams p;
  for (auto& spec : build_specs(cfg)) {
    Tensor t = Tensor::zeros(spec.shape);
    switch (spec.fill) {
      case Fill::kZero:
        break;
      case Fill::kOne:
        for (int64_t i = 0; i < t.numel(); ++i) t.data()[i] = 1.0;
        break;
      case Fill::kUniform: {
        const double bound = 1.0 / std::sqrt(static_cast<double>(spec.fan_in));
        for (int64_t i = 0; i < t.numel(); ++i) t.data()[i] = rng.uniform(-bound, bound);
        break;
      }
    }
    p.items.emplace_back(spec.name, std::move(t));
  }
  return p;
}

ForwardNodes model_forward(Tape& t, const ModelParams& params, const ModelConfig& cfg,
                           const Tensor& features, bool params_require_grad) {
  cfg.validate();
  if (features.rank() != 2 || features.dim(0) != cfg.L || features.dim(1) != cfg.D_in)
    throw shape_error("model_forward: features must be [" + std::to_string(cfg.L) + "×" +
                      std::to_string(cfg.D_in) + "], got " + features.shape_str());
  auto expected = param_shapes(cfg);
  if (params.items.size() != expected.size())
    throw validation_error("model_forward: parameter count mismatch");
  for (size_t i = 0; i < expected.size(); ++i) {
    if (params.items[i].first != expected[i].first ||
        params.items[i].second.shape != expected[i].second)
      throw validation_error("model_forward: parameter " + expected[i].first +
                             " missing or mis-shaped");
  }

  ForwardNodes out;
  out.param_ids.reserve(params.items.size());
  size_t cursor = 0;
  // registers parameters strictly in items order so param_ids lines up
  auto P = [&](const std::string& name) -> Tape::NodeId {
    if (cursor >= params.items.size() || params.items[cursor].first != name)
      throw validation_error("model_forward: parameter order broke at " + name);
    Tape::NodeId id = t.input(params.items[cursor].second, params_require_grad);
    out.param_ids.push_back(id);
    ++cursor;
    return id;
  };

  const double inv_sqrt_hd = 1.0 / std::sqrt(static_cast<double>(cfg.head_dim()));

  // every P(...) is hoisted into its own statement: argument evaluation order
  // is unspecified, and the cursor requires strict registration order
  Tape::NodeId x = t.input(features, false);
  Tape::NodeId w_in = P("input_proj.w");
  Tape::NodeId b_in = P("input_proj.b");
  // sorted accumulation: reordering input feature dimensions together with
  // the projection rows must not change the output, bit for bit
  Tape::NodeId h = t.bias_add_rows(t.matmul_sorted(x, w_in), b_in);
  Tape::NodeId w_tc = P("temporal_conv.w");
  Tape::NodeId b_tc = P("temporal_conv.b");
  Tape::NodeId tc = t.conv1d_temporal(h, w_tc, b_tc);
  out.relu_pre.push_back(tc);
  h = t.relu(tc);

  // self-similarity maps: per smoothing scale, per head, a row-stochastic
  // [L×L] attention matrix
  std::vector<Tape::NodeId> maps;
  for (int s : cfg.scales) {
    Tape::NodeId hs = t.sliding_mean_rows(h, s);
    for (int head = 0; head < cfg.heads; ++head) {
      const std::string base = "scale" + std::to_string(s) + ".head" + std::to_string(head);
      Tape::NodeId wq = P(base + ".wq");
      Tape::NodeId wk = P(base + ".wk");
      Tape::NodeId q = t.matmul(hs, wq);
      Tape::NodeId k = t.matmul(hs, wk);
      maps.push_back(t.softmax_rows(t.affine(t.matmul_nt(q, k), inv_sqrt_hd, 0.0)));
    }
  }
  // the fusion conv is linear: the maps are already softmax-nonlinear, and a
  // rectifier here could zero a whole frame at unlucky inits, handing the
  // cosine terms a forbidden zero-norm embedding
  Tape::NodeId fused = t.concat_channels(maps);
  Tape::NodeId w_fc = P("fusion.conv.w");
  Tape::NodeId b_fc = P("fusion.conv.b");
  fused = t.conv2d(fused, w_fc, b_fc);
  Tape::NodeId flat = t.flatten_frames(fused);
  Tape::NodeId w_fp = P("fusion.proj.w");
  Tape::NodeId b_fp = P("fusion.proj.b");
  Tape::NodeId E = t.bias_add_rows(t.matmul(flat, w_fp), b_fp);
  out.E = E;

  Tape::NodeId z = E;
  for (int l = 0; l < cfg.encoder_layers; ++l) {
    const std::string base = "enc" + std::to_string(l);
    Tape::NodeId g1 = P(base + ".ln1.g");
    Tape::NodeId c1 = P(base + ".ln1.b");
    Tape::NodeId n1 = t.layer_norm_rows(z, g1, c1);
    std::vector<Tape::NodeId> heads_out;
    for (int head = 0; head < cfg.heads; ++head) {
      const std::string hb = base + ".h" + std::to_string(head);
      Tape::NodeId wq = P(hb + ".wq");
      Tape::NodeId wk = P(hb + ".wk");
      Tape::NodeId wv = P(hb + ".wv");
      Tape::NodeId q = t.matmul(n1, wq);
      Tape::NodeId k = t.matmul(n1, wk);
      Tape::NodeId v = t.matmul(n1, wv);
      Tape::NodeId a = t.softmax_rows(t.affine(t.matmul_nt(q, k), inv_sqrt_hd, 0.0));
      heads_out.push_back(t.matmul(a, v));
    }
    Tape::NodeId wo = P(base + ".attn.wo");
    Tape::NodeId bo = P(base + ".attn.bo");
    Tape::NodeId attn = t.bias_add_rows(t.matmul(t.concat_cols(heads_out), wo), bo);
    z = t.add(z, attn);
    Tape::NodeId g2 = P(base + ".ln2.g");
    Tape::NodeId c2 = P(base + ".ln2.b");
    Tape::NodeId n2 = t.layer_norm_rows(z, g2, c2);
    Tape::NodeId w1 = P(base + ".ffn.w1");
    Tape::NodeId b1 = P(base + ".ffn.b1");
    Tape::NodeId ffn_pre = t.bias_add_rows(t.matmul(n2, w1), b1);
    out.relu_pre.push_back(ffn_pre);
    Tape::NodeId ffn = t.relu(ffn_pre);
    Tape::NodeId w2 = P(base + ".ffn.w2");
    Tape::NodeId b2 = P(base + ".ffn.b2");
    ffn = t.bias_add_rows(t.matmul(ffn, w2), b2);
    z = t.add(z, ffn);
  }

  Tape::NodeId hw1 = P("head.w1");
  Tape::NodeId hb1 = P("head.b1");
  Tape::NodeId h1 = t.bias_add_rows(t.matmul(z, hw1), hb1);
  out.relu_pre.push_back(h1);
  Tape::NodeId p = t.relu(h1);
  Tape::NodeId hw2 = P("head.w2");
  Tape::NodeId hb2 = P("head.b2");
  Tape::NodeId h2 = t.bias_add_rows(t.matmul(p, hw2), hb2);
  out.relu_pre.push_back(h2);
  p = t.relu(h2);
  Tape::NodeId hw3 = P("head.w3");
  Tape::NodeId hb3 = P("head.b3");
  p = t.bias_add_rows(t.matmul(p, hw3), hb3);
  out.p = p;

  if (cursor != params.items.size())
    throw validation_error("model_forward: not all parameters were consumed");
  return out;
}

double count_readout(const DensityMap& p) { return p.sum(); }

DensityMap density_from_node(const Tape& t, Tape::NodeId p) {
  const Tensor& v = t.value(p);
  if (v.rank() != 2 || v.dim(1) != 1) throw shape_error("density_from_node: expected [L×1]");
  DensityMap d;
  d.kind = DensityMap::Kind::predicted;
  d.values = Tensor::zeros({v.dim(0)});
  for (int i = 0; i < v.dim(0); ++i) d.values.at(i) = v.at(i, 0);
  return d;
}

}  // namespace repcount
