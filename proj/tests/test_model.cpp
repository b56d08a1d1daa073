#include <doctest.h>

#include <cmath>
#include <cstring>
#include <numeric>
#include <vector>

#include "repcount/errors.hpp"
#include "repcount/model.hpp"
#include "repcount/rng.hpp"
#include "repcount/sequence.hpp"
#include "repcount/tape.hpp"

using repcount::DensityMap;
using repcount::ForwardNodes;
using repcount::ModelConfig;
using repcount::ModelParams;
using repcount::SplitMix64;
using repcount::Tape;
using repcount::Tensor;

namespace {

// small enough to run forward passes in milliseconds
ModelConfig tiny_config() {
  ModelConfig mc;
  mc.L = 12;
  mc.D_in = 5;
  mc.d_model = 16;
  mc.heads = 2;
  mc.scales = {1, 2};
  mc.fusion_channels = 4;
  mc.head_hidden = 8;
  mc.encoder_layers = 1;
  return mc;
}

Tensor random_features(SplitMix64& rng, int L, int D) {
  Tensor x = Tensor::zeros({L, D});
  for (int64_t i = 0; i < x.numel(); ++i) x.at(static_cast<int>(i)) = rng.uniform(-1.0, 1.0);
  return x;
}

}  // namespace

TEST_CASE("parameter shapes and the initialized parameters agree") {
  ModelConfig mc = tiny_config();
  auto shapes = repcount::param_shapes(mc);
  ModelParams params = ModelParams::init(mc, 7);
  REQUIRE(params.items.size() == shapes.size());
  int64_t total = 0;
  for (size_t i = 0; i < shapes.size(); ++i) {
    CHECK(params.items[i].first == shapes[i].first);
    CHECK(params.items[i].second.shape == shapes[i].second);
    total += params.items[i].second.numel();
  }
  CHECK(params.total_elems() == total);
}

TEST_CASE("initialization is deterministic in the seed and biases start at zero") {
  ModelConfig mc = tiny_config();
  ModelParams a = ModelParams::init(mc, 11);
  ModelParams b = ModelParams::init(mc, 11);
  ModelParams c = ModelParams::init(mc, 12);
  bool any_diff = false;
  for (size_t i = 0; i < a.items.size(); ++i) {
    const Tensor& ta = a.items[i].second;
    CHECK(std::memcmp(ta.data(), b.items[i].second.data(),
                      static_cast<size_t>(ta.numel()) * sizeof(double)) == 0);
    if (std::memcmp(ta.data(), c.items[i].second.data(),
                    static_cast<size_t>(ta.numel()) * sizeof(double)) != 0)
      any_diff = true;
    const std::string& name = a.items[i].first;
    if (name.size() >= 2 && name.compare(name.size() - 2, 2, ".b") == 0)
      for (int64_t j = 0; j < ta.numel(); ++j) CHECK(ta.at(static_cast<int>(j)) == 0.0);
  }
  CHECK(any_diff);
}

TEST_CASE("find retrieves parameters by name and rejects unknown names") {
  ModelConfig mc = tiny_config();
  ModelParams params = ModelParams::init(mc, 3);
  CHECK(params.find("input_proj.w").dim(0) == mc.D_in);
  CHECK(params.find("input_proj.w").dim(1) == mc.d_model);
  CHECK_THROWS_AS(params.find("no_such_parameter"), repcount::validation_error);
}

TEST_CASE("forward pass produces the documented shapes") {
  ModelConfig mc = tiny_config();
  ModelParams params = ModelParams::init(mc, 5);
  SplitMix64 rng(191);
  Tape t;
  ForwardNodes f = repcount::model_forward(t, params, mc, random_features(rng, mc.L, mc.D_in), false);
  CHECK(t.value(f.E).dim(0) == mc.L);
  CHECK(t.value(f.E).dim(1) == mc.d_model);
  CHECK(t.value(f.p).dim(0) == mc.L);
  CHECK(t.value(f.p).dim(1) == 1);
  CHECK(t.value(f.E).all_finite());
  CHECK(t.value(f.p).all_finite());
  CHECK(f.param_ids.size() == params.items.size());
}

TEST_CASE("default-size forward pass keeps its shapes") {
  ModelConfig mc;  // L=64, d_model=512
  mc.D_in = 16;
  ModelParams params = ModelParams::init(mc, 1);
  SplitMix64 rng(193);
  Tape t;
  ForwardNodes f = repcount::model_forward(t, params, mc, random_features(rng, mc.L, mc.D_in), false);
  CHECK(t.value(f.E).dim(0) == 64);
  CHECK(t.value(f.E).dim(1) == 512);
  CHECK(t.value(f.p).dim(0) == 64);
  CHECK(t.value(f.p).all_finite());
}

TEST_CASE("forward pass is deterministic for fixed parameters and input") {
  ModelConfig mc = tiny_config();
  ModelParams params = ModelParams::init(mc, 13);
  SplitMix64 rng(197);
  Tensor x = random_features(rng, mc.L, mc.D_in);
  Tape t1, t2;
  ForwardNodes f1 = repcount::model_forward(t1, params, mc, x, false);
  ForwardNodes f2 = repcount::model_forward(t2, params, mc, x, false);
  CHECK(std::memcmp(t1.value(f1.p).data(), t2.value(f2.p).data(),
                    static_cast<size_t>(mc.L) * sizeof(double)) == 0);
}

TEST_CASE("permuting input dimensions together with projection rows changes nothing") {
  // The input projection accumulates partial products in sorted order, so
  // reordering the feature basis while permuting the matching projection
  // rows reproduces the density column bit for bit.
  ModelConfig mc = tiny_config();
  ModelParams params = ModelParams::init(mc, 17);
  SplitMix64 rng(199);
  Tensor x = random_features(rng, mc.L, mc.D_in);

  std::vector<int> perm(static_cast<size_t>(mc.D_in));
  std::iota(perm.begin(), perm.end(), 0);
  for (int i = mc.D_in - 1; i > 0; --i)
    std::swap(perm[static_cast<size_t>(i)], perm[rng.uniform_int(static_cast<uint64_t>(i + 1))]);

  Tensor xp = Tensor::zeros({mc.L, mc.D_in});
  for (int i = 0; i < mc.L; ++i)
    for (int j = 0; j < mc.D_in; ++j) xp.at(i, j) = x.at(i, perm[static_cast<size_t>(j)]);

  ModelParams pp = ModelParams::init(mc, 17);
  Tensor& w = pp.find("input_proj.w");
  Tensor orig = w.clone();
  for (int r = 0; r < mc.D_in; ++r)
    for (int c = 0; c < mc.d_model; ++c) w.at(r, c) = orig.at(perm[static_cast<size_t>(r)], c);

  Tape t1, t2;
  ForwardNodes f1 = repcount::model_forward(t1, params, mc, x, false);
  ForwardNodes f2 = repcount::model_forward(t2, pp, mc, xp, false);
  CHECK(std::memcmp(t1.value(f1.p).data(), t2.value(f2.p).data(),
                    static_cast<size_t>(mc.L) * sizeof(double)) == 0);
  CHECK(std::memcmp(t1.value(f1.E).data(), t2.value(f2.E).data(),
                    static_cast<size_t>(mc.L) * mc.d_model * sizeof(double)) == 0);
}

TEST_CASE("zeroed similarity weights make the maps uniform and the output input-free") {
  // With every scale-attention query/key weight at zero, all pairwise
  // logits vanish and each row-softmax flattens to 1/L. The similarity
  // maps are the only path from the frames to the fusion stack, so two
  // different inputs must then produce identical outputs.
  ModelConfig mc = tiny_config();
  ModelParams params = ModelParams::init(mc, 37);
  for (auto& [name, tensor] : params.items)
    if (name.rfind("scale", 0) == 0 &&
        (name.size() > 3 && (name.compare(name.size() - 3, 3, ".wq") == 0 ||
                             name.compare(name.size() - 3, 3, ".wk") == 0)))
      for (int64_t i = 0; i < tensor.numel(); ++i) tensor.at(static_cast<int>(i)) = 0.0;

  SplitMix64 rng(233);
  Tape t1, t2;
  ForwardNodes f1 = repcount::model_forward(t1, params, mc, random_features(rng, mc.L, mc.D_in), false);
  ForwardNodes f2 = repcount::model_forward(t2, params, mc, random_features(rng, mc.L, mc.D_in), false);
  CHECK(std::memcmp(t1.value(f1.p).data(), t2.value(f2.p).data(),
                    static_cast<size_t>(mc.L) * sizeof(double)) == 0);
}

TEST_CASE("zeroed final head layer makes the density column a constant bias") {
  ModelConfig mc = tiny_config();
  ModelParams params = ModelParams::init(mc, 19);
  Tensor& w3 = params.find("head.w3");
  for (int64_t i = 0; i < w3.numel(); ++i) w3.at(static_cast<int>(i)) = 0.0;
  Tensor& b3 = params.find("head.b3");
  b3.at(0) = 0.25;
  SplitMix64 rng(211);
  Tape t;
  ForwardNodes f = repcount::model_forward(t, params, mc, random_features(rng, mc.L, mc.D_in), false);
  for (int i = 0; i < mc.L; ++i) CHECK(t.value(f.p).at(i, 0) == 0.25);
}

TEST_CASE("count readout sums the density column") {
  DensityMap m;
  m.values = Tensor::from({4}, {0.5, 0.5, 0.5, 0.5});
  CHECK(repcount::count_readout(m) == doctest::Approx(2.0).epsilon(1e-15));

  // conservation against the ground-truth construction
  repcount::FeatureSequence s;
  s.id = "g";
  s.features = Tensor::zeros({32, 2});
  s.cycles = {{2, 8}, {12, 20}, {24, 30}};
  s.count = 3;
  DensityMap g = repcount::gaussianize(s, 32);
  CHECK(repcount::count_readout(g) == doctest::Approx(3.0).epsilon(1e-6));
}

TEST_CASE("density_from_node wraps the predicted column") {
  ModelConfig mc = tiny_config();
  ModelParams params = ModelParams::init(mc, 23);
  SplitMix64 rng(223);
  Tape t;
  ForwardNodes f = repcount::model_forward(t, params, mc, random_features(rng, mc.L, mc.D_in), false);
  DensityMap m = repcount::density_from_node(t, f.p);
  CHECK(m.kind == DensityMap::Kind::predicted);
  CHECK(m.values.dim(0) == mc.L);
  double s = 0.0;
  for (int i = 0; i < mc.L; ++i) s += t.value(f.p).at(i, 0);
  CHECK(m.sum() == doctest::Approx(s).epsilon(1e-15));
}

TEST_CASE("config validation rejects impossible head splits and empty scales") {
  ModelConfig mc = tiny_config();
  mc.heads = 3;  // does not divide d_model = 16
  CHECK_THROWS_AS(mc.validate(), repcount::config_error);
  mc = tiny_config();
  mc.scales.clear();
  CHECK_THROWS_AS(mc.validate(), repcount::config_error);
  mc = tiny_config();
  mc.scales = {1, 64};  // scale wider than L
  CHECK_THROWS_AS(mc.validate(), repcount::config_error);
  mc = tiny_config();
  mc.L = 0;
  CHECK_THROWS_AS(mc.validate(), repcount::config_error);
}

TEST_CASE("feature shape mismatches are rejected") {
  ModelConfig mc = tiny_config();
  ModelParams params = ModelParams::init(mc, 29);
  SplitMix64 rng(227);
  Tape t;
  CHECK_THROWS_AS(repcount::model_forward(t, params, mc, random_features(rng, mc.L, mc.D_in + 1), false),
                  repcount::shape_error);
  Tape t2;
  CHECK_THROWS_AS(repcount::model_forward(t2, params, mc, random_features(rng, mc.L + 3, mc.D_in), false),
                  repcount::shape_error);
}

TEST_CASE("gradients flow to every parameter on a generic input") {
  ModelConfig mc = tiny_config();
  ModelParams params = ModelParams::init(mc, 31);
  SplitMix64 rng(229);
  Tape t;
  ForwardNodes f = repcount::model_forward(t, params, mc, random_features(rng, mc.L, mc.D_in), true);
  t.backward(t.sum_all(f.p));
  int touched = 0;
  for (auto id : f.param_ids)
    if (t.grad_ptr(id) != nullptr) ++touched;
  // every parameter participates in the forward graph; a missing gradient
  // would mean a disconnected branch
  CHECK(touched == static_cast<int>(f.param_ids.size()));
}
