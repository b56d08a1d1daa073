#include "repcount/gradsuite.hpp"

#include <cmath>
#include <functional>

#include "repcount/losses.hpp"
#include "repcount/model.hpp"
#include "repcount/rng.hpp"
#include "repcount/sequence.hpp"
#include "repcount/tape.hpp"

namespace repcount {

namespace {

constexpr uint64_t kStreamGrad = 0x677261646368656bULL;
constexpr int kSeeds = 10;
constexpr double kEps = 1e-5;      // ops and losses
constexpr double kEpsModel = 2e-6; // end-to-end: smaller step keeps the FD
                                   // probe inside one linear piece of the
                                   // many ReLU kinks
constexpr double kTolOp = 1e-4;
constexpr double kTolModel = 1e-3;

Tensor rt(SplitMix64& rng, const std::vector<int>& shape) {
  Tensor t = Tensor::zeros(shape);
  for (int64_t i = 0; i < t.numel(); ++i) t.data()[i] = rng.uniform(-2.0, 2.0);
  return t;
}

// magnitudes in [0.05, 2]: keeps every coordinate a safe distance from the
// ReLU kink relative to the FD step
Tensor rt_off_kink(SplitMix64& rng, const std::vector<int>& shape) {
  Tensor t = Tensor::zeros(shape);
  for (int64_t i = 0; i < t.numel(); ++i) {
    const double mag = 0.05 + 1.95 * rng.uniform();
    t.data()[i] = rng.bernoulli(0.5) ? mag : -mag;
  }
  return t;
}

Tensor rt_nonzero_norm(SplitMix64& rng, int n) {
  while (true) {
    Tensor t = rt(rng, {n});
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += t.at(i) * t.at(i);
    if (std::sqrt(s) > 0.3) return t;
  }
}

using Build = std::function<Tape::NodeId(Tape&, const std::vector<Tape::NodeId>&)>;

// wraps an op output with a fixed random linear functional so asymmetric
// gradient bugs cannot cancel inside a plain sum
double check(const std::vector<Tensor>& theta, const Tensor& weight,
             const std::function<Tape::NodeId(Tape&, const std::vector<Tape::NodeId>&)>& op,
             double eps) {
  Build build = [&weight, &op](Tape& t, const std::vector<Tape::NodeId>& leaves) {
    Tape::NodeId out = op(t, leaves);
    Tape::NodeId w = t.input(weight, false);
    return t.sum_all(t.mul(out, w));
  };
  return grad_check(theta, build, eps);
}

struct SeqFixture {
  std::vector<CycleSpan> cycles;
  std::vector<IntervalSpan> intervals;
};

// two cycles with surrounding intervals on 16 frames
SeqFixture loss_fixture() {
  SeqFixture f;
  f.cycles = {{1, 5}, {8, 13}};
  f.intervals = {{0, 0}, {6, 7}, {14, 15}};
  return f;
}

double loss_case(SplitMix64& rng, int phases,
                 const std::function<Tape::NodeId(Tape&, const RefEmbeddings&)>& make) {
  SeqFixture fx = loss_fixture();
  std::vector<Tensor> theta = {rt(rng, {16, 8})};
  Build build = [&fx, phases, &make](Tape& t, const std::vector<Tape::NodeId>& leaves) {
    RefEmbeddings refs = reference_embeddings(t, leaves[0], fx.cycles, fx.intervals, phases);
    return make(t, refs);
  };
  return grad_check(theta, build, kEps);
}

ModelConfig reduced_config() {
  ModelConfig mc;
  mc.L = 8;
  mc.D_in = 4;
  mc.d_model = 16;
  mc.heads = 2;
  mc.scales = {1, 2};
  mc.fusion_channels = 4;
  mc.head_hidden = 16;
  mc.encoder_layers = 1;
  return mc;
}

double model_loss(const ModelParams& params, const ModelConfig& mc, const FeatureSequence& seq,
                  const Tensor& gcol, const std::vector<IntervalSpan>& intervals, bool with_grad,
                  std::vector<Tensor>* grads) {
  Tape t;
  ForwardNodes f = model_forward(t, params, mc, seq.features, with_grad);
  Tape::NodeId g = t.input(gcol, false);
  RefEmbeddings refs = reference_embeddings(t, f.E, seq.cycles, intervals, 1);
  LossWeights w;  // all 1 — every term active
  VariantParams vp;
  Tape::NodeId loss = training_loss(t, LossKind::p2l, f.p, g, refs, w, vp);
  if (with_grad) {
    t.backward(loss);
    grads->clear();
    for (Tape::NodeId id : f.param_ids) grads->push_back(t.grad(id));
  }
  return t.value(loss).at(0);
}

// Central differences at a rectifier kink measure a slope average, not the
// derivative, so a pre-activation within the probe's reach of zero makes the
// comparison meaningless no matter how exact the analytic gradient is.
// Redraw the random features (numbered substreams, fully deterministic)
// until every pre-activation keeps this margin.
constexpr double kKinkMargin = 1e-4;

double min_abs_relu_pre(const ModelParams& params, const ModelConfig& mc, const Tensor& feat) {
  Tape t;
  ForwardNodes f = model_forward(t, params, mc, feat, false);
  double m = 1e300;
  for (Tape::NodeId id : f.relu_pre) {
    const Tensor& v = t.value(id);
    for (int64_t i = 0; i < v.numel(); ++i) m = std::min(m, std::abs(v.data()[i]));
  }
  return m;
}

double end_to_end_case(uint64_t seed) {
  ModelConfig mc = reduced_config();
  ModelParams params = ModelParams::init(mc, seed);

  FeatureSequence seq;
  seq.id = "grad";
  for (uint64_t draw = 0;; ++draw) {
    SplitMix64 rng = SplitMix64::fork(seed, kStreamGrad, 0xe2e + draw);
    seq.features = rt(rng, {mc.L, mc.D_in});
    if (min_abs_relu_pre(params, mc, seq.features) >= kKinkMargin) break;
  }
  seq.cycles = {{0, 2}, {4, 6}};
  seq.count = 2;
  seq.validate();
  const std::vector<IntervalSpan> intervals = derive_intervals(seq);
  DensityMap g = gaussianize(seq, mc.L);
  Tensor gcol = Tensor::zeros({mc.L, 1});
  for (int i = 0; i < mc.L; ++i) gcol.at(i, 0) = g.values.at(i);

  std::vector<Tensor> analytic;
  model_loss(params, mc, seq, gcol, intervals, true, &analytic);

  double worst = 0.0;
  for (size_t p = 0; p < params.items.size(); ++p) {
    double* data = params.items[p].second.data();
    const int64_t n = params.items[p].second.numel();
    for (int64_t i = 0; i < n; ++i) {
      const double keep = data[i];
      data[i] = keep + kEpsModel;
      const double up = model_loss(params, mc, seq, gcol, intervals, false, nullptr);
      data[i] = keep - kEpsModel;
      const double down = model_loss(params, mc, seq, gcol, intervals, false, nullptr);
      data[i] = keep;
      const double central = (up - down) / (2.0 * kEpsModel);
      const double err =
          std::abs(analytic[p].data()[i] - central) / std::max(1.0, std::abs(central));
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace

std::vector<GradCheckCase> run_grad_suite(uint64_t seed_base) {
  struct Entry {
    const char* name;
    double tol;
    std::function<double(SplitMix64&)> run;  // one seed → max rel err
  };

  std::vector<Entry> entries;
  auto op_entry = [&](const char* name,
                      const std::function<double(SplitMix64&)>& run) {
    entries.push_back({name, kTolOp, run});
  };

  op_entry("op.add", [](SplitMix64& r) {
    std::vector<Tensor> th = {rt(r, {3, 4}), rt(r, {3, 4})};
    Tensor w = rt(r, {3, 4});
    return check(th, w, [](Tape& t, auto& l) { return t.add(l[0], l[1]); }, kEps);
  });
  op_entry("op.sub", [](SplitMix64& r) {
    std::vector<Tensor> th = {rt(r, {3, 4}), rt(r, {3, 4})};
    Tensor w = rt(r, {3, 4});
    return check(th, w, [](Tape& t, auto& l) { return t.sub(l[0], l[1]); }, kEps);
  });
  op_entry("op.mul", [](SplitMix64& r) {
    std::vector<Tensor> th = {rt(r, {3, 4}), rt(r, {3, 4})};
    Tensor w = rt(r, {3, 4});
    return check(th, w, [](Tape& t, auto& l) { return t.mul(l[0], l[1]); }, kEps);
  });
  op_entry("op.affine", [](SplitMix64& r) {
    std::vector<Tensor> th = {rt(r, {3, 4})};
    Tensor w = rt(r, {3, 4});
    return check(th, w, [](Tape& t, auto& l) { return t.affine(l[0], 1.7, -0.3); }, kEps);
  });
  op_entry("op.exp", [](SplitMix64& r) {
    std::vector<Tensor> th = {rt(r, {3, 4})};
    Tensor w = rt(r, {3, 4});
    return check(th, w, [](Tape& t, auto& l) { return t.exp(l[0]); }, kEps);
  });
  op_entry("op.log", [](SplitMix64& r) {
    std::vector<Tensor> th = {rt(r, {3, 4})};
    Tensor w = rt(r, {3, 4});
    // x² + 0.1 keeps the argument positive while the chain still runs
    // through the leaf
    return check(
        th, w, [](Tape& t, auto& l) { return t.log(t.affine(t.mul(l[0], l[0]), 1.0, 0.1)); },
        kEps);
  });
  op_entry("op.relu", [](SplitMix64& r) {
    std::vector<Tensor> th = {rt_off_kink(r, {3, 4})};
    Tensor w = rt(r, {3, 4});
    return check(th, w, [](Tape& t, auto& l) { return t.relu(l[0]); }, kEps);
  });
  op_entry("op.sum_all", [](SplitMix64& r) {
    std::vector<Tensor> th = {rt(r, {4, 5})};
    Tensor w = rt(r, {1});
    return check(th, w, [](Tape& t, auto& l) { return t.sum_all(l[0]); }, kEps);
  });
  op_entry("op.mean_all", [](SplitMix64& r) {
    std::vector<Tensor> th = {rt(r, {4, 5})};
    Tensor w = rt(r, {1});
    return check(th, w, [](Tape& t, auto& l) { return t.mean_all(l[0]); }, kEps);
  });
  op_entry("op.mean_rows", [](SplitMix64& r) {
    std::vector<Tensor> th = {rt(r, {6, 3})};
    Tensor w = rt(r, {3});
    return check(th, w, [](Tape& t, auto& l) { return t.mean_rows(l[0], 1, 4); }, kEps);
  });
  op_entry("op.matmul", [](SplitMix64& r) {
    std::vector<Tensor> th = {rt(r, {3, 4}), rt(r, {4, 5})};
    Tensor w = rt(r, {3, 5});
    return check(th, w, [](Tape& t, auto& l) { return t.matmul(l[0], l[1]); }, kEps);
  });
  op_entry("op.matmul_sorted", [](SplitMix64& r) {
    std::vector<Tensor> th = {rt(r, {3, 4}), rt(r, {4, 5})};
    Tensor w = rt(r, {3, 5});
    return check(th, w, [](Tape& t, auto& l) { return t.matmul_sorted(l[0], l[1]); }, kEps);
  });
  op_entry("op.matmul_nt", [](SplitMix64& r) {
    std::vector<Tensor> th = {rt(r, {3, 4}), rt(r, {5, 4})};
    Tensor w = rt(r, {3, 5});
    return check(th, w, [](Tape& t, auto& l) { return t.matmul_nt(l[0], l[1]); }, kEps);
  });
  op_entry("op.bias_add_rows", [](SplitMix64& r) {
    std::vector<Tensor> th = {rt(r, {4, 3}), rt(r, {3})};
    Tensor w = rt(r, {4, 3});
    return check(th, w, [](Tape& t, auto& l) { return t.bias_add_rows(l[0], l[1]); }, kEps);
  });
  op_entry("op.softmax_rows", [](SplitMix64& r) {
    std::vector<Tensor> th = {rt(r, {3, 5})};
    Tensor w = rt(r, {3, 5});
    return check(th, w, [](Tape& t, auto& l) { return t.softmax_rows(l[0]); }, kEps);
  });
  op_entry("op.layer_norm_rows", [](SplitMix64& r) {
    std::vector<Tensor> th = {rt(r, {4, 6}), rt(r, {6}), rt(r, {6})};
    Tensor w = rt(r, {4, 6});
    return check(th, w, [](Tape& t, auto& l) { return t.layer_norm_rows(l[0], l[1], l[2]); },
                 kEps);
  });
  op_entry("op.cosine_sim", [](SplitMix64& r) {
    std::vector<Tensor> th = {rt_nonzero_norm(r, 7), rt_nonzero_norm(r, 7)};
    Tensor w = rt(r, {1});
    return check(th, w, [](Tape& t, auto& l) { return t.cosine_sim(l[0], l[1]); }, kEps);
  });
  op_entry("op.conv1d_temporal", [](SplitMix64& r) {
    std::vector<Tensor> th = {rt(r, {6, 3}), rt(r, {3, 3, 2}), rt(r, {2})};
    Tensor w = rt(r, {6, 2});
    return check(th, w, [](Tape& t, auto& l) { return t.conv1d_temporal(l[0], l[1], l[2]); },
                 kEps);
  });
  op_entry("op.conv2d", [](SplitMix64& r) {
    std::vector<Tensor> th = {rt(r, {2, 4, 4}), rt(r, {3, 2, 3, 3}), rt(r, {3})};
    Tensor w = rt(r, {3, 4, 4});
    return check(th, w, [](Tape& t, auto& l) { return t.conv2d(l[0], l[1], l[2]); }, kEps);
  });
  op_entry("op.sliding_mean_rows", [](SplitMix64& r) {
    std::vector<Tensor> th = {rt(r, {6, 4})};
    Tensor w = rt(r, {6, 4});
    return check(th, w, [](Tape& t, auto& l) { return t.sliding_mean_rows(l[0], 3); }, kEps);
  });
  op_entry("op.sliding_mean_rows_even", [](SplitMix64& r) {
    std::vector<Tensor> th = {rt(r, {6, 4})};
    Tensor w = rt(r, {6, 4});
    return check(th, w, [](Tape& t, auto& l) { return t.sliding_mean_rows(l[0], 4); }, kEps);
  });
  op_entry("op.flatten_frames", [](SplitMix64& r) {
    std::vector<Tensor> th = {rt(r, {2, 3, 3})};
    Tensor w = rt(r, {3, 6});
    return check(th, w, [](Tape& t, auto& l) { return t.flatten_frames(l[0]); }, kEps);
  });
  op_entry("op.concat_channels", [](SplitMix64& r) {
    std::vector<Tensor> th = {rt(r, {3, 3}), rt(r, {2, 3, 3})};
    Tensor w = rt(r, {3, 3, 3});
    return check(th, w,
                 [](Tape& t, auto& l) { return t.concat_channels({l[0], l[1]}); }, kEps);
  });
  op_entry("op.concat_cols", [](SplitMix64& r) {
    std::vector<Tensor> th = {rt(r, {4, 2}), rt(r, {4, 3})};
    Tensor w = rt(r, {4, 5});
    return check(th, w, [](Tape& t, auto& l) { return t.concat_cols({l[0], l[1]}); }, kEps);
  });
  op_entry("op.stack_scalars", [](SplitMix64& r) {
    std::vector<Tensor> th = {rt(r, {1}), rt(r, {1}), rt(r, {1})};
    Tensor w = rt(r, {3});
    return check(th, w,
                 [](Tape& t, auto& l) { return t.stack_scalars({l[0], l[1], l[2]}); }, kEps);
  });
  op_entry("op.logsumexp", [](SplitMix64& r) {
    std::vector<Tensor> th = {rt(r, {6})};
    Tensor w = rt(r, {1});
    return check(th, w, [](Tape& t, auto& l) { return t.logsumexp(l[0]); }, kEps);
  });

  op_entry("loss.pull", [](SplitMix64& r) {
    return loss_case(r, 1, [](Tape& t, const RefEmbeddings& refs) { return pull_loss(t, refs); });
  });
  op_entry("loss.phase_pull", [](SplitMix64& r) {
    return loss_case(
        r, 2, [](Tape& t, const RefEmbeddings& refs) { return phase_pull_loss(t, refs); });
  });
  op_entry("loss.push", [](SplitMix64& r) {
    return loss_case(r, 1, [](Tape& t, const RefEmbeddings& refs) { return push_loss(t, refs); });
  });
  op_entry("loss.regression", [](SplitMix64& r) {
    std::vector<Tensor> th = {rt(r, {10, 1})};
    Tensor g = rt(r, {10, 1});
    Build build = [g](Tape& t, const std::vector<Tape::NodeId>& l) {
      return regression_loss(t, l[0], t.input(g, false));
    };
    return grad_check(th, build, kEps);
  });
  op_entry("loss.combined", [](SplitMix64& r) {
    SeqFixture fx = loss_fixture();
    std::vector<Tensor> th = {rt(r, {16, 8}), rt(r, {16, 1})};
    Tensor g = rt(r, {16, 1});
    LossWeights w{0.7, 1.3, 0.9};
    Build build = [fx, g, w](Tape& t, const std::vector<Tape::NodeId>& l) {
      RefEmbeddings refs = reference_embeddings(t, l[0], fx.cycles, fx.intervals, 1);
      return combined_loss(t, l[1], t.input(g, false), refs, w);
    };
    return grad_check(th, build, kEps);
  });
  op_entry("loss.contrastive", [](SplitMix64& r) {
    return loss_case(r, 1, [](Tape& t, const RefEmbeddings& refs) {
      return contrastive_loss(t, refs, 0.07);
    });
  });
  op_entry("loss.triplet", [](SplitMix64& r) {
    return loss_case(r, 1,
                     [](Tape& t, const RefEmbeddings& refs) { return triplet_loss(t, refs, 2.0); });
  });

  std::vector<GradCheckCase> cases;
  for (size_t e = 0; e < entries.size(); ++e) {
    GradCheckCase c;
    c.name = entries[e].name;
    c.tol = entries[e].tol;
    for (int s = 0; s < kSeeds; ++s) {
      SplitMix64 rng =
          SplitMix64::fork(seed_base, kStreamGrad, static_cast<uint64_t>(e) * 64 + s);
      c.max_err = std::max(c.max_err, entries[e].run(rng));
    }
    c.pass = c.max_err < c.tol;
    cases.push_back(std::move(c));
  }

  GradCheckCase e2e;
  e2e.name = "model.end_to_end";
  e2e.tol = kTolModel;
  for (int s = 0; s < kSeeds; ++s)
    e2e.max_err = std::max(e2e.max_err, end_to_end_case(seed_base + static_cast<uint64_t>(s)));
  e2e.pass = e2e.max_err < e2e.tol;
  cases.push_back(std::move(e2e));

  return cases;
}

bool all_pass(const std::vector<GradCheckCase>& cases) {
  for (const GradCheckCase& c : cases)
    if (!c.pass) return false;
  return true;
}

}  // namespace repcount
