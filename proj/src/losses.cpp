#include "repcount/losses.hpp"

#include <algorithm>
#include <cmath>

namespace repcount {

void LossWeights::validate() const {
  if (alpha < 0.0 || beta < 0.0 || gamma < 0.0)
    throw config_error("loss weights must be nonnegative");
  if (alpha == 0.0 && beta == 0.0 && gamma == 0.0)
    throw config_error("at least one loss weight must be positive");
}

void VariantParams::validate() const {
  if (temperature <= 0.0) throw config_error("temperature must be positive");
  if (phases < 1) throw config_error("phases must be ≥ 1");
}

const char* loss_kind_name(LossKind k) {
  switch (k) {
    case LossKind::p2l: return "p2l";
    case LossKind::contrastive: return "contrastive";
    case LossKind::triplet: return "triplet";
    case LossKind::regression_only: return "regression_only";
  }
  return "?";
}

LossKind parse_loss_kind(const std::string& name) {
  if (name == "p2l") return LossKind::p2l;
  if (name == "contrastive") return LossKind::contrastive;
  if (name == "triplet") return LossKind::triplet;
  if (name == "regression_only") return LossKind::regression_only;
  throw config_error("unknown loss kind '" + name + "'");
}

namespace {

// mean of already-built embedding nodes, summed in index order
Tape::NodeId mean_of(Tape& t, const std::vector<Tape::NodeId>& xs) {
  Tape::NodeId acc = xs[0];
  for (size_t i = 1; i < xs.size(); ++i) acc = t.add(acc, xs[i]);
  return t.affine(acc, 1.0 / static_cast<double>(xs.size()), 0.0);
}

}  // namespace

RefEmbeddings reference_embeddings(Tape& t, Tape::NodeId E, const std::vector<CycleSpan>& cycles,
                                   const std::vector<IntervalSpan>& intervals, int phases) {
  if (phases < 1) throw config_error("reference_embeddings: phases must be ≥ 1");
  const int L = t.value(E).dim(0);
  RefEmbeddings refs;
  refs.phases = phases;

  for (const CycleSpan& c : cycles) {
    if (c.start < 0 || c.end < c.start || c.end >= L)
      throw shape_error("reference_embeddings: cycle span out of range");
    refs.per_cycle.push_back(t.mean_rows(E, c.start, c.end + 1));
  }
  if (!refs.per_cycle.empty()) refs.collective = mean_of(t, refs.per_cycle);

  for (const IntervalSpan& iv : intervals) {
    if (iv.start < 0 || iv.end < iv.start || iv.end >= L)
      throw shape_error("reference_embeddings: interval span out of range");
    refs.per_interval.push_back(t.mean_rows(E, iv.start, iv.end + 1));
  }

  if (phases >= 2 && !cycles.empty()) {
    refs.phase.resize(cycles.size());
    for (size_t h = 0; h < cycles.size(); ++h) {
      const CycleSpan& c = cycles[h];
      const int n = c.length();
      if (n < phases)
        throw validation_error("reference_embeddings: cycle of " + std::to_string(n) +
                               " frames cannot be split into " + std::to_string(phases) +
                               " phases");
      const int base = n / phases, rem = n % phases;
      int cursor = c.start;
      for (int j = 0; j < phases; ++j) {
        const int len = base + (j < rem ? 1 : 0);  // earlier blocks take the remainder
        refs.phase[h].push_back(t.mean_rows(E, cursor, cursor + len));
        cursor += len;
      }
    }
    for (int j = 0; j < phases; ++j) {
      std::vector<Tape::NodeId> col;
      col.reserve(cycles.size());
      for (size_t h = 0; h < cycles.size(); ++h) col.push_back(refs.phase[h][static_cast<size_t>(j)]);
      refs.phase_collective.push_back(mean_of(t, col));
    }
  }
  return refs;
}

Tape::NodeId pull_loss(Tape& t, const RefEmbeddings& refs) {
  if (!refs.has_cycles()) throw validation_error("pull_loss: no cycles");
  std::vector<Tape::NodeId> terms;
  terms.reserve(refs.per_cycle.size());
  for (Tape::NodeId rh : refs.per_cycle)
    terms.push_back(t.affine(t.cosine_sim(rh, refs.collective), -1.0, 1.0));
  return t.mean_all(t.stack_scalars(terms));
}

Tape::NodeId phase_pull_loss(Tape& t, const RefEmbeddings& refs) {
  if (refs.phases < 2 || refs.phase.empty())
    throw validation_error("phase_pull_loss: phase embeddings missing");
  // Σ over cycles and phases, then averaged over cycles only
  std::vector<Tape::NodeId> terms;
  for (size_t h = 0; h < refs.phase.size(); ++h)
    for (int j = 0; j < refs.phases; ++j)
      terms.push_back(t.affine(
          t.cosine_sim(refs.phase[h][static_cast<size_t>(j)], refs.phase_collective[static_cast<size_t>(j)]),
          -1.0, 1.0));
  Tape::NodeId total = t.sum_all(t.stack_scalars(terms));
  return t.affine(total, 1.0 / static_cast<double>(refs.phase.size()), 0.0);
}

Tape::NodeId push_loss(Tape& t, const RefEmbeddings& refs) {
  if (!refs.has_cycles()) throw validation_error("push_loss: no cycles");
  if (refs.per_interval.empty()) return t.input(Tensor::scalar(0.0), false);
  std::vector<Tape::NodeId> terms;
  terms.reserve(refs.per_interval.size());
  for (Tape::NodeId rk : refs.per_interval) {
    Tape::NodeId cos = t.cosine_sim(rk, refs.collective);
    terms.push_back(t.exp(t.affine(cos, 1.0, -1.0)));  // exp(−(1−cos))
  }
  return t.mean_all(t.stack_scalars(terms));
}

Tape::NodeId regression_loss(Tape& t, Tape::NodeId p, Tape::NodeId g) {
  const Tensor& vp = t.value(p);
  const Tensor& vg = t.value(g);
  if (vp.numel() != vg.numel()) throw shape_error("regression_loss: length mismatch");
  Tape::NodeId d = t.sub(p, g);
  return t.mean_all(t.mul(d, d));
}

Tape::NodeId combined_loss(Tape& t, Tape::NodeId p, Tape::NodeId g, const RefEmbeddings& refs,
                           const LossWeights& w) {
  w.validate();
  Tape::NodeId total = t.affine(regression_loss(t, p, g), w.gamma, 0.0);
  if (refs.has_cycles()) {
    if (w.alpha != 0.0) {
      Tape::NodeId pull = refs.phases >= 2 ? phase_pull_loss(t, refs) : pull_loss(t, refs);
      total = t.add(total, t.affine(pull, w.alpha, 0.0));
    }
    if (w.beta != 0.0) total = t.add(total, t.affine(push_loss(t, refs), w.beta, 0.0));
  }
  return total;
}

Tape::NodeId contrastive_loss(Tape& t, const RefEmbeddings& refs, double temperature) {
  if (temperature <= 0.0) throw config_error("contrastive_loss: temperature must be positive");
  if (!refs.has_cycles()) throw validation_error("contrastive_loss: no cycles");
  const double inv_t = 1.0 / temperature;
  std::vector<Tape::NodeId> candidates = refs.per_cycle;
  candidates.insert(candidates.end(), refs.per_interval.begin(), refs.per_interval.end());

  std::vector<Tape::NodeId> per_anchor;
  per_anchor.reserve(refs.per_cycle.size());
  for (Tape::NodeId rh : refs.per_cycle) {
    Tape::NodeId pos = t.affine(t.cosine_sim(rh, refs.collective), inv_t, 0.0);
    std::vector<Tape::NodeId> logits;
    logits.reserve(candidates.size());
    for (Tape::NodeId cand : candidates)
      logits.push_back(t.affine(t.cosine_sim(rh, cand), inv_t, 0.0));
    Tape::NodeId lse = t.logsumexp(t.stack_scalars(logits));
    per_anchor.push_back(t.sub(lse, pos));  // −log(exp(pos)/Σexp) = lse − pos
  }
  return t.mean_all(t.stack_scalars(per_anchor));
}

bool triplet_applicable(const RefEmbeddings& refs) {
  return refs.C() >= 2 && refs.N() >= 1;
}

Tape::NodeId triplet_loss(Tape& t, const RefEmbeddings& refs, double margin) {
  if (!triplet_applicable(refs))
    throw inapplicable_loss_error("triplet_loss: needs ≥ 2 cycles and ≥ 1 interval");
  const int C = refs.C();
  std::vector<Tape::NodeId> per_anchor;
  per_anchor.reserve(static_cast<size_t>(C));
  for (int h = 0; h < C; ++h) {
    // the min/max picks are made on forward values; the subgradient flows
    // through the selected pair only
    Tape::NodeId min_pos = -1;
    double min_val = 0.0;
    for (int c = 0; c < C; ++c) {
      if (c == h) continue;
      Tape::NodeId cs = t.cosine_sim(refs.per_cycle[static_cast<size_t>(h)],
                                     refs.per_cycle[static_cast<size_t>(c)]);
      const double v = t.value(cs).at(0);
      if (min_pos < 0 || v < min_val) {
        min_pos = cs;
        min_val = v;
      }
    }
    Tape::NodeId max_neg = -1;
    double max_val = 0.0;
    for (int k = 0; k < refs.N(); ++k) {
      Tape::NodeId cs = t.cosine_sim(refs.per_cycle[static_cast<size_t>(h)],
                                     refs.per_interval[static_cast<size_t>(k)]);
      const double v = t.value(cs).at(0);
      if (max_neg < 0 || v > max_val) {
        max_neg = cs;
        max_val = v;
      }
    }
    Tape::NodeId phi = t.sub(min_pos, max_neg);
    per_anchor.push_back(t.relu(t.affine(phi, -1.0, margin)));  // max(0, λ − Φ)
  }
  return t.mean_all(t.stack_scalars(per_anchor));
}

Tape::NodeId training_loss(Tape& t, LossKind kind, Tape::NodeId p, Tape::NodeId g,
                           const RefEmbeddings& refs, const LossWeights& w,
                           const VariantParams& vp) {
  w.validate();
  vp.validate();
  Tape::NodeId reg = t.affine(regression_loss(t, p, g), w.gamma, 0.0);
  switch (kind) {
    case LossKind::regression_only:
      return reg;
    case LossKind::p2l:
      return combined_loss(t, p, g, refs, w);
    case LossKind::contrastive: {
      if (!refs.has_cycles()) return reg;
      return t.add(reg, t.affine(contrastive_loss(t, refs, vp.temperature), w.alpha, 0.0));
    }
    case LossKind::triplet: {
      if (!triplet_applicable(refs)) return reg;  // caller logs the skip
      return t.add(reg, t.affine(triplet_loss(t, refs, vp.margin), w.alpha, 0.0));
    }
  }
  throw config_error("training_loss: unknown loss kind");
}

}  // namespace repcount
