#ifndef REPCOUNT_LOSSES_HPP
#define REPCOUNT_LOSSES_HPP

#include <vector>

#include "repcount/errors.hpp"
#include "repcount/sequence.hpp"
#include "repcount/tape.hpp"

namespace repcount {

// Raised when a loss's preconditions cannot be met by the sequence at hand
// (e.g. triplet with fewer than two cycles or no intervals); training skips
// the term with a warning instead of failing the run.
struct inapplicable_loss_error : validation_error {
  explicit inapplicable_loss_error(const std::string& msg) : validation_error(msg) {}
};

// Segment reference embeddings on the tape, all differentiable w.r.t. the
// frame embedding matrix E they were pooled from:
//   per_cycle[h]   mean of E rows inside cycle h
//   collective     mean of the per-cycle embeddings
//   per_interval[k] mean of E rows inside interval k
//   phase[h][j]    mean of rows in the j-th of M near-equal blocks of cycle h
//   phase_collective[j] mean over cycles of phase[h][j]
struct RefEmbeddings {
  std::vector<Tape::NodeId> per_cycle;
  Tape::NodeId collective = -1;
  std::vector<Tape::NodeId> per_interval;
  std::vector<std::vector<Tape::NodeId>> phase;
  std::vector<Tape::NodeId> phase_collective;
  int phases = 1;

  int C() const { return static_cast<int>(per_cycle.size()); }
  int N() const { return static_cast<int>(per_interval.size()); }
  bool has_cycles() const { return !per_cycle.empty(); }
};

struct LossWeights {
  double alpha = 1.0;  // pull / variant weight
  double beta = 1.0;   // push weight
  double gamma = 1.0;  // regression weight
  void validate() const;
};

struct VariantParams {
  double temperature = 0.07;
  double margin = 2.0;
  int phases = 1;
  void validate() const;
};

enum class LossKind { p2l, contrastive, triplet, regression_only };

const char* loss_kind_name(LossKind k);
LossKind parse_loss_kind(const std::string& name);

// Pools cycle/interval/phase embeddings from E ([L×d]). With phases M ≥ 2
// every cycle is split into M contiguous blocks, earlier blocks one frame
// longer when the length is not divisible; cycles shorter than M frames are
// rejected.
RefEmbeddings reference_embeddings(Tape& t, Tape::NodeId E, const std::vector<CycleSpan>& cycles,
                                   const std::vector<IntervalSpan>& intervals, int phases = 1);

// (1/C) Σ_h (1 − cos(R_h, R))
Tape::NodeId pull_loss(Tape& t, const RefEmbeddings& refs);

// (1/C) Σ_h Σ_j (1 − cos(phase[h][j], phase_collective[j])), phases ≥ 2
Tape::NodeId phase_pull_loss(Tape& t, const RefEmbeddings& refs);

// (1/N) Σ_k exp(−(1 − cos(R̃_k, R))); 0 when there are no intervals
Tape::NodeId push_loss(Tape& t, const RefEmbeddings& refs);

// (1/L) Σ_i (p_i − g_i)²
Tape::NodeId regression_loss(Tape& t, Tape::NodeId p, Tape::NodeId g);

// α·pull + β·push + γ·regression; pull is the phase variant when the
// embeddings were pooled with phases ≥ 2. Cycle-free sequences contribute
// only the regression term.
Tape::NodeId combined_loss(Tape& t, Tape::NodeId p, Tape::NodeId g, const RefEmbeddings& refs,
                           const LossWeights& w);

// (1/C) Σ_h −log( exp(cos(R_h,R)/τ) / Σ_j exp(cos(R_h,R̂_j)/τ) ) with the
// candidate set {R̂_j} = per_cycle ∪ per_interval (the anchor included)
Tape::NodeId contrastive_loss(Tape& t, const RefEmbeddings& refs, double temperature);

bool triplet_applicable(const RefEmbeddings& refs);

// mean over h of max(0, λ − Φ_h), Φ_h = min_{c≠h} cos(R_h,R_c) − max_k cos(R_h,R̃_k)
Tape::NodeId triplet_loss(Tape& t, const RefEmbeddings& refs, double margin);

// Loss used by the training loop for the given kind. Variant losses keep
// the γ-weighted regression term; inapplicable triplet terms degrade to
// regression-only for that sequence.
Tape::NodeId training_loss(Tape& t, LossKind kind, Tape::NodeId p, Tape::NodeId g,
                           const RefEmbeddings& refs, const LossWeights& w,
                           const VariantParams& vp);

}  // namespace repcount

#endif
