#include "repcount/generator.hpp"

#include <cmath>
#include <cstdio>

#include "repcount/errors.hpp"
#include "repcount/rng.hpp"

namespace repcount {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;
constexpr uint64_t kStreamGen = 0x67656e5f73657131ULL;

// Smooth D-dim motif over t ∈ [0,1): a constant term plus 3 Fourier
// harmonics per dimension. The constant keeps segment means away from the
// origin so mean-pooled embeddings have usable norms and directions.
struct Motif {
  int D;
  std::vector<double> dc;        // [D]
  std::vector<double> coef_cos;  // [D×3]
  std::vector<double> coef_sin;  // [D×3]

  static Motif draw(int D, SplitMix64& rng) {
    Motif m;
    m.D = D;
    m.dc.resize(static_cast<size_t>(D));
    m.coef_cos.resize(static_cast<size_t>(D) * 3);
    m.coef_sin.resize(static_cast<size_t>(D) * 3);
    for (int d = 0; d < D; ++d) m.dc[static_cast<size_t>(d)] = rng.normal();
    for (int d = 0; d < D; ++d)
      for (int h = 0; h < 3; ++h) {
        const double damp = 1.0 / (h + 1);  // mild spectral decay keeps it smooth
        m.coef_cos[static_cast<size_t>(d) * 3 + h] = rng.normal() * damp;
        m.coef_sin[static_cast<size_t>(d) * 3 + h] = rng.normal() * damp;
      }
    return m;
  }

  void eval(double t, double amp, double* out_row) const {
    for (int d = 0; d < D; ++d) {
      double v = dc[static_cast<size_t>(d)];
      for (int h = 0; h < 3; ++h) {
        const double ph = kTwoPi * (h + 1) * t;
        v += coef_cos[static_cast<size_t>(d) * 3 + h] * std::cos(ph) +
             coef_sin[static_cast<size_t>(d) * 3 + h] * std::sin(ph);
      }
      out_row[d] = amp * v;
    }
  }
};

struct Layout {
  std::vector<int> cycle_len;  // [count]
  std::vector<int> gap_len;    // [count+1]: leading, between, trailing
};

}  // namespace

void GenConfig::validate() const {
  if (L < 1 || D < 1) throw config_error("gen: L and D must be ≥ 1");
  if (count_range[0] < 0 || count_range[1] < count_range[0])
    throw config_error("gen: bad count_range");
  if (cycle_len_range[0] < 1 || cycle_len_range[1] < cycle_len_range[0])
    throw config_error("gen: bad cycle_len_range");
  if (interval_len_range[0] < 0 || interval_len_range[1] < interval_len_range[0])
    throw config_error("gen: bad interval_len_range");
  if (noise_std < 0.0) throw config_error("gen: noise_std must be ≥ 0");
  if (warp_strength < 0.0 || warp_strength > 1.0)
    throw config_error("gen: warp_strength must be in [0,1]");
  if (distractor_prob < 0.0 || distractor_prob > 1.0)
    throw config_error("gen: distractor_prob must be in [0,1]");
  const int64_t min_total = static_cast<int64_t>(count_range[0]) * cycle_len_range[0] +
                            static_cast<int64_t>(count_range[0] + 1) * interval_len_range[0];
  if (min_total > L) throw config_error("gen: even the minimal layout exceeds L frames");
}

FeatureSequence gen_sequence(const GenConfig& cfg, int index) {
  cfg.validate();
  SplitMix64 rng = SplitMix64::fork(cfg.seed, kStreamGen, static_cast<uint64_t>(index));

  const int count =
      static_cast<int>(rng.uniform_range(cfg.count_range[0], cfg.count_range[1]));

  Layout lay;
  bool placed = false;
  for (int attempt = 0; attempt < 100 && !placed; ++attempt) {
    lay.cycle_len.clear();
    lay.gap_len.clear();
    int64_t total = 0;
    for (int c = 0; c < count; ++c) {
      const int n =
          static_cast<int>(rng.uniform_range(cfg.cycle_len_range[0], cfg.cycle_len_range[1]));
      lay.cycle_len.push_back(n);
      total += n;
    }
    for (int g = 0; g < count + 1; ++g) {
      const int n = static_cast<int>(
          rng.uniform_range(cfg.interval_len_range[0], cfg.interval_len_range[1]));
      lay.gap_len.push_back(n);
      total += n;
    }
    if (total <= cfg.L) {
      lay.gap_len.back() += static_cast<int>(cfg.L - total);  // pad the tail
      placed = true;
    }
  }
  if (!placed)
    throw runtime_failure("gen: no feasible layout for sequence " + std::to_string(index) +
                          " after 100 attempts");

  const Motif cycle_motif = Motif::draw(cfg.D, rng);
  const Motif drift = Motif::draw(cfg.D, rng);
  const Motif distractor = Motif::draw(cfg.D, rng);

  FeatureSequence seq;
  char name[32];
  std::snprintf(name, sizeof name, "seq%05d", index);
  seq.id = name;
  seq.count = count;
  seq.features = Tensor::zeros({cfg.L, cfg.D});

  std::vector<double> row(static_cast<size_t>(cfg.D));
  int pos = 0;
  auto render_drift_or_distractor = [&](int start, int len) {
    if (len <= 0) return;
    const bool use_distractor = rng.bernoulli(cfg.distractor_prob);
    for (int i = 0; i < len; ++i) {
      if (use_distractor) {
        distractor.eval((i + 0.5) / len, 1.0, row.data());
      } else {
        // slow drift: stretch the motif across the whole sequence so only
        // a fraction of one period appears inside any single interval
        drift.eval(0.35 * (start + i) / cfg.L, 1.0, row.data());
      }
      for (int d = 0; d < cfg.D; ++d) seq.features.at(start + i, d) = row[static_cast<size_t>(d)];
    }
  };

  for (int c = 0; c < count; ++c) {
    render_drift_or_distractor(pos, lay.gap_len[static_cast<size_t>(c)]);
    pos += lay.gap_len[static_cast<size_t>(c)];

    const int n = lay.cycle_len[static_cast<size_t>(c)];
    const double amp = rng.uniform(0.8, 1.2);
    const double u = rng.uniform(-1.0, 1.0);  // warp direction/magnitude
    for (int i = 0; i < n; ++i) {
      const double t = (i + 0.5) / n;
      const double tw = t + cfg.warp_strength * u * t * (1.0 - t);  // monotone for |u|≤1
      cycle_motif.eval(tw, amp, row.data());
      for (int d = 0; d < cfg.D; ++d) seq.features.at(pos + i, d) = row[static_cast<size_t>(d)];
    }
    seq.cycles.push_back({pos, pos + n - 1});
    pos += n;
  }
  render_drift_or_distractor(pos, lay.gap_len.back());
  pos += lay.gap_len.back();

  if (cfg.noise_std > 0.0)
    for (int i = 0; i < cfg.L; ++i)
      for (int d = 0; d < cfg.D; ++d) seq.features.at(i, d) += cfg.noise_std * rng.normal();

  seq.validate();
  return seq;
}

std::array<GenDataset, 3> gen_dataset(const GenConfig& cfg, int n,
                                      const std::array<double, 3>& fractions) {
  cfg.validate();
  if (n < 0) throw config_error("gen: n must be ≥ 0");
  const double fsum = fractions[0] + fractions[1] + fractions[2];
  if (std::abs(fsum - 1.0) > 1e-9) throw config_error("gen: split fractions must sum to 1");
  if (fractions[0] < 0 || fractions[1] < 0 || fractions[2] < 0)
    throw config_error("gen: split fractions must be ≥ 0");

  const int n_train = static_cast<int>(fractions[0] * n);
  const int n_val = static_cast<int>(fractions[1] * n);

  std::array<GenDataset, 3> out;
  for (auto& ds : out) ds.config = cfg;
  for (int i = 0; i < n; ++i) {
    FeatureSequence seq = gen_sequence(cfg, i);
    const int part = i < n_train ? 0 : (i < n_train + n_val ? 1 : 2);
    out[static_cast<size_t>(part)].sequences.push_back(std::move(seq));
  }
  return out;
}

}  // namespace repcount
