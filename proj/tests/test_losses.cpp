#include <doctest.h>

#include <cmath>
#include <vector>

#include "repcount/errors.hpp"
#include "repcount/losses.hpp"
#include "repcount/rng.hpp"
#include "repcount/sequence.hpp"
#include "repcount/tape.hpp"

using repcount::CycleSpan;
using repcount::IntervalSpan;
using repcount::LossKind;
using repcount::LossWeights;
using repcount::RefEmbeddings;
using repcount::SplitMix64;
using repcount::Tape;
using repcount::Tensor;
using repcount::VariantParams;

namespace {

// embeddings pooled from single-frame spans are the rows themselves, which
// makes every cosine in the fixtures exact by construction
RefEmbeddings refs_from_rows(Tape& t, const Tensor& E, std::vector<CycleSpan> cycles,
                             std::vector<IntervalSpan> intervals, int phases = 1) {
  auto Eid = t.input(E);
  return repcount::reference_embeddings(t, Eid, cycles, intervals, phases);
}

double scalar(Tape& t, Tape::NodeId id) { return t.value(id).at(0); }

}  // namespace

TEST_CASE("pooled reference embeddings") {
  SUBCASE("a cycle covering everything pools to the column mean") {
    Tape t;
    Tensor E = Tensor::from({3, 2}, {1, 10, 2, 20, 3, 30});
    auto refs = refs_from_rows(t, E, {{0, 2}}, {});
    REQUIRE(refs.C() == 1);
    CHECK(t.value(refs.per_cycle[0]).at(0) == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(t.value(refs.per_cycle[0]).at(1) == doctest::Approx(20.0).epsilon(1e-15));
  }
  SUBCASE("one-hot rows average to the expected vector") {
    Tape t;
    Tensor E = Tensor::zeros({2, 4});
    E.at(0, 0) = 1.0;
    E.at(1, 1) = 1.0;
    auto refs = refs_from_rows(t, E, {{0, 1}}, {});
    CHECK(t.value(refs.per_cycle[0]).at(0) == 0.5);
    CHECK(t.value(refs.per_cycle[0]).at(1) == 0.5);
    CHECK(t.value(refs.per_cycle[0]).at(2) == 0.0);
    CHECK(t.value(refs.per_cycle[0]).at(3) == 0.0);
  }
  SUBCASE("the collective embedding is the mean of the cycle embeddings") {
    SplitMix64 rng(167);
    Tape t;
    Tensor E = Tensor::zeros({10, 3});
    for (int64_t i = 0; i < E.numel(); ++i) E.at(static_cast<int>(i)) = rng.uniform(-1.0, 1.0);
    auto refs = refs_from_rows(t, E, {{0, 2}, {4, 6}, {8, 9}}, {{3, 3}, {7, 7}});
    REQUIRE(refs.C() == 3);
    REQUIRE(refs.N() == 2);
    for (int d = 0; d < 3; ++d) {
      double mean = 0.0;
      for (auto rc : refs.per_cycle) mean += t.value(rc).at(d) / 3.0;
      CHECK(t.value(refs.collective).at(d) == doctest::Approx(mean).epsilon(1e-12));
    }
  }
  SUBCASE("phase blocks split front-loaded and reject too-short cycles") {
    Tape t;
    Tensor E = Tensor::from({5, 1}, {0, 1, 2, 3, 4});
    auto refs = refs_from_rows(t, E, {{0, 4}}, {}, 2);
    REQUIRE(refs.phase.size() == 1);
    REQUIRE(refs.phase[0].size() == 2);
    CHECK(scalar(t, refs.phase[0][0]) == doctest::Approx(1.0).epsilon(1e-15));  // rows 0..2
    CHECK(scalar(t, refs.phase[0][1]) == doctest::Approx(3.5).epsilon(1e-15));  // rows 3..4

    Tape t2;
    Tensor E2 = Tensor::from({2, 1}, {1, 2});
    CHECK_THROWS_AS(refs_from_rows(t2, E2, {{0, 0}}, {}, 2), repcount::validation_error);
  }
}

TEST_CASE("pull loss") {
  SUBCASE("identical cycle embeddings pull to zero") {
    Tape t;
    Tensor E = Tensor::from({3, 2}, {2, 1, 2, 1, 2, 1});
    auto refs = refs_from_rows(t, E, {{0, 0}, {1, 1}, {2, 2}}, {});
    CHECK(scalar(t, repcount::pull_loss(t, refs)) == doctest::Approx(0.0).epsilon(1e-12));
  }
  SUBCASE("a single cycle is its own collective, so pull is zero") {
    Tape t;
    Tensor E = Tensor::from({1, 2}, {3, 4});
    auto refs = refs_from_rows(t, E, {{0, 0}}, {});
    CHECK(scalar(t, repcount::pull_loss(t, refs)) == doctest::Approx(0.0).epsilon(1e-12));
  }
  SUBCASE("two orthogonal cycles give 1 − 1/√2") {
    Tape t;
    Tensor E = Tensor::from({2, 2}, {1, 0, 0, 1});
    auto refs = refs_from_rows(t, E, {{0, 0}, {1, 1}}, {});
    CHECK(scalar(t, repcount::pull_loss(t, refs)) ==
          doctest::Approx(1.0 - 1.0 / std::sqrt(2.0)).epsilon(1e-12));
  }
  SUBCASE("cycle-free input is rejected") {
    Tape t;
    auto refs = refs_from_rows(t, Tensor::from({2, 2}, {1, 0, 0, 1}), {}, {{0, 1}});
    CHECK_THROWS_AS(repcount::pull_loss(t, refs), repcount::validation_error);
  }
}

TEST_CASE("push loss takes the three constructed alignment values") {
  auto push_against = [](double x, double y) {
    Tape t;
    Tensor E = Tensor::from({2, 2}, {1, 0, x, y});
    auto refs = refs_from_rows(t, E, {{0, 0}}, {{1, 1}});
    return scalar(t, repcount::push_loss(t, refs));
  };
  CHECK(push_against(1, 0) == doctest::Approx(1.0).epsilon(1e-9));              // aligned
  CHECK(push_against(0, 1) == doctest::Approx(std::exp(-1.0)).epsilon(1e-9));   // orthogonal
  CHECK(push_against(-1, 0) == doctest::Approx(std::exp(-2.0)).epsilon(1e-9));  // opposed
}

TEST_CASE("push loss with no intervals is exactly zero") {
  Tape t;
  auto refs = refs_from_rows(t, Tensor::from({2, 2}, {1, 0, 0, 1}), {{0, 0}, {1, 1}}, {});
  CHECK(scalar(t, repcount::push_loss(t, refs)) == 0.0);
}

TEST_CASE("regression loss") {
  Tape t;
  auto p = t.input(Tensor::from({4}, {1, 2, 3, 4}));
  CHECK(scalar(t, repcount::regression_loss(t, p, p)) == 0.0);
  auto a = t.input(Tensor::from({2}, {1, 0}));
  auto b = t.input(Tensor::from({2}, {0, 0}));
  CHECK(scalar(t, repcount::regression_loss(t, a, b)) == doctest::Approx(0.5).epsilon(1e-15));
  auto c = t.input(Tensor::from({3}, {0, 0, 0}));
  CHECK_THROWS_AS(repcount::regression_loss(t, a, c), repcount::shape_error);
}

TEST_CASE("combined loss composition") {
  SplitMix64 rng(173);
  Tensor E = Tensor::zeros({16, 4});
  for (int64_t i = 0; i < E.numel(); ++i) E.at(static_cast<int>(i)) = rng.uniform(-2.0, 2.0);
  std::vector<CycleSpan> cycles{{1, 4}, {8, 12}};
  std::vector<IntervalSpan> intervals{{0, 0}, {5, 7}, {13, 15}};
  Tensor pv = Tensor::zeros({16}), gv = Tensor::zeros({16});
  for (int i = 0; i < 16; ++i) {
    pv.at(i) = rng.uniform(0.0, 1.0);
    gv.at(i) = rng.uniform(0.0, 1.0);
  }

  auto build = [&](const LossWeights& w) {
    Tape t;
    auto refs = refs_from_rows(t, E, cycles, intervals);
    auto p = t.input(pv), g = t.input(gv);
    double combined = scalar(t, repcount::combined_loss(t, p, g, refs, w));
    double pull = scalar(t, repcount::pull_loss(t, refs));
    double push = scalar(t, repcount::push_loss(t, refs));
    double reg = scalar(t, repcount::regression_loss(t, p, g));
    return std::array<double, 4>{combined, pull, push, reg};
  };

  LossWeights w;
  w.alpha = 0.7;
  w.beta = 1.3;
  w.gamma = 0.4;
  auto [combined, pull, push, reg] = build(w);
  SUBCASE("equals the weighted component sum") {
    CHECK(combined ==
          doctest::Approx(w.alpha * pull + w.beta * push + w.gamma * reg).epsilon(1e-14));
  }
  SUBCASE("zeroing alpha and beta leaves only the scaled regression term") {
    LossWeights wr;
    wr.alpha = 0.0;
    wr.beta = 0.0;
    wr.gamma = 0.4;
    CHECK(build(wr)[0] == doctest::Approx(0.4 * reg).epsilon(1e-15));
  }
  SUBCASE("doubling every weight exactly doubles the loss") {
    LossWeights w2;
    w2.alpha = 2 * w.alpha;
    w2.beta = 2 * w.beta;
    w2.gamma = 2 * w.gamma;
    CHECK(build(w2)[0] == 2.0 * combined);  // power-of-two scaling commutes with rounding
  }
  SUBCASE("cycle-free sequences contribute only regression") {
    Tape t;
    auto refs = refs_from_rows(t, E, {}, intervals);
    auto p = t.input(pv), g = t.input(gv);
    CHECK(scalar(t, repcount::combined_loss(t, p, g, refs, w)) ==
          doctest::Approx(w.gamma * reg).epsilon(1e-15));
  }
}

TEST_CASE("loss weight validation") {
  LossWeights w;
  w.alpha = -0.1;
  CHECK_THROWS_AS(w.validate(), repcount::config_error);
  w = LossWeights{};
  w.alpha = w.beta = w.gamma = 0.0;
  CHECK_THROWS_AS(w.validate(), repcount::config_error);
}

TEST_CASE("contrastive loss") {
  SUBCASE("a lone cycle with no intervals scores zero") {
    Tape t;
    auto refs = refs_from_rows(t, Tensor::from({1, 2}, {1, 0}), {{0, 0}}, {});
    CHECK(scalar(t, repcount::contrastive_loss(t, refs, 0.07)) ==
          doctest::Approx(0.0).epsilon(1e-12));
  }
  SUBCASE("one cycle against one orthogonal interval matches the closed form") {
    Tape t;
    auto refs = refs_from_rows(t, Tensor::from({2, 2}, {1, 0, 0, 1}), {{0, 0}}, {{1, 1}});
    // softmax over candidate cosines {1, 0} at τ: −log σ = log(1 + e^{−1/τ})
    CHECK(scalar(t, repcount::contrastive_loss(t, refs, 0.07)) ==
          doctest::Approx(std::log1p(std::exp(-1.0 / 0.07))).epsilon(1e-9));
  }
  SUBCASE("an interval aligned with the cycles raises the loss to log 2") {
    Tape t;
    auto refs = refs_from_rows(t, Tensor::from({2, 2}, {1, 0, 1, 0}), {{0, 0}}, {{1, 1}});
    CHECK(scalar(t, repcount::contrastive_loss(t, refs, 0.07)) ==
          doctest::Approx(std::log(2.0)).epsilon(1e-9));
  }
  SUBCASE("a closer distractor means a larger loss") {
    auto at_similarity = [](double x, double y) {
      Tape t;
      auto refs = refs_from_rows(t, Tensor::from({2, 2}, {1, 0, x, y}), {{0, 0}}, {{1, 1}});
      return scalar(t, repcount::contrastive_loss(t, refs, 0.5));
    };
    CHECK(at_similarity(1, 1) > at_similarity(0, 1));    // cos 0.707 vs 0
    CHECK(at_similarity(0, 1) > at_similarity(-1, 1));   // cos 0 vs −0.707
  }
  SUBCASE("temperature must be positive") {
    Tape t;
    auto refs = refs_from_rows(t, Tensor::from({1, 2}, {1, 0}), {{0, 0}}, {});
    CHECK_THROWS_AS(repcount::contrastive_loss(t, refs, 0.0), repcount::config_error);
    CHECK_THROWS_AS(repcount::contrastive_loss(t, refs, -0.1), repcount::config_error);
  }
}

TEST_CASE("triplet loss") {
  SUBCASE("coincident positives with an orthogonal negative score the margin minus one") {
    Tape t;
    Tensor E = Tensor::from({3, 2}, {1, 0, 1, 0, 0, 1});
    auto refs = refs_from_rows(t, E, {{0, 0}, {1, 1}}, {{2, 2}});
    // Φ_h = 1 − 0 = 1 for both anchors → mean max(0, 2 − 1) = 1
    CHECK(scalar(t, repcount::triplet_loss(t, refs, 2.0)) == doctest::Approx(1.0).epsilon(1e-9));
  }
  SUBCASE("a wide margin satisfied everywhere clamps to zero") {
    Tape t;
    Tensor E = Tensor::from({3, 2}, {1, 0, 1, 0, -1, 0});
    auto refs = refs_from_rows(t, E, {{0, 0}, {1, 1}}, {{2, 2}});
    // Φ = 1 − (−1) = 2 ⇒ max(0, 1.5 − 2) = 0
    CHECK(scalar(t, repcount::triplet_loss(t, refs, 1.5)) == 0.0);
  }
  SUBCASE("applicability needs two cycles and one interval") {
    Tape t;
    auto one_cycle = refs_from_rows(t, Tensor::from({2, 2}, {1, 0, 0, 1}), {{0, 0}}, {{1, 1}});
    CHECK(!repcount::triplet_applicable(one_cycle));
    CHECK_THROWS_AS(repcount::triplet_loss(t, one_cycle, 2.0), repcount::inapplicable_loss_error);

    Tape t2;
    auto no_interval = refs_from_rows(t2, Tensor::from({2, 2}, {1, 0, 0, 1}), {{0, 0}, {1, 1}}, {});
    CHECK(!repcount::triplet_applicable(no_interval));
    CHECK_THROWS_AS(repcount::triplet_loss(t2, no_interval, 2.0), repcount::inapplicable_loss_error);
  }
}

TEST_CASE("phase-partitioned pull") {
  SUBCASE("identical cycles have zero phase pull") {
    Tape t;
    // two identical 4-frame cycles whose halves differ from each other
    Tensor E = Tensor::from({8, 2}, {1, 0, 2, 1, 1, 0, 2, 1, 1, 0, 2, 1, 1, 0, 2, 1});
    auto refs = refs_from_rows(t, E, {{0, 3}, {4, 7}}, {}, 2);
    CHECK(scalar(t, repcount::phase_pull_loss(t, refs)) == doctest::Approx(0.0).epsilon(1e-12));
  }
  SUBCASE("requires phase-pooled embeddings") {
    Tape t;
    auto refs = refs_from_rows(t, Tensor::from({2, 2}, {1, 0, 0, 1}), {{0, 0}, {1, 1}}, {});
    CHECK_THROWS_AS(repcount::phase_pull_loss(t, refs), repcount::validation_error);
  }
  SUBCASE("combined loss switches to the phase variant when phases are pooled") {
    SplitMix64 rng(179);
    Tensor E = Tensor::zeros({12, 3});
    for (int64_t i = 0; i < E.numel(); ++i) E.at(static_cast<int>(i)) = rng.uniform(-1.0, 1.0);
    Tensor pv = Tensor::zeros({12}), gv = Tensor::zeros({12});
    LossWeights w;  // all ones
    Tape t;
    auto refs = refs_from_rows(t, E, {{0, 3}, {6, 9}}, {{4, 5}, {10, 11}}, 2);
    auto p = t.input(pv), g = t.input(gv);
    double combined = scalar(t, repcount::combined_loss(t, p, g, refs, w));
    double expect = scalar(t, repcount::phase_pull_loss(t, refs)) +
                    scalar(t, repcount::push_loss(t, refs));
    CHECK(combined == doctest::Approx(expect).epsilon(1e-12));  // regression is 0 here
  }
}

TEST_CASE("training loss dispatch") {
  SplitMix64 rng(181);
  Tensor E = Tensor::zeros({10, 3});
  for (int64_t i = 0; i < E.numel(); ++i) E.at(static_cast<int>(i)) = rng.uniform(-1.0, 1.0);
  Tensor pv = Tensor::zeros({10}), gv = Tensor::zeros({10});
  for (int i = 0; i < 10; ++i) {
    pv.at(i) = rng.uniform(0.0, 1.0);
    gv.at(i) = rng.uniform(0.0, 1.0);
  }
  LossWeights w;
  VariantParams vp;

  SUBCASE("regression_only is the scaled regression term") {
    Tape t;
    auto refs = refs_from_rows(t, E, {{0, 2}, {5, 7}}, {{3, 4}});
    auto p = t.input(pv), g = t.input(gv);
    double got = scalar(t, repcount::training_loss(t, LossKind::regression_only, p, g, refs, w, vp));
    CHECK(got == doctest::Approx(scalar(t, repcount::regression_loss(t, p, g))).epsilon(1e-15));
  }
  SUBCASE("p2l matches combined_loss") {
    Tape t;
    auto refs = refs_from_rows(t, E, {{0, 2}, {5, 7}}, {{3, 4}});
    auto p = t.input(pv), g = t.input(gv);
    double got = scalar(t, repcount::training_loss(t, LossKind::p2l, p, g, refs, w, vp));
    CHECK(got == doctest::Approx(scalar(t, repcount::combined_loss(t, p, g, refs, w))).epsilon(1e-15));
  }
  SUBCASE("variant losses fall back to regression when inapplicable") {
    Tape t;
    auto refs = refs_from_rows(t, E, {}, {{0, 9}});  // no cycles at all
    auto p = t.input(pv), g = t.input(gv);
    double reg = scalar(t, repcount::regression_loss(t, p, g));
    CHECK(scalar(t, repcount::training_loss(t, LossKind::contrastive, p, g, refs, w, vp)) ==
          doctest::Approx(reg).epsilon(1e-15));

    Tape t2;
    auto one = refs_from_rows(t2, E, {{0, 2}}, {{3, 4}});  // one cycle: triplet inapplicable
    auto p2 = t2.input(pv), g2 = t2.input(gv);
    double reg2 = scalar(t2, repcount::regression_loss(t2, p2, g2));
    CHECK(scalar(t2, repcount::training_loss(t2, LossKind::triplet, p2, g2, one, w, vp)) ==
          doctest::Approx(reg2).epsilon(1e-15));
  }
  SUBCASE("contrastive adds the alpha-scaled contrastive term to regression") {
    Tape t;
    auto refs = refs_from_rows(t, E, {{0, 2}, {5, 7}}, {{3, 4}});
    auto p = t.input(pv), g = t.input(gv);
    double got = scalar(t, repcount::training_loss(t, LossKind::contrastive, p, g, refs, w, vp));
    double expect = scalar(t, repcount::regression_loss(t, p, g)) +
                    scalar(t, repcount::contrastive_loss(t, refs, vp.temperature));
    CHECK(got == doctest::Approx(expect).epsilon(1e-14));
  }
}

TEST_CASE("loss kind names round-trip") {
  for (auto k : {LossKind::p2l, LossKind::contrastive, LossKind::triplet,
                 LossKind::regression_only})
    CHECK(repcount::parse_loss_kind(repcount::loss_kind_name(k)) == k);
  CHECK_THROWS_AS(repcount::parse_loss_kind("nonsense"), repcount::config_error);
}

TEST_CASE("variant parameter validation") {
  VariantParams vp;
  vp.temperature = 0.0;
  CHECK_THROWS_AS(vp.validate(), repcount::config_error);
  vp = VariantParams{};
  vp.phases = 0;
  CHECK_THROWS_AS(vp.validate(), repcount::config_error);
}
