#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "nwhead/error.hpp"
#include "nwhead/influence.hpp"
#include "nwhead/nw_core.hpp"
#include "oracles.hpp"

using namespace nwhead;

namespace {

SupportSet points(std::vector<Vector> xs, std::vector<int> labels, int classes) {
  std::vector<SupportEntry> e;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const std::string id = "p" + std::to_string(i);
    e.push_back({id, xs[i], labels[i], id});
  }
  return SupportSet(std::move(e), classes);
}

}  // namespace

TEST(LeaveOneOut, MatchesDirectRepredictionOnRandomInstances) {
  std::mt19937_64 rng(2024);
  double worst = 0.0;
  for (int rep = 0; rep < 300; ++rep) {
    const auto inst = oracle::random_instance(rng);
    const auto pred = nw_predict(inst.query.features, inst.support, inst.tau);
    for (std::size_t s = 0; s < inst.support.size(); ++s) {
      const Vector loo = loo_predict(pred, inst.support, s);
      const Vector direct = oracle::predict_without(inst.query.features, inst.support, s, inst.tau);
      for (std::size_t c = 0; c < loo.size(); ++c) worst = std::max(worst, std::abs(loo[c] - direct[c]));
    }
  }
  EXPECT_LE(worst, 1e-12);
}

TEST(LeaveOneOut, ZeroWeightEntryChangesNothing) {
  const auto s = points({{0.0}, {1.0}, {1e4}}, {0, 1, 1}, 2);
  const auto pred = nw_predict(Vector{0.0}, s, 1.0);
  ASSERT_EQ(pred.weights.weights[2], 0.0);
  const Vector loo = loo_predict(pred, s, 2);
  EXPECT_EQ(loo, pred.probs);
}

TEST(LeaveOneOut, Errors) {
  const auto one = points({{0.0}}, {0}, 2);
  const auto p1 = nw_predict(Vector{0.0}, one, 1.0);
  EXPECT_THROW(loo_predict(p1, one, 0), Error);
  try {
    loo_predict(p1, one, 0);
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kCannotRemoveLast);
  }
  const auto s = points({{0.0}, {100.0}}, {0, 1}, 2);
  const auto p = nw_predict(Vector{0.0}, s, 1e-3);
  try {
    loo_predict(p, s, 0);
    ADD_FAILURE();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDegenerateWeight);
  }
  EXPECT_THROW(loo_predict(p, s, 2), Error);
}

TEST(Influence, MatchesLossDifference) {
  std::mt19937_64 rng(99);
  double worst = 0.0;
  int infinite = 0;
  for (int rep = 0; rep < 300; ++rep) {
    const auto inst = oracle::random_instance(rng);
    const auto pred = nw_predict(inst.query.features, inst.support, inst.tau);
    const double base = oracle::nll(oracle::predict(inst.query.features, inst.support, inst.tau),
                                    inst.query.label);
    for (std::size_t s = 0; s < inst.support.size(); ++s) {
      const auto rec = support_influence(pred, inst.support, s, inst.query.label);
      const double after = oracle::nll(
          oracle::predict_without(inst.query.features, inst.support, s, inst.tau), inst.query.label);
      const double expected = after - base;
      ASSERT_EQ(std::isinf(rec.influence), std::isinf(expected)) << "rep " << rep << " s " << s;
      if (std::isinf(expected)) {
        ++infinite;
        EXPECT_GT(rec.influence, 0.0);
        EXPECT_EQ(inst.support.positions_of(inst.query.label).size(), 1u);
        continue;
      }
      worst = std::max(worst, std::abs(rec.influence - expected));
    }
  }
  EXPECT_LE(worst, 1e-10);
  EXPECT_GT(infinite, 0) << "fixture never produced a sole same-class entry";
}

TEST(Influence, SoleSameClassIsInfinite) {
  const auto s = points({{0.0}, {1.0}, {2.0}}, {0, 1, 1}, 2);
  const LabeledExample q{"q", {0.5}, 0};
  const auto ranked = rank_influence(q, s, 1.0);
  EXPECT_EQ(ranked.front().support_id, "p0");
  EXPECT_TRUE(std::isinf(ranked.front().influence));
  EXPECT_TRUE(ranked.front().same_class);
}

TEST(Influence, AbsentQueryClassIsUndefined) {
  const auto s = points({{0.0}, {1.0}}, {0, 0}, 2);
  const auto pred = nw_predict(Vector{0.0}, s, 1.0);
  try {
    support_influence(pred, s, 0, 1);
    ADD_FAILURE();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kUndefinedLoss);
  }
}

TEST(Influence, SignAndOrderingProperties) {
  std::mt19937_64 rng(31337);
  std::size_t violations = 0;
  for (int rep = 0; rep < 1000; ++rep) {
    const auto inst = oracle::random_instance(rng);
    const auto pred = nw_predict(inst.query.features, inst.support, inst.tau);
    std::vector<InfluenceRecord> recs;
    for (std::size_t s = 0; s < inst.support.size(); ++s) {
      recs.push_back(support_influence(pred, inst.support, s, inst.query.label));
    }
    for (const auto& a : recs) {
      if (a.same_class ? a.influence < 0.0 : a.influence > 0.0) ++violations;
      for (const auto& b : recs) {
        if (a.same_class != b.same_class || !(a.weight > b.weight)) continue;
        if (a.same_class ? a.influence < b.influence : a.influence > b.influence) ++violations;
      }
    }
  }
  EXPECT_EQ(violations, 0u);
}

TEST(Influence, RankingIsStableDescending) {
  const auto s = points({{0.0}, {0.0}, {1.0}, {3.0}}, {0, 0, 1, 1}, 2);
  const LabeledExample q{"q", {0.0}, 0};
  const auto r = rank_influence(q, s, 1.0);
  ASSERT_EQ(r.size(), 4u);
  EXPECT_EQ(r[0].support_id, "p0");  // ties keep support order
  EXPECT_EQ(r[1].support_id, "p1");
  EXPECT_EQ(r[0].influence, r[1].influence);
  for (std::size_t i = 1; i < r.size(); ++i) EXPECT_GE(r[i - 1].influence, r[i].influence);
  EXPECT_EQ(r.back().support_id, "p2");  // nearest different-class entry hurts most
}
