#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "nwhead/error.hpp"
#include "nwhead/nw_core.hpp"
#include "oracles.hpp"

using namespace nwhead;

namespace {

SupportSet line_support(std::vector<double> xs, std::vector<int> labels, int classes) {
  std::vector<SupportEntry> e;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const std::string id = "e" + std::to_string(i);
    e.push_back({id, {xs[i]}, labels[i], id});
  }
  return SupportSet(std::move(e), classes);
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::kIo;
}

}  // namespace

TEST(Distances, MatchBruteForce) {
  std::mt19937_64 rng(7);
  for (int rep = 0; rep < 50; ++rep) {
    const auto inst = oracle::random_instance(rng);
    const Vector d = pairwise_distances(inst.query.features, inst.support);
    ASSERT_EQ(d.size(), inst.support.size());
    for (std::size_t i = 0; i < d.size(); ++i) {
      EXPECT_NEAR(d[i], oracle::distance(inst.query.features, inst.support[i].features), 1e-14);
    }
  }
}

TEST(Distances, RejectDimensionMismatch) {
  const auto s = line_support({0.0, 1.0}, {0, 1}, 2);
  const Vector q{0.0, 0.0};
  EXPECT_EQ(code_of([&] { pairwise_distances(q, s); }), ErrorCode::kDimensionMismatch);
}

TEST(Weights, TwoTermValues) {
  const Vector d{0.0, 1.0};
  const WeightVector w = nw_weights(d, 1.0);
  EXPECT_NEAR(w.weights[0], 0.7310585786300049, 1e-15);
  EXPECT_NEAR(w.weights[1], 0.2689414213699951, 1e-15);
  EXPECT_DOUBLE_EQ(w.temperature, 1.0);
}

TEST(Weights, ShiftInvariantAndNoUnderflow) {
  const WeightVector near = nw_weights(Vector{0.0, 1.0}, 1.0);
  const WeightVector far = nw_weights(Vector{5000.0, 5001.0}, 1.0);
  EXPECT_NEAR(far.weights[0], near.weights[0], 1e-15);
  EXPECT_NEAR(far.weights[1], near.weights[1], 1e-15);
}

TEST(Weights, SumToOne) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 20.0);
  for (int rep = 0; rep < 100; ++rep) {
    Vector d(1 + rep % 40);
    for (double& x : d) x = u(rng);
    const auto w = nw_weights(d, 0.1 + rep * 0.05);
    EXPECT_NEAR(std::accumulate(w.weights.begin(), w.weights.end(), 0.0), 1.0, 1e-12);
  }
}

TEST(Weights, RejectBadTemperature) {
  const Vector d{0.0, 1.0};
  EXPECT_EQ(code_of([&] { nw_weights(d, 0.0); }), ErrorCode::kInvalidTemperature);
  EXPECT_EQ(code_of([&] { nw_weights(d, -1.0); }), ErrorCode::kInvalidTemperature);
  EXPECT_EQ(code_of([&] { nw_weights(d, std::nan("")); }), ErrorCode::kInvalidTemperature);
  EXPECT_EQ(code_of([&] { nw_weights(Vector{}, 1.0); }), ErrorCode::kEmptySupport);
}

TEST(Predict, MatchesOracle) {
  std::mt19937_64 rng(11);
  for (int rep = 0; rep < 100; ++rep) {
    const auto inst = oracle::random_instance(rng);
    const auto p = nw_predict(inst.query.features, inst.support, inst.tau);
    const auto o = oracle::predict(inst.query.features, inst.support, inst.tau);
    ASSERT_EQ(p.probs.size(), o.size());
    for (std::size_t c = 0; c < o.size(); ++c) EXPECT_NEAR(p.probs[c], o[c], 1e-14);
    EXPECT_NEAR(std::accumulate(p.probs.begin(), p.probs.end(), 0.0), 1.0, 1e-12);
  }
}

TEST(Predict, TwoPointCrossEntropy) {
  const auto s = line_support({0.0, 1.0}, {0, 1}, 2);
  const Vector q{0.0};
  const auto p = nw_predict(q, s, 1.0, "q");
  EXPECT_EQ(p.query_id, "q");
  EXPECT_EQ(p.predicted_class(), 0);
  EXPECT_NEAR(p.confidence(), 0.7310585786300049, 1e-15);
  EXPECT_NEAR(cross_entropy(p, 0), 0.31326168751822286, 1e-14);
  EXPECT_NEAR(cross_entropy(p, 1), 1.3132616875182228, 1e-14);
}

TEST(Predict, AbsentClassHasZeroProbabilityAndInfiniteLoss) {
  const auto s = line_support({0.0, 1.0}, {0, 0}, 3);
  const auto p = nw_predict(Vector{0.5}, s, 1.0);
  EXPECT_EQ(p.probs[1], 0.0);
  EXPECT_EQ(p.probs[2], 0.0);
  EXPECT_TRUE(std::isinf(cross_entropy(p, 2)));
  EXPECT_EQ(cross_entropy(p, 0), 0.0);
}

TEST(Predict, SmallTemperatureSelectsNearest) {
  const auto s = line_support({0.0, 1.0, 2.0}, {0, 1, 2}, 3);
  const auto p = nw_predict(Vector{1.9}, s, 1e-6);
  EXPECT_EQ(p.predicted_class(), 2);
  EXPECT_NEAR(p.probs[2], 1.0, 1e-12);
}

TEST(Predict, FromDistancesAgrees) {
  std::mt19937_64 rng(5);
  const auto inst = oracle::random_instance(rng);
  const Vector d = pairwise_distances(inst.query.features, inst.support);
  const auto a = nw_predict(inst.query.features, inst.support, 0.7);
  const auto b = nw_predict_from_distances(d, inst.support, 0.7);
  EXPECT_EQ(a.probs, b.probs);
  EXPECT_EQ(a.weights.weights, b.weights.weights);
}

TEST(Predict, ArgmaxTieGoesToLowestClass) {
  const auto s = line_support({-1.0, 1.0}, {1, 0}, 2);
  const auto p = nw_predict(Vector{0.0}, s, 1.0);
  EXPECT_EQ(p.probs[0], p.probs[1]);
  EXPECT_EQ(p.predicted_class(), 0);
}

TEST(TopLabelMatch, CountsSameLabelAmongHeaviest) {
  const auto s = line_support({0.0, 0.1, 0.2, 5.0}, {0, 1, 0, 0}, 2);
  const LabeledExample q{"q", {0.0}, 0};
  EXPECT_DOUBLE_EQ(top_label_match_rate(q, s, 1.0, 1), 1.0);
  EXPECT_DOUBLE_EQ(top_label_match_rate(q, s, 1.0, 2), 0.5);
  EXPECT_DOUBLE_EQ(top_label_match_rate(q, s, 1.0, 3), 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(top_label_match_rate(q, s, 1.0, 4), 0.75);
  EXPECT_EQ(code_of([&] { top_label_match_rate(q, s, 1.0, 0); }), ErrorCode::kInvalidArgument);
  EXPECT_EQ(code_of([&] { top_label_match_rate(q, s, 1.0, 5); }), ErrorCode::kInvalidArgument);
}

TEST(SupportSetType, ValidatesEntries) {
  EXPECT_EQ(code_of([] { SupportSet({}, 2); }), ErrorCode::kEmptySupport);
  EXPECT_EQ(code_of([] { SupportSet({{"a", {1.0}, 0, "a"}, {"b", {1.0, 2.0}, 1, "b"}}, 2); }),
            ErrorCode::kDimensionMismatch);
  EXPECT_EQ(code_of([] { SupportSet({{"a", {1.0}, 2, "a"}}, 2); }), ErrorCode::kInvalidArgument);
  const auto s = line_support({0.0, 1.0, 2.0}, {1, 0, 1}, 3);
  EXPECT_EQ(s.positions_of(1), (std::vector<std::size_t>{0, 2}));
  EXPECT_FALSE(s.has_class(2));
  const auto t = s.without(0);
  EXPECT_EQ(t.size(), 2u);
  EXPECT_EQ(t[0].id, "e1");
  EXPECT_EQ(t.positions_of(1), (std::vector<std::size_t>{1}));
}
