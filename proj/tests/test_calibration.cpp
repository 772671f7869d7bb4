#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "nwhead/calibration.hpp"
#include "nwhead/error.hpp"
#include "nwhead/nw_core.hpp"
#include "oracles.hpp"

using namespace nwhead;

namespace {

PredictionResult pred(Vector probs) {
  PredictionResult p;
  p.probs = std::move(probs);
  return p;
}

std::vector<PredictionResult> random_preds(std::mt19937_64& rng, std::size_t n, int classes) {
  std::gamma_distribution<double> g(0.3, 1.0);
  std::vector<PredictionResult> out;
  for (std::size_t i = 0; i < n; ++i) {
    Vector p(static_cast<std::size_t>(classes));
    for (double& x : p) x = g(rng) + 1e-9;
    const double z = std::accumulate(p.begin(), p.end(), 0.0);
    for (double& x : p) x /= z;
    out.push_back(pred(std::move(p)));
  }
  return out;
}

}  // namespace

TEST(Ece, MatchesDoubleLoopOracle) {
  std::mt19937_64 rng(17);
  for (int rep = 0; rep < 200; ++rep) {
    const int classes = 2 + rep % 9;
    const auto preds = random_preds(rng, 50, classes);
    std::vector<int> labels;
    std::vector<Vector> probs;
    std::uniform_int_distribution<int> lab(0, classes - 1);
    for (const auto& p : preds) {
      labels.push_back(lab(rng));
      probs.push_back(p.probs);
    }
    const std::size_t bins = 1 + static_cast<std::size_t>(rep % 20);
    const auto report = expected_calibration_error(preds, labels, bins);
    EXPECT_NEAR(report.ece, oracle::ece(probs, labels, bins), 1e-12);
    std::size_t total = 0;
    for (const auto& b : report.bins) total += b.count;
    EXPECT_EQ(total, preds.size());
    EXPECT_EQ(report.bins.size(), bins);
  }
}

TEST(Ece, PerfectAndWorstFixtures) {
  // Confidence 0.8 everywhere, correct on exactly 4 of 5.
  std::vector<PredictionResult> preds(5, pred({0.8, 0.2}));
  const std::vector<int> labels{0, 0, 0, 0, 1};
  EXPECT_NEAR(expected_calibration_error(preds, labels).ece, 0.0, 1e-15);

  std::vector<PredictionResult> sure(4, pred({0.0, 1.0}));
  const std::vector<int> wrong{0, 0, 0, 0};
  EXPECT_DOUBLE_EQ(expected_calibration_error(sure, wrong).ece, 1.0);
}

TEST(Ece, BinEdges) {
  EXPECT_EQ(reliability_bin_index(0.0, 10), 0u);
  EXPECT_EQ(reliability_bin_index(0.1, 10), 0u);  // upper edge is inclusive
  EXPECT_EQ(reliability_bin_index(0.3, 10), 2u);
  EXPECT_EQ(reliability_bin_index(0.7, 10), 6u);
  EXPECT_EQ(reliability_bin_index(std::nextafter(0.1, 1.0), 10), 1u);
  EXPECT_EQ(reliability_bin_index(1.0, 10), 9u);
  EXPECT_EQ(reliability_bin_index(1.0 / 15.0, 15), 0u);
  for (std::size_t b = 1; b <= 15; ++b) {
    const double edge = static_cast<double>(b) / 15.0;
    EXPECT_EQ(reliability_bin_index(edge, 15), b - 1) << b;
  }
}

TEST(Ece, RejectsBadInput) {
  std::vector<PredictionResult> p{pred({0.5, 0.5})};
  std::vector<int> l{0};
  EXPECT_THROW(expected_calibration_error(p, l, 0), Error);
  std::vector<int> two{0, 1};
  EXPECT_THROW(expected_calibration_error(p, two, 10), Error);
  EXPECT_THROW(expected_calibration_error(std::span<const PredictionResult>{}, std::span<const int>{}, 10),
               Error);
}

TEST(LabelSmoothing, MaterializesAndSums) {
  SmoothedLabel s(4, 0.1, 2);
  const Vector v = s.materialize();
  EXPECT_DOUBLE_EQ(v[2], 0.9 + 0.025);
  EXPECT_DOUBLE_EQ(v[0], 0.025);
  EXPECT_NEAR(std::accumulate(v.begin(), v.end(), 0.0), 1.0, 1e-15);
  EXPECT_EQ(kDefaultLabelSmoothing, 0.1);
  const std::vector<OneHotLabel> hot{OneHotLabel(3, 0), OneHotLabel(3, 1)};
  const auto sm = smooth_labels(hot);
  ASSERT_EQ(sm.size(), 2u);
  EXPECT_EQ(sm[1].hot_index(), 1);
  EXPECT_DOUBLE_EQ(sm[1].epsilon(), 0.1);
  EXPECT_EQ(SmoothedLabel(3, 0.0, 1).materialize(), OneHotLabel(3, 1).materialize());
  EXPECT_THROW(SmoothedLabel(3, 1.5, 0), Error);
}

TEST(TemperatureGridTest, DefaultIsHundredLinearValues) {
  const auto g = TemperatureGrid{}.values();
  ASSERT_EQ(g.size(), 100u);
  EXPECT_EQ(g.front(), 0.5);
  EXPECT_EQ(g.back(), 3.0);
  for (std::size_t i = 0; i < g.size(); ++i) {
    EXPECT_NEAR(g[i], 0.5 + 2.5 * static_cast<double>(i) / 99.0, 1e-15);
  }
  EXPECT_EQ((TemperatureGrid{2.0, 2.0, 1}.values()), (std::vector<double>{2.0}));
  EXPECT_THROW((TemperatureGrid{0.0, 1.0, 10}.values()), Error);
  EXPECT_THROW((TemperatureGrid{1.0, 1.0, 10}.values()), Error);
  EXPECT_THROW((TemperatureGrid{1.0, 2.0, 0}.values()), Error);
}

TEST(TemperatureScaling, PicksGridMinimum) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<SupportEntry> support;
  std::vector<LabeledExample> val;
  for (int i = 0; i < 90; ++i) {
    const int c = i % 3;
    const Vector x{1.5 * c + g(rng), g(rng)};
    if (i < 60) {
      support.push_back({"s" + std::to_string(i), x, c, "s" + std::to_string(i)});
    } else {
      val.push_back({"v" + std::to_string(i), x, c});
    }
  }
  const SupportSet s(std::move(support), 3);
  const auto r = temperature_scale(val, s);
  ASSERT_EQ(r.nll.size(), 100u);
  const auto best = std::min_element(r.nll.begin(), r.nll.end());
  EXPECT_EQ(r.best_temperature, r.grid[static_cast<std::size_t>(best - r.nll.begin())]);
  for (std::size_t i = 0; i < r.grid.size(); i += 11) {
    EXPECT_NEAR(r.nll[i], mean_nll(val, s, r.grid[i]), 1e-12);
  }
}

TEST(TemperatureScaling, CanMoveTheArgmax) {
  // Unlike scaling logits, tau reweights neighbors before they are summed per
  // class: one close class-0 point beats two farther class-1 points only when
  // tau is small.
  const SupportSet s({{"a", {1.0}, 0, "a"}, {"b", {1.5}, 1, "b"}, {"c", {-1.5}, 1, "c"}}, 2);
  EXPECT_EQ(nw_predict(Vector{0.0}, s, 0.5).predicted_class(), 0);
  EXPECT_EQ(nw_predict(Vector{0.0}, s, 3.0).predicted_class(), 1);
}

TEST(TemperatureScaling, TiesGoToSmallerTemperature) {
  // A support holding only the query's class gives zero loss at every tau.
  const SupportSet s({{"a", {0.0}, 0, "a"}, {"b", {1.0}, 0, "b"}}, 2);
  const std::vector<LabeledExample> val{{"v", {0.3}, 0}};
  const auto r = temperature_scale(val, s, {0.7, 2.0, 5});
  EXPECT_EQ(r.best_temperature, 0.7);
}
