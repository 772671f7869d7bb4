#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "nwhead/types.hpp"

namespace nwhead {

inline constexpr std::size_t kDefaultBinCount = 15;
inline constexpr double kDefaultLabelSmoothing = 0.1;

struct ReliabilityBin {
  double lower = 0.0;
  double upper = 0.0;
  std::size_t count = 0;
  // Both are 0 for empty bins.
  double mean_confidence = 0.0;
  double accuracy = 0.0;
};

struct ReliabilityReport {
  std::vector<ReliabilityBin> bins;
  double ece = 0.0;
  std::size_t bin_count = 0;
};

/// Equal-width bins over (0, 1], each half-open as (lower, upper]; a
/// confidence of exactly 0 lands in the first bin. Confidence is the max
/// class probability and the predicted class is the lowest arg-max.
ReliabilityReport expected_calibration_error(std::span<const PredictionResult> predictions,
                                             std::span<const int> true_labels,
                                             std::size_t bin_count = kDefaultBinCount);

/// Index of the (lower, upper] bin holding `confidence`.
std::size_t reliability_bin_index(double confidence, std::size_t bin_count);

class SmoothedLabel {
 public:
  SmoothedLabel(int class_count, double epsilon, int hot_index);

  int class_count() const { return class_count_; }
  double epsilon() const { return epsilon_; }
  int hot_index() const { return hot_index_; }

  /// (1 - eps) * one_hot + eps / C.
  Vector materialize() const;

 private:
  int class_count_;
  double epsilon_;
  int hot_index_;
};

std::vector<SmoothedLabel> smooth_labels(std::span<const OneHotLabel> labels,
                                         double epsilon = kDefaultLabelSmoothing);

struct TemperatureGrid {
  double lo = 0.5;
  double hi = 3.0;
  std::size_t steps = 100;

  /// Linearly spaced values lo..hi inclusive; a single step yields {lo}.
  std::vector<double> values() const;
};

struct TemperatureScaleResult {
  double best_temperature = 1.0;
  std::vector<double> grid;
  // Mean validation cross-entropy at each grid value.
  std::vector<double> nll;
};

/// Mean cross-entropy of `queries` against `support` at `temperature`.
double mean_nll(const std::vector<LabeledExample>& queries, const SupportSet& support,
                double temperature);

/// Picks the grid temperature minimizing mean validation cross-entropy;
/// ties go to the smaller temperature. Distances are computed once and only
/// the softmax is re-evaluated per grid point.
TemperatureScaleResult temperature_scale(const std::vector<LabeledExample>& val_queries,
                                         const SupportSet& support,
                                         const TemperatureGrid& grid = {});

}  // namespace nwhead
