#include "nwhead/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "nwhead/error.hpp"
#include "nwhead/nw_core.hpp"

namespace nwhead {

std::size_t reliability_bin_index(double confidence, std::size_t bin_count) {
  const double b = static_cast<double>(bin_count);
  auto idx = static_cast<std::ptrdiff_t>(std::ceil(confidence * b)) - 1;
  const auto last = static_cast<std::ptrdiff_t>(bin_count) - 1;
  idx = std::clamp<std::ptrdiff_t>(idx, 0, last);
  // Settle against the same edges the report publishes.
  while (idx > 0 && confidence <= static_cast<double>(idx) / b) --idx;
  while (idx < last && confidence > static_cast<double>(idx + 1) / b) ++idx;
  return static_cast<std::size_t>(idx);
}

ReliabilityReport expected_calibration_error(std::span<const PredictionResult> predictions,
                                             std::span<const int> true_labels,
                                             std::size_t bin_count) {
  if (predictions.empty()) {
    throw Error(ErrorCode::kEmptyInput, "no predictions to calibrate");
  }
  if (predictions.size() != true_labels.size()) {
    throw Error(ErrorCode::kInvalidArgument,
                std::to_string(predictions.size()) + " predictions but " +
                    std::to_string(true_labels.size()) + " labels");
  }
  if (bin_count < 1) throw Error(ErrorCode::kInvalidArgument, "bin count must be at least 1");

  ReliabilityReport report;
  report.bin_count = bin_count;
  report.bins.resize(bin_count);
  std::vector<double> conf_sum(bin_count, 0.0);
  std::vector<double> correct(bin_count, 0.0);
  for (std::size_t b = 0; b < bin_count; ++b) {
    report.bins[b].lower = static_cast<double>(b) / static_cast<double>(bin_count);
    report.bins[b].upper = static_cast<double>(b + 1) / static_cast<double>(bin_count);
  }

  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const double conf = predictions[i].confidence();
    const std::size_t b = reliability_bin_index(conf, bin_count);
    ++report.bins[b].count;
    conf_sum[b] += conf;
    if (predictions[i].predicted_class() == true_labels[i]) correct[b] += 1.0;
  }

  const double n = static_cast<double>(predictions.size());
  for (std::size_t b = 0; b < bin_count; ++b) {
    auto& bin = report.bins[b];
    if (bin.count == 0) continue;
    const double count = static_cast<double>(bin.count);
    bin.mean_confidence = conf_sum[b] / count;
    bin.accuracy = correct[b] / count;
    report.ece += (count / n) * std::abs(bin.accuracy - bin.mean_confidence);
  }
  return report;
}

SmoothedLabel::SmoothedLabel(int class_count, double epsilon, int hot_index)
    : class_count_(class_count), epsilon_(epsilon), hot_index_(hot_index) {
  if (!(epsilon >= 0.0 && epsilon < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument,
                "label smoothing epsilon must lie in [0, 1), got " + std::to_string(epsilon));
  }
  if (class_count < 1 || hot_index < 0 || hot_index >= class_count) {
    throw Error(ErrorCode::kInvalidArgument, "hot index outside [0, class_count)");
  }
}

Vector SmoothedLabel::materialize() const {
  const double base = epsilon_ / static_cast<double>(class_count_);
  Vector v(static_cast<std::size_t>(class_count_), base);
  v[static_cast<std::size_t>(hot_index_)] = (1.0 - epsilon_) + base;
  return v;
}

std::vector<SmoothedLabel> smooth_labels(std::span<const OneHotLabel> labels, double epsilon) {
  std::vector<SmoothedLabel> out;
  out.reserve(labels.size());
  for (const auto& l : labels) out.emplace_back(l.class_count(), epsilon, l.hot_index());
  return out;
}

std::vector<double> TemperatureGrid::values() const {
  if (steps < 1 || !(lo > 0.0) || !std::isfinite(hi) || lo > hi || (steps > 1 && lo >= hi)) {
    throw Error(ErrorCode::kInvalidGrid, "invalid temperature grid {" + std::to_string(lo) +
                                             ", " + std::to_string(hi) + ", " +
                                             std::to_string(steps) + "}");
  }
  std::vector<double> out(steps);
  if (steps == 1) {
    out[0] = lo;
    return out;
  }
  const double span = hi - lo;
  const double denom = static_cast<double>(steps - 1);
  for (std::size_t i = 0; i < steps; ++i) {
    out[i] = lo + span * static_cast<double>(i) / denom;
  }
  out.back() = hi;
  return out;
}

double mean_nll(const std::vector<LabeledExample>& queries, const SupportSet& support,
                double temperature) {
  if (queries.empty()) throw Error(ErrorCode::kEmptyInput, "no queries");
  double total = 0.0;
  for (const auto& q : queries) {
    total += cross_entropy(nw_predict(q.features, support, temperature, q.id), q.label);
  }
  return total / static_cast<double>(queries.size());
}

TemperatureScaleResult temperature_scale(const std::vector<LabeledExample>& val_queries,
                                         const SupportSet& support, const TemperatureGrid& grid) {
  TemperatureScaleResult result;
  result.grid = grid.values();
  if (val_queries.empty()) {
    throw Error(ErrorCode::kEmptyInput, "temperature scaling needs a non-empty validation set");
  }

  std::vector<Vector> distances;
  distances.reserve(val_queries.size());
  for (const auto& q : val_queries) distances.push_back(pairwise_distances(q.features, support));

  result.nll.reserve(result.grid.size());
  double best = std::numeric_limits<double>::infinity();
  for (double tau : result.grid) {
    double total = 0.0;
    for (std::size_t i = 0; i < val_queries.size(); ++i) {
      total += cross_entropy(nw_predict_from_distances(distances[i], support, tau),
                             val_queries[i].label);
    }
    const double nll = total / static_cast<double>(val_queries.size());
    result.nll.push_back(nll);
    if (nll < best) {
      best = nll;
      result.best_temperature = tau;
    }
  }
  if (!std::isfinite(best)) {
    // Every grid point gave infinite loss; fall back to the smallest value.
    result.best_temperature = result.grid.front();
  }
  return result;
}

}  // namespace nwhead
