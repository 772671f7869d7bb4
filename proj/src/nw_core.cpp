#include "nwhead/nw_core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "nwhead/error.hpp"

namespace nwhead {

Vector pairwise_distances(std::span<const double> query, const SupportSet& support) {
  if (query.size() != support.dim()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "query has dimension " + std::to_string(query.size()) +
                    " but support has dimension " + std::to_string(support.dim()));
  }
  Vector out;
  out.reserve(support.size());
  for (const auto& entry : support.entries()) {
    double ss = 0.0;
    for (std::size_t j = 0; j < query.size(); ++j) {
      const double diff = query[j] - entry.features[j];
      ss += diff * diff;
    }
    out.push_back(std::sqrt(ss));
  }
  return out;
}

WeightVector nw_weights(std::span<const double> distances, double temperature) {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw Error(ErrorCode::kInvalidTemperature,
                "temperature must be positive and finite, got " + std::to_string(temperature));
  }
  if (distances.empty()) {
    throw Error(ErrorCode::kEmptySupport, "cannot weight an empty support set");
  }
  for (double d : distances) {
    if (!std::isfinite(d) || d < 0.0) {
      throw Error(ErrorCode::kInvalidArgument,
                  "distances must be finite and non-negative, got " + std::to_string(d));
    }
  }

  // The largest logit -d/tau belongs to the smallest distance.
  const double d_min = *std::min_element(distances.begin(), distances.end());
  WeightVector out;
  out.temperature = temperature;
  out.weights.resize(distances.size());
  double total = 0.0;
  for (std::size_t i = 0; i < distances.size(); ++i) {
    out.weights[i] = std::exp(-(distances[i] - d_min) / temperature);
    total += out.weights[i];
  }
  for (double& w : out.weights) w /= total;
  return out;
}

PredictionResult nw_predict_from_distances(std::span<const double> distances,
                                           const SupportSet& support, double temperature,
                                           std::string query_id) {
  if (distances.size() != support.size()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "got " + std::to_string(distances.size()) + " distances for a support of " +
                    std::to_string(support.size()));
  }
  PredictionResult pred;
  pred.query_id = std::move(query_id);
  pred.weights = nw_weights(distances, temperature);
  pred.probs.assign(static_cast<std::size_t>(support.class_count()), 0.0);
  for (std::size_t i = 0; i < support.size(); ++i) {
    pred.probs[static_cast<std::size_t>(support[i].label)] += pred.weights.weights[i];
  }
  return pred;
}

PredictionResult nw_predict(std::span<const double> query, const SupportSet& support,
                            double temperature, std::string query_id) {
  const Vector distances = pairwise_distances(query, support);
  return nw_predict_from_distances(distances, support, temperature, std::move(query_id));
}

double cross_entropy(std::span<const double> probs, int true_label) {
  if (true_label < 0 || static_cast<std::size_t>(true_label) >= probs.size()) {
    throw Error(ErrorCode::kInvalidArgument,
                "label " + std::to_string(true_label) + " outside [0, " +
                    std::to_string(probs.size()) + ")");
  }
  const double p = probs[static_cast<std::size_t>(true_label)];
  if (p == 0.0) return std::numeric_limits<double>::infinity();
  return -std::log(p);
}

double cross_entropy(const PredictionResult& pred, int true_label) {
  return cross_entropy(pred.probs, true_label);
}

double top_label_match_rate(const LabeledExample& query, const SupportSet& support,
                            double temperature, std::size_t top_n) {
  if (top_n == 0) {
    throw Error(ErrorCode::kInvalidArgument, "top_n must be at least 1");
  }
  if (top_n > support.size()) {
    throw Error(ErrorCode::kInvalidArgument,
                "top_n " + std::to_string(top_n) + " exceeds support size " +
                    std::to_string(support.size()));
  }
  const PredictionResult pred = nw_predict(query.features, support, temperature, query.id);
  const Vector& w = pred.weights.weights;
  std::vector<std::size_t> order(w.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return w[a] > w[b]; });
  std::size_t matches = 0;
  for (std::size_t r = 0; r < top_n; ++r) {
    if (support[order[r]].label == query.label) ++matches;
  }
  return static_cast<double>(matches) / static_cast<double>(top_n);
}

}  // namespace nwhead
