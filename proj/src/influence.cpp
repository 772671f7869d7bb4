#include "nwhead/influence.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "nwhead/error.hpp"
#include "nwhead/nw_core.hpp"

namespace nwhead {
namespace {

constexpr double kNegativeDust = 1e-12;
constexpr double kDegenerateWeight = 1.0 - 1e-15;

void check_alignment(const PredictionResult& pred, const SupportSet& support,
                     std::size_t removed_index) {
  if (pred.weights.weights.size() != support.size()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "prediction carries " + std::to_string(pred.weights.weights.size()) +
                    " weights for a support of " + std::to_string(support.size()));
  }
  if (pred.probs.size() != static_cast<std::size_t>(support.class_count())) {
    throw Error(ErrorCode::kDimensionMismatch,
                "prediction has " + std::to_string(pred.probs.size()) + " classes, support has " +
                    std::to_string(support.class_count()));
  }
  if (support.size() < 2) {
    throw Error(ErrorCode::kCannotRemoveLast, "cannot remove the last support entry");
  }
  if (removed_index >= support.size()) {
    throw Error(ErrorCode::kInvalidArgument,
                "removed index " + std::to_string(removed_index) + " outside support of " +
                    std::to_string(support.size()));
  }
}

}  // namespace

Vector loo_predict(const PredictionResult& pred, const SupportSet& support,
                   std::size_t removed_index) {
  check_alignment(pred, support, removed_index);
  const double w = pred.weights.weights[removed_index];
  if (w >= kDegenerateWeight) {
    throw Error(ErrorCode::kDegenerateWeight,
                "support entry '" + support[removed_index].id +
                    "' holds all the weight; renormalization is undefined");
  }
  const auto removed_label = static_cast<std::size_t>(support[removed_index].label);
  Vector out(pred.probs.size());
  for (std::size_t c = 0; c < out.size(); ++c) {
    const double mass = c == removed_label ? pred.probs[c] - w : pred.probs[c];
    double v = mass / (1.0 - w);
    if (v < 0.0 && v > -kNegativeDust) v = 0.0;
    out[c] = v;
  }
  return out;
}

InfluenceRecord support_influence(const PredictionResult& pred, const SupportSet& support,
                                  std::size_t removed_index, int true_label) {
  check_alignment(pred, support, removed_index);
  if (true_label < 0 || true_label >= support.class_count()) {
    throw Error(ErrorCode::kInvalidArgument,
                "label " + std::to_string(true_label) + " outside [0, " +
                    std::to_string(support.class_count()) + ")");
  }
  const double fy = pred.probs[static_cast<std::size_t>(true_label)];
  if (fy == 0.0) {
    throw Error(ErrorCode::kUndefinedLoss,
                "query class " + std::to_string(true_label) + " has no mass in the support set");
  }
  const auto& entry = support[removed_index];
  const double w = pred.weights.weights[removed_index];

  InfluenceRecord rec;
  rec.support_id = entry.id;
  rec.support_index = removed_index;
  rec.weight = w;
  rec.same_class = entry.label == true_label;

  // log((fy - fy*w) / (fy - w*[y == ys])) split by case; log1p keeps small
  // weights accurate.
  if (rec.same_class) {
    if (fy - w <= 0.0) {
      rec.influence = std::numeric_limits<double>::infinity();
    } else {
      rec.influence = std::max(0.0, std::log1p(-w) - std::log1p(-w / fy));
    }
  } else {
    rec.influence = std::min(0.0, std::log1p(-w));
  }
  return rec;
}

std::vector<InfluenceRecord> rank_influence(const PredictionResult& pred,
                                            const SupportSet& support, int true_label) {
  std::vector<InfluenceRecord> records;
  records.reserve(support.size());
  for (std::size_t i = 0; i < support.size(); ++i) {
    records.push_back(support_influence(pred, support, i, true_label));
  }
  std::stable_sort(records.begin(), records.end(),
                   [](const InfluenceRecord& a, const InfluenceRecord& b) {
                     return a.influence > b.influence;
                   });
  return records;
}

std::vector<InfluenceRecord> rank_influence(const LabeledExample& query,
                                            const SupportSet& support, double temperature) {
  const PredictionResult pred = nw_predict(query.features, support, temperature, query.id);
  return rank_influence(pred, support, query.label);
}

}  // namespace nwhead
