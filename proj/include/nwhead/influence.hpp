#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "nwhead/types.hpp"

namespace nwhead {

// Change in a query's cross-entropy loss when one support entry is removed.
// Positive values mark helpful entries, negative values harmful ones. The
// value is +inf when the entry carries all of the query class's mass.
struct InfluenceRecord {
  std::string support_id;
  std::size_t support_index = 0;
  double influence = 0.0;
  double weight = 0.0;
  bool same_class = false;
};

/// Prediction on `support` with entry `removed_index` dropped, obtained by
/// renormalizing `pred` rather than recomputing it.
Vector loo_predict(const PredictionResult& pred, const SupportSet& support,
                   std::size_t removed_index);

InfluenceRecord support_influence(const PredictionResult& pred, const SupportSet& support,
                                  std::size_t removed_index, int true_label);

/// One record per support entry, most helpful first (+inf leads). Ties keep
/// support order.
std::vector<InfluenceRecord> rank_influence(const LabeledExample& query,
                                            const SupportSet& support, double temperature);

/// Same ranking from an already computed prediction.
std::vector<InfluenceRecord> rank_influence(const PredictionResult& pred,
                                            const SupportSet& support, int true_label);

}  // namespace nwhead
