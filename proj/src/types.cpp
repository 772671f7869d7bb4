#include "nwhead/types.hpp"

#include <algorithm>
#include <iterator>

#include "nwhead/error.hpp"

namespace nwhead {

OneHotLabel::OneHotLabel(int class_count, int hot_index)
    : class_count_(class_count), hot_index_(hot_index) {
  if (class_count < 1 || hot_index < 0 || hot_index >= class_count) {
    throw Error(ErrorCode::kInvalidArgument,
                "one-hot index " + std::to_string(hot_index) + " outside [0, " +
                    std::to_string(class_count) + ")");
  }
}

Vector OneHotLabel::materialize() const {
  Vector v(static_cast<std::size_t>(class_count_), 0.0);
  v[static_cast<std::size_t>(hot_index_)] = 1.0;
  return v;
}

SupportSet::SupportSet(std::vector<SupportEntry> entries, int class_count)
    : entries_(std::move(entries)), class_count_(class_count) {
  if (entries_.empty()) {
    throw Error(ErrorCode::kEmptySupport, "support set is empty");
  }
  if (class_count_ < 1) {
    throw Error(ErrorCode::kInvalidArgument, "class count must be positive");
  }
  dim_ = entries_.front().features.size();
  class_index_.resize(static_cast<std::size_t>(class_count_));
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& e = entries_[i];
    if (e.features.size() != dim_) {
      throw Error(ErrorCode::kDimensionMismatch,
                  "support entry '" + e.id + "' has dimension " +
                      std::to_string(e.features.size()) + ", expected " +
                      std::to_string(dim_));
    }
    if (e.label < 0 || e.label >= class_count_) {
      throw Error(ErrorCode::kInvalidArgument,
                  "support entry '" + e.id + "' has label " + std::to_string(e.label) +
                      " outside [0, " + std::to_string(class_count_) + ")");
    }
    class_index_[static_cast<std::size_t>(e.label)].push_back(i);
  }
}

SupportSet SupportSet::from_examples(std::span<const LabeledExample> examples,
                                     int class_count) {
  std::vector<SupportEntry> entries;
  entries.reserve(examples.size());
  for (const auto& ex : examples) {
    entries.push_back({ex.id, ex.features, ex.label, ex.id});
  }
  return SupportSet(std::move(entries), class_count);
}

SupportSet SupportSet::without(std::size_t i) const {
  std::vector<SupportEntry> rest;
  rest.reserve(entries_.size() - 1);
  for (std::size_t j = 0; j < entries_.size(); ++j) {
    if (j != i) rest.push_back(entries_[j]);
  }
  return SupportSet(std::move(rest), class_count_);
}

int PredictionResult::predicted_class() const {
  // max_element returns the first maximum, i.e. the lowest class index on ties.
  return static_cast<int>(std::distance(probs.begin(), std::max_element(probs.begin(), probs.end())));
}

double PredictionResult::confidence() const {
  return *std::max_element(probs.begin(), probs.end());
}

}  // namespace nwhead
