#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace nwhead {

using Vector = std::vector<double>;

// Marker stored in SupportEntry::source for synthetic (k-means centroid)
// entries that do not correspond to an observed example.
inline constexpr const char* kCentroidSource = "centroid";

struct LabeledExample {
  std::string id;
  Vector features;
  int label = 0;
};

class OneHotLabel {
 public:
  OneHotLabel(int class_count, int hot_index);

  int class_count() const { return class_count_; }
  int hot_index() const { return hot_index_; }
  Vector materialize() const;

 private:
  int class_count_;
  int hot_index_;
};

struct SupportEntry {
  std::string id;
  Vector features;
  int label = 0;
  // Real example id, or kCentroidSource.
  std::string source;

  bool is_centroid() const { return source == kCentroidSource; }
};

// The labeled set a query is scored against. Immutable once built.
class SupportSet {
 public:
  // Throws kEmptySupport for no entries, kDimensionMismatch for ragged
  // features and kInvalidArgument for labels outside [0, class_count).
  SupportSet(std::vector<SupportEntry> entries, int class_count);

  static SupportSet from_examples(std::span<const LabeledExample> examples,
                                  int class_count);

  std::size_t size() const { return entries_.size(); }
  std::size_t dim() const { return dim_; }
  int class_count() const { return class_count_; }

  const SupportEntry& operator[](std::size_t i) const { return entries_[i]; }
  const std::vector<SupportEntry>& entries() const { return entries_; }

  // Entry positions holding class c, ascending.
  const std::vector<std::size_t>& positions_of(int c) const {
    return class_index_[static_cast<std::size_t>(c)];
  }
  bool has_class(int c) const { return !positions_of(c).empty(); }

  // Same set with entry `i` dropped.
  SupportSet without(std::size_t i) const;

 private:
  std::vector<SupportEntry> entries_;
  std::vector<std::vector<std::size_t>> class_index_;
  std::size_t dim_ = 0;
  int class_count_ = 0;
};

struct WeightVector {
  Vector weights;
  double temperature = 1.0;
};

struct PredictionResult {
  Vector probs;
  WeightVector weights;
  std::string query_id;

  int predicted_class() const;
  double confidence() const;
};

}  // namespace nwhead
