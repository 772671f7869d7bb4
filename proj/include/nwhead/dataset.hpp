#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "nwhead/types.hpp"

namespace nwhead {

enum class Split { kTrain, kVal, kTest };

const char* split_name(Split s);
Split parse_split(const std::string& name);

// Labeled feature vectors with optional per-example split tags.
//
// CSV layout: header `id,label,f0,...,f{n-1}` or, for tagged data,
// `id,label,split,f0,...,f{n-1}` with split in {train, val, test}.
struct Dataset {
  std::vector<LabeledExample> examples;
  std::size_t dim = 0;
  int class_count = 0;
  // Empty for untagged data (every example counts as train).
  std::vector<Split> splits;

  bool tagged() const { return !splits.empty(); }
  /// Examples carrying the tag; untagged data returns everything for kTrain
  /// and nothing otherwise.
  std::vector<LabeledExample> subset(Split s) const;
  std::size_t count(Split s) const;
  /// Index of the example with this id, if any.
  std::optional<std::size_t> find(const std::string& id) const;
  std::optional<Split> split_of(std::size_t index) const;

  /// Checks unique ids, consistent dims, contiguous labels [0, C), finite
  /// features. Throws kParse.
  void validate() const;
};

Dataset parse_csv(const std::string& text, const std::string& source_name = "<memory>");
Dataset load_csv(const std::filesystem::path& path);
std::string format_csv(const Dataset& dataset);
void save_csv(const Dataset& dataset, const std::filesystem::path& path);

/// Shortest decimal text that reads back to the identical double.
std::string format_double(double v);

// Support-set CSV: `id,label,source,f0,...`; source is the real example id or
// "centroid".
std::string format_support_csv(const SupportSet& support);
SupportSet parse_support_csv(const std::string& text, int class_count,
                             const std::string& source_name = "<memory>");
void save_support_csv(const SupportSet& support, const std::filesystem::path& path);
SupportSet load_support_csv(const std::filesystem::path& path, int class_count);

struct BlobParams {
  int class_count = 3;
  std::size_t per_class = 100;
  std::size_t dim = 2;
  double separation = 6.0;
  double noise_sd = 1.0;
  std::uint64_t seed = 0;
};

/// Isotropic Gaussian blobs around seeded centers that are pairwise at least
/// `separation` apart. Examples are interleaved by class. The returned class
/// centers are in label order.
Dataset generate_blobs(const BlobParams& params, std::vector<Vector>* centers = nullptr);

struct RingParams {
  std::size_t per_class = 100;
  double inner_radius = 1.0;
  double outer_radius = 3.0;
  double noise_sd = 0.2;
  std::uint64_t seed = 0;
};

/// Two concentric rings in the plane: label 0 inner, label 1 outer.
Dataset generate_rings(const RingParams& params);

/// Stratified train/val/test assignment. Per class, the member count is
/// apportioned by largest remainder (ties to the earlier split) and members
/// are shuffled with the seed before being dealt out.
Dataset split(const Dataset& dataset, const std::array<double, 3>& fractions, std::uint64_t seed);

}  // namespace nwhead
