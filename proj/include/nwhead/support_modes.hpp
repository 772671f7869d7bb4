#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nwhead/types.hpp"

namespace nwhead {

struct KMeansOptions {
  std::size_t max_iters = 100;
  // Stop once no centroid moves farther than this.
  double tol = 1e-6;
};

struct KMeansResult {
  std::vector<Vector> centroids;
  std::vector<std::size_t> assignments;
  // Within-cluster sum of squares after each Lloyd iteration.
  std::vector<double> wcss_history;
  std::size_t iterations = 0;
};

/// Lloyd's algorithm from a seeded k-means++ start. Empty clusters are
/// refilled with the point farthest from its current centroid, so the result
/// always has exactly k non-empty clusters.
KMeansResult kmeans(const std::vector<Vector>& points, std::size_t k, std::uint64_t seed,
                    KMeansOptions options = {});

/// Number of distinct points (exact coordinate equality).
std::size_t count_distinct(const std::vector<Vector>& points);

struct InferenceMode {
  enum class Kind { kFull, kRandom, kCluster, kClosestCluster };

  Kind kind = Kind::kFull;
  std::size_t k = 1;
  std::uint64_t seed = 0;

  static InferenceMode full() { return {}; }
  static InferenceMode random(std::size_t k, std::uint64_t seed) { return {Kind::kRandom, k, seed}; }
  static InferenceMode cluster(std::size_t k, std::uint64_t seed) { return {Kind::kCluster, k, seed}; }
  static InferenceMode closest_cluster(std::size_t k, std::uint64_t seed) {
    return {Kind::kClosestCluster, k, seed};
  }
};

/// Accepts "full", "random", "cluster", "cc".
InferenceMode::Kind parse_mode_kind(const std::string& name);
std::string mode_kind_name(InferenceMode::Kind kind);

/// Builds an inference-time support set from embedded training examples.
/// Warnings (e.g. a class clustered into fewer than k centroids) are appended
/// to `warnings` when given.
SupportSet build_support(const std::vector<LabeledExample>& train, int class_count,
                         const InferenceMode& mode,
                         std::vector<std::string>* warnings = nullptr);

}  // namespace nwhead
