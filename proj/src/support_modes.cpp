#include "nwhead/support_modes.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "nwhead/error.hpp"

namespace nwhead {
namespace {

double squared_distance(const Vector& a, const Vector& b) {
  double ss = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    const double d = a[j] - b[j];
    ss += d * d;
  }
  return ss;
}

// splitmix64 finalizer; gives each class an independent k-means stream.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::vector<Vector> kmeanspp_init(const std::vector<Vector>& points, std::size_t k,
                                  std::mt19937_64& rng) {
  std::vector<Vector> centroids;
  centroids.reserve(k);
  std::uniform_int_distribution<std::size_t> pick(0, points.size() - 1);
  centroids.push_back(points[pick(rng)]);

  std::vector<double> d2(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) d2[i] = squared_distance(points[i], centroids[0]);

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  while (centroids.size() < k) {
    const double total = std::accumulate(d2.begin(), d2.end(), 0.0);
    const double target = unit(rng) * total;
    std::size_t chosen = points.size();
    double cum = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      if (d2[i] <= 0.0) continue;
      cum += d2[i];
      chosen = i;
      if (cum > target) break;
    }
    centroids.push_back(points[chosen]);
    for (std::size_t i = 0; i < points.size(); ++i) {
      d2[i] = std::min(d2[i], squared_distance(points[i], centroids.back()));
    }
  }
  return centroids;
}

std::vector<Vector> cluster_means(const std::vector<Vector>& points,
                                  const std::vector<std::size_t>& assign, std::size_t k,
                                  std::vector<std::size_t>& counts) {
  const std::size_t dim = points.front().size();
  std::vector<Vector> means(k, Vector(dim, 0.0));
  counts.assign(k, 0);
  for (std::size_t i = 0; i < points.size(); ++i) {
    ++counts[assign[i]];
    for (std::size_t j = 0; j < dim; ++j) means[assign[i]][j] += points[i][j];
  }
  for (std::size_t c = 0; c < k; ++c) {
    if (counts[c] == 0) continue;
    for (double& v : means[c]) v /= static_cast<double>(counts[c]);
  }
  return means;
}

}  // namespace

std::size_t count_distinct(const std::vector<Vector>& points) {
  std::vector<Vector> sorted = points;
  std::sort(sorted.begin(), sorted.end());
  return static_cast<std::size_t>(std::unique(sorted.begin(), sorted.end()) - sorted.begin());
}

KMeansResult kmeans(const std::vector<Vector>& points, std::size_t k, std::uint64_t seed,
                    KMeansOptions options) {
  if (k < 1) throw Error(ErrorCode::kInvalidArgument, "k must be at least 1");
  if (points.empty()) throw Error(ErrorCode::kEmptyInput, "k-means needs at least one point");
  const std::size_t dim = points.front().size();
  for (const auto& p : points) {
    if (p.size() != dim) {
      throw Error(ErrorCode::kDimensionMismatch,
                  "k-means point has dimension " + std::to_string(p.size()) + ", expected " +
                      std::to_string(dim));
    }
  }
  const std::size_t distinct = count_distinct(points);
  if (k > distinct) {
    throw Error(ErrorCode::kInfeasibleK, "k=" + std::to_string(k) + " exceeds the " +
                                             std::to_string(distinct) + " distinct points");
  }

  std::mt19937_64 rng(seed);
  KMeansResult result;
  result.centroids = kmeanspp_init(points, k, rng);
  result.assignments.assign(points.size(), 0);
  std::vector<std::size_t> counts;

  for (std::size_t iter = 0; iter < options.max_iters; ++iter) {
    for (std::size_t i = 0; i < points.size(); ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < k; ++c) {
        const double d = squared_distance(points[i], result.centroids[c]);
        if (d < best) {
          best = d;
          result.assignments[i] = c;
        }
      }
    }

    std::vector<Vector> next = cluster_means(points, result.assignments, k, counts);
    for (;;) {
      const auto empty = std::find(counts.begin(), counts.end(), std::size_t{0});
      if (empty == counts.end()) break;
      std::size_t farthest = points.size();
      double far_d = -1.0;
      for (std::size_t i = 0; i < points.size(); ++i) {
        if (counts[result.assignments[i]] < 2) continue;
        const double d = squared_distance(points[i], next[result.assignments[i]]);
        if (d > far_d) {
          far_d = d;
          farthest = i;
        }
      }
      result.assignments[farthest] = static_cast<std::size_t>(empty - counts.begin());
      next = cluster_means(points, result.assignments, k, counts);
    }

    double movement = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      movement = std::max(movement, std::sqrt(squared_distance(next[c], result.centroids[c])));
    }
    result.centroids = std::move(next);

    double wcss = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      wcss += squared_distance(points[i], result.centroids[result.assignments[i]]);
    }
    result.wcss_history.push_back(wcss);
    result.iterations = iter + 1;
    if (movement < options.tol) break;
  }
  return result;
}

InferenceMode::Kind parse_mode_kind(const std::string& name) {
  if (name == "full") return InferenceMode::Kind::kFull;
  if (name == "random") return InferenceMode::Kind::kRandom;
  if (name == "cluster") return InferenceMode::Kind::kCluster;
  if (name == "cc" || name == "closest-cluster") return InferenceMode::Kind::kClosestCluster;
  throw Error(ErrorCode::kInvalidArgument, "unknown inference mode '" + name + "'");
}

std::string mode_kind_name(InferenceMode::Kind kind) {
  switch (kind) {
    case InferenceMode::Kind::kFull: return "full";
    case InferenceMode::Kind::kRandom: return "random";
    case InferenceMode::Kind::kCluster: return "cluster";
    case InferenceMode::Kind::kClosestCluster: return "cc";
  }
  return "full";
}

SupportSet build_support(const std::vector<LabeledExample>& train, int class_count,
                         const InferenceMode& mode, std::vector<std::string>* warnings) {
  if (mode.kind == InferenceMode::Kind::kFull) {
    return SupportSet::from_examples(train, class_count);
  }
  if (mode.k < 1) throw Error(ErrorCode::kInvalidArgument, "k must be at least 1");

  std::vector<std::vector<std::size_t>> members(static_cast<std::size_t>(class_count));
  for (std::size_t i = 0; i < train.size(); ++i) {
    const int label = train[i].label;
    if (label < 0 || label >= class_count) {
      throw Error(ErrorCode::kInvalidArgument,
                  "example '" + train[i].id + "' has label " + std::to_string(label) +
                      " outside [0, " + std::to_string(class_count) + ")");
    }
    members[static_cast<std::size_t>(label)].push_back(i);
  }

  const bool needs_k_real = mode.kind != InferenceMode::Kind::kCluster;
  for (int c = 0; c < class_count; ++c) {
    const auto& m = members[static_cast<std::size_t>(c)];
    if (m.empty() || (needs_k_real && m.size() < mode.k)) {
      throw Error(ErrorCode::kInsufficientClassPopulation,
                  "class " + std::to_string(c) + " has " + std::to_string(m.size()) +
                      " examples; mode " + mode_kind_name(mode.kind) + " needs k=" +
                      std::to_string(mode.k));
    }
  }

  std::vector<SupportEntry> entries;
  if (mode.kind == InferenceMode::Kind::kRandom) {
    std::mt19937_64 rng(mode.seed);
    for (int c = 0; c < class_count; ++c) {
      std::vector<std::size_t> pool = members[static_cast<std::size_t>(c)];
      // Partial Fisher-Yates: the first k slots end up a uniform k-subset.
      for (std::size_t i = 0; i < mode.k; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
        std::swap(pool[i], pool[pick(rng)]);
      }
      pool.resize(mode.k);
      std::sort(pool.begin(), pool.end());
      for (std::size_t idx : pool) {
        const auto& ex = train[idx];
        entries.push_back({ex.id, ex.features, ex.label, ex.id});
      }
    }
    return SupportSet(std::move(entries), class_count);
  }

  for (int c = 0; c < class_count; ++c) {
    const auto& m = members[static_cast<std::size_t>(c)];
    std::vector<Vector> points;
    points.reserve(m.size());
    for (std::size_t idx : m) points.push_back(train[idx].features);

    std::size_t k = mode.k;
    if (mode.kind == InferenceMode::Kind::kCluster) {
      const std::size_t distinct = count_distinct(points);
      if (distinct < k) {
        if (warnings) {
          warnings->push_back("class " + std::to_string(c) + " has only " +
                              std::to_string(distinct) + " distinct points; using " +
                              std::to_string(distinct) + " centroids instead of " +
                              std::to_string(k));
        }
        k = distinct;
      }
    }
    const KMeansResult km = kmeans(points, k, mix_seed(mode.seed, static_cast<std::uint64_t>(c)));

    if (mode.kind == InferenceMode::Kind::kCluster) {
      for (std::size_t j = 0; j < km.centroids.size(); ++j) {
        entries.push_back({"centroid:" + std::to_string(c) + ":" + std::to_string(j),
                           km.centroids[j], c, kCentroidSource});
      }
      continue;
    }

    // Closest cluster: nearest unused real member per centroid.
    std::vector<bool> used(m.size(), false);
    for (const auto& centroid : km.centroids) {
      std::size_t best = m.size();
      double best_d = std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < m.size(); ++i) {
        if (used[i]) continue;
        const double d = squared_distance(points[i], centroid);
        if (d < best_d) {
          best_d = d;
          best = i;
        }
      }
      used[best] = true;
      const auto& ex = train[m[best]];
      entries.push_back({ex.id, ex.features, ex.label, ex.id});
    }
  }
  return SupportSet(std::move(entries), class_count);
}

}  // namespace nwhead
