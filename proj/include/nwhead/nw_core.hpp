#pragma once

#include <span>
#include <string>

#include "nwhead/types.hpp"

namespace nwhead {

/// Euclidean (not squared) distance from `query` to every support entry, in
/// entry order.
Vector pairwise_distances(std::span<const double> query, const SupportSet& support);

/// Softmax over -distance / temperature, evaluated with max-subtraction.
WeightVector nw_weights(std::span<const double> distances, double temperature);

/// Kernel-weighted label average: probs[c] is the summed weight of the
/// support entries labeled c, accumulated in entry order.
PredictionResult nw_predict(std::span<const double> query, const SupportSet& support,
                            double temperature, std::string query_id = {});

/// Same as nw_predict but from precomputed distances.
PredictionResult nw_predict_from_distances(std::span<const double> distances,
                                           const SupportSet& support, double temperature,
                                           std::string query_id = {});

/// -log(probs[true_label]); +inf when that probability is exactly zero.
double cross_entropy(const PredictionResult& pred, int true_label);
double cross_entropy(std::span<const double> probs, int true_label);

/// Fraction of the `top_n` highest-weighted support entries whose label
/// matches the query. Ties in weight keep entry order.
double top_label_match_rate(const LabeledExample& query, const SupportSet& support,
                            double temperature, std::size_t top_n);

}  // namespace nwhead
