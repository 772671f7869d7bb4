#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "nwhead/calibration.hpp"
#include "nwhead/checkpoint.hpp"
#include "nwhead/dataset.hpp"
#include "nwhead/influence.hpp"
#include "nwhead/support_modes.hpp"

// JSON views shared by the CLI and the inspector service, so both surfaces
// serialize the same library results the same way.
namespace nwhead {

/// Finite values as numbers, +/-inf as the strings "inf" / "-inf".
nlohmann::json extended_real(double v);

nlohmann::json to_json(const ReliabilityReport& report);
nlohmann::json to_json(const TrainLogEntry& entry);

/// The dataset with every feature vector mapped through the extractor.
Dataset embed_dataset(const ExtractorModel& model, const Dataset& dataset);

struct EvalOptions {
  InferenceMode mode;
  double temperature = 1.0;
  std::size_t bins = kDefaultBinCount;
  std::size_t top_n = 10;
};

struct EvalSummary {
  std::size_t count = 0;
  std::size_t support_size = 0;
  double error_rate = 0.0;
  double nll = 0.0;
  double top_label_match = 0.0;
  ReliabilityReport reliability;
};

/// NW predictions of every query against `support`.
EvalSummary evaluate(const SupportSet& support, const std::vector<LabeledExample>& queries,
                     double temperature, std::size_t bins, std::size_t top_n = 10);

nlohmann::json eval_to_json(const EvalSummary& summary, const EvalOptions& options,
                            const std::string& split);

struct InfluenceView {
  PredictionResult prediction;
  int true_label = 0;
  std::size_t requested_top = 0;
  std::size_t top = 0;
  // Same-class records, most helpful first.
  std::vector<InfluenceRecord> helpful;
  // Different-class records, most harmful first.
  std::vector<InfluenceRecord> harmful;
  std::vector<std::string> warnings;
};

/// Ranks the support by influence on `query` and keeps `top` entries on each
/// side; `top` larger than the support is clamped with a warning.
InfluenceView influence_view(const LabeledExample& query, const SupportSet& support,
                             double temperature, std::size_t top);

nlohmann::json to_json(const InfluenceView& view, const SupportSet& support);

}  // namespace nwhead
