#include "nwhead/reports.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

#include "nwhead/error.hpp"
#include "nwhead/nw_core.hpp"

namespace nwhead {

nlohmann::json extended_real(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  return v;
}

nlohmann::json to_json(const ReliabilityReport& report) {
  nlohmann::json bins = nlohmann::json::array();
  for (const auto& b : report.bins) {
    bins.push_back({{"lower", b.lower},
                    {"upper", b.upper},
                    {"count", b.count},
                    {"mean_confidence", b.mean_confidence},
                    {"accuracy", b.accuracy}});
  }
  return {{"bin_count", report.bin_count}, {"ece", report.ece}, {"bins", std::move(bins)}};
}

nlohmann::json to_json(const TrainLogEntry& e) {
  nlohmann::json j{{"step", e.step}, {"lr", e.lr}, {"train_loss", extended_real(e.train_loss)}};
  if (e.val_error) j["val_error"] = *e.val_error;
  if (e.val_ece) j["val_ece"] = *e.val_ece;
  return j;
}

Dataset embed_dataset(const ExtractorModel& model, const Dataset& dataset) {
  Dataset out = dataset;
  out.examples = embed(model, dataset.examples);
  out.dim = model.embed_dim();
  return out;
}

EvalSummary evaluate(const SupportSet& support, const std::vector<LabeledExample>& queries,
                     double temperature, std::size_t bins, std::size_t top_n) {
  if (queries.empty()) throw Error(ErrorCode::kEmptyInput, "no queries to evaluate");
  EvalSummary s;
  s.count = queries.size();
  s.support_size = support.size();
  const std::size_t n_top = std::min(top_n, support.size());
  std::vector<PredictionResult> preds(queries.size());
  std::vector<double> nlls(queries.size()), matches(queries.size());
  std::mutex failure_mutex;
  std::exception_ptr failure;
  auto work = [&](std::size_t begin, std::size_t end) {
    try {
      for (std::size_t i = begin; i < end; ++i) {
        preds[i] = nw_predict(queries[i].features, support, temperature, queries[i].id);
        nlls[i] = cross_entropy(preds[i], queries[i].label);
        matches[i] = top_label_match_rate(queries[i], support, temperature, n_top);
      }
    } catch (...) {
      std::lock_guard lock(failure_mutex);
      if (!failure) failure = std::current_exception();
    }
  };
  // Each query owns its slots; sums below run in query order, so the result
  // does not depend on the thread count.
  const std::size_t threads =
      std::min<std::size_t>(std::max(1u, std::thread::hardware_concurrency()), queries.size() / 64 + 1);
  {
    std::vector<std::jthread> pool;
    const std::size_t chunk = (queries.size() + threads - 1) / threads;
    for (std::size_t t = 1; t < threads; ++t) {
      pool.emplace_back(work, std::min(t * chunk, queries.size()), std::min((t + 1) * chunk, queries.size()));
    }
    work(0, std::min(chunk, queries.size()));
  }
  if (failure) std::rethrow_exception(failure);
  std::vector<int> labels;
  labels.reserve(queries.size());
  std::size_t wrong = 0;
  double nll = 0.0;
  double match = 0.0;
  for (std::size_t i = 0; i < queries.size(); ++i) {
    labels.push_back(queries[i].label);
    if (preds[i].predicted_class() != queries[i].label) ++wrong;
    nll += nlls[i];
    match += matches[i];
  }
  const double n = static_cast<double>(queries.size());
  s.error_rate = static_cast<double>(wrong) / n;
  s.nll = nll / n;
  s.top_label_match = match / n;
  s.reliability = expected_calibration_error(preds, labels, bins);
  return s;
}

nlohmann::json eval_to_json(const EvalSummary& s, const EvalOptions& o, const std::string& split) {
  const bool full = o.mode.kind == InferenceMode::Kind::kFull;
  return {
      {"mode", mode_kind_name(o.mode.kind)},
      {"k", full ? nlohmann::json(nullptr) : nlohmann::json(o.mode.k)},
      {"seed", o.mode.seed},
      {"tau", o.temperature},
      {"split", split},
      {"count", s.count},
      {"support_size", s.support_size},
      {"error_rate", s.error_rate},
      {"ece", s.reliability.ece},
      {"nll", extended_real(s.nll)},
      {"top_label_match_at_" + std::to_string(o.top_n), s.top_label_match},
      {"reliability", to_json(s.reliability)},
  };
}

InfluenceView influence_view(const LabeledExample& query, const SupportSet& support,
                             double temperature, std::size_t top) {
  InfluenceView v;
  v.prediction = nw_predict(query.features, support, temperature, query.id);
  v.true_label = query.label;
  v.requested_top = top;
  v.top = top;
  if (top > support.size()) {
    v.top = support.size();
    v.warnings.push_back("top " + std::to_string(top) + " exceeds support size " +
                         std::to_string(support.size()) + "; clamped");
  }
  const auto ranked = rank_influence(v.prediction, support, query.label);
  for (const auto& r : ranked) {
    if (r.same_class && v.helpful.size() < v.top) v.helpful.push_back(r);
  }
  for (auto it = ranked.rbegin(); it != ranked.rend(); ++it) {
    if (!it->same_class && v.harmful.size() < v.top) v.harmful.push_back(*it);
  }
  return v;
}

nlohmann::json to_json(const InfluenceView& v, const SupportSet& support) {
  auto records = [&](const std::vector<InfluenceRecord>& rs) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& r : rs) {
      arr.push_back({{"support_id", r.support_id},
                     {"label", support[r.support_index].label},
                     {"weight", r.weight},
                     {"influence", extended_real(r.influence)},
                     {"same_class", r.same_class}});
    }
    return arr;
  };
  return {
      {"query_id", v.prediction.query_id},
      {"true_label", v.true_label},
      {"predicted_class", v.prediction.predicted_class()},
      {"probs", v.prediction.probs},
      {"tau", v.prediction.weights.temperature},
      {"support_size", support.size()},
      {"top", v.top},
      {"helpful", records(v.helpful)},
      {"harmful", records(v.harmful)},
      {"warnings", v.warnings},
  };
}

}  // namespace nwhead
