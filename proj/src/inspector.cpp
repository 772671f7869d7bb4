#include "nwhead/inspector.hpp"

#include <algorithm>
#include <numeric>

#include "httplib.h"

#include "nwhead/error.hpp"
#include "nwhead/nw_core.hpp"
#include "nwhead/reports.hpp"

namespace nwhead {
namespace {

SupportSet train_support(const Dataset& embedded) {
  const auto train = embedded.subset(Split::kTrain);
  if (train.empty()) throw Error(ErrorCode::kEmptyInput, "dataset has no train split");
  return SupportSet::from_examples(train, embedded.class_count);
}

}  // namespace

InspectorSession::InspectorSession(const Checkpoint& checkpoint, const Dataset& dataset,
                                   double temperature, std::string checkpoint_ref,
                                   std::string dataset_ref)
    : embedded_(embed_dataset(checkpoint.model.extractor, dataset)),
      base_support_(train_support(embedded_)),
      test_(embedded_.subset(Split::kTest)),
      temperature_(temperature),
      checkpoint_ref_(std::move(checkpoint_ref)),
      dataset_ref_(std::move(dataset_ref)),
      embed_dim_(checkpoint.model.extractor.embed_dim()) {
  if (!(temperature > 0.0)) throw Error(ErrorCode::kInvalidTemperature, "temperature must be positive");
}

SupportSet InspectorSession::effective_support_locked() const {
  if (excluded_.empty()) return base_support_;
  std::vector<SupportEntry> kept;
  kept.reserve(base_support_.size());
  for (const auto& e : base_support_.entries()) {
    if (!excluded_.count(e.id)) kept.push_back(e);
  }
  return SupportSet(std::move(kept), base_support_.class_count());
}

SupportSet InspectorSession::effective_support() const {
  std::shared_lock lock(mutex_);
  return effective_support_locked();
}

const LabeledExample& InspectorSession::test_query(const std::string& id) const {
  for (const auto& q : test_) {
    if (q.id == id) return q;
  }
  throw ApiError(404, "unknown test query '" + id + "'");
}

nlohmann::json InspectorSession::summary() const {
  std::shared_lock lock(mutex_);
  return {
      {"checkpoint", checkpoint_ref_},
      {"dataset", dataset_ref_},
      {"class_count", embedded_.class_count},
      {"embed_dim", embed_dim_},
      {"splits",
       {{"train", embedded_.count(Split::kTrain)},
        {"val", embedded_.count(Split::kVal)},
        {"test", embedded_.count(Split::kTest)}}},
      {"tau", temperature_},
      {"base_support_size", base_support_.size()},
      {"exclusion_count", excluded_.size()},
  };
}

nlohmann::json InspectorSession::queries(std::size_t offset, std::size_t limit,
                                         const std::string& sort) const {
  if (sort != "confidence" && sort != "id") {
    throw ApiError(400, "sort must be 'confidence' or 'id'");
  }
  std::shared_lock lock(mutex_);
  const SupportSet support = effective_support_locked();
  struct Row {
    const LabeledExample* q;
    PredictionResult pred;
  };
  std::vector<Row> rows;
  rows.reserve(test_.size());
  for (const auto& q : test_) rows.push_back({&q, nw_predict(q.features, support, temperature_, q.id)});
  if (sort == "confidence") {
    std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
      return a.pred.confidence() < b.pred.confidence();
    });
  }
  nlohmann::json items = nlohmann::json::array();
  for (std::size_t i = offset; i < rows.size() && i < offset + limit; ++i) {
    items.push_back({{"query_id", rows[i].q->id},
                     {"true_label", rows[i].q->label},
                     {"predicted_class", rows[i].pred.predicted_class()},
                     {"confidence", rows[i].pred.confidence()}});
  }
  return {{"total", rows.size()}, {"offset", offset}, {"limit", limit}, {"sort", sort},
          {"items", std::move(items)}};
}

nlohmann::json InspectorSession::predict(const std::string& query_id, std::size_t top) const {
  std::shared_lock lock(mutex_);
  const LabeledExample& q = test_query(query_id);
  const SupportSet support = effective_support_locked();
  const PredictionResult pred = nw_predict(q.features, support, temperature_, q.id);

  const Vector& w = pred.weights.weights;
  std::vector<std::size_t> order(w.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return w[a] > w[b]; });
  nlohmann::json ranked = nlohmann::json::array();
  for (std::size_t r = 0; r < std::min(top, order.size()); ++r) {
    const auto& e = support[order[r]];
    ranked.push_back({{"support_id", e.id},
                      {"label", e.label},
                      {"weight", w[order[r]]},
                      {"same_class", e.label == q.label}});
  }
  return {
      {"query_id", q.id},
      {"true_label", q.label},
      {"predicted_class", pred.predicted_class()},
      {"confidence", pred.confidence()},
      {"probs", pred.probs},
      {"tau", temperature_},
      {"support_size", support.size()},
      {"exclusion_count", excluded_.size()},
      {"top", std::min(top, order.size())},
      {"top_support", std::move(ranked)},
  };
}

nlohmann::json InspectorSession::influence(const std::string& query_id, std::size_t top) const {
  std::shared_lock lock(mutex_);
  const LabeledExample& q = test_query(query_id);
  const SupportSet support = effective_support_locked();
  if (!support.has_class(q.label)) {
    throw ApiError(409, "class " + std::to_string(q.label) +
                            " is fully excluded from the support set; influence is undefined");
  }
  if (support.size() < 2) throw ApiError(409, "influence needs at least two support entries");
  // Same document the CLI influence command writes for this support.
  return to_json(influence_view(q, support, temperature_, top), support);
}

nlohmann::json InspectorSession::reliability(std::size_t bins) const {
  if (bins < 1) throw ApiError(400, "bins must be at least 1");
  std::shared_lock lock(mutex_);
  if (test_.empty()) throw ApiError(409, "dataset has no test split");
  const SupportSet support = effective_support_locked();
  const EvalSummary s = evaluate(support, test_, temperature_, bins);
  nlohmann::json j = to_json(s.reliability);
  j["count"] = s.count;
  j["error_rate"] = s.error_rate;
  j["exclusion_count"] = excluded_.size();
  return j;
}

nlohmann::json InspectorSession::exclusions_locked() const {
  return {{"excluded", std::vector<std::string>(excluded_.begin(), excluded_.end())},
          {"exclusion_count", excluded_.size()},
          {"support_size", base_support_.size() - excluded_.size()}};
}

nlohmann::json InspectorSession::exclusions() const {
  std::shared_lock lock(mutex_);
  return exclusions_locked();
}

nlohmann::json InspectorSession::update_exclusions(const std::vector<std::string>& add,
                                                   const std::vector<std::string>& remove) {
  std::unique_lock lock(mutex_);
  auto known = [&](const std::string& id) {
    return std::any_of(base_support_.entries().begin(), base_support_.entries().end(),
                       [&](const SupportEntry& e) { return e.id == id; });
  };
  for (const auto* ids : {&add, &remove}) {
    for (const auto& id : *ids) {
      if (!known(id)) throw ApiError(400, "unknown support id '" + id + "'");
    }
  }
  std::set<std::string> next = excluded_;
  next.insert(add.begin(), add.end());
  for (const auto& id : remove) next.erase(id);
  if (next.size() >= base_support_.size()) {
    throw ApiError(409, "excluding these ids would leave the support set empty");
  }
  excluded_ = std::move(next);
  return exclusions_locked();
}

nlohmann::json InspectorSession::reset_exclusions() {
  std::unique_lock lock(mutex_);
  excluded_.clear();
  return exclusions_locked();
}

namespace {

std::size_t size_param(const httplib::Request& req, const char* name, std::size_t fallback) {
  if (!req.has_param(name)) return fallback;
  const std::string v = req.get_param_value(name);
  try {
    std::size_t pos = 0;
    const long long n = std::stoll(v, &pos);
    if (pos != v.size() || n < 0) throw std::invalid_argument(name);
    return static_cast<std::size_t>(n);
  } catch (const std::exception&) {
    throw ApiError(400, std::string("query parameter '") + name + "' must be a non-negative integer");
  }
}

std::vector<std::string> id_list(const nlohmann::json& body, const char* key) {
  if (!body.contains(key)) return {};
  if (!body[key].is_array()) throw ApiError(400, std::string("'") + key + "' must be an array of ids");
  std::vector<std::string> out;
  for (const auto& v : body[key]) {
    if (!v.is_string()) throw ApiError(400, std::string("'") + key + "' must hold strings");
    out.push_back(v.get<std::string>());
  }
  return out;
}

void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

}  // namespace

InspectorServer::InspectorServer(ServerOptions options)
    : options_(std::move(options)), http_(std::make_unique<httplib::Server>()) {
  auto& srv = *http_;
  const std::string origin = options_.cors_origin;
  srv.set_post_routing_handler([origin](const httplib::Request&, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Origin", origin);
    res.set_header("Access-Control-Allow-Methods", "GET, POST, DELETE, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
  });
  srv.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

  // Wraps a handler with session lookup and error mapping.
  auto route = [this](auto fn) {
    return [this, fn](const httplib::Request& req, httplib::Response& res) {
      try {
        const auto s = session();
        if (!s) throw ApiError(503, "no checkpoint loaded");
        send_json(res, 200, fn(*s, req));
      } catch (const ApiError& e) {
        send_json(res, e.status(), {{"error", e.what()}, {"status", e.status()}});
      } catch (const Error& e) {
        const int status = e.code() == ErrorCode::kUndefinedLoss ? 409 : 400;
        send_json(res, status, {{"error", e.what()}, {"code", error_code_name(e.code())}});
      } catch (const nlohmann::json::exception& e) {
        send_json(res, 400, {{"error", std::string("malformed JSON body: ") + e.what()}});
      }
    };
  };

  srv.Get("/api/summary", route([](InspectorSession& s, const httplib::Request&) { return s.summary(); }));
  srv.Get("/api/queries", route([](InspectorSession& s, const httplib::Request& req) {
            const std::string sort = req.has_param("sort") ? req.get_param_value("sort") : "confidence";
            return s.queries(size_param(req, "offset", 0), size_param(req, "limit", 50), sort);
          }));
  srv.Get(R"(/api/predict/([^/]+))", route([](InspectorSession& s, const httplib::Request& req) {
            return s.predict(req.matches[1].str(), size_param(req, "top", 10));
          }));
  srv.Get(R"(/api/influence/([^/]+))", route([](InspectorSession& s, const httplib::Request& req) {
            return s.influence(req.matches[1].str(), size_param(req, "top", 5));
          }));
  srv.Get("/api/reliability", route([](InspectorSession& s, const httplib::Request& req) {
            if (req.has_param("bins")) {
              const std::string v = req.get_param_value("bins");
              if (!v.empty() && v.front() == '-') throw ApiError(400, "bins must be at least 1");
            }
            return s.reliability(size_param(req, "bins", 15));
          }));
  srv.Get("/api/exclusions", route([](InspectorSession& s, const httplib::Request&) { return s.exclusions(); }));
  srv.Post("/api/exclusions", route([](InspectorSession& s, const httplib::Request& req) {
             const auto body = nlohmann::json::parse(req.body.empty() ? "{}" : req.body);
             if (!body.is_object()) throw ApiError(400, "body must be a JSON object");
             return s.update_exclusions(id_list(body, "add"), id_list(body, "remove"));
           }));
  srv.Delete("/api/exclusions", route([](InspectorSession& s, const httplib::Request&) {
               return s.reset_exclusions();
             }));

  if (options_.static_dir) srv.set_mount_point("/", options_.static_dir->string());
}

InspectorServer::~InspectorServer() { stop(); }

void InspectorServer::set_session(std::shared_ptr<InspectorSession> session) {
  std::lock_guard lock(session_mutex_);
  session_ = std::move(session);
}

std::shared_ptr<InspectorSession> InspectorServer::session() const {
  std::lock_guard lock(session_mutex_);
  return session_;
}

int InspectorServer::bind_to_any_port(const std::string& host) {
  return http_->bind_to_any_port(host);
}

bool InspectorServer::bind(const std::string& host, int port) {
  return http_->bind_to_port(host, port);
}

bool InspectorServer::listen_after_bind() { return http_->listen_after_bind(); }

void InspectorServer::stop() {
  if (http_) http_->stop();
}

void InspectorServer::wait_until_ready() const { http_->wait_until_ready(); }

}  // namespace nwhead
