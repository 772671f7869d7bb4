#pragma once

#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "nwhead/checkpoint.hpp"
#include "nwhead/dataset.hpp"
#include "nwhead/types.hpp"

namespace httplib {
class Server;
}

namespace nwhead {

// An error with the HTTP status the API reports for it.
class ApiError : public std::runtime_error {
 public:
  ApiError(int status, const std::string& message) : std::runtime_error(message), status_(status) {}
  int status() const { return status_; }

 private:
  int status_;
};

// In-memory state behind the inspector API: embeddings computed once at
// construction, a Full-mode base support over the train split, and a set of
// excluded support ids. Readers take a shared lock, exclusion updates an
// exclusive one.
class InspectorSession {
 public:
  InspectorSession(const Checkpoint& checkpoint, const Dataset& dataset, double temperature = 1.0,
                   std::string checkpoint_ref = {}, std::string dataset_ref = {});

  nlohmann::json summary() const;
  /// Test-split queries with prediction and confidence, paged.
  nlohmann::json queries(std::size_t offset, std::size_t limit, const std::string& sort) const;
  nlohmann::json predict(const std::string& query_id, std::size_t top) const;
  nlohmann::json influence(const std::string& query_id, std::size_t top) const;
  nlohmann::json reliability(std::size_t bins) const;

  nlohmann::json exclusions() const;
  /// Applies `add` then `remove`. 400 on unknown ids, 409 if the support
  /// would become empty; the session is unchanged on error.
  nlohmann::json update_exclusions(const std::vector<std::string>& add,
                                   const std::vector<std::string>& remove);
  nlohmann::json reset_exclusions();

  double temperature() const { return temperature_; }
  SupportSet effective_support() const;
  const Dataset& embedded() const { return embedded_; }

 private:
  SupportSet effective_support_locked() const;
  const LabeledExample& test_query(const std::string& id) const;
  nlohmann::json exclusions_locked() const;

  Dataset embedded_;
  SupportSet base_support_;
  std::vector<LabeledExample> test_;
  double temperature_;
  std::string checkpoint_ref_;
  std::string dataset_ref_;
  std::size_t embed_dim_;

  mutable std::shared_mutex mutex_;
  std::set<std::string> excluded_;
};

struct ServerOptions {
  std::string cors_origin = "*";
  // Built UI assets, mounted at "/" when set.
  std::optional<std::filesystem::path> static_dir;
};

// HTTP/1.1 JSON API under /api. Answers 503 until a session is attached.
class InspectorServer {
 public:
  explicit InspectorServer(ServerOptions options = {});
  ~InspectorServer();

  void set_session(std::shared_ptr<InspectorSession> session);

  /// Binds to an ephemeral port and returns it, or -1.
  int bind_to_any_port(const std::string& host);
  bool bind(const std::string& host, int port);
  /// Blocks until stop().
  bool listen_after_bind();
  void stop();
  void wait_until_ready() const;

 private:
  std::shared_ptr<InspectorSession> session() const;

  ServerOptions options_;
  std::unique_ptr<httplib::Server> http_;
  mutable std::mutex session_mutex_;
  std::shared_ptr<InspectorSession> session_;
};

}  // namespace nwhead
