#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "protocorrect/correction.hpp"
#include "protocorrect/dataset.hpp"
#include "protocorrect/protocol.hpp"

namespace httplib {
class Server;
}

namespace protocorrect {

struct ServiceOptions {
  bool open_class = false;
  bool reveal_labels = false;
  int top_k = 5;
};

struct SessionParams {
  std::filesystem::path train_path;
  std::filesystem::path test_path;
  int k = 3;
  StoreConfig store;
  std::uint64_t seed = 0;
};

struct ApiRequest {
  std::string method;
  std::string path;
  std::map<std::string, std::string> params;
  std::string body;
};

struct ApiResponse {
  int status = 200;
  std::string body;  // JSON document
};

/// Single-session correction service. All store mutations (corrections,
/// /predict usage updates, reset, import) take the writer lock; listings,
/// metrics and export share a reader lock.
class Service {
 public:
  explicit Service(ServiceOptions options = {});
  ~Service();

  /// Starts (or replaces) the session; returns the POST /session body.
  std::string start_session(const SessionParams& params);

  ApiResponse handle(const ApiRequest& request);

  /// Routes every API endpoint of `server` to handle(); serves `static_dir`
  /// under / when it exists.
  void mount(httplib::Server& server, const std::optional<std::filesystem::path>& static_dir = std::nullopt);

 private:
  struct Session;

  ApiResponse post_session(const ApiRequest& req);
  ApiResponse get_items(const ApiRequest& req);
  ApiResponse post_predict(const ApiRequest& req);
  ApiResponse post_corrections(const ApiRequest& req);
  ApiResponse get_metrics();
  ApiResponse post_reset();
  ApiResponse get_export();
  ApiResponse post_import(const ApiRequest& req);

  void invalidate_metrics();

  ServiceOptions options_;
  mutable std::shared_mutex state_mutex_;
  std::unique_ptr<Session> session_;
  std::uint64_t session_counter_ = 0;

  std::mutex metrics_mutex_;
  std::optional<std::string> metrics_cache_;
};

}  // namespace protocorrect
