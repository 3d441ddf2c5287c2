#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "convkit/models/models.hpp"
#include "convkit/runtime/runtime.hpp"

namespace convkit::service {

struct ServiceOptions {
  std::string host = "127.0.0.1";
  int port = 8080;       // 0 picks a free port
  std::string log_dir;   // per-session event logs; sessions are restored from it
  std::uint64_t seed = 1;
  std::optional<double> tau_high, tau_low;
};

struct Reply {
  int status = 200;
  nlohmann::ordered_json body;
};

// HTTP/JSON front end over runtime sessions:
//   POST /sessions                      -> {session_id, welcome_text}
//   POST /sessions/{id}/utterances      {"utterance": ...} -> turn result (?debug=1 adds traces)
//   GET  /sessions/{id}/log             -> {session_id, records}
//   GET  /healthz
// Errors are {"code", "message"}; an ended session answers 410.
class Service {
 public:
  Service(std::shared_ptr<const models::ModelBundle> bundle, std::shared_ptr<const runtime::ApiExecutor> executor,
          ServiceOptions opts);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  // Transport-independent handlers.
  Reply create_session();
  Reply post_utterance(const std::string& id, const std::string& body, bool debug);
  Reply get_log(const std::string& id);
  Reply health();

  // Replays every log in log_dir; returns the number of sessions restored.
  std::size_t restore();

  // Binds and serves on a background thread; returns the bound port.
  int start();
  // Binds and serves on the calling thread until stop().
  void serve();
  void stop();

 private:
  struct Entry {
    std::mutex mu;
    std::unique_ptr<runtime::Session> session;
  };
  struct Http;

  std::shared_ptr<Entry> find(const std::string& id);
  std::string log_path(const std::string& id) const;

  std::shared_ptr<const models::ModelBundle> bundle_;
  std::shared_ptr<const runtime::ApiExecutor> executor_;
  ServiceOptions opts_;
  std::mutex mu_;
  std::map<std::string, std::shared_ptr<Entry>> sessions_;
  std::uint64_t next_ = 1;
  std::unique_ptr<Http> http_;
};

}  // namespace convkit::service
