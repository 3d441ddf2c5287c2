#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "convkit/dml/dialogue.hpp"
#include "convkit/dml/schema.hpp"
#include "convkit/models/models.hpp"

namespace convkit::runtime {

class RuntimeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SessionEnded : public RuntimeError {
 public:
  using RuntimeError::RuntimeError;
};

struct ApiRequest {
  std::string api;
  std::map<std::string, std::vector<std::string>> args;
  std::uint64_t seed = 0;  // for handlers that sample
};

struct ApiResult {
  bool failed = false;
  std::optional<std::string> value;
  std::string error;
};

using ApiHandler = std::function<ApiResult(const ApiRequest&)>;

// API name -> handler. Mock executors sample return values from the schema;
// live handlers are run with a timeout and a throwing or late handler
// counts as a failure.
class ApiExecutor {
 public:
  enum class Mode { Live, Mock };

  static ApiExecutor mock(const dml::DomainSchema& schema, double p_failure = 0.0);
  static ApiExecutor live(std::chrono::milliseconds timeout = std::chrono::milliseconds(5000));

  void set_handler(const std::string& api, ApiHandler h) { handlers_[api] = std::move(h); }
  // Throws RuntimeError naming the first schema API without a handler.
  void check(const dml::DomainSchema& schema) const;
  ApiResult call(const ApiRequest& req) const;
  Mode mode() const { return mode_; }

 private:
  Mode mode_ = Mode::Mock;
  std::chrono::milliseconds timeout_{5000};
  std::map<std::string, ApiHandler> handlers_;
};

struct SessionOptions {
  std::uint64_t seed = 1;
  // Unset fields come from the bundle's config.
  std::optional<double> tau_high, tau_low;
  std::optional<std::size_t> action_cap;
  std::optional<std::string> fallback;
  std::string log_path;  // append-only event log when set
};

struct ExecutedAction {
  std::string action;
  dml::EventKind kind = dml::EventKind::EndTurn;
  std::vector<std::pair<std::string, std::vector<std::string>>> args;  // resolved values
  std::string return_var;
  std::optional<std::string> return_value;
  bool failed = false;
  std::string text;  // rendered NLG
  nlohmann::ordered_json to_json() const;
};

struct TurnResult {
  std::string utterance;
  std::vector<dml::EntityAnnotation> entities;  // with session variables
  std::vector<std::string> entity_values;
  std::vector<ExecutedAction> actions;  // ends with end-of-turn or end-of-dialogue
  std::string agent_text;
  bool ended = false;
  nlohmann::ordered_json debug;  // tagger output and one record per step
  nlohmann::ordered_json to_json(bool with_debug) const;
};

class Session {
 public:
  Session(std::string id, std::shared_ptr<const models::ModelBundle> bundle,
          std::shared_ptr<const ApiExecutor> executor, SessionOptions opts);

  const std::string& id() const { return id_; }
  bool ended() const { return ended_; }
  std::uint64_t seed() const { return opts_.seed; }
  const dml::AnnotatedDialogue& history() const { return history_; }
  const std::string& welcome_text() const { return welcome_; }
  // Values the agent said or APIs returned so far, per entity type.
  const std::map<std::string, std::vector<std::string>>& dynamic_catalogue() const { return dynamic_; }
  // Header line followed by one record per event.
  const std::vector<nlohmann::ordered_json>& log() const { return log_; }

  TurnResult handle_utterance(const std::string& text);
  // Appends future records to an existing log holding `logged_events`
  // events; records past that point are written first.
  void continue_log(const std::string& path, std::size_t logged_events);

 private:
  void append(dml::DialogueEvent e, const nlohmann::ordered_json& debug = nullptr);
  ExecutedAction execute(const models::ActionSignature& sig, nlohmann::ordered_json& step);
  ExecutedAction emit_nlg(const std::string& name, const std::vector<dml::Binding>& args,
                          nlohmann::ordered_json& step);
  ExecutedAction emit_end(dml::EventKind kind);
  void remember(const std::string& type, const std::string& value);

  std::string id_;
  std::shared_ptr<const models::ModelBundle> bundle_;
  std::shared_ptr<const ApiExecutor> executor_;
  SessionOptions opts_;
  double tau_high_, tau_low_;
  std::size_t cap_;
  std::string fallback_;
  std::mt19937_64 rng_;
  dml::AnnotatedDialogue history_;
  std::map<std::string, std::vector<std::string>> dynamic_;
  std::string welcome_;
  bool ended_ = false;
  std::vector<nlohmann::ordered_json> log_;
};

// Checks the bundle against `schema` and the executor covers every API;
// the session opens with the welcome response when the schema has one.
std::unique_ptr<Session> create_session(const dml::DomainSchema& schema,
                                        std::shared_ptr<const models::ModelBundle> bundle,
                                        std::shared_ptr<const ApiExecutor> executor, std::string id,
                                        SessionOptions opts = {});

// Rebuilds a session from its event log by feeding the logged user
// utterances to a fresh session with the logged seed. Throws RuntimeError
// when the replayed events differ from the log.
std::unique_ptr<Session> replay_session(const std::vector<nlohmann::ordered_json>& log_lines,
                                        std::shared_ptr<const models::ModelBundle> bundle,
                                        std::shared_ptr<const ApiExecutor> executor, SessionOptions opts = {},
                                        std::vector<TurnResult>* results = nullptr);

std::vector<nlohmann::ordered_json> read_log(const std::string& path);

}  // namespace convkit::runtime
