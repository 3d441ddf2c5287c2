#include "convkit/service/service.hpp"

#include <filesystem>
#include <thread>

#include <httplib.h>

namespace convkit::service {

using nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {

Reply error(int status, const std::string& code, const std::string& message) {
  return {status, {{"code", code}, {"message", message}}};
}

// Session ids are "s<n>"; 0 for anything else.
std::uint64_t id_number(const std::string& id) {
  if (id.size() < 2 || id[0] != 's') return 0;
  std::uint64_t n = 0;
  for (std::size_t i = 1; i < id.size(); ++i) {
    if (id[i] < '0' || id[i] > '9') return 0;
    n = n * 10 + static_cast<std::uint64_t>(id[i] - '0');
  }
  return n;
}

}  // namespace

struct Service::Http {
  httplib::Server server;
  std::thread thread;
};

Service::Service(std::shared_ptr<const models::ModelBundle> bundle,
                 std::shared_ptr<const runtime::ApiExecutor> executor, ServiceOptions opts)
    : bundle_(std::move(bundle)), executor_(std::move(executor)), opts_(std::move(opts)), http_(new Http) {
  executor_->check(*bundle_->schema);
  if (!opts_.log_dir.empty()) fs::create_directories(opts_.log_dir);

  auto& srv = http_->server;
  auto send = [](httplib::Response& res, const Reply& r) {
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json");
  };
  srv.Post("/sessions", [this, send](const httplib::Request&, httplib::Response& res) { send(res, create_session()); });
  srv.Post(R"(/sessions/([^/]+)/utterances)", [this, send](const httplib::Request& req, httplib::Response& res) {
    const auto d = req.get_param_value("debug");
    send(res, post_utterance(req.matches[1], req.body, d == "1" || d == "true"));
  });
  srv.Get(R"(/sessions/([^/]+)/log)",
          [this, send](const httplib::Request& req, httplib::Response& res) { send(res, get_log(req.matches[1])); });
  srv.Get("/healthz", [this, send](const httplib::Request&, httplib::Response& res) { send(res, health()); });
  // Browser clients come from another origin.
  srv.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
  srv.set_post_routing_handler([](const httplib::Request&, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Origin", "*");
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
  });
  srv.set_error_handler([send](const httplib::Request& req, httplib::Response& res) {
    if (!res.body.empty()) return;
    send(res, error(res.status, res.status == 404 ? "not_found" : "http_error",
                    "no route for " + req.method + " " + req.path));
  });
  srv.set_exception_handler([send](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    std::string msg = "unknown error";
    try {
      std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      msg = e.what();
    } catch (...) {
    }
    send(res, error(500, "internal", msg));
  });
}

Service::~Service() { stop(); }

std::string Service::log_path(const std::string& id) const {
  return opts_.log_dir.empty() ? std::string() : (fs::path(opts_.log_dir) / (id + ".jsonl")).string();
}

std::shared_ptr<Service::Entry> Service::find(const std::string& id) {
  std::lock_guard<std::mutex> lock(mu_);
  auto it = sessions_.find(id);
  return it == sessions_.end() ? nullptr : it->second;
}

Reply Service::create_session() {
  std::uint64_t n;
  {
    std::lock_guard<std::mutex> lock(mu_);
    n = next_++;
  }
  const std::string id = "s" + std::to_string(n);
  runtime::SessionOptions so;
  so.seed = opts_.seed * 1000003ULL + n;
  so.tau_high = opts_.tau_high;
  so.tau_low = opts_.tau_low;
  so.log_path = log_path(id);
  auto entry = std::make_shared<Entry>();
  try {
    entry->session = runtime::create_session(*bundle_->schema, bundle_, executor_, id, so);
  } catch (const std::exception& e) {
    return error(500, "internal", e.what());
  }
  const auto welcome = entry->session->welcome_text();
  {
    std::lock_guard<std::mutex> lock(mu_);
    sessions_[id] = entry;
  }
  return {201, {{"session_id", id}, {"welcome_text", welcome}}};
}

Reply Service::post_utterance(const std::string& id, const std::string& body, bool debug) {
  auto entry = find(id);
  if (!entry) return error(404, "not_found", "no session '" + id + "'");
  ordered_json j;
  try {
    j = ordered_json::parse(body);
  } catch (const ordered_json::exception& e) {
    return error(400, "bad_request", std::string("body is not JSON: ") + e.what());
  }
  const char* field = j.is_object() && j.contains("utterance") ? "utterance" : "text";
  if (!j.is_object() || !j.contains(field) || !j[field].is_string()) {
    return error(400, "bad_request", "body needs a string field 'utterance'");
  }
  if (j.contains("debug") && j["debug"].is_boolean()) debug = debug || j["debug"].get<bool>();
  std::lock_guard<std::mutex> lock(entry->mu);
  try {
    auto r = entry->session->handle_utterance(j[field].get<std::string>());
    auto out = r.to_json(debug);
    out["session_id"] = id;
    return {200, out};
  } catch (const runtime::SessionEnded& e) {
    return error(410, "session_ended", e.what());
  } catch (const std::exception& e) {
    return error(500, "internal", e.what());
  }
}

Reply Service::get_log(const std::string& id) {
  auto entry = find(id);
  if (!entry) return error(404, "not_found", "no session '" + id + "'");
  std::lock_guard<std::mutex> lock(entry->mu);
  ordered_json out;
  out["session_id"] = id;
  out["ended"] = entry->session->ended();
  out["records"] = entry->session->log();
  return {200, out};
}

Reply Service::health() {
  std::lock_guard<std::mutex> lock(mu_);
  return {200,
          {{"status", "ok"},
           {"domain", bundle_->schema->name},
           {"schema_fingerprint", bundle_->schema->fingerprint()},
           {"sessions", sessions_.size()}}};
}

std::size_t Service::restore() {
  if (opts_.log_dir.empty()) return 0;
  std::vector<fs::path> logs;
  for (const auto& f : fs::directory_iterator(opts_.log_dir)) {
    if (f.path().extension() == ".jsonl") logs.push_back(f.path());
  }
  std::sort(logs.begin(), logs.end());
  std::size_t restored = 0;
  for (const auto& p : logs) {
    runtime::SessionOptions so;
    so.tau_high = opts_.tau_high;
    so.tau_low = opts_.tau_low;
    so.log_path = p.string();
    auto entry = std::make_shared<Entry>();
    entry->session = runtime::replay_session(runtime::read_log(p.string()), bundle_, executor_, so);
    const auto id = entry->session->id();
    std::lock_guard<std::mutex> lock(mu_);
    next_ = std::max(next_, id_number(id) + 1);
    sessions_[id] = entry;
    ++restored;
  }
  return restored;
}

int Service::start() {
  const int port = opts_.port == 0 ? http_->server.bind_to_any_port(opts_.host)
                                   : (http_->server.bind_to_port(opts_.host, opts_.port) ? opts_.port : -1);
  if (port < 0) throw runtime::RuntimeError("cannot bind " + opts_.host + ":" + std::to_string(opts_.port));
  http_->thread = std::thread([this] { http_->server.listen_after_bind(); });
  http_->server.wait_until_ready();
  return port;
}

void Service::serve() {
  if (!http_->server.listen(opts_.host, opts_.port)) {
    throw runtime::RuntimeError("cannot listen on " + opts_.host + ":" + std::to_string(opts_.port));
  }
}

void Service::stop() {
  if (!http_) return;
  http_->server.stop();
  if (http_->thread.joinable()) http_->thread.join();
}

}  // namespace convkit::service
