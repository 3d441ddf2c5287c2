#include <future>
#include <thread>

#include "convkit/runtime/runtime.hpp"

namespace convkit::runtime {

ApiExecutor ApiExecutor::mock(const dml::DomainSchema& schema, double p_failure) {
  ApiExecutor ex;
  ex.mode_ = Mode::Mock;
  for (const auto& api : schema.apis) {
    std::optional<std::string> type = api.return_type;
    std::vector<std::string> values;
    if (type) values = schema.return_values(api);
    ex.handlers_[api.name] = [type, values, p_failure, name = api.name](const ApiRequest& req) {
      std::mt19937_64 rng(req.seed);
      ApiResult r;
      if (p_failure > 0 && std::uniform_real_distribution<double>(0, 1)(rng) < p_failure) {
        r.failed = true;
        r.error = "simulated failure";
        return r;
      }
      if (!type) return r;
      if (values.empty()) {
        r.failed = true;
        r.error = "no values to sample for " + name;
        return r;
      }
      r.value = values[std::uniform_int_distribution<std::size_t>(0, values.size() - 1)(rng)];
      return r;
    };
  }
  return ex;
}

ApiExecutor ApiExecutor::live(std::chrono::milliseconds timeout) {
  ApiExecutor ex;
  ex.mode_ = Mode::Live;
  ex.timeout_ = timeout;
  return ex;
}

void ApiExecutor::check(const dml::DomainSchema& schema) const {
  for (const auto& api : schema.apis) {
    if (!handlers_.count(api.name)) throw RuntimeError("no handler for API '" + api.name + "'");
  }
}

ApiResult ApiExecutor::call(const ApiRequest& req) const {
  auto it = handlers_.find(req.api);
  if (it == handlers_.end()) return {true, std::nullopt, "no handler for API '" + req.api + "'"};
  auto failure = [](std::string msg) { return ApiResult{true, std::nullopt, std::move(msg)}; };
  if (mode_ == Mode::Mock) {
    try {
      return it->second(req);
    } catch (const std::exception& e) {
      return failure(e.what());
    }
  }
  // The worker is detached so a handler that never returns only leaks its
  // thread; the shared state keeps the promise alive until it finishes.
  auto done = std::make_shared<std::promise<ApiResult>>();
  auto fut = done->get_future();
  std::thread([h = it->second, req, done] {
    try {
      done->set_value(h(req));
    } catch (...) {
      done->set_exception(std::current_exception());
    }
  }).detach();
  if (fut.wait_for(timeout_) != std::future_status::ready) {
    return failure("API '" + req.api + "' timed out after " + std::to_string(timeout_.count()) + " ms");
  }
  try {
    return fut.get();
  } catch (const std::exception& e) {
    return failure(e.what());
  } catch (...) {
    return failure("API '" + req.api + "' raised a non-standard exception");
  }
}

}  // namespace convkit::runtime
