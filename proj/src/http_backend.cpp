#include <cmath>
#include <condition_variable>
#include <cstdlib>
#include <mutex>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "gridfm/backend.hpp"
#include "gridfm/errors.hpp"

namespace gridfm {

std::chrono::milliseconds RetryPolicy::backoff_for(int retry) const {
  const double scaled = static_cast<double>(initial_backoff.count()) *
                        std::pow(2.0, std::min(retry, 30));
  return std::chrono::milliseconds(static_cast<std::int64_t>(
      std::min(scaled, static_cast<double>(max_backoff.count()))));
}

struct HttpChatBackend::Limiter {
  explicit Limiter(int limit) : free(std::max(1, limit)) {}
  void acquire() {
    std::unique_lock lock(mu);
    cv.wait(lock, [&] { return free > 0; });
    --free;
  }
  void release() {
    {
      std::lock_guard lock(mu);
      ++free;
    }
    cv.notify_one();
  }
  std::mutex mu;
  std::condition_variable cv;
  int free;
};

HttpChatBackend::HttpChatBackend(HttpBackendConfig config, Sleeper sleeper)
    : config_(std::move(config)),
      sleeper_(std::move(sleeper)),
      limiter_(std::make_unique<Limiter>(config_.max_in_flight)) {
  if (config_.model.empty()) throw ConfigError("live backend needs a model id");
  if (!sleeper_) {
    sleeper_ = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
  }
}

HttpChatBackend::~HttpChatBackend() = default;

std::string HttpChatBackend::extract_content(std::string_view body) {
  auto doc = nlohmann::json::parse(body, nullptr, false);
  if (doc.is_discarded()) throw BackendError("provider returned invalid JSON");
  try {
    return doc.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw BackendError(std::string("unexpected provider response shape: ") +
                       e.what());
  }
}

BackendResponse HttpChatBackend::complete(const BackendRequest& request) {
  request.validate();
  const auto start = std::chrono::steady_clock::now();

  std::string api_key;
  if (!config_.api_key_env.empty()) {
    if (const char* v = std::getenv(config_.api_key_env.c_str())) api_key = v;
  }
  nlohmann::json payload = {
      {"model", config_.model},
      {"messages", {{{"role", "user"}, {"content", request.prompt}}}},
      {"temperature", request.temperature},
      {"max_tokens", request.max_tokens},
  };
  const std::string body = payload.dump();

  httplib::Headers headers;
  if (!api_key.empty()) headers.emplace("Authorization", "Bearer " + api_key);

  limiter_->acquire();
  struct Release {
    Limiter* l;
    ~Release() { l->release(); }
  } release{limiter_.get()};

  httplib::Client client(config_.base_url);
  client.set_connection_timeout(config_.timeout);
  client.set_read_timeout(config_.timeout);
  client.set_write_timeout(config_.timeout);

  std::chrono::milliseconds slept{0};
  std::string last_error;
  const int attempts = std::max(1, config_.retry.max_attempts);
  for (int attempt = 0; attempt < attempts; ++attempt) {
    auto res = client.Post(config_.path, headers, body, "application/json");
    std::chrono::milliseconds wait = config_.retry.backoff_for(attempt);
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
    } else if (res->status == 200) {
      return {extract_content(res->body),
              std::chrono::steady_clock::now() - start, false};
    } else if (res->status == 429 || res->status >= 500) {
      last_error = "HTTP " + std::to_string(res->status);
      if (res->has_header("Retry-After")) {
        const double hint = std::atof(res->get_header_value("Retry-After").c_str());
        if (hint > 0.0) {
          wait = std::max(wait, std::chrono::milliseconds(
                                    static_cast<std::int64_t>(hint * 1000.0)));
        }
      }
    } else {
      throw BackendError("provider rejected request with HTTP " +
                         std::to_string(res->status) + ": " + res->body);
    }
    if (attempt + 1 == attempts) break;
    wait = std::min(wait, config_.retry.max_backoff);
    if (slept + wait > config_.retry.max_total_backoff) {
      last_error += " (retry time budget exhausted)";
      break;
    }
    sleeper_(wait);
    slept += wait;
  }
  throw BackendError("request to " + config_.base_url + config_.path +
                     " failed: " + last_error);
}

}  // namespace gridfm
