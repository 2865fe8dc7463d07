#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "gridfm/grid_env.hpp"

namespace gridfm {

inline constexpr double kDeterministicTemperature = 0.0;
inline constexpr double kSamplingTemperature = 1.8;

struct BackendRequest {
  std::string model_id;
  std::string prompt;
  double temperature = kDeterministicTemperature;
  int max_tokens = 256;
  // Retries after a parse failure set this to false so they reach the model.
  bool use_cache = true;

  void validate() const;
};

struct BackendResponse {
  std::string text;
  std::chrono::duration<double> latency{0.0};
  bool cached = false;
};

class ModelBackend {
 public:
  virtual ~ModelBackend() = default;
  virtual BackendResponse complete(const BackendRequest& request) = 0;
  virtual std::string model_id() const = 0;
};

// Hex SHA-256 over (model_id, prompt, temperature).
std::string cache_key(std::string_view model_id, std::string_view prompt,
                      double temperature);
std::string sha256_hex(std::string_view data);

// Append-only digest -> text store. On disk every record is
//   <64 hex digest> <byte length> <text bytes>\n
// and later records for the same digest win. A torn final record (crash
// mid-write) is ignored on load.
class ResponseCache {
 public:
  // In-memory only.
  ResponseCache() = default;
  explicit ResponseCache(std::filesystem::path path);

  std::optional<std::string> get(const std::string& digest) const;
  void put(const std::string& digest, const std::string& text);
  size_t size() const;
  const std::optional<std::filesystem::path>& path() const { return path_; }

  static std::string encode_record(const std::string& digest,
                                   const std::string& text);

 private:
  void load();

  std::optional<std::filesystem::path> path_;
  mutable std::mutex mu_;
  std::unordered_map<std::string, std::string> entries_;
};

// Consults the cache before the wrapped backend for temperature-0 requests;
// sampled (temperature > 0) requests are never cached.
class CachedBackend final : public ModelBackend {
 public:
  CachedBackend(std::shared_ptr<ModelBackend> inner,
                std::shared_ptr<ResponseCache> cache);

  BackendResponse complete(const BackendRequest& request) override;
  std::string model_id() const override { return inner_->model_id(); }

  std::uint64_t live_calls() const { return live_calls_.load(); }
  std::uint64_t cache_hits() const { return cache_hits_.load(); }

 private:
  std::shared_ptr<ModelBackend> inner_;
  std::shared_ptr<ResponseCache> cache_;
  std::atomic<std::uint64_t> live_calls_{0};
  std::atomic<std::uint64_t> cache_hits_{0};
};

// ---------------------------------------------------------------------------
// Mock backends. All are thread-safe and fully determined by their configuration and
// seed.

// Answers every prompt family shipped in assets/prompts the way the true
// environment would: transition prompts exactly, RewardSample uniformly over
// all n*n cells, StickySample as Bernoulli(p1).
class OracleMock : public ModelBackend {
 public:
  explicit OracleMock(std::uint64_t seed = 0);
  BackendResponse complete(const BackendRequest& request) override;
  std::string model_id() const override { return "oracle-mock"; }

 protected:
  // Empty when the prompt is not a transition prompt.
  struct TransitionQuery {
    int n = 0;
    Cell state;
    Action action = Action::kUp;
    bool expects_reward = false;
    std::optional<Cell> reward;
    std::optional<Cell> key;
    std::vector<Cell> history;
  };
  static std::optional<TransitionQuery> read_transition_query(
      std::string_view prompt);
  static std::string answer(const TransitionQuery& q, Cell next);
  static Cell true_next(const TransitionQuery& q);

 private:
  std::mutex mu_;
  Rng rng_;
};

enum class ErrorModel {
  // Predicts "no movement" regardless of position.
  kClamp,
  // Predicts "no movement", but only for states on the grid border.
  kEdgeClamp,
  // Moves along the other axis (up/down change x, left/right change y).
  kWrongAxis,
};
std::string_view error_model_name(ErrorModel model);
std::optional<ErrorModel> parse_error_model(std::string_view name);

// Oracle answers corrupted on a pseudo-random subset of transition prompts.
// Whether a prompt is corrupted depends only on (seed, prompt), so repeated
// temperature-0 queries stay consistent.
class NoisyMock final : public OracleMock {
 public:
  NoisyMock(double error_rate, ErrorModel model, std::uint64_t seed = 0);
  BackendResponse complete(const BackendRequest& request) override;
  std::string model_id() const override { return "noisy-mock"; }

  bool corrupts(std::string_view prompt) const;

 private:
  double error_rate_;
  ErrorModel model_;
  std::uint64_t seed_;
};

// Draws one of a fixed set of answers per call, ignoring the prompt.
class DistributionMock final : public ModelBackend {
 public:
  DistributionMock(std::vector<std::string> answers,
                   std::vector<double> weights, std::uint64_t seed = 0);
  // Uniform over every "[x, y]" of an n-grid.
  static std::unique_ptr<DistributionMock> uniform_grid(int n,
                                                        std::uint64_t seed);
  BackendResponse complete(const BackendRequest& request) override;
  std::string model_id() const override { return "distribution-mock"; }

 private:
  std::vector<std::string> answers_;
  std::discrete_distribution<size_t> dist_;
  std::mutex mu_;
  Rng rng_;
};

enum class ScriptIndexing {
  // Responses in order, wrapping around at the end.
  kSequential,
  // Response i where i counts "Executed " memory lines in the prompt, i.e. the
  // step index within the current agent episode (wrapping around).
  kMemoryStep,
};

class ScriptedMock final : public ModelBackend {
 public:
  ScriptedMock(std::vector<std::string> responses,
               ScriptIndexing indexing = ScriptIndexing::kSequential);
  BackendResponse complete(const BackendRequest& request) override;
  std::string model_id() const override { return "scripted-mock"; }
  std::uint64_t calls() const { return calls_.load(); }

 private:
  std::vector<std::string> responses_;
  ScriptIndexing indexing_;
  std::mutex mu_;
  size_t cursor_ = 0;
  std::atomic<std::uint64_t> calls_{0};
};

// ---------------------------------------------------------------------------
// Live provider adapter (OpenAI-compatible chat completions).

struct RetryPolicy {
  int max_attempts = 5;
  std::chrono::milliseconds initial_backoff{500};
  std::chrono::milliseconds max_backoff{30000};
  // Cap on the summed sleep time across retries of one request.
  std::chrono::milliseconds max_total_backoff{120000};

  // Delay before retry number `retry` (0-based), ignoring server hints.
  std::chrono::milliseconds backoff_for(int retry) const;
};

struct HttpBackendConfig {
  std::string base_url = "https://api.openai.com";
  std::string path = "/v1/chat/completions";
  std::string model;
  // Name of the environment variable holding the bearer token.
  std::string api_key_env = "OPENAI_API_KEY";
  std::chrono::seconds timeout{60};
  int max_in_flight = 4;
  RetryPolicy retry;
};

class HttpChatBackend final : public ModelBackend {
 public:
  using Sleeper = std::function<void(std::chrono::milliseconds)>;

  explicit HttpChatBackend(HttpBackendConfig config, Sleeper sleeper = {});
  ~HttpChatBackend() override;

  BackendResponse complete(const BackendRequest& request) override;
  std::string model_id() const override { return config_.model; }

  // Extracts choices[0].message.content; throws BackendError otherwise.
  static std::string extract_content(std::string_view body);

 private:
  struct Limiter;
  HttpBackendConfig config_;
  Sleeper sleeper_;
  std::unique_ptr<Limiter> limiter_;
};

// Issues the RewardSample prompt at the sampling temperature and parses a cell
// with the fallback grammar, re-asking after parse failures. The returned cell
// is not bounds-checked. Throws SamplingError after `max_attempts` failures.
Cell sample_location(ModelBackend& backend, const std::string& prompt, int n,
                     int max_attempts = 5);

// StickySample counterpart: returns 1 or 0.
int sample_binary(ModelBackend& backend, const std::string& prompt,
                  int max_attempts = 5);

}  // namespace gridfm
