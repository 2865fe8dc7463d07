#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "gridfm/backend.hpp"
#include "gridfm/grid_env.hpp"
#include "gridfm/prompt.hpp"

namespace gridfm {

enum class FallbackPolicy {
  // Uniformly random action from the episode's fallback stream.
  kUniformRandom,
  // Surface the parse failure as an episode error.
  kAbort,
};

struct FaConfig {
  FaStrategy strategy = FaStrategy::kAO;
  double temperature = kDeterministicTemperature;
  // Only the most recent lines are shown to the model when set.
  std::optional<std::size_t> max_memory_lines;
  // Attempts per step before the fallback action is used.
  int max_attempts = 3;
  FallbackPolicy fallback = FallbackPolicy::kUniformRandom;
  // Stands in for the reward location when the observation hides it.
  std::string hidden_reward_text = "a random coordinate";
  int max_tokens = 256;

  void validate() const;
};

class MemoryLog {
 public:
  explicit MemoryLog(std::optional<std::size_t> cap = std::nullopt) : cap_(cap) {}

  void append(std::string line) { lines_.push_back(std::move(line)); }
  void clear() { lines_.clear(); }
  const std::vector<std::string>& lines() const { return lines_; }
  // What the prompt shows: everything, or the newest `cap` lines.
  std::vector<std::string> visible() const;

 private:
  std::optional<std::size_t> cap_;
  std::vector<std::string> lines_;
};

struct FaTurn {
  Action action = Action::kUp;
  std::optional<std::string> plan;
  std::vector<std::string> responses;
  bool fallback = false;
};

// One agent decision: render the strategy template, query the backend, parse,
// retry, and fall back. SP/FP turns append exactly one plan line to `memory`.
FaTurn fa_act(const FaConfig& config, ModelBackend& backend, int n,
              const std::string& reward_text, Cell observation,
              MemoryLog& memory, Rng& fallback_rng,
              const TemplateLibrary& templates = TemplateLibrary::builtin());

struct EpisodeRecord {
  std::uint64_t seed = 0;
  std::vector<Cell> trajectory;  // starting cell included
  std::vector<Action> actions;
  std::vector<std::vector<std::string>> responses;
  std::vector<std::string> memory;
  bool success = false;
  int steps_used = 0;
  int faults = 0;
  std::optional<std::string> error;

  std::string to_json() const;
};

EpisodeRecord fa_run_episode(const FaConfig& config, ModelBackend& backend,
                             World& env, std::uint64_t seed,
                             const TemplateLibrary& templates =
                                 TemplateLibrary::builtin());

struct BenchmarkResult {
  int episodes = 0;
  double success_rate = 0.0;  // fraction in [0,1]
  double mean_steps = 0.0;
  int faults = 0;
  int errors = 0;
  std::vector<EpisodeRecord> records;

  std::string records_jsonl() const;
};

using EnvFactory = std::function<std::unique_ptr<World>()>;

// Episode i runs on a fresh world from `env_factory`, reset with a seed
// derived from (root_seed, i).
BenchmarkResult fa_benchmark(const FaConfig& config, ModelBackend& backend,
                             const EnvFactory& env_factory, int episodes,
                             std::uint64_t root_seed, int workers = 1,
                             const TemplateLibrary& templates =
                                 TemplateLibrary::builtin());

struct FaSummaryRow {
  std::string model;
  FaStrategy strategy = FaStrategy::kAO;
  std::optional<double> fixed_reward_pct;
  std::optional<double> random_reward_pct;
};

// model,strategy,fixed_reward_pct,random_reward_pct (empty cell when absent)
std::string fa_summary_csv(const std::vector<FaSummaryRow>& rows);

}  // namespace gridfm
