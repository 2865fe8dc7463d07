#pragma once

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

enum class RewardSource {
  // Reward parsed from the model's "[x, y], r" answer.
  kFromTemplateR,
  // Reward recomputed locally from the believed cell and the episode's
  // sampled reward location.
  kOracleReward,
};

struct FwmConfig {
  GridConfig grid;
  TemplateId transition_template = TemplateId::kTPlusR;
  RewardSource reward_source = RewardSource::kFromTemplateR;
  // Sample the reward location per episode at the sampling temperature.
  bool stochastic_reward = false;
  // Extra attempts after an unparsable transition answer.
  int parse_retries = 3;
  // Attempts at sampling a usable reward location before the seeded uniform
  // fallback kicks in.
  int reward_sample_attempts = 5;

  void validate() const;
};

struct FwmEpisodeState {
  Cell believed_agent;
  Cell sampled_reward;
  int steps_taken = 0;
};

// One JSONL transcript record per simulated step.
struct FwmStepRecord {
  std::uint64_t episode = 0;
  int step = 0;
  std::string prompt_digest;
  std::string response;
  std::optional<Cell> parsed_cell;
  std::optional<int> parsed_reward;
  // Any of "parse_failure", "out_of_bounds", "reward_fallback".
  std::vector<std::string> faults;

  std::string to_json() const;
};

struct FwmPrediction {
  std::string prompt;
  std::optional<ParsedTransition> parsed;
  std::string raw;
  int attempts = 0;
};

// Presents the World interface while every transition, reward and (for the
// stochastic variant) reward location comes from a language-model backend.
class FoundationWorldModel final : public World {
 public:
  FoundationWorldModel(FwmConfig config, std::shared_ptr<ModelBackend> backend,
                       const TemplateLibrary& templates =
                           TemplateLibrary::builtin());

  Observation reset(std::uint64_t seed) override;
  StepResult step(Action action) override;
  const GridConfig& grid() const override { return config_.grid; }

  // Single query of the transition template (temperature 0), with the
  // configured parse retries. Used by fidelity probes.
  FwmPrediction predict(Cell state, Action action, Cell reward_location);

  const FwmEpisodeState& state() const { return state_; }
  const FwmConfig& config() const { return config_; }
  std::uint64_t fault_count() const { return faults_; }

  // Reward-location prompts go to `sampler` instead of the transition backend.
  void set_reward_sampler(std::shared_ptr<ModelBackend> sampler) {
    sampler_ = std::move(sampler);
  }

  using TranscriptSink = std::function<void(const FwmStepRecord&)>;
  void set_transcript_sink(TranscriptSink sink) { sink_ = std::move(sink); }

 private:
  Cell sample_reward_location(FwmStepRecord& record);

  FwmConfig config_;
  std::shared_ptr<ModelBackend> backend_;
  std::shared_ptr<ModelBackend> sampler_;
  const TemplateLibrary* templates_;
  FwmEpisodeState state_;
  Rng rng_;
  bool active_ = false;
  std::uint64_t episode_ = 0;
  std::uint64_t faults_ = 0;
  TranscriptSink sink_;
};

}  // namespace gridfm
