#include "gridfm/fwm.hpp"

#include <algorithm>

#include <nlohmann/json.hpp>

#include "gridfm/errors.hpp"

namespace gridfm {

void FwmConfig::validate() const {
  grid.validate();
  if (!is_transition_template(transition_template)) {
    throw ConfigError("world model transition template must be one of T, "
                      "T_plus_R, T_minimal, T_minimal_plus_R");
  }
  if (reward_source == RewardSource::kFromTemplateR &&
      !includes_reward(transition_template)) {
    throw ConfigError("reward_source FromTemplateR requires a template with R, "
                      "got " + std::string(template_name(transition_template)));
  }
  if (grid.sticky_prob != 0.0 || grid.key_location) {
    throw ConfigError("the world model supports the plain grid only (no sticky "
                      "actions, no key)");
  }
  if (stochastic_reward != (grid.reward_mode == RewardMode::kRandomPerEpisode)) {
    throw ConfigError("stochastic_reward must match grid.reward_mode");
  }
  if (parse_retries < 0 || reward_sample_attempts < 1) {
    throw ConfigError("retry counts must be non-negative");
  }
}

std::string FwmStepRecord::to_json() const {
  nlohmann::json j = {{"episode", episode},
                      {"step", step},
                      {"prompt_digest", prompt_digest},
                      {"response", response}};
  j["parsed_cell"] = parsed_cell ? nlohmann::json(format_cell(*parsed_cell))
                                 : nlohmann::json(nullptr);
  j["parsed_reward"] =
      parsed_reward ? nlohmann::json(*parsed_reward) : nlohmann::json(nullptr);
  j["faults"] = faults;
  return j.dump();
}

FoundationWorldModel::FoundationWorldModel(FwmConfig config,
                                           std::shared_ptr<ModelBackend> backend,
                                           const TemplateLibrary& templates)
    : config_(std::move(config)),
      backend_(std::move(backend)),
      templates_(&templates) {
  config_.validate();
  if (!backend_) throw ConfigError("world model needs a backend");
}

Cell FoundationWorldModel::sample_reward_location(FwmStepRecord& record) {
  const int n = config_.grid.n;
  const std::string prompt = render(
      templates_->get(TemplateId::kRewardSample), reward_sample_binding(n));
  for (int attempt = 0; attempt < config_.reward_sample_attempts; ++attempt) {
    try {
      ModelBackend& sampler = sampler_ ? *sampler_ : *backend_;
      const Cell c = sample_location(sampler, prompt, n, 1);
      if (config_.grid.in_bounds(c)) return c;
    } catch (const SamplingError&) {
    }
  }
  record.faults.push_back("reward_fallback");
  ++faults_;
  std::uniform_int_distribution<int> pick(1, n * n - 1);
  const int idx = pick(rng_);
  return {idx % n, idx / n};
}

Observation FoundationWorldModel::reset(std::uint64_t seed) {
  rng_.seed(seed);
  ++episode_;
  state_ = FwmEpisodeState{config_.grid.start_cell(), config_.grid.top_right(), 0};
  if (config_.stochastic_reward) {
    FwmStepRecord record;
    record.episode = episode_;
    state_.sampled_reward = sample_reward_location(record);
    if (sink_ && !record.faults.empty()) sink_(record);
  }
  active_ = true;
  Observation obs;
  obs.agent = state_.believed_agent;
  if (config_.grid.observe_reward) obs.reward = state_.sampled_reward;
  return obs;
}

FwmPrediction FoundationWorldModel::predict(Cell state, Action action,
                                            Cell reward_location) {
  const TemplateId id = config_.transition_template;
  const bool with_reward = includes_reward(id);
  const std::string prompt =
      render(templates_->get(id),
             transition_binding(config_.grid.n, state, action,
                                with_reward ? std::optional(reward_location)
                                            : std::nullopt));
  BackendRequest req{backend_->model_id(), prompt, kDeterministicTemperature,
                     64, true};
  FwmPrediction out;
  out.prompt = prompt;
  for (int attempt = 0; attempt <= config_.parse_retries; ++attempt) {
    req.use_cache = attempt == 0;
    out.raw = backend_->complete(req).text;
    ++out.attempts;
    try {
      out.parsed = parse_transition(out.raw, with_reward);
      return out;
    } catch (const ParseError&) {
    }
  }
  return out;
}

StepResult FoundationWorldModel::step(Action action) {
  if (!active_) throw UsageError("world model step() on an inactive episode");
  FwmStepRecord record;
  record.episode = episode_;
  record.step = state_.steps_taken;

  const FwmPrediction pred =
      predict(state_.believed_agent, action, state_.sampled_reward);
  record.response = pred.raw;
  if (sink_) record.prompt_digest = sha256_hex(pred.prompt);

  int reward = 0;
  if (!pred.parsed) {
    record.faults.push_back("parse_failure");
    ++faults_;
  } else {
    Cell next = pred.parsed->next_cell;
    record.parsed_cell = next;
    record.parsed_reward = pred.parsed->reward;
    if (!config_.grid.in_bounds(next)) {
      record.faults.push_back("out_of_bounds");
      ++faults_;
      next.x = std::clamp(next.x, 0, config_.grid.n - 1);
      next.y = std::clamp(next.y, 0, config_.grid.n - 1);
    }
    state_.believed_agent = next;
    if (config_.reward_source == RewardSource::kFromTemplateR) {
      reward = pred.parsed->reward.value_or(0);
    }
  }
  if (config_.reward_source == RewardSource::kOracleReward) {
    reward = state_.believed_agent == state_.sampled_reward ? 1 : 0;
  }
  ++state_.steps_taken;

  StepResult result;
  result.reward = reward;
  result.terminated = reward == 1;
  result.truncated =
      !result.terminated && state_.steps_taken >= config_.grid.episode_cap();
  result.observation.agent = state_.believed_agent;
  if (config_.grid.observe_reward) {
    result.observation.reward = state_.sampled_reward;
  }
  if (result.done()) active_ = false;
  if (sink_) sink_(record);
  return result;
}

}  // namespace gridfm
