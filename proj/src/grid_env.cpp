#include "gridfm/grid_env.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

#include "gridfm/errors.hpp"

namespace gridfm {

std::string_view to_string(Action action) {
  switch (action) {
    case Action::kUp:
      return "up";
    case Action::kDown:
      return "down";
    case Action::kLeft:
      return "left";
    case Action::kRight:
      return "right";
  }
  return "?";
}

std::optional<Action> parse_action(std::string_view text) {
  while (!text.empty() && std::isspace(static_cast<unsigned char>(text.front())))
    text.remove_prefix(1);
  while (!text.empty() && std::isspace(static_cast<unsigned char>(text.back())))
    text.remove_suffix(1);
  std::string lower(text);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  for (Action a : kAllActions) {
    if (lower == to_string(a)) return a;
  }
  return std::nullopt;
}

std::string format_cell(Cell cell) {
  return "[" + std::to_string(cell.x) + ", " + std::to_string(cell.y) + "]";
}

void GridConfig::validate() const {
  std::ostringstream err;
  if (n < 2) {
    err << "grid size n must be >= 2, got " << n;
  } else if (!(sticky_prob >= 0.0 && sticky_prob < 1.0)) {
    err << "sticky_prob must lie in [0, 1), got " << sticky_prob;
  } else if (key_location && !in_bounds(*key_location)) {
    err << "key_location " << format_cell(*key_location)
        << " lies outside the " << n << "x" << n << " grid";
  } else if (max_steps && *max_steps < 1) {
    err << "max_steps must be positive, got " << *max_steps;
  } else {
    return;
  }
  throw ConfigError(err.str());
}

Cell apply_move(Cell from, Action action, int n) {
  Cell to = from;
  switch (action) {
    case Action::kUp:
      ++to.y;
      break;
    case Action::kDown:
      --to.y;
      break;
    case Action::kLeft:
      --to.x;
      break;
    case Action::kRight:
      ++to.x;
      break;
  }
  if (to.x < 0 || to.y < 0 || to.x >= n || to.y >= n) return from;
  return to;
}

Observation observe(const GridState& state, const GridConfig& config) {
  Observation obs;
  obs.agent = state.agent;
  if (config.observe_reward) obs.reward = state.reward;
  if (config.has_key_variant()) obs.has_key = state.has_key;
  return obs;
}

bool episode_finished(const GridState& state, const GridConfig& config) {
  return (state.agent == state.reward && state.has_key && state.steps_taken > 0) ||
         state.steps_taken >= config.episode_cap();
}

std::pair<GridState, Observation> reset(const GridConfig& config, Rng& rng) {
  config.validate();
  GridState state;
  state.agent = config.start_cell();
  if (config.reward_mode == RewardMode::kFixedTopRight) {
    state.reward = config.top_right();
  } else {
    // Uniform over the n*n - 1 non-start cells; index 0 is [0, 0] in
    // row-major order so shift by one.
    const int cells = config.n * config.n;
    std::uniform_int_distribution<int> pick(1, cells - 1);
    const int idx = pick(rng);
    state.reward = {idx % config.n, idx / config.n};
  }
  state.has_key = !config.has_key_variant();
  state.steps_taken = 0;
  state.prev_action.reset();
  return {state, observe(state, config)};
}

std::pair<GridState, Observation> reset(const GridConfig& config,
                                        std::uint64_t seed) {
  Rng rng(seed);
  return reset(config, rng);
}

std::pair<GridState, StepResult> step(const GridState& state, Action action,
                                      const GridConfig& config, Rng& rng) {
  if (episode_finished(state, config)) {
    throw UsageError("step() called on a finished episode (steps_taken=" +
                     std::to_string(state.steps_taken) + ")");
  }
  Action effective = action;
  if (config.sticky_prob > 0.0 && state.prev_action) {
    std::bernoulli_distribution sticky(config.sticky_prob);
    if (sticky(rng)) effective = *state.prev_action;
  }

  GridState next = state;
  next.agent = apply_move(state.agent, effective, config.n);
  if (config.key_location && next.agent == *config.key_location) {
    next.has_key = true;
  }
  next.steps_taken = state.steps_taken + 1;
  next.prev_action = effective;

  StepResult result;
  result.reward = (next.agent == next.reward && next.has_key) ? 1 : 0;
  result.terminated = result.reward == 1;
  result.truncated =
      !result.terminated && next.steps_taken >= config.episode_cap();
  result.observation = observe(next, config);
  return {next, result};
}

std::vector<Transition> enumerate_transitions(const GridConfig& config) {
  config.validate();
  if (!config.is_deterministic()) {
    throw ConfigError(
        "enumerate_transitions requires a deterministic config (no sticky "
        "actions, no key, fixed reward)");
  }
  const Cell reward = config.top_right();
  std::vector<Transition> out;
  out.reserve(static_cast<size_t>(config.n) * config.n * kNumActions);
  for (int y = 0; y < config.n; ++y) {
    for (int x = 0; x < config.n; ++x) {
      for (Action a : kAllActions) {
        const Cell from{x, y};
        const Cell to = apply_move(from, a, config.n);
        out.push_back({from, a, to, to == reward ? 1 : 0});
      }
    }
  }
  return out;
}

GridWorld::GridWorld(GridConfig config) : config_(std::move(config)) {
  config_.validate();
}

Observation GridWorld::reset(std::uint64_t seed) {
  rng_.seed(seed);
  auto [state, obs] = gridfm::reset(config_, rng_);
  state_ = state;
  active_ = true;
  return obs;
}

StepResult GridWorld::step(Action action) {
  if (!active_) throw UsageError("GridWorld::step() before reset()");
  auto [next, result] = gridfm::step(state_, action, config_, rng_);
  state_ = next;
  if (result.done()) active_ = false;
  return result;
}

void GridWorld::set_reward_cell(Cell cell) {
  if (!config_.in_bounds(cell)) {
    throw UsageError("reward cell " + format_cell(cell) + " out of bounds");
  }
  state_.reward = cell;
}

}  // namespace gridfm
