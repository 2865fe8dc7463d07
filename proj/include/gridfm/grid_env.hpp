#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace gridfm {

using Rng = std::mt19937_64;

enum class Action : int { kUp = 0, kDown = 1, kLeft = 2, kRight = 3 };

inline constexpr std::array<Action, 4> kAllActions = {
    Action::kUp, Action::kDown, Action::kLeft, Action::kRight};
inline constexpr int kNumActions = 4;

// Lowercase canonical word: "up", "down", "left", "right".
std::string_view to_string(Action action);
// Case-insensitive, surrounding whitespace ignored.
std::optional<Action> parse_action(std::string_view text);

// Origin bottom-left, x grows rightward, y grows upward, 0-indexed.
struct Cell {
  int x = 0;
  int y = 0;
  friend auto operator<=>(const Cell&, const Cell&) = default;
};

// "[x, y]" with exactly one space after the comma.
std::string format_cell(Cell cell);

enum class RewardMode { kFixedTopRight, kRandomPerEpisode };

struct GridConfig {
  int n = 5;
  RewardMode reward_mode = RewardMode::kFixedTopRight;
  bool observe_reward = true;
  std::optional<Cell> key_location;
  double sticky_prob = 0.0;
  std::optional<int> max_steps;

  // Throws ConfigError describing the first violated constraint.
  void validate() const;

  int episode_cap() const { return max_steps.value_or(2 * n * n); }
  bool in_bounds(Cell c) const {
    return c.x >= 0 && c.y >= 0 && c.x < n && c.y < n;
  }
  bool has_key_variant() const { return key_location.has_value(); }
  Cell start_cell() const { return {0, 0}; }
  Cell top_right() const { return {n - 1, n - 1}; }
  // No sticky actions, no key, fixed reward.
  bool is_deterministic() const {
    return sticky_prob == 0.0 && !key_location &&
           reward_mode == RewardMode::kFixedTopRight;
  }
};

struct GridState {
  Cell agent;
  Cell reward;
  // Constantly true when the key variant is disabled.
  bool has_key = true;
  int steps_taken = 0;
  std::optional<Action> prev_action;
};

struct Observation {
  Cell agent;
  std::optional<Cell> reward;
  std::optional<bool> has_key;
  friend bool operator==(const Observation&, const Observation&) = default;
};

struct StepResult {
  Observation observation;
  int reward = 0;
  bool terminated = false;
  bool truncated = false;
  bool done() const { return terminated || truncated; }
};

struct Transition {
  Cell from;
  Action action;
  Cell to;
  int reward = 0;
};

// Deterministic movement with boundary clamping.
Cell apply_move(Cell from, Action action, int n);

Observation observe(const GridState& state, const GridConfig& config);
bool episode_finished(const GridState& state, const GridConfig& config);

std::pair<GridState, Observation> reset(const GridConfig& config, Rng& rng);
std::pair<GridState, Observation> reset(const GridConfig& config,
                                        std::uint64_t seed);

// `rng` only drives sticky-action draws. Throws UsageError on a finished
// episode.
std::pair<GridState, StepResult> step(const GridState& state, Action action,
                                      const GridConfig& config, Rng& rng);

// One tuple per (cell, action), cells row-major (y outer, x inner), actions in
// kAllActions order. Rejects non-deterministic configs.
std::vector<Transition> enumerate_transitions(const GridConfig& config);

// The reset/step surface shared by the oracle grid and the foundation world
// model; agents only ever see this.
class World {
 public:
  virtual ~World() = default;
  virtual Observation reset(std::uint64_t seed) = 0;
  virtual StepResult step(Action action) = 0;
  virtual const GridConfig& grid() const = 0;
};

class GridWorld final : public World {
 public:
  explicit GridWorld(GridConfig config);

  Observation reset(std::uint64_t seed) override;
  StepResult step(Action action) override;
  const GridConfig& grid() const override { return config_; }

  const GridState& state() const { return state_; }
  // Overrides the reward cell of the current episode, e.g. to replay a world
  // model's draw in the true environment.
  void set_reward_cell(Cell cell);

 private:
  GridConfig config_;
  GridState state_;
  Rng rng_;
  bool active_ = false;
};

}  // namespace gridfm
