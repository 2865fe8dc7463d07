#include <gtest/gtest.h>

#include <map>

#include "gridfm/errors.hpp"
#include "gridfm/grid_env.hpp"
#include "support/oracles.hpp"

using namespace gridfm;

TEST(GridEnv, ResetPlacesAgentBottomLeftAndRewardTopRight) {
  GridConfig g;
  auto [s, obs] = reset(g, 7);
  EXPECT_EQ(s.agent, (Cell{0, 0}));
  EXPECT_EQ(s.reward, (Cell{4, 4}));
  EXPECT_TRUE(s.has_key);
  EXPECT_EQ(s.steps_taken, 0);
  EXPECT_FALSE(s.prev_action.has_value());
  ASSERT_TRUE(obs.reward.has_value());
  EXPECT_FALSE(obs.has_key.has_value());

  g.n = 2;
  EXPECT_EQ(reset(g, 1).first.reward, (Cell{1, 1}));
}

TEST(GridEnv, RejectsInvalidConfigs) {
  GridConfig g;
  g.n = 1;
  EXPECT_THROW(g.validate(), ConfigError);
  g = {};
  g.sticky_prob = 1.0;
  EXPECT_THROW(g.validate(), ConfigError);
  g = {};
  g.key_location = Cell{5, 0};
  EXPECT_THROW(g.validate(), ConfigError);
  g = {};
  EXPECT_EQ(g.episode_cap(), 50);
}

TEST(GridEnv, RandomRewardIsUniformOverNonStartCells) {
  GridConfig g;
  g.reward_mode = RewardMode::kRandomPerEpisode;
  std::map<std::pair<int, int>, int> counts;
  const int trials = 10000;
  for (int i = 0; i < trials; ++i) {
    const Cell r = reset(g, static_cast<std::uint64_t>(i) * 7919 + 3).first.reward;
    ++counts[{r.x, r.y}];
  }
  EXPECT_EQ(counts.count({0, 0}), 0u);
  EXPECT_EQ(counts.size(), 24u);
  for (const auto& [cell, c] : counts) {
    EXPECT_NEAR(c / static_cast<double>(trials), 1.0 / 24.0, 0.015);
  }
}

TEST(GridEnv, BoundaryClampAndReward) {
  GridConfig g;
  Rng rng(1);
  auto [s, obs] = reset(g, 1);
  auto [s1, r1] = step(s, Action::kDown, g, rng);
  EXPECT_EQ(s1.agent, (Cell{0, 0}));
  EXPECT_EQ(r1.reward, 0);

  GridState near = s;
  near.agent = {4, 3};
  auto [s2, r2] = step(near, Action::kUp, g, rng);
  EXPECT_EQ(s2.agent, (Cell{4, 4}));
  EXPECT_EQ(r2.reward, 1);
  EXPECT_TRUE(r2.terminated);
  EXPECT_FALSE(r2.truncated);
  EXPECT_THROW(step(s2, Action::kUp, g, rng), UsageError);
}

TEST(GridEnv, StickyActionFrequency) {
  GridConfig g;
  g.sticky_prob = 0.8;
  GridState s = reset(g, 0).first;
  s.agent = {1, 0};
  s.prev_action = Action::kRight;
  Rng rng(2024);
  int right = 0, up = 0;
  const int trials = 10000;
  for (int i = 0; i < trials; ++i) {
    const Cell c = step(s, Action::kUp, g, rng).first.agent;
    if (c == Cell{2, 0}) ++right;
    if (c == Cell{1, 1}) ++up;
  }
  EXPECT_EQ(right + up, trials);
  EXPECT_NEAR(right / static_cast<double>(trials), 0.8, 0.012);
  EXPECT_NEAR(up / static_cast<double>(trials), 0.2, 0.012);
}

TEST(GridEnv, FirstStepIsNeverSticky) {
  GridConfig g;
  g.sticky_prob = 0.99;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(seed);
    auto [s, obs] = reset(g, seed);
    auto [s1, r] = step(s, Action::kRight, g, rng);
    EXPECT_EQ(s1.agent, (Cell{1, 0}));
    EXPECT_EQ(s1.prev_action, Action::kRight);
  }
}

TEST(GridEnv, EnumerationMatchesBruteForce) {
  for (int n : {2, 3, 5}) {
    GridConfig g;
    g.n = n;
    const auto got = enumerate_transitions(g);
    const auto want = oracle::brute_force_transitions(n);
    ASSERT_EQ(got.size(), want.size());
    ASSERT_EQ(got.size(), static_cast<size_t>(n * n * 4));
    for (size_t i = 0; i < got.size(); ++i) {
      EXPECT_EQ(got[i].from.x, want[i].fx);
      EXPECT_EQ(got[i].from.y, want[i].fy);
      EXPECT_EQ(to_string(got[i].action), want[i].action);
      EXPECT_EQ(got[i].to.x, want[i].tx);
      EXPECT_EQ(got[i].to.y, want[i].ty);
      EXPECT_EQ(got[i].reward, want[i].reward);
    }
  }
  GridConfig sticky;
  sticky.sticky_prob = 0.1;
  EXPECT_THROW(enumerate_transitions(sticky), ConfigError);
}

TEST(GridEnv, BoundsClampAndReversibilityProperties) {
  for (int n : {2, 4, 7}) {
    for (int y = 0; y < n; ++y) {
      for (int x = 0; x < n; ++x) {
        for (Action a : kAllActions) {
          const Cell c = apply_move({x, y}, a, n);
          EXPECT_TRUE(c.x >= 0 && c.y >= 0 && c.x < n && c.y < n);
          EXPECT_LE(std::abs(c.x - x) + std::abs(c.y - y), 1);
        }
        if (x > 0 && x < n - 1 && y > 0 && y < n - 1) {
          EXPECT_EQ(apply_move(apply_move({x, y}, Action::kUp, n), Action::kDown, n),
                    (Cell{x, y}));
          EXPECT_EQ(apply_move(apply_move({x, y}, Action::kLeft, n), Action::kRight, n),
                    (Cell{x, y}));
        }
      }
    }
  }
}

TEST(GridEnv, EpisodeTruncatesAtCap) {
  for (int n : {2, 3, 5}) {
    GridConfig g;
    g.n = n;
    GridWorld w(g);
    w.reset(3);
    int steps = 0;
    StepResult r;
    do {
      r = w.step(Action::kLeft);
      ++steps;
    } while (!r.done());
    EXPECT_TRUE(r.truncated);
    EXPECT_FALSE(r.terminated);
    EXPECT_EQ(steps, 2 * n * n);
  }
}

TEST(GridEnv, KeyGatesReward) {
  GridConfig g;
  g.key_location = Cell{0, 4};
  std::mt19937_64 pick(5);
  for (int episode = 0; episode < 200; ++episode) {
    GridWorld w(g);
    Observation obs = w.reset(static_cast<std::uint64_t>(episode));
    ASSERT_TRUE(obs.has_key.has_value());
    bool visited = false;
    StepResult r;
    do {
      r = w.step(kAllActions[pick() % 4]);
      if (r.observation.agent == Cell{0, 4}) visited = true;
      if (r.reward == 1) {
        EXPECT_TRUE(visited);
      }
    } while (!r.done());
  }
  GridWorld w(g);
  w.reset(0);
  for (int i = 0; i < 4; ++i) w.step(Action::kRight);
  for (int i = 0; i < 3; ++i) EXPECT_EQ(w.step(Action::kUp).reward, 0);
  EXPECT_EQ(w.step(Action::kUp).reward, 0);  // at [4,4] without the key
}

TEST(GridEnv, DeterministicReplay) {
  GridConfig g;
  g.sticky_prob = 0.3;
  g.reward_mode = RewardMode::kRandomPerEpisode;
  g.observe_reward = false;
  auto run = [&] {
    GridWorld w(g);
    std::vector<Cell> cells;
    w.reset(99);
    for (int i = 0; i < 30; ++i) {
      auto r = w.step(kAllActions[static_cast<size_t>(i * 7 % 4)]);
      cells.push_back(r.observation.agent);
      if (r.done()) break;
    }
    return cells;
  };
  EXPECT_EQ(run(), run());
}

TEST(GridEnv, ActionAndCellText) {
  EXPECT_EQ(format_cell({3, 4}), "[3, 4]");
  EXPECT_EQ(to_string(Action::kLeft), "left");
  EXPECT_EQ(parse_action("  RIGHT "), Action::kRight);
  EXPECT_FALSE(parse_action("north").has_value());
}
