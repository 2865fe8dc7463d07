#include <gtest/gtest.h>

#include <map>

#include "gridfm/errors.hpp"
#include "gridfm/fwm.hpp"

using namespace gridfm;

namespace {

FwmConfig deterministic(TemplateId id = TemplateId::kTPlusR) {
  FwmConfig c;
  c.transition_template = id;
  c.reward_source = includes_reward(id) ? RewardSource::kFromTemplateR
                                        : RewardSource::kOracleReward;
  return c;
}

}  // namespace

TEST(Fwm, OracleBackedModelMatchesTrueEnvironment) {
  for (TemplateId id : kTransitionTemplateIds) {
    FoundationWorldModel fwm(deterministic(id), std::make_shared<OracleMock>(1));
    GridWorld truth(fwm.grid());
    std::mt19937_64 pick(11);
    for (int episode = 0; episode < 10; ++episode) {
      EXPECT_EQ(fwm.reset(episode), truth.reset(episode));
      for (;;) {
        const Action a = kAllActions[pick() % 4];
        const StepResult sim = fwm.step(a);
        const StepResult real = truth.step(a);
        EXPECT_EQ(sim.observation, real.observation);
        EXPECT_EQ(sim.reward, real.reward);
        EXPECT_EQ(sim.terminated, real.terminated);
        EXPECT_EQ(sim.truncated, real.truncated);
        if (real.done()) break;
      }
    }
    EXPECT_EQ(fwm.fault_count(), 0u);
  }
}

TEST(Fwm, ParseFailureKeepsBeliefAndIsRecorded) {
  auto script = std::make_shared<ScriptedMock>(std::vector<std::string>{"no idea"});
  FwmConfig c = deterministic();
  c.parse_retries = 2;
  FoundationWorldModel fwm(c, script);
  std::vector<FwmStepRecord> records;
  fwm.set_transcript_sink([&](const FwmStepRecord& r) { records.push_back(r); });
  fwm.reset(0);
  const StepResult r = fwm.step(Action::kUp);
  EXPECT_EQ(r.observation.agent, (Cell{0, 0}));
  EXPECT_EQ(r.reward, 0);
  EXPECT_EQ(script->calls(), 3u);
  ASSERT_EQ(records.size(), 1u);
  EXPECT_EQ(records[0].faults, std::vector<std::string>{"parse_failure"});
  EXPECT_EQ(records[0].prompt_digest.size(), 64u);
  EXPECT_NE(records[0].to_json().find("parse_failure"), std::string::npos);
}

TEST(Fwm, RetryRecoversFromOneBadAnswer) {
  auto script = std::make_shared<ScriptedMock>(std::vector<std::string>{"hmm", "[0, 1], 0"});
  FoundationWorldModel fwm(deterministic(), script);
  fwm.reset(0);
  EXPECT_EQ(fwm.step(Action::kUp).observation.agent, (Cell{0, 1}));
  EXPECT_EQ(fwm.fault_count(), 0u);
}

TEST(Fwm, OutOfBoundsPredictionIsClamped) {
  auto script = std::make_shared<ScriptedMock>(std::vector<std::string>{"[-1, 7], 0"});
  FoundationWorldModel fwm(deterministic(), script);
  fwm.reset(0);
  EXPECT_EQ(fwm.step(Action::kLeft).observation.agent, (Cell{0, 4}));
  EXPECT_EQ(fwm.fault_count(), 1u);
}

TEST(Fwm, OracleRewardSourceIgnoresModelReward) {
  auto script = std::make_shared<ScriptedMock>(std::vector<std::string>{"[0, 1], 1"});
  FwmConfig c = deterministic();
  c.reward_source = RewardSource::kOracleReward;
  FoundationWorldModel fwm(c, script);
  fwm.reset(0);
  const StepResult r = fwm.step(Action::kUp);
  EXPECT_EQ(r.reward, 0);
  EXPECT_FALSE(r.terminated);
}

TEST(Fwm, StepAfterEpisodeEndIsUsageError) {
  auto script = std::make_shared<ScriptedMock>(std::vector<std::string>{"[4, 4], 1"});
  FoundationWorldModel fwm(deterministic(), script);
  EXPECT_THROW(fwm.step(Action::kUp), UsageError);
  fwm.reset(0);
  EXPECT_TRUE(fwm.step(Action::kUp).terminated);
  EXPECT_THROW(fwm.step(Action::kUp), UsageError);
}

TEST(Fwm, StochasticRewardComesFromTheSampler) {
  FwmConfig c = deterministic();
  c.grid.reward_mode = RewardMode::kRandomPerEpisode;
  c.grid.observe_reward = false;
  c.stochastic_reward = true;
  FoundationWorldModel fwm(c, std::make_shared<OracleMock>(3));
  fwm.set_reward_sampler(std::make_shared<DistributionMock>(
      std::vector<std::string>{"[2, 3]"}, std::vector<double>{1.0}, 0));
  const Observation obs = fwm.reset(5);
  EXPECT_FALSE(obs.reward.has_value());
  EXPECT_EQ(fwm.state().sampled_reward, (Cell{2, 3}));
}

TEST(Fwm, UniformSamplerCoversTheGrid) {
  FwmConfig c = deterministic();
  c.grid.reward_mode = RewardMode::kRandomPerEpisode;
  c.stochastic_reward = true;
  FoundationWorldModel fwm(c, std::make_shared<OracleMock>(3));
  fwm.set_reward_sampler(std::shared_ptr<ModelBackend>(DistributionMock::uniform_grid(5, 8)));
  std::map<std::pair<int, int>, int> seen;
  for (int i = 0; i < 1000; ++i) {
    fwm.reset(static_cast<std::uint64_t>(i));
    ++seen[{fwm.state().sampled_reward.x, fwm.state().sampled_reward.y}];
  }
  EXPECT_EQ(seen.size(), 25u);
}

TEST(Fwm, UnusableSamplesFallBackInsideTheGrid) {
  FwmConfig c = deterministic();
  c.grid.reward_mode = RewardMode::kRandomPerEpisode;
  c.stochastic_reward = true;
  FoundationWorldModel fwm(c, std::make_shared<OracleMock>(3));
  fwm.set_reward_sampler(std::make_shared<DistributionMock>(
      std::vector<std::string>{"[9, 9]", "gibberish"}, std::vector<double>{1.0, 1.0}, 0));
  std::vector<FwmStepRecord> records;
  fwm.set_transcript_sink([&](const FwmStepRecord& r) { records.push_back(r); });
  for (int i = 0; i < 20; ++i) {
    fwm.reset(static_cast<std::uint64_t>(i));
    EXPECT_TRUE(fwm.grid().in_bounds(fwm.state().sampled_reward));
  }
  ASSERT_FALSE(records.empty());
  EXPECT_EQ(records[0].faults.back(), "reward_fallback");
}

TEST(Fwm, ConfigValidation) {
  FwmConfig c = deterministic(TemplateId::kT);
  c.reward_source = RewardSource::kFromTemplateR;
  EXPECT_THROW(c.validate(), ConfigError);
  c = deterministic();
  c.transition_template = TemplateId::kRewardSample;
  EXPECT_THROW(c.validate(), ConfigError);
}
