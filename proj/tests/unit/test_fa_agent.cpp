#include <gtest/gtest.h>

#include <nlohmann/json.hpp>

#include "gridfm/errors.hpp"
#include "gridfm/fa_agent.hpp"

using namespace gridfm;

namespace {

std::vector<std::string> json_actions(const std::vector<std::string>& words) {
  std::vector<std::string> out;
  for (const auto& w : words) out.push_back("{\"action\": \"" + w + "\"}");
  return out;
}

EnvFactory fixed_env() {
  return [] { return std::make_unique<GridWorld>(GridConfig{}); };
}

}  // namespace

TEST(FaAgent, ScriptedOptimalReachesRewardInEightSteps) {
  ScriptedMock script(json_actions({"up", "up", "up", "up", "right", "right", "right", "right"}),
                      ScriptIndexing::kMemoryStep);
  const BenchmarkResult r = fa_benchmark(FaConfig{}, script, fixed_env(), 10, 1);
  EXPECT_DOUBLE_EQ(r.success_rate, 1.0);
  for (const auto& rec : r.records) {
    EXPECT_EQ(rec.steps_used, 8);
    EXPECT_EQ(rec.trajectory.size(), 9u);
    EXPECT_EQ(rec.trajectory.back(), (Cell{4, 4}));
    EXPECT_EQ(rec.memory.size(), 8u);
  }
}

TEST(FaAgent, AlwaysUpNeverSucceeds) {
  ScriptedMock script(json_actions({"up"}));
  const BenchmarkResult r = fa_benchmark(FaConfig{}, script, fixed_env(), 5, 1);
  EXPECT_DOUBLE_EQ(r.success_rate, 0.0);
  for (const auto& rec : r.records) EXPECT_EQ(rec.steps_used, 50);
}

TEST(FaAgent, RewardTextHiddenWhenUnobserved) {
  struct Spy : ModelBackend {
    BackendResponse complete(const BackendRequest& r) override {
      prompts.push_back(r.prompt);
      return {"{\"action\": \"up\"}", {}, false};
    }
    std::string model_id() const override { return "spy"; }
    std::vector<std::string> prompts;
  } spy;
  GridConfig g;
  g.reward_mode = RewardMode::kRandomPerEpisode;
  g.observe_reward = false;
  g.max_steps = 2;
  GridWorld env(g);
  fa_run_episode(FaConfig{}, spy, env, 4);
  ASSERT_FALSE(spy.prompts.empty());
  EXPECT_NE(spy.prompts[0].find("a random coordinate"), std::string::npos);

  spy.prompts.clear();
  GridConfig fixed;
  fixed.max_steps = 2;
  GridWorld env2(fixed);
  fa_run_episode(FaConfig{}, spy, env2, 4);
  EXPECT_NE(spy.prompts[0].find("[4, 4]"), std::string::npos);
  EXPECT_EQ(spy.prompts[0].find("a random coordinate"), std::string::npos);
}

TEST(FaAgent, PlanLinesAreAppendedForPlanningStrategies) {
  ScriptedMock script({R"({"plan": "head up then right", "action": "up"})"});
  FaConfig cfg;
  cfg.strategy = FaStrategy::kSP;
  MemoryLog memory;
  Rng rng(1);
  const FaTurn t = fa_act(cfg, script, 5, "[4, 4]", {0, 0}, memory, rng);
  EXPECT_EQ(t.action, Action::kUp);
  ASSERT_EQ(memory.lines().size(), 1u);
  EXPECT_EQ(memory.lines()[0], build_plan_line("head up then right"));
}

TEST(FaAgent, FallbackAfterRepeatedParseFailures) {
  ScriptedMock script({"I would rather not"});
  FaConfig cfg;
  cfg.strategy = FaStrategy::kFP;
  MemoryLog memory;
  Rng rng(1);
  const FaTurn t = fa_act(cfg, script, 5, "[4, 4]", {0, 0}, memory, rng);
  EXPECT_TRUE(t.fallback);
  EXPECT_EQ(t.responses.size(), 3u);
  EXPECT_EQ(script.calls(), 3u);
  ASSERT_EQ(memory.lines().size(), 1u);
  EXPECT_NE(memory.lines()[0].find("none"), std::string::npos);

  cfg.fallback = FallbackPolicy::kAbort;
  EXPECT_THROW(fa_act(cfg, script, 5, "[4, 4]", {0, 0}, memory, rng), ParseError);
}

TEST(FaAgent, AbortedEpisodeRecordsError) {
  ScriptedMock script({"???"});
  FaConfig cfg;
  cfg.fallback = FallbackPolicy::kAbort;
  const BenchmarkResult r = fa_benchmark(cfg, script, fixed_env(), 3, 1);
  EXPECT_EQ(r.errors, 3);
  EXPECT_DOUBLE_EQ(r.success_rate, 0.0);
  ASSERT_TRUE(r.records[0].error.has_value());
  const auto j = nlohmann::json::parse(r.records[0].to_json());
  EXPECT_TRUE(j.contains("error"));
}

TEST(FaAgent, MemoryWindow) {
  MemoryLog log(2);
  for (int i = 0; i < 5; ++i) log.append("line " + std::to_string(i));
  EXPECT_EQ(log.visible(), (std::vector<std::string>{"line 3", "line 4"}));
  EXPECT_EQ(log.lines().size(), 5u);
}

TEST(FaAgent, BenchmarkIsDeterministicAcrossWorkerCounts) {
  ScriptedMock a({"garbage"});
  ScriptedMock b({"garbage"});
  GridConfig g;
  g.reward_mode = RewardMode::kRandomPerEpisode;
  g.observe_reward = false;
  auto env = [g] { return std::make_unique<GridWorld>(g); };
  const auto r1 = fa_benchmark(FaConfig{}, a, env, 12, 5, 1);
  const auto r2 = fa_benchmark(FaConfig{}, b, env, 12, 5, 4);
  EXPECT_EQ(r1.records_jsonl(), r2.records_jsonl());
}

TEST(FaAgent, SummaryCsv) {
  const std::string csv = fa_summary_csv({{"m", FaStrategy::kSP, 100.0, std::nullopt}});
  EXPECT_EQ(csv, "model,strategy,fixed_reward_pct,random_reward_pct\nm,SP,100.0,\n");
}
