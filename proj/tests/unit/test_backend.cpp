#include <gtest/gtest.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <thread>

#include <httplib.h>

#include "gridfm/backend.hpp"
#include "gridfm/errors.hpp"
#include "gridfm/prompt.hpp"

using namespace gridfm;

namespace {

std::filesystem::path temp_file(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "gridfm_unit";
  std::filesystem::create_directories(dir);
  auto p = dir / name;
  std::filesystem::remove(p);
  return p;
}

std::string transition_prompt(Cell c, Action a, TemplateId id = TemplateId::kT) {
  return render(TemplateLibrary::builtin().get(id),
                transition_binding(5, c, a, Cell{4, 4}));
}

class CountingBackend : public ModelBackend {
 public:
  BackendResponse complete(const BackendRequest& r) override {
    ++calls;
    return {"echo:" + r.prompt, {}, false};
  }
  std::string model_id() const override { return "counting"; }
  int calls = 0;
};

}  // namespace

TEST(Backend, Sha256KnownVector) {
  EXPECT_EQ(sha256_hex("abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  EXPECT_NE(cache_key("m", "p", 0.0), cache_key("m", "p", 1.8));
  EXPECT_NE(cache_key("m", "p", 0.0), cache_key("m2", "p", 0.0));
}

TEST(Backend, RequestValidation) {
  BackendRequest r{"m", "p", -0.1, 10, true};
  EXPECT_THROW(r.validate(), UsageError);
  r = {"m", "p", 0.0, 0, true};
  EXPECT_THROW(r.validate(), UsageError);
  r = {"m", "", 0.0, 8, true};
  EXPECT_THROW(r.validate(), UsageError);
  r = {"m", "p", 2.0, 8, true};
  EXPECT_NO_THROW(r.validate());
}

TEST(Backend, CacheHitsOnlyAtTemperatureZero) {
  auto inner = std::make_shared<CountingBackend>();
  CachedBackend cached(inner, std::make_shared<ResponseCache>());
  BackendRequest r{"counting", "hello", 0.0, 16, true};
  EXPECT_EQ(cached.complete(r).text, "echo:hello");
  const auto again = cached.complete(r);
  EXPECT_TRUE(again.cached);
  EXPECT_EQ(again.text, "echo:hello");
  EXPECT_EQ(inner->calls, 1);

  r.temperature = 1.8;
  cached.complete(r);
  cached.complete(r);
  EXPECT_EQ(inner->calls, 3);

  r.temperature = 0.0;
  r.use_cache = false;
  cached.complete(r);
  EXPECT_EQ(inner->calls, 4);
}

TEST(Backend, FileCachePersistsAndSurvivesTornTail) {
  const auto path = temp_file("cache.bin");
  {
    ResponseCache cache(path);
    cache.put(std::string(64, 'a'), "first\nline");
    cache.put(std::string(64, 'b'), "second");
    cache.put(std::string(64, 'a'), "replaced");
  }
  {
    std::ofstream out(path, std::ios::binary | std::ios::app);
    out << std::string(64, 'c') << " 100 trunc";
  }
  ResponseCache reloaded(path);
  EXPECT_EQ(reloaded.size(), 2u);
  EXPECT_EQ(reloaded.get(std::string(64, 'a')), "replaced");
  EXPECT_EQ(reloaded.get(std::string(64, 'b')), "second");
  EXPECT_FALSE(reloaded.get(std::string(64, 'c')).has_value());
}

TEST(Backend, OracleMockAnswersTransitions) {
  OracleMock mock(1);
  for (TemplateId id : kTransitionTemplateIds) {
    const auto resp = mock.complete({"oracle-mock", transition_prompt({4, 3}, Action::kUp, id), 0.0, 64, true});
    const auto parsed = parse_transition(resp.text, includes_reward(id));
    EXPECT_EQ(parsed.next_cell, (Cell{4, 4}));
    if (includes_reward(id)) EXPECT_EQ(parsed.reward, 1);
  }
  const auto clamp = mock.complete({"oracle-mock", transition_prompt({0, 0}, Action::kLeft), 0.0, 64, true});
  EXPECT_EQ(parse_transition(clamp.text, false).next_cell, (Cell{0, 0}));
}

TEST(Backend, OracleMockSamplesUniformLocationsAndBernoulli) {
  OracleMock mock(2);
  const std::string loc = render(TemplateLibrary::builtin().get(TemplateId::kRewardSample),
                                 reward_sample_binding(5));
  std::map<std::pair<int, int>, int> seen;
  for (int i = 0; i < 2000; ++i) {
    const Cell c = parse_location(mock.complete({"m", loc, kSamplingTemperature, 64, true}).text);
    ASSERT_TRUE(c.x >= 0 && c.x < 5 && c.y >= 0 && c.y < 5);
    ++seen[{c.x, c.y}];
  }
  EXPECT_EQ(seen.size(), 25u);
  const std::string sticky = render(TemplateLibrary::builtin().get(TemplateId::kStickySample),
                                    sticky_sample_binding(0.7));
  int ones = 0;
  for (int i = 0; i < 4000; ++i) {
    ones += parse_binary_outcome(mock.complete({"m", sticky, kSamplingTemperature, 8, true}).text);
  }
  EXPECT_NEAR(ones / 4000.0, 0.7, 0.03);
}

TEST(Backend, NoisyMockIsConsistentAndNearItsRate) {
  NoisyMock noisy(0.1, ErrorModel::kClamp, 9);
  int corrupted = 0, total = 0;
  for (int y = 0; y < 16; ++y) {
    for (int x = 0; x < 16; ++x) {
      for (Action a : kAllActions) {
        const std::string p = render(TemplateLibrary::builtin().get(TemplateId::kT),
                                     transition_binding(16, {x, y}, a, Cell{15, 15}));
        const auto r1 = noisy.complete({"noisy-mock", p, 0.0, 64, true}).text;
        EXPECT_EQ(r1, noisy.complete({"noisy-mock", p, 0.0, 64, true}).text);
        corrupted += noisy.corrupts(p);
        ++total;
      }
    }
  }
  EXPECT_NEAR(corrupted / static_cast<double>(total), 0.1, 0.03);
}

TEST(Backend, NoisyErrorModels) {
  // The rate must stay below 1; at this value a miss on a single draw is
  // vanishingly unlikely and the seed is fixed anyway.
  constexpr double kAlmostAlways = 1.0 - 1e-12;
  EXPECT_THROW(NoisyMock(1.0, ErrorModel::kClamp, 0), ConfigError);
  const std::string interior = transition_prompt({2, 2}, Action::kLeft);
  const std::string edge_ok = transition_prompt({0, 2}, Action::kLeft);
  const std::string edge = transition_prompt({1, 4}, Action::kLeft);
  NoisyMock clamp(kAlmostAlways, ErrorModel::kClamp, 0);
  EXPECT_EQ(parse_transition(clamp.complete({"m", interior, 0.0, 64, true}).text, false).next_cell,
            (Cell{2, 2}));
  // A clamp "error" on a move that really is blocked is still the right answer.
  EXPECT_EQ(parse_transition(clamp.complete({"m", edge_ok, 0.0, 64, true}).text, false).next_cell,
            (Cell{0, 2}));
  NoisyMock edge_clamp(kAlmostAlways, ErrorModel::kEdgeClamp, 0);
  EXPECT_EQ(parse_transition(edge_clamp.complete({"m", interior, 0.0, 64, true}).text, false).next_cell,
            (Cell{1, 2}));
  EXPECT_EQ(parse_transition(edge_clamp.complete({"m", edge, 0.0, 64, true}).text, false).next_cell,
            (Cell{1, 4}));
  NoisyMock wrong_axis(kAlmostAlways, ErrorModel::kWrongAxis, 0);
  const Cell c = parse_transition(wrong_axis.complete({"m", interior, 0.0, 64, true}).text, false).next_cell;
  EXPECT_EQ(c.x, 2);
  EXPECT_NE(c.y, 2);
}

TEST(Backend, DistributionAndScriptedMocks) {
  DistributionMock dist({"[0, 0]", "[1, 1]"}, {0.0, 1.0}, 3);
  for (int i = 0; i < 20; ++i) EXPECT_EQ(dist.complete({"m", "x", 1.8, 8, true}).text, "[1, 1]");
  EXPECT_THROW(DistributionMock({"a"}, {-1.0}, 0), ConfigError);

  ScriptedMock seq({"a", "b"});
  EXPECT_EQ(seq.complete({"m", "x", 0.0, 8, true}).text, "a");
  EXPECT_EQ(seq.complete({"m", "x", 0.0, 8, true}).text, "b");
  EXPECT_EQ(seq.complete({"m", "x", 0.0, 8, true}).text, "a");

  ScriptedMock step({"s0", "s1", "s2"}, ScriptIndexing::kMemoryStep);
  EXPECT_EQ(step.complete({"m", "no memory", 0.0, 8, true}).text, "s0");
  EXPECT_EQ(step.complete({"m", "Executed up ...\nExecuted left ...", 0.0, 8, true}).text, "s2");
}

TEST(Backend, RetryBackoffSchedule) {
  RetryPolicy p;
  p.initial_backoff = std::chrono::milliseconds(100);
  p.max_backoff = std::chrono::milliseconds(350);
  EXPECT_EQ(p.backoff_for(0).count(), 100);
  EXPECT_EQ(p.backoff_for(1).count(), 200);
  EXPECT_EQ(p.backoff_for(2).count(), 350);
}

TEST(Backend, HttpAdapterRetriesTransientFailures) {
  httplib::Server server;
  std::atomic<int> hits{0};
  std::string auth;
  server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    if (++hits < 3) {
      res.status = hits == 1 ? 429 : 503;
      res.set_header("Retry-After", "0.25");
      return;
    }
    auth = req.get_header_value("Authorization");
    res.set_content(R"({"choices":[{"message":{"content":"[1, 0]"}}]})", "application/json");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread t([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  ::setenv("GRIDFM_TEST_KEY", "sekret", 1);
  HttpBackendConfig cfg;
  cfg.base_url = "http://127.0.0.1:" + std::to_string(port);
  cfg.model = "test-model";
  cfg.api_key_env = "GRIDFM_TEST_KEY";
  cfg.retry.initial_backoff = std::chrono::milliseconds(10);
  std::vector<std::chrono::milliseconds> sleeps;
  HttpChatBackend backend(cfg, [&](std::chrono::milliseconds d) { sleeps.push_back(d); });
  const auto r = backend.complete({"test-model", "prompt", 0.0, 16, true});
  EXPECT_EQ(r.text, "[1, 0]");
  EXPECT_EQ(hits.load(), 3);
  EXPECT_EQ(auth, "Bearer sekret");
  ASSERT_EQ(sleeps.size(), 2u);
  EXPECT_EQ(sleeps[0].count(), 250);  // server hint beats the 10 ms backoff

  server.Post("/bad", [](const httplib::Request&, httplib::Response& res) { res.status = 400; });
  cfg.path = "/bad";
  HttpChatBackend rejecting(cfg, [](std::chrono::milliseconds) {});
  EXPECT_THROW(rejecting.complete({"test-model", "prompt", 0.0, 16, true}), BackendError);

  server.stop();
  t.join();
}

TEST(Backend, HttpAdapterGivesUpAfterMaxAttempts) {
  httplib::Server server;
  std::atomic<int> hits{0};
  server.Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
    ++hits;
    res.status = 500;
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread t([&] { server.listen_after_bind(); });
  server.wait_until_ready();
  HttpBackendConfig cfg;
  cfg.base_url = "http://127.0.0.1:" + std::to_string(port);
  cfg.model = "m";
  cfg.retry.max_attempts = 4;
  HttpChatBackend backend(cfg, [](std::chrono::milliseconds) {});
  EXPECT_THROW(backend.complete({"m", "p", 0.0, 16, true}), BackendError);
  EXPECT_EQ(hits.load(), 4);
  server.stop();
  t.join();
}

TEST(Backend, ExtractContent) {
  EXPECT_EQ(HttpChatBackend::extract_content(R"({"choices":[{"message":{"content":"hi"}}]})"), "hi");
  EXPECT_THROW(HttpChatBackend::extract_content("{}"), BackendError);
  EXPECT_THROW(HttpChatBackend::extract_content("not json"), BackendError);
}
