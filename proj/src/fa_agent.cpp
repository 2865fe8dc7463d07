#include "gridfm/fa_agent.hpp"

#include <cstdio>
#include <sstream>

#include <nlohmann/json.hpp>

#include "gridfm/errors.hpp"
#include "gridfm/ppo.hpp"
#include "gridfm/seeding.hpp"

namespace gridfm {

void FaConfig::validate() const {
  if (temperature < 0.0) throw ConfigError("fa temperature must be >= 0");
  if (max_attempts < 1) throw ConfigError("fa max_attempts must be >= 1");
  if (max_memory_lines && *max_memory_lines == 0) {
    throw ConfigError("fa max_memory_lines must be positive when set");
  }
}

std::vector<std::string> MemoryLog::visible() const {
  if (!cap_ || lines_.size() <= *cap_) return lines_;
  return {lines_.end() - static_cast<std::ptrdiff_t>(*cap_), lines_.end()};
}

FaTurn fa_act(const FaConfig& config, ModelBackend& backend, int n,
              const std::string& reward_text, Cell observation,
              MemoryLog& memory, Rng& fallback_rng,
              const TemplateLibrary& templates) {
  const TemplateId id = template_for(config.strategy);
  const std::string prompt =
      render(templates.get(id),
             agent_binding(n, reward_text, observation, memory.visible()));
  BackendRequest req{backend.model_id(), prompt, config.temperature,
                     config.max_tokens, true};
  FaTurn turn;
  std::string last_error;
  for (int attempt = 0; attempt < config.max_attempts; ++attempt) {
    req.use_cache = attempt == 0;
    turn.responses.push_back(backend.complete(req).text);
    try {
      ParsedAgentTurn parsed = parse_agent_turn(turn.responses.back(), config.strategy);
      turn.action = parsed.action;
      turn.plan = std::move(parsed.plan);
      if (config.strategy != FaStrategy::kAO) {
        memory.append(build_plan_line(turn.plan.value_or("")));
      }
      return turn;
    } catch (const ParseError& e) {
      last_error = e.what();
    }
  }
  if (config.fallback == FallbackPolicy::kAbort) {
    throw ParseError("agent response unusable after " +
                         std::to_string(config.max_attempts) +
                         " attempts: " + last_error,
                     turn.responses.back());
  }
  std::uniform_int_distribution<int> pick(0, kNumActions - 1);
  turn.action = kAllActions[pick(fallback_rng)];
  turn.fallback = true;
  if (config.strategy != FaStrategy::kAO) {
    memory.append(build_plan_line("none"));
  }
  return turn;
}

std::string EpisodeRecord::to_json() const {
  nlohmann::json j;
  j["seed"] = seed;
  j["success"] = success;
  j["steps_used"] = steps_used;
  j["faults"] = faults;
  auto& traj = j["trajectory"] = nlohmann::json::array();
  for (Cell c : trajectory) traj.push_back(format_cell(c));
  auto& acts = j["actions"] = nlohmann::json::array();
  for (Action a : actions) acts.push_back(std::string(to_string(a)));
  j["responses"] = responses;
  j["memory"] = memory;
  j["error"] = error ? nlohmann::json(*error) : nlohmann::json(nullptr);
  return j.dump();
}

EpisodeRecord fa_run_episode(const FaConfig& config, ModelBackend& backend,
                             World& env, std::uint64_t seed,
                             const TemplateLibrary& templates) {
  config.validate();
  EpisodeRecord rec;
  rec.seed = seed;
  MemoryLog memory(config.max_memory_lines);
  Rng fallback_rng(derive_seed(seed, {0xfa}));
  try {
    Observation obs = env.reset(seed);
    const int n = env.grid().n;
    rec.trajectory.push_back(obs.agent);
    for (;;) {
      const std::string reward_text =
          obs.reward ? format_cell(*obs.reward) : config.hidden_reward_text;
      FaTurn turn = fa_act(config, backend, n, reward_text, obs.agent, memory,
                           fallback_rng, templates);
      rec.faults += turn.fallback ? 1 : 0;
      rec.responses.push_back(std::move(turn.responses));
      const StepResult res = env.step(turn.action);
      memory.append(build_memory_line(turn.action, obs.agent,
                                      res.observation.agent, res.reward));
      rec.actions.push_back(turn.action);
      rec.trajectory.push_back(res.observation.agent);
      ++rec.steps_used;
      obs = res.observation;
      if (res.done()) {
        rec.success = res.reward == 1;
        break;
      }
    }
  } catch (const std::exception& e) {
    rec.success = false;
    rec.error = e.what();
  }
  rec.memory = memory.lines();
  return rec;
}

std::string BenchmarkResult::records_jsonl() const {
  std::string out;
  for (const EpisodeRecord& r : records) {
    out += r.to_json();
    out += '\n';
  }
  return out;
}

BenchmarkResult fa_benchmark(const FaConfig& config, ModelBackend& backend,
                             const EnvFactory& env_factory, int episodes,
                             std::uint64_t root_seed, int workers,
                             const TemplateLibrary& templates) {
  config.validate();
  if (episodes < 1) throw ConfigError("benchmark needs at least one episode");
  BenchmarkResult out;
  out.episodes = episodes;
  out.records.resize(episodes);
  run_jobs(static_cast<std::size_t>(episodes), workers, [&](std::size_t i) {
    const std::uint64_t seed = derive_seed(root_seed, {i});
    try {
      auto env = env_factory();
      out.records[i] = fa_run_episode(config, backend, *env, seed, templates);
    } catch (const std::exception& e) {
      out.records[i].seed = seed;
      out.records[i].error = e.what();
    }
  });
  double steps = 0.0;
  int successes = 0;
  for (const EpisodeRecord& r : out.records) {
    successes += r.success ? 1 : 0;
    steps += r.steps_used;
    out.faults += r.faults;
    out.errors += r.error ? 1 : 0;
  }
  out.success_rate = static_cast<double>(successes) / episodes;
  out.mean_steps = steps / episodes;
  return out;
}

std::string fa_summary_csv(const std::vector<FaSummaryRow>& rows) {
  std::ostringstream out;
  out << "model,strategy,fixed_reward_pct,random_reward_pct\n";
  auto pct = [](const std::optional<double>& v) {
    if (!v) return std::string();
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.1f", *v);
    return std::string(buf);
  };
  for (const FaSummaryRow& r : rows) {
    std::string model = r.model;
    if (model.find_first_of(",\"\n") != std::string::npos) {
      std::string quoted = "\"";
      for (char c : model) quoted += c == '"' ? std::string("\"\"") : std::string(1, c);
      model = quoted + "\"";
    }
    out << model << ',' << strategy_name(r.strategy) << ','
        << pct(r.fixed_reward_pct) << ',' << pct(r.random_reward_pct) << '\n';
  }
  return out.str();
}

}  // namespace gridfm
