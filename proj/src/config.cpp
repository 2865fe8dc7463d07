#include "gridfm/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "gridfm/errors.hpp"
#include "gridfm/seeding.hpp"

namespace gridfm {
namespace {

using nlohmann::json;

// Walks one JSON object, remembering which keys were read so leftovers can be
// reported as unknown.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail("", "expected an object");
  }

  [[noreturn]] void fail(const std::string& key, const std::string& msg) const {
    throw ConfigError("config " + where(key) + ": " + msg);
  }

  std::string where(const std::string& key) const {
    if (key.empty()) return path_.empty() ? "<root>" : path_;
    return path_.empty() ? key : path_ + "." + key;
  }

  const json* find(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end() || it->is_null()) return nullptr;
    return &*it;
  }

  const json& require(const std::string& key) {
    const json* v = find(key);
    if (!v) fail(key, "missing required key");
    return *v;
  }

  template <typename T>
  std::optional<T> opt(const std::string& key) {
    const json* v = find(key);
    if (!v) return std::nullopt;
    return as<T>(*v, key);
  }

  template <typename T>
  T get(const std::string& key, T fallback) {
    return opt<T>(key).value_or(fallback);
  }

  template <typename T>
  T as(const json& v, const std::string& key) const {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) fail(key, "expected a boolean");
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) fail(key, "expected an integer");
      if constexpr (std::is_unsigned_v<T>) {
        if (v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0) {
          fail(key, "expected a non-negative integer");
        }
      }
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) fail(key, "expected a number");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) fail(key, "expected a string");
    }
    return v.get<T>();
  }

  template <typename T>
  std::optional<std::vector<T>> opt_list(const std::string& key) {
    const json* v = find(key);
    if (!v) return std::nullopt;
    if (!v->is_array()) fail(key, "expected an array");
    std::vector<T> out;
    for (const json& e : *v) out.push_back(as<T>(e, key + "[]"));
    return out;
  }

  std::optional<Reader> child(const std::string& key) {
    const json* v = find(key);
    if (!v) return std::nullopt;
    return Reader(*v, where(key));
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) fail(it.key(), "unknown key");
    }
  }

  const std::string& path() const { return path_; }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

Cell read_cell(Reader& r, const std::string& key, const json& v) {
  if (!v.is_array() || v.size() != 2 || !v[0].is_number_integer() ||
      !v[1].is_number_integer()) {
    r.fail(key, "expected [x, y]");
  }
  return {v[0].get<int>(), v[1].get<int>()};
}

GridConfig read_grid(Reader r) {
  GridConfig g;
  g.n = r.get<int>("n", 5);
  const std::string mode = r.get<std::string>("reward_mode", "fixed_top_right");
  if (mode == "fixed_top_right") {
    g.reward_mode = RewardMode::kFixedTopRight;
  } else if (mode == "random_per_episode") {
    g.reward_mode = RewardMode::kRandomPerEpisode;
  } else {
    r.fail("reward_mode", "expected fixed_top_right or random_per_episode");
  }
  g.observe_reward = r.get<bool>("observe_reward",
                                 g.reward_mode == RewardMode::kFixedTopRight);
  if (const json* k = r.find("key_location")) g.key_location = read_cell(r, "key_location", *k);
  g.sticky_prob = r.get<double>("sticky_prob", 0.0);
  g.max_steps = r.opt<int>("max_steps");
  r.finish();
  try {
    g.validate();
  } catch (const ConfigError& e) {
    r.fail("", e.what());
  }
  return g;
}

TemplateId read_template(Reader& r, const std::string& key, const std::string& name) {
  auto id = parse_template_id(name);
  if (!id) r.fail(key, "unknown template '" + name + "'");
  return *id;
}

BackendSpec read_backend(Reader r) {
  BackendSpec b;
  b.kind = r.require("kind").is_string() ? r.require("kind").get<std::string>()
                                         : (r.fail("kind", "expected a string"), "");
  b.seed = r.opt<std::uint64_t>("seed");
  if (b.kind == "oracle_mock") {
  } else if (b.kind == "noisy_mock") {
    b.error_rate = r.get<double>("error_rate", 0.1);
    if (!(b.error_rate >= 0.0 && b.error_rate < 1.0)) {
      r.fail("error_rate", "must be in [0,1)");
    }
    const std::string model = r.get<std::string>("error_model", "edge_clamp");
    auto m = parse_error_model(model);
    if (!m) r.fail("error_model", "expected clamp, edge_clamp or wrong_axis");
    b.error_model = *m;
  } else if (b.kind == "distribution_mock") {
    b.answers = r.opt_list<std::string>("answers").value_or(std::vector<std::string>{});
    b.weights = r.opt_list<double>("weights").value_or(std::vector<double>{});
    if (b.answers.empty()) r.fail("answers", "needs at least one answer");
    if (b.weights.empty()) b.weights.assign(b.answers.size(), 1.0);
    if (b.weights.size() != b.answers.size()) {
      r.fail("weights", "must match answers in length");
    }
  } else if (b.kind == "uniform_grid_mock") {
    b.grid_n = r.get<int>("n", 5);
    if (b.grid_n < 2) r.fail("n", "must be >= 2");
  } else if (b.kind == "scripted_mock") {
    b.responses = r.opt_list<std::string>("responses").value_or(std::vector<std::string>{});
    if (b.responses.empty()) r.fail("responses", "needs at least one response");
    const std::string idx = r.get<std::string>("indexing", "sequential");
    if (idx == "sequential") {
      b.indexing = ScriptIndexing::kSequential;
    } else if (idx == "memory_step") {
      b.indexing = ScriptIndexing::kMemoryStep;
    } else {
      r.fail("indexing", "expected sequential or memory_step");
    }
  } else if (b.kind == "http") {
    HttpBackendConfig& h = b.http;
    h.base_url = r.get<std::string>("base_url", h.base_url);
    h.path = r.get<std::string>("path", h.path);
    h.model = r.require("model").is_string() ? r.require("model").get<std::string>()
                                             : (r.fail("model", "expected a string"), "");
    h.api_key_env = r.get<std::string>("api_key_env", h.api_key_env);
    h.timeout = std::chrono::seconds(r.get<int>("timeout_s", 60));
    h.max_in_flight = r.get<int>("max_in_flight", h.max_in_flight);
    h.retry.max_attempts = r.get<int>("max_attempts", h.retry.max_attempts);
    h.retry.initial_backoff =
        std::chrono::milliseconds(r.get<int>("initial_backoff_ms", 500));
    h.retry.max_backoff = std::chrono::milliseconds(r.get<int>("max_backoff_ms", 30000));
    h.retry.max_total_backoff =
        std::chrono::milliseconds(r.get<int>("max_total_backoff_ms", 120000));
    if (h.max_in_flight < 1 || h.retry.max_attempts < 1) {
      r.fail("", "max_in_flight and max_attempts must be >= 1");
    }
  } else {
    r.fail("kind", "unknown backend kind '" + b.kind + "'");
  }
  r.finish();
  return b;
}

WorldModelSpec read_world_model(Reader r) {
  WorldModelSpec w;
  if (auto t = r.opt<std::string>("template")) w.transition_template = read_template(r, "template", *t);
  const std::string src = r.get<std::string>("reward_source", "template");
  if (src == "template") {
    w.reward_source = RewardSource::kFromTemplateR;
  } else if (src == "oracle") {
    w.reward_source = RewardSource::kOracleReward;
  } else {
    r.fail("reward_source", "expected template or oracle");
  }
  w.parse_retries = r.get<int>("parse_retries", 3);
  if (auto b = r.child("backend")) w.backend = read_backend(*b);
  if (auto b = r.child("reward_sampler")) w.reward_sampler = read_backend(*b);
  r.finish();
  return w;
}

TrainConfig read_agent(Reader r) {
  TrainConfig t;
  t.recurrent = r.get<bool>("recurrent", false);
  t.rollout_length = r.get<int>("rollout_length", t.rollout_length);
  t.learning_rate = r.opt<double>("learning_rate");
  t.gamma = r.get<double>("gamma", t.gamma);
  t.gae_lambda = r.get<double>("gae_lambda", t.gae_lambda);
  t.clip_ratio = r.get<double>("clip_ratio", t.clip_ratio);
  t.entropy_coef = r.get<double>("entropy_coef", t.entropy_coef);
  t.value_coef = r.get<double>("value_coef", t.value_coef);
  t.max_grad_norm = r.get<double>("max_grad_norm", t.max_grad_norm);
  t.epochs = r.get<int>("epochs", t.epochs);
  t.minibatch_size = r.get<int>("minibatch_size", t.minibatch_size);
  t.total_steps = r.get<long>("total_steps", t.total_steps);
  t.eval_every = r.get<int>("eval_every", t.eval_every);
  t.eval_episodes = r.get<int>("eval_episodes", t.eval_episodes);
  r.finish();
  try {
    t.validate();
  } catch (const ConfigError& e) {
    r.fail("", e.what());
  }
  return t;
}

}  // namespace

std::string_view experiment_kind_name(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::kFidelity: return "fidelity";
    case ExperimentKind::kDistribution: return "distribution";
    case ExperimentKind::kTrain: return "train";
    case ExperimentKind::kFa: return "fa";
  }
  return "unknown";
}

ExperimentConfig ExperimentConfig::parse(const std::string& text) {
  json doc = json::parse(text, nullptr, /*allow_exceptions=*/false);
  if (doc.is_discarded()) throw ConfigError("config is not valid JSON");
  Reader r(doc, "");
  ExperimentConfig c;
  const std::string kind = r.as<std::string>(r.require("experiment"), "experiment");
  if (kind == "fidelity") {
    c.kind = ExperimentKind::kFidelity;
  } else if (kind == "distribution") {
    c.kind = ExperimentKind::kDistribution;
  } else if (kind == "train") {
    c.kind = ExperimentKind::kTrain;
  } else if (kind == "fa") {
    c.kind = ExperimentKind::kFa;
  } else {
    r.fail("experiment", "expected fidelity, distribution, train or fa");
  }
  c.name = r.get<std::string>("name", kind);
  c.seed = r.get<std::uint64_t>("seed", 0);
  c.output_dir = r.get<std::string>("output_dir", "runs/" + c.name);
  if (auto p = r.opt<std::string>("cache")) c.cache = *p;
  c.workers = r.get<int>("workers", 1);
  if (c.workers < 1) r.fail("workers", "must be >= 1");
  if (auto g = r.child("grid")) c.grid = read_grid(*g);
  if (auto b = r.child("backend")) c.backend = read_backend(*b);

  if (auto f = r.child("fidelity")) {
    FidelitySpec s;
    if (auto names = f->opt_list<std::string>("templates")) {
      s.templates.clear();
      for (const auto& n : *names) {
        const TemplateId id = read_template(*f, "templates", n);
        if (!is_transition_template(id)) f->fail("templates", n + " is not a transition template");
        s.templates.push_back(id);
      }
    }
    if (auto sizes = f->opt_list<int>("sizes")) s.sizes = *sizes;
    for (int n : s.sizes) {
      if (n < 2) f->fail("sizes", "grid sizes must be >= 2");
    }
    f->finish();
    c.fidelity = s;
  }
  if (auto d = r.child("distribution")) {
    DistributionSpec s;
    if (auto l = d->child("location")) {
      LocationAuditSpec a;
      a.source = l->get<std::string>("source", "model");
      if (a.source != "model" && a.source != "environment") {
        l->fail("source", "expected model or environment");
      }
      a.samples = l->get<int>("samples", a.samples);
      a.alpha = l->get<double>("alpha", a.alpha);
      const std::string sup = l->get<std::string>(
          "support", a.source == "environment" ? "exclude_start" : "all_cells");
      if (sup == "all_cells") {
        a.support = Support::kAllCells;
      } else if (sup == "exclude_start") {
        a.support = Support::kExcludeStart;
      } else {
        l->fail("support", "expected all_cells or exclude_start");
      }
      if (a.samples < 1 || !(a.alpha > 0.0 && a.alpha < 1.0)) {
        l->fail("", "samples must be >= 1 and alpha in (0,1)");
      }
      l->finish();
      s.location = a;
    }
    if (auto b = d->child("binary")) {
      BinaryAuditSpec a;
      if (auto p = b->opt_list<double>("p1")) a.p1s = *p;
      a.samples = b->get<int>("samples", a.samples);
      a.include_reference = b->get<bool>("include_reference", true);
      for (double p : a.p1s) {
        if (!(p > 0.0 && p < 1.0)) b->fail("p1", "probabilities must be in (0,1)");
      }
      if (a.samples < 1) b->fail("samples", "must be >= 1");
      b->finish();
      s.binary = a;
    }
    d->finish();
    c.distribution = s;
  }
  if (auto t = r.child("train")) {
    TrainSpec s;
    if (auto a = t->child("agent")) s.agent = read_agent(*a);
    s.num_seeds = t->get<int>("num_seeds", 5);
    if (s.num_seeds < 1) t->fail("num_seeds", "must be >= 1");
    s.scratch = t->get<bool>("scratch", true);
    s.pretrain_steps = t->opt<long>("pretrain_steps");
    if (s.pretrain_steps && *s.pretrain_steps < 0) t->fail("pretrain_steps", "must be >= 0");
    if (auto w = t->child("world_model")) s.world_model = read_world_model(*w);
    if (!s.scratch && !s.pretrain_steps) {
      t->fail("scratch", "nothing to run without pretrain_steps");
    }
    t->finish();
    c.train = s;
  }
  if (auto f = r.child("fa")) {
    FaSpec s;
    if (auto names = f->opt_list<std::string>("strategies")) {
      s.strategies.clear();
      for (const auto& n : *names) {
        auto st = parse_strategy(n);
        if (!st) f->fail("strategies", "unknown strategy '" + n + "'");
        s.strategies.push_back(*st);
      }
    }
    if (auto names = f->opt_list<std::string>("settings")) {
      s.settings.clear();
      for (const auto& n : *names) {
        if (n == "fixed") {
          s.settings.push_back(RewardMode::kFixedTopRight);
        } else if (n == "random") {
          s.settings.push_back(RewardMode::kRandomPerEpisode);
        } else {
          f->fail("settings", "expected fixed or random");
        }
      }
    }
    s.episodes = f->get<int>("episodes", 100);
    if (s.episodes < 1) f->fail("episodes", "must be >= 1");
    if (auto m = f->opt<std::size_t>("max_memory_lines")) s.agent.max_memory_lines = *m;
    s.agent.max_attempts = f->get<int>("max_attempts", 3);
    const std::string fb = f->get<std::string>("fallback", "random");
    if (fb == "random") {
      s.agent.fallback = FallbackPolicy::kUniformRandom;
    } else if (fb == "abort") {
      s.agent.fallback = FallbackPolicy::kAbort;
    } else {
      f->fail("fallback", "expected random or abort");
    }
    s.agent.hidden_reward_text =
        f->get<std::string>("hidden_reward_text", s.agent.hidden_reward_text);
    f->finish();
    try {
      s.agent.validate();
    } catch (const ConfigError& e) {
      f->fail("", e.what());
    }
    c.fa = s;
  }
  r.finish();

  auto need = [&](bool present, const char* section) {
    if (!present) {
      throw ConfigError(std::string("config: experiment '") + kind +
                        "' needs a '" + section + "' section");
    }
  };
  switch (c.kind) {
    case ExperimentKind::kFidelity: need(c.fidelity.has_value(), "fidelity"); break;
    case ExperimentKind::kDistribution:
      need(c.distribution.has_value(), "distribution");
      break;
    case ExperimentKind::kTrain: need(c.train.has_value(), "train"); break;
    case ExperimentKind::kFa: need(c.fa.has_value(), "fa"); break;
  }
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::vector<std::uint64_t> expand_seeds(std::uint64_t root, int count) {
  std::vector<std::uint64_t> seeds;
  for (int i = 0; i < count; ++i) {
    seeds.push_back(derive_seed(root, {0x5eed, static_cast<std::uint64_t>(i)}));
  }
  return seeds;
}

std::shared_ptr<ModelBackend> make_backend(const BackendSpec& spec,
                                           std::uint64_t root_seed,
                                           std::shared_ptr<ResponseCache> cache) {
  const std::uint64_t seed = spec.seed.value_or(derive_seed(root_seed, {0xbac4}));
  std::shared_ptr<ModelBackend> b;
  if (spec.kind == "oracle_mock") {
    b = std::make_shared<OracleMock>(seed);
  } else if (spec.kind == "noisy_mock") {
    b = std::make_shared<NoisyMock>(spec.error_rate, spec.error_model, seed);
  } else if (spec.kind == "distribution_mock") {
    b = std::make_shared<DistributionMock>(spec.answers, spec.weights, seed);
  } else if (spec.kind == "uniform_grid_mock") {
    b = DistributionMock::uniform_grid(spec.grid_n, seed);
  } else if (spec.kind == "scripted_mock") {
    b = std::make_shared<ScriptedMock>(spec.responses, spec.indexing);
  } else if (spec.kind == "http") {
    b = std::make_shared<HttpChatBackend>(spec.http);
  } else {
    throw ConfigError("unknown backend kind '" + spec.kind + "'");
  }
  if (cache) b = std::make_shared<CachedBackend>(b, std::move(cache));
  return b;
}

}  // namespace gridfm
