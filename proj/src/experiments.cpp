#include "gridfm/experiments.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "gridfm/errors.hpp"
#include "gridfm/report.hpp"
#include "gridfm/seeding.hpp"

namespace gridfm {
namespace {

namespace fs = std::filesystem;

std::shared_ptr<ResponseCache> open_cache(const ExperimentConfig& config) {
  if (!config.cache) return nullptr;
  return std::make_shared<ResponseCache>(*config.cache);
}

class Writer {
 public:
  Writer(const ExperimentConfig& config, RunOutcome& out)
      : config_(config), out_(out) {
    out_.output_dir = config.output_dir;
  }

  void file(const std::string& name, const std::string& content) {
    const fs::path p = config_.output_dir / name;
    report::write_file(p, content);
    out_.files.push_back(p);
  }

  void fail(const std::string& message) {
    ++out_.failed_jobs;
    out_.messages.push_back(message);
  }

  void note(const std::string& message) { out_.messages.push_back(message); }

  void manifest() {
    nlohmann::json j;
    j["experiment"] = std::string(experiment_kind_name(config_.kind));
    j["name"] = config_.name;
    j["seed"] = config_.seed;
    j["status"] = out_.ok() ? "ok" : "failed";
    j["failed_jobs"] = out_.failed_jobs;
    j["messages"] = out_.messages;
    file("run.json", j.dump(2) + "\n");
  }

 private:
  const ExperimentConfig& config_;
  RunOutcome& out_;
};

std::string probe_stem(const ProbeReport& r) {
  return r.template_name + "_n" + std::to_string(r.n);
}

}  // namespace

std::vector<std::vector<std::string>> read_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> row;
    std::string field;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      const char c = line[i];
      if (quoted) {
        if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
          field += '"';
          ++i;
        } else if (c == '"') {
          quoted = false;
        } else {
          field += c;
        }
      } else if (c == '"') {
        quoted = true;
      } else if (c == ',') {
        row.push_back(std::move(field));
        field.clear();
      } else {
        field += c;
      }
    }
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

RunOutcome run_fidelity(const ExperimentConfig& config) {
  RunOutcome out;
  Writer w(config, out);
  auto cache = open_cache(config);
  std::vector<ProbeReport> reports;
  std::shared_ptr<ModelBackend> backend;
  try {
    backend = make_backend(config.backend, config.seed, cache);
  } catch (const std::exception& e) {
    w.fail(std::string("backend: ") + e.what());
    w.manifest();
    return out;
  }
  for (int n : config.fidelity->sizes) {
    for (TemplateId id : config.fidelity->templates) {
      FwmConfig fc;
      fc.grid = config.grid;
      fc.grid.n = n;
      fc.grid.max_steps.reset();
      fc.transition_template = id;
      fc.reward_source = includes_reward(id) ? RewardSource::kFromTemplateR
                                             : RewardSource::kOracleReward;
      try {
        ProbeReport r = probe_fidelity(fc, backend, config.workers);
        const std::string stem = probe_stem(r);
        w.file("probes_" + stem + ".csv", report::probe_ledger_csv(r));
        w.file("probe_" + stem + ".json", report::probe_json(r));
        w.file("errors_" + stem + ".svg", report::probe_error_svg(r));
        reports.push_back(std::move(r));
      } catch (const std::exception& e) {
        w.fail(std::string(template_name(id)) + " n=" + std::to_string(n) + ": " +
               e.what());
      }
    }
  }
  w.file("accuracy.csv", report::probe_accuracy_csv(reports));
  w.manifest();
  return out;
}

RunOutcome run_distribution(const ExperimentConfig& config) {
  RunOutcome out;
  Writer w(config, out);
  auto cache = open_cache(config);
  const DistributionSpec& spec = *config.distribution;
  std::shared_ptr<ModelBackend> backend;
  try {
    backend = make_backend(config.backend, config.seed, cache);
  } catch (const std::exception& e) {
    w.fail(std::string("backend: ") + e.what());
    w.manifest();
    return out;
  }
  if (spec.location) {
    const LocationAuditSpec& a = *spec.location;
    const int n = config.grid.n;
    try {
      LocationSampler sampler;
      if (a.source == "environment") {
        GridConfig g = config.grid;
        g.reward_mode = RewardMode::kRandomPerEpisode;
        auto counter = std::make_shared<std::uint64_t>(0);
        const std::uint64_t root = derive_seed(config.seed, {0xd157});
        sampler = [g, counter, root]() -> std::optional<Cell> {
          return reset(g, derive_seed(root, {(*counter)++})).first.reward;
        };
      } else {
        sampler = model_location_sampler(backend, n);
      }
      const DistributionReport r =
          test_location_distribution(sampler, n, a.samples, a.alpha, a.support);
      w.file("location_counts.csv", report::distribution_csv(r));
      w.file("location.json", report::distribution_json(r));
      w.file("location_density.svg", report::density_svg(r));
    } catch (const std::exception& e) {
      w.fail(std::string("location audit: ") + e.what());
    }
  }
  if (spec.binary) {
    const BinaryAuditSpec& a = *spec.binary;
    try {
      std::vector<BinaryRow> rows = binary_sweep(
          [&](double p1) { return model_binary_sampler(backend, p1); }, a.p1s,
          a.samples, backend->model_id());
      w.file("binary_sweep.csv", report::binary_table_csv(rows));
      if (a.include_reference) {
        w.file("binary_reference.csv",
               report::binary_table_csv(reference_binary_rows()));
        rows.insert(rows.end(), reference_binary_rows().begin(),
                    reference_binary_rows().end());
      }
      w.file("binary_sweep.svg", report::binary_sweep_svg(rows));
    } catch (const std::exception& e) {
      w.fail(std::string("binary audit: ") + e.what());
    }
  }
  w.manifest();
  return out;
}

RunOutcome run_train(const ExperimentConfig& config) {
  RunOutcome out;
  Writer w(config, out);
  auto cache = open_cache(config);
  const TrainSpec& spec = *config.train;

  DecisionSuite suite;
  suite.grid = config.grid;
  suite.scratch = spec.agent;
  suite.scratch.seeds = expand_seeds(config.seed, spec.num_seeds);
  suite.workers = config.workers;
  suite.seed = config.seed;
  if (spec.pretrain_steps) {
    TrainConfig pre = suite.scratch;
    pre.total_steps = *spec.pretrain_steps;
    suite.pretrain = pre;
    FwmConfig fc;
    fc.grid = config.grid;
    fc.transition_template = spec.world_model.transition_template;
    fc.reward_source = spec.world_model.reward_source;
    fc.parse_retries = spec.world_model.parse_retries;
    fc.stochastic_reward = config.grid.reward_mode == RewardMode::kRandomPerEpisode;
    fc.validate();
    const BackendSpec transition = spec.world_model.backend.value_or(config.backend);
    const std::optional<BackendSpec> sampler = spec.world_model.reward_sampler;
    suite.fwm_world = [fc, transition, sampler, cache](std::uint64_t job_seed) {
      auto fwm = std::make_unique<FoundationWorldModel>(
          fc, make_backend(transition, derive_seed(job_seed, {1}), cache));
      if (sampler) {
        fwm->set_reward_sampler(make_backend(*sampler, derive_seed(job_seed, {2}), cache));
      }
      return fwm;
    };
  }

  DecisionSuiteResult result;
  if (spec.scratch) {
    result = run_decision_suite(suite);
  } else if (suite.pretrain) {
    const GridConfig grid = config.grid;
    WorldFactory true_world = [grid](std::uint64_t) {
      return std::make_unique<GridWorld>(grid);
    };
    result.pretrained = pretrain_then_finetune(*suite.pretrain, suite.scratch,
                                               suite.fwm_world, true_world,
                                               true_world, suite.workers);
    for (const LearningCurve* c :
         {&result.pretrained->pretrain, &result.pretrained->finetune}) {
      for (const SeedCurve& s : c->seeds) {
        if (s.error) {
          result.annotations.push_back(std::string(phase_name(c->phase)) + " seed " +
                                       std::to_string(s.seed) + ": " + *s.error);
        }
      }
    }
  }
  for (const std::string& a : result.annotations) w.fail(a);

  std::vector<report::CurveSeries> series;
  if (spec.scratch) {
    w.file("curve_scratch.csv", result.scratch.to_csv());
    w.file("curve_scratch.json", report::curve_json(result.scratch));
    series.push_back({"scratch", &result.scratch});
  }
  nlohmann::json summary;
  summary["seeds"] = suite.scratch.seeds;
  if (result.pretrained) {
    w.file("curve_pretrain.csv", result.pretrained->pretrain.to_csv());
    w.file("curve_pretrain.json", report::curve_json(result.pretrained->pretrain));
    w.file("curve_finetune.csv", result.pretrained->finetune.to_csv());
    w.file("curve_finetune.json", report::curve_json(result.pretrained->finetune));
    series.push_back({"pretrain (world model)", &result.pretrained->pretrain});
    series.push_back({"finetune", &result.pretrained->finetune});
    if (spec.scratch) {
      auto& rows = summary["auc"] = nlohmann::json::array();
      const long budget = spec.agent.total_steps;
      for (std::size_t i = 0; i < result.scratch.seeds.size(); ++i) {
        rows.push_back(
            {{"seed", result.scratch.seeds[i].seed},
             {"scratch", success_auc(result.scratch.seeds[i], 0, budget)},
             {"finetune", success_auc(result.pretrained->finetune.seeds[i],
                                      result.pretrained->finetune.step_offset,
                                      budget)}});
      }
      summary["finetune_wins"] = result.finetune_wins();
    }
  }
  w.file("train_summary.json", summary.dump(2) + "\n");
  w.file("learning_curves.svg", report::learning_curve_svg(series, {}));
  w.manifest();
  return out;
}

RunOutcome run_fa(const ExperimentConfig& config) {
  RunOutcome out;
  Writer w(config, out);
  auto cache = open_cache(config);
  const FaSpec& spec = *config.fa;
  std::shared_ptr<ModelBackend> backend;
  try {
    backend = make_backend(config.backend, config.seed, cache);
  } catch (const std::exception& e) {
    w.fail(std::string("backend: ") + e.what());
    w.manifest();
    return out;
  }
  std::vector<FaSummaryRow> rows;
  for (FaStrategy strategy : spec.strategies) {
    FaSummaryRow row{backend->model_id(), strategy, std::nullopt, std::nullopt};
    FaConfig agent = spec.agent;
    agent.strategy = strategy;
    for (RewardMode mode : spec.settings) {
      GridConfig g = config.grid;
      g.reward_mode = mode;
      g.observe_reward = mode == RewardMode::kFixedTopRight;
      const bool fixed = mode == RewardMode::kFixedTopRight;
      const std::string setting = fixed ? "fixed" : "random";
      const std::string tag = std::string(strategy_name(strategy)) + "_" + setting;
      try {
        const BenchmarkResult r = fa_benchmark(
            agent, *backend, [g] { return std::make_unique<GridWorld>(g); },
            spec.episodes, derive_seed(config.seed, {0xfa, static_cast<std::uint64_t>(mode)}),
            config.workers);
        w.file("episodes_" + tag + ".jsonl", r.records_jsonl());
        (fixed ? row.fixed_reward_pct : row.random_reward_pct) = 100.0 * r.success_rate;
        if (r.errors > 0) {
          w.fail(tag + ": " + std::to_string(r.errors) + " episode(s) ended with an error");
        }
        if (r.faults > 0) w.note(tag + ": " + std::to_string(r.faults) + " fallback action(s)");
      } catch (const std::exception& e) {
        w.fail(tag + ": " + e.what());
      }
    }
    rows.push_back(row);
  }
  w.file("fa_summary.csv", fa_summary_csv(rows));
  w.manifest();
  return out;
}

RunOutcome run_experiment(const ExperimentConfig& config) {
  switch (config.kind) {
    case ExperimentKind::kFidelity: return run_fidelity(config);
    case ExperimentKind::kDistribution: return run_distribution(config);
    case ExperimentKind::kTrain: return run_train(config);
    case ExperimentKind::kFa: return run_fa(config);
  }
  throw UsageError("unknown experiment kind");
}

RunOutcome build_report(const fs::path& run_dir,
                        const std::optional<fs::path>& out_dir) {
  if (!fs::is_directory(run_dir)) {
    throw UsageError("no runs found: " + run_dir.string() + " is not a directory");
  }
  std::vector<fs::path> runs;
  for (const auto& entry : fs::recursive_directory_iterator(run_dir)) {
    if (entry.is_regular_file() && entry.path().filename() == "run.json") {
      runs.push_back(entry.path().parent_path());
    }
  }
  if (runs.empty()) throw UsageError("no runs found under " + run_dir.string());
  std::sort(runs.begin(), runs.end());

  RunOutcome out;
  out.output_dir = out_dir.value_or(run_dir);
  std::ostringstream curves, fa;
  curves << "run,phase,seed,step,success,mean_return\n";
  fa << "run,model,strategy,fixed_reward_pct,random_reward_pct\n";
  std::vector<LearningCurve> parsed;
  std::vector<std::string> labels;
  std::vector<std::pair<std::string, double>> fa_lines;
  for (const fs::path& run : runs) {
    std::string name = fs::relative(run, run_dir).generic_string();
    if (name == ".") name = run.filename().string();
    const auto manifest = nlohmann::json::parse(report::read_file(run / "run.json"));
    if (manifest.value("status", "ok") != "ok") {
      ++out.failed_jobs;
      out.messages.push_back(name + ": run reported failures");
    }
    for (const char* phase : {"scratch", "pretrain", "finetune"}) {
      const fs::path p = run / (std::string("curve_") + phase + ".csv");
      if (!fs::exists(p)) continue;
      LearningCurve c;
      std::map<std::uint64_t, std::size_t> index;
      const auto rows = read_csv(report::read_file(p));
      for (std::size_t i = 1; i < rows.size(); ++i) {
        const auto& r = rows[i];
        if (r.size() != 4) throw ConfigError("malformed curve file " + p.string());
        curves << report::csv_field(name) << ',' << phase << ',' << r[0] << ','
               << r[1] << ',' << r[2] << ',' << r[3] << '\n';
        const std::uint64_t seed = std::stoull(r[0]);
        auto [it, fresh] = index.emplace(seed, c.seeds.size());
        if (fresh) c.seeds.push_back({seed, {}, std::nullopt});
        c.seeds[it->second].points.push_back(
            {std::stol(r[1]), std::stod(r[2]), std::stod(r[3])});
      }
      parsed.push_back(std::move(c));
      labels.push_back(name + " " + phase);
    }
    const fs::path fp = run / "fa_summary.csv";
    if (fs::exists(fp)) {
      const auto rows = read_csv(report::read_file(fp));
      for (std::size_t i = 1; i < rows.size(); ++i) {
        const auto& r = rows[i];
        if (r.size() != 4) throw ConfigError("malformed FA summary " + fp.string());
        fa << report::csv_field(name) << ',' << report::csv_field(r[0]) << ','
           << r[1] << ',' << r[2] << ',' << r[3] << '\n';
        if (!r[2].empty()) fa_lines.push_back({"FA " + r[1] + " fixed", std::stod(r[2]) / 100.0});
        if (!r[3].empty()) fa_lines.push_back({"FA " + r[1] + " random", std::stod(r[3]) / 100.0});
      }
    }
  }
  std::vector<report::CurveSeries> series;
  for (std::size_t i = 0; i < parsed.size(); ++i) series.push_back({labels[i], &parsed[i]});

  auto put = [&](const std::string& file, const std::string& content) {
    const fs::path p = out.output_dir / file;
    report::write_file(p, content);
    out.files.push_back(p);
  };
  put("combined_curves.csv", curves.str());
  put("combined_fa.csv", fa.str());
  put("report.svg", report::learning_curve_svg(series, fa_lines));
  return out;
}

}  // namespace gridfm
