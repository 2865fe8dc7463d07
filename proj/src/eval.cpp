#include "gridfm/eval.hpp"

#include <cmath>
#include <limits>

#include <boost/math/distributions/chi_squared.hpp>

#include "gridfm/errors.hpp"
#include "gridfm/seeding.hpp"

namespace gridfm {

std::vector<ProbeOutcome> ProbeReport::errors() const {
  std::vector<ProbeOutcome> out;
  for (const ProbeOutcome& o : outcomes) {
    if (!o.correct) out.push_back(o);
  }
  return out;
}

ProbeReport probe_fidelity(const FwmConfig& fwm_config,
                           std::shared_ptr<ModelBackend> backend, int workers,
                           const TemplateLibrary& templates) {
  const GridConfig& grid = fwm_config.grid;
  const std::vector<Transition> truth = enumerate_transitions(grid);
  FoundationWorldModel fwm(fwm_config, backend, templates);
  const bool check_reward = includes_reward(fwm_config.transition_template);
  const Cell reward_cell = grid.top_right();

  ProbeReport report;
  report.template_name = std::string(template_name(fwm_config.transition_template));
  report.model = backend->model_id();
  report.n = grid.n;
  report.total = static_cast<int>(truth.size());
  report.outcomes.resize(truth.size());
  run_jobs(truth.size(), workers, [&](std::size_t i) {
    const Transition& t = truth[i];
    ProbeOutcome& o = report.outcomes[i];
    o.state = t.from;
    o.action = t.action;
    o.true_cell = t.to;
    o.true_reward = t.reward;
    o.reward_checked = check_reward;
    const FwmPrediction pred = fwm.predict(t.from, t.action, reward_cell);
    o.raw = pred.raw;
    if (!pred.parsed) return;
    o.predicted_cell = pred.parsed->next_cell;
    o.predicted_reward = pred.parsed->reward;
    const bool cell_ok = format_cell(*o.predicted_cell) == format_cell(t.to);
    const bool reward_ok = !check_reward || o.predicted_reward == t.reward;
    o.correct = cell_ok && reward_ok;
  });
  for (const ProbeOutcome& o : report.outcomes) report.correct += o.correct ? 1 : 0;
  return report;
}

double chi_square_statistic(const std::vector<double>& observed,
                            const std::vector<double>& expected) {
  if (observed.size() != expected.size()) {
    throw UsageError("observed and expected tables differ in size");
  }
  double stat = 0.0;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    if (expected[i] <= 0.0) {
      if (observed[i] > 0.0) return std::numeric_limits<double>::infinity();
      continue;
    }
    const double d = observed[i] - expected[i];
    stat += d * d / expected[i];
  }
  return stat;
}

double chi_square_critical(int dof, double alpha) {
  if (dof < 1 || !(alpha > 0.0 && alpha < 1.0)) {
    throw UsageError("chi-square critical value needs dof >= 1 and alpha in (0,1)");
  }
  boost::math::chi_squared dist(dof);
  return boost::math::quantile(boost::math::complement(dist, alpha));
}

double chi_square_p_value(double statistic, int dof) {
  if (!std::isfinite(statistic)) return 0.0;
  boost::math::chi_squared dist(dof);
  return boost::math::cdf(boost::math::complement(dist, statistic));
}

std::string_view support_name(Support support) {
  return support == Support::kAllCells ? "all_cells" : "exclude_start";
}

DistributionReport test_location_distribution(const LocationSampler& sampler,
                                              int n, int samples, double alpha,
                                              Support support) {
  if (n < 2 || samples < 1) throw UsageError("distribution test needs n >= 2 and samples >= 1");
  DistributionReport r;
  r.n = n;
  r.alpha = alpha;
  r.support = support;
  r.counts.assign(static_cast<std::size_t>(n) * n, 0);
  for (int i = 0; i < samples; ++i) {
    const std::optional<Cell> c = sampler();
    if (!c || c->x < 0 || c->y < 0 || c->x >= n || c->y >= n) {
      ++r.rejected;
      continue;
    }
    ++r.counts[static_cast<std::size_t>(c->y) * n + c->x];
    ++r.sample_size;
  }
  const bool skip_start = support == Support::kExcludeStart;
  if (skip_start) r.out_of_support = r.counts[0];
  const long in_support = r.sample_size - r.out_of_support;
  const int cells = n * n - (skip_start ? 1 : 0);
  std::vector<double> obs, exp;
  for (int i = skip_start ? 1 : 0; i < n * n; ++i) {
    obs.push_back(static_cast<double>(r.counts[i]));
    exp.push_back(static_cast<double>(in_support) / cells);
  }
  r.dof = cells - 1;
  r.chi_square = in_support > 0 ? chi_square_statistic(obs, exp)
                                : std::numeric_limits<double>::infinity();
  r.critical = chi_square_critical(r.dof, alpha);
  r.p_value = chi_square_p_value(r.chi_square, r.dof);
  r.pass = in_support > 0 && r.out_of_support == 0 && r.chi_square <= r.critical;
  return r;
}

void BinaryDistSpec::validate() const {
  if (!(p1 > 0.0 && p1 < 1.0)) throw ConfigError("p1 must be in (0,1)");
  if (sample_size < 1) throw ConfigError("sample_size must be >= 1");
}

DistributionReport test_binary_distribution(const BinarySampler& sampler,
                                            const BinaryDistSpec& spec,
                                            double alpha) {
  spec.validate();
  DistributionReport r;
  r.alpha = alpha;
  r.counts.assign(2, 0);
  for (int i = 0; i < spec.sample_size; ++i) {
    const std::optional<int> v = sampler();
    if (!v || (*v != 0 && *v != 1)) {
      ++r.rejected;
      continue;
    }
    ++r.counts[*v == 1 ? 0 : 1];
    ++r.sample_size;
  }
  const double m = static_cast<double>(r.sample_size);
  r.dof = 1;
  r.chi_square = r.sample_size > 0
                     ? chi_square_statistic(
                           {static_cast<double>(r.counts[0]),
                            static_cast<double>(r.counts[1])},
                           {m * spec.p1, m * (1.0 - spec.p1)})
                     : std::numeric_limits<double>::infinity();
  r.critical = chi_square_critical(1, alpha);
  r.p_value = chi_square_p_value(r.chi_square, 1);
  r.pass = r.sample_size > 0 && r.chi_square <= r.critical;
  return r;
}

std::vector<BinaryRow> binary_sweep(
    const std::function<BinarySampler(double p1)>& sampler_for,
    const std::vector<double>& p1s, int sample_size, const std::string& source) {
  std::vector<BinaryRow> rows;
  for (double p1 : p1s) {
    const DistributionReport r =
        test_binary_distribution(sampler_for(p1), {p1, sample_size});
    const double m = r.sample_size > 0 ? static_cast<double>(r.sample_size) : 1.0;
    rows.push_back({source, p1, r.counts[0] / m, r.counts[1] / m});
  }
  return rows;
}

const std::vector<BinaryRow>& reference_binary_rows() {
  static const std::vector<BinaryRow> rows = {
      {"gpt-3.5 (published)", 0.6, 0.85, 0.15},
      {"gpt-3.5 (published)", 0.7, 0.91, 0.09},
      {"gpt-3.5 (published)", 0.8, 0.97, 0.03},
      {"gpt-3.5 (published)", 0.9, 0.98, 0.02},
      {"gpt-4 (published)", 0.6, 0.75, 0.25},
      {"gpt-4 (published)", 0.7, 0.86, 0.14},
      {"gpt-4 (published)", 0.8, 0.92, 0.08},
      {"gpt-4 (published)", 0.9, 0.97, 0.03},
  };
  return rows;
}

LocationSampler model_location_sampler(std::shared_ptr<ModelBackend> backend,
                                       int n, const TemplateLibrary& templates) {
  auto prompt = std::make_shared<std::string>(
      render(templates.get(TemplateId::kRewardSample), reward_sample_binding(n)));
  return [backend, prompt, n]() -> std::optional<Cell> {
    try {
      return sample_location(*backend, *prompt, n, 1);
    } catch (const SamplingError&) {
      return std::nullopt;
    }
  };
}

BinarySampler model_binary_sampler(std::shared_ptr<ModelBackend> backend,
                                   double p1, const TemplateLibrary& templates) {
  auto prompt = std::make_shared<std::string>(
      render(templates.get(TemplateId::kStickySample), sticky_sample_binding(p1)));
  return [backend, prompt]() -> std::optional<int> {
    try {
      return sample_binary(*backend, *prompt, 1);
    } catch (const SamplingError&) {
      return std::nullopt;
    }
  };
}

int DecisionSuiteResult::finetune_wins() const {
  if (!pretrained) return 0;
  int wins = 0;
  const LearningCurve& ft = pretrained->finetune;
  for (std::size_t i = 0; i < scratch.seeds.size() && i < ft.seeds.size(); ++i) {
    if (scratch.seeds[i].error || ft.seeds[i].error) continue;
    const long budget = scratch.seeds[i].points.empty()
                            ? 0
                            : scratch.seeds[i].points.back().step;
    if (success_auc(ft.seeds[i], ft.step_offset, budget) >
        success_auc(scratch.seeds[i], 0, budget)) {
      ++wins;
    }
  }
  return wins;
}

DecisionSuiteResult run_decision_suite(const DecisionSuite& suite) {
  suite.grid.validate();
  DecisionSuiteResult out;
  const GridConfig grid = suite.grid;
  WorldFactory true_world = [grid](std::uint64_t) {
    return std::make_unique<GridWorld>(grid);
  };
  out.scratch = train(suite.scratch, true_world, true_world, suite.workers,
                      Phase::kScratch);
  for (const SeedCurve& s : out.scratch.seeds) {
    if (s.error) {
      out.annotations.push_back("scratch seed " + std::to_string(s.seed) + ": " + *s.error);
    }
  }
  if (suite.pretrain) {
    if (!suite.fwm_world) throw ConfigError("pretraining needs a world model");
    out.pretrained = pretrain_then_finetune(*suite.pretrain, suite.scratch,
                                            suite.fwm_world, true_world,
                                            true_world, suite.workers);
    for (const LearningCurve* c : {&out.pretrained->pretrain, &out.pretrained->finetune}) {
      for (const SeedCurve& s : c->seeds) {
        if (s.error) {
          out.annotations.push_back(std::string(phase_name(c->phase)) + " seed " +
                                    std::to_string(s.seed) + ": " + *s.error);
        }
      }
    }
  }
  for (std::size_t k = 0; k < suite.fa.size(); ++k) {
    const FaEntry& entry = suite.fa[k];
    FaOutcome o{entry.label, {}};
    try {
      o.result = fa_benchmark(entry.config, *entry.backend,
                              [grid] { return std::make_unique<GridWorld>(grid); },
                              entry.episodes, derive_seed(suite.seed, {0xfa, k}),
                              suite.workers);
      if (o.result.errors > 0) {
        out.annotations.push_back(entry.label + ": " + std::to_string(o.result.errors) +
                                  " episode(s) ended with an error");
      }
    } catch (const std::exception& e) {
      out.annotations.push_back(entry.label + ": " + e.what());
    }
    out.fa.push_back(std::move(o));
  }
  return out;
}

}  // namespace gridfm
