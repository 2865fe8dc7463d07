#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "gridfm/config.hpp"
#include "gridfm/errors.hpp"
#include "gridfm/experiments.hpp"

namespace {

struct RunFlags {
  std::string config;
  std::string out;
  std::string cache;
  int workers = 0;
  std::optional<std::uint64_t> seed;
};

void add_run_flags(CLI::App* cmd, RunFlags& f) {
  cmd->add_option("--config", f.config, "experiment config (JSON)")->required();
  cmd->add_option("--out", f.out, "output directory (overrides output_dir)");
  cmd->add_option("--workers", f.workers, "concurrent jobs (overrides workers)")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--cache", f.cache, "response cache file (overrides cache)");
  cmd->add_option("--seed-override", f.seed, "root seed (overrides seed)");
}

int print_outcome(const gridfm::RunOutcome& r) {
  for (const auto& m : r.messages) std::cerr << "  " << m << "\n";
  std::cout << r.output_dir.string() << ": " << r.files.size() << " file(s) written";
  if (!r.ok()) std::cout << ", " << r.failed_jobs << " job(s) failed";
  std::cout << "\n";
  return r.ok() ? 0 : 1;
}

int run(gridfm::ExperimentKind expected, const RunFlags& f) {
  gridfm::ExperimentConfig config = gridfm::ExperimentConfig::load(f.config);
  if (config.kind != expected) {
    throw gridfm::ConfigError("config describes a '" +
                              std::string(gridfm::experiment_kind_name(config.kind)) +
                              "' experiment, not '" +
                              std::string(gridfm::experiment_kind_name(expected)) + "'");
  }
  if (!f.out.empty()) config.output_dir = f.out;
  if (!f.cache.empty()) config.cache = f.cache;
  if (f.workers > 0) config.workers = f.workers;
  if (f.seed) config.seed = *f.seed;
  return print_outcome(gridfm::run_experiment(config));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Grid-world foundation-model experiments"};
  app.require_subcommand(1);

  RunFlags flags;
  struct Sub {
    const char* name;
    const char* help;
    gridfm::ExperimentKind kind;
  };
  const Sub subs[] = {
      {"fidelity", "probe transition fidelity over every state-action pair",
       gridfm::ExperimentKind::kFidelity},
      {"distribution", "audit location and binary sampling distributions",
       gridfm::ExperimentKind::kDistribution},
      {"train", "train scratch and world-model-pretrained agents",
       gridfm::ExperimentKind::kTrain},
      {"fa", "benchmark the model acting directly as the agent",
       gridfm::ExperimentKind::kFa},
  };
  std::optional<gridfm::ExperimentKind> chosen;
  for (const Sub& s : subs) {
    CLI::App* cmd = app.add_subcommand(s.name, s.help);
    add_run_flags(cmd, flags);
    cmd->callback([&chosen, kind = s.kind] { chosen = kind; });
  }

  std::string run_dir, report_out;
  CLI::App* report = app.add_subcommand("report", "aggregate a run directory");
  report->add_option("run_dir", run_dir, "directory containing runs")->required();
  report->add_option("--out", report_out, "where to write the combined report");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (chosen) return run(*chosen, flags);
    std::optional<std::filesystem::path> out;
    if (!report_out.empty()) out = report_out;
    return print_outcome(gridfm::build_report(run_dir, out));
  } catch (const gridfm::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
