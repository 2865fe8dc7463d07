#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "gridfm/config.hpp"

namespace gridfm {

struct RunOutcome {
  std::filesystem::path output_dir;
  int failed_jobs = 0;
  std::vector<std::string> messages;
  std::vector<std::filesystem::path> files;

  bool ok() const { return failed_jobs == 0; }
};

// Each runner writes its artifacts plus a run.json manifest into
// config.output_dir. Nothing in the outputs depends on wall-clock time, so
// reruns with the same config and mock backends are byte-identical.
RunOutcome run_fidelity(const ExperimentConfig& config);
RunOutcome run_distribution(const ExperimentConfig& config);
RunOutcome run_train(const ExperimentConfig& config);
RunOutcome run_fa(const ExperimentConfig& config);
RunOutcome run_experiment(const ExperimentConfig& config);

// Aggregates every run (directory holding run.json) below `run_dir` into
// combined CSVs and a learning-curve figure with FA reference lines. Throws
// UsageError when no runs are found.
RunOutcome build_report(const std::filesystem::path& run_dir,
                        const std::optional<std::filesystem::path>& out_dir =
                            std::nullopt);

// Minimal CSV reader for the files this project writes (quoted fields
// allowed, no embedded newlines).
std::vector<std::vector<std::string>> read_csv(const std::string& text);

}  // namespace gridfm
