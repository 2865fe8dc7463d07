#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "gridfm/backend.hpp"
#include "gridfm/eval.hpp"
#include "gridfm/fa_agent.hpp"
#include "gridfm/fwm.hpp"
#include "gridfm/grid_env.hpp"
#include "gridfm/ppo.hpp"

namespace gridfm {

enum class ExperimentKind { kFidelity, kDistribution, kTrain, kFa };
std::string_view experiment_kind_name(ExperimentKind kind);

struct BackendSpec {
  // oracle_mock | noisy_mock | distribution_mock | uniform_grid_mock |
  // scripted_mock | http
  std::string kind = "oracle_mock";
  std::optional<std::uint64_t> seed;
  double error_rate = 0.1;
  ErrorModel error_model = ErrorModel::kEdgeClamp;
  std::vector<std::string> answers;
  std::vector<double> weights;
  int grid_n = 5;
  std::vector<std::string> responses;
  ScriptIndexing indexing = ScriptIndexing::kSequential;
  HttpBackendConfig http;
};

struct WorldModelSpec {
  TemplateId transition_template = TemplateId::kTPlusR;
  RewardSource reward_source = RewardSource::kFromTemplateR;
  int parse_retries = 3;
  std::optional<BackendSpec> backend;  // falls back to the experiment backend
  std::optional<BackendSpec> reward_sampler;
};

struct FidelitySpec {
  std::vector<TemplateId> templates = {kTransitionTemplateIds.begin(),
                                       kTransitionTemplateIds.end()};
  std::vector<int> sizes = {5};
};

struct LocationAuditSpec {
  // "model" samples the backend with the RewardSample prompt; "environment"
  // audits the grid's own reward draw.
  std::string source = "model";
  int samples = 1000;
  double alpha = 0.01;
  Support support = Support::kAllCells;
};

struct BinaryAuditSpec {
  std::vector<double> p1s = {0.6, 0.7, 0.8, 0.9};
  int samples = 1000;
  bool include_reference = true;
};

struct DistributionSpec {
  std::optional<LocationAuditSpec> location;
  std::optional<BinaryAuditSpec> binary;
};

struct TrainSpec {
  TrainConfig agent;
  int num_seeds = 5;
  bool scratch = true;
  // Pretraining budget in the world model; unset runs scratch only.
  std::optional<long> pretrain_steps;
  WorldModelSpec world_model;
};

struct FaSpec {
  std::vector<FaStrategy> strategies = {FaStrategy::kAO, FaStrategy::kSP,
                                        FaStrategy::kFP};
  std::vector<RewardMode> settings = {RewardMode::kFixedTopRight,
                                      RewardMode::kRandomPerEpisode};
  int episodes = 100;
  FaConfig agent;
};

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::kFidelity;
  std::string name;
  std::uint64_t seed = 0;
  std::filesystem::path output_dir = "runs/out";
  std::optional<std::filesystem::path> cache;
  int workers = 1;
  GridConfig grid;
  BackendSpec backend;
  std::optional<FidelitySpec> fidelity;
  std::optional<DistributionSpec> distribution;
  std::optional<TrainSpec> train;
  std::optional<FaSpec> fa;

  // Strict parse: unknown keys, wrong types and out-of-range values throw
  // ConfigError naming the offending path.
  static ExperimentConfig parse(const std::string& json_text);
  static ExperimentConfig load(const std::filesystem::path& path);
};

// Job seeds: the root seed expanded into `count` independent seeds.
std::vector<std::uint64_t> expand_seeds(std::uint64_t root, int count);

// Builds the backend, wrapped in a response cache when `cache` is given. Mock
// seeds default to one derived from `root_seed`.
std::shared_ptr<ModelBackend> make_backend(const BackendSpec& spec,
                                           std::uint64_t root_seed,
                                           std::shared_ptr<ResponseCache> cache);

}  // namespace gridfm
