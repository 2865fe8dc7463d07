#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "gridfm/errors.hpp"
#include "gridfm/grid_env.hpp"
#include "gridfm/policy.hpp"

namespace gridfm {

struct TrainConfig {
  bool recurrent = false;
  int rollout_length = 125;
  // Defaults to 3e-4 (feed-forward) or 3e-5 (recurrent) when unset.
  std::optional<double> learning_rate;
  double gamma = 0.99;
  double gae_lambda = 0.95;
  double clip_ratio = 0.2;
  double entropy_coef = 0.01;
  double value_coef = 0.5;
  double max_grad_norm = 0.5;
  int epochs = 10;
  int minibatch_size = 32;
  long total_steps = 1500;
  int eval_every = 125;
  int eval_episodes = 1;
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};
  ArchitectureDescriptor arch;  // feature_dim/recurrent are filled from the grid

  double lr() const { return learning_rate.value_or(recurrent ? 3e-5 : 3e-4); }
  void validate() const;
  ArchitectureDescriptor architecture_for(const GridConfig& grid) const;
};

// Contiguous piece of one episode inside a rollout, with the recurrent state
// the policy carried into its first step.
struct Segment {
  std::size_t begin = 0;
  std::size_t length = 0;
  nn::Vec h0;
};

struct Trajectory {
  std::vector<nn::Vec> features;
  std::vector<int> actions;
  std::vector<double> log_probs;
  std::vector<double> values;
  std::vector<int> rewards;
  std::vector<std::uint8_t> terminated;
  std::vector<std::uint8_t> truncated;
  std::vector<Segment> segments;
  // Value of the observation following the last step; unused when the last
  // step ended its episode.
  double bootstrap_value = 0.0;

  std::size_t size() const { return actions.size(); }
  bool done(std::size_t t) const { return terminated[t] || truncated[t]; }
};

// A world fault during collection, carrying what was gathered before it.
class RolloutError : public Error {
 public:
  RolloutError(const std::string& what, Trajectory partial)
      : Error(what), partial_(std::move(partial)) {}
  const Trajectory& partial() const { return partial_; }

 private:
  Trajectory partial_;
};

// Keeps the world's current episode and the policy's hidden state alive across
// consecutive rollouts. Episode i is reset with a seed derived from
// (seed, i).
class RolloutCollector {
 public:
  RolloutCollector(World& world, std::uint64_t seed);

  // `on_step` is called with the collector's running step count after every
  // transition.
  Trajectory collect(const PolicySnapshot& policy, int length,
                     const std::function<void(long)>& on_step = {});

  long steps() const { return steps_; }
  std::uint64_t episodes_started() const { return episode_; }

 private:
  World& world_;
  std::uint64_t seed_;
  Rng rng_;
  bool need_reset_ = true;
  Observation obs_;
  nn::Vec hidden_;
  std::uint64_t episode_ = 0;
  long steps_ = 0;
};

Trajectory collect_rollout(const PolicySnapshot& policy, World& world,
                           int length, std::uint64_t seed);

struct Advantages {
  std::vector<double> advantages;
  std::vector<double> returns;
};

// A_t = d_t + g*l*(1-done_t)*A_{t+1},  d_t = r_t + g*(1-done_t)*V_{t+1} - V_t
Advantages compute_advantages(const Trajectory& traj, double gamma,
                              double lambda);

// Columns of one optimisation step. For the recurrent variant `segments`
// partition the columns in order; otherwise they are ignored.
struct UpdateBatch {
  nn::Mat features;
  std::vector<int> actions;
  std::vector<double> old_log_probs;
  std::vector<double> advantages;
  std::vector<double> returns;
  std::vector<Segment> segments;

  std::size_t size() const { return actions.size(); }
};

struct LossCoefficients {
  double clip_ratio = 0.2;
  double entropy_coef = 0.01;
  double value_coef = 0.5;
};

struct LossStats {
  double total = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;  // mean squared error, before value_coef
  double entropy = 0.0;
  double approx_kl = 0.0;
  double clip_fraction = 0.0;
};

// loss = -mean(min(r*A, clip(r)*A)) + value_coef*mean((V-R)^2)
//        - entropy_coef*mean(H)
// The gradient with respect to every parameter is written to `grad`.
LossStats loss_and_gradient(const PolicySnapshot& policy,
                            const UpdateBatch& batch,
                            const LossCoefficients& coefs,
                            std::vector<double>& grad);

struct UpdateStats {
  LossStats mean;
  int minibatches = 0;
};

// Runs config.epochs passes of minibatch updates over the rollout. Advantages
// are normalised over the whole rollout. Throws NumericError naming the epoch
// and minibatch when a loss is not finite.
UpdateStats update(PolicySnapshot& policy, const Trajectory& traj,
                   const TrainConfig& config, Rng& rng);

struct EvalResult {
  double success_rate = 0.0;
  double mean_return = 0.0;
};

// Greedy (argmax) episodes; episode k is reset with a seed derived from
// (seed, k).
EvalResult evaluate(const PolicySnapshot& policy, World& world, int episodes,
                    std::uint64_t seed);

enum class Phase { kScratch, kPretrain, kFinetune };
std::string_view phase_name(Phase phase);

struct CurvePoint {
  long step = 0;  // on the shared axis (phase offset included)
  double success = 0.0;
  double mean_return = 0.0;
};

struct SeedCurve {
  std::uint64_t seed = 0;
  std::vector<CurvePoint> points;
  // Set when the job failed.
  std::optional<std::string> error;
};

struct LearningCurve {
  Phase phase = Phase::kScratch;
  long step_offset = 0;
  std::vector<SeedCurve> seeds;

  // seed,step,success,mean_return
  std::string to_csv() const;
};

// Mean success over a seed's evaluation points whose phase-local step lies in
// [0, max_local_step].
double success_auc(const SeedCurve& curve, long step_offset,
                   long max_local_step);

using WorldFactory = std::function<std::unique_ptr<World>(std::uint64_t seed)>;

// Trains `policy` in place for config.total_steps on `world`, evaluating on
// `eval_world` at local step 0 and every eval_every steps. Stream seeds come
// from (seed, phase role) so a finetune phase draws exactly what a scratch run
// with the same seed would.
SeedCurve train_seed(PolicySnapshot& policy, const TrainConfig& config,
                     World& world, World& eval_world, std::uint64_t seed,
                     Phase phase, long step_offset = 0);

// Fresh policy per seed; seeds run as independent jobs on `workers` threads.
LearningCurve train(const TrainConfig& config, const WorldFactory& world,
                    const WorldFactory& eval_world, int workers = 1,
                    Phase phase = Phase::kScratch);

struct PretrainResult {
  LearningCurve pretrain;
  LearningCurve finetune;
};

// Per seed: train on the simulated world, then keep training the same
// snapshot (optimizer state included) on the true world. Finetune steps are
// offset by the pretraining budget. Both phases evaluate on `eval_world`.
PretrainResult pretrain_then_finetune(const TrainConfig& pretrain_config,
                                      const TrainConfig& finetune_config,
                                      const WorldFactory& fwm_world,
                                      const WorldFactory& true_world,
                                      const WorldFactory& eval_world,
                                      int workers = 1);

// Runs `job(i)` for i in [0, count) on up to `workers` threads.
void run_jobs(std::size_t count, int workers,
              const std::function<void(std::size_t)>& job);

}  // namespace gridfm
