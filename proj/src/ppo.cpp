#include "gridfm/ppo.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <sstream>
#include <thread>

#include "gridfm/seeding.hpp"

namespace gridfm {
namespace {

// Stream labels for derive_seed.
enum : std::uint64_t { kInitStream = 1, kEnvStream, kUpdateStream, kEvalStream };

// Scratch and finetune runs both act in the true environment, so they share
// streams; pretraining gets its own.
std::uint64_t env_role(Phase phase) { return phase == Phase::kPretrain ? 1 : 0; }

int sample_action(const nn::Vec& log_probs, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double r = u(rng);
  double acc = 0.0;
  const int k = static_cast<int>(log_probs.size());
  for (int a = 0; a < k - 1; ++a) {
    acc += std::exp(log_probs(a));
    if (r < acc) return a;
  }
  return k - 1;
}

int greedy_action(const nn::Vec& log_probs) {
  Eigen::Index best = 0;
  log_probs.maxCoeff(&best);
  return static_cast<int>(best);
}

nn::Mat stack_columns(const std::vector<nn::Vec>& cols) {
  if (cols.empty()) return {};
  nn::Mat m(cols.front().size(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t i = 0; i < cols.size(); ++i) {
    m.col(static_cast<Eigen::Index>(i)) = cols[i];
  }
  return m;
}

}  // namespace

void TrainConfig::validate() const {
  if (rollout_length < 1) throw ConfigError("rollout_length must be >= 1");
  if (!(lr() >= 0.0)) throw ConfigError("learning_rate must be >= 0");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("gamma must be in (0,1]");
  if (!(gae_lambda >= 0.0 && gae_lambda <= 1.0)) {
    throw ConfigError("gae_lambda must be in [0,1]");
  }
  if (!(clip_ratio > 0.0 && clip_ratio < 1.0)) {
    throw ConfigError("clip_ratio must be in (0,1)");
  }
  if (entropy_coef < 0.0 || value_coef <= 0.0) {
    throw ConfigError("entropy_coef must be >= 0 and value_coef > 0");
  }
  if (epochs < 1 || minibatch_size < 1) {
    throw ConfigError("epochs and minibatch_size must be >= 1");
  }
  if (total_steps < 0) throw ConfigError("total_steps must be >= 0");
  if (eval_every < 1 || rollout_length % eval_every != 0) {
    throw ConfigError("eval_every must divide rollout_length");
  }
  if (eval_episodes < 1) throw ConfigError("eval_episodes must be >= 1");
  if (seeds.empty()) throw ConfigError("at least one seed is required");
}

ArchitectureDescriptor TrainConfig::architecture_for(const GridConfig& grid) const {
  ArchitectureDescriptor a = arch;
  a.feature_dim = feature_dim(grid);
  a.num_actions = kNumActions;
  a.recurrent = recurrent;
  return a;
}

RolloutCollector::RolloutCollector(World& world, std::uint64_t seed)
    : world_(world), seed_(seed), rng_(derive_seed(seed, {0})) {}

Trajectory RolloutCollector::collect(const PolicySnapshot& policy, int length,
                                     const std::function<void(long)>& on_step) {
  Trajectory traj;
  traj.features.reserve(length);
  bool open_segment = false;
  const GridConfig& grid = world_.grid();
  for (int i = 0; i < length; ++i) {
    try {
      if (need_reset_) {
        obs_ = world_.reset(derive_seed(seed_, {1, episode_++}));
        hidden_ = policy.initial_hidden();
        need_reset_ = false;
        open_segment = false;
      }
    } catch (const std::exception& e) {
      throw RolloutError(std::string("world reset failed: ") + e.what(),
                         std::move(traj));
    }
    if (!open_segment) {
      traj.segments.push_back({traj.size(), 0, hidden_});
      open_segment = true;
    }
    nn::Vec f = encode_features(obs_, grid);
    const PolicyStep ps = policy.step(f, hidden_);
    const int a = sample_action(ps.log_probs, rng_);
    StepResult res;
    try {
      res = world_.step(kAllActions[a]);
    } catch (const std::exception& e) {
      throw RolloutError(std::string("world step failed: ") + e.what(),
                         std::move(traj));
    }
    traj.features.push_back(std::move(f));
    traj.actions.push_back(a);
    traj.log_probs.push_back(ps.log_probs(a));
    traj.values.push_back(ps.value);
    traj.rewards.push_back(res.reward);
    traj.terminated.push_back(res.terminated);
    traj.truncated.push_back(res.truncated);
    ++traj.segments.back().length;
    ++steps_;
    obs_ = res.observation;
    if (res.done()) {
      need_reset_ = true;
      open_segment = false;
    }
    if (on_step) on_step(steps_);
  }
  if (!need_reset_) {
    nn::Vec h = hidden_;
    traj.bootstrap_value = policy.step(encode_features(obs_, grid), h).value;
  }
  return traj;
}

Trajectory collect_rollout(const PolicySnapshot& policy, World& world,
                           int length, std::uint64_t seed) {
  RolloutCollector c(world, seed);
  return c.collect(policy, length);
}

Advantages compute_advantages(const Trajectory& traj, double gamma,
                              double lambda) {
  const std::size_t n = traj.size();
  Advantages out;
  out.advantages.assign(n, 0.0);
  out.returns.assign(n, 0.0);
  double next_adv = 0.0;
  for (std::size_t i = n; i-- > 0;) {
    const double next_value = i + 1 < n ? traj.values[i + 1] : traj.bootstrap_value;
    const double live = traj.done(i) ? 0.0 : 1.0;
    const double delta =
        traj.rewards[i] + gamma * live * next_value - traj.values[i];
    next_adv = delta + gamma * lambda * live * next_adv;
    out.advantages[i] = next_adv;
    out.returns[i] = next_adv + traj.values[i];
  }
  return out;
}

LossStats loss_and_gradient(const PolicySnapshot& policy,
                            const UpdateBatch& batch,
                            const LossCoefficients& coefs,
                            std::vector<double>& grad) {
  grad.assign(policy.num_params(), 0.0);
  const std::size_t bsz = batch.size();
  LossStats stats;
  if (bsz == 0) return stats;
  const double inv = 1.0 / static_cast<double>(bsz);
  const int k = policy.arch().num_actions;
  const nn::Tower& actor = policy.actor();
  const nn::Tower& critic = policy.critic();
  double* g_actor = grad.data();
  double* g_critic = grad.data() + actor.num_params();

  // Computes the loss terms and output gradients for columns [begin, begin+len).
  auto head_grads = [&](const nn::Mat& logits, const nn::Mat& values,
                        std::size_t begin, nn::Mat& dlogits, nn::Mat& dvalues) {
    const Eigen::Index len = logits.cols();
    dlogits.resize(k, len);
    dvalues.resize(1, len);
    for (Eigen::Index j = 0; j < len; ++j) {
      const std::size_t idx = begin + static_cast<std::size_t>(j);
      const nn::Vec logp = log_softmax(logits.col(j));
      const nn::Vec p = logp.array().exp().matrix();
      const int a = batch.actions[idx];
      const double adv = batch.advantages[idx];
      const double log_ratio = logp(a) - batch.old_log_probs[idx];
      const double ratio = std::exp(log_ratio);
      const double clipped =
          std::clamp(ratio, 1.0 - coefs.clip_ratio, 1.0 + coefs.clip_ratio);
      const double s1 = ratio * adv;
      const double s2 = clipped * adv;
      stats.policy_loss -= std::min(s1, s2) * inv;
      stats.approx_kl -= log_ratio * inv;
      if (std::abs(ratio - 1.0) > coefs.clip_ratio) stats.clip_fraction += inv;

      const double d_logp_a = s1 <= s2 ? -adv * ratio * inv : 0.0;
      const double entropy = -(p.array() * logp.array()).sum();
      stats.entropy += entropy * inv;
      for (int c = 0; c < k; ++c) {
        double d = d_logp_a * ((c == a ? 1.0 : 0.0) - p(c));
        d += coefs.entropy_coef * inv * p(c) * (logp(c) + entropy);
        dlogits(c, j) = d;
      }
      const double err = values(0, j) - batch.returns[idx];
      stats.value_loss += err * err * inv;
      dvalues(0, j) = coefs.value_coef * 2.0 * err * inv;
    }
  };

  nn::TowerCache ca, cc;
  nn::Mat dlogits, dvalues;
  if (!policy.arch().recurrent) {
    const nn::Vec none;
    const nn::Mat logits = actor.forward(policy.actor_params(), batch.features, none, &ca);
    const nn::Mat values = critic.forward(policy.critic_params(), batch.features, none, &cc);
    head_grads(logits, values, 0, dlogits, dvalues);
    actor.backward(policy.actor_params(), ca, dlogits, g_actor);
    critic.backward(policy.critic_params(), cc, dvalues, g_critic);
  } else {
    const int h = policy.hidden_size();
    for (const Segment& seg : batch.segments) {
      const auto b = static_cast<Eigen::Index>(seg.begin);
      const auto len = static_cast<Eigen::Index>(seg.length);
      const nn::Mat x = batch.features.middleCols(b, len);
      const nn::Mat logits =
          actor.forward(policy.actor_params(), x, seg.h0.head(h), &ca);
      const nn::Mat values =
          critic.forward(policy.critic_params(), x, seg.h0.tail(h), &cc);
      head_grads(logits, values, seg.begin, dlogits, dvalues);
      actor.backward(policy.actor_params(), ca, dlogits, g_actor);
      critic.backward(policy.critic_params(), cc, dvalues, g_critic);
    }
  }
  stats.total = stats.policy_loss + coefs.value_coef * stats.value_loss -
                coefs.entropy_coef * stats.entropy;
  return stats;
}

UpdateStats update(PolicySnapshot& policy, const Trajectory& traj,
                   const TrainConfig& config, Rng& rng) {
  UpdateStats out;
  const std::size_t n = traj.size();
  if (n == 0) return out;
  Advantages adv = compute_advantages(traj, config.gamma, config.gae_lambda);
  const double mean =
      std::accumulate(adv.advantages.begin(), adv.advantages.end(), 0.0) / n;
  double var = 0.0;
  for (double a : adv.advantages) var += (a - mean) * (a - mean);
  const double sd = std::sqrt(var / n);
  for (double& a : adv.advantages) a = (a - mean) / (sd + 1e-8);

  const nn::Mat all = stack_columns(traj.features);
  const LossCoefficients coefs{config.clip_ratio, config.entropy_coef,
                               config.value_coef};
  const bool recurrent = policy.arch().recurrent;

  auto make_batch = [&](const std::vector<std::size_t>& idx,
                        const std::vector<const Segment*>& segs) {
    UpdateBatch b;
    b.features.resize(all.rows(), static_cast<Eigen::Index>(idx.size()));
    for (std::size_t j = 0; j < idx.size(); ++j) {
      const std::size_t i = idx[j];
      b.features.col(static_cast<Eigen::Index>(j)) =
          all.col(static_cast<Eigen::Index>(i));
      b.actions.push_back(traj.actions[i]);
      b.old_log_probs.push_back(traj.log_probs[i]);
      b.advantages.push_back(adv.advantages[i]);
      b.returns.push_back(adv.returns[i]);
    }
    std::size_t cursor = 0;
    for (const Segment* s : segs) {
      b.segments.push_back({cursor, s->length, s->h0});
      cursor += s->length;
    }
    return b;
  };

  std::vector<std::size_t> order(n);
  std::vector<std::size_t> seg_order(traj.segments.size());
  std::vector<double> grad;
  LossStats sum;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::vector<UpdateBatch> batches;
    if (!recurrent) {
      std::iota(order.begin(), order.end(), 0);
      std::shuffle(order.begin(), order.end(), rng);
      for (std::size_t s = 0; s < n; s += config.minibatch_size) {
        const std::size_t e = std::min(n, s + config.minibatch_size);
        batches.push_back(make_batch({order.begin() + s, order.begin() + e}, {}));
      }
    } else {
      std::iota(seg_order.begin(), seg_order.end(), 0);
      std::shuffle(seg_order.begin(), seg_order.end(), rng);
      std::vector<std::size_t> idx;
      std::vector<const Segment*> segs;
      for (std::size_t si : seg_order) {
        const Segment& s = traj.segments[si];
        for (std::size_t t = 0; t < s.length; ++t) idx.push_back(s.begin + t);
        segs.push_back(&s);
        if (idx.size() >= static_cast<std::size_t>(config.minibatch_size)) {
          batches.push_back(make_batch(idx, segs));
          idx.clear();
          segs.clear();
        }
      }
      if (!idx.empty()) batches.push_back(make_batch(idx, segs));
    }
    for (std::size_t bi = 0; bi < batches.size(); ++bi) {
      const LossStats st = loss_and_gradient(policy, batches[bi], coefs, grad);
      bool finite = std::isfinite(st.total);
      for (double g : grad) finite = finite && std::isfinite(g);
      if (!finite) {
        std::ostringstream msg;
        msg << "non-finite loss in epoch " << epoch << ", minibatch " << bi
            << " (" << batches[bi].size() << " samples, loss " << st.total
            << ")";
        throw NumericError(msg.str());
      }
      policy.apply_gradient(grad, config.lr(), config.max_grad_norm);
      sum.total += st.total;
      sum.policy_loss += st.policy_loss;
      sum.value_loss += st.value_loss;
      sum.entropy += st.entropy;
      sum.approx_kl += st.approx_kl;
      sum.clip_fraction += st.clip_fraction;
      ++out.minibatches;
    }
  }
  if (out.minibatches > 0) {
    const double d = out.minibatches;
    out.mean = {sum.total / d,     sum.policy_loss / d, sum.value_loss / d,
                sum.entropy / d,   sum.approx_kl / d,   sum.clip_fraction / d};
  }
  return out;
}

EvalResult evaluate(const PolicySnapshot& policy, World& world, int episodes,
                    std::uint64_t seed) {
  EvalResult r;
  const GridConfig& grid = world.grid();
  for (int k = 0; k < episodes; ++k) {
    Observation obs = world.reset(derive_seed(seed, {static_cast<std::uint64_t>(k)}));
    nn::Vec hidden = policy.initial_hidden();
    double ret = 0.0;
    bool success = false;
    for (;;) {
      const PolicyStep ps = policy.step(encode_features(obs, grid), hidden);
      const StepResult res = world.step(kAllActions[greedy_action(ps.log_probs)]);
      ret += res.reward;
      obs = res.observation;
      if (res.done()) {
        success = res.reward == 1;
        break;
      }
    }
    r.success_rate += success ? 1.0 : 0.0;
    r.mean_return += ret;
  }
  r.success_rate /= episodes;
  r.mean_return /= episodes;
  return r;
}

std::string_view phase_name(Phase phase) {
  switch (phase) {
    case Phase::kScratch: return "scratch";
    case Phase::kPretrain: return "pretrain";
    case Phase::kFinetune: return "finetune";
  }
  return "unknown";
}

std::string LearningCurve::to_csv() const {
  std::ostringstream out;
  out << "seed,step,success,mean_return\n";
  for (const SeedCurve& s : seeds) {
    for (const CurvePoint& p : s.points) {
      out << s.seed << ',' << p.step << ',' << p.success << ',' << p.mean_return
          << '\n';
    }
  }
  return out.str();
}

double success_auc(const SeedCurve& curve, long step_offset,
                   long max_local_step) {
  double sum = 0.0;
  int count = 0;
  for (const CurvePoint& p : curve.points) {
    const long local = p.step - step_offset;
    if (local < 0 || local > max_local_step) continue;
    sum += p.success;
    ++count;
  }
  return count ? sum / count : 0.0;
}

SeedCurve train_seed(PolicySnapshot& policy, const TrainConfig& config,
                     World& world, World& eval_world, std::uint64_t seed,
                     Phase phase, long step_offset) {
  config.validate();
  // Evaluation resets its world, which would cut the training episode short.
  if (&world == &eval_world) {
    throw UsageError("train_seed needs separate training and evaluation worlds");
  }
  SeedCurve curve;
  curve.seed = seed;
  const std::uint64_t role = env_role(phase);
  RolloutCollector collector(world, derive_seed(seed, {kEnvStream, role}));
  Rng update_rng(derive_seed(seed, {kUpdateStream, role}));

  auto eval_at = [&](long local) {
    const EvalResult e =
        evaluate(policy, eval_world, config.eval_episodes,
                 derive_seed(seed, {kEvalStream, static_cast<std::uint64_t>(local)}));
    curve.points.push_back({step_offset + local, e.success_rate, e.mean_return});
  };

  eval_at(0);
  long local = 0;
  while (local < config.total_steps) {
    const int len = static_cast<int>(
        std::min<long>(config.rollout_length, config.total_steps - local));
    const long end = local + len;
    const Trajectory traj = collector.collect(policy, len, [&](long s) {
      if (s < end && s % config.eval_every == 0) eval_at(s);
    });
    update(policy, traj, config, update_rng);
    local = end;
    if (local % config.eval_every == 0) eval_at(local);
  }
  return curve;
}

void run_jobs(std::size_t count, int workers,
              const std::function<void(std::size_t)>& job) {
  const std::size_t threads =
      std::min<std::size_t>(count, static_cast<std::size_t>(std::max(1, workers)));
  if (threads <= 1) {
    for (std::size_t i = 0; i < count; ++i) job(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i; (i = next.fetch_add(1)) < count;) job(i);
    });
  }
  for (auto& th : pool) th.join();
}

namespace {

PolicySnapshot fresh_policy(const TrainConfig& config, const World& world,
                            std::uint64_t seed) {
  return PolicySnapshot(config.architecture_for(world.grid()),
                        derive_seed(seed, {kInitStream}));
}

}  // namespace

LearningCurve train(const TrainConfig& config, const WorldFactory& world,
                    const WorldFactory& eval_world, int workers, Phase phase) {
  config.validate();
  LearningCurve curve;
  curve.phase = phase;
  curve.seeds.resize(config.seeds.size());
  run_jobs(config.seeds.size(), workers, [&](std::size_t i) {
    const std::uint64_t seed = config.seeds[i];
    curve.seeds[i].seed = seed;
    try {
      auto w = world(seed);
      auto ew = eval_world(seed);
      PolicySnapshot policy = fresh_policy(config, *w, seed);
      curve.seeds[i] = train_seed(policy, config, *w, *ew, seed, phase);
    } catch (const std::exception& e) {
      curve.seeds[i].error = e.what();
    }
  });
  return curve;
}

PretrainResult pretrain_then_finetune(const TrainConfig& pretrain_config,
                                      const TrainConfig& finetune_config,
                                      const WorldFactory& fwm_world,
                                      const WorldFactory& true_world,
                                      const WorldFactory& eval_world,
                                      int workers) {
  pretrain_config.validate();
  finetune_config.validate();
  if (pretrain_config.seeds != finetune_config.seeds ||
      pretrain_config.recurrent != finetune_config.recurrent) {
    throw ConfigError("pretrain and finetune phases must share seeds and "
                      "architecture");
  }
  PretrainResult out;
  out.pretrain.phase = Phase::kPretrain;
  out.finetune.phase = Phase::kFinetune;
  out.finetune.step_offset = pretrain_config.total_steps;
  const std::size_t count = pretrain_config.seeds.size();
  out.pretrain.seeds.resize(count);
  out.finetune.seeds.resize(count);
  run_jobs(count, workers, [&](std::size_t i) {
    const std::uint64_t seed = pretrain_config.seeds[i];
    out.pretrain.seeds[i].seed = seed;
    out.finetune.seeds[i].seed = seed;
    try {
      auto sim = fwm_world(seed);
      auto real = true_world(seed);
      auto ew = eval_world(seed);
      if (feature_dim(sim->grid()) != feature_dim(real->grid())) {
        throw ConfigError("simulated and true worlds expose different "
                          "observations");
      }
      PolicySnapshot policy = fresh_policy(pretrain_config, *real, seed);
      out.pretrain.seeds[i] = train_seed(policy, pretrain_config, *sim, *ew,
                                         seed, Phase::kPretrain);
      out.finetune.seeds[i] =
          train_seed(policy, finetune_config, *real, *ew, seed,
                     Phase::kFinetune, pretrain_config.total_steps);
    } catch (const std::exception& e) {
      auto& target = out.pretrain.seeds[i].points.empty() ||
                             out.pretrain.seeds[i].error
                         ? out.pretrain.seeds[i]
                         : out.finetune.seeds[i];
      target.error = e.what();
    }
  });
  return out;
}

}  // namespace gridfm
