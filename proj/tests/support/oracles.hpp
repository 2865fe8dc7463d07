#pragma once

// Reference computations used by the unit and acceptance tests. Nothing in
// here calls into the library code it is meant to check.

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "gridfm/policy.hpp"
#include "gridfm/ppo.hpp"
#include "gridfm/prompt.hpp"

namespace oracle {

struct RefTransition {
  int fx, fy;
  std::string action;
  int tx, ty;
  int reward;
};

// Grid rules written out longhand: a move that would leave the board is
// dropped, the reward sits in the top-right corner and is paid on arrival.
inline std::vector<RefTransition> brute_force_transitions(int n) {
  static const char* names[] = {"up", "down", "left", "right"};
  std::vector<RefTransition> out;
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      for (const char* a : names) {
        const std::string name = a;
        int tx = x, ty = y;
        if (name == "up" && y + 1 <= n - 1) ty = y + 1;
        if (name == "down" && y - 1 >= 0) ty = y - 1;
        if (name == "left" && x - 1 >= 0) tx = x - 1;
        if (name == "right" && x + 1 <= n - 1) tx = x + 1;
        const int reward = (tx == n - 1 && ty == n - 1) ? 1 : 0;
        out.push_back({x, y, name, tx, ty, reward});
      }
    }
  }
  return out;
}

inline long double chi_square(const std::vector<double>& observed,
                              const std::vector<double>& expected) {
  long double s = 0.0L;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    const long double d = static_cast<long double>(observed[i]) - expected[i];
    s += d * d / expected[i];
  }
  return s;
}

// Regularised upper incomplete gamma Q(a, x): series below a+1, Lentz
// continued fraction above.
inline double upper_gamma_q(double a, double x) {
  if (x <= 0.0) return 1.0;
  const double lg = std::lgamma(a);
  if (x < a + 1.0) {
    double term = 1.0 / a, sum = term, ap = a;
    for (int i = 0; i < 10000; ++i) {
      ap += 1.0;
      term *= x / ap;
      sum += term;
      if (std::abs(term) < std::abs(sum) * 1e-17) break;
    }
    return 1.0 - sum * std::exp(-x + a * std::log(x) - lg);
  }
  const double tiny = 1e-300;
  double b = x + 1.0 - a, c = 1.0 / tiny, d = 1.0 / b, h = d;
  for (int i = 1; i < 10000; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < 1e-17) break;
  }
  return std::exp(-x + a * std::log(x) - lg) * h;
}

inline double chi_square_survival(double statistic, int dof) {
  return upper_gamma_q(dof / 2.0, statistic / 2.0);
}

// --- noisy transition answers -------------------------------------------

struct NoisyCase {
  std::string text;
  int x, y;
  std::optional<int> reward;
};

// Answers a chatty model might give: one bracketed integer pair somewhere in
// free text, with spacing, punctuation, casing and wrapper noise.
inline std::vector<NoisyCase> noisy_corpus(int count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto pick = [&](int k) { return static_cast<int>(rng() % static_cast<std::uint64_t>(k)); };
  const std::vector<std::string> prefixes = {
      "", "Answer: ", "The next state is ", "Next state: ", "  ", "\n",
      "Sure! The agent ends up at ", "```\n", "**Result**: ", "Output -> ",
      "After moving, position = ", "I think it's ", "NEXT STATE IS ",
      "Okay, let me think step by step. Moving is allowed here, so: ",
      "\"", "'", "> ", "- ", "(", "Observation: "};
  const std::vector<std::string> suffixes = {
      "", ".", "\n", "  ", "\n```", " :)", "!", "\"", "'", ")",
      " is the new position.", ". Let me know if you need more.",
      "\n\nExplanation: the move stays inside the grid.", ";",
      " (final)", "..."};
  const std::vector<std::string> reward_glue = {
      ", ", ", reward ", " and the reward is ", "\nreward: ", " | r=",
      ", reward = ", " with reward ", " -- reward "};
  std::vector<NoisyCase> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    NoisyCase c;
    c.x = pick(16);
    c.y = pick(16);
    const auto space = [&]() -> std::string {
      static const char* s[] = {"", " ", "  ", "\t"};
      return s[pick(4)];
    };
    std::string pair = "[" + space() + std::to_string(c.x) + space() + "," +
                       space() + std::to_string(c.y) + space() + "]";
    std::string text = prefixes[pick(static_cast<int>(prefixes.size()))] + pair;
    if (pick(2) == 0) {
      c.reward = pick(2);
      text += reward_glue[pick(static_cast<int>(reward_glue.size()))] +
              std::to_string(*c.reward);
    }
    text += suffixes[pick(static_cast<int>(suffixes.size()))];
    c.text = std::move(text);
    out.push_back(std::move(c));
  }
  return out;
}

// --- finite differences ----------------------------------------------------

struct GradientCheck {
  double actor_rel_error = 0.0;
  double critic_rel_error = 0.0;
};

inline double rel_error(const std::vector<double>& a, const std::vector<double>& b,
                        std::size_t begin, std::size_t end) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = begin; i < end; ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double scale = std::max(std::sqrt(na), std::sqrt(nb));
  return scale < 1e-12 ? std::sqrt(diff) : std::sqrt(diff) / scale;
}


// Per-column log-probabilities, replaying each segment from its start state.
inline std::vector<double> taken_log_probs(const gridfm::PolicySnapshot& policy,
                                           const gridfm::UpdateBatch& batch) {
  std::vector<double> out(batch.size());
  const auto run = [&](std::size_t begin, std::size_t len, gridfm::nn::Vec h) {
    for (std::size_t j = begin; j < begin + len; ++j) {
      const gridfm::nn::Vec x = batch.features.col(static_cast<Eigen::Index>(j));
      out[j] = policy.step(x, h).log_probs(batch.actions[j]);
    }
  };
  if (policy.arch().recurrent) {
    for (const auto& s : batch.segments) run(s.begin, s.length, s.h0);
  } else {
    run(0, batch.size(), policy.initial_hidden());
  }
  return out;
}

// Builds a random small network and batch, places every probability ratio
// well away from the clip boundaries, and compares the analytic gradient of
// the total loss with central differences.
inline GradientCheck check_gradient(std::uint64_t seed, bool recurrent) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  gridfm::ArchitectureDescriptor arch;
  arch.feature_dim = 3;
  arch.recurrent = recurrent;
  arch.hidden1 = 6;
  arch.hidden2 = 5;
  arch.encoder = 6;
  arch.recurrent_size = 4;
  gridfm::PolicySnapshot policy(arch, seed);
  for (double& p : policy.params()) p = 0.4 * normal(rng);

  gridfm::UpdateBatch batch;
  const int columns = 9;
  batch.features.resize(arch.feature_dim, columns);
  for (int j = 0; j < columns; ++j) {
    for (int r = 0; r < arch.feature_dim; ++r) batch.features(r, j) = unit(rng);
    batch.actions.push_back(static_cast<int>(rng() % 4));
    batch.advantages.push_back(normal(rng));
    batch.returns.push_back(normal(rng));
  }
  if (recurrent) {
    const std::size_t cuts[][2] = {{0, 4}, {4, 2}, {6, 3}};
    for (const auto& c : cuts) {
      gridfm::nn::Vec h0(2 * policy.hidden_size());
      for (Eigen::Index i = 0; i < h0.size(); ++i) h0(i) = 0.5 * normal(rng);
      batch.segments.push_back({c[0], c[1], h0});
    }
  }
  const std::vector<double> now = taken_log_probs(policy, batch);
  const double clip = 0.2;
  for (int j = 0; j < columns; ++j) {
    // Ratios drawn from bands that stay at least 0.05 from 1 +- clip.
    static const double bands[][2] = {{0.5, 0.75}, {0.85, 1.15}, {1.25, 1.6}};
    const auto& band = bands[rng() % 3];
    const double ratio = band[0] + (band[1] - band[0]) * unit(rng);
    batch.old_log_probs.push_back(now[static_cast<std::size_t>(j)] - std::log(ratio));
  }

  const gridfm::LossCoefficients coefs{clip, 0.01, 0.5};
  std::vector<double> analytic;
  gridfm::loss_and_gradient(policy, batch, coefs, analytic);

  std::vector<double> numeric(policy.num_params());
  std::vector<double> scratch;
  const double h = 1e-6;
  for (std::size_t i = 0; i < policy.num_params(); ++i) {
    const double keep = policy.params()[i];
    policy.params()[i] = keep + h;
    const double up = gridfm::loss_and_gradient(policy, batch, coefs, scratch).total;
    policy.params()[i] = keep - h;
    const double down = gridfm::loss_and_gradient(policy, batch, coefs, scratch).total;
    policy.params()[i] = keep;
    numeric[i] = (up - down) / (2.0 * h);
  }
  const std::size_t split = policy.actor().num_params();
  return {rel_error(analytic, numeric, 0, split),
          rel_error(analytic, numeric, split, policy.num_params())};
}

// --- prompt fixtures -------------------------------------------------------

inline gridfm::Binding fixture_binding(gridfm::TemplateId id) {
  using gridfm::Action;
  using gridfm::TemplateId;
  switch (id) {
    case TemplateId::kT:
    case TemplateId::kTPlusR:
    case TemplateId::kTMinimal:
    case TemplateId::kTMinimalPlusR:
      return gridfm::transition_binding(5, {2, 3}, Action::kUp, gridfm::Cell{4, 4});
    case TemplateId::kRewardSample:
      return gridfm::reward_sample_binding(5);
    case TemplateId::kStickySample:
      return gridfm::sticky_sample_binding(0.8);
    case TemplateId::kKeyT:
      return gridfm::key_transition_binding(5, {1, 2}, Action::kRight, {4, 4}, {0, 3},
                                            {{0, 0}, {0, 1}, {0, 2}, {1, 2}});
    case TemplateId::kFaAo:
    case TemplateId::kFaSp:
    case TemplateId::kFaFp:
      return gridfm::agent_binding(
          5, "[4, 4]", {1, 1},
          {"Executed up at [0, 0] resulting in [0, 1] and no reward.",
           "Executed right at [0, 1] resulting in [1, 1] and no reward."});
  }
  return {};
}

}  // namespace oracle
