#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "gridfm/grid_env.hpp"
#include "gridfm/nn.hpp"

namespace gridfm {

// Agent coordinates scaled to [0,1], then the reward coordinates when the
// config exposes them, then the key bit when the key variant is on.
int feature_dim(const GridConfig& config);
nn::Vec encode_features(const Observation& obs, const GridConfig& config);

struct ArchitectureDescriptor {
  int feature_dim = 2;
  int num_actions = kNumActions;
  bool recurrent = false;
  int hidden1 = 64;
  int hidden2 = 64;
  int encoder = 64;
  int recurrent_size = 32;

  nn::TowerShape shape() const {
    return {recurrent, hidden1, hidden2, encoder, recurrent_size};
  }
  friend bool operator==(const ArchitectureDescriptor&,
                         const ArchitectureDescriptor&) = default;
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::int64_t t = 0;
  friend bool operator==(const AdamState&, const AdamState&) = default;
};

struct PolicyStep {
  nn::Vec log_probs;
  double value = 0.0;
};

// Actor and critic towers plus their optimizer state. The flat parameter
// vector holds the actor first, then the critic. Recurrent hidden state is
// the actor's GRU state followed by the critic's.
class PolicySnapshot {
 public:
  PolicySnapshot() = default;
  PolicySnapshot(ArchitectureDescriptor arch, std::uint64_t init_seed);

  const ArchitectureDescriptor& arch() const { return arch_; }
  const nn::Tower& actor() const { return actor_; }
  const nn::Tower& critic() const { return critic_; }
  std::vector<double>& params() { return params_; }
  const std::vector<double>& params() const { return params_; }
  const double* actor_params() const { return params_.data(); }
  const double* critic_params() const {
    return params_.data() + actor_.num_params();
  }
  std::size_t num_params() const { return params_.size(); }
  const AdamState& adam() const { return adam_; }

  int hidden_size() const { return actor_.hidden_size(); }
  nn::Vec initial_hidden() const { return nn::Vec::Zero(2 * hidden_size()); }

  // One forward step; advances `hidden` for the recurrent variant.
  PolicyStep step(const nn::Vec& features, nn::Vec& hidden) const;

  // Global L2 gradient clipping to `max_grad_norm` (skipped when <= 0), then
  // one Adam step. Returns the pre-clip gradient norm.
  double apply_gradient(std::vector<double> grad, double learning_rate,
                        double max_grad_norm);

  // Versioned text format; values are written as hexadecimal floats so a
  // reload is bit-exact.
  std::string serialize() const;
  static PolicySnapshot deserialize(const std::string& text);
  void save(const std::filesystem::path& path) const;
  static PolicySnapshot load(const std::filesystem::path& path);

  friend bool operator==(const PolicySnapshot& a, const PolicySnapshot& b) {
    return a.arch_ == b.arch_ && a.params_ == b.params_ && a.adam_ == b.adam_;
  }

 private:
  void build_towers();

  ArchitectureDescriptor arch_;
  nn::Tower actor_;
  nn::Tower critic_;
  std::vector<double> params_;
  AdamState adam_;
};

// Numerically stable log-softmax over a column vector.
nn::Vec log_softmax(const nn::Vec& logits);

}  // namespace gridfm
