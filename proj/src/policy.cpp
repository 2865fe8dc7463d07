#include "gridfm/policy.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "gridfm/errors.hpp"

namespace gridfm {
namespace {

constexpr const char* kMagic = "gridfm-policy";
constexpr int kFormatVersion = 1;

constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEps = 1e-5;

std::string hexfloat(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%a", v);
  return buf;
}

void write_array(std::ostream& out, const char* name,
                 const std::vector<double>& values) {
  out << name << ' ' << values.size() << '\n';
  for (double v : values) out << hexfloat(v) << '\n';
}

std::vector<double> read_array(std::istream& in, const char* name) {
  std::string key;
  std::size_t count = 0;
  if (!(in >> key >> count) || key != name) {
    throw ConfigError(std::string("policy file: expected array '") + name + "'");
  }
  std::vector<double> values(count);
  std::string tok;
  for (std::size_t i = 0; i < count; ++i) {
    if (!(in >> tok)) throw ConfigError("policy file: truncated array");
    char* end = nullptr;
    values[i] = std::strtod(tok.c_str(), &end);
    if (end != tok.c_str() + tok.size()) {
      throw ConfigError("policy file: bad number '" + tok + "'");
    }
  }
  return values;
}

int read_int(std::istream& in, const char* name) {
  std::string key;
  long long v = 0;
  if (!(in >> key >> v) || key != name) {
    throw ConfigError(std::string("policy file: expected '") + name + "'");
  }
  return static_cast<int>(v);
}

}  // namespace

int feature_dim(const GridConfig& config) {
  return 2 + (config.observe_reward ? 2 : 0) + (config.has_key_variant() ? 1 : 0);
}

nn::Vec encode_features(const Observation& obs, const GridConfig& config) {
  nn::Vec f(feature_dim(config));
  const double scale = 1.0 / (config.n - 1);
  int i = 0;
  f(i++) = obs.agent.x * scale;
  f(i++) = obs.agent.y * scale;
  if (config.observe_reward) {
    if (!obs.reward) throw UsageError("observation lacks the reward location");
    f(i++) = obs.reward->x * scale;
    f(i++) = obs.reward->y * scale;
  }
  if (config.has_key_variant()) f(i++) = obs.has_key.value_or(false) ? 1.0 : 0.0;
  return f;
}

nn::Vec log_softmax(const nn::Vec& logits) {
  const double mx = logits.maxCoeff();
  const double lse = mx + std::log((logits.array() - mx).exp().sum());
  return (logits.array() - lse).matrix();
}

PolicySnapshot::PolicySnapshot(ArchitectureDescriptor arch,
                               std::uint64_t init_seed)
    : arch_(arch) {
  build_towers();
  Rng rng(init_seed);
  actor_.init(params_.data(), rng, 0.01);
  critic_.init(params_.data() + actor_.num_params(), rng, 0.0);
}

void PolicySnapshot::build_towers() {
  if (arch_.feature_dim < 1 || arch_.num_actions < 2) {
    throw ConfigError("policy architecture needs features and >= 2 actions");
  }
  actor_ = nn::Tower(arch_.feature_dim, arch_.num_actions, arch_.shape());
  critic_ = nn::Tower(arch_.feature_dim, 1, arch_.shape());
  params_.assign(actor_.num_params() + critic_.num_params(), 0.0);
  adam_.m.assign(params_.size(), 0.0);
  adam_.v.assign(params_.size(), 0.0);
  adam_.t = 0;
}

PolicyStep PolicySnapshot::step(const nn::Vec& features, nn::Vec& hidden) const {
  const int h = hidden_size();
  nn::Vec ha = hidden.head(h);
  nn::Vec hc = hidden.tail(h);
  PolicyStep out;
  out.log_probs = log_softmax(actor_.step(actor_params(), features, ha));
  out.value = critic_.step(critic_params(), features, hc)(0);
  if (h > 0) {
    hidden.head(h) = ha;
    hidden.tail(h) = hc;
  }
  return out;
}

double PolicySnapshot::apply_gradient(std::vector<double> grad,
                                      double learning_rate,
                                      double max_grad_norm) {
  if (grad.size() != params_.size()) {
    throw UsageError("gradient size does not match parameter count");
  }
  double sq = 0.0;
  for (double g : grad) sq += g * g;
  const double norm = std::sqrt(sq);
  if (max_grad_norm > 0.0 && norm > max_grad_norm) {
    const double s = max_grad_norm / (norm + 1e-6);
    for (double& g : grad) g *= s;
  }
  ++adam_.t;
  const double c1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(adam_.t));
  const double c2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(adam_.t));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    adam_.m[i] = kAdamBeta1 * adam_.m[i] + (1.0 - kAdamBeta1) * grad[i];
    adam_.v[i] = kAdamBeta2 * adam_.v[i] + (1.0 - kAdamBeta2) * grad[i] * grad[i];
    const double mhat = adam_.m[i] / c1;
    const double vhat = adam_.v[i] / c2;
    params_[i] -= learning_rate * mhat / (std::sqrt(vhat) + kAdamEps);
  }
  return norm;
}

std::string PolicySnapshot::serialize() const {
  std::ostringstream out;
  out << kMagic << ' ' << kFormatVersion << '\n'
      << "feature_dim " << arch_.feature_dim << '\n'
      << "num_actions " << arch_.num_actions << '\n'
      << "recurrent " << (arch_.recurrent ? 1 : 0) << '\n'
      << "hidden1 " << arch_.hidden1 << '\n'
      << "hidden2 " << arch_.hidden2 << '\n'
      << "encoder " << arch_.encoder << '\n'
      << "recurrent_size " << arch_.recurrent_size << '\n'
      << "adam_t " << adam_.t << '\n';
  write_array(out, "params", params_);
  write_array(out, "adam_m", adam_.m);
  write_array(out, "adam_v", adam_.v);
  return out.str();
}

PolicySnapshot PolicySnapshot::deserialize(const std::string& text) {
  std::istringstream in(text);
  std::string magic;
  int version = 0;
  if (!(in >> magic >> version) || magic != kMagic) {
    throw ConfigError("not a policy snapshot");
  }
  if (version != kFormatVersion) {
    throw ConfigError("unsupported policy snapshot version " +
                      std::to_string(version));
  }
  PolicySnapshot p;
  p.arch_.feature_dim = read_int(in, "feature_dim");
  p.arch_.num_actions = read_int(in, "num_actions");
  p.arch_.recurrent = read_int(in, "recurrent") != 0;
  p.arch_.hidden1 = read_int(in, "hidden1");
  p.arch_.hidden2 = read_int(in, "hidden2");
  p.arch_.encoder = read_int(in, "encoder");
  p.arch_.recurrent_size = read_int(in, "recurrent_size");
  std::string key;
  if (!(in >> key >> p.adam_.t) || key != "adam_t") {
    throw ConfigError("policy file: expected 'adam_t'");
  }
  const std::int64_t t = p.adam_.t;
  p.build_towers();
  p.adam_.t = t;
  auto params = read_array(in, "params");
  auto m = read_array(in, "adam_m");
  auto v = read_array(in, "adam_v");
  if (params.size() != p.params_.size() || m.size() != params.size() ||
      v.size() != params.size()) {
    throw ConfigError("policy file: parameter count " +
                      std::to_string(params.size()) +
                      " does not match the architecture (" +
                      std::to_string(p.params_.size()) + ")");
  }
  p.params_ = std::move(params);
  p.adam_.m = std::move(m);
  p.adam_.v = std::move(v);
  return p;
}

void PolicySnapshot::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << serialize();
}

PolicySnapshot PolicySnapshot::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize(ss.str());
}

}  // namespace gridfm
