#include "gridfm/backend.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <charconv>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include <openssl/evp.h>

#include "gridfm/errors.hpp"
#include "gridfm/prompt.hpp"

namespace gridfm {
namespace {

using Clock = std::chrono::steady_clock;

// Parses "[x, y]" (any spacing) at the start of `text`.
std::optional<Cell> read_cell(std::string_view text) {
  auto skip_ws = [&] {
    while (!text.empty() && (text.front() == ' ' || text.front() == '\t'))
      text.remove_prefix(1);
  };
  auto read_int = [&]() -> std::optional<int> {
    skip_ws();
    int v = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc()) return std::nullopt;
    text.remove_prefix(static_cast<size_t>(ptr - text.data()));
    return v;
  };
  skip_ws();
  if (text.empty() || text.front() != '[') return std::nullopt;
  text.remove_prefix(1);
  auto x = read_int();
  skip_ws();
  if (!x || text.empty() || text.front() != ',') return std::nullopt;
  text.remove_prefix(1);
  auto y = read_int();
  skip_ws();
  if (!y || text.empty() || text.front() != ']') return std::nullopt;
  return Cell{*x, *y};
}

std::optional<Cell> cell_after(std::string_view text, std::string_view label) {
  auto pos = text.find(label);
  if (pos == std::string_view::npos) return std::nullopt;
  return read_cell(text.substr(pos + label.size()));
}

std::optional<int> int_after(std::string_view text, std::string_view label) {
  auto pos = text.find(label);
  if (pos == std::string_view::npos) return std::nullopt;
  text.remove_prefix(pos + label.size());
  int v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc()) return std::nullopt;
  return v;
}

std::optional<double> double_after(std::string_view text,
                                   std::string_view label) {
  auto pos = text.find(label);
  if (pos == std::string_view::npos) return std::nullopt;
  std::string rest(text.substr(pos + label.size(), 32));
  char* end = nullptr;
  double v = std::strtod(rest.c_str(), &end);
  if (end == rest.c_str()) return std::nullopt;
  return v;
}

// Marker phrases of the shipped prompt assets.
constexpr std::string_view kGridSizeLabel = "grid world environment of size ";
constexpr std::string_view kStateLabel = "Current state: ";
constexpr std::string_view kActionLabel = "\nAction: ";
constexpr std::string_view kRewardFormat = "in the format [x, y], reward";
constexpr std::string_view kRewardLabel = "The reward is located at ";
constexpr std::string_view kKeyLabel = "A key is located at ";
constexpr std::string_view kHistoryLabel = "States visited earlier in this episode:\n";
constexpr std::string_view kUniformLabel = "Sample one position uniformly";
constexpr std::string_view kStickyLabel = "Outcome 1 occurs with probability ";

BackendResponse timed(Clock::time_point start, std::string text) {
  return {std::move(text), Clock::now() - start, false};
}

}  // namespace

void BackendRequest::validate() const {
  if (prompt.empty()) throw UsageError("backend request with empty prompt");
  if (!(temperature >= 0.0 && temperature <= 2.0)) {
    throw UsageError("temperature must lie in [0, 2], got " +
                     std::to_string(temperature));
  }
  if (max_tokens <= 0) {
    throw UsageError("max_tokens must be positive, got " + std::to_string(max_tokens));
  }
}

std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(),
                 nullptr) != 1) {
    throw BackendError("SHA-256 digest failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xf]);
  }
  return out;
}

std::string cache_key(std::string_view model_id, std::string_view prompt,
                      double temperature) {
  char temp[40];
  std::snprintf(temp, sizeof(temp), "%.17g", temperature);
  std::string material;
  material.reserve(model_id.size() + prompt.size() + 48);
  material.append(model_id).push_back('\x1f');
  material.append(temp).push_back('\x1f');
  material.append(prompt);
  return sha256_hex(material);
}

ResponseCache::ResponseCache(std::filesystem::path path)
    : path_(std::move(path)) {
  if (path_->has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path_->parent_path(), ec);
  }
  load();
}

void ResponseCache::load() {
  std::ifstream in(*path_, std::ios::binary);
  if (!in) return;
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string data = ss.str();
  size_t pos = 0;
  while (pos < data.size()) {
    const size_t sp1 = data.find(' ', pos);
    if (sp1 == std::string::npos) break;
    const size_t sp2 = data.find(' ', sp1 + 1);
    if (sp2 == std::string::npos) break;
    size_t len = 0;
    auto [ptr, ec] = std::from_chars(data.data() + sp1 + 1, data.data() + sp2, len);
    if (ec != std::errc() || ptr != data.data() + sp2) break;
    const size_t text_begin = sp2 + 1;
    if (text_begin + len >= data.size() || data[text_begin + len] != '\n') break;
    entries_[data.substr(pos, sp1 - pos)] = data.substr(text_begin, len);
    pos = text_begin + len + 1;
  }
}

std::string ResponseCache::encode_record(const std::string& digest,
                                         const std::string& text) {
  std::string rec = digest;
  rec += ' ';
  rec += std::to_string(text.size());
  rec += ' ';
  rec += text;
  rec += '\n';
  return rec;
}

std::optional<std::string> ResponseCache::get(const std::string& digest) const {
  std::lock_guard lock(mu_);
  auto it = entries_.find(digest);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void ResponseCache::put(const std::string& digest, const std::string& text) {
  std::lock_guard lock(mu_);
  entries_.insert_or_assign(digest, text);
  if (!path_) return;
  // One write() on an O_APPEND descriptor keeps records from concurrent
  // processes from interleaving.
  const std::string rec = encode_record(digest, text);
  const int fd = ::open(path_->c_str(), O_WRONLY | O_CREAT | O_APPEND, 0644);
  if (fd < 0) {
    throw BackendError("cannot open cache file " + path_->string() + ": " +
                       std::strerror(errno));
  }
  const ssize_t written = ::write(fd, rec.data(), rec.size());
  ::close(fd);
  if (written != static_cast<ssize_t>(rec.size())) {
    throw BackendError("short write to cache file " + path_->string());
  }
}

size_t ResponseCache::size() const {
  std::lock_guard lock(mu_);
  return entries_.size();
}

CachedBackend::CachedBackend(std::shared_ptr<ModelBackend> inner,
                             std::shared_ptr<ResponseCache> cache)
    : inner_(std::move(inner)), cache_(std::move(cache)) {
  if (!inner_) throw UsageError("CachedBackend needs a backend");
  if (!cache_) cache_ = std::make_shared<ResponseCache>();
}

BackendResponse CachedBackend::complete(const BackendRequest& request) {
  request.validate();
  const bool cacheable = request.temperature == 0.0;
  std::string key;
  if (cacheable) {
    key = cache_key(inner_->model_id(), request.prompt, request.temperature);
    if (request.use_cache) {
      if (auto hit = cache_->get(key)) {
        ++cache_hits_;
        return {std::move(*hit), std::chrono::duration<double>(0.0), true};
      }
    }
  }
  ++live_calls_;
  BackendResponse resp = inner_->complete(request);
  if (cacheable) cache_->put(key, resp.text);
  return resp;
}

// ---------------------------------------------------------------------------

OracleMock::OracleMock(std::uint64_t seed) : rng_(seed) {}

std::optional<OracleMock::TransitionQuery> OracleMock::read_transition_query(
    std::string_view prompt) {
  auto state = cell_after(prompt, kStateLabel);
  auto n = int_after(prompt, kGridSizeLabel);
  auto action_pos = prompt.find(kActionLabel);
  if (!state || !n || action_pos == std::string_view::npos) return std::nullopt;
  std::string_view rest = prompt.substr(action_pos + kActionLabel.size());
  rest = rest.substr(0, rest.find('\n'));
  auto action = parse_action(rest);
  if (!action) return std::nullopt;

  TransitionQuery q;
  q.n = *n;
  q.state = *state;
  q.action = *action;
  q.expects_reward = prompt.find(kRewardFormat) != std::string_view::npos;
  q.reward = cell_after(prompt, kRewardLabel);
  q.key = cell_after(prompt, kKeyLabel);
  if (auto h = prompt.find(kHistoryLabel); h != std::string_view::npos) {
    std::string_view block = prompt.substr(h + kHistoryLabel.size());
    block = block.substr(0, block.find("\n\n"));
    while (!block.empty()) {
      auto eol = block.find('\n');
      if (auto c = read_cell(block.substr(0, eol))) q.history.push_back(*c);
      if (eol == std::string_view::npos) break;
      block.remove_prefix(eol + 1);
    }
  }
  return q;
}

Cell OracleMock::true_next(const TransitionQuery& q) {
  return apply_move(q.state, q.action, q.n);
}

std::string OracleMock::answer(const TransitionQuery& q, Cell next) {
  std::string out = format_cell(next);
  if (q.expects_reward) {
    bool has_key = true;
    if (q.key) {
      has_key = next == *q.key || q.state == *q.key ||
                std::find(q.history.begin(), q.history.end(), *q.key) !=
                    q.history.end();
    }
    const bool hit = q.reward && next == *q.reward && has_key;
    out += hit ? ", 1" : ", 0";
  }
  return out;
}

BackendResponse OracleMock::complete(const BackendRequest& request) {
  request.validate();
  const auto start = Clock::now();
  const std::string_view prompt = request.prompt;
  if (auto q = read_transition_query(prompt)) {
    return timed(start, answer(*q, true_next(*q)));
  }
  if (prompt.find(kUniformLabel) != std::string_view::npos) {
    auto n = int_after(prompt, "grid world environment of size ");
    if (n && *n > 0) {
      std::lock_guard lock(mu_);
      std::uniform_int_distribution<int> pick(0, *n * *n - 1);
      const int idx = pick(rng_);
      return timed(start, format_cell({idx % *n, idx / *n}));
    }
  }
  if (auto p1 = double_after(prompt, kStickyLabel)) {
    std::lock_guard lock(mu_);
    std::bernoulli_distribution coin(std::clamp(*p1, 0.0, 1.0));
    return timed(start, coin(rng_) ? "1" : "0");
  }
  return timed(start, "I cannot answer this prompt.");
}

std::string_view error_model_name(ErrorModel model) {
  switch (model) {
    case ErrorModel::kClamp:
      return "clamp";
    case ErrorModel::kEdgeClamp:
      return "edge_clamp";
    case ErrorModel::kWrongAxis:
      return "wrong_axis";
  }
  return "?";
}

std::optional<ErrorModel> parse_error_model(std::string_view name) {
  for (auto m : {ErrorModel::kClamp, ErrorModel::kEdgeClamp,
                 ErrorModel::kWrongAxis}) {
    if (error_model_name(m) == name) return m;
  }
  return std::nullopt;
}

NoisyMock::NoisyMock(double error_rate, ErrorModel model, std::uint64_t seed)
    : OracleMock(seed), error_rate_(error_rate), model_(model), seed_(seed) {
  if (!(error_rate >= 0.0 && error_rate < 1.0)) {
    throw ConfigError("NoisyMock error_rate must lie in [0, 1), got " +
                      std::to_string(error_rate));
  }
}

bool NoisyMock::corrupts(std::string_view prompt) const {
  const std::string digest =
      sha256_hex(std::to_string(seed_) + '\x1f' + std::string(prompt));
  std::uint64_t bits = 0;
  std::from_chars(digest.data(), digest.data() + 16, bits, 16);
  const double u = static_cast<double>(bits >> 11) * 0x1.0p-53;
  return u < error_rate_;
}

BackendResponse NoisyMock::complete(const BackendRequest& request) {
  auto q = read_transition_query(request.prompt);
  if (!q || !corrupts(request.prompt)) return OracleMock::complete(request);
  const auto start = Clock::now();
  Cell next = true_next(*q);
  const Cell s = q->state;
  switch (model_) {
    case ErrorModel::kClamp:
      next = s;
      break;
    case ErrorModel::kEdgeClamp:
      if (s.x == 0 || s.y == 0 || s.x == q->n - 1 || s.y == q->n - 1) next = s;
      break;
    case ErrorModel::kWrongAxis: {
      static constexpr Action kSwapped[] = {Action::kRight, Action::kLeft,
                                            Action::kDown, Action::kUp};
      next = apply_move(s, kSwapped[static_cast<int>(q->action)], q->n);
      break;
    }
  }
  return timed(start, answer(*q, next));
}

DistributionMock::DistributionMock(std::vector<std::string> answers,
                                   std::vector<double> weights,
                                   std::uint64_t seed)
    : answers_(std::move(answers)), rng_(seed) {
  if (answers_.empty() || answers_.size() != weights.size()) {
    throw ConfigError("DistributionMock needs one weight per answer");
  }
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) {
      throw ConfigError("DistributionMock weights must be finite and >= 0");
    }
    total += w;
  }
  if (total <= 0.0) throw ConfigError("DistributionMock weights sum to zero");
  dist_ = std::discrete_distribution<size_t>(weights.begin(), weights.end());
}

std::unique_ptr<DistributionMock> DistributionMock::uniform_grid(
    int n, std::uint64_t seed) {
  std::vector<std::string> answers;
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) answers.push_back(format_cell({x, y}));
  std::vector<double> weights(answers.size(), 1.0);
  return std::make_unique<DistributionMock>(std::move(answers),
                                            std::move(weights), seed);
}

BackendResponse DistributionMock::complete(const BackendRequest& request) {
  request.validate();
  const auto start = Clock::now();
  std::lock_guard lock(mu_);
  return timed(start, answers_[dist_(rng_)]);
}

ScriptedMock::ScriptedMock(std::vector<std::string> responses,
                           ScriptIndexing indexing)
    : responses_(std::move(responses)), indexing_(indexing) {
  if (responses_.empty()) throw ConfigError("ScriptedMock needs responses");
}

BackendResponse ScriptedMock::complete(const BackendRequest& request) {
  request.validate();
  const auto start = Clock::now();
  ++calls_;
  size_t index = 0;
  if (indexing_ == ScriptIndexing::kSequential) {
    std::lock_guard lock(mu_);
    index = cursor_++;
  } else {
    std::string_view p = request.prompt;
    for (size_t pos = p.find("Executed "); pos != std::string_view::npos;
         pos = p.find("Executed ", pos + 1)) {
      ++index;
    }
  }
  return timed(start, responses_[index % responses_.size()]);
}

// ---------------------------------------------------------------------------

Cell sample_location(ModelBackend& backend, const std::string& prompt, int n,
                     int max_attempts) {
  BackendRequest req{backend.model_id(), prompt, kSamplingTemperature, 64, false};
  std::string last;
  for (int attempt = 0; attempt < std::max(1, max_attempts); ++attempt) {
    last = backend.complete(req).text;
    try {
      return parse_location(last);
    } catch (const ParseError&) {
    }
  }
  throw SamplingError("no location parsed for the " + std::to_string(n) + "x" +
                      std::to_string(n) + " grid after " +
                      std::to_string(max_attempts) +
                      " attempts; last response: " + last);
}

int sample_binary(ModelBackend& backend, const std::string& prompt,
                  int max_attempts) {
  BackendRequest req{backend.model_id(), prompt, kSamplingTemperature, 16, false};
  std::string last;
  for (int attempt = 0; attempt < std::max(1, max_attempts); ++attempt) {
    last = backend.complete(req).text;
    try {
      return parse_binary_outcome(last);
    } catch (const ParseError&) {
    }
  }
  throw SamplingError("no 0/1 outcome parsed after " +
                      std::to_string(max_attempts) +
                      " attempts; last response: " + last);
}

}  // namespace gridfm
