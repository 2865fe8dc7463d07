#include "gridfm/prompt.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <regex>
#include <sstream>

#include <nlohmann/json.hpp>

#include "gridfm/errors.hpp"
#include "prompt_assets.hpp"

namespace gridfm {
namespace {

using namespace std::string_view_literals;

constexpr std::array kTransitionTokens = {token::kGridSize,
                                          token::kObservation, token::kAction};
constexpr std::array kTransitionRewardTokens = {
    token::kGridSize, token::kObservation, token::kAction,
    token::kRewardLocation};
constexpr std::array kRewardSampleTokens = {token::kGridSize};
constexpr std::array kStickyTokens = {token::kP1, token::kP2};
constexpr std::array kKeyTokens = {
    token::kGridSize,       token::kObservation, token::kAction,
    token::kRewardLocation, token::kKeyLocation, token::kMemory};
constexpr std::array kAgentTokens = {token::kGridSize, token::kRewardLocation,
                                     token::kObservation, token::kMemory};

std::string format_probability(double p) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", p);
  return buf;
}

std::optional<int> to_int(std::string_view s) {
  int value = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return value;
}

const std::regex& strict_pair_re() {
  static const std::regex re(
      R"(^\s*\[\s*(-?\d+)\s*,\s*(-?\d+)\s*\]\s*(?:,\s*(-?\d+)\s*)?\.?\s*$)");
  return re;
}

const std::regex& any_pair_re() {
  static const std::regex re(R"(\[\s*(-?\d+)\s*,\s*(-?\d+)\s*\])");
  return re;
}

// First integer token that is not glued to a letter, digit, or decimal point.
std::optional<int> first_standalone_binary(std::string_view text) {
  size_t i = 0;
  while (i < text.size()) {
    if (!std::isdigit(static_cast<unsigned char>(text[i]))) {
      ++i;
      continue;
    }
    size_t j = i;
    while (j < text.size() && std::isdigit(static_cast<unsigned char>(text[j])))
      ++j;
    const bool glued_left =
        i > 0 && (std::isalnum(static_cast<unsigned char>(text[i - 1])) ||
                  text[i - 1] == '.' || text[i - 1] == '-');
    const bool glued_right =
        j < text.size() &&
        (std::isalpha(static_cast<unsigned char>(text[j])) ||
         (text[j] == '.' && j + 1 < text.size() &&
          std::isdigit(static_cast<unsigned char>(text[j + 1]))));
    if (!glued_left && !glued_right) {
      auto v = to_int(text.substr(i, j - i));
      if (v && (*v == 0 || *v == 1)) return v;
    }
    i = j;
  }
  return std::nullopt;
}

Cell cell_from_match(const std::smatch& m, std::string_view raw) {
  auto x = to_int(m[1].str());
  auto y = to_int(m[2].str());
  if (!x || !y) throw ParseError("coordinate out of integer range", std::string(raw));
  return {*x, *y};
}

}  // namespace

std::string_view template_name(TemplateId id) {
  switch (id) {
    case TemplateId::kT:
      return "T";
    case TemplateId::kTPlusR:
      return "T_plus_R";
    case TemplateId::kTMinimal:
      return "T_minimal";
    case TemplateId::kTMinimalPlusR:
      return "T_minimal_plus_R";
    case TemplateId::kRewardSample:
      return "RewardSample";
    case TemplateId::kStickySample:
      return "StickySample";
    case TemplateId::kKeyT:
      return "Key_T";
    case TemplateId::kFaAo:
      return "FA_AO";
    case TemplateId::kFaSp:
      return "FA_SP";
    case TemplateId::kFaFp:
      return "FA_FP";
  }
  return "?";
}

std::optional<TemplateId> parse_template_id(std::string_view name) {
  for (TemplateId id : kAllTemplateIds) {
    if (template_name(id) == name) return id;
  }
  return std::nullopt;
}

bool includes_reward(TemplateId id) {
  return id == TemplateId::kTPlusR || id == TemplateId::kTMinimalPlusR ||
         id == TemplateId::kKeyT;
}

bool is_transition_template(TemplateId id) {
  return std::find(kTransitionTemplateIds.begin(), kTransitionTemplateIds.end(),
                   id) != kTransitionTemplateIds.end();
}

std::span<const std::string_view> declared_placeholders(TemplateId id) {
  switch (id) {
    case TemplateId::kT:
    case TemplateId::kTMinimal:
      return kTransitionTokens;
    case TemplateId::kTPlusR:
    case TemplateId::kTMinimalPlusR:
      return kTransitionRewardTokens;
    case TemplateId::kRewardSample:
      return kRewardSampleTokens;
    case TemplateId::kStickySample:
      return kStickyTokens;
    case TemplateId::kKeyT:
      return kKeyTokens;
    case TemplateId::kFaAo:
    case TemplateId::kFaSp:
    case TemplateId::kFaFp:
      return kAgentTokens;
  }
  return {};
}

TemplateLibrary::TemplateLibrary(std::map<TemplateId, std::string> bodies) {
  for (TemplateId id : kAllTemplateIds) {
    auto it = bodies.find(id);
    if (it == bodies.end()) {
      throw ConfigError("template library is missing " +
                        std::string(template_name(id)));
    }
    const auto declared = declared_placeholders(id);
    for (std::string_view tok : token::kAll) {
      if (it->second.find(tok) == std::string::npos) continue;
      if (std::find(declared.begin(), declared.end(), tok) == declared.end()) {
        throw ConfigError("template " + std::string(template_name(id)) +
                          " uses undeclared placeholder " + std::string(tok));
      }
    }
    templates_.emplace(id, PromptTemplate{id, std::move(it->second)});
  }
}

const TemplateLibrary& TemplateLibrary::builtin() {
  static const TemplateLibrary lib = [] {
    std::map<TemplateId, std::string> bodies;
    for (TemplateId id : kAllTemplateIds) {
      auto asset = detail::builtin_prompt_asset(template_name(id));
      if (!asset) {
        throw ConfigError("no built-in asset for template " +
                          std::string(template_name(id)));
      }
      bodies.emplace(id, std::string(*asset));
    }
    return TemplateLibrary(std::move(bodies));
  }();
  return lib;
}

TemplateLibrary TemplateLibrary::from_directory(
    const std::filesystem::path& dir) {
  std::map<TemplateId, std::string> bodies;
  for (TemplateId id : kAllTemplateIds) {
    const auto path = dir / (std::string(template_name(id)) + ".txt");
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read template file " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    bodies.emplace(id, ss.str());
  }
  return TemplateLibrary(std::move(bodies));
}

const PromptTemplate& TemplateLibrary::get(TemplateId id) const {
  return templates_.at(id);
}

std::string render(const PromptTemplate& tmpl, const Binding& binding) {
  const auto declared = declared_placeholders(tmpl.id);
  for (std::string_view tok : declared) {
    if (tmpl.body.find(tok) != std::string::npos && !binding.contains(tok)) {
      throw RenderError("missing binding for placeholder " + std::string(tok) +
                            " in template " +
                            std::string(template_name(tmpl.id)),
                        std::string(tok));
    }
  }
  // Single pass so bound text is never rescanned for tokens.
  const std::string& body = tmpl.body;
  std::string out;
  out.reserve(body.size() + 256);
  size_t pos = 0;
  while (pos < body.size()) {
    const size_t open = body.find('<', pos);
    if (open == std::string::npos) break;
    out.append(body, pos, open - pos);
    std::string_view rest = std::string_view(body).substr(open);
    std::string_view hit;
    for (std::string_view tok : declared) {
      if (rest.starts_with(tok)) {
        hit = tok;
        break;
      }
    }
    if (hit.empty()) {
      out.push_back('<');
      pos = open + 1;
    } else {
      out.append(binding.find(hit)->second);
      pos = open + hit.size();
    }
  }
  out.append(body, pos, std::string::npos);
  return out;
}

Binding transition_binding(int n, Cell observation, Action action,
                           std::optional<Cell> reward_location) {
  Binding b;
  b.emplace(token::kGridSize, std::to_string(n));
  b.emplace(token::kObservation, format_cell(observation));
  b.emplace(token::kAction, std::string(to_string(action)));
  if (reward_location) {
    b.emplace(token::kRewardLocation, format_cell(*reward_location));
  }
  return b;
}

Binding key_transition_binding(int n, Cell observation, Action action,
                               Cell reward_location, Cell key_location,
                               const std::vector<Cell>& history) {
  Binding b = transition_binding(n, observation, action, reward_location);
  b.emplace(token::kKeyLocation, format_cell(key_location));
  std::vector<std::string> lines;
  lines.reserve(history.size());
  for (Cell c : history) lines.push_back(format_cell(c));
  b.emplace(token::kMemory, render_memory(lines));
  return b;
}

Binding reward_sample_binding(int n) {
  Binding b;
  b.emplace(token::kGridSize, std::to_string(n));
  return b;
}

Binding sticky_sample_binding(double p1) {
  Binding b;
  b.emplace(token::kP1, format_probability(p1));
  b.emplace(token::kP2, format_probability(1.0 - p1));
  return b;
}

Binding agent_binding(int n, std::string reward_text, Cell observation,
                      const std::vector<std::string>& memory) {
  Binding b;
  b.emplace(token::kGridSize, std::to_string(n));
  b.emplace(token::kRewardLocation, std::move(reward_text));
  b.emplace(token::kObservation, format_cell(observation));
  b.emplace(token::kMemory, render_memory(memory));
  return b;
}

std::string render_memory(const std::vector<std::string>& lines) {
  if (lines.empty()) return "(nothing yet)";
  std::string out;
  for (size_t i = 0; i < lines.size(); ++i) {
    if (i) out += '\n';
    out += lines[i];
  }
  return out;
}

ParsedTransition parse_transition(std::string_view response,
                                  bool expects_reward) {
  const std::string text(response);
  std::smatch m;
  if (std::regex_match(text, m, strict_pair_re())) {
    const bool has_reward = m[3].matched;
    if (has_reward == expects_reward) {
      ParsedTransition out{cell_from_match(m, response), std::nullopt};
      if (!expects_reward) return out;
      auto r = to_int(m[3].str());
      if (r && (*r == 0 || *r == 1)) {
        out.reward = *r;
        return out;
      }
    }
  }

  if (!std::regex_search(text, m, any_pair_re())) {
    throw ParseError("no bracketed coordinate pair in response", text);
  }
  ParsedTransition out{cell_from_match(m, response), std::nullopt};
  if (expects_reward) {
    const auto pos = static_cast<size_t>(m.position(0));
    const auto len = static_cast<size_t>(m.length(0));
    std::string_view view(text);
    auto r = first_standalone_binary(view.substr(pos + len));
    if (!r) r = first_standalone_binary(view.substr(0, pos));
    if (!r) throw ParseError("no reward value in response", text);
    out.reward = *r;
  }
  return out;
}

Cell parse_location(std::string_view response) {
  return parse_transition(response, false).next_cell;
}

int parse_binary_outcome(std::string_view response) {
  auto v = first_standalone_binary(response);
  if (!v) throw ParseError("no 0/1 outcome in response", std::string(response));
  return *v;
}

std::string_view strategy_name(FaStrategy strategy) {
  switch (strategy) {
    case FaStrategy::kAO:
      return "AO";
    case FaStrategy::kSP:
      return "SP";
    case FaStrategy::kFP:
      return "FP";
  }
  return "?";
}

std::optional<FaStrategy> parse_strategy(std::string_view name) {
  for (FaStrategy s : {FaStrategy::kAO, FaStrategy::kSP, FaStrategy::kFP}) {
    if (strategy_name(s) == name) return s;
  }
  return std::nullopt;
}

TemplateId template_for(FaStrategy strategy) {
  switch (strategy) {
    case FaStrategy::kAO:
      return TemplateId::kFaAo;
    case FaStrategy::kSP:
      return TemplateId::kFaSp;
    case FaStrategy::kFP:
      return TemplateId::kFaFp;
  }
  return TemplateId::kFaAo;
}

ParsedAgentTurn parse_agent_turn(std::string_view response,
                                 FaStrategy strategy) {
  const std::string raw(response);
  const auto open = response.find('{');
  const auto close = response.rfind('}');
  if (open == std::string_view::npos || close == std::string_view::npos ||
      close < open) {
    throw ParseError("no JSON object in agent response", raw);
  }
  nlohmann::json doc = nlohmann::json::parse(
      response.substr(open, close - open + 1), nullptr, /*allow_exceptions=*/false);
  if (!doc.is_object()) throw ParseError("malformed JSON in agent response", raw);

  auto action_it = doc.find("action");
  if (action_it == doc.end() || !action_it->is_string()) {
    throw ParseError("agent response lacks a string \"action\"", raw);
  }
  auto action = parse_action(action_it->get<std::string>());
  if (!action) {
    throw ParseError("unknown action \"" + action_it->get<std::string>() + "\"",
                     raw);
  }
  ParsedAgentTurn turn{*action, std::nullopt, std::nullopt};
  if (strategy == FaStrategy::kAO) return turn;

  auto plan_it = doc.find("plan");
  if (plan_it == doc.end() || !plan_it->is_string()) {
    throw ParseError("agent response lacks a string \"plan\"", raw);
  }
  turn.plan = plan_it->get<std::string>();
  if (strategy == FaStrategy::kFP) {
    auto target_it = doc.find("target");
    if (target_it != doc.end()) {
      turn.target = target_it->is_string() ? target_it->get<std::string>()
                                           : target_it->dump();
    }
  }
  return turn;
}

std::string build_memory_line(Action action, Cell from, Cell to, int reward) {
  std::string line = "Executed ";
  line += to_string(action);
  line += " at " + format_cell(from) + " resulting in " + format_cell(to);
  line += reward == 1 ? " and the reward." : " and no reward.";
  return line;
}

std::string build_plan_line(std::string_view plan) {
  return "Plan: " + std::string(plan);
}

}  // namespace gridfm
