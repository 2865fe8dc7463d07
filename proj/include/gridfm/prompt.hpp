#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gridfm/grid_env.hpp"

namespace gridfm {

enum class TemplateId {
  kT,
  kTPlusR,
  kTMinimal,
  kTMinimalPlusR,
  kRewardSample,
  kStickySample,
  kKeyT,
  kFaAo,
  kFaSp,
  kFaFp,
};

inline constexpr std::array<TemplateId, 10> kAllTemplateIds = {
    TemplateId::kT,           TemplateId::kTPlusR,
    TemplateId::kTMinimal,    TemplateId::kTMinimalPlusR,
    TemplateId::kRewardSample, TemplateId::kStickySample,
    TemplateId::kKeyT,        TemplateId::kFaAo,
    TemplateId::kFaSp,        TemplateId::kFaFp};

inline constexpr std::array<TemplateId, 4> kTransitionTemplateIds = {
    TemplateId::kT, TemplateId::kTPlusR, TemplateId::kTMinimal,
    TemplateId::kTMinimalPlusR};

// Placeholder tokens.
namespace token {
inline constexpr std::string_view kGridSize = "<n>";
inline constexpr std::string_view kRewardLocation = "<REWARD LOCATION>";
inline constexpr std::string_view kObservation = "<OBSERVATION>";
inline constexpr std::string_view kAction = "<ACTION>";
inline constexpr std::string_view kMemory = "<MEMORY>";
inline constexpr std::string_view kP1 = "<P1>";
inline constexpr std::string_view kP2 = "<P2>";
inline constexpr std::string_view kKeyLocation = "<KEY LOCATION>";
inline constexpr std::array<std::string_view, 8> kAll = {
    kGridSize, kRewardLocation, kObservation, kAction,
    kMemory,   kP1,             kP2,          kKeyLocation};
}  // namespace token

// "T", "T_plus_R", ..., "FA_FP". Also the asset file stem.
std::string_view template_name(TemplateId id);
std::optional<TemplateId> parse_template_id(std::string_view name);
// True for ids whose response carries a reward (T_plus_R, T_minimal_plus_R,
// Key_T).
bool includes_reward(TemplateId id);
bool is_transition_template(TemplateId id);
std::span<const std::string_view> declared_placeholders(TemplateId id);

struct PromptTemplate {
  TemplateId id;
  std::string body;
};

using Binding = std::map<std::string, std::string, std::less<>>;

// Holds one body per TemplateId. Bodies are validated on construction: a
// body may only use placeholders declared for its id.
class TemplateLibrary {
 public:
  // Bodies compiled in from assets/prompts at build time.
  static const TemplateLibrary& builtin();
  // Reads <dir>/<template_name>.txt for every id.
  static TemplateLibrary from_directory(const std::filesystem::path& dir);

  explicit TemplateLibrary(std::map<TemplateId, std::string> bodies);

  const PromptTemplate& get(TemplateId id) const;

 private:
  std::map<TemplateId, PromptTemplate> templates_;
};

// Substitutes every declared placeholder. Throws RenderError naming the first
// declared token with no binding.
std::string render(const PromptTemplate& tmpl, const Binding& binding);

// Binding helpers; coordinates use format_cell, actions lowercase words.
Binding transition_binding(int n, Cell observation, Action action,
                           std::optional<Cell> reward_location);
Binding key_transition_binding(int n, Cell observation, Action action,
                               Cell reward_location, Cell key_location,
                               const std::vector<Cell>& history);
Binding reward_sample_binding(int n);
Binding sticky_sample_binding(double p1);
// `reward_text` is either a formatted cell or free text such as
// "a random coordinate".
Binding agent_binding(int n, std::string reward_text, Cell observation,
                      const std::vector<std::string>& memory);

// Memory block text; "(nothing yet)" when empty.
std::string render_memory(const std::vector<std::string>& lines);

struct ParsedTransition {
  Cell next_cell;
  std::optional<int> reward;
};

// Strict "[x, y]" / "[x, y], r" first, then the first bracketed integer pair
// anywhere in the text (and the first standalone 0/1 token for the reward).
ParsedTransition parse_transition(std::string_view response,
                                  bool expects_reward);

// Any bracketed integer pair; used for sampled reward locations.
Cell parse_location(std::string_view response);

// "1" or "0" outcome of a sticky sample.
int parse_binary_outcome(std::string_view response);

enum class FaStrategy { kAO, kSP, kFP };
std::string_view strategy_name(FaStrategy strategy);
std::optional<FaStrategy> parse_strategy(std::string_view name);
TemplateId template_for(FaStrategy strategy);

struct ParsedAgentTurn {
  Action action;
  std::optional<std::string> plan;
  std::optional<std::string> target;
};

// Expects a JSON object somewhere in the response. Unknown keys are ignored;
// SP and FP must carry a "plan" string.
ParsedAgentTurn parse_agent_turn(std::string_view response,
                                 FaStrategy strategy);

// "Executed right at [0, 0] resulting in [1, 0] and no reward."
std::string build_memory_line(Action action, Cell from, Cell to, int reward);
std::string build_plan_line(std::string_view plan);

}  // namespace gridfm
