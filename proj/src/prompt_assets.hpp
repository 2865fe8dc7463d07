#pragma once

#include <optional>
#include <string_view>

namespace gridfm::detail {

// Generated at configure time from assets/prompts/*.txt.
std::optional<std::string_view> builtin_prompt_asset(std::string_view stem);

}  // namespace gridfm::detail
