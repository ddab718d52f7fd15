#pragma once

#include <optional>
#include <string_view>

namespace optdialog {

// Ablation settings, cumulative: a = bare prompt, b = +perception tokens,
// c = +multi-turn refinement, d = +three-role interactive reasoning.
enum class AblationSetting { A, B, C, D };

inline constexpr AblationSetting kAllSettings[] = {AblationSetting::A, AblationSetting::B, AblationSetting::C,
                                                   AblationSetting::D};

constexpr bool opt_enabled(AblationSetting s) { return s != AblationSetting::A; }
constexpr bool multi_turn(AblationSetting s) { return s == AblationSetting::C || s == AblationSetting::D; }
constexpr bool ira_enabled(AblationSetting s) { return s == AblationSetting::D; }

constexpr std::string_view to_string(AblationSetting s) {
  switch (s) {
    case AblationSetting::A: return "a";
    case AblationSetting::B: return "b";
    case AblationSetting::C: return "c";
    case AblationSetting::D: return "d";
  }
  return "?";
}

// Accepts "a".."d" in either case.
std::optional<AblationSetting> parse_setting(std::string_view text);

enum class AgentRole { FoodScientist, VisionAnalyst, DecisionMaker, Generalist };

std::string_view to_string(AgentRole role);        // snake_case key, e.g. "food_scientist"
std::string_view display_name(AgentRole role);     // e.g. "Food Scientist"
std::optional<AgentRole> parse_role(std::string_view text);

}  // namespace optdialog
