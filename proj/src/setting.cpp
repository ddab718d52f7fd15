#include <cctype>

#include "optdialog/setting.hpp"
#include "optdialog/transcript.hpp"

namespace optdialog {

std::optional<AblationSetting> parse_setting(std::string_view text) {
  if (text.size() != 1) return std::nullopt;
  switch (std::tolower(static_cast<unsigned char>(text.front()))) {
    case 'a': return AblationSetting::A;
    case 'b': return AblationSetting::B;
    case 'c': return AblationSetting::C;
    case 'd': return AblationSetting::D;
    default: return std::nullopt;
  }
}

std::string_view to_string(AgentRole role) {
  switch (role) {
    case AgentRole::FoodScientist: return "food_scientist";
    case AgentRole::VisionAnalyst: return "vision_analyst";
    case AgentRole::DecisionMaker: return "decision_maker";
    case AgentRole::Generalist: return "generalist";
  }
  return "?";
}

std::string_view display_name(AgentRole role) {
  switch (role) {
    case AgentRole::FoodScientist: return "Food Scientist";
    case AgentRole::VisionAnalyst: return "Vision Analyst";
    case AgentRole::DecisionMaker: return "Decision Maker";
    case AgentRole::Generalist: return "Generalist";
  }
  return "?";
}

std::optional<AgentRole> parse_role(std::string_view text) {
  for (auto role : {AgentRole::FoodScientist, AgentRole::VisionAnalyst, AgentRole::DecisionMaker,
                    AgentRole::Generalist}) {
    if (text == to_string(role)) return role;
  }
  return std::nullopt;
}

std::string_view to_string(Verdict verdict) {
  switch (verdict) {
    case Verdict::Agree: return "AGREE";
    case Verdict::Disagree: return "DISAGREE";
    case Verdict::Refine: return "REFINE";
  }
  return "?";
}

std::optional<Verdict> parse_verdict(std::string_view text) {
  std::string upper;
  for (unsigned char c : text) upper.push_back(static_cast<char>(std::toupper(c)));
  if (upper == "AGREE") return Verdict::Agree;
  if (upper == "DISAGREE") return Verdict::Disagree;
  if (upper == "REFINE") return Verdict::Refine;
  return std::nullopt;
}

std::string_view to_string(PredictionSource source) {
  switch (source) {
    case PredictionSource::Decider: return "decider";
    case PredictionSource::FallbackVision: return "fallback_vision";
    case PredictionSource::FallbackFood: return "fallback_food";
    case PredictionSource::FallbackGeneralist: return "fallback_generalist";
    case PredictionSource::Abstain: return "abstain";
  }
  return "?";
}

std::optional<PredictionSource> parse_prediction_source(std::string_view text) {
  for (auto s : {PredictionSource::Decider, PredictionSource::FallbackVision, PredictionSource::FallbackFood,
                 PredictionSource::FallbackGeneralist, PredictionSource::Abstain}) {
    if (text == to_string(s)) return s;
  }
  return std::nullopt;
}

}  // namespace optdialog
