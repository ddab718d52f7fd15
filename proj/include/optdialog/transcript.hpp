#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "optdialog/error.hpp"
#include "optdialog/labels.hpp"
#include "optdialog/setting.hpp"

namespace optdialog {

enum class Verdict { Agree, Disagree, Refine };

std::string_view to_string(Verdict verdict);  // "AGREE" | "DISAGREE" | "REFINE"
std::optional<Verdict> parse_verdict(std::string_view text);

// One agent's answer: a class plus the rationale behind it.
struct Hypothesis {
  std::size_t label_index = 0;
  std::string raw_label_text;
  std::string rationale;
  std::optional<Verdict> verdict;  // VisionAnalyst only

  bool operator==(const Hypothesis&) const = default;
};

struct ParseFailure {
  ErrorCode code = ErrorCode::MissingCategory;
  std::string message;
  std::string subject;

  bool operator==(const ParseFailure&) const = default;
};

struct TurnAttempt {
  int attempt = 1;  // 1-based; attempt k > 1 is retry k-1
  std::string raw_response;
  bool truncated = false;
  std::optional<ParseFailure> error;
};

struct DialogueTurn {
  int round = 1;
  AgentRole role = AgentRole::Generalist;
  std::string prompt_digest;
  std::string raw_response;  // final attempt
  std::optional<Hypothesis> hypothesis;
  std::optional<ParseFailure> error;
  int retries_used = 0;
  std::vector<TurnAttempt> attempts;

  bool clean() const { return hypothesis.has_value(); }
};

struct Transcript {
  std::string image_id;
  AblationSetting setting = AblationSetting::D;
  int rounds = 1;
  int final_round = 0;
  std::string template_version;
  std::vector<DialogueTurn> turns;
};

enum class PredictionSource { Decider, FallbackVision, FallbackFood, FallbackGeneralist, Abstain };

std::string_view to_string(PredictionSource source);
std::optional<PredictionSource> parse_prediction_source(std::string_view text);

struct Prediction {
  std::string image_id;
  std::optional<std::size_t> label_index;  // empty iff Abstain
  PredictionSource source = PredictionSource::Abstain;
  std::string transcript_path;
};

nlohmann::json to_json(const Transcript& transcript, const LabelSpace& labels);
nlohmann::json to_json(const Prediction& prediction, const LabelSpace& labels);
Transcript transcript_from_json(const nlohmann::json& doc);

}  // namespace optdialog
