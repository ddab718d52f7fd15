#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "optdialog/backend.hpp"
#include "optdialog/detection.hpp"
#include "optdialog/labels.hpp"
#include "optdialog/prompt.hpp"
#include "optdialog/transcript.hpp"

namespace optdialog {

struct RunConfig {
  AblationSetting setting = AblationSetting::D;
  int rounds = 2;
  DecodingParams decoding;
  NmsConfig nms;
  int retry_limit = 2;
  int parallelism = 1;

  // Defaults for a setting: one round unless the setting is multi-turn.
  static RunConfig defaults_for(AblationSetting setting);
};

int default_rounds(AblationSetting setting);

// Throws ConfigError listing every violated field.
void validate(const RunConfig& cfg);

struct DialogueResult {
  Prediction prediction;
  Transcript transcript;
  std::optional<std::string> backend_failure;  // set when the backend gave out mid-dialogue
};

struct DialogueOptions {
  // When false, BackendUnavailable propagates; when true the dialogue stops,
  // keeps the partial transcript, and resolves a prediction from it.
  bool absorb_backend_failure = false;
};

// Runs the fixed-order dialogue for one image. Setting D: per round, Food
// Scientist, Vision Analyst, then Decision Maker, each seeing every earlier
// turn. Settings A-C: one Generalist turn per round; in C each round sees the
// Generalist's earlier answers.
DialogueResult run_dialogue(const ImageAttachment& image, const PerceptionTokenSet& tokens, const LabelSpace& labels,
                            const RunConfig& cfg, const ChatBackend& backend, const PromptBuilder& prompts = {},
                            const DialogueOptions& options = {});

// Next prompt after an unparseable answer, or nullopt once `retries_used`
// has reached the retry limit.
std::optional<PromptBundle> apply_retry(const PromptBuilder& prompts, const PromptBundle& attempt_prompt,
                                        AgentRole role, const LabelSpace& labels, std::string_view failed_output,
                                        const ParseFailure& failure, int retries_used, const RunConfig& cfg);

// Prediction for a transcript whose final turn failed to parse. Setting D
// falls back to the latest clean Vision Analyst answer, then the latest
// clean Food Scientist answer; settings A-C to the latest clean earlier
// Generalist answer. Otherwise Abstain.
Prediction resolve_fallback(const Transcript& transcript);

// Prediction for a finished transcript: the final turn when it parsed,
// resolve_fallback otherwise.
Prediction resolve_prediction(const Transcript& transcript);

// Writes `<dir>/<image_id>.transcript.json`; returns the path written.
std::filesystem::path write_transcript(const std::filesystem::path& dir, const Transcript& transcript,
                                       const Prediction& prediction, const LabelSpace& labels);

}  // namespace optdialog
