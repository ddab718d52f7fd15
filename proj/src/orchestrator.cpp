#include "optdialog/orchestrator.hpp"

#include <fstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "optdialog/error.hpp"

namespace optdialog {

int default_rounds(AblationSetting setting) { return multi_turn(setting) ? 2 : 1; }

RunConfig RunConfig::defaults_for(AblationSetting setting) {
  RunConfig cfg;
  cfg.setting = setting;
  cfg.rounds = default_rounds(setting);
  return cfg;
}

void validate(const RunConfig& cfg) {
  std::vector<FieldIssue> issues;
  if (cfg.rounds < 1) issues.push_back({"rounds", "must be >= 1"});
  if (!multi_turn(cfg.setting) && cfg.rounds != 1) {
    issues.push_back({"rounds", fmt::format("setting {} is single-turn; rounds must be 1", to_string(cfg.setting))});
  }
  if (!(cfg.decoding.temperature >= 0.0)) issues.push_back({"decoding.temperature", "must be >= 0"});
  if (cfg.decoding.max_new_tokens < 1) issues.push_back({"decoding.max_new_tokens", "must be >= 1"});
  if (cfg.retry_limit < 0) issues.push_back({"retry_limit", "must be >= 0"});
  if (cfg.parallelism < 1) issues.push_back({"parallelism", "must be >= 1"});
  try {
    validate(cfg.nms);
  } catch (const ConfigError& e) {
    issues.insert(issues.end(), e.issues().begin(), e.issues().end());
  }
  if (!issues.empty()) throw ConfigError(std::move(issues));
}

std::optional<PromptBundle> apply_retry(const PromptBuilder& prompts, const PromptBundle& attempt_prompt,
                                        AgentRole role, const LabelSpace& labels, std::string_view failed_output,
                                        const ParseFailure& failure, int retries_used, const RunConfig& cfg) {
  if (retries_used >= cfg.retry_limit) return std::nullopt;
  return prompts.build_retry_prompt(attempt_prompt, role, cfg.setting, labels, failed_output, failure);
}

namespace {

Prediction from_turn(const Transcript& t, const DialogueTurn& turn, PredictionSource source) {
  return Prediction{t.image_id, turn.hypothesis->label_index, source, {}};
}

const DialogueTurn* last_clean(const Transcript& t, AgentRole role, std::size_t before) {
  for (std::size_t i = before; i-- > 0;) {
    if (t.turns[i].role == role && t.turns[i].clean()) return &t.turns[i];
  }
  return nullptr;
}

}  // namespace

Prediction resolve_fallback(const Transcript& transcript) {
  const std::size_t n = transcript.turns.size();
  if (ira_enabled(transcript.setting)) {
    if (const auto* v = last_clean(transcript, AgentRole::VisionAnalyst, n)) {
      return from_turn(transcript, *v, PredictionSource::FallbackVision);
    }
    if (const auto* f = last_clean(transcript, AgentRole::FoodScientist, n)) {
      return from_turn(transcript, *f, PredictionSource::FallbackFood);
    }
  } else {
    // Earlier rounds only; the final turn is the one that failed.
    const std::size_t before = n == 0 ? 0 : n - 1;
    if (const auto* g = last_clean(transcript, AgentRole::Generalist, before)) {
      return from_turn(transcript, *g, PredictionSource::FallbackGeneralist);
    }
  }
  return Prediction{transcript.image_id, std::nullopt, PredictionSource::Abstain, {}};
}

Prediction resolve_prediction(const Transcript& transcript) {
  if (!transcript.turns.empty()) {
    const auto& last = transcript.turns.back();
    const AgentRole final_role = ira_enabled(transcript.setting) ? AgentRole::DecisionMaker : AgentRole::Generalist;
    if (last.role == final_role && last.round == transcript.rounds && last.clean()) {
      return from_turn(transcript, last, PredictionSource::Decider);
    }
  }
  return resolve_fallback(transcript);
}

DialogueResult run_dialogue(const ImageAttachment& image, const PerceptionTokenSet& tokens, const LabelSpace& labels,
                            const RunConfig& cfg, const ChatBackend& backend, const PromptBuilder& prompts,
                            const DialogueOptions& options) {
  validate(cfg);
  DialogueResult result;
  Transcript& t = result.transcript;
  t.image_id = image.image_id;
  t.setting = cfg.setting;
  t.rounds = cfg.rounds;
  t.template_version = prompts.templates().version();

  const std::size_t turns_per_round = ira_enabled(cfg.setting) ? 3 : 1;
  try {
    for (int round = 1; round <= cfg.rounds; ++round) {
      for (std::size_t slot = 0; slot < turns_per_round; ++slot) {
        const AgentRole role = expected_role(cfg.setting, t.turns.size());
        PromptBundle prompt = prompts.build_turn_prompt(role, t, tokens, labels, image, cfg.setting);

        DialogueTurn turn;
        turn.round = round;
        turn.role = role;
        turn.prompt_digest = prompt.digest();

        for (int attempt = 1;; ++attempt) {
          ChatRequest req{prompt.messages, image, cfg.decoding.temperature, cfg.decoding.max_new_tokens,
                          RequestTag{image.image_id, role, round, attempt, cfg.setting}};
          const ChatResponse res = backend.chat(req);

          TurnAttempt record{attempt, res.text, res.truncated, std::nullopt};
          turn.raw_response = res.text;
          turn.retries_used = attempt - 1;
          try {
            turn.hypothesis = parse_agent_output(role, res.text, labels);
            turn.error.reset();
            turn.attempts.push_back(std::move(record));
            break;
          } catch (const Error& e) {
            if (!is_parse_error(e.code())) throw;
            ParseFailure failure{e.code(), e.what(), e.subject()};
            record.error = failure;
            turn.error = failure;
            turn.attempts.push_back(std::move(record));
            auto retry = apply_retry(prompts, prompt, role, labels, res.text, failure, attempt - 1, cfg);
            if (!retry) break;
            prompt = std::move(*retry);
          }
        }
        t.turns.push_back(std::move(turn));
      }
      t.final_round = round;
    }
  } catch (const Error& e) {
    if (e.code() != ErrorCode::BackendUnavailable || !options.absorb_backend_failure) throw;
    result.backend_failure = e.what();
  }

  result.prediction = result.backend_failure
                          ? Prediction{t.image_id, std::nullopt, PredictionSource::Abstain, {}}
                          : resolve_prediction(t);
  return result;
}

std::filesystem::path write_transcript(const std::filesystem::path& dir, const Transcript& transcript,
                                       const Prediction& prediction, const LabelSpace& labels) {
  std::filesystem::create_directories(dir);
  const auto path = dir / (transcript.image_id + ".transcript.json");
  nlohmann::json doc = to_json(transcript, labels);
  doc["prediction"] = to_json(prediction, labels);
  doc["prediction"].erase("transcript_path");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string(), path.string());
  out << doc.dump(2) << '\n';
  if (!out) throw Error(ErrorCode::Io, "failed writing " + path.string(), path.string());
  return path;
}

}  // namespace optdialog
