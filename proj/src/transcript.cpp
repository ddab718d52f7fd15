#include "optdialog/transcript.hpp"

#include <nlohmann/json.hpp>

namespace optdialog {

namespace {

nlohmann::json failure_json(const std::optional<ParseFailure>& f) {
  if (!f) return nullptr;
  return {{"kind", std::string(to_string(f->code))}, {"message", f->message}, {"subject", f->subject}};
}

std::optional<ParseFailure> failure_from(const nlohmann::json& j) {
  if (j.is_null()) return std::nullopt;
  ParseFailure f;
  const auto kind = j.at("kind").get<std::string>();
  for (auto code : {ErrorCode::MissingCategory, ErrorCode::MissingReasoning, ErrorCode::MissingVerdict,
                    ErrorCode::UnknownLabel, ErrorCode::AmbiguousLabel}) {
    if (kind == to_string(code)) f.code = code;
  }
  f.message = j.at("message").get<std::string>();
  f.subject = j.value("subject", "");
  return f;
}

}  // namespace

nlohmann::json to_json(const Transcript& t, const LabelSpace& labels) {
  nlohmann::json turns = nlohmann::json::array();
  for (const auto& turn : t.turns) {
    nlohmann::json attempts = nlohmann::json::array();
    for (const auto& a : turn.attempts) {
      attempts.push_back({{"attempt", a.attempt},
                          {"raw_response", a.raw_response},
                          {"truncated", a.truncated},
                          {"error", failure_json(a.error)}});
    }
    nlohmann::json hyp = nullptr;
    if (turn.hypothesis) {
      const auto& h = *turn.hypothesis;
      hyp = {{"label_index", h.label_index},
             {"label", labels.name(h.label_index)},
             {"raw_label_text", h.raw_label_text},
             {"rationale", h.rationale},
             {"verdict", h.verdict ? nlohmann::json(std::string(to_string(*h.verdict))) : nlohmann::json(nullptr)}};
    }
    turns.push_back({{"round", turn.round},
                     {"role", std::string(to_string(turn.role))},
                     {"prompt_digest", turn.prompt_digest},
                     {"raw_response", turn.raw_response},
                     {"hypothesis", hyp},
                     {"error", failure_json(turn.error)},
                     {"retries_used", turn.retries_used},
                     {"attempts", attempts}});
  }
  return {{"image_id", t.image_id},
          {"setting", std::string(to_string(t.setting))},
          {"rounds", t.rounds},
          {"final_round", t.final_round},
          {"template_version", t.template_version},
          {"turns", turns}};
}

nlohmann::json to_json(const Prediction& p, const LabelSpace& labels) {
  return {{"image_id", p.image_id},
          {"label", p.label_index ? nlohmann::json(labels.name(*p.label_index)) : nlohmann::json(nullptr)},
          {"source", std::string(to_string(p.source))},
          {"transcript_path", p.transcript_path}};
}

Transcript transcript_from_json(const nlohmann::json& doc) {
  Transcript t;
  t.image_id = doc.at("image_id").get<std::string>();
  t.setting = parse_setting(doc.at("setting").get<std::string>()).value();
  t.rounds = doc.at("rounds").get<int>();
  t.final_round = doc.at("final_round").get<int>();
  t.template_version = doc.value("template_version", "");
  for (const auto& j : doc.at("turns")) {
    DialogueTurn turn;
    turn.round = j.at("round").get<int>();
    turn.role = parse_role(j.at("role").get<std::string>()).value();
    turn.prompt_digest = j.at("prompt_digest").get<std::string>();
    turn.raw_response = j.at("raw_response").get<std::string>();
    turn.retries_used = j.at("retries_used").get<int>();
    turn.error = failure_from(j.at("error"));
    if (const auto& h = j.at("hypothesis"); !h.is_null()) {
      Hypothesis hyp;
      hyp.label_index = h.at("label_index").get<std::size_t>();
      hyp.raw_label_text = h.at("raw_label_text").get<std::string>();
      hyp.rationale = h.at("rationale").get<std::string>();
      if (const auto& v = h.at("verdict"); !v.is_null()) hyp.verdict = parse_verdict(v.get<std::string>());
      turn.hypothesis = std::move(hyp);
    }
    for (const auto& a : j.at("attempts")) {
      turn.attempts.push_back({a.at("attempt").get<int>(), a.at("raw_response").get<std::string>(),
                               a.at("truncated").get<bool>(), failure_from(a.at("error"))});
    }
    t.turns.push_back(std::move(turn));
  }
  return t;
}

}  // namespace optdialog
