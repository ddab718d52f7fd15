#include "optdialog/prompt.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <openssl/evp.h>

#include "optdialog/error.hpp"

namespace optdialog {

namespace {

constexpr std::array<AgentRole, 3> kIraOrder = {AgentRole::FoodScientist, AgentRole::VisionAnalyst,
                                                AgentRole::DecisionMaker};

std::string lower(std::string_view text) {
  std::string out(text);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::string_view trim(std::string_view s, std::string_view chars = " \t\r\n") {
  const auto first = s.find_first_not_of(chars);
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(chars);
  return s.substr(first, last - first + 1);
}

// Collapses runs of blank lines left behind by empty sections and trims the ends.
std::string tidy(std::string_view text) {
  std::string out;
  int newlines = 0;
  for (char c : trim(text)) {
    if (c == '\n') {
      if (++newlines > 2) continue;
    } else {
      newlines = 0;
    }
    out.push_back(c);
  }
  return out;
}

}  // namespace

std::string render_template(std::string_view text, const std::map<std::string, std::string, std::less<>>& values) {
  std::string out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto end = text.find('\n', pos);
    const bool last = end == std::string_view::npos;
    if (last) end = text.size();
    const std::string_view line = text.substr(pos, end - pos);

    // Drop a placeholder-only line whose value is empty.
    const auto stripped = trim(line, " \t\r");
    if (stripped.size() > 2 && stripped.front() == '{' && stripped.back() == '}' && stripped[1] != '{') {
      const auto name = stripped.substr(1, stripped.size() - 2);
      const auto it = values.find(name);
      if (it != values.end() && it->second.empty()) {
        pos = end + 1;
        if (last) break;
        continue;
      }
    }

    for (std::size_t i = 0; i < line.size(); ++i) {
      const char c = line[i];
      if (c == '{' && i + 1 < line.size() && line[i + 1] == '{') {
        out.push_back('{');
        ++i;
      } else if (c == '}' && i + 1 < line.size() && line[i + 1] == '}') {
        out.push_back('}');
        ++i;
      } else if (c == '{') {
        const auto close = line.find('}', i);
        if (close == std::string_view::npos) {
          throw Error(ErrorCode::MalformedTemplate, "unterminated placeholder", std::string(line));
        }
        const auto name = line.substr(i + 1, close - i - 1);
        const auto it = values.find(name);
        if (it == values.end()) {
          throw Error(ErrorCode::MalformedTemplate, "unknown placeholder {" + std::string(name) + "}",
                      std::string(name));
        }
        out += it->second;
        i = close;
      } else {
        out.push_back(c);
      }
    }
    if (last) break;
    out.push_back('\n');
    pos = end + 1;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Templates

PromptTemplate TemplateSet::parse(std::string_view text, std::string* version, std::string_view origin) {
  PromptTemplate tpl;
  std::string* current = nullptr;
  bool seen_system = false;
  bool seen_user = false;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (current == nullptr && (line.empty() || line.front() == '#')) {
      constexpr std::string_view kVersionTag = "# version:";
      if (version != nullptr && line.rfind(kVersionTag, 0) == 0) {
        *version = std::string(trim(std::string_view(line).substr(kVersionTag.size())));
      }
      continue;
    }
    if (line == "[role_instructions]") {
      current = &tpl.role_instructions;
    } else if (line == "[system]") {
      current = &tpl.system;
      seen_system = true;
    } else if (line == "[user]") {
      current = &tpl.user;
      seen_user = true;
    } else if (line == "[reminder]") {
      current = &tpl.reminder;
    } else if (current == nullptr) {
      throw Error(ErrorCode::MalformedTemplate, "text before the first section", std::string(origin));
    } else {
      *current += line;
      *current += '\n';
    }
  }
  if (!seen_system || !seen_user) {
    throw Error(ErrorCode::MalformedTemplate, "template needs [system] and [user] sections", std::string(origin));
  }
  for (auto* section : {&tpl.role_instructions, &tpl.system, &tpl.user, &tpl.reminder}) {
    *section = std::string(trim(*section));
  }
  return tpl;
}

TemplateSet TemplateSet::load_directory(const std::filesystem::path& dir) {
  TemplateSet set;
  std::string version;
  for (auto setting : kAllSettings) {
    for (auto role : {AgentRole::FoodScientist, AgentRole::VisionAnalyst, AgentRole::DecisionMaker,
                      AgentRole::Generalist}) {
      if (!role_in_setting(role, setting)) continue;
      const auto path = dir / fmt::format("{}.{}.txt", to_string(role), to_string(setting));
      std::ifstream in(path, std::ios::binary);
      if (!in) throw Error(ErrorCode::MalformedTemplate, "missing template file " + path.string(), path.string());
      std::ostringstream buf;
      buf << in.rdbuf();
      std::string file_version;
      set.add(role, setting, parse(buf.str(), &file_version, path.string()));
      if (file_version.empty()) {
        throw Error(ErrorCode::MalformedTemplate, "template lacks a '# version:' line", path.string());
      }
      if (!version.empty() && file_version != version) {
        throw Error(ErrorCode::MalformedTemplate, "template versions disagree", path.string());
      }
      version = file_version;
    }
  }
  set.set_version(version);
  return set;
}

void TemplateSet::add(AgentRole role, AblationSetting setting, PromptTemplate tpl) {
  templates_[{role, setting}] = std::move(tpl);
}

const PromptTemplate& TemplateSet::get(AgentRole role, AblationSetting setting) const {
  if (!role_in_setting(role, setting)) {
    throw Error(ErrorCode::OrderViolation,
                fmt::format("role {} does not take part in setting {}", to_string(role), to_string(setting)));
  }
  const auto it = templates_.find({role, setting});
  if (it == templates_.end()) {
    throw Error(ErrorCode::MalformedTemplate,
                fmt::format("no template for {} in setting {}", to_string(role), to_string(setting)));
  }
  return it->second;
}

// ---------------------------------------------------------------------------
// Prompt pieces

bool role_in_setting(AgentRole role, AblationSetting setting) {
  return ira_enabled(setting) ? role != AgentRole::Generalist : role == AgentRole::Generalist;
}

AgentRole expected_role(AblationSetting setting, std::size_t turns_so_far) {
  return ira_enabled(setting) ? kIraOrder[turns_so_far % kIraOrder.size()] : AgentRole::Generalist;
}

std::string build_class_list(const LabelSpace& labels) {
  std::string out;
  for (const auto& name : labels.names()) {
    if (!out.empty()) out += '\n';
    out += "- " + name;
  }
  return out;
}

std::string build_opt_block(const PerceptionTokenSet& tokens) {
  if (tokens.empty()) return "no detected foreground objects";
  std::string out;
  for (std::size_t i = 0; i < tokens.boxes.size(); ++i) {
    const auto& b = tokens.boxes[i].box;
    if (i > 0) out += '\n';
    out += fmt::format("object {}: center=({:.3f},{:.3f}) size=({:.3f},{:.3f})", i + 1, b.cx, b.cy, b.w, b.h);
  }
  return out;
}

namespace {

std::string contract_line(AgentRole role, const Hypothesis& h, const LabelSpace& labels, std::string_view verdict_sep) {
  std::string out = fmt::format("Category: {}; Reasoning: {}", labels.name(h.label_index), h.rationale);
  if (role == AgentRole::VisionAnalyst && h.verdict) {
    out += verdict_sep;
    out += fmt::format("Verdict: {}", to_string(*h.verdict));
  }
  return out;
}

}  // namespace

std::string format_hypothesis(AgentRole role, const Hypothesis& hypothesis, const LabelSpace& labels) {
  return contract_line(role, hypothesis, labels, "\n");
}

std::string build_history(const Transcript& transcript, const LabelSpace& labels) {
  if (transcript.turns.empty()) return {};
  std::string out = "Dialogue so far:";
  for (const auto& turn : transcript.turns) {
    out += fmt::format("\n[round {}] {}: ", turn.round, display_name(turn.role));
    out += turn.hypothesis ? contract_line(turn.role, *turn.hypothesis, labels, "; ") : "no valid answer";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Output parsing

namespace {

constexpr std::string_view kDecoration = " \t\r\n*`\"'<>[]_";

[[noreturn]] void parse_fail(ErrorCode code, const std::string& message, std::string subject = {}) {
  throw Error(code, message, std::move(subject));
}

}  // namespace

Hypothesis parse_agent_output(AgentRole role, std::string_view text, const LabelSpace& labels) {
  const std::string folded = lower(text);

  constexpr std::string_view kCategory = "category:";
  constexpr std::string_view kReasoning = "reasoning:";
  constexpr std::string_view kVerdict = "verdict:";

  const auto cat_pos = folded.rfind(kCategory);
  if (cat_pos == std::string::npos) parse_fail(ErrorCode::MissingCategory, "no 'Category:' field");
  const auto cat_begin = cat_pos + kCategory.size();
  auto cat_end = folded.find_first_of(";\r\n", cat_begin);
  if (cat_end == std::string::npos) cat_end = folded.size();
  if (const auto r = folded.find(kReasoning, cat_begin); r != std::string::npos && r < cat_end) cat_end = r;
  const std::string category(trim(text.substr(cat_begin, cat_end - cat_begin), kDecoration));
  if (category.empty()) parse_fail(ErrorCode::MissingCategory, "empty 'Category:' field");

  auto reason_pos = folded.find(kReasoning, cat_begin);
  if (reason_pos == std::string::npos) reason_pos = folded.rfind(kReasoning);
  if (reason_pos == std::string::npos) parse_fail(ErrorCode::MissingReasoning, "no 'Reasoning:' field");
  const auto reason_begin = reason_pos + kReasoning.size();
  auto reason_end = folded.find_first_of("\r\n", reason_begin);
  if (reason_end == std::string::npos) reason_end = folded.size();
  if (const auto v = folded.find(kVerdict, reason_begin); v != std::string::npos && v < reason_end) reason_end = v;
  std::string_view rationale = text.substr(reason_begin, reason_end - reason_begin);
  rationale = trim(rationale, " \t;*");
  if (rationale.empty()) parse_fail(ErrorCode::MissingReasoning, "empty 'Reasoning:' field");

  Hypothesis h;
  h.label_index = match_label(category, labels);
  h.raw_label_text = category;
  h.rationale = std::string(rationale);

  if (role == AgentRole::VisionAnalyst) {
    const auto v_pos = folded.rfind(kVerdict);
    if (v_pos == std::string::npos) parse_fail(ErrorCode::MissingVerdict, "no 'Verdict:' field");
    std::size_t i = v_pos + kVerdict.size();
    while (i < text.size() && kDecoration.find(text[i]) != std::string_view::npos && text[i] != '\n') ++i;
    std::size_t j = i;
    while (j < text.size() && std::isalpha(static_cast<unsigned char>(text[j]))) ++j;
    const auto word = text.substr(i, j - i);
    h.verdict = parse_verdict(word);
    if (!h.verdict) parse_fail(ErrorCode::MissingVerdict, "verdict must be AGREE, DISAGREE or REFINE", std::string(word));
  }
  return h;
}

// ---------------------------------------------------------------------------
// Bundles

std::string PromptBundle::digest() const {
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  const auto feed = [ctx](std::string_view part) {
    EVP_DigestUpdate(ctx, part.data(), part.size());
    EVP_DigestUpdate(ctx, "\0", 1);
  };
  for (const auto& m : messages) {
    feed(m.role);
    feed(m.content);
  }
  feed(image.descriptor());
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, md.data(), &len);
  EVP_MD_CTX_free(ctx);
  std::string hex;
  hex.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) hex += fmt::format("{:02x}", md[i]);
  return hex;
}

std::string PromptBuilder::build_system_prompt(AgentRole role, const LabelSpace& labels,
                                               AblationSetting setting) const {
  const auto& tpl = templates_->get(role, setting);
  const std::map<std::string, std::string, std::less<>> values = {
      {"role_instructions", tpl.role_instructions},
      {"class_list", build_class_list(labels)},
      {"opt_block", ""},
      {"history", ""},
  };
  return tidy(render_template(tpl.system, values));
}

PromptBundle PromptBuilder::build_turn_prompt(AgentRole role, const Transcript& transcript,
                                              const PerceptionTokenSet& tokens, const LabelSpace& labels,
                                              const ImageAttachment& image, AblationSetting setting) const {
  if (transcript.setting != setting) {
    throw Error(ErrorCode::OrderViolation, "transcript belongs to a different setting");
  }
  const auto& tpl = templates_->get(role, setting);
  const std::size_t n = transcript.turns.size();
  if (!multi_turn(setting) && n > 0) {
    throw Error(ErrorCode::OrderViolation, fmt::format("setting {} allows a single turn", to_string(setting)));
  }
  if (const auto due = expected_role(setting, n); due != role) {
    throw Error(ErrorCode::OrderViolation,
                fmt::format("{} cannot speak yet: {} is due", to_string(role), to_string(due)));
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (transcript.turns[i].role != expected_role(setting, i)) {
      throw Error(ErrorCode::OrderViolation, "transcript turns are out of order");
    }
  }

  const std::map<std::string, std::string, std::less<>> values = {
      {"role_instructions", tpl.role_instructions},
      {"class_list", build_class_list(labels)},
      {"opt_block", opt_enabled(setting) ? build_opt_block(tokens) : std::string()},
      {"history", build_history(transcript, labels)},
  };
  PromptBundle bundle;
  bundle.system_text = tidy(render_template(tpl.system, values));
  bundle.messages.push_back({"system", bundle.system_text});
  bundle.messages.push_back({"user", tidy(render_template(tpl.user, values))});
  bundle.image = image;
  return bundle;
}

PromptBundle PromptBuilder::build_retry_prompt(const PromptBundle& previous, AgentRole role, AblationSetting setting,
                                               const LabelSpace& labels, std::string_view failed_output,
                                               const ParseFailure& failure) const {
  const auto& tpl = templates_->get(role, setting);
  const std::map<std::string, std::string, std::less<>> values = {
      {"role_instructions", tpl.role_instructions},
      {"class_list", build_class_list(labels)},
      {"opt_block", ""},
      {"history", ""},
      {"error", failure.message},
  };
  PromptBundle bundle = previous;
  bundle.messages.push_back({"assistant", std::string(failed_output)});
  bundle.messages.push_back({"user", tidy(render_template(tpl.reminder, values))});
  return bundle;
}

}  // namespace optdialog
