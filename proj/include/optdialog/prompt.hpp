#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "optdialog/detection.hpp"
#include "optdialog/image.hpp"
#include "optdialog/labels.hpp"
#include "optdialog/setting.hpp"
#include "optdialog/transcript.hpp"

namespace optdialog {

// Text of one (role, setting) template file. Sections may reference the
// placeholders {role_instructions}, {class_list}, {opt_block}, {history};
// the reminder section may also use {error}.
struct PromptTemplate {
  std::string role_instructions;
  std::string system;
  std::string user;
  std::string reminder;
};

class TemplateSet {
 public:
  // Templates compiled into the library from templates/<version>/.
  static const TemplateSet& builtin();
  // Loads `<role>.<setting>.txt` files from a directory. Throws MalformedTemplate.
  static TemplateSet load_directory(const std::filesystem::path& dir);
  // Parses a single template file body; `version` receives its declared version.
  static PromptTemplate parse(std::string_view text, std::string* version, std::string_view origin);

  void add(AgentRole role, AblationSetting setting, PromptTemplate tpl);
  // Throws OrderViolation when the role does not take part in the setting and
  // MalformedTemplate when no template was registered.
  const PromptTemplate& get(AgentRole role, AblationSetting setting) const;

  const std::string& version() const { return version_; }
  void set_version(std::string v) { version_ = std::move(v); }

 private:
  std::map<std::pair<AgentRole, AblationSetting>, PromptTemplate> templates_;
  std::string version_;
};

// Replaces {name} placeholders. A line that holds nothing but a placeholder
// whose value is empty is removed along with its line break. "{{" and "}}"
// produce literal braces. Unknown placeholders throw MalformedTemplate.
std::string render_template(std::string_view text, const std::map<std::string, std::string, std::less<>>& values);

struct ChatMessage {
  std::string role;  // "system" | "user" | "assistant"
  std::string content;

  bool operator==(const ChatMessage&) const = default;
};

struct PromptBundle {
  std::string system_text;
  std::vector<ChatMessage> messages;
  ImageAttachment image;

  // SHA-256 (hex) over the messages and image descriptor.
  std::string digest() const;
};

bool role_in_setting(AgentRole role, AblationSetting setting);

// Role that must speak next given how many turns the transcript already holds.
AgentRole expected_role(AblationSetting setting, std::size_t turns_so_far);

std::string build_class_list(const LabelSpace& labels);
std::string build_opt_block(const PerceptionTokenSet& tokens);
std::string build_history(const Transcript& transcript, const LabelSpace& labels);

// Canonical contract string for a hypothesis; VisionAnalyst adds a Verdict line.
std::string format_hypothesis(AgentRole role, const Hypothesis& hypothesis, const LabelSpace& labels);

// Extracts Category / Reasoning (and Verdict for the VisionAnalyst) from raw
// model output. Throws MissingCategory, MissingReasoning, UnknownLabel,
// AmbiguousLabel or MissingVerdict.
Hypothesis parse_agent_output(AgentRole role, std::string_view text, const LabelSpace& labels);

class PromptBuilder {
 public:
  PromptBuilder() : templates_(&TemplateSet::builtin()) {}
  explicit PromptBuilder(const TemplateSet& templates) : templates_(&templates) {}

  const TemplateSet& templates() const { return *templates_; }

  std::string build_system_prompt(AgentRole role, const LabelSpace& labels, AblationSetting setting) const;

  // Throws OrderViolation if the transcript does not end exactly where `role`
  // is due to speak under `setting`.
  PromptBundle build_turn_prompt(AgentRole role, const Transcript& transcript, const PerceptionTokenSet& tokens,
                                 const LabelSpace& labels, const ImageAttachment& image,
                                 AblationSetting setting) const;

  // Follow-up bundle after an unparseable answer: the failed answer as an
  // assistant message plus a reminder that restates the output contract.
  PromptBundle build_retry_prompt(const PromptBundle& previous, AgentRole role, AblationSetting setting,
                                  const LabelSpace& labels, std::string_view failed_output,
                                  const ParseFailure& failure) const;

 private:
  const TemplateSet* templates_;
};

}  // namespace optdialog
