#include <fmt/format.h>

#include "optdialog/error.hpp"
#include "optdialog/prompt.hpp"

namespace optdialog {

namespace detail {
extern const std::pair<const char*, const char*> kBuiltinTemplates[];
extern const std::size_t kBuiltinTemplateCount;
}  // namespace detail

const TemplateSet& TemplateSet::builtin() {
  static const TemplateSet set = [] {
    TemplateSet s;
    std::string version;
    for (std::size_t i = 0; i < detail::kBuiltinTemplateCount; ++i) {
      const std::string_view name = detail::kBuiltinTemplates[i].first;
      bool matched = false;
      for (auto setting : kAllSettings) {
        for (auto role : {AgentRole::FoodScientist, AgentRole::VisionAnalyst, AgentRole::DecisionMaker,
                          AgentRole::Generalist}) {
          if (name != fmt::format("{}.{}.txt", to_string(role), to_string(setting))) continue;
          std::string file_version;
          s.add(role, setting, parse(detail::kBuiltinTemplates[i].second, &file_version, name));
          if (!version.empty() && file_version != version) {
            throw Error(ErrorCode::MalformedTemplate, "builtin template versions disagree", std::string(name));
          }
          version = file_version;
          matched = true;
        }
      }
      if (!matched) throw Error(ErrorCode::MalformedTemplate, "unexpected builtin template", std::string(name));
    }
    s.set_version(version);
    return s;
  }();
  return set;
}

}  // namespace optdialog
