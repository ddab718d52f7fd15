#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace optdialog {

enum class ErrorCode {
  NonPositiveDimension,
  MalformedRecord,
  DuplicateImageEntry,
  InvalidLabelSpace,
  MalformedTemplate,
  OrderViolation,
  MissingCategory,
  MissingReasoning,
  MissingVerdict,
  UnknownLabel,
  AmbiguousLabel,
  BackendUnavailable,
  MalformedScript,
  MalformedManifest,
  UnknownImageId,
  EmptyDataset,
  InvalidConfig,
  Io,
};

std::string_view to_string(ErrorCode code);

// Single exception type for the library. `subject` carries the offending
// text (unmatched label, file path, field name); `line` is 1-based when the
// error comes from a line-oriented file, 0 otherwise.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message, std::string subject = {}, std::size_t line = 0);

  ErrorCode code() const noexcept { return code_; }
  const std::string& subject() const noexcept { return subject_; }
  std::size_t line() const noexcept { return line_; }

 private:
  ErrorCode code_;
  std::string subject_;
  std::size_t line_;
};

struct FieldIssue {
  std::string field;
  std::string message;
};

// InvalidConfig with one entry per offending field.
class ConfigError : public Error {
 public:
  explicit ConfigError(std::vector<FieldIssue> issues);
  ConfigError(std::string field, std::string message)
      : ConfigError(std::vector<FieldIssue>{{std::move(field), std::move(message)}}) {}

  const std::vector<FieldIssue>& issues() const noexcept { return issues_; }

 private:
  std::vector<FieldIssue> issues_;
};

inline bool is_parse_error(ErrorCode code) {
  return code == ErrorCode::MissingCategory || code == ErrorCode::MissingReasoning ||
         code == ErrorCode::MissingVerdict || code == ErrorCode::UnknownLabel ||
         code == ErrorCode::AmbiguousLabel;
}

}  // namespace optdialog
