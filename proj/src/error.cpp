#include "optdialog/error.hpp"

namespace optdialog {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::NonPositiveDimension: return "NonPositiveDimension";
    case ErrorCode::MalformedRecord: return "MalformedRecord";
    case ErrorCode::DuplicateImageEntry: return "DuplicateImageEntry";
    case ErrorCode::InvalidLabelSpace: return "InvalidLabelSpace";
    case ErrorCode::MalformedTemplate: return "MalformedTemplate";
    case ErrorCode::OrderViolation: return "OrderViolation";
    case ErrorCode::MissingCategory: return "MissingCategory";
    case ErrorCode::MissingReasoning: return "MissingReasoning";
    case ErrorCode::MissingVerdict: return "MissingVerdict";
    case ErrorCode::UnknownLabel: return "UnknownLabel";
    case ErrorCode::AmbiguousLabel: return "AmbiguousLabel";
    case ErrorCode::BackendUnavailable: return "BackendUnavailable";
    case ErrorCode::MalformedScript: return "MalformedScript";
    case ErrorCode::MalformedManifest: return "MalformedManifest";
    case ErrorCode::UnknownImageId: return "UnknownImageId";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

namespace {

std::string decorate(ErrorCode code, const std::string& message, std::size_t line) {
  std::string out(to_string(code));
  if (line > 0) out += " (line " + std::to_string(line) + ")";
  out += ": ";
  out += message;
  return out;
}

std::string join_issues(const std::vector<FieldIssue>& issues) {
  std::string out;
  for (const auto& issue : issues) {
    if (!out.empty()) out += "; ";
    out += issue.field + ": " + issue.message;
  }
  return out;
}

}  // namespace

Error::Error(ErrorCode code, const std::string& message, std::string subject, std::size_t line)
    : std::runtime_error(decorate(code, message, line)),
      code_(code),
      subject_(std::move(subject)),
      line_(line) {}

ConfigError::ConfigError(std::vector<FieldIssue> issues)
    : Error(ErrorCode::InvalidConfig, join_issues(issues)), issues_(std::move(issues)) {}

}  // namespace optdialog
