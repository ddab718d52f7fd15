#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "optdialog/backend.hpp"
#include "optdialog/config.hpp"
#include "optdialog/evaluation.hpp"
#include "optdialog/prompt.hpp"

namespace optdialog {

inline constexpr const char* kApiKeyEnv = "OPTDIALOG_API_KEY";

// "mock:<path>" loads a scripted backend; http(s) URLs build the wire client
// (API key from OPTDIALOG_API_KEY when set).
std::unique_ptr<ChatBackend> make_backend(const AppConfig& cfg);

TemplateSet load_templates(const AppConfig& cfg);
std::optional<LabelSpace> configured_labels(const AppConfig& cfg);

// runs/<UTC timestamp>-<suffix>
std::filesystem::path timestamped_run_dir(const std::filesystem::path& root, std::string_view suffix);

using ProgressFn = std::function<void(std::size_t done, std::size_t total)>;

// One evaluation into `run_dir`: resolved_config.json, transcripts/,
// predictions.jsonl and the reports.
EvaluationResult evaluate(const DatasetManifest& manifest, const DetectionIndex& detections,
                          const ChatBackend& backend, const AppConfig& cfg, AblationSetting setting,
                          const PromptBuilder& prompts, const std::filesystem::path& run_dir,
                          const ProgressFn& progress = {});

struct AblationRow {
  AblationSetting setting = AblationSetting::A;
  bool ok = false;
  std::string error;
  std::filesystem::path run_dir;
  MetricsReport report;
  std::set<std::string> prompt_digests;
};

// Runs settings a, b, c, d in order over the same inputs, one run directory
// each under `out_root`, and writes out_root/ablation.csv. A failing setting
// is recorded and the sweep continues.
std::vector<AblationRow> ablate(const DatasetManifest& manifest, const DetectionIndex& detections,
                                const ChatBackend& backend, const AppConfig& base, const PromptBuilder& prompts,
                                const std::filesystem::path& out_root, const ProgressFn& progress = {});

std::string ablation_csv(const std::vector<AblationRow>& rows);

struct LintResult {
  std::string kind;  // manifest | detections | script | config
  std::string path;
  bool ok = false;
  std::string message;
};

// Parses each given file with the same loaders the run commands use.
std::vector<LintResult> lint_files(const std::optional<std::string>& manifest,
                                   const std::optional<std::string>& detections,
                                   const std::optional<std::string>& script,
                                   const std::optional<std::string>& config,
                                   const std::optional<LabelSpace>& labels = std::nullopt);

// Human-readable rendering of a transcript document for `inspect`.
std::string render_transcript(const nlohmann::json& doc);

}  // namespace optdialog
