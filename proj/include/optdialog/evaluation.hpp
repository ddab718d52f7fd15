#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "optdialog/backend.hpp"
#include "optdialog/detection.hpp"
#include "optdialog/labels.hpp"
#include "optdialog/orchestrator.hpp"
#include "optdialog/prompt.hpp"
#include "optdialog/transcript.hpp"

namespace optdialog {

struct ManifestEntry {
  std::string image_id;
  std::string image_path;
  std::string label;
  std::size_t label_index = 0;
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  LabelSpace labels;

  // npos when absent.
  std::size_t find(std::string_view image_id) const;
};

// CSV with header `image_id,image_path,label`. Relative image paths resolve
// against `base_dir`. Without explicit labels the label space is the ground
// truths in order of first appearance. Throws MalformedManifest.
DatasetManifest parse_manifest(std::string_view text, const std::optional<LabelSpace>& labels = std::nullopt,
                               const std::filesystem::path& base_dir = {});
DatasetManifest load_manifest(const std::filesystem::path& path,
                              const std::optional<LabelSpace>& labels = std::nullopt);

struct ConfusionCounts {
  std::vector<std::size_t> tp;
  std::vector<std::size_t> fp;
  std::vector<std::size_t> fn;
  std::size_t n = 0;
  std::size_t abstentions = 0;
  std::size_t misclassified = 0;
};

// Single-label accounting: predicted j with truth k adds TP_k when j == k,
// otherwise FP_j and FN_k; Abstain adds FN_truth only. Throws UnknownImageId.
ConfusionCounts confusion_counts(std::span<const Prediction> predictions, const DatasetManifest& manifest);

struct ClassMetrics {
  std::string name;
  std::size_t support = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  bool zero_support = false;
};

struct MetricsReport {
  AblationSetting setting = AblationSetting::D;
  std::size_t n = 0;
  std::size_t abstentions = 0;
  std::size_t misclassified = 0;
  // sum TP / sum (TP + FP + FN), the error-double-counting form.
  double acc_paper = 0.0;
  // sum TP / N.
  double acc_standard = 0.0;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
  std::vector<ClassMetrics> per_class;
};

// Per-class precision/recall/F1 and their unweighted means over all K
// classes. Zero-support classes score 0 and are flagged. Throws EmptyDataset.
MetricsReport macro_metrics(const ConfusionCounts& counts, const LabelSpace& labels,
                            AblationSetting setting = AblationSetting::D);

nlohmann::json to_json(const MetricsReport& report);

struct EvaluationOptions {
  std::optional<std::filesystem::path> out_dir;
  const PromptBuilder* prompts = nullptr;  // builtin templates when null
  ImageSize detector_frame = kDefaultDetectorFrame;
  std::string detector_id = "file";
  // Called from worker threads after each image; must be thread-safe.
  std::function<void(std::size_t done, std::size_t total)> on_progress;
};

struct EvaluationResult {
  MetricsReport report;
  std::vector<Prediction> predictions;    // manifest order
  std::vector<Transcript> transcripts;    // manifest order
  std::size_t backend_failures = 0;
  std::size_t truncated_responses = 0;
};

// Runs every manifest entry through detection post-processing and the
// dialogue, using `cfg.parallelism` workers. Per-image backend failures
// become Abstains. With an output directory, writes transcripts/,
// predictions.jsonl and the reports.
EvaluationResult run_evaluation(const DatasetManifest& manifest, const DetectionIndex& detections,
                                const RunConfig& cfg, const ChatBackend& backend,
                                const EvaluationOptions& options = {});

// per_class.csv, pr_scatter.csv and summary.json under `dir`.
void emit_reports(const MetricsReport& report, std::span<const Prediction> predictions,
                  const std::filesystem::path& dir);

std::string per_class_csv(const MetricsReport& report);
std::string pr_scatter_csv(const MetricsReport& report);
std::string summary_json(const MetricsReport& report, std::span<const Prediction> predictions);

void write_predictions(const std::filesystem::path& path, std::span<const Prediction> predictions,
                       const LabelSpace& labels);

}  // namespace optdialog
