#include "optdialog/evaluation.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <fstream>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "csv.hpp"
#include "optdialog/error.hpp"

namespace optdialog {

// ---------------------------------------------------------------------------
// Manifest

std::size_t DatasetManifest::find(std::string_view image_id) const {
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].image_id == image_id) return i;
  }
  return LabelSpace::npos;
}

namespace {

[[noreturn]] void bad_manifest(const std::string& message, std::size_t line = 0, std::string subject = {}) {
  throw Error(ErrorCode::MalformedManifest, message, std::move(subject), line);
}

std::string trimmed(std::string s) {
  const auto first = s.find_first_not_of(" \t");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t");
  return s.substr(first, last - first + 1);
}

bool filename_safe(const std::string& id) {
  return !id.empty() && id != "." && id != ".." && id.find_first_of("/\\\0", 0, 3) == std::string::npos;
}

}  // namespace

DatasetManifest parse_manifest(std::string_view text, const std::optional<LabelSpace>& labels,
                               const std::filesystem::path& base_dir) {
  std::vector<csv::Row> rows;
  try {
    rows = csv::parse(text);
  } catch (const std::runtime_error& e) {
    bad_manifest(e.what());
  }
  if (rows.empty()) bad_manifest("manifest is empty; expected header image_id,image_path,label");
  const auto& header = rows.front().fields;
  if (header.size() != 3 || trimmed(header[0]) != "image_id" || trimmed(header[1]) != "image_path" ||
      trimmed(header[2]) != "label") {
    bad_manifest("header must be image_id,image_path,label", rows.front().line);
  }

  DatasetManifest manifest;
  std::vector<std::string> seen_labels;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.fields.size() != 3) {
      bad_manifest(fmt::format("expected 3 fields, found {}", row.fields.size()), row.line);
    }
    ManifestEntry e{trimmed(row.fields[0]), trimmed(row.fields[1]), trimmed(row.fields[2]), 0};
    if (!filename_safe(e.image_id)) bad_manifest("image_id must be non-empty and contain no path separators", row.line, e.image_id);
    if (e.image_path.empty()) bad_manifest("image_path is empty", row.line, e.image_id);
    if (normalize_label(e.label).empty()) bad_manifest("label is empty", row.line, e.image_id);
    if (manifest.find(e.image_id) != LabelSpace::npos) bad_manifest("duplicate image_id '" + e.image_id + "'", row.line, e.image_id);
    if (!base_dir.empty() && std::filesystem::path(e.image_path).is_relative()) {
      e.image_path = (base_dir / e.image_path).lexically_normal().string();
    }
    const auto norm = normalize_label(e.label);
    if (std::find(seen_labels.begin(), seen_labels.end(), norm) == seen_labels.end()) seen_labels.push_back(norm);
    manifest.entries.push_back(std::move(e));
  }

  if (labels) {
    manifest.labels = *labels;
  } else {
    std::vector<std::string> names;
    for (const auto& e : manifest.entries) {
      const bool known = std::any_of(names.begin(), names.end(),
                                     [&](const std::string& n) { return normalize_label(n) == normalize_label(e.label); });
      if (!known) names.push_back(e.label);
    }
    try {
      manifest.labels = LabelSpace(std::move(names));
    } catch (const Error& err) {
      bad_manifest(std::string("cannot derive label space: ") + err.what());
    }
  }

  for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
    auto& e = manifest.entries[i];
    e.label_index = manifest.labels.find(e.label);
    if (e.label_index == LabelSpace::npos) {
      bad_manifest("ground truth '" + e.label + "' is not in the label space", rows[i + 1].line, e.label);
    }
  }
  return manifest;
}

DatasetManifest load_manifest(const std::filesystem::path& path, const std::optional<LabelSpace>& labels) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open manifest " + path.string(), path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_manifest(buf.str(), labels, path.parent_path());
}

// ---------------------------------------------------------------------------
// Metrics

ConfusionCounts confusion_counts(std::span<const Prediction> predictions, const DatasetManifest& manifest) {
  const std::size_t k = manifest.labels.size();
  ConfusionCounts c;
  c.tp.assign(k, 0);
  c.fp.assign(k, 0);
  c.fn.assign(k, 0);
  for (const auto& p : predictions) {
    const auto idx = manifest.find(p.image_id);
    if (idx == LabelSpace::npos) {
      throw Error(ErrorCode::UnknownImageId, "prediction for '" + p.image_id + "' has no manifest entry", p.image_id);
    }
    const std::size_t truth = manifest.entries[idx].label_index;
    ++c.n;
    if (!p.label_index) {
      ++c.abstentions;
      ++c.fn[truth];
    } else if (*p.label_index == truth) {
      ++c.tp[truth];
    } else {
      if (*p.label_index >= k) {
        throw Error(ErrorCode::UnknownImageId, "prediction label index out of range", p.image_id);
      }
      ++c.misclassified;
      ++c.fp[*p.label_index];
      ++c.fn[truth];
    }
  }
  return c;
}

namespace {

double ratio(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

MetricsReport macro_metrics(const ConfusionCounts& counts, const LabelSpace& labels, AblationSetting setting) {
  if (counts.n == 0) throw Error(ErrorCode::EmptyDataset, "no predictions to score");
  const std::size_t k = labels.size();
  if (counts.tp.size() != k || counts.fp.size() != k || counts.fn.size() != k) {
    throw std::invalid_argument("confusion counts do not match the label space");
  }

  MetricsReport r;
  r.setting = setting;
  r.n = counts.n;
  r.abstentions = counts.abstentions;
  r.misclassified = counts.misclassified;

  std::size_t sum_tp = 0;
  std::size_t sum_all = 0;
  for (std::size_t i = 0; i < k; ++i) {
    ClassMetrics m;
    m.name = labels.name(i);
    m.support = counts.tp[i] + counts.fn[i];
    m.zero_support = m.support == 0;
    m.precision = ratio(counts.tp[i], counts.tp[i] + counts.fp[i]);
    m.recall = ratio(counts.tp[i], m.support);
    m.f1 = m.zero_support ? 0.0 : ratio(2 * counts.tp[i], 2 * counts.tp[i] + counts.fp[i] + counts.fn[i]);
    r.macro_precision += m.precision;
    r.macro_recall += m.recall;
    r.macro_f1 += m.f1;
    sum_tp += counts.tp[i];
    sum_all += counts.tp[i] + counts.fp[i] + counts.fn[i];
    r.per_class.push_back(std::move(m));
  }
  r.macro_precision /= static_cast<double>(k);
  r.macro_recall /= static_cast<double>(k);
  r.macro_f1 /= static_cast<double>(k);
  r.acc_paper = ratio(sum_tp, sum_all);
  r.acc_standard = ratio(sum_tp, counts.n);
  return r;
}

nlohmann::json to_json(const MetricsReport& report) {
  nlohmann::json per_class = nlohmann::json::array();
  nlohmann::json zero = nlohmann::json::array();
  for (const auto& m : report.per_class) {
    per_class.push_back({{"class", m.name},
                         {"support", m.support},
                         {"precision", m.precision},
                         {"recall", m.recall},
                         {"f1", m.f1},
                         {"zero_support", m.zero_support}});
    if (m.zero_support) zero.push_back(m.name);
  }
  return {{"setting", std::string(to_string(report.setting))},
          {"n", report.n},
          {"abstentions", report.abstentions},
          {"misclassified", report.misclassified},
          {"acc_paper", report.acc_paper},
          {"acc_standard", report.acc_standard},
          {"macro_precision", report.macro_precision},
          {"macro_recall", report.macro_recall},
          {"macro_f1", report.macro_f1},
          {"zero_support_classes", zero},
          {"per_class", per_class}};
}

// ---------------------------------------------------------------------------
// Reports

std::string per_class_csv(const MetricsReport& report) {
  std::string out = "class,support,precision,recall,f1,zero_support\n";
  for (const auto& m : report.per_class) {
    out += fmt::format("{},{},{:.6f},{:.6f},{:.6f},{}\n", csv::escape(m.name), m.support, m.precision, m.recall, m.f1,
                       m.zero_support ? "true" : "false");
  }
  return out;
}

std::string pr_scatter_csv(const MetricsReport& report) {
  std::string out = "class,precision,recall,support,f1\n";
  for (const auto& m : report.per_class) {
    out += fmt::format("{},{:.6f},{:.6f},{},{:.6f}\n", csv::escape(m.name), m.precision, m.recall, m.support, m.f1);
  }
  return out;
}

std::string summary_json(const MetricsReport& report, std::span<const Prediction> predictions) {
  nlohmann::json doc = to_json(report);
  nlohmann::json sources = nlohmann::json::object();
  for (auto s : {PredictionSource::Decider, PredictionSource::FallbackVision, PredictionSource::FallbackFood,
                 PredictionSource::FallbackGeneralist, PredictionSource::Abstain}) {
    sources[std::string(to_string(s))] =
        std::count_if(predictions.begin(), predictions.end(), [s](const Prediction& p) { return p.source == s; });
  }
  doc["prediction_sources"] = sources;
  return doc.dump(2) + "\n";
}

namespace {

void write_text(const std::filesystem::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string(), path.string());
  out << text;
  if (!out) throw Error(ErrorCode::Io, "failed writing " + path.string(), path.string());
}

}  // namespace

void emit_reports(const MetricsReport& report, std::span<const Prediction> predictions,
                  const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::Io, "cannot create " + dir.string() + ": " + ec.message(), dir.string());
  write_text(dir / "per_class.csv", per_class_csv(report));
  write_text(dir / "pr_scatter.csv", pr_scatter_csv(report));
  write_text(dir / "summary.json", summary_json(report, predictions));
}

void write_predictions(const std::filesystem::path& path, std::span<const Prediction> predictions,
                       const LabelSpace& labels) {
  std::string text;
  for (const auto& p : predictions) text += to_json(p, labels).dump() + "\n";
  write_text(path, text);
}

// ---------------------------------------------------------------------------
// Batch run

EvaluationResult run_evaluation(const DatasetManifest& manifest, const DetectionIndex& detections,
                                const RunConfig& cfg, const ChatBackend& backend, const EvaluationOptions& options) {
  validate(cfg);
  const PromptBuilder default_prompts;
  const PromptBuilder& prompts = options.prompts ? *options.prompts : default_prompts;
  const std::size_t total = manifest.entries.size();

  std::optional<std::filesystem::path> transcript_dir;
  if (options.out_dir) {
    transcript_dir = *options.out_dir / "transcripts";
    std::filesystem::create_directories(*transcript_dir);
  }

  std::vector<DialogueResult> results(total);
  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> done{0};
  std::atomic<bool> stop{false};
  std::exception_ptr first_error;
  std::mutex error_mu;

  const auto worker = [&] {
    while (!stop) {
      const std::size_t i = next.fetch_add(1);
      if (i >= total) return;
      const auto& entry = manifest.entries[i];
      try {
        const auto tokens = prepare_tokens(entry.image_id, detections.lookup(entry.image_id), cfg.nms,
                                           options.detector_id, options.detector_frame);
        const auto image = ImageAttachment::from_file(entry.image_id, entry.image_path);
        DialogueResult r;
        try {
          r = run_dialogue(image, tokens, manifest.labels, cfg, backend, prompts, {.absorb_backend_failure = true});
        } catch (const Error& e) {
          // Unreadable images fail this entry only.
          if (e.code() != ErrorCode::Io) throw;
          r.transcript = Transcript{entry.image_id, cfg.setting, cfg.rounds, 0, prompts.templates().version(), {}};
          r.prediction = Prediction{entry.image_id, std::nullopt, PredictionSource::Abstain, {}};
          r.backend_failure = e.what();
        }
        if (transcript_dir) {
          write_transcript(*transcript_dir, r.transcript, r.prediction, manifest.labels);
          r.prediction.transcript_path = "transcripts/" + entry.image_id + ".transcript.json";
        }
        results[i] = std::move(r);
      } catch (...) {
        std::lock_guard lock(error_mu);
        if (!first_error) first_error = std::current_exception();
        stop = true;
        return;
      }
      const std::size_t finished = done.fetch_add(1) + 1;
      if (options.on_progress) options.on_progress(finished, total);
    }
  };

  {
    const std::size_t workers =
        std::min(static_cast<std::size_t>(std::max(1, cfg.parallelism)), std::max<std::size_t>(total, 1));
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
  }
  if (first_error) std::rethrow_exception(first_error);

  EvaluationResult out;
  out.predictions.reserve(total);
  out.transcripts.reserve(total);
  for (auto& r : results) {
    if (r.backend_failure) ++out.backend_failures;
    for (const auto& turn : r.transcript.turns) {
      for (const auto& a : turn.attempts) out.truncated_responses += a.truncated ? 1 : 0;
    }
    out.predictions.push_back(std::move(r.prediction));
    out.transcripts.push_back(std::move(r.transcript));
  }

  out.report = macro_metrics(confusion_counts(out.predictions, manifest), manifest.labels, cfg.setting);
  if (options.out_dir) {
    write_predictions(*options.out_dir / "predictions.jsonl", out.predictions, manifest.labels);
    emit_reports(out.report, out.predictions, *options.out_dir);
  }
  return out;
}

}  // namespace optdialog
