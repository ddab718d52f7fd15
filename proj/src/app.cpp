#include "optdialog/app.hpp"

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "optdialog/error.hpp"

namespace optdialog {

std::unique_ptr<ChatBackend> make_backend(const AppConfig& cfg) {
  if (cfg.backend.empty()) throw ConfigError("backend", "no backend given (--backend mock:<path> or URL)");
  if (cfg.backend.rfind("mock:", 0) == 0) {
    return std::make_unique<MockBackend>(load_mock_script(cfg.backend.substr(5)), cfg.backend);
  }
  HttpBackendOptions opts;
  opts.url = cfg.backend;
  opts.model = cfg.model;
  if (const char* key = std::getenv(kApiKeyEnv); key != nullptr && *key != '\0') opts.api_key = key;
  opts.timeout = std::chrono::milliseconds(static_cast<long long>(cfg.timeout_seconds * 1000.0));
  opts.max_attempts = cfg.transport_attempts;
  opts.backoff_base = std::chrono::milliseconds(cfg.backoff_ms);
  opts.resize.longest_side = cfg.resize_longest_side;
  try {
    return std::make_unique<HttpBackend>(std::move(opts));
  } catch (const std::invalid_argument& e) {
    throw ConfigError("backend", e.what());
  }
}

TemplateSet load_templates(const AppConfig& cfg) {
  return cfg.templates.empty() ? TemplateSet::builtin() : TemplateSet::load_directory(cfg.templates);
}

std::optional<LabelSpace> configured_labels(const AppConfig& cfg) {
  if (cfg.labels.empty()) return std::nullopt;
  return LabelSpace(cfg.labels);
}

std::filesystem::path timestamped_run_dir(const std::filesystem::path& root, std::string_view suffix) {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm utc{};
  gmtime_r(&now, &utc);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y%m%dT%H%M%SZ", &utc);
  return root / fmt::format("{}-{}", stamp, suffix);
}

EvaluationResult evaluate(const DatasetManifest& manifest, const DetectionIndex& detections,
                          const ChatBackend& backend, const AppConfig& cfg, AblationSetting setting,
                          const PromptBuilder& prompts, const std::filesystem::path& run_dir,
                          const ProgressFn& progress) {
  const RunConfig rc = cfg.run_config_for(setting);
  validate(rc);
  write_resolved_config(run_dir, cfg, setting);
  EvaluationOptions opts;
  opts.out_dir = run_dir;
  opts.prompts = &prompts;
  opts.detector_frame = cfg.detector_frame;
  opts.on_progress = progress;
  return run_evaluation(manifest, detections, rc, backend, opts);
}

std::vector<AblationRow> ablate(const DatasetManifest& manifest, const DetectionIndex& detections,
                                const ChatBackend& backend, const AppConfig& base, const PromptBuilder& prompts,
                                const std::filesystem::path& out_root, const ProgressFn& progress) {
  std::vector<AblationRow> rows;
  for (auto setting : kAllSettings) {
    AblationRow row;
    row.setting = setting;
    row.run_dir = out_root / fmt::format("setting_{}", to_string(setting));
    try {
      const auto result = evaluate(manifest, detections, backend, base, setting, prompts, row.run_dir, progress);
      row.report = result.report;
      for (const auto& t : result.transcripts) {
        for (const auto& turn : t.turns) row.prompt_digests.insert(turn.prompt_digest);
      }
      row.ok = true;
    } catch (const std::exception& e) {
      row.error = e.what();
    }
    rows.push_back(std::move(row));
  }
  std::filesystem::create_directories(out_root);
  const auto path = out_root / "ablation.csv";
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string(), path.string());
  out << ablation_csv(rows);
  return rows;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::string out = "setting,acc_standard,acc_paper,macro_recall,macro_f1,status\n";
  for (const auto& r : rows) {
    if (r.ok) {
      out += fmt::format("{},{:.6f},{:.6f},{:.6f},{:.6f},ok\n", to_string(r.setting), r.report.acc_standard,
                         r.report.acc_paper, r.report.macro_recall, r.report.macro_f1);
    } else {
      out += fmt::format("{},,,,,failed\n", to_string(r.setting));
    }
  }
  return out;
}

std::vector<LintResult> lint_files(const std::optional<std::string>& manifest,
                                   const std::optional<std::string>& detections,
                                   const std::optional<std::string>& script,
                                   const std::optional<std::string>& config,
                                   const std::optional<LabelSpace>& labels) {
  std::vector<LintResult> out;
  const auto check = [&out](std::string kind, const std::string& path, const auto& fn) {
    LintResult r{std::move(kind), path, false, {}};
    try {
      r.message = fn();
      r.ok = true;
    } catch (const std::exception& e) {
      r.message = e.what();
    }
    out.push_back(std::move(r));
  };
  if (config) {
    check("config", *config, [&] {
      parse_config(std::filesystem::path(*config));
      return std::string("ok");
    });
  }
  if (manifest) {
    check("manifest", *manifest, [&] {
      const auto m = load_manifest(*manifest, labels);
      return fmt::format("{} entries, {} classes", m.entries.size(), m.labels.size());
    });
  }
  if (detections) {
    check("detections", *detections, [&] {
      const auto d = load_detections(*detections);
      return fmt::format("{} detections over {} images", d.detection_count(), d.image_count());
    });
  }
  if (script) {
    check("script", *script, [&] {
      const auto s = load_mock_script(*script);
      return fmt::format("{} entries", s.size());
    });
  }
  return out;
}

std::string render_transcript(const nlohmann::json& doc) {
  std::ostringstream out;
  out << "image " << doc.at("image_id").get<std::string>() << "  setting " << doc.at("setting").get<std::string>()
      << "  rounds " << doc.at("rounds").get<int>() << "\n";
  for (const auto& turn : doc.at("turns")) {
    const auto role = parse_role(turn.at("role").get<std::string>());
    out << "\n[round " << turn.at("round").get<int>() << "] "
        << (role ? display_name(*role) : turn.at("role").get<std::string>());
    const int retries = turn.at("retries_used").get<int>();
    if (retries > 0) out << "  (" << retries << (retries == 1 ? " retry" : " retries") << ")";
    out << "\n  prompt " << turn.at("prompt_digest").get<std::string>().substr(0, 16) << "\n";
    if (const auto& h = turn.at("hypothesis"); !h.is_null()) {
      out << "  category:  " << h.at("label").get<std::string>() << "\n";
      out << "  reasoning: " << h.at("rationale").get<std::string>() << "\n";
      if (!h.at("verdict").is_null()) out << "  verdict:   " << h.at("verdict").get<std::string>() << "\n";
    } else if (const auto& e = turn.at("error"); !e.is_null()) {
      out << "  failed:    " << e.at("message").get<std::string>() << "\n";
    }
  }
  if (const auto p = doc.find("prediction"); p != doc.end()) {
    out << "\nprediction: " << (p->at("label").is_null() ? "(abstain)" : p->at("label").get<std::string>())
        << "  [" << p->at("source").get<std::string>() << "]\n";
  }
  return out.str();
}

}  // namespace optdialog
