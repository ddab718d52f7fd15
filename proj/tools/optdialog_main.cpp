// optdialog command-line entry point.
//
// Exit codes: 0 success, 1 configuration error, 2 runtime failure (partial
// outputs are kept).

#include <cstdio>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "optdialog/app.hpp"
#include "optdialog/error.hpp"

namespace {

using namespace optdialog;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitRuntime = 2;

struct CommonFlags {
  std::string config;
  std::string manifest;
  std::string detections;
  std::string backend;
  std::string setting;
  int rounds = 0;
  int parallelism = 0;
  std::string out;
  std::string model;
  std::string templates;
  std::string labels;
};

void add_common(CLI::App* cmd, CommonFlags& f, bool with_manifest = true) {
  cmd->add_option("--config", f.config, "JSON config file");
  if (with_manifest) {
    cmd->add_option("--manifest", f.manifest, "dataset manifest CSV (image_id,image_path,label)");
  }
  cmd->add_option("--detections", f.detections, "detections JSON-lines file");
  cmd->add_option("--backend", f.backend, "mock:<script.json> or chat-completion endpoint URL");
  cmd->add_option("--setting", f.setting, "ablation setting a|b|c|d")->check(CLI::IsMember({"a", "b", "c", "d"}));
  cmd->add_option("--rounds", f.rounds, "dialogue rounds for multi-turn settings")->check(CLI::PositiveNumber);
  cmd->add_option("--parallelism", f.parallelism, "concurrent dialogues")->check(CLI::PositiveNumber);
  cmd->add_option("--out", f.out, "output directory");
  cmd->add_option("--model", f.model, "model name sent to the endpoint");
  cmd->add_option("--templates", f.templates, "directory of prompt templates (default: builtin)");
  cmd->add_option("--labels", f.labels, "comma-separated class list, or @file with one class per line");
}

std::vector<std::string> split_labels(const std::string& spec) {
  std::vector<std::string> out;
  if (!spec.empty() && spec.front() == '@') {
    std::ifstream in(spec.substr(1));
    if (!in) throw ConfigError("--labels", "cannot open " + spec.substr(1));
    for (std::string line; std::getline(in, line);) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (!line.empty()) out.push_back(line);
    }
    return out;
  }
  std::stringstream ss(spec);
  for (std::string item; std::getline(ss, item, ',');) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

AppConfig resolve(const CommonFlags& f) {
  ConfigOverrides o;
  if (!f.setting.empty()) o.setting = parse_setting(f.setting);
  if (f.rounds > 0) o.rounds = f.rounds;
  if (f.parallelism > 0) o.parallelism = f.parallelism;
  if (!f.manifest.empty()) o.manifest = f.manifest;
  if (!f.detections.empty()) o.detections = f.detections;
  if (!f.backend.empty()) o.backend = f.backend;
  if (!f.out.empty()) o.out = f.out;
  if (!f.model.empty()) o.model = f.model;
  if (!f.templates.empty()) o.templates = f.templates;
  if (!f.labels.empty()) o.labels = split_labels(f.labels);
  std::optional<std::filesystem::path> file;
  if (!f.config.empty()) file = f.config;
  return parse_config(file, o);
}

void require(const std::string& value, const char* field, const char* flag) {
  if (value.empty()) throw ConfigError(field, fmt::format("required ({})", flag));
}

DetectionIndex detections_for(const AppConfig& cfg) {
  return cfg.detections.empty() ? DetectionIndex{} : load_detections(cfg.detections);
}

ProgressFn stderr_progress() {
  auto mu = std::make_shared<std::mutex>();
  return [mu](std::size_t done, std::size_t total) {
    std::lock_guard lock(*mu);
    std::cerr << fmt::format("\r[{}/{}]", done, total) << (done == total ? "\n" : "") << std::flush;
  };
}

void print_report(const MetricsReport& r, const EvaluationResult& result) {
  std::cout << fmt::format(
      "setting {}  n={}  acc={:.4f}  acc_paper={:.4f}  macro_recall={:.4f}  macro_f1={:.4f}  abstain={}  "
      "backend_failures={}  truncated={}\n",
      to_string(r.setting), r.n, r.acc_standard, r.acc_paper, r.macro_recall, r.macro_f1, r.abstentions,
      result.backend_failures, result.truncated_responses);
}

int cmd_evaluate(const CommonFlags& f) {
  const AppConfig cfg = resolve(f);
  require(cfg.manifest, "manifest", "--manifest");
  const auto manifest = load_manifest(cfg.manifest, configured_labels(cfg));
  const auto detections = detections_for(cfg);
  const auto backend = make_backend(cfg);
  const TemplateSet templates = load_templates(cfg);
  const PromptBuilder prompts(templates);
  const auto run_dir = cfg.out.empty() ? timestamped_run_dir("runs", to_string(cfg.setting))
                                       : std::filesystem::path(cfg.out);
  const auto result = evaluate(manifest, detections, *backend, cfg, cfg.setting, prompts, run_dir, stderr_progress());
  print_report(result.report, result);
  std::cout << "outputs: " << run_dir.string() << "\n";
  return result.backend_failures > 0 ? kExitRuntime : kExitOk;
}

int cmd_ablate(const CommonFlags& f) {
  const AppConfig cfg = resolve(f);
  require(cfg.manifest, "manifest", "--manifest");
  const auto manifest = load_manifest(cfg.manifest, configured_labels(cfg));
  const auto detections = detections_for(cfg);
  const auto backend = make_backend(cfg);
  const TemplateSet templates = load_templates(cfg);
  const PromptBuilder prompts(templates);
  const auto root = cfg.out.empty() ? timestamped_run_dir("runs", "ablation") : std::filesystem::path(cfg.out);
  const auto rows = ablate(manifest, detections, *backend, cfg, prompts, root, stderr_progress());
  std::cout << ablation_csv(rows);
  bool failed = false;
  for (const auto& r : rows) {
    if (!r.ok) {
      failed = true;
      std::cerr << "setting " << to_string(r.setting) << " failed: " << r.error << "\n";
    }
  }
  std::cout << "outputs: " << root.string() << "\n";
  return failed ? kExitRuntime : kExitOk;
}

int cmd_run(const CommonFlags& f, const std::string& image_path, std::string image_id) {
  const AppConfig cfg = resolve(f);
  if (image_id.empty()) image_id = std::filesystem::path(image_path).stem().string();

  std::optional<LabelSpace> labels = configured_labels(cfg);
  if (!labels && !cfg.manifest.empty()) labels = load_manifest(cfg.manifest).labels;
  if (!labels) throw ConfigError("labels", "required (--labels or --manifest)");

  const auto detections = detections_for(cfg);
  const auto backend = make_backend(cfg);
  const TemplateSet templates = load_templates(cfg);
  const PromptBuilder prompts(templates);
  const RunConfig rc = cfg.run_config();
  const auto tokens = prepare_tokens(image_id, detections.lookup(image_id), rc.nms, "file", cfg.detector_frame);
  const auto image = ImageAttachment::from_file(image_id, image_path);

  const auto result = run_dialogue(image, tokens, *labels, rc, *backend, prompts);
  const auto run_dir = cfg.out.empty() ? timestamped_run_dir("runs", to_string(cfg.setting))
                                       : std::filesystem::path(cfg.out);
  write_resolved_config(run_dir, cfg, cfg.setting);
  const auto path = write_transcript(run_dir / "transcripts", result.transcript, result.prediction, *labels);

  const auto& p = result.prediction;
  std::cout << image_id << ": " << (p.label_index ? labels->name(*p.label_index) : "(abstain)") << "  ["
            << to_string(p.source) << "]\ntranscript: " << path.string() << "\n";
  return kExitOk;
}

int cmd_inspect(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path, path);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::MalformedRecord, std::string("not a transcript: ") + e.what(), path);
  }
  std::cout << render_transcript(doc);
  return kExitOk;
}

int cmd_validate(const std::string& manifest, const std::string& detections, const std::string& script,
                 const std::string& config, const std::string& labels_spec) {
  const auto opt = [](const std::string& s) { return s.empty() ? std::nullopt : std::optional<std::string>(s); };
  std::optional<LabelSpace> labels;
  if (!labels_spec.empty()) labels = LabelSpace(split_labels(labels_spec));
  const auto results = lint_files(opt(manifest), opt(detections), opt(script), opt(config), labels);
  if (results.empty()) throw ConfigError("validate", "give at least one of --manifest, --detections, --script, --config");
  bool ok = true;
  for (const auto& r : results) {
    std::cout << (r.ok ? "ok     " : "FAILED ") << r.kind << " " << r.path << ": " << r.message << "\n";
    ok = ok && r.ok;
  }
  return ok ? kExitOk : kExitConfig;
}

bool is_config_error(ErrorCode code) {
  switch (code) {
    case ErrorCode::BackendUnavailable:
    case ErrorCode::EmptyDataset:
      return false;
    default:
      return true;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-agent dialogue classification over a chat-completion model"};
  app.require_subcommand(1);

  CommonFlags run_flags, eval_flags, ablate_flags;
  std::string image_path, image_id;
  auto* run = app.add_subcommand("run", "classify a single image");
  add_common(run, run_flags);
  run->add_option("--image", image_path, "image file")->required()->check(CLI::ExistingFile);
  run->add_option("--image-id", image_id, "id used for detections and mock lookups (default: file stem)");

  auto* evaluate_cmd = app.add_subcommand("evaluate", "run a manifest and score it");
  add_common(evaluate_cmd, eval_flags);

  auto* ablate_cmd = app.add_subcommand("ablate", "sweep settings a-d over a manifest");
  add_common(ablate_cmd, ablate_flags);

  std::string transcript_path;
  auto* inspect = app.add_subcommand("inspect", "pretty-print a transcript");
  inspect->add_option("transcript", transcript_path, "<image_id>.transcript.json")->required();

  std::string v_manifest, v_detections, v_script, v_config, v_labels;
  auto* validate_cmd = app.add_subcommand("validate", "lint input files");
  validate_cmd->add_option("--manifest", v_manifest);
  validate_cmd->add_option("--detections", v_detections);
  validate_cmd->add_option("--script", v_script, "mock script");
  validate_cmd->add_option("--config", v_config);
  validate_cmd->add_option("--labels", v_labels, "comma-separated class list or @file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*run) return cmd_run(run_flags, image_path, image_id);
    if (*evaluate_cmd) return cmd_evaluate(eval_flags);
    if (*ablate_cmd) return cmd_ablate(ablate_flags);
    if (*inspect) return cmd_inspect(transcript_path);
    if (*validate_cmd) return cmd_validate(v_manifest, v_detections, v_script, v_config, v_labels);
  } catch (const ConfigError& e) {
    std::cerr << "configuration error:\n";
    for (const auto& issue : e.issues()) std::cerr << "  " << issue.field << ": " << issue.message << "\n";
    return kExitConfig;
  } catch (const Error& e) {
    std::cerr << e.what() << "\n";
    return is_config_error(e.code()) ? kExitConfig : kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}
