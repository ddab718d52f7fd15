#include "optdialog/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "optdialog/error.hpp"

namespace optdialog {

RunConfig AppConfig::run_config_for(AblationSetting s) const {
  RunConfig rc;
  rc.setting = s;
  rc.rounds = multi_turn(s) ? rounds.value_or(default_rounds(s)) : 1;
  rc.decoding = decoding;
  rc.nms = nms;
  rc.retry_limit = retry_limit;
  rc.parallelism = parallelism;
  return rc;
}

namespace {

using nlohmann::json;

class Reader {
 public:
  explicit Reader(std::vector<FieldIssue>& issues) : issues_(issues) {}

  void number(const json& obj, const char* key, const std::string& field, double& out) {
    if (const auto it = obj.find(key); it != obj.end()) {
      if (!it->is_number() || !std::isfinite(it->get<double>())) {
        issues_.push_back({field, "must be a number"});
      } else {
        out = it->get<double>();
      }
    }
  }

  template <typename Int>
  void integer(const json& obj, const char* key, const std::string& field, Int& out) {
    if (const auto it = obj.find(key); it != obj.end()) {
      if (!it->is_number_integer()) {
        issues_.push_back({field, "must be an integer"});
      } else {
        out = it->get<Int>();
      }
    }
  }

  void string(const json& obj, const char* key, const std::string& field, std::string& out) {
    if (const auto it = obj.find(key); it != obj.end()) {
      if (!it->is_string()) {
        issues_.push_back({field, "must be a string"});
      } else {
        out = it->get<std::string>();
      }
    }
  }

  void unknown_keys(const json& obj, const std::set<std::string>& allowed, const std::string& prefix) {
    for (const auto& [key, value] : obj.items()) {
      if (!allowed.contains(key)) issues_.push_back({prefix + key, "unknown field"});
    }
  }

  const json* object(const json& obj, const char* key, const std::string& field) {
    const auto it = obj.find(key);
    if (it == obj.end()) return nullptr;
    if (!it->is_object()) {
      issues_.push_back({field, "must be an object"});
      return nullptr;
    }
    return &*it;
  }

 private:
  std::vector<FieldIssue>& issues_;
};

void collect_validation(const AppConfig& cfg, std::vector<FieldIssue>& issues) {
  if (cfg.rounds && *cfg.rounds < 1) issues.push_back({"rounds", "must be >= 1"});
  if (cfg.rounds && !multi_turn(cfg.setting) && *cfg.rounds != 1) {
    issues.push_back({"rounds", fmt::format("setting {} is single-turn; rounds must be 1", to_string(cfg.setting))});
  }
  if (!(cfg.decoding.temperature >= 0.0)) issues.push_back({"decoding.temperature", "must be >= 0"});
  if (cfg.decoding.max_new_tokens < 1) issues.push_back({"decoding.max_new_tokens", "must be >= 1"});
  if (!(cfg.nms.score_threshold >= 0.0 && cfg.nms.score_threshold <= 1.0))
    issues.push_back({"nms.score_threshold", "must lie in [0,1]"});
  if (!(cfg.nms.iou_threshold >= 0.0 && cfg.nms.iou_threshold <= 1.0))
    issues.push_back({"nms.iou_threshold", "must lie in [0,1]"});
  if (cfg.nms.max_detections < 1) issues.push_back({"nms.max_detections", "must be >= 1"});
  if (cfg.retry_limit < 0) issues.push_back({"retry_limit", "must be >= 0"});
  if (cfg.parallelism < 1) issues.push_back({"parallelism", "must be >= 1"});
  if (!(cfg.detector_frame.width > 0.0) || !(cfg.detector_frame.height > 0.0))
    issues.push_back({"detector_frame", "width and height must be positive"});
  if (cfg.resize_longest_side < 0) issues.push_back({"resize_longest_side", "must be >= 0 (0 disables resizing)"});
  if (!(cfg.timeout_seconds > 0.0)) issues.push_back({"timeout_seconds", "must be > 0"});
  if (cfg.transport_attempts < 1) issues.push_back({"transport_attempts", "must be >= 1"});
  if (cfg.backoff_ms < 0) issues.push_back({"backoff_ms", "must be >= 0"});
  if (!cfg.backend.empty() && cfg.backend.rfind("mock:", 0) != 0 && cfg.backend.rfind("http://", 0) != 0 &&
      cfg.backend.rfind("https://", 0) != 0) {
    issues.push_back({"backend", "must be mock:<path> or an http(s) URL"});
  }
  if (!cfg.labels.empty()) {
    try {
      LabelSpace check(cfg.labels);
    } catch (const Error& e) {
      issues.push_back({"labels", e.what()});
    }
  }
}

std::string absolute(const std::string& path) {
  if (path.empty()) return path;
  return std::filesystem::absolute(path).lexically_normal().string();
}

std::string absolute_backend(const std::string& backend) {
  if (backend.rfind("mock:", 0) == 0) return "mock:" + absolute(backend.substr(5));
  return backend;
}

// Type-checks the document; range checks happen in collect_validation once
// flag overrides are applied.
AppConfig read_config_json(std::string_view text) {
  AppConfig cfg;
  if (text.find_first_not_of(" \t\r\n") == std::string_view::npos) return cfg;

  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("<document>", std::string("invalid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ConfigError("<document>", "config must be a JSON object");

  std::vector<FieldIssue> issues;
  Reader read(issues);
  read.unknown_keys(doc,
                    {"setting", "rounds", "decoding", "nms", "retry_limit", "parallelism", "manifest", "detections",
                     "backend", "model", "out", "templates", "labels", "detector_frame", "resize_longest_side",
                     "timeout_seconds", "transport_attempts", "backoff_ms"},
                    "");

  if (const auto it = doc.find("setting"); it != doc.end()) {
    const auto s = it->is_string() ? parse_setting(it->get<std::string>()) : std::nullopt;
    if (!s) {
      issues.push_back({"setting", "must be one of a, b, c, d"});
    } else {
      cfg.setting = *s;
    }
  }
  if (const auto it = doc.find("rounds"); it != doc.end() && !it->is_null()) {
    if (!it->is_number_integer()) {
      issues.push_back({"rounds", "must be an integer"});
    } else {
      cfg.rounds = it->get<int>();
    }
  }
  if (const auto* dec = read.object(doc, "decoding", "decoding")) {
    read.unknown_keys(*dec, {"temperature", "max_new_tokens"}, "decoding.");
    read.number(*dec, "temperature", "decoding.temperature", cfg.decoding.temperature);
    read.integer(*dec, "max_new_tokens", "decoding.max_new_tokens", cfg.decoding.max_new_tokens);
  }
  if (const auto* nms = read.object(doc, "nms", "nms")) {
    read.unknown_keys(*nms, {"score_threshold", "iou_threshold", "max_detections"}, "nms.");
    read.number(*nms, "score_threshold", "nms.score_threshold", cfg.nms.score_threshold);
    read.number(*nms, "iou_threshold", "nms.iou_threshold", cfg.nms.iou_threshold);
    read.integer(*nms, "max_detections", "nms.max_detections", cfg.nms.max_detections);
  }
  read.integer(doc, "retry_limit", "retry_limit", cfg.retry_limit);
  read.integer(doc, "parallelism", "parallelism", cfg.parallelism);
  read.string(doc, "manifest", "manifest", cfg.manifest);
  read.string(doc, "detections", "detections", cfg.detections);
  read.string(doc, "backend", "backend", cfg.backend);
  read.string(doc, "model", "model", cfg.model);
  read.string(doc, "out", "out", cfg.out);
  read.string(doc, "templates", "templates", cfg.templates);
  if (const auto it = doc.find("labels"); it != doc.end()) {
    if (!it->is_array() || !std::all_of(it->begin(), it->end(), [](const json& v) { return v.is_string(); })) {
      issues.push_back({"labels", "must be an array of strings"});
    } else {
      cfg.labels = it->get<std::vector<std::string>>();
    }
  }
  if (const auto it = doc.find("detector_frame"); it != doc.end()) {
    if (!it->is_array() || it->size() != 2 || !(*it)[0].is_number() || !(*it)[1].is_number()) {
      issues.push_back({"detector_frame", "must be [width, height]"});
    } else {
      cfg.detector_frame = {(*it)[0].get<double>(), (*it)[1].get<double>()};
    }
  }
  read.integer(doc, "resize_longest_side", "resize_longest_side", cfg.resize_longest_side);
  read.number(doc, "timeout_seconds", "timeout_seconds", cfg.timeout_seconds);
  read.integer(doc, "transport_attempts", "transport_attempts", cfg.transport_attempts);
  read.integer(doc, "backoff_ms", "backoff_ms", cfg.backoff_ms);

  if (!issues.empty()) {
    // report range problems alongside the type problems
    collect_validation(cfg, issues);
    throw ConfigError(std::move(issues));
  }
  return cfg;
}

}  // namespace

AppConfig parse_config_json(std::string_view text) {
  AppConfig cfg = read_config_json(text);
  validate(cfg);
  return cfg;
}

void validate(const AppConfig& cfg) {
  std::vector<FieldIssue> issues;
  collect_validation(cfg, issues);
  if (!issues.empty()) throw ConfigError(std::move(issues));
}

AppConfig parse_config(const std::optional<std::filesystem::path>& file, const ConfigOverrides& o) {
  AppConfig cfg;
  if (file) {
    std::ifstream in(*file, std::ios::binary);
    if (!in) throw ConfigError("--config", "cannot open " + file->string());
    std::ostringstream buf;
    buf << in.rdbuf();
    cfg = read_config_json(buf.str());
  }
  if (o.setting) {
    cfg.setting = *o.setting;
    // A file-level round count does not carry over to a single-turn setting chosen by flag.
    if (!multi_turn(cfg.setting) && !o.rounds) cfg.rounds.reset();
  }
  if (o.rounds) cfg.rounds = *o.rounds;
  if (o.parallelism) cfg.parallelism = *o.parallelism;
  if (o.manifest) cfg.manifest = *o.manifest;
  if (o.detections) cfg.detections = *o.detections;
  if (o.backend) cfg.backend = *o.backend;
  if (o.out) cfg.out = *o.out;
  if (o.templates) cfg.templates = *o.templates;
  if (o.model) cfg.model = *o.model;
  if (o.labels) cfg.labels = *o.labels;
  validate(cfg);
  return cfg;
}

nlohmann::json resolved_config_json(const AppConfig& cfg, AblationSetting setting) {
  const RunConfig rc = cfg.run_config_for(setting);
  return {
      {"setting", std::string(to_string(setting))},
      {"rounds", rc.rounds},
      {"decoding", {{"temperature", rc.decoding.temperature}, {"max_new_tokens", rc.decoding.max_new_tokens}}},
      {"nms",
       {{"score_threshold", rc.nms.score_threshold},
        {"iou_threshold", rc.nms.iou_threshold},
        {"max_detections", rc.nms.max_detections}}},
      {"retry_limit", rc.retry_limit},
      {"parallelism", rc.parallelism},
      {"manifest", absolute(cfg.manifest)},
      {"detections", absolute(cfg.detections)},
      {"backend", absolute_backend(cfg.backend)},
      {"model", cfg.model},
      {"out", absolute(cfg.out)},
      {"templates", absolute(cfg.templates)},
      {"labels", cfg.labels},
      {"detector_frame", {cfg.detector_frame.width, cfg.detector_frame.height}},
      {"resize_longest_side", cfg.resize_longest_side},
      {"timeout_seconds", cfg.timeout_seconds},
      {"transport_attempts", cfg.transport_attempts},
      {"backoff_ms", cfg.backoff_ms},
  };
}

void write_resolved_config(const std::filesystem::path& dir, const AppConfig& cfg, AblationSetting setting) {
  std::filesystem::create_directories(dir);
  const auto path = dir / "resolved_config.json";
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string(), path.string());
  out << resolved_config_json(cfg, setting).dump(2) << '\n';
}

}  // namespace optdialog
