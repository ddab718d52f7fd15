#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "optdialog/backend.hpp"
#include "optdialog/detection.hpp"
#include "optdialog/orchestrator.hpp"

namespace optdialog {

// Everything a CLI run needs. Values left at their defaults reproduce the
// published decoding and detection settings.
struct AppConfig {
  AblationSetting setting = AblationSetting::D;
  std::optional<int> rounds;  // unset: 1 for single-turn settings, 2 otherwise
  DecodingParams decoding;
  NmsConfig nms;
  int retry_limit = 2;
  int parallelism = 1;

  std::string manifest;
  std::string detections;
  std::string backend;  // "mock:<script>" or an http(s) endpoint URL
  std::string model = "qwen3-vl";
  std::string out;
  std::string templates;  // empty: builtin templates
  std::vector<std::string> labels;

  ImageSize detector_frame = kDefaultDetectorFrame;
  int resize_longest_side = 640;
  double timeout_seconds = 120.0;
  int transport_attempts = 3;
  int backoff_ms = 500;

  RunConfig run_config() const { return run_config_for(setting); }
  // Single-turn settings always run one round; multi-turn settings use
  // `rounds` or the default.
  RunConfig run_config_for(AblationSetting s) const;
};

struct ConfigOverrides {
  std::optional<AblationSetting> setting;
  std::optional<int> rounds;
  std::optional<int> parallelism;
  std::optional<std::string> manifest;
  std::optional<std::string> detections;
  std::optional<std::string> backend;
  std::optional<std::string> out;
  std::optional<std::string> templates;
  std::optional<std::string> model;
  std::optional<std::vector<std::string>> labels;
};

// Parses a JSON config document; an empty or whitespace-only text is the
// default config. Unknown keys, wrong types and out-of-range values are all
// reported together in one ConfigError.
AppConfig parse_config_json(std::string_view text);

// Reads the optional file, applies flag overrides (flags win), validates.
AppConfig parse_config(const std::optional<std::filesystem::path>& file, const ConfigOverrides& overrides = {});

void validate(const AppConfig& cfg);

// Effective configuration for one setting, in the same schema
// parse_config_json accepts, with paths made absolute and rounds resolved.
nlohmann::json resolved_config_json(const AppConfig& cfg, AblationSetting setting);
void write_resolved_config(const std::filesystem::path& dir, const AppConfig& cfg, AblationSetting setting);

}  // namespace optdialog
