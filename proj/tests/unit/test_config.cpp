#include <gtest/gtest.h>

#include <nlohmann/json.hpp>

#include "optdialog/app.hpp"
#include "optdialog/config.hpp"
#include "optdialog/error.hpp"
#include "test_paths.hpp"

using namespace optdialog;

TEST(Config, EmptyDocumentGivesDefaults) {
  for (const char* text : {"", "  \n", "{}"}) {
    const auto cfg = parse_config_json(text);
    const auto rc = cfg.run_config();
    EXPECT_EQ(cfg.setting, AblationSetting::D);
    EXPECT_DOUBLE_EQ(rc.decoding.temperature, 0.2);
    EXPECT_EQ(rc.decoding.max_new_tokens, 512);
    EXPECT_DOUBLE_EQ(rc.nms.score_threshold, 0.5);
    EXPECT_DOUBLE_EQ(rc.nms.iou_threshold, 0.5);
    EXPECT_EQ(rc.nms.max_detections, 20);
    EXPECT_EQ(rc.rounds, 2);
    EXPECT_EQ(cfg.resize_longest_side, 640);
    EXPECT_DOUBLE_EQ(cfg.timeout_seconds, 120.0);
  }
}

TEST(Config, NegativeTemperatureRejected) {
  try {
    parse_config_json(R"({"decoding": {"temperature": -1}})");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidConfig);
    ASSERT_EQ(e.issues().size(), 1u);
    EXPECT_EQ(e.issues()[0].field, "decoding.temperature");
  }
}

TEST(Config, AllIssuesReportedTogether) {
  try {
    parse_config_json(R"({"decoding": {"temperature": -1, "max_new_tokens": 0}, "parallelism": 0, "bogus": 1})");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_GE(e.issues().size(), 3u);
  }
}

TEST(Config, MalformedFixturesRejected) {
  for (const char* f : {"config_negative_temperature.json", "config_unknown_key.json", "config_bad_setting.json",
                        "config_bad_nms.json"}) {
    EXPECT_EQ(thrown_code([&] { parse_config(fixture(std::string("malformed/") + f)); }), ErrorCode::InvalidConfig)
        << f;
  }
}

TEST(Config, FlagsOverrideFile) {
  TempDir dir;
  std::ofstream(dir / "cfg.json") << R"({"setting": "d", "rounds": 3, "parallelism": 2})";
  ConfigOverrides o;
  o.setting = AblationSetting::A;
  const auto cfg = parse_config(dir / "cfg.json", o);
  EXPECT_EQ(cfg.setting, AblationSetting::A);
  EXPECT_EQ(cfg.parallelism, 2);
  EXPECT_EQ(cfg.run_config().rounds, 1);

  ConfigOverrides c;
  c.setting = AblationSetting::C;
  EXPECT_EQ(parse_config(dir / "cfg.json", c).run_config().rounds, 3);
  c.rounds = 4;
  EXPECT_EQ(parse_config(dir / "cfg.json", c).run_config().rounds, 4);
}

TEST(Config, RoundsOnSingleTurnSettingRejected) {
  EXPECT_EQ(thrown_code([] { parse_config_json(R"({"setting": "b", "rounds": 2})"); }), ErrorCode::InvalidConfig);
}

TEST(Config, ResolvedConfigReparses) {
  auto cfg = parse_config_json(R"({"setting": "c", "manifest": "m.csv", "labels": ["x", "y"]})");
  const auto doc = resolved_config_json(cfg, AblationSetting::C);
  EXPECT_EQ(doc["rounds"], 2);
  EXPECT_TRUE(std::filesystem::path(doc["manifest"].get<std::string>()).is_absolute());
  const auto again = parse_config_json(doc.dump());
  EXPECT_EQ(resolved_config_json(again, AblationSetting::C), doc);
}

TEST(App, TimestampedRunDir) {
  const auto dir = timestamped_run_dir("runs", "d");
  EXPECT_EQ(dir.parent_path(), "runs");
  const auto name = dir.filename().string();
  EXPECT_EQ(name.size(), std::string("20260101T000000Z-d").size());
  EXPECT_EQ(name.substr(name.size() - 2), "-d");
}

TEST(App, MakeBackendChoosesImplementation) {
  AppConfig cfg;
  cfg.backend = "mock:" + fixture("corpus/script.json").string();
  EXPECT_EQ(make_backend(cfg)->model(), "scripted");
  cfg.backend = "http://127.0.0.1:9/v1/chat/completions";
  EXPECT_EQ(make_backend(cfg)->backend_id(), cfg.backend);
  cfg.backend = "ftp://nowhere";
  EXPECT_THROW(make_backend(cfg), Error);
}

TEST(App, AblationWritesFourRows) {
  TempDir out;
  const auto m = load_manifest(fixture("corpus/manifest.csv"));
  const auto det = load_detections(fixture("corpus/detections.jsonl"));
  MockBackend backend(load_mock_script(fixture("corpus/script.json")));
  AppConfig cfg;
  const auto rows = ablate(m, det, backend, cfg, PromptBuilder{}, out.path());
  ASSERT_EQ(rows.size(), 4u);
  const auto csv = slurp(out / "ablation.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);
  EXPECT_GT(rows[3].report.acc_standard, rows[0].report.acc_standard);
  for (const auto& r : rows) {
    EXPECT_TRUE(r.ok) << r.error;
    EXPECT_TRUE(std::filesystem::exists(r.run_dir / "resolved_config.json"));
    EXPECT_TRUE(std::filesystem::exists(r.run_dir / "summary.json"));
  }
}

TEST(App, ResolvedConfigReplaysByteIdentically) {
  TempDir first, second;
  ConfigOverrides o;
  o.manifest = fixture("corpus/manifest.csv").string();
  o.detections = fixture("corpus/detections.jsonl").string();
  o.backend = "mock:" + fixture("corpus/script.json").string();
  const auto cfg = parse_config(std::nullopt, o);
  const auto m = load_manifest(cfg.manifest);
  const auto det = load_detections(cfg.detections);
  const auto backend = make_backend(cfg);
  const auto templates = load_templates(cfg);
  evaluate(m, det, *backend, cfg, cfg.setting, PromptBuilder(templates), first.path());

  const auto replay = parse_config(first / "resolved_config.json");
  const auto backend2 = make_backend(replay);
  const auto templates2 = load_templates(replay);
  evaluate(load_manifest(replay.manifest), load_detections(replay.detections), *backend2, replay, replay.setting,
           PromptBuilder(templates2), second.path());
  for (const char* f : {"resolved_config.json", "summary.json", "per_class.csv", "predictions.jsonl"})
    EXPECT_EQ(slurp(first / f), slurp(second / f)) << f;
  EXPECT_EQ(slurp(first / "transcripts/img05.transcript.json"), slurp(second / "transcripts/img05.transcript.json"));
}

TEST(Lint, AcceptsGoodRejectsMalformed) {
  for (const auto& r : lint_files(fixture("corpus/manifest.csv").string(), fixture("corpus/detections.jsonl").string(),
                                  fixture("corpus/script.json").string(), std::nullopt)) {
    EXPECT_TRUE(r.ok) << r.kind << ": " << r.message;
  }
  for (const auto& entry : std::filesystem::directory_iterator(fixture("malformed"))) {
    const auto name = entry.path().filename().string();
    const auto path = entry.path().string();
    std::optional<std::string> manifest, detections, script, config;
    if (name.rfind("manifest", 0) == 0) manifest = path;
    if (name.rfind("detections", 0) == 0) detections = path;
    if (name.rfind("script", 0) == 0) script = path;
    if (name.rfind("config", 0) == 0) config = path;
    const auto results = lint_files(manifest, detections, script, config);
    ASSERT_EQ(results.size(), 1u) << name;
    EXPECT_FALSE(results[0].ok) << name;
  }
}

TEST(Inspect, RendersTranscript) {
  const auto doc = nlohmann::json::parse(R"({
    "image_id": "x", "setting": "d", "rounds": 1, "final_round": 1, "template_version": "v1",
    "turns": [{"round": 1, "role": "food_scientist", "prompt_digest": "ab", "raw_response": "r",
               "hypothesis": {"label_index": 0, "label": "apple", "raw_label_text": "apple", "rationale": "red",
                              "verdict": null},
               "error": null, "retries_used": 0, "attempts": []}]})");
  const auto text = render_transcript(doc);
  EXPECT_NE(text.find("Food Scientist"), std::string::npos);
  EXPECT_NE(text.find("apple"), std::string::npos);
}
