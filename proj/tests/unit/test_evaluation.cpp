#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include <nlohmann/json.hpp>

#include "optdialog/error.hpp"
#include "optdialog/evaluation.hpp"
#include "oracles.hpp"
#include "test_paths.hpp"

using namespace optdialog;

namespace {

DatasetManifest manifest_of(const std::vector<std::string>& truths, const std::vector<std::string>& classes) {
  std::string text = "image_id,image_path,label\n";
  for (std::size_t i = 0; i < truths.size(); ++i) text += "i" + std::to_string(i) + ",x.jpg," + truths[i] + "\n";
  return parse_manifest(text, LabelSpace(classes));
}

Prediction pred(std::size_t i, std::optional<std::size_t> label) {
  return {"i" + std::to_string(i), label, label ? PredictionSource::Decider : PredictionSource::Abstain, ""};
}

// truths a,a,b,c predicted a,b,b,c
struct FourSample {
  DatasetManifest manifest = manifest_of({"apple", "apple", "banana", "cherry"}, {"apple", "banana", "cherry"});
  std::vector<Prediction> predictions{pred(0, 0), pred(1, 1), pred(2, 1), pred(3, 2)};
};

}  // namespace

TEST(Manifest, ParsesAndDerivesLabels) {
  auto m = parse_manifest("image_id,image_path,label\nx,a.jpg,pear\ny,b.jpg,fig\nz,c.jpg,pear\n", std::nullopt, "/data");
  EXPECT_EQ(m.labels.names(), (std::vector<std::string>{"pear", "fig"}));
  EXPECT_EQ(m.entries[2].label_index, 0u);
  EXPECT_EQ(m.entries[0].image_path, "/data/a.jpg");
  EXPECT_EQ(m.find("y"), 1u);
  EXPECT_EQ(m.find("q"), static_cast<std::size_t>(-1));
}

TEST(Manifest, LabelOutsideExplicitSpaceRejected) {
  EXPECT_EQ(thrown_code([] { parse_manifest("image_id,image_path,label\nx,a.jpg,kiwi\n", LabelSpace({"pear", "fig"})); }),
            ErrorCode::MalformedManifest);
}

TEST(Manifest, MalformedFixtures) {
  for (const char* f : {"manifest_bad_header.csv", "manifest_duplicate_id.csv", "manifest_short_row.csv",
                        "manifest_single_class.csv"}) {
    EXPECT_TRUE(thrown_code([&] { load_manifest(fixture(std::string("malformed/") + f)); }).has_value()) << f;
  }
  EXPECT_EQ(thrown_code([] { load_manifest(fixture("malformed/manifest_duplicate_id.csv")); }),
            ErrorCode::MalformedManifest);
}

TEST(Manifest, PathsResolveAgainstManifestDirectory) {
  auto m = load_manifest(fixture("corpus/manifest.csv"));
  EXPECT_EQ(m.entries.size(), 10u);
  EXPECT_EQ(std::filesystem::path(m.entries[0].image_path), fixture("corpus/images/img01.jpg"));
}

TEST(Confusion, PerfectRun) {
  auto m = manifest_of({"apple", "banana", "cherry", "apple"}, {"apple", "banana", "cherry"});
  std::vector<Prediction> p{pred(0, 0), pred(1, 1), pred(2, 2), pred(3, 0)};
  auto c = confusion_counts(p, m);
  EXPECT_EQ(c.tp, (std::vector<std::size_t>{2, 1, 1}));
  EXPECT_EQ(c.fp, (std::vector<std::size_t>{0, 0, 0}));
  EXPECT_EQ(c.fn, (std::vector<std::size_t>{0, 0, 0}));
}

TEST(Confusion, SingleError) {
  FourSample s;
  auto c = confusion_counts(s.predictions, s.manifest);
  EXPECT_EQ(c.fp[1], 1u);
  EXPECT_EQ(c.fn[0], 1u);
  EXPECT_EQ(c.misclassified, 1u);
}

TEST(Confusion, AbstainIsFalseNegativeOnly) {
  auto m = manifest_of({"apple", "banana"}, {"apple", "banana"});
  std::vector<Prediction> p{pred(0, std::nullopt), pred(1, 1)};
  auto c = confusion_counts(p, m);
  EXPECT_EQ(c.fn, (std::vector<std::size_t>{1, 0}));
  EXPECT_EQ(c.fp, (std::vector<std::size_t>{0, 0}));
  EXPECT_EQ(c.abstentions, 1u);
  const auto o = oracle::pairwise_metrics({{0, -1}, {1, 1}}, 2);
  const auto r = macro_metrics(c, m.labels);
  EXPECT_DOUBLE_EQ(r.macro_recall, o.macro_recall);
  EXPECT_DOUBLE_EQ(r.macro_precision, o.macro_precision);
}

TEST(Confusion, UnknownImageRejected) {
  auto m = manifest_of({"apple", "banana"}, {"apple", "banana"});
  std::vector<Prediction> p{{"zzz", 0u, PredictionSource::Decider, ""}};
  EXPECT_EQ(thrown_code([&] { confusion_counts(p, m); }), ErrorCode::UnknownImageId);
}

TEST(Metrics, PerfectRunScoresOne) {
  auto m = manifest_of({"apple", "banana", "cherry", "apple", "banana", "cherry"}, {"apple", "banana", "cherry"});
  std::vector<Prediction> p;
  for (std::size_t i = 0; i < 6; ++i) p.push_back(pred(i, i % 3));
  auto r = macro_metrics(confusion_counts(p, m), m.labels);
  EXPECT_EQ(r.acc_paper, 1.0);
  EXPECT_EQ(r.acc_standard, 1.0);
  EXPECT_EQ(r.macro_f1, 1.0);
  EXPECT_EQ(r.macro_recall, 1.0);
  EXPECT_EQ(r.macro_precision, 1.0);
}

TEST(Metrics, AccuracyFormulasDiverge) {
  FourSample s;
  auto r = macro_metrics(confusion_counts(s.predictions, s.manifest), s.manifest.labels);
  EXPECT_EQ(r.acc_standard, 0.75);
  EXPECT_EQ(r.acc_paper, 0.6);
}

TEST(Metrics, TwoClassRecall) {
  ConfusionCounts c;
  c.tp = {1, 0};
  c.fn = {0, 1};
  c.fp = {1, 0};
  c.n = 2;
  c.misclassified = 1;
  auto r = macro_metrics(c, LabelSpace({"apple", "banana"}));
  EXPECT_DOUBLE_EQ(r.macro_recall, 0.5);
  EXPECT_DOUBLE_EQ(r.macro_recall, oracle::pairwise_metrics({{0, 0}, {1, 0}}, 2).macro_recall);
}

TEST(Metrics, ZeroSupportFlagged) {
  auto m = manifest_of({"apple", "apple"}, {"apple", "banana", "cherry"});
  std::vector<Prediction> p{pred(0, 0), pred(1, 2)};
  auto r = macro_metrics(confusion_counts(p, m), m.labels);
  EXPECT_FALSE(r.per_class[0].zero_support);
  EXPECT_TRUE(r.per_class[1].zero_support);
  EXPECT_TRUE(r.per_class[2].zero_support);
  EXPECT_EQ(r.per_class[2].recall, 0.0);
  EXPECT_EQ(r.per_class[2].f1, 0.0);
  EXPECT_NE(per_class_csv(r).find("banana,0,0.000000,0.000000,0.000000,true"), std::string::npos);
}

TEST(Metrics, EmptyDatasetRejected) {
  ConfusionCounts c;
  c.tp = c.fp = c.fn = {0, 0};
  EXPECT_EQ(thrown_code([&] { macro_metrics(c, LabelSpace({"a", "b"})); }), ErrorCode::EmptyDataset);
}

TEST(MetricsProperty, InvariantsOnRandomRuns) {
  std::mt19937_64 rng(314);
  for (int t = 0; t < 500; ++t) {
    const int k = std::uniform_int_distribution<int>(2, 5)(rng);
    const int n = std::uniform_int_distribution<int>(1, 30)(rng);
    std::vector<std::string> classes;
    for (int c = 0; c < k; ++c) classes.push_back("c" + std::to_string(c));
    std::vector<std::string> truths;
    std::vector<Prediction> p;
    for (int i = 0; i < n; ++i) {
      truths.push_back(classes[std::uniform_int_distribution<int>(0, k - 1)(rng)]);
      const int guess = std::uniform_int_distribution<int>(-1, k - 1)(rng);
      p.push_back(pred(i, guess < 0 ? std::nullopt : std::optional<std::size_t>(guess)));
    }
    auto m = manifest_of(truths, classes);
    const auto c = confusion_counts(p, m);
    std::size_t tp = 0, fp = 0, fn = 0;
    for (int i = 0; i < k; ++i) tp += c.tp[i], fp += c.fp[i], fn += c.fn[i];
    EXPECT_EQ(tp + c.abstentions + c.misclassified, static_cast<std::size_t>(n));
    if (c.abstentions == 0) EXPECT_EQ(fp, fn);
    const auto r = macro_metrics(c, m.labels);
    EXPECT_LE(r.acc_paper, r.acc_standard);
    // Abstentions add one FN and nothing else, so only misclassifications
    // separate the two formulas (and only while some TP exists).
    if (c.misclassified == 0) EXPECT_DOUBLE_EQ(r.acc_paper, r.acc_standard);
    if (c.misclassified > 0 && tp > 0) EXPECT_LT(r.acc_paper, r.acc_standard);
    for (double v : {r.acc_paper, r.acc_standard, r.macro_precision, r.macro_recall, r.macro_f1}) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
    double mean_f1 = 0;
    for (const auto& pc : r.per_class) mean_f1 += pc.f1;
    EXPECT_NEAR(r.macro_f1, mean_f1 / k, 1e-12);

    auto shuffled = p;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    const auto r2 = macro_metrics(confusion_counts(shuffled, m), m.labels);
    EXPECT_EQ(nlohmann::json(to_json(r2)).dump(), nlohmann::json(to_json(r)).dump());
  }
}

TEST(Reports, PerClassCsvGolden) {
  FourSample s;
  auto r = macro_metrics(confusion_counts(s.predictions, s.manifest), s.manifest.labels);
  EXPECT_EQ(per_class_csv(r), slurp(fixture("golden/per_class_4sample.csv")));
}

TEST(Reports, ScatterAndSummary) {
  FourSample s;
  auto r = macro_metrics(confusion_counts(s.predictions, s.manifest), s.manifest.labels);
  const auto scatter = pr_scatter_csv(r);
  EXPECT_EQ(std::count(scatter.begin(), scatter.end(), '\n'), 4);
  EXPECT_EQ(scatter.rfind("class,precision,recall,support,f1\n", 0), 0u);
  const auto summary = nlohmann::json::parse(summary_json(r, s.predictions));
  EXPECT_EQ(summary["prediction_sources"]["decider"], 4);
  EXPECT_DOUBLE_EQ(summary["acc_paper"].get<double>(), 0.6);
  TempDir dir;
  emit_reports(r, s.predictions, dir.path());
  for (const char* f : {"per_class.csv", "pr_scatter.csv", "summary.json"}) EXPECT_TRUE(std::filesystem::exists(dir / f));
}

namespace {

MockScript corpus_script(const DatasetManifest& m, int wrong) {
  MockScript s("none");
  for (std::size_t i = 0; i < m.entries.size(); ++i) {
    const auto& e = m.entries[i];
    const auto label = static_cast<int>(i) < wrong ? m.labels.name((e.label_index + 1) % m.labels.size()) : e.label;
    s.add({e.image_id, AgentRole::Generalist, 1, 1, std::nullopt}, {"Category: " + label + "; Reasoning: seen it"});
  }
  return s;
}

}  // namespace

TEST(RunEvaluation, ScriptedPerfectionAndOneMistake) {
  const auto m = load_manifest(fixture("corpus/manifest.csv"));
  const auto det = load_detections(fixture("corpus/detections.jsonl"));
  const auto cfg = RunConfig::defaults_for(AblationSetting::B);
  EXPECT_EQ(run_evaluation(m, det, cfg, MockBackend(corpus_script(m, 0))).report.acc_standard, 1.0);
  EXPECT_DOUBLE_EQ(run_evaluation(m, det, cfg, MockBackend(corpus_script(m, 1))).report.acc_standard, 0.9);
}

TEST(RunEvaluation, ParallelismDoesNotChangeOutputs) {
  const auto m = load_manifest(fixture("corpus/manifest.csv"));
  const auto det = load_detections(fixture("corpus/detections.jsonl"));
  MockBackend backend(load_mock_script(fixture("corpus/script.json")));
  TempDir one, eight;
  auto cfg = RunConfig::defaults_for(AblationSetting::D);
  EvaluationOptions opts;
  opts.out_dir = one.path();
  const auto r1 = run_evaluation(m, det, cfg, backend, opts);
  cfg.parallelism = 8;
  opts.out_dir = eight.path();
  std::atomic<std::size_t> ticks{0};
  opts.on_progress = [&](std::size_t, std::size_t total) {
    EXPECT_EQ(total, 10u);
    ++ticks;
  };
  const auto r8 = run_evaluation(m, det, cfg, backend, opts);
  EXPECT_EQ(ticks.load(), 10u);
  for (const char* f : {"summary.json", "per_class.csv", "pr_scatter.csv", "predictions.jsonl"})
    EXPECT_EQ(slurp(one / f), slurp(eight / f)) << f;
  for (const auto& e : m.entries) {
    const auto name = "transcripts/" + e.image_id + ".transcript.json";
    EXPECT_EQ(slurp(one / name), slurp(eight / name)) << name;
  }
  EXPECT_EQ(r1.predictions.size(), r8.predictions.size());
}

TEST(RunEvaluation, MissingDetectionsDegradeToEmptyTokens) {
  const auto m = load_manifest(fixture("corpus/manifest.csv"));
  MockBackend backend(corpus_script(m, 0));
  backend.set_recording(true);
  run_evaluation(m, DetectionIndex{}, RunConfig::defaults_for(AblationSetting::B), backend);
  for (const auto& req : backend.recorded()) {
    EXPECT_NE(req.messages[1].content.find("no detected foreground objects"), std::string::npos);
  }
}
