#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "genis/pipeline.hpp"

namespace {

using namespace genis;

TEST(Synth, ClassCountsMatchRatiosWithinOneRow) {
  SynthSpec spec = SynthSpec::multiclass_default();
  spec.n_rows = 10000;
  spec.seed = 1;
  const FlowTable table = synth_generate(spec);
  const auto summary = summarize(table, "CategoryLabel");
  std::map<std::string, std::size_t> counts;
  for (std::size_t i = 0; i < summary.classes.size(); ++i) {
    counts[summary.classes[i]] = summary.counts[i];
  }
  EXPECT_NEAR(static_cast<double>(counts.at("DoS")), 8022.0, 1.0);
  EXPECT_NEAR(static_cast<double>(counts.at("Recon")), 752.0, 1.0);
  EXPECT_NEAR(static_cast<double>(counts.at("Benign")), 737.0, 1.0);
  EXPECT_NEAR(static_cast<double>(counts.at("Bruteforce")), 489.0, 1.0);
  EXPECT_EQ(counts.at("DoS") + counts.at("Recon") + counts.at("Benign") + counts.at("Bruteforce"),
            10000u);
}

TEST(Synth, DeterministicAndCarriesAllLabelColumns) {
  SynthSpec spec = SynthSpec::binary_default();
  spec.n_rows = 500;
  spec.seed = 7;
  const FlowTable a = synth_generate(spec);
  const FlowTable b = synth_generate(spec);
  EXPECT_TRUE(a.same_contents(b));
  EXPECT_TRUE(a.has_column("BinaryLabel"));
  EXPECT_TRUE(a.has_column("CategoryLabel"));
  EXPECT_TRUE(a.has_column("SubCategoryLabel"));
  EXPECT_EQ(a.numeric_names().size(), 20u + 6u + 2u);
}

TEST(Synth, ConstantColumnsScoreZeroAndAreNeverSelected) {
  SynthSpec spec = SynthSpec::multiclass_default();
  spec.n_rows = 1500;
  spec.seed = 3;
  const FlowTable table = synth_generate(spec);

  const auto mad = score_mad(table);
  EXPECT_EQ(mad.raw.at("Const01"), 0.0);

  std::vector<MethodScore> scores;
  scores.push_back(score_information_gain(table, "CategoryLabel"));
  scores.push_back(score_chi_squared(table, "CategoryLabel"));
  RfeConfig rfe;
  rfe.estimator.n_estimators = 20;
  rfe.estimator.max_depth = 8;
  scores.push_back(score_rfe(table, "CategoryLabel", rfe));
  scores.push_back(mad);
  scores.push_back(score_dispersion_ratio(table));
  const std::size_t n_features = table.numeric_names().size();
  const auto result = aggregate_and_select(std::move(scores), n_features - 4);
  for (const auto& f : result.selected) {
    EXPECT_TRUE(f.find("Const") == std::string::npos) << f;
  }
}

TEST(Synth, DegenerateSpecsAreRejected) {
  SynthSpec spec = SynthSpec::multiclass_default();
  spec.n_rows = 3;  // fewer rows than classes
  EXPECT_THROW(synth_generate(spec), Error);

  SynthSpec bad = SynthSpec::multiclass_default();
  bad.classes[0].ratio_percent += 1.0;  // ratios no longer sum to 100
  EXPECT_THROW(synth_generate(bad), Error);
}

RunConfig small_run(std::uint64_t seed) {
  RunConfig cfg;
  SynthSpec spec = SynthSpec::multiclass_default();
  spec.n_rows = 1200;
  cfg.synth = spec;
  cfg.models = {"rf"};
  cfg.select_k = 8;
  cfg.seed = seed;
  cfg.grid_search_enabled = false;
  cfg.explain_samples = 48;
  cfg.explain_permutations = 4;
  // keep the unit suite fast; the acceptance run uses the full defaults
  return cfg;
}

TEST(Pipeline, ReportShapeAndDeterminism) {
  const Report a = run_pipeline(small_run(11));
  ASSERT_EQ(a.rows.size(), 2u);  // rf x {full, selected}
  EXPECT_EQ(a.rows[0].feature_set, "full");
  EXPECT_EQ(a.rows[1].feature_set, "selected");
  EXPECT_TRUE(a.selection.has_value());
  EXPECT_EQ(a.selection->selected.size(), 8u);
  ASSERT_EQ(a.attributions.size(), 1u);
  EXPECT_EQ(a.attributions[0].feature_set, "selected");

  const Report b = run_pipeline(small_run(11));
  json ja = machine_report(a);
  json jb = machine_report(b);
  strip_timing(ja);
  strip_timing(jb);
  EXPECT_EQ(ja.dump(), jb.dump());

  const Report c = run_pipeline(small_run(12));
  json jc = machine_report(c);
  strip_timing(jc);
  EXPECT_NE(ja.dump(), jc.dump());
}

TEST(Pipeline, StripTimingRemovesEveryWallClockField) {
  const Report report = run_pipeline(small_run(21));
  json machine = machine_report(report);
  strip_timing(machine);
  std::function<void(const json&)> walk = [&](const json& j) {
    if (j.is_object()) {
      for (const auto& [key, value] : j.items()) {
        EXPECT_FALSE(key.size() >= 8 && key.compare(key.size() - 8, 8, "_seconds") == 0) << key;
        EXPECT_NE(key, "timestamp");
        walk(value);
      }
    } else if (j.is_array()) {
      for (const auto& v : j) walk(v);
    }
  };
  walk(machine);
}

TEST(Pipeline, SelectKLargerThanFeatureCountFailsBeforeTraining) {
  RunConfig cfg = small_run(31);
  cfg.select_k = 1000;
  try {
    run_pipeline(cfg);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("select_k"), std::string::npos);
  }
}

TEST(Pipeline, TestRowsUntouchedBeforeEvaluation) {
  RunConfig cfg = small_run(41);
  cfg.models = {"rf", "mlp"};
  const Report report = run_pipeline(cfg);
  ASSERT_TRUE(report.test_probe != nullptr);
  EXPECT_EQ(report.test_probe->rows_read("selection"), 0u);
  EXPECT_EQ(report.test_probe->rows_read("scaling"), 0u);
  EXPECT_EQ(report.test_probe->rows_read("training"), 0u);
  EXPECT_GT(report.test_probe->rows_read("evaluation"), 0u);
  EXPECT_GT(report.test_probe->rows_read("explain"), 0u);
}

TEST(Pipeline, NeuralRowsCarryEpochTimingAndComparison) {
  RunConfig cfg = small_run(51);
  cfg.models = {"mlp"};
  SynthSpec spec = SynthSpec::multiclass_default();
  spec.n_rows = 900;
  cfg.synth = spec;
  const Report report = run_pipeline(cfg);
  for (const auto& row : report.rows) {
    EXPECT_TRUE(row.te_seconds.has_value());
  }
  ASSERT_EQ(report.neural.size(), 2u);
  for (const auto& cmp : report.neural) {
    ASSERT_EQ(cmp.architectures.size(), 2u);
    EXPECT_TRUE(cmp.chosen == "128-64" || cmp.chosen == "64-32");
  }
}

TEST(Pipeline, RenderWritesMachineHumanAndArtifacts) {
  namespace fs = std::filesystem;
  const auto dir = fs::temp_directory_path() / "genis_render_test";
  fs::remove_all(dir);
  const Report report = run_pipeline(small_run(61));
  const auto written = render_report(report, dir.string());
  EXPECT_TRUE(fs::exists(dir / "report.json"));
  EXPECT_TRUE(fs::exists(dir / "report.txt"));
  EXPECT_TRUE(fs::exists(dir / "selection.json"));
  EXPECT_TRUE(fs::exists(dir / "model_rf_full.json"));
  EXPECT_TRUE(fs::exists(dir / "model_rf_selected.json"));
  EXPECT_TRUE(fs::exists(dir / "attribution_rf.json"));
  EXPECT_GE(written.size(), 5u);

  // percentages are rendered to 4 decimals in the human table
  std::ifstream txt(dir / "report.txt");
  std::string content((std::istreambuf_iterator<char>(txt)), std::istreambuf_iterator<char>());
  EXPECT_NE(content.find("Model"), std::string::npos);
  EXPECT_NE(content.find("FPR"), std::string::npos);

  // machine -> human -> re-parse preserves the rendered values
  const json machine = read_json_file((dir / "report.json").string());
  const std::string human = human_report_from_json(machine);
  for (const auto& row : machine.at("models")) {
    char expected[32];
    std::snprintf(expected, sizeof(expected), "%.4f",
                  row.at("metrics").at("f1s_pct").get<double>());
    EXPECT_NE(human.find(expected), std::string::npos) << expected;
  }
}

TEST(Pipeline, RunConfigJsonRoundTrip) {
  RunConfig cfg = small_run(71);
  cfg.models = {"rf", "gbdt_goss"};
  cfg.task = "multiclass";
  cfg.scale_for_trees = true;
  const json j = to_json(cfg);
  const RunConfig back = run_config_from_json(j);
  EXPECT_EQ(back.models, cfg.models);
  EXPECT_EQ(back.select_k, cfg.select_k);
  EXPECT_EQ(back.scale_for_trees, true);
  EXPECT_EQ(back.seed, cfg.seed);
  ASSERT_TRUE(back.synth.has_value());
  EXPECT_EQ(back.synth->n_rows, cfg.synth->n_rows);
  EXPECT_EQ(back.synth->classes.size(), cfg.synth->classes.size());
}

TEST(Pipeline, BinaryTaskRunsEndToEnd) {
  RunConfig cfg;
  SynthSpec spec = SynthSpec::binary_default();
  spec.n_rows = 1000;
  cfg.synth = spec;
  cfg.task = "binary";
  cfg.models = {"gbdt_goss"};
  cfg.select_k = 6;
  cfg.seed = 5;
  cfg.grid_search_enabled = false;
  cfg.explain_samples = 32;
  const Report report = run_pipeline(cfg);
  ASSERT_EQ(report.rows.size(), 2u);
  for (const auto& row : report.rows) {
    EXPECT_GE(row.metrics.f1s_pct, 90.0);
    EXPECT_GE(row.metrics.acc_pct, 90.0);
  }
}

TEST(Pipeline, GenisSchemaFilesRoundTripThroughIngestStage) {
  namespace fs = std::filesystem;
  const auto dir = fs::temp_directory_path() / "genis_files_test";
  fs::create_directories(dir);
  const FlowTable train = genis_schema_table(260, 1);
  const FlowTable test = genis_schema_table(90, 2);
  write_flow_csv(train, (dir / "train.csv").string());
  write_flow_csv(test, (dir / "test.csv").string());

  RunConfig cfg;
  cfg.train_csv = (dir / "train.csv").string();
  cfg.test_csv = (dir / "test.csv").string();
  cfg.task = "multiclass";
  cfg.models = {"rf"};
  cfg.feature_selection = false;
  cfg.grid_search_enabled = false;
  cfg.explain_samples = 16;
  cfg.seed = 9;
  const Report report = run_pipeline(cfg);
  // 87 model inputs after exclusion and one-hot encoding
  EXPECT_EQ(report.dataset.at("n_features").get<std::size_t>(), 87u);
  ASSERT_EQ(report.rows.size(), 1u);  // full set only
  EXPECT_EQ(report.attributions.size(), 1u);
}

}  // namespace
