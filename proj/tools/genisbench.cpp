// genisbench: flow-record intrusion-detection benchmark pipeline.
//
// Verbs: ingest, synth, select, train, evaluate, explain, pipeline, report.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "genis/genis.hpp"

namespace {

using genis::json;

// shared preparation for the single-stage verbs: load, exclude, one-hot
genis::FlowTable prepare_table(const std::string& csv_path, const std::string& taxonomy_path,
                               bool quiet = false) {
  const auto tax = genis::resolve_taxonomy(taxonomy_path, csv_path);
  auto loaded = genis::load_flow_csv(genis::resolve_data_path(csv_path), tax);
  if (!quiet && loaded.dropped_rows > 0) {
    std::cerr << "dropped " << loaded.dropped_rows << " rows with unparseable numeric cells\n";
  }
  auto excluded = genis::apply_exclusion_policy(loaded.table);
  genis::FlowTable table = std::move(excluded.table);
  const auto categorical = table.categorical_names();
  if (!categorical.empty()) table = genis::one_hot_encode(table, categorical);
  return table;
}

genis::SynthSpec synth_spec_for(const std::string& spec_path, const std::string& task) {
  if (!spec_path.empty()) {
    return genis::synth_spec_from_json(genis::read_json_file(genis::resolve_data_path(spec_path)));
  }
  return task == "binary" ? genis::SynthSpec::binary_default()
                          : genis::SynthSpec::multiclass_default();
}

void print_summary(const genis::DatasetSummary& s) {
  std::printf("%-14s %10s %10s\n", "class", "count", "ratio(%)");
  for (std::size_t i = 0; i < s.classes.size(); ++i) {
    std::printf("%-14s %10zu %10.2f\n", s.classes[i].c_str(), s.counts[i], s.ratios_percent[i]);
  }
}

int run_ingest(const std::string& input, const std::string& taxonomy_path,
               const std::string& out_csv, const std::string& label) {
  const auto tax = genis::resolve_taxonomy(taxonomy_path, input);
  auto loaded = genis::load_flow_csv(genis::resolve_data_path(input), tax);
  std::printf("rows: %zu   dropped: %zu   columns: %zu\n", loaded.table.n_rows(),
              loaded.dropped_rows, loaded.table.n_columns());
  if (!loaded.unknown_columns.empty()) {
    std::printf("unknown columns tolerated: %zu\n", loaded.unknown_columns.size());
  }
  auto excluded = genis::apply_exclusion_policy(loaded.table);
  for (const auto& [name, reason] : excluded.removed) {
    std::printf("excluded %-16s %s\n", name.c_str(), reason.c_str());
  }
  if (loaded.table.has_column(label)) {
    print_summary(genis::summarize(excluded.table, label));
  }
  if (!out_csv.empty()) {
    genis::write_flow_csv(excluded.table, out_csv);
    std::printf("wrote %s\n", out_csv.c_str());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"GeNIS flow-record intrusion detection benchmark"};
  app.require_subcommand(1);

  std::string config_path, task = "multiclass", out = "genisbench-out";
  std::string train_csv, test_csv, taxonomy_csv, synth_path, input_csv, model_path, in_path;
  std::string models_flag, label_flag, benign = "Benign";
  std::size_t select_k = 16, rows = 20000, samples = 512, permutations = 16;
  std::uint64_t seed = 42;
  bool single_thread = false, full_schema = false, no_selection = false, no_grid = false;

  auto* pipeline = app.add_subcommand("pipeline", "run the full benchmark pipeline");
  pipeline->add_option("--config", config_path, "JSON run configuration");
  pipeline->add_option("--task", task, "binary|multiclass");
  pipeline->add_option("--models", models_flag, "comma-separated subset of rf,gbdt_hist,gbdt_goss,mlp,lstm");
  pipeline->add_option("--select-k", select_k, "selected feature count");
  pipeline->add_option("--seed", seed, "master seed");
  pipeline->add_option("--out", out, "output directory");
  pipeline->add_option("--synth", synth_path, "synthetic data spec (JSON)");
  pipeline->add_option("--train", train_csv, "training CSV");
  pipeline->add_option("--test", test_csv, "test CSV");
  pipeline->add_option("--taxonomy", taxonomy_csv, "taxonomy descriptor CSV");
  pipeline->add_flag("--single-thread", single_thread, "deterministic timing mode");
  pipeline->add_flag("--no-selection", no_selection, "skip feature selection");
  pipeline->add_flag("--no-grid", no_grid, "skip hyperparameter grid search");

  auto* synth = app.add_subcommand("synth", "generate a synthetic flow table");
  synth->add_option("--spec", synth_path, "synthetic data spec (JSON)");
  synth->add_option("--task", task, "binary|multiclass (default spec choice)");
  synth->add_option("--rows", rows, "row count");
  synth->add_option("--seed", seed, "seed");
  synth->add_option("--out", out, "output CSV path")->required();
  synth->add_flag("--full-schema", full_schema, "emit the full 125-column GeNIS schema");

  auto* ingest = app.add_subcommand("ingest", "load a flow CSV, apply exclusions, summarize");
  ingest->add_option("--input", input_csv, "flow CSV")->required();
  ingest->add_option("--taxonomy", taxonomy_csv, "taxonomy descriptor CSV");
  ingest->add_option("--out", out, "write the cleaned CSV here")->default_val("");
  ingest->add_option("--label", label_flag, "label column to summarize")->default_val("CategoryLabel");

  auto* select = app.add_subcommand("select", "rank features with the five-method ensemble");
  select->add_option("--train", train_csv, "training CSV")->required();
  select->add_option("--taxonomy", taxonomy_csv, "taxonomy descriptor CSV");
  select->add_option("--task", task, "binary|multiclass");
  select->add_option("--k", select_k, "selected feature count");
  select->add_option("--seed", seed, "seed");
  select->add_option("--out", out, "output JSON path")->default_val("selection.json");

  auto* train = app.add_subcommand("train", "train a single model on a CSV");
  train->add_option("--train", train_csv, "training CSV")->required();
  train->add_option("--model", models_flag, "rf|gbdt_hist|gbdt_goss|mlp|lstm")->required();
  train->add_option("--task", task, "binary|multiclass");
  train->add_option("--taxonomy", taxonomy_csv, "taxonomy descriptor CSV");
  train->add_option("--seed", seed, "seed");
  train->add_option("--out", out, "model output path")->default_val("model.json");
  train->add_flag("--no-grid", no_grid, "use the default configuration without grid search");

  auto* evaluate = app.add_subcommand("evaluate", "evaluate a serialized model on a test CSV");
  evaluate->add_option("--model", model_path, "model JSON")->required();
  evaluate->add_option("--test", test_csv, "test CSV")->required();
  evaluate->add_option("--task", task, "binary|multiclass");
  evaluate->add_option("--taxonomy", taxonomy_csv, "taxonomy descriptor CSV");
  evaluate->add_option("--benign", benign, "benign class name");
  evaluate->add_option("--out", out, "metrics JSON output path")->default_val("");

  std::string target_class;
  auto* explain = app.add_subcommand("explain", "Shapley attribution for a serialized model");
  explain->add_option("--model", model_path, "model JSON")->required();
  explain->add_option("--test", test_csv, "test CSV")->required();
  explain->add_option("--train", train_csv, "training CSV (background for network models)");
  explain->add_option("--taxonomy", taxonomy_csv, "taxonomy descriptor CSV");
  explain->add_option("--samples", samples, "rows to attribute");
  explain->add_option("--permutations", permutations, "sampled-Shapley permutations");
  explain->add_option("--target", target_class, "class to explain (default: positive / first)");
  explain->add_option("--seed", seed, "seed");
  explain->add_option("--out", out, "attribution JSON output path")->default_val("attribution.json");

  auto* report = app.add_subcommand("report", "re-render a machine report");
  report->add_option("--in", in_path, "machine report JSON")->required();
  report->add_option("--out", out, "output directory (stdout when empty)")->default_val("");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*pipeline) {
      genis::RunConfig cfg;
      if (!config_path.empty()) {
        cfg = genis::run_config_from_json(genis::read_json_file(config_path));
      }
      if (pipeline->count("--task")) cfg.task = task;
      if (pipeline->count("--select-k")) cfg.select_k = select_k;
      if (pipeline->count("--seed")) cfg.seed = seed;
      if (pipeline->count("--out")) cfg.out_dir = out;
      if (pipeline->count("--train")) cfg.train_csv = train_csv;
      if (pipeline->count("--test")) cfg.test_csv = test_csv;
      if (pipeline->count("--taxonomy")) cfg.taxonomy_csv = taxonomy_csv;
      if (pipeline->count("--single-thread")) cfg.single_thread = true;
      if (pipeline->count("--no-selection")) cfg.feature_selection = false;
      if (pipeline->count("--no-grid")) cfg.grid_search_enabled = false;
      if (pipeline->count("--models")) {
        cfg.models.clear();
        std::string item;
        for (char ch : models_flag + ",") {
          if (ch == ',') {
            if (!item.empty()) cfg.models.push_back(item);
            item.clear();
          } else {
            item.push_back(ch);
          }
        }
      }
      if (pipeline->count("--synth")) {
        cfg.synth = synth_spec_for(synth_path, cfg.task);
      } else if (!cfg.synth && cfg.train_csv.empty()) {
        cfg.synth = synth_spec_for("", cfg.task);  // default desk-scale run
      }
      const genis::Report result = genis::run_pipeline(cfg);
      const auto written = genis::render_report(result, cfg.out_dir);
      for (const auto& path : written) std::printf("wrote %s\n", path.c_str());
      std::printf("pipeline finished in %.2f s\n", result.wall_seconds);
      return 0;
    }

    if (*synth) {
      genis::FlowTable table;
      if (full_schema) {
        table = genis::genis_schema_table(rows, seed);
      } else {
        genis::SynthSpec spec = synth_spec_for(synth_path, task);
        if (synth->count("--rows")) spec.n_rows = rows;
        if (synth->count("--seed")) spec.seed = seed;
        table = genis::synth_generate(spec);
      }
      genis::write_flow_csv(table, out);
      genis::save_taxonomy(table.taxonomy(), out + ".taxonomy.csv");
      std::printf("wrote %s (%zu rows, %zu columns) and %s.taxonomy.csv\n", out.c_str(),
                  table.n_rows(), table.n_columns(), out.c_str());
      return 0;
    }

    if (*ingest) return run_ingest(input_csv, taxonomy_csv, out, label_flag);

    if (*select) {
      const auto table = prepare_table(train_csv, taxonomy_csv);
      const std::string label = task == "binary" ? "BinaryLabel" : "CategoryLabel";
      genis::BinningConfig binning;
      std::vector<genis::MethodScore> scores;
      scores.push_back(genis::score_information_gain(table, label, binning));
      scores.push_back(genis::score_chi_squared(table, label, binning));
      genis::RfeConfig rfe;
      rfe.seed = seed;
      scores.push_back(genis::score_rfe(table, label, rfe));
      scores.push_back(genis::score_mad(table));
      scores.push_back(genis::score_dispersion_ratio(table));
      const auto result =
          genis::aggregate_and_select(std::move(scores),
                                      std::min(select_k, table.numeric_names().size()));
      genis::write_json_file(genis::to_json(result), out);
      std::printf("wrote %s (cumulative importance %.2f%%)\n", out.c_str(),
                  100.0 * result.cumulative_importance);
      return 0;
    }

    if (*train) {
      const auto table = prepare_table(train_csv, taxonomy_csv);
      const std::string label = task == "binary" ? "BinaryLabel" : "CategoryLabel";
      const auto space = genis::make_label_space(table, label, benign);
      const auto y = genis::encode_labels(table, label, space);
      const auto features = table.numeric_names();
      const genis::Matrix x = table.to_matrix(features);
      const std::string family = models_flag;
      json artifact;
      if (family == "mlp" || family == "lstm") {
        const auto split = genis::stratified_holdout_indices(y, 0.7, seed);
        const auto scaler = genis::fit_scaler(table, split.train_rows, features);
        genis::Matrix x70 = table.to_matrix(features, &split.train_rows);
        genis::Matrix x30 = table.to_matrix(features, &split.validation_rows);
        genis::transform_matrix(scaler, x70);
        genis::transform_matrix(scaler, x30);
        std::vector<int> y70, y30;
        for (auto r : split.train_rows) y70.push_back(y[r]);
        for (auto r : split.validation_rows) y30.push_back(y[r]);
        auto cfg = family == "mlp" ? genis::mlp_config(128, 64) : genis::lstm_config(128, 64);
        cfg.seed = seed;
        auto model = genis::init_network(cfg, features.size(), space.classes.size(), seed);
        model.feature_names = features;
        model.class_names = space.classes;
        const auto log = genis::train(model, x70, y70, x30, y30);
        std::printf("best epoch %zu, validation loss %.6f\n", log.best_epoch + 1,
                    log.val_loss[log.best_epoch]);
        artifact = genis::to_json(model);
        artifact["train_log"] = genis::to_json(log);
        artifact["scaler"] = json{{"features", scaler.features},
                                  {"mean", scaler.mean},
                                  {"stddev", scaler.stddev}};
      } else {
        auto family_spec = genis::pipeline_detail::make_tree_family(family);
        std::string winner = family_spec.candidates.front().name;
        if (!no_grid && family_spec.candidates.size() > 1) {
          genis::GridSpec grid;
          grid.family = family;
          grid.candidates = family_spec.candidates;
          grid.classes = space.classes;
          grid.benign_class = benign;
          winner = genis::grid_search(grid, x, y, seed).winner_name;
          std::printf("grid winner: %s\n", winner.c_str());
        }
        const auto model =
            family_spec.fit_named(x, y, winner, seed, features, space.classes);
        artifact = genis::to_json(model);
      }
      genis::write_json_file(artifact, out);
      std::printf("wrote %s\n", out.c_str());
      return 0;
    }

    if (*evaluate) {
      const auto table = prepare_table(test_csv, taxonomy_csv);
      const json artifact = genis::read_json_file(model_path);
      const std::string label = task == "binary" ? "BinaryLabel" : "CategoryLabel";
      genis::Matrix proba;
      std::vector<std::string> classes;
      double it_seconds = 0.0;
      if (artifact.at("type") == "network") {
        auto model = genis::network_from_json(artifact);
        classes = model.class_names;
        genis::Matrix x = table.to_matrix(model.feature_names);
        genis::Scaler scaler;
        scaler.features = artifact.at("scaler").at("features").get<std::vector<std::string>>();
        scaler.mean = artifact.at("scaler").at("mean").get<std::vector<double>>();
        scaler.stddev = artifact.at("scaler").at("stddev").get<std::vector<double>>();
        genis::transform_matrix(scaler, x);
        it_seconds = genis::time_harness([&] { proba = genis::forward(model, x, false); });
      } else {
        auto model = genis::tree_model_from_json(artifact);
        classes = model.class_names;
        genis::Matrix x = table.to_matrix(model.feature_names);
        it_seconds = genis::time_harness([&] { proba = genis::predict_proba(model, x); });
      }
      genis::LabelSpace space;
      space.classes = classes;
      space.benign_class = benign;
      space.task = classes.size() == 2 ? genis::Task::binary : genis::Task::multiclass;
      const auto y = genis::encode_labels(table, label, space);
      std::vector<int> pred(proba.rows);
      for (std::size_t r = 0; r < proba.rows; ++r) {
        auto row = proba.row(r);
        pred[r] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
      }
      const auto cm = genis::confusion(y, pred, classes);
      const auto metrics =
          classes.size() == 2
              ? genis::binary_metrics(cm, classes[0] == benign ? classes[1] : classes[0])
              : genis::macro_metrics(cm, benign);
      std::printf("F1S %.4f  ACC %.4f  RCL %.4f  PRC %.4f  FPR %.4f  IT %.2fs\n",
                  metrics.f1s_pct, metrics.acc_pct, metrics.rcl_pct, metrics.prc_pct,
                  metrics.fpr_pct, it_seconds);
      if (!out.empty()) {
        json j = genis::to_json(metrics);
        j["it_seconds"] = it_seconds;
        genis::write_json_file(j, out);
        std::printf("wrote %s\n", out.c_str());
      }
      return 0;
    }

    if (*explain) {
      const auto table = prepare_table(test_csv, taxonomy_csv);
      const json artifact = genis::read_json_file(model_path);
      auto pick_target = [&](const std::vector<std::string>& classes) -> std::size_t {
        if (!target_class.empty()) {
          for (std::size_t i = 0; i < classes.size(); ++i) {
            if (classes[i] == target_class) return i;
          }
          genis::fail("target class not known to the model: " + target_class);
        }
        return classes.size() == 2 ? 1 : 0;
      };
      genis::Attribution attr;
      if (artifact.at("type") == "network") {
        genis::require(!train_csv.empty(), "--train is required for network attributions");
        auto model = genis::network_from_json(artifact);
        genis::Scaler scaler;
        scaler.features = artifact.at("scaler").at("features").get<std::vector<std::string>>();
        scaler.mean = artifact.at("scaler").at("mean").get<std::vector<double>>();
        scaler.stddev = artifact.at("scaler").at("stddev").get<std::vector<double>>();
        const auto train_table = prepare_table(train_csv, taxonomy_csv, true);
        genis::Rng rng(genis::derive_seed(seed, 0xb6d));
        auto rows = rng.sample_without_replacement(train_table.n_rows(),
                                                   std::min<std::size_t>(100, train_table.n_rows()));
        std::sort(rows.begin(), rows.end());
        genis::Matrix background = train_table.to_matrix(model.feature_names, &rows);
        genis::transform_matrix(scaler, background);
        genis::Matrix x = table.to_matrix(model.feature_names);
        genis::Matrix subset(std::min<std::size_t>(samples, x.rows), x.cols);
        for (std::size_t r = 0; r < subset.rows; ++r) {
          auto src = x.row(r);
          std::copy(src.begin(), src.end(), subset.row(r).begin());
        }
        genis::transform_matrix(scaler, subset);
        attr = genis::sampled_shapley(model, subset, background, permutations, seed,
                                      pick_target(model.class_names));
      } else {
        auto model = genis::tree_model_from_json(artifact);
        genis::Matrix x = table.to_matrix(model.feature_names);
        genis::Matrix subset(std::min<std::size_t>(samples, x.rows), x.cols);
        for (std::size_t r = 0; r < subset.rows; ++r) {
          auto src = x.row(r);
          std::copy(src.begin(), src.end(), subset.row(r).begin());
        }
        attr = genis::tree_shap(model, subset, pick_target(model.class_names));
      }
      const auto groups = genis::group_importance(attr, table.taxonomy());
      json j = genis::to_json(attr);
      j["group_totals"] = groups.totals;
      genis::write_json_file(j, out);
      std::printf("wrote %s\n", out.c_str());
      return 0;
    }

    if (*report) {
      const json machine = genis::read_json_file(in_path);
      const std::string human = genis::human_report_from_json(machine);
      if (out.empty()) {
        std::printf("%s", human.c_str());
      } else {
        std::filesystem::create_directories(out);
        const auto path = (std::filesystem::path(out) / "report.txt").string();
        std::ofstream f(path);
        f << human;
        std::printf("wrote %s\n", path.c_str());
      }
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
