#pragma once

#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "genis/core.hpp"
#include "genis/csv.hpp"
#include "genis/eval.hpp"
#include "genis/explain.hpp"
#include "genis/featsel.hpp"
#include "genis/flow_table.hpp"
#include "genis/neural.hpp"
#include "genis/preprocess.hpp"
#include "genis/serialize.hpp"
#include "genis/synth.hpp"
#include "genis/taxonomy.hpp"
#include "genis/trees.hpp"

namespace genis {

inline const char* kVersion = "0.1.0";
inline const char* kDataDirEnv = "GENISBENCH_DATA_DIR";

// ---------------------------------------------------------------------------
// Run configuration
// ---------------------------------------------------------------------------

struct RunConfig {
  // data source: either train/test CSV paths or a synthetic spec
  std::string train_csv;
  std::string test_csv;
  std::string taxonomy_csv;  // empty: bundled GeNIS default
  std::optional<SynthSpec> synth;
  double synth_test_fraction = 0.2;

  std::string task = "multiclass";  // binary | multiclass
  std::string label_column;         // default: BinaryLabel / CategoryLabel per task
  std::string benign_class = "Benign";

  bool feature_selection = true;
  std::size_t select_k = 16;
  std::size_t n_bins = 10;
  DispersionFormula dispersion_formula = DispersionFormula::am_gm;

  std::vector<std::string> models = {"rf", "gbdt_hist", "gbdt_goss", "mlp", "lstm"};
  bool grid_search_enabled = true;
  bool scale_for_trees = false;

  std::size_t explain_samples = 512;
  std::size_t explain_permutations = 16;
  std::size_t explain_background = 100;

  std::uint64_t seed = 42;
  std::string out_dir = "genisbench-out";
  bool single_thread = false;

  std::string label() const {
    if (!label_column.empty()) return label_column;
    return task == "binary" ? "BinaryLabel" : "CategoryLabel";
  }
};

inline json to_json(const SynthClass& c) {
  return json{{"name", c.name}, {"ratio_percent", c.ratio_percent},
              {"location_index", c.location_index}};
}

inline json to_json(const SynthFeature& f) {
  json j{{"name", f.name},
         {"category", to_string(f.category)},
         {"dist", f.dist == SynthFeature::Dist::lognormal ? "lognormal" : "gamma"},
         {"base", f.base},
         {"separation", f.separation},
         {"spread", f.spread},
         {"reverse", f.reverse}};
  if (!f.location_overrides.empty()) j["locations"] = f.location_overrides;
  return j;
}

inline json to_json(const SynthSpec& s) {
  json classes = json::array();
  for (const auto& c : s.classes) classes.push_back(to_json(c));
  json features = json::array();
  for (const auto& f : s.features) features.push_back(to_json(f));
  return json{{"n_rows", s.n_rows},
              {"classes", std::move(classes)},
              {"features", std::move(features)},
              {"n_noise_features", s.n_noise_features},
              {"n_constant_features", s.n_constant_features},
              {"seed", s.seed}};
}

inline SynthSpec synth_spec_from_json(const json& j) {
  SynthSpec s = SynthSpec::multiclass_default();
  if (j.contains("n_rows")) s.n_rows = j["n_rows"].get<std::size_t>();
  if (j.contains("seed")) s.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("n_noise_features")) s.n_noise_features = j["n_noise_features"].get<std::size_t>();
  if (j.contains("n_constant_features")) {
    s.n_constant_features = j["n_constant_features"].get<std::size_t>();
  }
  if (j.contains("classes")) {
    s.classes.clear();
    for (const auto& c : j["classes"]) {
      s.classes.push_back(SynthClass{c.at("name").get<std::string>(),
                                     c.at("ratio_percent").get<double>(),
                                     c.value("location_index", 0.0)});
    }
  }
  if (j.contains("features")) {
    s.features.clear();
    for (const auto& f : j["features"]) {
      SynthFeature feat;
      feat.name = f.at("name").get<std::string>();
      feat.category = category_from_string(f.value("category", "quantity"));
      feat.dist = f.value("dist", "lognormal") == "gamma" ? SynthFeature::Dist::gamma
                                                          : SynthFeature::Dist::lognormal;
      feat.base = f.value("base", 1.0);
      feat.separation = f.value("separation", 1.0);
      feat.spread = f.value("spread", 0.7);
      feat.reverse = f.value("reverse", false);
      if (f.contains("locations")) {
        feat.location_overrides = f["locations"].get<std::vector<double>>();
      }
      s.features.push_back(feat);
    }
  }
  return s;
}

inline json to_json(const RunConfig& c) {
  json j{{"task", c.task},
         {"train_csv", c.train_csv},
         {"test_csv", c.test_csv},
         {"taxonomy_csv", c.taxonomy_csv},
         {"synth_test_fraction", c.synth_test_fraction},
         {"label_column", c.label_column},
         {"benign_class", c.benign_class},
         {"feature_selection", c.feature_selection},
         {"select_k", c.select_k},
         {"n_bins", c.n_bins},
         {"dispersion_formula",
          c.dispersion_formula == DispersionFormula::am_gm ? "am_gm" : "variance_ratio"},
         {"models", c.models},
         {"grid_search", c.grid_search_enabled},
         {"scale_for_trees", c.scale_for_trees},
         {"explain_samples", c.explain_samples},
         {"explain_permutations", c.explain_permutations},
         {"explain_background", c.explain_background},
         {"seed", c.seed},
         {"out_dir", c.out_dir},
         {"single_thread", c.single_thread}};
  if (c.synth) j["synth"] = to_json(*c.synth);
  return j;
}

inline RunConfig run_config_from_json(const json& j) {
  RunConfig c;
  c.task = j.value("task", c.task);
  c.train_csv = j.value("train_csv", c.train_csv);
  c.test_csv = j.value("test_csv", c.test_csv);
  c.taxonomy_csv = j.value("taxonomy_csv", c.taxonomy_csv);
  c.synth_test_fraction = j.value("synth_test_fraction", c.synth_test_fraction);
  c.label_column = j.value("label_column", c.label_column);
  c.benign_class = j.value("benign_class", c.benign_class);
  c.feature_selection = j.value("feature_selection", c.feature_selection);
  c.select_k = j.value("select_k", c.select_k);
  c.n_bins = j.value("n_bins", c.n_bins);
  c.dispersion_formula = j.value("dispersion_formula", "am_gm") == std::string("variance_ratio")
                             ? DispersionFormula::variance_ratio
                             : DispersionFormula::am_gm;
  if (j.contains("models")) c.models = j["models"].get<std::vector<std::string>>();
  c.grid_search_enabled = j.value("grid_search", c.grid_search_enabled);
  c.scale_for_trees = j.value("scale_for_trees", c.scale_for_trees);
  c.explain_samples = j.value("explain_samples", c.explain_samples);
  c.explain_permutations = j.value("explain_permutations", c.explain_permutations);
  c.explain_background = j.value("explain_background", c.explain_background);
  c.seed = j.value("seed", c.seed);
  c.out_dir = j.value("out_dir", c.out_dir);
  c.single_thread = j.value("single_thread", c.single_thread);
  if (j.contains("synth") && !j["synth"].is_null()) c.synth = synth_spec_from_json(j["synth"]);
  return c;
}

// Relative dataset paths fall back to $GENISBENCH_DATA_DIR.
inline std::string resolve_data_path(const std::string& path) {
  namespace fs = std::filesystem;
  if (path.empty() || fs::exists(path)) return path;
  if (const char* root = std::getenv(kDataDirEnv)) {
    const fs::path candidate = fs::path(root) / path;
    if (fs::exists(candidate)) return candidate.string();
  }
  return path;
}

// Taxonomy resolution order: explicit descriptor path, a `<csv>.taxonomy.csv`
// sidecar written next to the dataset, then the bundled GeNIS default.
inline Taxonomy resolve_taxonomy(const std::string& taxonomy_csv, const std::string& data_csv) {
  if (!taxonomy_csv.empty()) return load_taxonomy(resolve_data_path(taxonomy_csv));
  if (!data_csv.empty()) {
    const std::string sidecar = resolve_data_path(data_csv) + ".taxonomy.csv";
    if (std::filesystem::exists(sidecar)) return load_taxonomy(sidecar);
  }
  return genis_default_taxonomy();
}

// ---------------------------------------------------------------------------
// Report structures
// ---------------------------------------------------------------------------

struct EvalReportRow {
  std::string model;
  std::string feature_set;  // "full" | "selected"
  MetricsReport metrics;
  double tt_seconds = 0.0;
  std::optional<double> te_seconds;  // neural only
  double it_seconds = 0.0;
};

struct GridSummary {
  std::string family;
  std::string feature_set;
  GridOutcome outcome;
};

struct NeuralArchResult {
  std::string name;  // "128-64" | "64-32"
  double best_val_loss = 0.0;
  double best_val_accuracy = 0.0;
  std::size_t best_epoch = 0;
  std::size_t epochs_run = 0;
  double train_seconds = 0.0;
  double mean_epoch_seconds = 0.0;
  std::vector<double> epoch_seconds;
};

struct NeuralComparison {
  std::string family;
  std::string feature_set;
  std::vector<NeuralArchResult> architectures;
  std::string chosen;
};

struct AttributionSummary {
  std::string model;
  std::string feature_set;
  GroupImportance groups;
  std::size_t n_samples = 0;
};

struct Report {
  std::string task;
  std::string label_column;
  std::uint64_t seed = 0;
  json environment;
  json dataset;
  bool selection_enabled = true;
  std::optional<SelectionResult> selection;
  std::vector<EvalReportRow> rows;
  std::vector<GridSummary> grids;
  std::vector<NeuralComparison> neural;
  std::vector<AttributionSummary> attributions;
  std::map<std::string, json> artifacts;  // extra files rendered alongside the report
  std::shared_ptr<AccessProbe> test_probe;
  double wall_seconds = 0.0;
};

// ---------------------------------------------------------------------------
// Machine/human rendering
// ---------------------------------------------------------------------------

inline json to_json(const MetricsReport& m) {
  json per_class = json::object();
  for (const auto& [cls, pc] : m.per_class) {
    per_class[cls] = json{{"precision_pct", pc.precision_pct},
                          {"recall_pct", pc.recall_pct},
                          {"f1_pct", pc.f1_pct},
                          {"support", pc.support},
                          {"excluded", pc.excluded}};
  }
  return json{{"f1s_pct", m.f1s_pct},   {"acc_pct", m.acc_pct},
              {"rcl_pct", m.rcl_pct},   {"prc_pct", m.prc_pct},
              {"fpr_pct", m.fpr_pct},   {"per_class", std::move(per_class)},
              {"zero_denominator_warning", m.zero_denominator_warning},
              {"warnings", m.warnings}};
}

inline json to_json(const GridOutcome& g) {
  json scores = json::array();
  for (const auto& s : g.scores) {
    scores.push_back(json{{"name", s.name},
                          {"failed", s.failed},
                          {"error", s.error},
                          {"fold_scores", s.fold_scores},
                          {"mean_score", s.mean_score},
                          {"train_seconds", s.train_seconds}});
  }
  return json{{"winner", g.winner_name}, {"scores", std::move(scores)}};
}

inline json machine_report(const Report& report) {
  json rows = json::array();
  for (const auto& r : report.rows) {
    json row{{"model", r.model},
             {"feature_set", r.feature_set},
             {"metrics", to_json(r.metrics)},
             {"tt_seconds", r.tt_seconds},
             {"it_seconds", r.it_seconds}};
    if (r.te_seconds) row["te_seconds"] = *r.te_seconds;
    rows.push_back(std::move(row));
  }
  json grids = json::array();
  for (const auto& g : report.grids) {
    grids.push_back(json{{"family", g.family},
                         {"feature_set", g.feature_set},
                         {"outcome", to_json(g.outcome)}});
  }
  json neural = json::array();
  for (const auto& n : report.neural) {
    json archs = json::array();
    for (const auto& a : n.architectures) {
      archs.push_back(json{{"name", a.name},
                           {"best_val_loss", a.best_val_loss},
                           {"best_val_accuracy", a.best_val_accuracy},
                           {"best_epoch", a.best_epoch},
                           {"epochs_run", a.epochs_run},
                           {"train_seconds", a.train_seconds},
                           {"mean_epoch_seconds", a.mean_epoch_seconds},
                           {"epoch_seconds", a.epoch_seconds}});
    }
    neural.push_back(json{{"family", n.family},
                          {"feature_set", n.feature_set},
                          {"architectures", std::move(archs)},
                          {"chosen", n.chosen}});
  }
  json attributions = json::array();
  for (const auto& a : report.attributions) {
    attributions.push_back(json{{"model", a.model},
                                {"feature_set", a.feature_set},
                                {"group_totals", a.groups.totals},
                                {"per_feature", a.groups.per_feature},
                                {"n_samples", a.n_samples}});
  }
  json j{{"task", report.task},
         {"label_column", report.label_column},
         {"seed", report.seed},
         {"environment", report.environment},
         {"dataset", report.dataset},
         {"selection_enabled", report.selection_enabled},
         {"models", std::move(rows)},
         {"grid_search", std::move(grids)},
         {"neural_architectures", std::move(neural)},
         {"attribution", std::move(attributions)},
         {"wall_seconds", report.wall_seconds}};
  if (report.selection) j["selection"] = to_json(*report.selection);
  return j;
}

// Removes wall-clock content: keys ending in "_seconds", plus
// wall_clock/timestamp. Used by determinism checks.
inline void strip_timing(json& j) {
  if (j.is_object()) {
    std::vector<std::string> doomed;
    for (auto it = j.begin(); it != j.end(); ++it) {
      const std::string& key = it.key();
      if (key == "wall_clock" || key == "timestamp" ||
          (key.size() >= 8 && key.compare(key.size() - 8, 8, "_seconds") == 0)) {
        doomed.push_back(key);
      }
    }
    for (const auto& key : doomed) j.erase(key);
    for (auto& [_, value] : j.items()) strip_timing(value);
  } else if (j.is_array()) {
    for (auto& value : j) strip_timing(value);
  }
}

namespace render_detail {

inline std::string fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", decimals, v);
  return buf;
}

inline std::string pad(const std::string& s, std::size_t width) {
  return s.size() >= width ? s : s + std::string(width - s.size(), ' ');
}

}  // namespace render_detail

inline std::string human_report_from_json(const json& machine) {
  using render_detail::fixed;
  using render_detail::pad;
  std::string out;
  out += "genisbench report (v" + std::string(kVersion) + ")\n";
  out += "task: " + machine.value("task", std::string{}) +
         "   label: " + machine.value("label_column", std::string{}) +
         "   seed: " + std::to_string(machine.value("seed", std::uint64_t{0})) + "\n\n";

  if (machine.contains("selection")) {
    const auto& sel = machine["selection"];
    const auto selected = sel.at("selected").get<std::vector<std::string>>();
    const auto ranking = sel.at("ranking").get<std::vector<std::string>>();
    out += "feature selection: top-" + std::to_string(selected.size()) + " of " +
           std::to_string(ranking.size()) + " features, cumulative importance " +
           fixed(100.0 * sel.at("cumulative_importance").get<double>(), 2) + "%\n";
    out += "selected:";
    for (const auto& f : selected) out += " " + f;
    out += "\n\n";
  }

  out += pad("Model", 10) + pad("FS", 5) + pad("F1S", 10) + pad("ACC", 10) + pad("RCL", 10) +
         pad("PRC", 10) + pad("FPR", 9) + pad("TT", 9) + pad("TE", 8) + "IT\n";
  if (machine.contains("models")) {
    for (const auto& r : machine["models"]) {
      const auto& m = r.at("metrics");
      out += pad(r.at("model").get<std::string>(), 10) +
             pad(r.at("feature_set") == "selected" ? "on" : "off", 5) +
             pad(fixed(m.at("f1s_pct").get<double>(), 4), 10) +
             pad(fixed(m.at("acc_pct").get<double>(), 4), 10) +
             pad(fixed(m.at("rcl_pct").get<double>(), 4), 10) +
             pad(fixed(m.at("prc_pct").get<double>(), 4), 10) +
             pad(fixed(m.at("fpr_pct").get<double>(), 4), 9) +
             pad(r.contains("tt_seconds") ? fixed(r["tt_seconds"].get<double>(), 2) : "-", 9) +
             pad(r.contains("te_seconds") ? fixed(r["te_seconds"].get<double>(), 2) : "-", 8) +
             (r.contains("it_seconds") ? fixed(r["it_seconds"].get<double>(), 2) : "-") + "\n";
    }
  }

  if (machine.contains("attribution") && !machine["attribution"].empty()) {
    out += "\nfeature importance by category (mean |phi| per feature, summed)\n";
    std::set<std::string> categories;
    for (const auto& a : machine["attribution"]) {
      for (const auto& [cat, _] : a.at("group_totals").items()) categories.insert(cat);
    }
    out += pad("Model", 10);
    for (const auto& c : categories) out += pad(c, 12);
    out += "\n";
    for (const auto& a : machine["attribution"]) {
      out += pad(a.at("model").get<std::string>(), 10);
      for (const auto& c : categories) {
        out += pad(a.at("group_totals").contains(c)
                       ? fixed(a.at("group_totals").at(c).get<double>(), 2)
                       : "-",
                   12);
      }
      out += "\n";
    }
  }
  return out;
}

inline std::string human_report(const Report& report) {
  return human_report_from_json(machine_report(report));
}

enum class ReportFormat { machine, human, both };

inline std::vector<std::string> render_report(const Report& report, const std::string& out_dir,
                                              ReportFormat format = ReportFormat::both) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  require(fs::exists(out_dir), "unwritable output directory: " + out_dir);

  std::vector<std::string> written;
  auto emit = [&](const std::string& name, const std::string& content) {
    const std::string path = (fs::path(out_dir) / name).string();
    std::ofstream f(path);
    if (!f) fail("cannot write: " + path);
    f << content;
    written.push_back(path);
  };

  if (format != ReportFormat::human) emit("report.json", machine_report(report).dump(2) + "\n");
  if (format != ReportFormat::machine) emit("report.txt", human_report(report));
  if (report.selection) emit("selection.json", to_json(*report.selection).dump(2) + "\n");
  for (const auto& [name, content] : report.artifacts) {
    emit(name, content.dump(2) + "\n");
  }
  return written;
}

// ---------------------------------------------------------------------------
// Pipeline
// ---------------------------------------------------------------------------

namespace pipeline_detail {

template <typename F>
auto stage(const char* name, F&& fn) {
  try {
    return fn();
  } catch (const std::exception& e) {
    throw Error(std::string("stage ") + name + ": " + e.what());
  }
}

inline void set_probe_stage(const std::shared_ptr<AccessProbe>& probe, const char* stage_name) {
  if (probe) probe->stage = stage_name;
}

struct TreeFamilySpec {
  std::string family;
  std::vector<GridCandidate> candidates;       // lexicographic name order
  std::function<TreeEnsembleModel(const Matrix&, const std::vector<int>&, const std::string&,
                                  std::uint64_t, const std::vector<std::string>&,
                                  const std::vector<std::string>&)>
      fit_named;  // final fit for the winning candidate name
};

inline ForestConfig table2_forest_config() {
  return ForestConfig{};  // 100 trees, sqrt features, depth 16, min leaf 1, bootstrap
}

inline GbdtConfig hist_config(std::size_t depth, double subsample) {
  GbdtConfig c = GbdtConfig::histogram_defaults();
  c.max_depth = depth;
  c.feature_subsample = subsample;
  return c;
}

inline GbdtConfig goss_config(std::size_t min_leaf) {
  GbdtConfig c = GbdtConfig::goss_defaults();
  c.min_samples_leaf = min_leaf;
  return c;
}

inline TreeFamilySpec make_tree_family(const std::string& family) {
  TreeFamilySpec spec;
  spec.family = family;
  auto tree_candidate = [](const std::string& name, auto make_config) {
    return GridCandidate{
        name, [make_config](const Matrix& x, const std::vector<int>& y, std::uint64_t seed) {
          auto model = std::make_shared<TreeEnsembleModel>();
          if constexpr (std::is_same_v<decltype(make_config()), ForestConfig>) {
            ForestConfig c = make_config();
            c.seed = seed;
            *model = fit_random_forest(x, y, c);
          } else {
            GbdtConfig c = make_config();
            c.seed = seed;
            *model = fit_gbdt(x, y, c);
          }
          return PredictFn([model](const Matrix& xt) { return predict_proba(*model, xt); });
        }};
  };

  if (family == "rf") {
    spec.candidates.push_back(tree_candidate(
        "criterion=gini,max_depth=16,max_features=sqrt,min_samples_leaf=1,n_estimators=100",
        [] { return table2_forest_config(); }));
    spec.fit_named = [](const Matrix& x, const std::vector<int>& y, const std::string&,
                        std::uint64_t seed, const std::vector<std::string>& features,
                        const std::vector<std::string>& classes) {
      ForestConfig c = table2_forest_config();
      c.seed = seed;
      return fit_random_forest(x, y, c, features, classes);
    };
  } else if (family == "gbdt_hist") {
    for (std::size_t depth : {std::size_t{4}, std::size_t{8}, std::size_t{16}}) {
      for (double subsample : {0.8, 0.9}) {
        char name[64];
        std::snprintf(name, sizeof(name), "feature_subsample=%.1f,max_depth=%02zu", subsample,
                      depth);
        spec.candidates.push_back(
            tree_candidate(name, [depth, subsample] { return hist_config(depth, subsample); }));
      }
    }
    spec.fit_named = [](const Matrix& x, const std::vector<int>& y, const std::string& name,
                        std::uint64_t seed, const std::vector<std::string>& features,
                        const std::vector<std::string>& classes) {
      std::size_t depth = 16;
      double subsample = 0.9;
      std::sscanf(name.c_str(), "feature_subsample=%lf,max_depth=%zu", &subsample, &depth);
      GbdtConfig c = hist_config(depth, subsample);
      c.seed = seed;
      return fit_gbdt(x, y, c, features, classes);
    };
  } else if (family == "gbdt_goss") {
    for (std::size_t min_leaf : {std::size_t{2}, std::size_t{4}}) {
      char name[64];
      std::snprintf(name, sizeof(name), "feature_subsample=0.8,min_samples_leaf=%zu", min_leaf);
      spec.candidates.push_back(
          tree_candidate(name, [min_leaf] { return goss_config(min_leaf); }));
    }
    spec.fit_named = [](const Matrix& x, const std::vector<int>& y, const std::string& name,
                        std::uint64_t seed, const std::vector<std::string>& features,
                        const std::vector<std::string>& classes) {
      std::size_t min_leaf = 2;
      std::sscanf(name.c_str(), "feature_subsample=0.8,min_samples_leaf=%zu", &min_leaf);
      GbdtConfig c = goss_config(min_leaf);
      c.seed = seed;
      return fit_gbdt(x, y, c, features, classes);
    };
  } else {
    fail("unknown tree model family: " + family);
  }
  return spec;
}

inline std::string iso_timestamp() {
  std::time_t now = std::time(nullptr);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  return buf;
}

}  // namespace pipeline_detail

inline Report run_pipeline(const RunConfig& cfg) {
  using pipeline_detail::set_probe_stage;
  using pipeline_detail::stage;
  Stopwatch total_watch;

  const std::size_t saved_threads = max_threads();
  if (cfg.single_thread) set_max_threads(1);
  struct ThreadGuard {
    std::size_t saved;
    ~ThreadGuard() { set_max_threads(saved); }
  } thread_guard{saved_threads};

  require(!cfg.models.empty(), "at least one model is required");
  require(cfg.task == "binary" || cfg.task == "multiclass", "task must be binary|multiclass");
  const std::string label_column = cfg.label();

  Report report;
  report.task = cfg.task;
  report.label_column = label_column;
  report.seed = cfg.seed;
  report.selection_enabled = cfg.feature_selection;
  report.environment = json{{"version", kVersion},
                            {"timestamp", pipeline_detail::iso_timestamp()},
                            {"single_thread", cfg.single_thread},
                            {"max_threads", max_threads()},
                            {"models", cfg.models}};

  // ---- ingest / synth ----
  FlowTable train_table, test_table;
  json dataset_info;
  if (cfg.synth) {
    stage("synth", [&] {
      SynthSpec spec = *cfg.synth;
      spec.seed = derive_seed(cfg.seed, 0x5f9d);
      FlowTable all = synth_generate(spec);
      require(cfg.synth_test_fraction > 0.0 && cfg.synth_test_fraction < 1.0,
              "synth_test_fraction must lie in (0,1)");
      const auto split = stratified_holdout_indices(all.label(label_column),
                                                    1.0 - cfg.synth_test_fraction, cfg.seed);
      train_table = subset_rows(all, split.train_rows);
      test_table = subset_rows(all, split.validation_rows);
      dataset_info["source"] = "synth";
      return 0;
    });
  } else {
    stage("ingest", [&] {
      require(!cfg.train_csv.empty() && !cfg.test_csv.empty(),
              "train_csv and test_csv are required without a synth spec");
      const Taxonomy tax = resolve_taxonomy(cfg.taxonomy_csv, cfg.train_csv);
      auto train_loaded = load_flow_csv(resolve_data_path(cfg.train_csv), tax);
      auto test_loaded = load_flow_csv(resolve_data_path(cfg.test_csv), tax);
      train_table = std::move(train_loaded.table);
      test_table = std::move(test_loaded.table);
      dataset_info["source"] = "files";
      dataset_info["train_dropped_rows"] = train_loaded.dropped_rows;
      dataset_info["test_dropped_rows"] = test_loaded.dropped_rows;
      dataset_info["unknown_columns"] = train_loaded.unknown_columns;
      return 0;
    });
  }

  // ---- exclusion ----
  stage("exclude", [&] {
    auto train_excluded = apply_exclusion_policy(train_table);
    auto test_excluded = apply_exclusion_policy(test_table);
    train_table = std::move(train_excluded.table);
    test_table = std::move(test_excluded.table);
    json removed = json::array();
    for (const auto& [name, reason] : train_excluded.removed) {
      removed.push_back(json{{"feature", name}, {"reason", reason}});
    }
    dataset_info["excluded"] = std::move(removed);
    return 0;
  });

  // ---- one-hot encoding (train vocabulary applied to both splits) ----
  stage("encode", [&] {
    std::size_t unseen = 0;
    std::vector<std::string> encoded_columns;
    for (const auto& column : train_table.categorical_names()) {
      const auto vocab = detail::sorted_distinct(train_table.categorical(column));
      train_table = detail::one_hot_encode_with(train_table, column, vocab);
      test_table = detail::one_hot_encode_with(test_table, column, vocab, &unseen);
      encoded_columns.push_back(column);
    }
    dataset_info["one_hot_columns"] = encoded_columns;
    dataset_info["unseen_test_category_values"] = unseen;
    return 0;
  });

  const std::vector<std::string> all_features = train_table.numeric_names();
  require(!all_features.empty(), "no model-input features after encoding");
  if (cfg.feature_selection) {
    require(cfg.select_k >= 1 && cfg.select_k <= all_features.size(),
            "select_k exceeds available feature count (" + std::to_string(all_features.size()) +
                ")");
  }

  // dataset summaries
  {
    auto summarize_json = [](const DatasetSummary& s) {
      json classes = json::array();
      for (std::size_t i = 0; i < s.classes.size(); ++i) {
        classes.push_back(json{{"class", s.classes[i]},
                               {"count", s.counts[i]},
                               {"ratio_percent", s.ratios_percent[i]}});
      }
      return json{{"total", s.total}, {"classes", std::move(classes)}};
    };
    dataset_info["train_summary"] = summarize_json(summarize(train_table, label_column));
    dataset_info["test_summary"] = summarize_json(summarize(test_table, label_column));
    dataset_info["n_features"] = all_features.size();
  }
  report.dataset = std::move(dataset_info);

  // leakage instrumentation: the test table must stay untouched before eval
  report.test_probe = std::make_shared<AccessProbe>();
  test_table.set_access_probe(report.test_probe);

  // ---- label space ----
  const LabelSpace space = make_label_space(train_table, label_column, cfg.benign_class);
  if (cfg.task == "binary") {
    require(space.classes.size() == 2, "binary task needs exactly 2 classes");
  } else {
    require(space.classes.size() >= 3, "multiclass task needs at least 3 classes");
  }
  const std::vector<int> y_train = encode_labels(train_table, label_column, space);

  // ---- feature selection ----
  std::vector<std::pair<std::string, std::vector<std::string>>> feature_sets;
  feature_sets.emplace_back("full", all_features);
  if (cfg.feature_selection) {
    stage("selection", [&] {
      set_probe_stage(report.test_probe, "selection");
      BinningConfig binning{cfg.n_bins};
      std::vector<MethodScore> scores;
      scores.push_back(score_information_gain(train_table, label_column, binning));
      scores.push_back(score_chi_squared(train_table, label_column, binning));
      RfeConfig rfe;
      rfe.seed = derive_seed(cfg.seed, 0x4fe5);
      scores.push_back(score_rfe(train_table, label_column, rfe));
      scores.push_back(score_mad(train_table));
      scores.push_back(score_dispersion_ratio(train_table, cfg.dispersion_formula));
      report.selection = aggregate_and_select(std::move(scores), cfg.select_k);
      return 0;
    });
    feature_sets.emplace_back("selected", report.selection->selected);
  }
  const std::string attribution_fs = cfg.feature_selection ? "selected" : "full";

  // ---- per-family training/evaluation ----
  const bool is_binary = space.classes.size() == 2;
  const std::string positive_class =
      is_binary ? (space.classes[0] == cfg.benign_class ? space.classes[1] : space.classes[0])
                : "";

  auto evaluate_predictions = [&](const Matrix& proba, const std::vector<int>& y_true) {
    std::vector<int> pred(proba.rows);
    for (std::size_t r = 0; r < proba.rows; ++r) {
      auto row = proba.row(r);
      pred[r] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
    }
    const ConfusionMatrix cm = confusion(y_true, pred, space.classes);
    return is_binary ? binary_metrics(cm, positive_class) : macro_metrics(cm, cfg.benign_class);
  };

  // deterministic sample of test rows to explain
  auto explain_rows = [&](std::size_t n_test) {
    Rng rng(derive_seed(cfg.seed, 0xeb1a));
    auto pick = rng.sample_without_replacement(n_test, std::min(cfg.explain_samples, n_test));
    std::sort(pick.begin(), pick.end());
    return pick;
  };

  auto record_attribution = [&](const std::string& family, const Attribution& attr) {
    AttributionSummary summary;
    summary.model = family;
    summary.feature_set = attribution_fs;
    summary.groups = group_importance(attr, train_table.taxonomy());
    summary.n_samples = attr.phi.rows;
    report.artifacts["attribution_" + family + ".json"] =
        json{{"model", family},
             {"feature_set", attribution_fs},
             {"group_totals", summary.groups.totals},
             {"per_feature", summary.groups.per_feature},
             {"n_samples", summary.n_samples}};
    report.attributions.push_back(std::move(summary));
  };

  for (const std::string& family : cfg.models) {
    const bool is_tree = family == "rf" || family == "gbdt_hist" || family == "gbdt_goss";
    const bool is_net = family == "mlp" || family == "lstm";
    require(is_tree || is_net, "unknown model family: " + family);

    for (std::size_t fs_index = 0; fs_index < feature_sets.size(); ++fs_index) {
      const auto& [fs_name, features] = feature_sets[fs_index];
      const std::uint64_t family_seed =
          derive_seed(cfg.seed, std::hash<std::string>{}(family), fs_index);

      EvalReportRow row;
      row.model = family;
      row.feature_set = fs_name;

      if (is_tree) {
        TreeEnsembleModel model;
        stage("training", [&] {
          set_probe_stage(report.test_probe, "training");
          Matrix x_train = train_table.to_matrix(features);
          std::optional<Scaler> tree_scaler;
          if (cfg.scale_for_trees) {
            std::vector<std::size_t> rows(train_table.n_rows());
            std::iota(rows.begin(), rows.end(), std::size_t{0});
            tree_scaler = fit_scaler(train_table, rows, features);
            transform_matrix(*tree_scaler, x_train);
          }
          auto family_spec = pipeline_detail::make_tree_family(family);
          std::string winner = family_spec.candidates.front().name;
          if (cfg.grid_search_enabled) {
            GridSpec grid;
            grid.family = family;
            grid.candidates = family_spec.candidates;
            grid.classes = space.classes;
            grid.benign_class = cfg.benign_class;
            GridOutcome outcome = grid_search(grid, x_train, y_train, family_seed);
            winner = outcome.winner_name;
            report.grids.push_back(GridSummary{family, fs_name, std::move(outcome)});
          }
          row.tt_seconds = time_harness([&] {
            model = family_spec.fit_named(x_train, y_train, winner, family_seed, features,
                                          space.classes);
          });
          return 0;
        });

        stage("evaluation", [&] {
          set_probe_stage(report.test_probe, "evaluation");
          Matrix x_test = test_table.to_matrix(features);
          if (cfg.scale_for_trees) {
            std::vector<std::size_t> rows(train_table.n_rows());
            std::iota(rows.begin(), rows.end(), std::size_t{0});
            const Scaler s = fit_scaler(train_table, rows, features);
            transform_matrix(s, x_test);
          }
          const std::vector<int> y_test = encode_labels(test_table, label_column, space);
          Matrix proba;
          row.it_seconds = time_harness([&] { proba = predict_proba(model, x_test); });
          row.metrics = evaluate_predictions(proba, y_test);
          return 0;
        });
        report.artifacts["model_" + family + "_" + fs_name + ".json"] = to_json(model);

        if (fs_name == attribution_fs) {
          stage("explain", [&] {
            set_probe_stage(report.test_probe, "explain");
            Matrix x_all = test_table.to_matrix(features);
            const auto pick = explain_rows(x_all.rows);
            Matrix x(pick.size(), x_all.cols);
            for (std::size_t i = 0; i < pick.size(); ++i) {
              auto src = x_all.row(pick[i]);
              std::copy(src.begin(), src.end(), x.row(i).begin());
            }
            const Matrix proba = predict_proba(model, x);
            // attribution targets the predicted class of each sample
            Attribution combined;
            combined.feature_names = features;
            combined.phi = Matrix(x.rows, x.cols);
            for (std::size_t cls = 0; cls < space.classes.size(); ++cls) {
              std::vector<std::size_t> members;
              for (std::size_t r = 0; r < x.rows; ++r) {
                auto p = proba.row(r);
                const std::size_t argmax =
                    static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
                if (argmax == cls) members.push_back(r);
              }
              if (members.empty()) continue;
              Matrix sub(members.size(), x.cols);
              for (std::size_t i = 0; i < members.size(); ++i) {
                auto src = x.row(members[i]);
                std::copy(src.begin(), src.end(), sub.row(i).begin());
              }
              const Attribution part = tree_shap(model, sub, cls);
              for (std::size_t i = 0; i < members.size(); ++i) {
                auto src = part.phi.row(i);
                std::copy(src.begin(), src.end(), combined.phi.row(members[i]).begin());
              }
            }
            record_attribution(family, combined);
            return 0;
          });
        }
      } else {
        NetworkModel best_model;
        Scaler scaler;
        HoldoutSplit val_split;
        stage("scaling", [&] {
          set_probe_stage(report.test_probe, "scaling");
          val_split = stratified_holdout_indices(y_train, 0.7, derive_seed(family_seed, 0x7030));
          scaler = fit_scaler(train_table, val_split.train_rows, features);
          return 0;
        });

        NeuralComparison comparison;
        comparison.family = family;
        comparison.feature_set = fs_name;
        stage("training", [&] {
          set_probe_stage(report.test_probe, "training");
          Matrix x70 = train_table.to_matrix(features, &val_split.train_rows);
          Matrix x30 = train_table.to_matrix(features, &val_split.validation_rows);
          transform_matrix(scaler, x70);
          transform_matrix(scaler, x30);
          std::vector<int> y70(val_split.train_rows.size()), y30(val_split.validation_rows.size());
          for (std::size_t i = 0; i < y70.size(); ++i) y70[i] = y_train[val_split.train_rows[i]];
          for (std::size_t i = 0; i < y30.size(); ++i) {
            y30[i] = y_train[val_split.validation_rows[i]];
          }

          const std::vector<std::pair<std::string, NetConfig>> archs = {
              {"128-64", family == "mlp" ? mlp_config(128, 64) : lstm_config(128, 64)},
              {"64-32", family == "mlp" ? mlp_config(64, 32) : lstm_config(64, 32)}};
          std::vector<NetworkModel> models(archs.size());
          std::vector<TrainLog> logs(archs.size());
          std::vector<double> train_seconds(archs.size(), 0.0);
          parallel_for(0, archs.size(), [&](std::size_t a) {
            NetConfig net_cfg = archs[a].second;
            net_cfg.seed = derive_seed(family_seed, 0xa9c4, a);
            models[a] = init_network(net_cfg, features.size(), space.classes.size(), net_cfg.seed);
            models[a].feature_names = features;
            models[a].class_names = space.classes;
            train_seconds[a] =
                time_harness([&] { logs[a] = train(models[a], x70, y70, x30, y30); });
          });

          std::size_t best = 0;
          for (std::size_t a = 0; a < archs.size(); ++a) {
            NeuralArchResult res;
            res.name = archs[a].first;
            res.best_val_loss = logs[a].val_loss[logs[a].best_epoch];
            res.best_val_accuracy = logs[a].val_accuracy[logs[a].best_epoch];
            res.best_epoch = logs[a].best_epoch;
            res.epochs_run = logs[a].val_loss.size();
            res.train_seconds = train_seconds[a];
            res.mean_epoch_seconds = logs[a].mean_epoch_seconds();
            res.epoch_seconds = logs[a].epoch_seconds;
            comparison.architectures.push_back(std::move(res));
            if (logs[a].val_loss[logs[a].best_epoch] < logs[best].val_loss[logs[best].best_epoch]) {
              best = a;
            }
          }
          comparison.chosen = archs[best].first;
          best_model = std::move(models[best]);
          row.tt_seconds = train_seconds[best];
          row.te_seconds = logs[best].mean_epoch_seconds();
          return 0;
        });
        report.neural.push_back(comparison);

        stage("evaluation", [&] {
          set_probe_stage(report.test_probe, "evaluation");
          Matrix x_test = test_table.to_matrix(features);
          transform_matrix(scaler, x_test);
          const std::vector<int> y_test = encode_labels(test_table, label_column, space);
          Matrix proba;
          row.it_seconds = time_harness([&] { proba = forward(best_model, x_test, false); });
          row.metrics = evaluate_predictions(proba, y_test);
          return 0;
        });
        {
          json artifact = to_json(best_model);
          artifact["scaler"] = json{{"features", scaler.features},
                                    {"mean", scaler.mean},
                                    {"stddev", scaler.stddev}};
          report.artifacts["model_" + family + "_" + fs_name + ".json"] = std::move(artifact);
        }

        if (fs_name == attribution_fs) {
          stage("explain", [&] {
            set_probe_stage(report.test_probe, "explain");
            Matrix x_all = test_table.to_matrix(features);
            const auto pick = explain_rows(x_all.rows);
            Matrix x(pick.size(), x_all.cols);
            for (std::size_t i = 0; i < pick.size(); ++i) {
              auto src = x_all.row(pick[i]);
              std::copy(src.begin(), src.end(), x.row(i).begin());
            }
            transform_matrix(scaler, x);

            // background: training rows stratified by class, fixed seed
            Matrix background;
            {
              std::map<int, std::vector<std::size_t>> by_class;
              for (std::size_t r = 0; r < y_train.size(); ++r) {
                by_class[y_train[r]].push_back(r);
              }
              Rng rng(derive_seed(cfg.seed, 0xb6d));
              std::vector<std::size_t> chosen;
              for (auto& [cls, rows] : by_class) {
                const double share = static_cast<double>(rows.size()) /
                                     static_cast<double>(y_train.size());
                std::size_t want = std::max<std::size_t>(
                    1, static_cast<std::size_t>(
                           std::llround(share * static_cast<double>(cfg.explain_background))));
                want = std::min(want, rows.size());
                auto picks = rng.sample_without_replacement(rows.size(), want);
                for (auto p : picks) chosen.push_back(rows[p]);
              }
              std::sort(chosen.begin(), chosen.end());
              background = train_table.to_matrix(features, &chosen);
              transform_matrix(scaler, background);
            }

            const Matrix proba = forward(best_model, x, false);
            Attribution combined;
            combined.feature_names = features;
            combined.phi = Matrix(x.rows, x.cols);
            for (std::size_t cls = 0; cls < space.classes.size(); ++cls) {
              std::vector<std::size_t> members;
              for (std::size_t r = 0; r < x.rows; ++r) {
                auto p = proba.row(r);
                const std::size_t argmax =
                    static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
                if (argmax == cls) members.push_back(r);
              }
              if (members.empty()) continue;
              Matrix sub(members.size(), x.cols);
              for (std::size_t i = 0; i < members.size(); ++i) {
                auto src = x.row(members[i]);
                std::copy(src.begin(), src.end(), sub.row(i).begin());
              }
              const Attribution part =
                  sampled_shapley(best_model, sub, background, cfg.explain_permutations,
                                  derive_seed(cfg.seed, 0x54a9d, cls), cls);
              for (std::size_t i = 0; i < members.size(); ++i) {
                auto src = part.phi.row(i);
                std::copy(src.begin(), src.end(), combined.phi.row(members[i]).begin());
              }
            }
            record_attribution(family, combined);
            return 0;
          });
        }
      }
      report.rows.push_back(std::move(row));
    }
  }

  report.wall_seconds = total_watch.seconds();
  return report;
}

}  // namespace genis
