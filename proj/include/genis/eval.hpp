#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "genis/core.hpp"
#include "genis/preprocess.hpp"

namespace genis {

// ---------------------------------------------------------------------------
// Confusion matrix: counts[i][j] = rows with true class i predicted class j.
// ---------------------------------------------------------------------------

struct ConfusionMatrix {
  std::vector<std::string> classes;
  std::vector<std::vector<std::size_t>> counts;
  std::size_t total = 0;

  std::size_t at(std::size_t true_class, std::size_t predicted_class) const {
    return counts[true_class][predicted_class];
  }
  std::size_t index_of(const std::string& cls) const {
    for (std::size_t i = 0; i < classes.size(); ++i) {
      if (classes[i] == cls) return i;
    }
    fail("class not in confusion matrix: " + cls);
  }
};

inline ConfusionMatrix confusion(std::span<const int> y_true, std::span<const int> y_pred,
                                 std::vector<std::string> classes) {
  require(y_true.size() == y_pred.size(), "confusion: length mismatch");
  ConfusionMatrix cm;
  cm.classes = std::move(classes);
  const std::size_t k = cm.classes.size();
  cm.counts.assign(k, std::vector<std::size_t>(k, 0));
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    const int t = y_true[i];
    const int p = y_pred[i];
    require(t >= 0 && static_cast<std::size_t>(t) < k, "unknown true label index");
    require(p >= 0 && static_cast<std::size_t>(p) < k, "unknown predicted label index");
    ++cm.counts[static_cast<std::size_t>(t)][static_cast<std::size_t>(p)];
  }
  cm.total = y_true.size();
  return cm;
}

inline ConfusionMatrix confusion(const std::vector<std::string>& y_true,
                                 const std::vector<std::string>& y_pred,
                                 const std::vector<std::string>& classes) {
  std::map<std::string, int> index;
  for (std::size_t i = 0; i < classes.size(); ++i) index[classes[i]] = static_cast<int>(i);
  auto encode = [&](const std::vector<std::string>& labels) {
    std::vector<int> out(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
      auto it = index.find(labels[i]);
      if (it == index.end()) fail("unknown label: " + labels[i]);
      out[i] = it->second;
    }
    return out;
  };
  auto t = encode(y_true);
  auto p = encode(y_pred);
  return confusion(t, p, classes);
}

// ---------------------------------------------------------------------------
// Metrics (percent scale). Zero-denominator cells yield 0 with a warning
// flag so reports always render.
// ---------------------------------------------------------------------------

struct PerClassMetrics {
  double precision_pct = 0.0;
  double recall_pct = 0.0;
  double f1_pct = 0.0;
  std::size_t support = 0;
  bool excluded = false;  // zero support and never predicted
};

struct MetricsReport {
  double f1s_pct = 0.0;
  double acc_pct = 0.0;
  double rcl_pct = 0.0;
  double prc_pct = 0.0;
  double fpr_pct = 0.0;
  std::map<std::string, PerClassMetrics> per_class;
  bool zero_denominator_warning = false;
  std::vector<std::string> warnings;
};

namespace detail {

inline double safe_rate(double numerator, double denominator, MetricsReport& report,
                        const std::string& what) {
  if (denominator <= 0.0) {
    report.zero_denominator_warning = true;
    report.warnings.push_back("zero denominator in " + what);
    return 0.0;
  }
  return numerator / denominator;
}

}  // namespace detail

inline MetricsReport binary_metrics(const ConfusionMatrix& cm, const std::string& positive_class) {
  require(cm.classes.size() == 2, "binary_metrics needs a 2x2 confusion matrix");
  const std::size_t p = cm.index_of(positive_class);
  const std::size_t n = 1 - p;
  const double tp = static_cast<double>(cm.at(p, p));
  const double fp = static_cast<double>(cm.at(n, p));
  const double fn = static_cast<double>(cm.at(p, n));
  const double tn = static_cast<double>(cm.at(n, n));

  MetricsReport r;
  const double prc = detail::safe_rate(tp, tp + fp, r, "precision");
  const double rcl = detail::safe_rate(tp, tp + fn, r, "recall");
  const double f1 = (prc + rcl) > 0.0 ? 2.0 * prc * rcl / (prc + rcl) : 0.0;
  r.prc_pct = 100.0 * prc;
  r.rcl_pct = 100.0 * rcl;
  r.f1s_pct = 100.0 * f1;
  r.acc_pct = 100.0 * detail::safe_rate(tp + tn, tp + tn + fp + fn, r, "accuracy");
  r.fpr_pct = 100.0 * detail::safe_rate(fp, fp + tn, r, "false positive rate");

  for (std::size_t c = 0; c < 2; ++c) {
    const double ctp = static_cast<double>(cm.at(c, c));
    const double cfp = static_cast<double>(cm.at(1 - c, c));
    const double cfn = static_cast<double>(cm.at(c, 1 - c));
    PerClassMetrics pc;
    pc.support = cm.at(c, 0) + cm.at(c, 1);
    const double cprc = ctp + cfp > 0.0 ? ctp / (ctp + cfp) : 0.0;
    const double crcl = ctp + cfn > 0.0 ? ctp / (ctp + cfn) : 0.0;
    pc.precision_pct = 100.0 * cprc;
    pc.recall_pct = 100.0 * crcl;
    pc.f1_pct = cprc + crcl > 0.0 ? 100.0 * 2.0 * cprc * crcl / (cprc + crcl) : 0.0;
    r.per_class[cm.classes[c]] = pc;
  }
  return r;
}

// Macro averages; FPR is benign-vs-rest (truly benign rows predicted as any
// non-benign class over all truly benign rows).
inline MetricsReport macro_metrics(const ConfusionMatrix& cm, const std::string& benign_class) {
  const std::size_t k = cm.classes.size();
  require(k >= 2, "macro_metrics needs at least 2 classes");
  const std::size_t benign = cm.index_of(benign_class);

  MetricsReport r;
  double sum_prc = 0.0, sum_rcl = 0.0, sum_f1 = 0.0;
  std::size_t included = 0;
  double diagonal = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    double tp = static_cast<double>(cm.at(c, c));
    double fp = 0.0, fn = 0.0, support = 0.0, predicted = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      support += static_cast<double>(cm.at(c, j));
      predicted += static_cast<double>(cm.at(j, c));
      if (j != c) {
        fn += static_cast<double>(cm.at(c, j));
        fp += static_cast<double>(cm.at(j, c));
      }
    }
    diagonal += tp;
    PerClassMetrics pc;
    pc.support = static_cast<std::size_t>(support);
    if (support == 0.0 && predicted == 0.0) {
      pc.excluded = true;
      r.warnings.push_back("class excluded (zero support, never predicted): " + cm.classes[c]);
      r.per_class[cm.classes[c]] = pc;
      continue;
    }
    const double prc = tp + fp > 0.0 ? tp / (tp + fp) : 0.0;
    const double rcl = tp + fn > 0.0 ? tp / (tp + fn) : 0.0;
    if (tp + fp == 0.0 || tp + fn == 0.0) {
      r.zero_denominator_warning = true;
      r.warnings.push_back("zero denominator for class " + cm.classes[c]);
    }
    const double f1 = prc + rcl > 0.0 ? 2.0 * prc * rcl / (prc + rcl) : 0.0;
    pc.precision_pct = 100.0 * prc;
    pc.recall_pct = 100.0 * rcl;
    pc.f1_pct = 100.0 * f1;
    r.per_class[cm.classes[c]] = pc;
    sum_prc += prc;
    sum_rcl += rcl;
    sum_f1 += f1;
    ++included;
  }
  require(included > 0, "no scorable classes");
  r.prc_pct = 100.0 * sum_prc / static_cast<double>(included);
  r.rcl_pct = 100.0 * sum_rcl / static_cast<double>(included);
  r.f1s_pct = 100.0 * sum_f1 / static_cast<double>(included);
  r.acc_pct = 100.0 * detail::safe_rate(diagonal, static_cast<double>(cm.total), r, "accuracy");

  double benign_total = 0.0, benign_escaped = 0.0;
  for (std::size_t j = 0; j < k; ++j) {
    benign_total += static_cast<double>(cm.at(benign, j));
    if (j != benign) benign_escaped += static_cast<double>(cm.at(benign, j));
  }
  r.fpr_pct = 100.0 * detail::safe_rate(benign_escaped, benign_total, r, "false positive rate");
  return r;
}

// Objective used by model selection: F1 of the non-benign class for binary
// tasks, macro-F1 otherwise.
inline double objective_score(const ConfusionMatrix& cm, const std::string& benign_class) {
  if (cm.classes.size() == 2) {
    const std::string positive =
        cm.classes[0] == benign_class ? cm.classes[1] : cm.classes[0];
    return binary_metrics(cm, positive).f1s_pct;
  }
  return macro_metrics(cm, benign_class).f1s_pct;
}

// ---------------------------------------------------------------------------
// Timing harness
// ---------------------------------------------------------------------------

inline double time_harness(const std::function<void()>& action) {
  Stopwatch watch;
  action();
  return watch.seconds();
}

// ---------------------------------------------------------------------------
// Grid search with stratified 5-fold cross-validation
// ---------------------------------------------------------------------------

// A fitted candidate only needs to predict class probabilities.
using PredictFn = std::function<Matrix(const Matrix&)>;

struct GridCandidate {
  std::string name;  // canonical "key=value,key=value" string; also the tie-break order
  std::function<PredictFn(const Matrix& x, const std::vector<int>& y, std::uint64_t seed)> fit;
};

struct GridSpec {
  std::string family;
  std::vector<GridCandidate> candidates;
  std::size_t k = 5;
  std::vector<std::string> classes;  // label-space order used to encode y
  std::string benign_class;
};

struct CandidateScore {
  std::string name;
  bool failed = false;
  std::string error;
  std::vector<double> fold_scores;
  double mean_score = 0.0;
  double train_seconds = 0.0;
};

struct GridOutcome {
  std::size_t winner_index = 0;
  std::string winner_name;
  std::vector<CandidateScore> scores;
};

inline GridOutcome grid_search(const GridSpec& spec, const Matrix& x, const std::vector<int>& y,
                               std::uint64_t seed) {
  require(!spec.candidates.empty(), "empty hyperparameter grid");
  require(spec.k >= 2, "grid_search needs k >= 2 folds");
  const FoldPlan plan = kfold_indices(y, spec.k, derive_seed(seed, 0x9f1d));

  GridOutcome outcome;
  outcome.scores.resize(spec.candidates.size());
  for (std::size_t c = 0; c < spec.candidates.size(); ++c) {
    outcome.scores[c].name = spec.candidates[c].name;
    outcome.scores[c].fold_scores.assign(spec.k, 0.0);
  }

  struct Unit {
    std::size_t candidate;
    std::size_t fold;
  };
  std::vector<Unit> units;
  for (std::size_t c = 0; c < spec.candidates.size(); ++c) {
    for (std::size_t f = 0; f < spec.k; ++f) units.push_back({c, f});
  }
  std::vector<double> unit_seconds(units.size(), 0.0);
  std::vector<std::pair<bool, std::string>> unit_failure(units.size(), {false, ""});
  std::vector<double> unit_score(units.size(), 0.0);

  parallel_for(0, units.size(), [&](std::size_t u) {
    const auto [c, f] = units[u];
    const auto train_rows = plan.complement_rows(f);
    const auto test_rows = plan.fold_rows(f);
    Matrix xtr(train_rows.size(), x.cols);
    std::vector<int> ytr(train_rows.size());
    for (std::size_t i = 0; i < train_rows.size(); ++i) {
      auto src = x.row(train_rows[i]);
      std::copy(src.begin(), src.end(), xtr.row(i).begin());
      ytr[i] = y[train_rows[i]];
    }
    Matrix xte(test_rows.size(), x.cols);
    std::vector<int> yte(test_rows.size());
    for (std::size_t i = 0; i < test_rows.size(); ++i) {
      auto src = x.row(test_rows[i]);
      std::copy(src.begin(), src.end(), xte.row(i).begin());
      yte[i] = y[test_rows[i]];
    }
    try {
      Stopwatch watch;
      PredictFn predict = spec.candidates[c].fit(xtr, ytr, derive_seed(seed, 0xca9d, c, f));
      unit_seconds[u] = watch.seconds();
      const Matrix proba = predict(xte);
      std::vector<int> pred(xte.rows);
      for (std::size_t r = 0; r < xte.rows; ++r) {
        auto row = proba.row(r);
        pred[r] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
      }
      const ConfusionMatrix cm = confusion(yte, pred, spec.classes);
      unit_score[u] = objective_score(cm, spec.benign_class);
    } catch (const std::exception& e) {
      unit_failure[u] = {true, e.what()};
    }
  });

  for (std::size_t u = 0; u < units.size(); ++u) {
    const auto [c, f] = units[u];
    auto& score = outcome.scores[c];
    if (unit_failure[u].first) {
      score.failed = true;
      if (score.error.empty()) score.error = unit_failure[u].second;
      continue;
    }
    score.fold_scores[f] = unit_score[u];
    score.train_seconds += unit_seconds[u];
  }

  bool any_ok = false;
  for (auto& score : outcome.scores) {
    if (score.failed) continue;
    score.mean_score = mean(score.fold_scores);
    any_ok = true;
  }
  require(any_ok, "all grid candidates failed to train");

  // winner: highest mean objective; ties by lower training time, then name
  std::optional<std::size_t> best;
  for (std::size_t c = 0; c < outcome.scores.size(); ++c) {
    const auto& s = outcome.scores[c];
    if (s.failed) continue;
    if (!best) {
      best = c;
      continue;
    }
    const auto& b = outcome.scores[*best];
    if (s.mean_score > b.mean_score ||
        (s.mean_score == b.mean_score &&
         (s.train_seconds < b.train_seconds ||
          (s.train_seconds == b.train_seconds && s.name < b.name)))) {
      best = c;
    }
  }
  outcome.winner_index = *best;
  outcome.winner_name = outcome.scores[*best].name;
  return outcome;
}

}  // namespace genis
