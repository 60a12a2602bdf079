#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "genis/core.hpp"
#include "genis/flow_table.hpp"
#include "genis/trees.hpp"

namespace genis {

enum class SelectionMethod { info_gain, chi_squared, rfe, mad, dispersion_ratio };

inline std::string to_string(SelectionMethod m) {
  switch (m) {
    case SelectionMethod::info_gain: return "info_gain";
    case SelectionMethod::chi_squared: return "chi_squared";
    case SelectionMethod::rfe: return "rfe";
    case SelectionMethod::mad: return "mad";
    case SelectionMethod::dispersion_ratio: return "dispersion_ratio";
  }
  return "info_gain";
}

struct MethodScore {
  SelectionMethod method = SelectionMethod::info_gain;
  std::map<std::string, double> raw;
  std::map<std::string, double> normalized;
};

struct BinningConfig {
  std::size_t n_bins = 10;  // equal-frequency
};

// ---------------------------------------------------------------------------
// Equal-frequency binning. Cut k sits at the value of sorted rank
// floor(k*n/n_bins); duplicates collapse. bin(x) = index of first cut >= x.
// ---------------------------------------------------------------------------

inline std::vector<int> equal_frequency_bins(std::span<const double> values, std::size_t n_bins) {
  require(n_bins >= 2, "n_bins must be >= 2");
  require(values.size() >= n_bins, "fewer rows than bins");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> cuts;
  for (std::size_t k = 1; k < n_bins; ++k) {
    const double v = sorted[k * sorted.size() / n_bins - 1];  // last element of chunk k
    if (v >= sorted.back()) break;
    if (cuts.empty() || v > cuts.back()) cuts.push_back(v);
  }
  std::vector<int> bins(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    bins[i] = static_cast<int>(std::lower_bound(cuts.begin(), cuts.end(), values[i]) - cuts.begin());
  }
  return bins;
}

namespace featsel_detail {

struct Contingency {
  std::vector<std::vector<double>> counts;  // bins x classes
  std::vector<double> bin_totals;
  std::vector<double> class_totals;
  double total = 0.0;
};

inline Contingency contingency_table(std::span<const int> bins, std::span<const int> classes,
                                     std::size_t n_bins, std::size_t n_classes) {
  Contingency t;
  t.counts.assign(n_bins, std::vector<double>(n_classes, 0.0));
  t.bin_totals.assign(n_bins, 0.0);
  t.class_totals.assign(n_classes, 0.0);
  for (std::size_t i = 0; i < bins.size(); ++i) {
    t.counts[static_cast<std::size_t>(bins[i])][static_cast<std::size_t>(classes[i])] += 1.0;
    t.bin_totals[static_cast<std::size_t>(bins[i])] += 1.0;
    t.class_totals[static_cast<std::size_t>(classes[i])] += 1.0;
    t.total += 1.0;
  }
  return t;
}

inline double entropy_bits(std::span<const double> counts, double total) {
  if (total <= 0.0) return 0.0;
  double h = 0.0;
  for (double c : counts) {
    if (c <= 0.0) continue;
    const double p = c / total;
    h -= p * std::log2(p);
  }
  return h;
}

// label codes + class count for a row subset
struct EncodedLabels {
  std::vector<int> codes;
  std::size_t n_classes = 0;
};

inline EncodedLabels encode_for_rows(const FlowTable& table, const std::string& label_column,
                                     const std::vector<std::size_t>* rows) {
  const auto& values = table.label(label_column);
  std::map<std::string, int> index;
  const std::size_t n = rows ? rows->size() : values.size();
  EncodedLabels out;
  out.codes.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& v = values[rows ? (*rows)[i] : i];
    auto [it, inserted] = index.emplace(v, static_cast<int>(index.size()));
    out.codes[i] = it->second;
  }
  out.n_classes = index.size();
  return out;
}

inline std::vector<double> gather(std::span<const double> column,
                                  const std::vector<std::size_t>* rows) {
  if (!rows) return {column.begin(), column.end()};
  std::vector<double> out(rows->size());
  for (std::size_t i = 0; i < rows->size(); ++i) out[i] = column[(*rows)[i]];
  return out;
}

}  // namespace featsel_detail

// ---------------------------------------------------------------------------
// Scorers. Each is a pure function of (table, config, row subset); passing
// rows = nullptr scores all rows. Pipelines pass training rows only.
// ---------------------------------------------------------------------------

// H(Y) - H(Y | bin(X)), in bits.
inline MethodScore score_information_gain(const FlowTable& table, const std::string& label_column,
                                          const BinningConfig& binning = {},
                                          const std::vector<std::size_t>* rows = nullptr) {
  const auto labels = featsel_detail::encode_for_rows(table, label_column, rows);
  MethodScore score;
  score.method = SelectionMethod::info_gain;
  for (const auto& feature : table.numeric_names()) {
    const auto column = featsel_detail::gather(table.numeric(feature), rows);
    const auto bins = equal_frequency_bins(column, binning.n_bins);
    const int max_bin = *std::max_element(bins.begin(), bins.end());
    const auto t = featsel_detail::contingency_table(bins, labels.codes,
                                                     static_cast<std::size_t>(max_bin) + 1,
                                                     labels.n_classes);
    const double h_y = featsel_detail::entropy_bits(t.class_totals, t.total);
    double h_cond = 0.0;
    for (std::size_t b = 0; b < t.counts.size(); ++b) {
      if (t.bin_totals[b] <= 0.0) continue;
      h_cond += t.bin_totals[b] / t.total *
                featsel_detail::entropy_bits(t.counts[b], t.bin_totals[b]);
    }
    score.raw[feature] = h_y - h_cond;
  }
  return score;
}

// Classical chi-squared statistic of independence on the bin x class table.
inline MethodScore score_chi_squared(const FlowTable& table, const std::string& label_column,
                                     const BinningConfig& binning = {},
                                     const std::vector<std::size_t>* rows = nullptr) {
  const auto labels = featsel_detail::encode_for_rows(table, label_column, rows);
  MethodScore score;
  score.method = SelectionMethod::chi_squared;
  for (const auto& feature : table.numeric_names()) {
    const auto column = featsel_detail::gather(table.numeric(feature), rows);
    const auto bins = equal_frequency_bins(column, binning.n_bins);
    const int max_bin = *std::max_element(bins.begin(), bins.end());
    const auto t = featsel_detail::contingency_table(bins, labels.codes,
                                                     static_cast<std::size_t>(max_bin) + 1,
                                                     labels.n_classes);
    double chi2 = 0.0;
    for (std::size_t b = 0; b < t.counts.size(); ++b) {
      for (std::size_t c = 0; c < labels.n_classes; ++c) {
        const double expected = t.bin_totals[b] * t.class_totals[c] / t.total;
        if (expected <= 0.0) continue;
        const double diff = t.counts[b][c] - expected;
        chi2 += diff * diff / expected;
      }
    }
    score.raw[feature] = chi2;
  }
  return score;
}

// mean(|x - mean(x)|)
inline MethodScore score_mad(const FlowTable& table,
                             const std::vector<std::size_t>* rows = nullptr) {
  MethodScore score;
  score.method = SelectionMethod::mad;
  for (const auto& feature : table.numeric_names()) {
    const auto column = featsel_detail::gather(table.numeric(feature), rows);
    const double m = mean(column);
    double acc = 0.0;
    for (double v : column) acc += std::abs(v - m);
    score.raw[feature] = acc / static_cast<double>(column.size());
  }
  return score;
}

enum class DispersionFormula { am_gm, variance_ratio };

// arithmetic over geometric mean of strictly positive values (log-space GM)
inline double am_gm_ratio(std::span<const double> positive_values) {
  double am = 0.0, log_gm = 0.0;
  for (double v : positive_values) {
    am += v;
    log_gm += std::log(v);
  }
  const double n = static_cast<double>(positive_values.size());
  return (am / n) / std::exp(log_gm / n);
}

// Default: AM/GM on min-shifted values (x - min + 1), always >= 1.
// variance_ratio: sqrt(mean squared deviation) / mean absolute deviation,
// also >= 1 by Jensen; constant columns map to the minimum 1.
inline MethodScore score_dispersion_ratio(const FlowTable& table,
                                          DispersionFormula formula = DispersionFormula::am_gm,
                                          const std::vector<std::size_t>* rows = nullptr) {
  MethodScore score;
  score.method = SelectionMethod::dispersion_ratio;
  for (const auto& feature : table.numeric_names()) {
    auto column = featsel_detail::gather(table.numeric(feature), rows);
    if (formula == DispersionFormula::am_gm) {
      const double lo = *std::min_element(column.begin(), column.end());
      for (double& v : column) v = v - lo + 1.0;
      score.raw[feature] = am_gm_ratio(column);
    } else {
      const double m = mean(column);
      double ss = 0.0, sa = 0.0;
      for (double v : column) {
        ss += (v - m) * (v - m);
        sa += std::abs(v - m);
      }
      const double n = static_cast<double>(column.size());
      score.raw[feature] = sa > 0.0 ? std::sqrt(ss / n) / (sa / n) : 1.0;
    }
  }
  return score;
}

// ---------------------------------------------------------------------------
// Recursive feature elimination backed by the in-repo random forest.
// ---------------------------------------------------------------------------

struct RfeConfig {
  double step_fraction = 0.1;  // fraction of remaining features removed per round
  std::size_t target_size = 1;
  ForestConfig estimator;  // defaults: 100 trees, Gini, depth 16
  std::uint64_t seed = 0;
};

inline MethodScore score_rfe(const FlowTable& table, const std::string& label_column,
                             const RfeConfig& config = {},
                             const std::vector<std::size_t>* rows = nullptr) {
  MethodScore score;
  score.method = SelectionMethod::rfe;
  std::vector<std::string> remaining = table.numeric_names();
  require(!remaining.empty(), "no numeric features");
  const std::size_t n_features = remaining.size();

  if (n_features == 1) {
    score.raw[remaining[0]] = 1.0;
    return score;
  }
  for (const auto& f : remaining) {
    require(all_finite(table.numeric(f)), "non-finite feature values in " + f);
  }

  const auto labels = featsel_detail::encode_for_rows(table, label_column, rows);
  std::size_t elimination_rank = 0;
  std::size_t round = 0;
  std::map<std::string, std::size_t> order;
  while (remaining.size() > config.target_size) {
    Matrix x = table.to_matrix(remaining, rows);
    ForestConfig fc = config.estimator;
    fc.seed = derive_seed(config.seed, 0x4fe, round);
    const auto model = fit_random_forest(x, labels.codes, fc, remaining);
    const auto importance = impurity_importance(model);

    std::size_t n_remove = static_cast<std::size_t>(
        std::ceil(config.step_fraction * static_cast<double>(remaining.size())));
    n_remove = std::clamp<std::size_t>(n_remove, 1, remaining.size() - config.target_size);

    // least important first; ties resolved by name for determinism
    std::vector<std::string> by_importance = remaining;
    std::sort(by_importance.begin(), by_importance.end(),
              [&](const std::string& a, const std::string& b) {
                const double ia = importance.at(a);
                const double ib = importance.at(b);
                if (ia != ib) return ia < ib;
                return a < b;
              });
    for (std::size_t i = 0; i < n_remove; ++i) {
      order[by_importance[i]] = elimination_rank++;
      remaining.erase(std::find(remaining.begin(), remaining.end(), by_importance[i]));
    }
    ++round;
  }
  // survivors outrank everything eliminated; among themselves by last-round
  // importance (ascending), names as tie-break
  {
    std::map<std::string, double> importance;
    if (remaining.size() > 1) {
      Matrix x = table.to_matrix(remaining, rows);
      ForestConfig fc = config.estimator;
      fc.seed = derive_seed(config.seed, 0x4fe, round);
      importance = impurity_importance(fit_random_forest(x, labels.codes, fc, remaining));
    } else {
      importance[remaining[0]] = 1.0;
    }
    std::vector<std::string> by_importance = remaining;
    std::sort(by_importance.begin(), by_importance.end(),
              [&](const std::string& a, const std::string& b) {
                const double ia = importance.at(a);
                const double ib = importance.at(b);
                if (ia != ib) return ia < ib;
                return a < b;
              });
    for (const auto& f : by_importance) order[f] = elimination_rank++;
  }

  for (const auto& [feature, rank] : order) {
    score.raw[feature] = static_cast<double>(rank) / static_cast<double>(n_features - 1);
  }
  return score;
}

// ---------------------------------------------------------------------------
// Normalize-and-sum ensemble
// ---------------------------------------------------------------------------

inline std::map<std::string, double> normalize_scores(const std::map<std::string, double>& raw) {
  require(!raw.empty(), "normalize_scores: empty input");
  double lo = raw.begin()->second, hi = raw.begin()->second;
  for (const auto& [name, v] : raw) {
    require(!std::isnan(v), "normalize_scores: NaN for " + name);
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  std::map<std::string, double> out;
  const double span = hi - lo;
  for (const auto& [name, v] : raw) {
    out[name] = span > 0.0 ? (v - lo) / span : 0.0;
  }
  return out;
}

inline MethodScore& normalize(MethodScore& score) {
  score.normalized = normalize_scores(score.raw);
  return score;
}

struct SelectionResult {
  std::map<std::string, double> aggregate;
  std::vector<std::string> ranking;   // descending aggregate, ties lexicographic
  std::vector<std::string> selected;  // first k of ranking
  double cumulative_importance = 0.0;
  std::vector<MethodScore> methods;
};

inline SelectionResult aggregate_and_select(std::vector<MethodScore> scores, std::size_t k) {
  require(!scores.empty(), "no method scores");
  for (auto& s : scores) {
    if (s.normalized.empty()) normalize(s);
  }
  const auto& reference = scores.front().normalized;
  for (const auto& s : scores) {
    require(s.normalized.size() == reference.size(), "inconsistent feature sets across methods");
    for (const auto& [name, _] : reference) {
      require(s.normalized.count(name) == 1, "inconsistent feature sets: missing " + name);
    }
  }
  require(k >= 1 && k <= reference.size(), "k must lie in [1, feature count]");

  SelectionResult result;
  for (const auto& [name, _] : reference) result.aggregate[name] = 0.0;
  for (const auto& s : scores) {
    for (const auto& [name, v] : s.normalized) result.aggregate[name] += v;
  }
  result.ranking.reserve(reference.size());
  for (const auto& [name, _] : result.aggregate) result.ranking.push_back(name);
  std::sort(result.ranking.begin(), result.ranking.end(),
            [&](const std::string& a, const std::string& b) {
              const double va = result.aggregate.at(a);
              const double vb = result.aggregate.at(b);
              if (va != vb) return va > vb;
              return a < b;
            });
  result.selected.assign(result.ranking.begin(),
                         result.ranking.begin() + static_cast<std::ptrdiff_t>(k));
  double total = 0.0, chosen = 0.0;
  for (const auto& [name, v] : result.aggregate) total += v;
  for (const auto& name : result.selected) chosen += result.aggregate.at(name);
  result.cumulative_importance =
      total > 0.0 ? chosen / total
                  : static_cast<double>(k) / static_cast<double>(reference.size());
  result.methods = std::move(scores);
  return result;
}

}  // namespace genis
