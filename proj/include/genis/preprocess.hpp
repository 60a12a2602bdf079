#pragma once

#include <map>
#include <string>
#include <type_traits>
#include <vector>

#include "genis/core.hpp"
#include "genis/flow_table.hpp"

namespace genis {

// ---------------------------------------------------------------------------
// Standardization. Statistics always come from the training rows handed in;
// transform never re-estimates.
// ---------------------------------------------------------------------------

struct Scaler {
  std::vector<std::string> features;
  std::vector<double> mean;
  std::vector<double> stddev;  // population (1/N); constants stored as 1.0

  bool operator==(const Scaler&) const = default;
};

inline Scaler fit_scaler(const FlowTable& table, const std::vector<std::size_t>& train_rows,
                         std::vector<std::string> features = {}) {
  require(train_rows.size() >= 2, "fit_scaler needs at least 2 training rows");
  if (features.empty()) features = table.numeric_names();
  require(!features.empty(), "fit_scaler: no numeric columns");

  Scaler s;
  s.features = features;
  s.mean.resize(features.size());
  s.stddev.resize(features.size());
  const double n = static_cast<double>(train_rows.size());
  for (std::size_t c = 0; c < features.size(); ++c) {
    auto col = table.numeric(features[c]);
    double m = 0.0;
    for (std::size_t r : train_rows) m += col[r];
    m /= n;
    double ss = 0.0;
    for (std::size_t r : train_rows) {
      const double d = col[r] - m;
      ss += d * d;
    }
    double sd = std::sqrt(ss / n);
    if (sd < 1e-12) sd = 1.0;  // constant-column guard
    s.mean[c] = m;
    s.stddev[c] = sd;
  }
  return s;
}

inline FlowTable transform(const Scaler& scaler, const FlowTable& table) {
  for (const auto& f : scaler.features) {
    require(table.has_column(f) && table.kind(f) == ColumnKind::numeric,
            "transform: scaler feature missing from table: " + f);
  }
  FlowTable out = table;
  // rebuild scaled columns in place
  for (std::size_t c = 0; c < scaler.features.size(); ++c) {
    auto col = table.numeric(scaler.features[c]);
    std::vector<double> scaled(col.size());
    for (std::size_t r = 0; r < col.size(); ++r) {
      scaled[r] = (col[r] - scaler.mean[c]) / scaler.stddev[c];
    }
    out.drop_column(scaler.features[c]);
    out.add_numeric(scaler.features[c], std::move(scaled));
  }
  // dropping+adding moves columns to the back; restore original order via a
  // fresh table when order matters
  FlowTable ordered;
  for (const auto& name : table.column_order()) {
    switch (out.kind(name)) {
      case ColumnKind::numeric: ordered.add_numeric(name, {out.numeric(name).begin(), out.numeric(name).end()}); break;
      case ColumnKind::categorical: ordered.add_categorical(name, out.categorical(name)); break;
      case ColumnKind::label: ordered.add_label(name, out.label(name)); break;
    }
  }
  ordered.set_taxonomy(table.taxonomy());
  return ordered;
}

// Matrix-level variant used by the model pipeline.
inline void transform_matrix(const Scaler& scaler, Matrix& x) {
  require(x.cols == scaler.features.size(), "transform_matrix: feature count mismatch");
  for (std::size_t r = 0; r < x.rows; ++r) {
    auto row = x.row(r);
    for (std::size_t c = 0; c < x.cols; ++c) {
      row[c] = (row[c] - scaler.mean[c]) / scaler.stddev[c];
    }
  }
}

// ---------------------------------------------------------------------------
// Stratified holdout split
// ---------------------------------------------------------------------------

struct SplitSpec {
  double train_fraction = 0.7;
  std::string stratify_on;
  std::uint64_t seed = 0;
};

struct HoldoutSplit {
  std::vector<std::size_t> train_rows;
  std::vector<std::size_t> validation_rows;
};

namespace detail {

// per-class index lists in sorted class order (lexicographic for strings)
template <typename L>
std::map<L, std::vector<std::size_t>> rows_by_class(const std::vector<L>& labels) {
  std::map<L, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  return by_class;
}

template <typename L>
std::string class_name(const L& label) {
  if constexpr (std::is_same_v<L, std::string>) return label;
  else return std::to_string(label);
}

}  // namespace detail

template <typename L>
HoldoutSplit stratified_holdout_indices(const std::vector<L>& labels, double train_fraction,
                                        std::uint64_t seed) {
  require(train_fraction > 0.0 && train_fraction < 1.0, "train_fraction must lie in (0,1)");
  auto by_class = detail::rows_by_class(labels);

  HoldoutSplit split;
  Rng rng(derive_seed(seed, 0x5117));
  for (auto& [cls, rows] : by_class) {
    require(rows.size() >= 2, "class with fewer than 2 rows: " + detail::class_name(cls));
    rng.shuffle(rows);
    const double target = train_fraction * static_cast<double>(rows.size());
    std::size_t n_train = static_cast<std::size_t>(std::llround(target));
    n_train = std::clamp<std::size_t>(n_train, 1, rows.size() - 1);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      (i < n_train ? split.train_rows : split.validation_rows).push_back(rows[i]);
    }
  }
  std::sort(split.train_rows.begin(), split.train_rows.end());
  std::sort(split.validation_rows.begin(), split.validation_rows.end());
  require(!split.validation_rows.empty(), "validation set is empty");
  return split;
}

inline HoldoutSplit holdout_split(const FlowTable& table, const SplitSpec& spec) {
  return stratified_holdout_indices(table.label(spec.stratify_on), spec.train_fraction,
                                    spec.seed);
}

// ---------------------------------------------------------------------------
// Stratified k-fold plan
// ---------------------------------------------------------------------------

struct FoldPlan {
  std::size_t k = 0;
  std::vector<int> fold_of_row;
  bool stratified = true;
  std::uint64_t seed = 0;

  std::vector<std::size_t> fold_rows(std::size_t fold) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < fold_of_row.size(); ++i) {
      if (fold_of_row[i] == static_cast<int>(fold)) out.push_back(i);
    }
    return out;
  }
  std::vector<std::size_t> complement_rows(std::size_t fold) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < fold_of_row.size(); ++i) {
      if (fold_of_row[i] != static_cast<int>(fold)) out.push_back(i);
    }
    return out;
  }
};

// Index-level implementation shared with grid search.
template <typename L>
FoldPlan kfold_indices(const std::vector<L>& labels, std::size_t k, std::uint64_t seed) {
  require(k >= 2, "kfold requires k >= 2");
  auto by_class = detail::rows_by_class(labels);
  for (const auto& [cls, rows] : by_class) {
    if (rows.size() < k) fail("class smaller than k: " + detail::class_name(cls));
  }
  FoldPlan plan;
  plan.k = k;
  plan.seed = seed;
  plan.fold_of_row.assign(labels.size(), -1);
  Rng rng(derive_seed(seed, 0xf01d));
  for (auto& [cls, rows] : by_class) {
    rng.shuffle(rows);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      plan.fold_of_row[rows[i]] = static_cast<int>(i % k);
    }
  }
  return plan;
}

inline FoldPlan kfold(const FlowTable& table, std::size_t k, const std::string& stratify_on,
                      std::uint64_t seed) {
  return kfold_indices(table.label(stratify_on), k, seed);
}

}  // namespace genis
