#pragma once

#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "genis/core.hpp"
#include "genis/csv.hpp"
#include "genis/taxonomy.hpp"

namespace genis {

// Counts column reads per pipeline stage; attached to a table to prove a
// stage never touched it (leakage instrumentation).
struct AccessProbe {
  std::string stage = "unstaged";
  std::map<std::string, std::size_t> rows_read_by_stage;

  void record(std::size_t rows) { rows_read_by_stage[stage] += rows; }
  std::size_t rows_read(const std::string& s) const {
    auto it = rows_read_by_stage.find(s);
    return it == rows_read_by_stage.end() ? 0 : it->second;
  }
};

// Column-oriented flow-record dataset. Immutable by convention once a
// pipeline stage has produced it; mutating members are for construction.
class FlowTable {
 public:
  FlowTable() = default;

  std::size_t n_rows() const { return n_rows_; }
  std::size_t n_columns() const { return order_.size(); }

  const Taxonomy& taxonomy() const { return taxonomy_; }
  Taxonomy& taxonomy() { return taxonomy_; }
  void set_taxonomy(Taxonomy tax) { taxonomy_ = std::move(tax); }

  const std::vector<std::string>& column_order() const { return order_; }

  bool has_column(const std::string& name) const { return lookup_.count(name) > 0; }

  ColumnKind kind(const std::string& name) const { return entry(name).kind; }

  void add_numeric(const std::string& name, std::vector<double> values) {
    check_new_column(name, values.size());
    lookup_[name] = {ColumnKind::numeric, numeric_.size()};
    order_.push_back(name);
    numeric_.push_back(std::move(values));
  }

  void add_categorical(const std::string& name, std::vector<std::string> values) {
    check_new_column(name, values.size());
    lookup_[name] = {ColumnKind::categorical, categorical_.size()};
    order_.push_back(name);
    categorical_.push_back(std::move(values));
  }

  void add_label(const std::string& name, std::vector<std::string> values) {
    check_new_column(name, values.size());
    lookup_[name] = {ColumnKind::label, labels_.size()};
    order_.push_back(name);
    labels_.push_back(std::move(values));
  }

  std::span<const double> numeric(const std::string& name) const {
    const auto& e = entry(name);
    require(e.kind == ColumnKind::numeric, "column is not numeric: " + name);
    touch();
    return numeric_[e.index];
  }

  const std::vector<std::string>& categorical(const std::string& name) const {
    const auto& e = entry(name);
    require(e.kind == ColumnKind::categorical, "column is not categorical: " + name);
    touch();
    return categorical_[e.index];
  }

  const std::vector<std::string>& label(const std::string& name) const {
    const auto& e = entry(name);
    require(e.kind == ColumnKind::label, "column is not a label: " + name);
    touch();
    return labels_[e.index];
  }

  std::vector<std::string> names_of(ColumnKind k) const {
    std::vector<std::string> out;
    for (const auto& name : order_) {
      if (lookup_.at(name).kind == k) out.push_back(name);
    }
    return out;
  }

  std::vector<std::string> numeric_names() const { return names_of(ColumnKind::numeric); }
  std::vector<std::string> categorical_names() const { return names_of(ColumnKind::categorical); }
  std::vector<std::string> label_names() const { return names_of(ColumnKind::label); }

  void drop_column(const std::string& name) {
    auto it = lookup_.find(name);
    if (it == lookup_.end()) fail("no such column: " + name);
    const auto [kind, index] = it->second;
    switch (kind) {
      case ColumnKind::numeric: numeric_.erase(numeric_.begin() + static_cast<std::ptrdiff_t>(index)); break;
      case ColumnKind::categorical: categorical_.erase(categorical_.begin() + static_cast<std::ptrdiff_t>(index)); break;
      case ColumnKind::label: labels_.erase(labels_.begin() + static_cast<std::ptrdiff_t>(index)); break;
    }
    lookup_.erase(it);
    for (auto& [other, e] : lookup_) {
      if (e.kind == kind && e.index > index) --e.index;
    }
    order_.erase(std::find(order_.begin(), order_.end(), name));
  }

  // Dense matrix over the named numeric columns; optionally restricted to a
  // row subset (indices must be in range).
  Matrix to_matrix(const std::vector<std::string>& features,
                   const std::vector<std::size_t>* rows = nullptr) const {
    const std::size_t r = rows ? rows->size() : n_rows_;
    Matrix out(r, features.size());
    for (std::size_t c = 0; c < features.size(); ++c) {
      auto col = numeric(features[c]);
      for (std::size_t i = 0; i < r; ++i) {
        const std::size_t src = rows ? (*rows)[i] : i;
        out.at(i, c) = col[src];
      }
    }
    return out;
  }

  void set_access_probe(std::shared_ptr<AccessProbe> probe) { probe_ = std::move(probe); }
  const std::shared_ptr<AccessProbe>& access_probe() const { return probe_; }

  bool same_contents(const FlowTable& other) const {
    return order_ == other.order_ && numeric_ == other.numeric_ &&
           categorical_ == other.categorical_ && labels_ == other.labels_ &&
           n_rows_ == other.n_rows_;
  }

 private:
  struct Entry {
    ColumnKind kind;
    std::size_t index;
  };

  const Entry& entry(const std::string& name) const {
    auto it = lookup_.find(name);
    if (it == lookup_.end()) fail("no such column: " + name);
    return it->second;
  }

  void check_new_column(const std::string& name, std::size_t len) {
    require(!has_column(name), "duplicate column name: " + name);
    if (order_.empty()) {
      n_rows_ = len;
    } else {
      require(len == n_rows_, "column length mismatch for " + name);
    }
  }

  void touch() const {
    if (probe_) probe_->record(n_rows_);
  }

  std::size_t n_rows_ = 0;
  std::vector<std::string> order_;
  std::map<std::string, Entry> lookup_;
  std::vector<std::vector<double>> numeric_;
  std::vector<std::vector<std::string>> categorical_;
  std::vector<std::vector<std::string>> labels_;
  Taxonomy taxonomy_;
  std::shared_ptr<AccessProbe> probe_;
};

// ---------------------------------------------------------------------------
// Ingestion
// ---------------------------------------------------------------------------

struct LoadOptions {
  // Fraction of header columns allowed to be missing from the taxonomy.
  // 0.0 (default): any unknown column is an error. Tolerated unknowns are
  // ingested as categorical, category `general`.
  double max_unknown_fraction = 0.0;
};

struct LoadResult {
  FlowTable table;
  std::size_t dropped_rows = 0;
  std::vector<std::string> unknown_columns;
};

inline LoadResult load_flow_csv(const std::string& path, const Taxonomy& taxonomy,
                                const LoadOptions& options = {}) {
  auto doc = csv::read_file(path);
  require(!doc.header.empty(), "empty input: " + path);
  if (doc.rows.empty()) fail("empty input: no data rows in " + path);

  std::vector<std::string> header;
  header.reserve(doc.header.size());
  for (const auto& h : doc.header) header.push_back(csv::trim(h));
  {
    std::set<std::string> seen;
    for (const auto& h : header) require(seen.insert(h).second, "duplicate header column: " + h);
  }

  LoadResult result;
  std::vector<ColumnKind> kinds(header.size());
  Taxonomy table_tax;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (taxonomy.contains(header[c])) {
      const FeatureMeta& meta = taxonomy.at(header[c]);
      kinds[c] = meta.kind;
      table_tax.add(meta);
    } else {
      result.unknown_columns.push_back(header[c]);
      kinds[c] = ColumnKind::categorical;
      table_tax.add(FeatureMeta{header[c], FeatureCategory::general, ColumnKind::categorical,
                                false, ""});
    }
  }
  const double unknown_fraction =
      static_cast<double>(result.unknown_columns.size()) / static_cast<double>(header.size());
  if (unknown_fraction > options.max_unknown_fraction && !result.unknown_columns.empty()) {
    fail("header/taxonomy mismatch: unknown columns (first: " + result.unknown_columns.front() +
         ", " + std::to_string(result.unknown_columns.size()) + " total)");
  }

  // parse rows; a row with any unparseable numeric cell is dropped whole
  std::vector<std::vector<double>> numeric_cols(header.size());
  std::vector<std::vector<std::string>> string_cols(header.size());
  for (const auto& row : doc.rows) {
    if (row.size() != header.size()) {
      ++result.dropped_rows;
      continue;
    }
    bool ok = true;
    std::vector<double> parsed(header.size(), 0.0);
    for (std::size_t c = 0; c < header.size() && ok; ++c) {
      if (kinds[c] == ColumnKind::numeric) {
        auto v = csv::parse_double(row[c]);
        if (!v) ok = false;
        else parsed[c] = *v;
      }
    }
    if (!ok) {
      ++result.dropped_rows;
      continue;
    }
    for (std::size_t c = 0; c < header.size(); ++c) {
      if (kinds[c] == ColumnKind::numeric) numeric_cols[c].push_back(parsed[c]);
      else string_cols[c].push_back(csv::trim(row[c]));
    }
  }
  if (!doc.rows.empty() && doc.rows.size() == result.dropped_rows) {
    fail("all " + std::to_string(result.dropped_rows) + " rows dropped while loading " + path);
  }

  for (std::size_t c = 0; c < header.size(); ++c) {
    switch (kinds[c]) {
      case ColumnKind::numeric: result.table.add_numeric(header[c], std::move(numeric_cols[c])); break;
      case ColumnKind::categorical: result.table.add_categorical(header[c], std::move(string_cols[c])); break;
      case ColumnKind::label: result.table.add_label(header[c], std::move(string_cols[c])); break;
    }
  }
  result.table.set_taxonomy(std::move(table_tax));
  return result;
}

inline void write_flow_csv(const FlowTable& table, const std::string& path) {
  std::ofstream out(path);
  if (!out) fail("cannot write: " + path);
  const auto& order = table.column_order();
  for (std::size_t c = 0; c < order.size(); ++c) {
    if (c) out << ',';
    out << csv::escape(order[c]);
  }
  out << '\n';
  for (std::size_t r = 0; r < table.n_rows(); ++r) {
    for (std::size_t c = 0; c < order.size(); ++c) {
      if (c) out << ',';
      switch (table.kind(order[c])) {
        case ColumnKind::numeric: out << csv::format_double(table.numeric(order[c])[r]); break;
        case ColumnKind::categorical: out << csv::escape(table.categorical(order[c])[r]); break;
        case ColumnKind::label: out << csv::escape(table.label(order[c])[r]); break;
      }
    }
    out << '\n';
  }
}

// Row-subset copy preserving column order and taxonomy.
inline FlowTable subset_rows(const FlowTable& table, const std::vector<std::size_t>& rows) {
  FlowTable out;
  for (const auto& name : table.column_order()) {
    switch (table.kind(name)) {
      case ColumnKind::numeric: {
        auto col = table.numeric(name);
        std::vector<double> v(rows.size());
        for (std::size_t i = 0; i < rows.size(); ++i) v[i] = col[rows[i]];
        out.add_numeric(name, std::move(v));
        break;
      }
      case ColumnKind::categorical: {
        const auto& col = table.categorical(name);
        std::vector<std::string> v(rows.size());
        for (std::size_t i = 0; i < rows.size(); ++i) v[i] = col[rows[i]];
        out.add_categorical(name, std::move(v));
        break;
      }
      case ColumnKind::label: {
        const auto& col = table.label(name);
        std::vector<std::string> v(rows.size());
        for (std::size_t i = 0; i < rows.size(); ++i) v[i] = col[rows[i]];
        out.add_label(name, std::move(v));
        break;
      }
    }
  }
  out.set_taxonomy(table.taxonomy());
  return out;
}

// ---------------------------------------------------------------------------
// Exclusion policy
// ---------------------------------------------------------------------------

struct ExclusionResult {
  FlowTable table;
  std::vector<std::pair<std::string, std::string>> removed;  // name, reason
  std::vector<std::string> skipped_missing;                  // flagged but absent
};

inline ExclusionResult apply_exclusion_policy(const FlowTable& table) {
  ExclusionResult result;
  result.table = table;
  for (const FeatureMeta& meta : table.taxonomy().features()) {
    if (!meta.excluded) continue;
    if (meta.kind == ColumnKind::label) continue;  // labels are always retained
    if (!result.table.has_column(meta.name)) {
      result.skipped_missing.push_back(meta.name);
      continue;
    }
    result.table.drop_column(meta.name);
    result.table.taxonomy().remove(meta.name);
    result.removed.emplace_back(meta.name, meta.exclusion_reason);
  }
  return result;
}

// ---------------------------------------------------------------------------
// One-hot encoding
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<std::string> sorted_distinct(const std::vector<std::string>& values) {
  std::set<std::string> s(values.begin(), values.end());
  return {s.begin(), s.end()};
}

// Vocabulary-driven encode used by the pipeline so train and test share the
// same encoded schema. Values outside the vocabulary encode as all zeros.
inline FlowTable one_hot_encode_with(const FlowTable& table, const std::string& column,
                                     const std::vector<std::string>& categories,
                                     std::size_t* unseen_count = nullptr) {
  require(table.has_column(column), "named column not found: " + column);
  require(table.kind(column) == ColumnKind::categorical,
          "one_hot_encode: column is not categorical: " + column);
  const auto& values = table.categorical(column);
  const FeatureMeta source_meta = table.taxonomy().contains(column)
                                      ? table.taxonomy().at(column)
                                      : FeatureMeta{column, FeatureCategory::general,
                                                    ColumnKind::categorical, false, ""};

  std::map<std::string, std::size_t> pos;
  for (std::size_t i = 0; i < categories.size(); ++i) pos[categories[i]] = i;

  std::vector<std::vector<double>> encoded(categories.size(),
                                           std::vector<double>(values.size(), 0.0));
  std::size_t unseen = 0;
  for (std::size_t r = 0; r < values.size(); ++r) {
    auto it = pos.find(values[r]);
    if (it == pos.end()) ++unseen;
    else encoded[it->second][r] = 1.0;
  }
  if (unseen_count) *unseen_count += unseen;

  // rebuild preserving column order, splicing the encoded columns in place
  FlowTable out;
  for (const auto& name : table.column_order()) {
    if (name == column) {
      for (std::size_t j = 0; j < categories.size(); ++j) {
        out.add_numeric(column + "=" + categories[j], std::move(encoded[j]));
      }
      continue;
    }
    switch (table.kind(name)) {
      case ColumnKind::numeric: out.add_numeric(name, {table.numeric(name).begin(), table.numeric(name).end()}); break;
      case ColumnKind::categorical: out.add_categorical(name, table.categorical(name)); break;
      case ColumnKind::label: out.add_label(name, table.label(name)); break;
    }
  }
  Taxonomy tax;
  bool column_in_taxonomy = false;
  for (const FeatureMeta& meta : table.taxonomy().features()) {
    if (meta.name == column) {
      column_in_taxonomy = true;
      for (const auto& cat : categories) {
        tax.add(FeatureMeta{column + "=" + cat, source_meta.category, ColumnKind::numeric, false, ""});
      }
    } else {
      tax.add(meta);
    }
  }
  if (!column_in_taxonomy) {
    for (const auto& cat : categories) {
      tax.add(FeatureMeta{column + "=" + cat, source_meta.category, ColumnKind::numeric, false, ""});
    }
  }
  out.set_taxonomy(std::move(tax));
  return out;
}

}  // namespace detail

// Replaces each named categorical column by one 0/1 numeric column per
// observed value, named "<col>=<value>", in lexicographic value order.
inline FlowTable one_hot_encode(const FlowTable& table, const std::vector<std::string>& columns) {
  FlowTable out = table;
  for (const auto& column : columns) {
    require(out.has_column(column), "named column not found: " + column);
    require(out.kind(column) == ColumnKind::categorical,
            "one_hot_encode: column is not categorical: " + column);
    out = detail::one_hot_encode_with(out, column, detail::sorted_distinct(out.categorical(column)));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Class composition
// ---------------------------------------------------------------------------

struct DatasetSummary {
  // descending count, ties lexicographic
  std::vector<std::string> classes;
  std::vector<std::size_t> counts;
  std::vector<double> ratios_percent;
  std::size_t total = 0;
};

inline DatasetSummary summarize(const FlowTable& table, const std::string& label_column) {
  const auto& values = table.label(label_column);
  std::map<std::string, std::size_t> counts;
  for (const auto& v : values) ++counts[v];

  std::vector<std::pair<std::string, std::size_t>> ordered(counts.begin(), counts.end());
  std::sort(ordered.begin(), ordered.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });

  DatasetSummary s;
  s.total = values.size();
  for (const auto& [cls, n] : ordered) {
    s.classes.push_back(cls);
    s.counts.push_back(n);
    s.ratios_percent.push_back(100.0 * static_cast<double>(n) / static_cast<double>(s.total));
  }
  return s;
}

// ---------------------------------------------------------------------------
// Label space
// ---------------------------------------------------------------------------

enum class Task { binary, multiclass };

inline std::string to_string(Task t) { return t == Task::binary ? "binary" : "multiclass"; }

inline Task task_from_string(const std::string& s) {
  if (s == "binary") return Task::binary;
  if (s == "multiclass") return Task::multiclass;
  fail("unknown task: " + s);
}

struct LabelSpace {
  Task task = Task::binary;
  std::vector<std::string> classes;  // lexicographic
  std::string benign_class;

  std::size_t index_of(const std::string& cls) const {
    for (std::size_t i = 0; i < classes.size(); ++i) {
      if (classes[i] == cls) return i;
    }
    fail("class not in label space: " + cls);
  }
};

inline LabelSpace make_label_space(const FlowTable& table, const std::string& label_column,
                                   const std::string& benign_class) {
  const auto& values = table.label(label_column);
  std::set<std::string> distinct(values.begin(), values.end());
  LabelSpace space;
  space.classes.assign(distinct.begin(), distinct.end());
  space.benign_class = benign_class;
  require(distinct.count(benign_class) > 0, "benign class absent from label column: " + benign_class);
  require(space.classes.size() >= 2, "label column has fewer than 2 classes");
  space.task = space.classes.size() == 2 ? Task::binary : Task::multiclass;
  return space;
}

// Integer-encoded labels in label-space order.
inline std::vector<int> encode_labels(const FlowTable& table, const std::string& label_column,
                                      const LabelSpace& space,
                                      const std::vector<std::size_t>* rows = nullptr) {
  const auto& values = table.label(label_column);
  std::map<std::string, int> index;
  for (std::size_t i = 0; i < space.classes.size(); ++i) index[space.classes[i]] = static_cast<int>(i);
  const std::size_t n = rows ? rows->size() : values.size();
  std::vector<int> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& v = values[rows ? (*rows)[i] : i];
    auto it = index.find(v);
    if (it == index.end()) fail("label value outside label space: " + v);
    out[i] = it->second;
  }
  return out;
}

}  // namespace genis
