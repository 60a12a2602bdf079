#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <queue>
#include <string>
#include <vector>

#include "genis/core.hpp"

namespace genis {

// ---------------------------------------------------------------------------
// Tree structures shared by the forest and the boosted ensembles.
// ---------------------------------------------------------------------------

struct TreeNode {
  int feature = -1;  // -1: leaf
  double threshold = 0.0;  // x[feature] <= threshold routes left
  int left = -1;
  int right = -1;
  double cover = 0.0;  // training rows through this node
  double gain = 0.0;   // split quality (importance bookkeeping)
  std::vector<double> value;  // leaf payload: class distribution (forest) or scalar (gbdt)

  bool is_leaf() const { return feature < 0; }
};

struct Tree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  int leaf_for(std::span<const double> x) const {
    int idx = 0;
    while (!nodes[idx].is_leaf()) {
      const TreeNode& n = nodes[idx];
      idx = x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right;
    }
    return idx;
  }

  std::size_t n_leaves() const {
    std::size_t n = 0;
    for (const auto& node : nodes) n += node.is_leaf() ? 1 : 0;
    return n;
  }

  std::size_t depth() const {
    std::size_t best = 0;
    std::vector<std::pair<int, std::size_t>> stack{{0, 0}};
    while (!stack.empty()) {
      auto [idx, d] = stack.back();
      stack.pop_back();
      best = std::max(best, d);
      if (!nodes[idx].is_leaf()) {
        stack.push_back({nodes[idx].left, d + 1});
        stack.push_back({nodes[idx].right, d + 1});
      }
    }
    return best;
  }
};

// ---------------------------------------------------------------------------
// Configurations
// ---------------------------------------------------------------------------

struct ForestConfig {
  std::size_t n_estimators = 100;
  std::size_t max_features = 0;  // 0: floor(sqrt(feature count)), min 1
  std::size_t max_depth = 16;
  std::size_t min_samples_leaf = 1;
  bool bootstrap = true;
  std::uint64_t seed = 0;
};

enum class GbdtMode { histogram, goss };

struct GbdtConfig {
  GbdtMode mode = GbdtMode::histogram;
  std::size_t n_estimators = 100;
  double learning_rate = 0.2;        // goss-mode conventional value is 0.05
  double min_loss_reduction = 0.01;  // gamma: splits below are rejected
  std::size_t max_depth = 16;        // histogram mode (depth-wise growth)
  std::size_t max_leaves = 15;       // goss mode (leaf-wise growth)
  std::size_t min_samples_leaf = 1;
  double feature_subsample = 1.0;
  std::size_t n_histogram_bins = 256;
  double l2_regularization = 1.0;
  double goss_a = 0.2;  // top fraction kept by |gradient|
  double goss_b = 0.1;  // fraction of the dataset sampled from the remainder
  std::uint64_t seed = 0;

  static GbdtConfig histogram_defaults() { return GbdtConfig{}; }
  static GbdtConfig goss_defaults() {
    GbdtConfig c;
    c.mode = GbdtMode::goss;
    c.learning_rate = 0.05;
    c.min_samples_leaf = 2;
    c.feature_subsample = 0.8;
    return c;
  }
};

struct TreeEnsembleModel {
  enum class Kind { forest, gbdt };

  Kind kind = Kind::forest;
  std::size_t n_classes = 0;
  std::vector<Tree> trees;  // gbdt multiclass: round-major, one tree per class
  std::vector<double> base_score;  // gbdt margins at round 0; empty for forest
  std::vector<std::string> feature_names;
  std::vector<std::string> class_names;
  std::optional<ForestConfig> forest_config;
  std::optional<GbdtConfig> gbdt_config;
  std::vector<double> train_loss;  // gbdt: training loss per round (index 0 = prior)

  bool fitted() const { return n_classes >= 2 && (!trees.empty() || !base_score.empty()); }
  std::size_t n_features() const { return feature_names.size(); }
};

// ---------------------------------------------------------------------------
// Gini impurity
// ---------------------------------------------------------------------------

inline double gini_impurity(std::span<const double> class_counts, double total) {
  if (total <= 0.0) return 0.0;
  double acc = 0.0;
  for (double c : class_counts) {
    const double p = c / total;
    acc += p * p;
  }
  return 1.0 - acc;
}

namespace detail {

inline void check_xy(const Matrix& x, const std::vector<int>& y) {
  require(!x.empty(), "empty input");
  require(x.rows == y.size(), "row/label count mismatch");
  require(all_finite(x.data), "non-finite feature values");
}

inline std::size_t count_classes(const std::vector<int>& y) {
  int max_label = -1;
  for (int v : y) {
    require(v >= 0, "negative class label");
    max_label = std::max(max_label, v);
  }
  std::vector<bool> present(static_cast<std::size_t>(max_label) + 1, false);
  for (int v : y) present[static_cast<std::size_t>(v)] = true;
  std::size_t distinct = 0;
  for (bool b : present) distinct += b ? 1 : 0;
  require(distinct >= 2, "single-class input");
  return static_cast<std::size_t>(max_label) + 1;
}

inline std::vector<std::string> default_feature_names(std::size_t d) {
  std::vector<std::string> names(d);
  for (std::size_t i = 0; i < d; ++i) names[i] = "f" + std::to_string(i);
  return names;
}

// -------------------------- forest construction ---------------------------

struct ForestBuilder {
  const Matrix& x;
  const std::vector<int>& y;
  std::size_t n_classes;
  const ForestConfig& config;
  std::size_t max_features;
  double total_rows;

  Tree tree;
  std::vector<std::size_t> rows;  // workspace, partitioned in place
  Rng rng;
  // buffers reused across nodes
  std::vector<std::pair<double, int>> sorted;
  std::vector<double> counts;
  std::vector<double> left_counts;
  std::vector<std::size_t> feature_pool;

  ForestBuilder(const Matrix& x_, const std::vector<int>& y_, std::size_t k,
                const ForestConfig& cfg, std::size_t max_feats, std::uint64_t tree_seed)
      : x(x_), y(y_), n_classes(k), config(cfg), max_features(max_feats), total_rows(0),
        rng(tree_seed) {}

  void build() {
    rows.resize(x.rows);
    if (config.bootstrap) {
      for (auto& r : rows) r = rng.next_below(x.rows);
    } else {
      std::iota(rows.begin(), rows.end(), std::size_t{0});
    }
    total_rows = static_cast<double>(rows.size());
    sorted.reserve(rows.size());
    counts.resize(n_classes);
    left_counts.resize(n_classes);
    feature_pool.resize(x.cols);
    std::iota(feature_pool.begin(), feature_pool.end(), std::size_t{0});
    grow(0, rows.size(), 0);
  }

  // partial Fisher-Yates over the shared pool; the pool order persists but
  // every permutation stays equally likely and seed-deterministic
  std::span<const std::size_t> sample_features() {
    for (std::size_t i = 0; i < max_features; ++i) {
      std::swap(feature_pool[i], feature_pool[i + rng.next_below(x.cols - i)]);
    }
    std::sort(feature_pool.begin(), feature_pool.begin() + static_cast<std::ptrdiff_t>(max_features));
    return {feature_pool.data(), max_features};
  }

  int grow(std::size_t begin, std::size_t end, std::size_t depth) {
    const std::size_t n = end - begin;
    std::fill(counts.begin(), counts.end(), 0.0);
    for (std::size_t i = begin; i < end; ++i) counts[static_cast<std::size_t>(y[rows[i]])] += 1.0;

    const int node_id = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    tree.nodes[node_id].cover = static_cast<double>(n);
    {
      auto& value = tree.nodes[node_id].value;
      value.resize(n_classes);
      for (std::size_t k = 0; k < n_classes; ++k) value[k] = counts[k] / static_cast<double>(n);
    }

    const double node_gini = gini_impurity(counts, static_cast<double>(n));
    if (depth >= config.max_depth || node_gini <= 0.0 || n < 2 * config.min_samples_leaf) {
      return node_id;
    }

    int best_feature = -1;
    double best_threshold = 0.0;
    double best_decrease = 1e-12;
    sorted.resize(n);
    for (std::size_t f : sample_features()) {
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t r = rows[begin + i];
        sorted[i] = {x.at(r, f), y[r]};
      }
      std::sort(sorted.begin(), sorted.end());
      if (sorted.front().first == sorted.back().first) continue;

      std::fill(left_counts.begin(), left_counts.end(), 0.0);
      for (std::size_t i = 0; i + 1 < n; ++i) {
        left_counts[static_cast<std::size_t>(sorted[i].second)] += 1.0;
        if (sorted[i].first == sorted[i + 1].first) continue;
        const std::size_t nl = i + 1;
        const std::size_t nr = n - nl;
        if (nl < config.min_samples_leaf || nr < config.min_samples_leaf) continue;
        double right_gini_acc = 0.0, left_gini_acc = 0.0;
        for (std::size_t k = 0; k < n_classes; ++k) {
          const double cl = left_counts[k];
          const double cr = counts[k] - cl;
          left_gini_acc += cl * cl;
          right_gini_acc += cr * cr;
        }
        const double nl_d = static_cast<double>(nl);
        const double nr_d = static_cast<double>(nr);
        const double weighted = (nl_d - left_gini_acc / nl_d) + (nr_d - right_gini_acc / nr_d);
        const double decrease = node_gini - weighted / static_cast<double>(n);
        if (decrease > best_decrease) {
          best_decrease = decrease;
          best_feature = static_cast<int>(f);
          best_threshold = 0.5 * (sorted[i].first + sorted[i + 1].first);
        }
      }
    }
    if (best_feature < 0) return node_id;

    auto mid = std::partition(rows.begin() + static_cast<std::ptrdiff_t>(begin),
                              rows.begin() + static_cast<std::ptrdiff_t>(end),
                              [&](std::size_t r) {
                                return x.at(r, static_cast<std::size_t>(best_feature)) <=
                                       best_threshold;
                              });
    const std::size_t split = static_cast<std::size_t>(mid - rows.begin());

    tree.nodes[node_id].feature = best_feature;
    tree.nodes[node_id].threshold = best_threshold;
    tree.nodes[node_id].gain = best_decrease * static_cast<double>(n) / total_rows;
    const int left = grow(begin, split, depth + 1);
    tree.nodes[node_id].left = left;
    const int right = grow(split, end, depth + 1);
    tree.nodes[node_id].right = right;
    return node_id;
  }
};

}  // namespace detail

inline TreeEnsembleModel fit_random_forest(const Matrix& x, const std::vector<int>& y,
                                           const ForestConfig& config,
                                           std::vector<std::string> feature_names = {},
                                           std::vector<std::string> class_names = {}) {
  detail::check_xy(x, y);
  const std::size_t n_classes = detail::count_classes(y);
  std::size_t max_features = config.max_features;
  if (max_features == 0) {
    max_features = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(x.cols)))));
  }
  require(max_features <= x.cols, "max_features exceeds feature count");
  require(config.n_estimators >= 1, "n_estimators must be positive");

  TreeEnsembleModel model;
  model.kind = TreeEnsembleModel::Kind::forest;
  model.n_classes = n_classes;
  model.trees.resize(config.n_estimators);
  model.feature_names =
      feature_names.empty() ? detail::default_feature_names(x.cols) : std::move(feature_names);
  model.class_names = std::move(class_names);
  model.forest_config = config;

  parallel_for(0, config.n_estimators, [&](std::size_t t) {
    detail::ForestBuilder builder(x, y, n_classes, config, max_features,
                                  derive_seed(config.seed, 0x7265e5, t));
    builder.build();
    model.trees[t] = std::move(builder.tree);
  });
  return model;
}

// ---------------------------------------------------------------------------
// GOSS row sampling
// ---------------------------------------------------------------------------

struct GossSample {
  std::vector<std::size_t> indices;  // retained rows (top block first)
  std::vector<double> weights;       // 1.0 for top rows, (1-a)/b for sampled rows
  std::size_t n_top = 0;
};

inline GossSample goss_sample(std::span<const double> gradient_magnitude, double a, double b,
                              Rng& rng) {
  const std::size_t n = gradient_magnitude.size();
  require(a >= 0.0 && b > 0.0 && a + b <= 1.0, "invalid GOSS fractions");
  const std::size_t n_top = std::min<std::size_t>(
      n, static_cast<std::size_t>(std::llround(a * static_cast<double>(n))));

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
    return gradient_magnitude[i] > gradient_magnitude[j];
  });

  GossSample out;
  out.n_top = n_top;
  out.indices.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_top));
  out.weights.assign(n_top, 1.0);

  const std::size_t remainder = n - n_top;
  const std::size_t n_rand = std::min<std::size_t>(
      remainder, static_cast<std::size_t>(std::llround(b * static_cast<double>(n))));
  const double amplify = (1.0 - a) / b;
  auto picks = rng.sample_without_replacement(remainder, n_rand);
  std::sort(picks.begin(), picks.end());
  for (std::size_t p : picks) {
    out.indices.push_back(order[n_top + p]);
    out.weights.push_back(amplify);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Gradient boosting with histogram split finding
// ---------------------------------------------------------------------------

namespace detail {

struct FeatureBins {
  std::vector<double> cuts;        // upper inclusive bound of each bin except the last
  std::vector<double> thresholds;  // split value between bin i and i+1

  std::size_t n_bins() const { return cuts.size() + 1; }
  std::uint16_t bin_of(double v) const {
    const auto it = std::lower_bound(cuts.begin(), cuts.end(), v);
    return static_cast<std::uint16_t>(it - cuts.begin());
  }
};

inline FeatureBins build_bins(std::span<const double> column, std::size_t max_bins) {
  std::vector<double> sorted(column.begin(), column.end());
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> distinct;
  distinct.reserve(sorted.size());
  for (double v : sorted) {
    if (distinct.empty() || v != distinct.back()) distinct.push_back(v);
  }
  FeatureBins bins;
  if (distinct.size() <= 1) return bins;  // constant feature: single bin, no cuts

  if (distinct.size() <= max_bins) {
    bins.cuts.assign(distinct.begin(), distinct.end() - 1);
  } else {
    const std::size_t n = sorted.size();
    for (std::size_t k = 1; k < max_bins; ++k) {
      const double v = sorted[k * n / max_bins - 1];  // last element of chunk k
      if (v >= distinct.back()) break;
      if (bins.cuts.empty() || v > bins.cuts.back()) bins.cuts.push_back(v);
    }
  }
  bins.thresholds.resize(bins.cuts.size());
  for (std::size_t i = 0; i < bins.cuts.size(); ++i) {
    const auto next = std::upper_bound(distinct.begin(), distinct.end(), bins.cuts[i]);
    bins.thresholds[i] = 0.5 * (bins.cuts[i] + *next);
  }
  return bins;
}

struct GbdtRow {
  double grad;
  double hess;
  double weight;
};

// Grows one regression tree over pre-binned features with second-order gains.
struct GbdtTreeGrower {
  const std::vector<std::vector<std::uint16_t>>& binned;  // per feature, per row
  const std::vector<FeatureBins>& bins;
  const std::vector<double>& grad;
  const std::vector<double>& hess;
  const std::vector<double>& weight;
  const GbdtConfig& config;
  const std::vector<std::size_t>& features;  // feature subset for this tree
  double learning_rate;

  Tree tree;
  std::vector<std::size_t> rows;

  struct SplitChoice {
    double gain = -1.0;
    int feature = -1;
    std::size_t bin = 0;
    double g_left = 0.0, h_left = 0.0;
    std::size_t n_left = 0;
  };

  GbdtTreeGrower(const std::vector<std::vector<std::uint16_t>>& binned_,
                 const std::vector<FeatureBins>& bins_, const std::vector<double>& g,
                 const std::vector<double>& h, const std::vector<double>& w,
                 const GbdtConfig& cfg, const std::vector<std::size_t>& feats)
      : binned(binned_), bins(bins_), grad(g), hess(h), weight(w), config(cfg), features(feats),
        learning_rate(cfg.learning_rate) {}

  double leaf_weight(double g_sum, double h_sum) const {
    return -g_sum / (h_sum + config.l2_regularization);
  }

  SplitChoice best_split(std::size_t begin, std::size_t end, double g_sum, double h_sum) const {
    SplitChoice best;
    const double parent_score = g_sum * g_sum / (h_sum + config.l2_regularization);
    const std::size_t n = end - begin;
    std::vector<double> hg, hh;
    std::vector<std::size_t> hc;
    for (std::size_t f : features) {
      const std::size_t nb = bins[f].n_bins();
      if (nb < 2) continue;
      hg.assign(nb, 0.0);
      hh.assign(nb, 0.0);
      hc.assign(nb, 0);
      const auto& fb = binned[f];
      for (std::size_t i = begin; i < end; ++i) {
        const std::size_t r = rows[i];
        const std::size_t b = fb[r];
        const double w = weight[r];
        hg[b] += w * grad[r];
        hh[b] += w * hess[r];
        hc[b] += 1;
      }
      double gl = 0.0, hl = 0.0;
      std::size_t nl = 0;
      for (std::size_t b = 0; b + 1 < nb; ++b) {
        gl += hg[b];
        hl += hh[b];
        nl += hc[b];
        const std::size_t nr = n - nl;
        if (nl < config.min_samples_leaf || nr < config.min_samples_leaf) continue;
        const double gr = g_sum - gl;
        const double hr = h_sum - hl;
        const double gain = 0.5 * (gl * gl / (hl + config.l2_regularization) +
                                   gr * gr / (hr + config.l2_regularization) - parent_score);
        if (gain > best.gain) {
          best.gain = gain;
          best.feature = static_cast<int>(f);
          best.bin = b;
          best.g_left = gl;
          best.h_left = hl;
          best.n_left = nl;
        }
      }
    }
    return best;
  }

  std::size_t partition_rows(std::size_t begin, std::size_t end, int feature, std::size_t bin) {
    const auto& fb = binned[static_cast<std::size_t>(feature)];
    auto mid = std::partition(rows.begin() + static_cast<std::ptrdiff_t>(begin),
                              rows.begin() + static_cast<std::ptrdiff_t>(end),
                              [&](std::size_t r) { return fb[r] <= bin; });
    return static_cast<std::size_t>(mid - rows.begin());
  }

  int make_node(std::size_t n_rows, double g_sum, double h_sum) {
    const int id = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    tree.nodes[id].cover = static_cast<double>(n_rows);
    tree.nodes[id].value = {learning_rate * leaf_weight(g_sum, h_sum)};
    return id;
  }

  void apply_split(int node_id, const SplitChoice& s) {
    const std::size_t f = static_cast<std::size_t>(s.feature);
    tree.nodes[node_id].feature = s.feature;
    tree.nodes[node_id].threshold = bins[f].thresholds[s.bin];
    tree.nodes[node_id].gain = s.gain;
  }

  // depth-wise (histogram mode)
  void grow_depthwise(const std::vector<std::size_t>& sample_rows) {
    rows = sample_rows;
    double g = 0.0, h = 0.0;
    for (std::size_t r : rows) {
      g += weight[r] * grad[r];
      h += weight[r] * hess[r];
    }
    grow_node(0, rows.size(), g, h, 0);
  }

  int grow_node(std::size_t begin, std::size_t end, double g_sum, double h_sum,
                std::size_t depth) {
    const int id = make_node(end - begin, g_sum, h_sum);
    if (depth >= config.max_depth || end - begin < 2 * config.min_samples_leaf) return id;
    const SplitChoice s = best_split(begin, end, g_sum, h_sum);
    if (s.feature < 0 || s.gain < config.min_loss_reduction) return id;
    apply_split(id, s);
    const std::size_t mid = partition_rows(begin, end, s.feature, s.bin);
    const int left = grow_node(begin, mid, s.g_left, s.h_left, depth + 1);
    tree.nodes[id].left = left;
    const int right = grow_node(mid, end, g_sum - s.g_left, h_sum - s.h_left, depth + 1);
    tree.nodes[id].right = right;
    return id;
  }

  // leaf-wise (goss mode)
  void grow_leafwise(const std::vector<std::size_t>& sample_rows) {
    rows = sample_rows;
    double g = 0.0, h = 0.0;
    for (std::size_t r : rows) {
      g += weight[r] * grad[r];
      h += weight[r] * hess[r];
    }

    struct Open {
      int node_id;
      std::size_t begin, end;
      double g_sum, h_sum;
      SplitChoice split;
      std::uint64_t order;  // tie-break: earlier candidate wins
    };
    auto better = [](const Open& a, const Open& b) {
      if (a.split.gain != b.split.gain) return a.split.gain < b.split.gain;  // max-heap
      return a.order > b.order;
    };
    std::priority_queue<Open, std::vector<Open>, decltype(better)> frontier(better);
    std::uint64_t counter = 0;

    const int root = make_node(rows.size(), g, h);
    auto consider = [&](int node_id, std::size_t begin, std::size_t end, double gs, double hs) {
      if (end - begin < 2 * config.min_samples_leaf) return;
      SplitChoice s = best_split(begin, end, gs, hs);
      if (s.feature < 0 || s.gain < config.min_loss_reduction) return;
      frontier.push(Open{node_id, begin, end, gs, hs, s, counter++});
    };
    consider(root, 0, rows.size(), g, h);

    std::size_t n_leaves = 1;
    while (n_leaves < config.max_leaves && !frontier.empty()) {
      Open top = frontier.top();
      frontier.pop();
      apply_split(top.node_id, top.split);
      const std::size_t mid = partition_rows(top.begin, top.end, top.split.feature, top.split.bin);
      const int left = make_node(mid - top.begin, top.split.g_left, top.split.h_left);
      const int right = make_node(top.end - mid, top.g_sum - top.split.g_left,
                                  top.h_sum - top.split.h_left);
      tree.nodes[top.node_id].left = left;
      tree.nodes[top.node_id].right = right;
      ++n_leaves;
      consider(left, top.begin, mid, top.split.g_left, top.split.h_left);
      consider(right, mid, top.end, top.g_sum - top.split.g_left, top.h_sum - top.split.h_left);
    }
  }
};

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

inline void softmax_inplace(std::span<double> z) {
  double m = z[0];
  for (double v : z) m = std::max(m, v);
  double sum = 0.0;
  for (double& v : z) {
    v = std::exp(v - m);
    sum += v;
  }
  for (double& v : z) v /= sum;
}

}  // namespace detail

inline TreeEnsembleModel fit_gbdt(const Matrix& x, const std::vector<int>& y,
                                  const GbdtConfig& config,
                                  std::vector<std::string> feature_names = {},
                                  std::vector<std::string> class_names = {}) {
  detail::check_xy(x, y);
  require(config.learning_rate > 0.0, "learning_rate must be positive");
  require(config.n_histogram_bins >= 2, "n_histogram_bins must be >= 2");
  require(config.goss_a + config.goss_b <= 1.0, "goss_a + goss_b must be <= 1");
  const std::size_t n_classes = detail::count_classes(y);
  const std::size_t n = x.rows;
  const std::size_t d = x.cols;
  // binary task boosts a single margin; multiclass boosts one margin per class
  const std::size_t n_outputs = n_classes == 2 ? 1 : n_classes;

  TreeEnsembleModel model;
  model.kind = TreeEnsembleModel::Kind::gbdt;
  model.n_classes = n_classes;
  model.feature_names =
      feature_names.empty() ? detail::default_feature_names(d) : std::move(feature_names);
  model.class_names = std::move(class_names);
  model.gbdt_config = config;

  // global quantile binning, once per fit
  std::vector<detail::FeatureBins> bins(d);
  std::vector<std::vector<std::uint16_t>> binned(d);
  {
    std::vector<double> column(n);
    for (std::size_t f = 0; f < d; ++f) {
      for (std::size_t r = 0; r < n; ++r) column[r] = x.at(r, f);
      bins[f] = detail::build_bins(column, config.n_histogram_bins);
      binned[f].resize(n);
      for (std::size_t r = 0; r < n; ++r) binned[f][r] = bins[f].bin_of(column[r]);
    }
  }

  // prior margins
  model.base_score.resize(n_outputs);
  if (n_outputs == 1) {
    double pos = 0.0;
    for (int v : y) pos += v;
    const double p = std::clamp(pos / static_cast<double>(n), 1e-12, 1.0 - 1e-12);
    model.base_score[0] = std::log(p / (1.0 - p));
  } else {
    std::vector<double> prior(n_classes, 0.0);
    for (int v : y) prior[static_cast<std::size_t>(v)] += 1.0;
    for (std::size_t k = 0; k < n_classes; ++k) {
      model.base_score[k] = std::log(std::max(prior[k] / static_cast<double>(n), 1e-12));
    }
  }

  Matrix margins(n, n_outputs);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t k = 0; k < n_outputs; ++k) margins.at(r, k) = model.base_score[k];
  }

  std::vector<double> prob(n_outputs);
  std::vector<double> grad(n * n_outputs), hess(n * n_outputs);
  std::vector<double> unit_weight(n, 1.0);
  std::vector<std::size_t> all_rows(n);
  std::iota(all_rows.begin(), all_rows.end(), std::size_t{0});

  auto train_loss = [&]() {
    double loss = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
      if (n_outputs == 1) {
        const double z = margins.at(r, 0);
        const double target = static_cast<double>(y[r]);
        loss += std::max(z, 0.0) - target * z + std::log1p(std::exp(-std::abs(z)));
      } else {
        auto row = margins.row(r);
        double m = row[0];
        for (double v : row) m = std::max(m, v);
        double sum = 0.0;
        for (double v : row) sum += std::exp(v - m);
        loss += -(row[static_cast<std::size_t>(y[r])] - m - std::log(sum));
      }
    }
    return loss / static_cast<double>(n);
  };
  model.train_loss.push_back(train_loss());

  const std::size_t n_subset = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::ceil(config.feature_subsample * static_cast<double>(d))));

  std::vector<double> score(n);
  std::vector<double> slice_grad(n), slice_hess(n);
  for (std::size_t round = 0; round < config.n_estimators; ++round) {
    // gradients/hessians at current margins
    for (std::size_t r = 0; r < n; ++r) {
      if (n_outputs == 1) {
        const double p = detail::sigmoid(margins.at(r, 0));
        grad[r] = p - static_cast<double>(y[r]);
        hess[r] = std::max(p * (1.0 - p), 1e-16);
      } else {
        auto row = margins.row(r);
        for (std::size_t k = 0; k < n_outputs; ++k) prob[k] = row[k];
        detail::softmax_inplace(prob);
        for (std::size_t k = 0; k < n_outputs; ++k) {
          const double p = prob[k];
          grad[r * n_outputs + k] = p - (static_cast<std::size_t>(y[r]) == k ? 1.0 : 0.0);
          hess[r * n_outputs + k] = std::max(p * (1.0 - p), 1e-16);
        }
      }
    }

    // row sampling (GOSS) is shared by the round's per-class trees
    std::vector<std::size_t> sample_rows;
    std::vector<double> weights;
    const std::vector<double>* weight_ptr = &unit_weight;
    if (config.mode == GbdtMode::goss) {
      for (std::size_t r = 0; r < n; ++r) {
        double s = 0.0;
        for (std::size_t k = 0; k < n_outputs; ++k) s += std::abs(grad[r * n_outputs + k]);
        score[r] = s;
      }
      Rng rng(derive_seed(config.seed, 0x6055, round));
      GossSample gs = goss_sample(score, config.goss_a, config.goss_b, rng);
      sample_rows = std::move(gs.indices);
      weights.assign(n, 0.0);
      for (std::size_t i = 0; i < sample_rows.size(); ++i) weights[sample_rows[i]] = gs.weights[i];
      weight_ptr = &weights;
    } else {
      sample_rows = all_rows;
    }

    for (std::size_t k = 0; k < n_outputs; ++k) {
      std::vector<std::size_t> feats;
      if (n_subset >= d) {
        feats.resize(d);
        std::iota(feats.begin(), feats.end(), std::size_t{0});
      } else {
        Rng frng(derive_seed(config.seed, 0xfea7, round, k));
        feats = frng.sample_without_replacement(d, n_subset);
        std::sort(feats.begin(), feats.end());
      }

      for (std::size_t r = 0; r < n; ++r) {
        slice_grad[r] = grad[r * n_outputs + k];
        slice_hess[r] = hess[r * n_outputs + k];
      }
      detail::GbdtTreeGrower grower(binned, bins, slice_grad, slice_hess, *weight_ptr, config,
                                    feats);
      if (config.mode == GbdtMode::histogram) grower.grow_depthwise(sample_rows);
      else grower.grow_leafwise(sample_rows);

      // margins advance on the full training set
      for (std::size_t r = 0; r < n; ++r) {
        const int leaf = grower.tree.leaf_for(x.row(r));
        margins.at(r, k) += grower.tree.nodes[leaf].value[0];
      }
      model.trees.push_back(std::move(grower.tree));
    }
    model.train_loss.push_back(train_loss());
  }
  return model;
}

// ---------------------------------------------------------------------------
// Prediction
// ---------------------------------------------------------------------------

inline Matrix predict_proba(const TreeEnsembleModel& model, const Matrix& x) {
  require(model.fitted(), "model is not fitted");
  require(x.cols == model.n_features(), "feature count mismatch");
  const std::size_t n = x.rows;
  Matrix out(n, model.n_classes);

  if (model.kind == TreeEnsembleModel::Kind::forest) {
    const double inv = 1.0 / static_cast<double>(model.trees.size());
    for (std::size_t r = 0; r < n; ++r) {
      auto row_out = out.row(r);
      for (const Tree& tree : model.trees) {
        const int leaf = tree.leaf_for(x.row(r));
        const auto& value = tree.nodes[leaf].value;
        for (std::size_t k = 0; k < model.n_classes; ++k) row_out[k] += value[k];
      }
      for (std::size_t k = 0; k < model.n_classes; ++k) row_out[k] *= inv;
    }
    return out;
  }

  const std::size_t n_outputs = model.n_classes == 2 ? 1 : model.n_classes;
  std::vector<double> margin(n_outputs);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t k = 0; k < n_outputs; ++k) margin[k] = model.base_score[k];
    for (std::size_t t = 0; t < model.trees.size(); ++t) {
      const int leaf = model.trees[t].leaf_for(x.row(r));
      margin[t % n_outputs] += model.trees[t].nodes[leaf].value[0];
    }
    auto row_out = out.row(r);
    if (n_outputs == 1) {
      const double p = detail::sigmoid(margin[0]);
      row_out[0] = 1.0 - p;
      row_out[1] = p;
    } else {
      detail::softmax_inplace(margin);
      for (std::size_t k = 0; k < model.n_classes; ++k) row_out[k] = margin[k];
    }
  }
  return out;
}

// Total split-gain decrease per feature, normalized to sum 1.
inline std::map<std::string, double> impurity_importance(const TreeEnsembleModel& model) {
  require(model.fitted(), "model is not fitted");
  std::vector<double> acc(model.n_features(), 0.0);
  for (const Tree& tree : model.trees) {
    for (const TreeNode& node : tree.nodes) {
      if (!node.is_leaf()) acc[static_cast<std::size_t>(node.feature)] += node.gain;
    }
  }
  double total = 0.0;
  for (double v : acc) total += v;
  std::map<std::string, double> out;
  for (std::size_t f = 0; f < acc.size(); ++f) {
    out[model.feature_names[f]] = total > 0.0 ? acc[f] / total : 0.0;
  }
  return out;
}

}  // namespace genis
