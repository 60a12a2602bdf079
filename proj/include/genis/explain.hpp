#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "genis/core.hpp"
#include "genis/neural.hpp"
#include "genis/taxonomy.hpp"
#include "genis/trees.hpp"

namespace genis {

struct Attribution {
  Matrix phi;              // rows x features
  double base_value = 0.0; // expected model output over the reference distribution
  std::size_t target_class = 0;
  std::vector<std::string> feature_names;
};

// ---------------------------------------------------------------------------
// Exact path-dependent TreeSHAP (per-node training covers give the
// conditional expectations). Forests explain the probability of the target
// class; boosted ensembles explain its margin.
// ---------------------------------------------------------------------------

namespace shap_detail {

struct PathElement {
  int feature_index;
  double zero_fraction;
  double one_fraction;
  double pweight;
};

inline void extend_path(PathElement* path, std::size_t depth, double zero_fraction,
                        double one_fraction, int feature_index) {
  path[depth].feature_index = feature_index;
  path[depth].zero_fraction = zero_fraction;
  path[depth].one_fraction = one_fraction;
  path[depth].pweight = depth == 0 ? 1.0 : 0.0;
  for (int i = static_cast<int>(depth) - 1; i >= 0; --i) {
    path[i + 1].pweight += one_fraction * path[i].pweight * (i + 1) /
                           static_cast<double>(depth + 1);
    path[i].pweight = zero_fraction * path[i].pweight * (depth - i) /
                      static_cast<double>(depth + 1);
  }
}

inline void unwind_path(PathElement* path, std::size_t depth, std::size_t index) {
  const double one_fraction = path[index].one_fraction;
  const double zero_fraction = path[index].zero_fraction;
  double next_one_portion = path[depth].pweight;
  for (int i = static_cast<int>(depth) - 1; i >= 0; --i) {
    if (one_fraction != 0.0) {
      const double tmp = path[i].pweight;
      path[i].pweight = next_one_portion * (depth + 1) /
                        static_cast<double>((i + 1) * one_fraction);
      next_one_portion = tmp - path[i].pweight * zero_fraction * (depth - i) /
                                   static_cast<double>(depth + 1);
    } else {
      path[i].pweight = path[i].pweight * (depth + 1) /
                        (zero_fraction * static_cast<double>(depth - i));
    }
  }
  for (std::size_t i = index; i < depth; ++i) {
    path[i].feature_index = path[i + 1].feature_index;
    path[i].zero_fraction = path[i + 1].zero_fraction;
    path[i].one_fraction = path[i + 1].one_fraction;
  }
}

inline double unwound_path_sum(const PathElement* path, std::size_t depth, std::size_t index) {
  const double one_fraction = path[index].one_fraction;
  const double zero_fraction = path[index].zero_fraction;
  double next_one_portion = path[depth].pweight;
  double total = 0.0;
  for (int i = static_cast<int>(depth) - 1; i >= 0; --i) {
    if (one_fraction != 0.0) {
      const double tmp = next_one_portion * (depth + 1) /
                         static_cast<double>((i + 1) * one_fraction);
      total += tmp;
      next_one_portion = path[i].pweight -
                         tmp * zero_fraction * ((depth - i) / static_cast<double>(depth + 1));
    } else if (zero_fraction != 0.0) {
      total += (path[i].pweight / zero_fraction) /
               ((depth - i) / static_cast<double>(depth + 1));
    }
  }
  return total;
}

// leaf payload for the explained output
inline double leaf_scalar(const TreeEnsembleModel& model, const Tree& tree, int node,
                          std::size_t target) {
  if (model.kind == TreeEnsembleModel::Kind::forest) return tree.nodes[node].value[target];
  return tree.nodes[node].value[0];
}

inline void tree_shap_recurse(const TreeEnsembleModel& model, const Tree& tree,
                              std::span<const double> x, std::size_t target, double* phi,
                              double scale, int node_index, std::size_t unique_depth,
                              PathElement* parent_path, double parent_zero_fraction,
                              double parent_one_fraction, int parent_feature_index) {
  const TreeNode& node = tree.nodes[node_index];
  PathElement* path = parent_path + unique_depth + 1;
  std::copy(parent_path, parent_path + unique_depth + 1, path);
  extend_path(path, unique_depth, parent_zero_fraction, parent_one_fraction,
              parent_feature_index);

  if (node.is_leaf()) {
    const double value = leaf_scalar(model, tree, node_index, target) * scale;
    for (std::size_t i = 1; i <= unique_depth; ++i) {
      const double w = unwound_path_sum(path, unique_depth, i);
      const PathElement& el = path[i];
      phi[el.feature_index] += w * (el.one_fraction - el.zero_fraction) * value;
    }
    return;
  }

  const std::size_t split = static_cast<std::size_t>(node.feature);
  const int hot = x[split] <= node.threshold ? node.left : node.right;
  const int cold = hot == node.left ? node.right : node.left;
  const double w = tree.nodes[node_index].cover;
  const double hot_zero_fraction = tree.nodes[hot].cover / w;
  const double cold_zero_fraction = tree.nodes[cold].cover / w;
  double incoming_zero_fraction = 1.0;
  double incoming_one_fraction = 1.0;

  // splitting again on a feature already on the path: undo the previous split
  std::size_t path_index = 0;
  for (; path_index <= unique_depth; ++path_index) {
    if (path[path_index].feature_index == node.feature) break;
  }
  if (path_index != unique_depth + 1) {
    incoming_zero_fraction = path[path_index].zero_fraction;
    incoming_one_fraction = path[path_index].one_fraction;
    unwind_path(path, unique_depth, path_index);
    unique_depth -= 1;
  }

  tree_shap_recurse(model, tree, x, target, phi, scale, hot, unique_depth + 1, path,
                    hot_zero_fraction * incoming_zero_fraction, incoming_one_fraction,
                    node.feature);
  tree_shap_recurse(model, tree, x, target, phi, scale, cold, unique_depth + 1, path,
                    cold_zero_fraction * incoming_zero_fraction, 0.0, node.feature);
}

inline double expected_leaf_value(const TreeEnsembleModel& model, const Tree& tree,
                                  std::size_t target) {
  double acc = 0.0;
  const double root_cover = tree.nodes[0].cover;
  for (std::size_t i = 0; i < tree.nodes.size(); ++i) {
    if (tree.nodes[i].is_leaf()) {
      acc += tree.nodes[i].cover / root_cover * leaf_scalar(model, tree, static_cast<int>(i), target);
    }
  }
  return acc;
}

}  // namespace shap_detail

inline Attribution tree_shap(const TreeEnsembleModel& model, const Matrix& x,
                             std::size_t target_class) {
  require(model.fitted(), "model is not fitted");
  require(x.cols == model.n_features(), "feature count mismatch");
  require(target_class < model.n_classes, "target class out of range");
  for (const Tree& tree : model.trees) {
    for (const TreeNode& node : tree.nodes) {
      require(node.cover > 0.0, "model lacks cover counts");
    }
  }

  Attribution attr;
  attr.feature_names = model.feature_names;
  attr.target_class = target_class;
  attr.phi = Matrix(x.rows, x.cols);

  const bool forest = model.kind == TreeEnsembleModel::Kind::forest;
  const std::size_t n_outputs = model.n_classes == 2 ? 1 : model.n_classes;

  double base = forest ? 0.0 : model.base_score[n_outputs == 1 ? 0 : target_class];
  std::vector<const Tree*> active;
  std::vector<double> scales;
  for (std::size_t t = 0; t < model.trees.size(); ++t) {
    if (!forest && t % n_outputs != (n_outputs == 1 ? 0 : target_class)) continue;
    active.push_back(&model.trees[t]);
    scales.push_back(forest ? 1.0 / static_cast<double>(model.trees.size()) : 1.0);
  }
  for (std::size_t i = 0; i < active.size(); ++i) {
    base += scales[i] * shap_detail::expected_leaf_value(model, *active[i], target_class);
  }
  attr.base_value = base;

  parallel_for(0, x.rows, [&](std::size_t r) {
    std::vector<shap_detail::PathElement> path;
    for (std::size_t i = 0; i < active.size(); ++i) {
      const Tree& tree = *active[i];
      const std::size_t maxd = tree.depth() + 2;
      path.assign((maxd * (maxd + 1)) / 2 + maxd, shap_detail::PathElement{});
      shap_detail::tree_shap_recurse(model, tree, x.row(r), target_class,
                                     attr.phi.row(r).data(), scales[i], 0, 0, path.data(), 1.0,
                                     1.0, -1);
    }
  });
  return attr;
}

// ---------------------------------------------------------------------------
// Monte-Carlo permutation Shapley for arbitrary scoring functions.
// ---------------------------------------------------------------------------

using ScoreFn = std::function<double(std::span<const double>)>;

inline Attribution sampled_shapley(const ScoreFn& score, const Matrix& x,
                                   const Matrix& background, std::size_t n_permutations,
                                   std::uint64_t seed) {
  require(background.rows > 0, "empty background set");
  require(background.cols == x.cols, "background feature count mismatch");
  require(n_permutations >= 1, "n_permutations must be >= 1");

  Attribution attr;
  attr.phi = Matrix(x.rows, x.cols);
  double base = 0.0;
  for (std::size_t b = 0; b < background.rows; ++b) base += score(background.row(b));
  attr.base_value = base / static_cast<double>(background.rows);

  parallel_for(0, x.rows, [&](std::size_t r) {
    Rng rng(derive_seed(seed, 0x54a9, r));
    std::vector<std::size_t> order(x.cols);
    std::vector<double> z(x.cols);
    auto phi = attr.phi.row(r);
    auto sample = x.row(r);
    for (std::size_t p = 0; p < n_permutations; ++p) {
      const std::size_t b = rng.next_below(background.rows);
      auto bg = background.row(b);
      std::copy(bg.begin(), bg.end(), z.begin());
      std::iota(order.begin(), order.end(), std::size_t{0});
      rng.shuffle(order);
      double previous = score(z);
      for (std::size_t j : order) {
        z[j] = sample[j];
        const double current = score(z);
        phi[j] += current - previous;
        previous = current;
      }
    }
    for (std::size_t j = 0; j < x.cols; ++j) phi[j] /= static_cast<double>(n_permutations);
  });
  return attr;
}

// Network convenience: explains the predicted probability of target_class.
inline Attribution sampled_shapley(const NetworkModel& model, const Matrix& x,
                                   const Matrix& background, std::size_t n_permutations,
                                   std::uint64_t seed, std::size_t target_class) {
  require(target_class < model.n_classes, "target class out of range");
  ScoreFn score = [&model, target_class](std::span<const double> row) {
    Matrix one(1, row.size());
    std::copy(row.begin(), row.end(), one.row(0).begin());
    const Matrix proba = forward(model, one, false);
    return proba.at(0, target_class);
  };
  Attribution attr = sampled_shapley(score, x, background, n_permutations, seed);
  attr.target_class = target_class;
  attr.feature_names = model.feature_names;
  return attr;
}

// ---------------------------------------------------------------------------
// Per-category totals (sum over member features of mean |phi|).
// ---------------------------------------------------------------------------

struct GroupImportance {
  std::map<std::string, double> totals;  // category name -> total
  std::map<std::string, double> per_feature;  // mean |phi| per feature
};

inline GroupImportance group_importance(const Attribution& attr, const Taxonomy& taxonomy) {
  GroupImportance out;
  require(attr.phi.rows > 0, "attribution has no rows");
  for (std::size_t f = 0; f < attr.feature_names.size(); ++f) {
    const std::string& name = attr.feature_names[f];
    if (!taxonomy.contains(name)) fail("feature missing from taxonomy: " + name);
    double acc = 0.0;
    for (std::size_t r = 0; r < attr.phi.rows; ++r) acc += std::abs(attr.phi.at(r, f));
    const double mean_abs = acc / static_cast<double>(attr.phi.rows);
    out.per_feature[name] = mean_abs;
    out.totals[to_string(taxonomy.at(name).category)] += mean_abs;
  }
  return out;
}

}  // namespace genis
