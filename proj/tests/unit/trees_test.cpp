#include <gtest/gtest.h>

#include "genis/serialize.hpp"
#include "genis/trees.hpp"
#include "../support/oracles.hpp"

namespace {

using namespace genis;

Matrix matrix_from(const std::vector<std::vector<double>>& rows) {
  Matrix m(rows.size(), rows[0].size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < rows[r].size(); ++c) m.at(r, c) = rows[r][c];
  }
  return m;
}

struct RandomTable {
  Matrix x;
  std::vector<int> y;
};

RandomTable random_table(Rng& rng, std::size_t n, std::size_t d, std::size_t k) {
  RandomTable t;
  t.x = Matrix(n, d);
  t.y.resize(n);
  for (std::size_t r = 0; r < n; ++r) {
    t.y[r] = static_cast<int>(rng.next_below(k));
    for (std::size_t c = 0; c < d; ++c) {
      t.x.at(r, c) = rng.uniform(-5, 5) + (t.y[r] == static_cast<int>(c % k) ? 1.5 : 0.0);
    }
  }
  // make sure every class appears
  for (std::size_t cls = 0; cls < k; ++cls) t.y[cls] = static_cast<int>(cls);
  return t;
}

TEST(Gini, PinnedValues) {
  const std::vector<double> even = {5, 5};
  EXPECT_DOUBLE_EQ(gini_impurity(even, 10), 0.5);
  const std::vector<double> pure = {10, 0};
  EXPECT_DOUBLE_EQ(gini_impurity(pure, 10), 0.0);
}

TEST(RandomForest, SeparableDataSingleTreePerfectFit) {
  Rng rng(3);
  const std::size_t n = 200;
  Matrix x(n, 3);
  std::vector<int> y(n);
  for (std::size_t r = 0; r < n; ++r) {
    y[r] = static_cast<int>(rng.next_below(2));
    x.at(r, 0) = y[r] ? rng.uniform(1.0, 2.0) : rng.uniform(-2.0, -1.0);
    x.at(r, 1) = rng.uniform(-1, 1);
    x.at(r, 2) = rng.uniform(-1, 1);
  }
  ForestConfig cfg;
  cfg.n_estimators = 1;
  cfg.bootstrap = false;
  cfg.max_features = 3;
  cfg.seed = 1;
  const auto model = fit_random_forest(x, y, cfg);
  const auto proba = predict_proba(model, x);
  for (std::size_t r = 0; r < n; ++r) {
    const int pred = proba.at(r, 1) > proba.at(r, 0) ? 1 : 0;
    EXPECT_EQ(pred, y[r]);
  }
}

TEST(RandomForest, DepthOneSplitMatchesExhaustiveSearch) {
  Rng rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    const auto t = random_table(rng, 60 + rng.next_below(140), 4 + rng.next_below(4),
                                2 + rng.next_below(2));
    ForestConfig cfg;
    cfg.n_estimators = 1;
    cfg.bootstrap = false;
    cfg.max_features = t.x.cols;
    cfg.max_depth = 1;
    cfg.seed = trial;
    const auto model = fit_random_forest(t.x, t.y, cfg);
    const auto& root = model.trees[0].nodes[0];
    const std::size_t k = model.n_classes;
    const auto oracle_split = oracle::exhaustive_gini_split(t.x, t.y, k);
    ASSERT_FALSE(root.is_leaf());
    EXPECT_EQ(root.feature, oracle_split.feature);
    EXPECT_DOUBLE_EQ(root.threshold, oracle_split.threshold);
  }
}

TEST(RandomForest, RejectsDegenerateInputs) {
  Matrix x = matrix_from({{1, 2}, {3, 4}});
  EXPECT_THROW(fit_random_forest(x, {0, 0}, ForestConfig{}), Error);
  EXPECT_THROW(fit_random_forest(Matrix{}, {}, ForestConfig{}), Error);
  ForestConfig wide;
  wide.max_features = 5;
  EXPECT_THROW(fit_random_forest(x, {0, 1}, wide), Error);
}

TEST(RandomForest, DeterministicUnderSeedAndConstraintsHold) {
  Rng rng(29);
  const auto t = random_table(rng, 300, 5, 3);
  ForestConfig cfg;
  cfg.n_estimators = 12;
  cfg.max_depth = 6;
  cfg.min_samples_leaf = 3;
  cfg.seed = 77;
  const auto a = fit_random_forest(t.x, t.y, cfg);
  const auto b = fit_random_forest(t.x, t.y, cfg);
  EXPECT_EQ(to_json(a), to_json(b));

  for (const Tree& tree : a.trees) {
    EXPECT_LE(tree.depth(), cfg.max_depth);
    for (const TreeNode& node : tree.nodes) {
      if (node.is_leaf()) {
        EXPECT_GE(node.cover, static_cast<double>(cfg.min_samples_leaf));
      }
    }
  }
}

TEST(RandomForest, SingleLeafDistributionPrediction) {
  Matrix x = matrix_from({{1}, {1}, {1}, {1}, {1}, {1}, {1}, {1}, {1}, {1}});
  std::vector<int> y = {0, 0, 0, 1, 1, 1, 1, 1, 1, 1};
  ForestConfig cfg;
  cfg.n_estimators = 1;
  cfg.bootstrap = false;
  cfg.max_features = 1;
  const auto model = fit_random_forest(x, y, cfg);
  const auto proba = predict_proba(model, x);
  for (std::size_t r = 0; r < x.rows; ++r) {
    EXPECT_DOUBLE_EQ(proba.at(r, 0), 0.3);
    EXPECT_DOUBLE_EQ(proba.at(r, 1), 0.7);
  }
}

TEST(Gbdt, BaseScoreIsLogOddsOfTrainingRate) {
  Matrix x = matrix_from({{0}, {1}, {2}, {3}, {4}, {5}, {6}, {7}, {8}, {9}});
  std::vector<int> y = {1, 1, 1, 0, 0, 0, 0, 0, 0, 0};
  GbdtConfig cfg;
  cfg.n_estimators = 0;
  const auto model = fit_gbdt(x, y, cfg);
  EXPECT_NEAR(model.base_score[0], std::log(0.3 / 0.7), 1e-12);
  const auto proba = predict_proba(model, x);
  for (std::size_t r = 0; r < x.rows; ++r) EXPECT_NEAR(proba.at(r, 1), 0.3, 1e-12);
}

TEST(Gbdt, DepthOneSplitMatchesSecondOrderOracle) {
  Rng rng(13);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t n = 80 + rng.next_below(120);
    Matrix x(n, 5);
    std::vector<int> y(n);
    for (std::size_t r = 0; r < n; ++r) {
      y[r] = static_cast<int>(rng.next_below(2));
      for (std::size_t c = 0; c < 5; ++c) {
        x.at(r, c) = rng.uniform(-4, 4) + (y[r] && c == 1 ? 1.0 : 0.0);
      }
    }
    y[0] = 0;
    y[1] = 1;
    GbdtConfig cfg;
    cfg.n_estimators = 1;
    cfg.max_depth = 1;
    cfg.min_loss_reduction = 0.0;
    cfg.seed = trial;
    const auto model = fit_gbdt(x, y, cfg);
    const auto& root = model.trees[0].nodes[0];

    // the oracle recomputes the round-0 gradients from the prior
    double pos = 0;
    for (int v : y) pos += v;
    const double p = pos / static_cast<double>(n);
    std::vector<double> grad(n), hess(n);
    for (std::size_t r = 0; r < n; ++r) {
      grad[r] = p - static_cast<double>(y[r]);
      hess[r] = p * (1 - p);
    }
    const auto oracle_split =
        oracle::exhaustive_second_order_split(x, grad, hess, cfg.l2_regularization);
    ASSERT_FALSE(root.is_leaf());
    EXPECT_EQ(root.feature, oracle_split.feature);
    EXPECT_DOUBLE_EQ(root.threshold, oracle_split.threshold);
    EXPECT_NEAR(root.gain, oracle_split.score, 1e-9);
  }
}

TEST(Gbdt, TrainingLossNonincreasingWithoutSubsampling) {
  Rng rng(21);
  const std::size_t n = 400;
  Matrix x(n, 4);
  std::vector<int> y(n);
  for (std::size_t r = 0; r < n; ++r) {
    y[r] = static_cast<int>(rng.next_below(2));
    for (std::size_t c = 0; c < 4; ++c) {
      x.at(r, c) = rng.uniform(-3, 3) + (y[r] ? 0.8 : -0.8) * (c == 0 ? 1.0 : 0.3);
    }
  }
  GbdtConfig cfg;
  cfg.n_estimators = 100;
  cfg.learning_rate = 0.05;
  cfg.feature_subsample = 1.0;
  const auto model = fit_gbdt(x, y, cfg);
  ASSERT_EQ(model.train_loss.size(), 101u);
  for (std::size_t t = 1; t < model.train_loss.size(); ++t) {
    EXPECT_LE(model.train_loss[t], model.train_loss[t - 1] + 1e-9) << "round " << t;
  }
}

TEST(Gbdt, MulticlassLossNonincreasingAndProbabilitiesNormalized) {
  Rng rng(33);
  const std::size_t n = 300;
  Matrix x(n, 4);
  std::vector<int> y(n);
  for (std::size_t r = 0; r < n; ++r) {
    y[r] = static_cast<int>(rng.next_below(3));
    for (std::size_t c = 0; c < 4; ++c) x.at(r, c) = rng.uniform(0, 1) + 0.7 * y[r];
  }
  GbdtConfig cfg;
  cfg.n_estimators = 40;
  cfg.learning_rate = 0.2;
  const auto model = fit_gbdt(x, y, cfg);
  for (std::size_t t = 1; t < model.train_loss.size(); ++t) {
    EXPECT_LE(model.train_loss[t], model.train_loss[t - 1] + 1e-9);
  }
  const auto proba = predict_proba(model, x);
  for (std::size_t r = 0; r < n; ++r) {
    double sum = 0;
    for (std::size_t k = 0; k < 3; ++k) sum += proba.at(r, k);
    EXPECT_NEAR(sum, 1.0, 1e-9);
  }
  // histogram mode never exceeds the configured depth
  for (const Tree& tree : model.trees) EXPECT_LE(tree.depth(), cfg.max_depth);
  // adding a constant to every class margin leaves the argmax unchanged
  TreeEnsembleModel shifted = model;
  for (double& b : shifted.base_score) b += 3.25;
  const auto shifted_proba = predict_proba(shifted, x);
  for (std::size_t r = 0; r < n; ++r) {
    auto a = proba.row(r);
    auto b = shifted_proba.row(r);
    EXPECT_EQ(std::max_element(a.begin(), a.end()) - a.begin(),
              std::max_element(b.begin(), b.end()) - b.begin());
  }
  // multiclass prior at zero rounds
  GbdtConfig empty = cfg;
  empty.n_estimators = 0;
  const auto prior_model = fit_gbdt(x, y, empty);
  const auto prior = predict_proba(prior_model, x);
  std::vector<double> expected(3, 0.0);
  for (int v : y) expected[static_cast<std::size_t>(v)] += 1.0 / static_cast<double>(n);
  for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(prior.at(0, k), expected[k], 1e-9);
}

TEST(Gbdt, GossModeRespectsLeafBudget) {
  Rng rng(43);
  const std::size_t n = 600;
  Matrix x(n, 5);
  std::vector<int> y(n);
  for (std::size_t r = 0; r < n; ++r) {
    y[r] = static_cast<int>(rng.next_below(2));
    for (std::size_t c = 0; c < 5; ++c) x.at(r, c) = rng.uniform(-2, 2) + (y[r] ? 0.9 : 0.0);
  }
  GbdtConfig cfg = GbdtConfig::goss_defaults();
  cfg.n_estimators = 25;
  const auto model = fit_gbdt(x, y, cfg);
  for (const Tree& tree : model.trees) {
    EXPECT_LE(tree.n_leaves(), cfg.max_leaves);
    for (const TreeNode& node : tree.nodes) {
      if (node.is_leaf()) {
        EXPECT_GE(node.cover, static_cast<double>(cfg.min_samples_leaf));
      }
    }
  }
  // goss training still separates the data
  const auto proba = predict_proba(model, x);
  std::size_t correct = 0;
  for (std::size_t r = 0; r < n; ++r) {
    correct += (proba.at(r, 1) > 0.5) == (y[r] == 1) ? 1 : 0;
  }
  EXPECT_GT(static_cast<double>(correct) / static_cast<double>(n), 0.9);
}

TEST(Goss, SampleArithmetic) {
  Rng rng(5);
  std::vector<double> magnitude(1000);
  for (auto& v : magnitude) v = rng.uniform(0, 1);
  Rng sampler(9);
  const auto sample = goss_sample(magnitude, 0.2, 0.1, sampler);
  EXPECT_EQ(sample.n_top, 200u);
  EXPECT_EQ(sample.indices.size(), 300u);  // 200 top + b*n = 100 from the remainder
  for (std::size_t i = 0; i < sample.indices.size(); ++i) {
    EXPECT_DOUBLE_EQ(sample.weights[i], i < 200 ? 1.0 : 8.0);
  }
  // the top block really is the top block
  std::vector<double> sorted = magnitude;
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  const double top_cutoff = sorted[199];
  for (std::size_t i = 0; i < 200; ++i) EXPECT_GE(magnitude[sample.indices[i]], top_cutoff);
  for (std::size_t i = 200; i < 300; ++i) EXPECT_LT(magnitude[sample.indices[i]], top_cutoff);
}

TEST(Gbdt, HistogramWithEnoughBinsMatchesExactSearch) {
  Rng rng(51);
  const std::size_t n = 120;
  Matrix x(n, 3);
  std::vector<int> y(n);
  for (std::size_t r = 0; r < n; ++r) {
    y[r] = static_cast<int>(rng.next_below(2));
    for (std::size_t c = 0; c < 3; ++c) {
      x.at(r, c) = static_cast<double>(rng.next_below(20)) + (y[r] && c == 0 ? 6.0 : 0.0);
    }
  }
  y[0] = 0;
  y[1] = 1;
  GbdtConfig cfg;
  cfg.n_estimators = 1;
  cfg.max_depth = 1;
  cfg.min_loss_reduction = 0.0;
  cfg.n_histogram_bins = 256;  // >= distinct values per feature
  const auto model = fit_gbdt(x, y, cfg);

  double pos = 0;
  for (int v : y) pos += v;
  const double p = pos / static_cast<double>(n);
  std::vector<double> grad(n), hess(n);
  for (std::size_t r = 0; r < n; ++r) {
    grad[r] = p - static_cast<double>(y[r]);
    hess[r] = p * (1 - p);
  }
  const auto oracle_split =
      oracle::exhaustive_second_order_split(x, grad, hess, cfg.l2_regularization);
  const auto& root = model.trees[0].nodes[0];
  ASSERT_FALSE(root.is_leaf());
  EXPECT_EQ(root.feature, oracle_split.feature);
  EXPECT_DOUBLE_EQ(root.threshold, oracle_split.threshold);
  EXPECT_NEAR(root.gain, oracle_split.score, 1e-9);
}

TEST(Importance, SingleFeatureModelAndNormalization) {
  Rng rng(61);
  const std::size_t n = 250;
  Matrix x(n, 3);
  std::vector<int> y(n);
  for (std::size_t r = 0; r < n; ++r) {
    y[r] = static_cast<int>(rng.next_below(2));
    x.at(r, 0) = y[r] ? 2.0 + rng.uniform(0, 1) : -2.0 - rng.uniform(0, 1);
    x.at(r, 1) = rng.uniform(-1, 1);
    x.at(r, 2) = rng.uniform(-1, 1);
  }
  ForestConfig cfg;
  cfg.n_estimators = 10;
  cfg.max_features = 3;
  cfg.seed = 5;
  const auto model = fit_random_forest(x, y, cfg, {"signal", "noise_a", "noise_b"});
  const auto importance = impurity_importance(model);
  double total = 0;
  for (const auto& [_, v] : importance) total += v;
  EXPECT_NEAR(total, 1.0, 1e-9);
  EXPECT_GT(importance.at("signal"), importance.at("noise_a"));
  EXPECT_GT(importance.at("signal"), importance.at("noise_b"));
  EXPECT_GT(importance.at("signal"), 0.8);

  TreeEnsembleModel unfitted;
  EXPECT_THROW(impurity_importance(unfitted), Error);
}

TEST(Serialization, RoundTripPreservesPredictions) {
  Rng rng(71);
  const auto t = random_table(rng, 200, 4, 3);
  ForestConfig fc;
  fc.n_estimators = 8;
  fc.seed = 2;
  const auto forest = fit_random_forest(t.x, t.y, fc, {"a", "b", "c", "d"}, {"x", "y", "z"});
  const auto forest2 = tree_model_from_json(to_json(forest));
  EXPECT_EQ(predict_proba(forest, t.x), predict_proba(forest2, t.x));
  EXPECT_EQ(forest2.feature_names, forest.feature_names);

  GbdtConfig gc;
  gc.n_estimators = 10;
  const auto gbdt = fit_gbdt(t.x, t.y, gc);
  const auto gbdt2 = tree_model_from_json(to_json(gbdt));
  EXPECT_EQ(predict_proba(gbdt, t.x), predict_proba(gbdt2, t.x));

  EXPECT_THROW(predict_proba(gbdt, Matrix(3, 7)), Error);
}

}  // namespace
