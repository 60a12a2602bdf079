#include <gtest/gtest.h>

#include "genis/neural.hpp"
#include "genis/serialize.hpp"

namespace {

using namespace genis;

Matrix random_matrix(Rng& rng, std::size_t rows, std::size_t cols, double lo = -1, double hi = 1) {
  Matrix m(rows, cols);
  for (auto& v : m.data) v = rng.uniform(lo, hi);
  return m;
}

struct Blobs {
  Matrix x;
  std::vector<int> y;
};

Blobs blobs(Rng& rng, std::size_t n, std::size_t d, std::size_t k, double separation) {
  Blobs b;
  b.x = Matrix(n, d);
  b.y.resize(n);
  for (std::size_t r = 0; r < n; ++r) {
    b.y[r] = static_cast<int>(r % k);  // every class present
    for (std::size_t c = 0; c < d; ++c) {
      b.x.at(r, c) = rng.normal() * 0.5 + separation * b.y[r] * ((c % 2) ? 1.0 : -1.0);
    }
  }
  return b;
}

TEST(Init, DeterministicPerSeedAndShapes) {
  const auto a = init_network(mlp_config(16, 8), 5, 3, 42);
  const auto b = init_network(mlp_config(16, 8), 5, 3, 42);
  const auto c = init_network(mlp_config(16, 8), 5, 3, 43);
  ASSERT_EQ(a.layers.size(), 3u);
  EXPECT_EQ(a.layers[0].w.data, b.layers[0].w.data);
  EXPECT_NE(a.layers[0].w.data, c.layers[0].w.data);
  EXPECT_EQ(a.layers.back().spec.units, 3u);  // softmax head

  const auto bin = init_network(mlp_config(16, 8), 5, 2, 1);
  EXPECT_EQ(bin.layers.back().spec.units, 1u);  // sigmoid head
  EXPECT_THROW(init_network(mlp_config(16, 8), 0, 3, 1), Error);
}

TEST(Forward, ZeroWeightsGiveChancePredictions) {
  auto model = init_network(mlp_config(8, 4), 6, 2, 7);
  for (auto& layer : model.layers) {
    std::fill(layer.w.data.begin(), layer.w.data.end(), 0.0);
    std::fill(layer.wh.data.begin(), layer.wh.data.end(), 0.0);
    std::fill(layer.b.begin(), layer.b.end(), 0.0);
  }
  Rng rng(3);
  const auto x = random_matrix(rng, 5, 6);
  const auto proba = forward(model, x, false);
  for (std::size_t r = 0; r < 5; ++r) {
    EXPECT_DOUBLE_EQ(proba.at(r, 1), 0.5);
  }
}

TEST(Forward, SoftmaxRowsSumToOne) {
  const auto model = init_network(mlp_config(12, 6), 7, 4, 11);
  Rng rng(5);
  const auto x = random_matrix(rng, 40, 7, -3, 3);
  const auto proba = forward(model, x, false);
  for (std::size_t r = 0; r < x.rows; ++r) {
    double sum = 0;
    for (std::size_t k = 0; k < 4; ++k) {
      sum += proba.at(r, k);
      EXPECT_GT(proba.at(r, k), 0.0);
    }
    EXPECT_NEAR(sum, 1.0, 1e-9);
  }
}

TEST(Forward, OneStepLstmZeroGatesYieldBiasDrivenOutput) {
  auto model = init_network(lstm_config(6, 4), 5, 3, 13);
  // zero the lstm weights: h = sigmoid(0) * tanh(i*g) with i*g = 0
  std::fill(model.layers[0].w.data.begin(), model.layers[0].w.data.end(), 0.0);
  std::fill(model.layers[0].wh.data.begin(), model.layers[0].wh.data.end(), 0.0);
  std::fill(model.layers[0].b.begin(), model.layers[0].b.end(), 0.0);
  Rng rng(17);
  const auto x1 = random_matrix(rng, 3, 5);
  const auto x2 = random_matrix(rng, 3, 5);
  const auto p1 = forward(model, x1, false);
  const auto p2 = forward(model, x2, false);
  // with the first layer silenced, outputs cannot depend on the input
  for (std::size_t r = 0; r < 3; ++r) {
    for (std::size_t k = 0; k < 3; ++k) EXPECT_DOUBLE_EQ(p1.at(r, k), p2.at(r, k));
  }
}

TEST(Forward, InferenceIsDeterministicAndDropoutZeroMatchesTraining) {
  NetConfig cfg = mlp_config(10, 5);
  cfg.dropout = 0.0;
  const auto model = init_network(cfg, 6, 3, 19);
  Rng rng(23);
  const auto x = random_matrix(rng, 9, 6);
  EXPECT_EQ(forward(model, x, false).data, forward(model, x, false).data);
  EXPECT_EQ(forward(model, x, true, 5).data, forward(model, x, false).data);

  NetConfig dropped = mlp_config(10, 5);
  dropped.dropout = 0.5;
  const auto model2 = init_network(dropped, 6, 3, 19);
  // same dropout seed reproduces the same masks
  EXPECT_EQ(forward(model2, x, true, 77).data, forward(model2, x, true, 77).data);
  EXPECT_NE(forward(model2, x, true, 77).data, forward(model2, x, true, 78).data);
}

TEST(GradCheck, MlpBackpropMatchesFiniteDifferences) {
  Rng rng(29);
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    NetConfig cfg = mlp_config(10, 6);
    cfg.dropout = 0.0;
    auto model = init_network(cfg, 7, 3, seed);
    const auto x = random_matrix(rng, 8, 7);
    std::vector<int> y(8);
    for (auto& v : y) v = static_cast<int>(rng.next_below(3));
    EXPECT_LT(numeric_gradient_check(model, x, y, 1e-5), 1e-4) << "seed " << seed;
  }
}

TEST(GradCheck, BinarySigmoidHead) {
  Rng rng(31);
  NetConfig cfg = mlp_config(8, 4);
  cfg.dropout = 0.0;
  auto model = init_network(cfg, 5, 2, 5);
  const auto x = random_matrix(rng, 6, 5);
  std::vector<int> y = {0, 1, 1, 0, 1, 0};
  EXPECT_LT(numeric_gradient_check(model, x, y, 1e-5), 1e-4);
}

TEST(GradCheck, OneStepLstmBackpropMatchesFiniteDifferences) {
  Rng rng(37);
  for (std::uint64_t seed : {4u, 5u}) {
    NetConfig cfg = lstm_config(6, 4);
    cfg.dropout = 0.0;
    auto model = init_network(cfg, 5, 3, seed);
    const auto x = random_matrix(rng, 6, 5);
    std::vector<int> y(6);
    for (auto& v : y) v = static_cast<int>(rng.next_below(3));
    EXPECT_LT(numeric_gradient_check(model, x, y, 1e-5), 1e-4) << "seed " << seed;
  }
}

TEST(GradCheck, ThroughDropoutWithFixedMask) {
  Rng rng(41);
  NetConfig cfg = mlp_config(10, 6);
  cfg.dropout = 0.3;
  auto model = init_network(cfg, 7, 3, 6);
  const auto x = random_matrix(rng, 8, 7);
  std::vector<int> y(8);
  for (auto& v : y) v = static_cast<int>(rng.next_below(3));
  EXPECT_LT(numeric_gradient_check(model, x, y, 1e-5, true, 99), 1e-4);
}

TEST(GradCheck, ZeroResidualProbeHasVanishingGradient) {
  Rng rng(43);
  auto model = init_network(lstm_config(6, 4), 5, 3, 8);
  const auto x = random_matrix(rng, 6, 5);
  EXPECT_LT(zero_residual_gradient_norm(model, x), 1e-10);
}

TEST(Train, SeparableBlobsReachHighValidationAccuracy) {
  Rng rng(47);
  const auto train_set = blobs(rng, 400, 6, 2, 2.0);
  const auto val_set = blobs(rng, 160, 6, 2, 2.0);
  NetConfig cfg = mlp_config(16, 8);
  cfg.seed = 3;
  auto model = init_network(cfg, 6, 2, 3);
  const auto log = train(model, train_set.x, train_set.y, val_set.x, val_set.y);
  EXPECT_LE(log.val_loss.size(), 30u);
  EXPECT_GE(log.val_accuracy[log.best_epoch], 0.99);
}

TEST(Train, RestoresBestWeightsAndLogsConsistently) {
  Rng rng(53);
  const auto train_set = blobs(rng, 240, 5, 3, 1.5);
  const auto val_set = blobs(rng, 90, 5, 3, 1.5);
  NetConfig cfg = lstm_config(8, 6);
  cfg.seed = 9;
  cfg.max_epochs = 12;
  auto model = init_network(cfg, 5, 3, 9);
  const auto log = train(model, train_set.x, train_set.y, val_set.x, val_set.y);

  double best = log.val_loss[0];
  for (double v : log.val_loss) best = std::min(best, v);
  EXPECT_NEAR(log.val_loss[log.best_epoch], best, 1e-12);

  // the returned weights really are the best epoch's weights
  auto pass = detail_net::run_forward(model, val_set.x, false, 0);
  const double loss = detail_net::loss_from_logits(pass.logits, val_set.y, model.n_classes);
  EXPECT_NEAR(loss, best, 1e-9);

  // identical seeds give identical logs
  auto model2 = init_network(cfg, 5, 3, 9);
  const auto log2 = train(model2, train_set.x, train_set.y, val_set.x, val_set.y);
  EXPECT_EQ(log.val_loss, log2.val_loss);
  EXPECT_EQ(log.train_loss, log2.train_loss);

  Matrix empty_val(0, 5);
  EXPECT_THROW(train(model2, train_set.x, train_set.y, empty_val, {}), Error);
}

TEST(EarlyStopper, ScriptedPatienceSemantics) {
  EarlyStopper stop3{3};
  EXPECT_TRUE(stop3.observe(1.0));
  EXPECT_TRUE(stop3.observe(1.1));
  EXPECT_TRUE(stop3.observe(1.2));
  EXPECT_FALSE(stop3.observe(1.3));  // third consecutive non-improving epoch
  EXPECT_EQ(stop3.best_index, 0u);

  EarlyStopper stop1{1};
  EXPECT_TRUE(stop1.observe(0.5));
  EXPECT_FALSE(stop1.observe(0.6));  // stops at epoch 2, best is epoch 1
  EXPECT_EQ(stop1.best_index, 0u);

  EarlyStopper recover{2};
  EXPECT_TRUE(recover.observe(1.0));
  EXPECT_TRUE(recover.observe(1.2));
  EXPECT_TRUE(recover.observe(0.8));  // improvement resets the counter
  EXPECT_TRUE(recover.observe(0.9));
  EXPECT_FALSE(recover.observe(0.95));
  EXPECT_EQ(recover.best_index, 2u);
}

TEST(Serialization, NetworkRoundTripPreservesOutputs) {
  Rng rng(59);
  NetConfig cfg = lstm_config(7, 5);
  cfg.seed = 21;
  auto model = init_network(cfg, 6, 3, 21);
  model.feature_names = {"a", "b", "c", "d", "e", "f"};
  model.class_names = {"x", "y", "z"};
  const auto x = random_matrix(rng, 10, 6);
  const auto restored = network_from_json(to_json(model));
  EXPECT_EQ(forward(model, x, false).data, forward(restored, x, false).data);
  EXPECT_EQ(restored.class_names, model.class_names);
}

}  // namespace
