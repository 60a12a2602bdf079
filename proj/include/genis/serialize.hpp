#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "genis/core.hpp"
#include "genis/explain.hpp"
#include "genis/featsel.hpp"
#include "genis/neural.hpp"
#include "genis/trees.hpp"

namespace genis {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Tree ensembles
// ---------------------------------------------------------------------------

inline json to_json(const TreeNode& n) {
  return json{{"feature", n.feature}, {"threshold", n.threshold}, {"left", n.left},
              {"right", n.right},     {"cover", n.cover},         {"gain", n.gain},
              {"value", n.value}};
}

inline TreeNode tree_node_from_json(const json& j) {
  TreeNode n;
  n.feature = j.at("feature").get<int>();
  n.threshold = j.at("threshold").get<double>();
  n.left = j.at("left").get<int>();
  n.right = j.at("right").get<int>();
  n.cover = j.at("cover").get<double>();
  n.gain = j.at("gain").get<double>();
  n.value = j.at("value").get<std::vector<double>>();
  return n;
}

inline json to_json(const ForestConfig& c) {
  return json{{"n_estimators", c.n_estimators}, {"criterion", "gini"},
              {"max_features", c.max_features}, {"max_depth", c.max_depth},
              {"min_samples_leaf", c.min_samples_leaf}, {"bootstrap", c.bootstrap},
              {"seed", c.seed}};
}

inline ForestConfig forest_config_from_json(const json& j) {
  ForestConfig c;
  c.n_estimators = j.at("n_estimators").get<std::size_t>();
  c.max_features = j.at("max_features").get<std::size_t>();
  c.max_depth = j.at("max_depth").get<std::size_t>();
  c.min_samples_leaf = j.at("min_samples_leaf").get<std::size_t>();
  c.bootstrap = j.at("bootstrap").get<bool>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

inline json to_json(const GbdtConfig& c) {
  return json{{"mode", c.mode == GbdtMode::histogram ? "histogram" : "goss"},
              {"n_estimators", c.n_estimators},
              {"learning_rate", c.learning_rate},
              {"min_loss_reduction", c.min_loss_reduction},
              {"max_depth", c.max_depth},
              {"max_leaves", c.max_leaves},
              {"min_samples_leaf", c.min_samples_leaf},
              {"feature_subsample", c.feature_subsample},
              {"n_histogram_bins", c.n_histogram_bins},
              {"l2_regularization", c.l2_regularization},
              {"goss_a", c.goss_a},
              {"goss_b", c.goss_b},
              {"seed", c.seed}};
}

inline GbdtConfig gbdt_config_from_json(const json& j) {
  GbdtConfig c;
  c.mode = j.at("mode").get<std::string>() == "goss" ? GbdtMode::goss : GbdtMode::histogram;
  c.n_estimators = j.at("n_estimators").get<std::size_t>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.min_loss_reduction = j.at("min_loss_reduction").get<double>();
  c.max_depth = j.at("max_depth").get<std::size_t>();
  c.max_leaves = j.at("max_leaves").get<std::size_t>();
  c.min_samples_leaf = j.at("min_samples_leaf").get<std::size_t>();
  c.feature_subsample = j.at("feature_subsample").get<double>();
  c.n_histogram_bins = j.at("n_histogram_bins").get<std::size_t>();
  c.l2_regularization = j.at("l2_regularization").get<double>();
  c.goss_a = j.at("goss_a").get<double>();
  c.goss_b = j.at("goss_b").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

inline json to_json(const TreeEnsembleModel& m) {
  json trees = json::array();
  for (const Tree& t : m.trees) {
    json nodes = json::array();
    for (const TreeNode& n : t.nodes) nodes.push_back(to_json(n));
    trees.push_back(json{{"nodes", std::move(nodes)}});
  }
  json j{{"type", "tree_ensemble"},
         {"kind", m.kind == TreeEnsembleModel::Kind::forest ? "forest" : "gbdt"},
         {"n_classes", m.n_classes},
         {"base_score", m.base_score},
         {"feature_names", m.feature_names},
         {"class_names", m.class_names},
         {"trees", std::move(trees)}};
  if (m.forest_config) j["forest_config"] = to_json(*m.forest_config);
  if (m.gbdt_config) j["gbdt_config"] = to_json(*m.gbdt_config);
  return j;
}

inline TreeEnsembleModel tree_model_from_json(const json& j) {
  TreeEnsembleModel m;
  m.kind = j.at("kind").get<std::string>() == "forest" ? TreeEnsembleModel::Kind::forest
                                                       : TreeEnsembleModel::Kind::gbdt;
  m.n_classes = j.at("n_classes").get<std::size_t>();
  m.base_score = j.at("base_score").get<std::vector<double>>();
  m.feature_names = j.at("feature_names").get<std::vector<std::string>>();
  m.class_names = j.at("class_names").get<std::vector<std::string>>();
  for (const auto& t : j.at("trees")) {
    Tree tree;
    for (const auto& n : t.at("nodes")) tree.nodes.push_back(tree_node_from_json(n));
    m.trees.push_back(std::move(tree));
  }
  if (j.contains("forest_config")) m.forest_config = forest_config_from_json(j["forest_config"]);
  if (j.contains("gbdt_config")) m.gbdt_config = gbdt_config_from_json(j["gbdt_config"]);
  return m;
}

// ---------------------------------------------------------------------------
// Networks
// ---------------------------------------------------------------------------

inline std::string to_string(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::tanh_act: return "tanh";
    case Activation::sigmoid: return "sigmoid";
    case Activation::softmax: return "softmax";
    case Activation::linear: return "linear";
  }
  return "relu";
}

inline Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "tanh") return Activation::tanh_act;
  if (s == "sigmoid") return Activation::sigmoid;
  if (s == "softmax") return Activation::softmax;
  if (s == "linear") return Activation::linear;
  fail("unknown activation: " + s);
}

inline json to_json(const LayerSpec& s) {
  return json{{"kind", s.kind == LayerSpec::Kind::dense ? "dense" : "lstm_cell"},
              {"units", s.units},
              {"activation", to_string(s.activation)}};
}

inline LayerSpec layer_spec_from_json(const json& j) {
  LayerSpec s;
  s.kind = j.at("kind").get<std::string>() == "dense" ? LayerSpec::Kind::dense
                                                      : LayerSpec::Kind::lstm_cell;
  s.units = j.at("units").get<std::size_t>();
  s.activation = activation_from_string(j.at("activation").get<std::string>());
  return s;
}

inline json to_json(const NetConfig& c) {
  json layers = json::array();
  for (const auto& s : c.layers) layers.push_back(to_json(s));
  return json{{"layers", std::move(layers)},
              {"dropout", c.dropout},
              {"learning_rate", c.adam.learning_rate},
              {"beta1", c.adam.beta1},
              {"beta2", c.adam.beta2},
              {"epsilon", c.adam.epsilon},
              {"batch_size", c.batch_size},
              {"max_epochs", c.max_epochs},
              {"patience", c.patience},
              {"seed", c.seed}};
}

inline NetConfig net_config_from_json(const json& j) {
  NetConfig c;
  for (const auto& l : j.at("layers")) c.layers.push_back(layer_spec_from_json(l));
  c.dropout = j.at("dropout").get<double>();
  c.adam.learning_rate = j.at("learning_rate").get<double>();
  c.adam.beta1 = j.at("beta1").get<double>();
  c.adam.beta2 = j.at("beta2").get<double>();
  c.adam.epsilon = j.at("epsilon").get<double>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.max_epochs = j.at("max_epochs").get<std::size_t>();
  c.patience = j.at("patience").get<std::size_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

inline json matrix_to_json(const Matrix& m) {
  return json{{"rows", m.rows}, {"cols", m.cols}, {"data", m.data}};
}

inline Matrix matrix_from_json(const json& j) {
  Matrix m;
  m.rows = j.at("rows").get<std::size_t>();
  m.cols = j.at("cols").get<std::size_t>();
  m.data = j.at("data").get<std::vector<double>>();
  require(m.data.size() == m.rows * m.cols, "matrix shape mismatch in serialized model");
  return m;
}

inline json to_json(const NetworkModel& m) {
  json layers = json::array();
  for (const auto& layer : m.layers) {
    layers.push_back(json{{"spec", to_json(layer.spec)},
                          {"w", matrix_to_json(layer.w)},
                          {"wh", matrix_to_json(layer.wh)},
                          {"b", layer.b}});
  }
  return json{{"type", "network"},
              {"config", to_json(m.config)},
              {"input_dim", m.input_dim},
              {"n_classes", m.n_classes},
              {"feature_names", m.feature_names},
              {"class_names", m.class_names},
              {"layers", std::move(layers)}};
}

inline NetworkModel network_from_json(const json& j) {
  NetworkModel m;
  m.config = net_config_from_json(j.at("config"));
  m.input_dim = j.at("input_dim").get<std::size_t>();
  m.n_classes = j.at("n_classes").get<std::size_t>();
  m.feature_names = j.at("feature_names").get<std::vector<std::string>>();
  m.class_names = j.at("class_names").get<std::vector<std::string>>();
  for (const auto& l : j.at("layers")) {
    NetworkModel::Layer layer;
    layer.spec = layer_spec_from_json(l.at("spec"));
    layer.w = matrix_from_json(l.at("w"));
    layer.wh = matrix_from_json(l.at("wh"));
    layer.b = l.at("b").get<std::vector<double>>();
    m.layers.push_back(std::move(layer));
  }
  return m;
}

inline json to_json(const TrainLog& log) {
  return json{{"train_loss", log.train_loss},
              {"val_loss", log.val_loss},
              {"val_accuracy", log.val_accuracy},
              {"epoch_seconds", log.epoch_seconds},
              {"best_epoch", log.best_epoch}};
}

// ---------------------------------------------------------------------------
// Selection results and attributions
// ---------------------------------------------------------------------------

inline json to_json(const MethodScore& s) {
  return json{{"method", to_string(s.method)}, {"raw", s.raw}, {"normalized", s.normalized}};
}

inline json to_json(const SelectionResult& r) {
  json methods = json::object();
  for (const auto& m : r.methods) methods[to_string(m.method)] = to_json(m);
  return json{{"methods", std::move(methods)},
              {"aggregate", r.aggregate},
              {"ranking", r.ranking},
              {"selected", r.selected},
              {"k", r.selected.size()},
              {"cumulative_importance", r.cumulative_importance}};
}

inline json to_json(const Attribution& a) {
  return json{{"phi", matrix_to_json(a.phi)},
              {"base_value", a.base_value},
              {"target_class", a.target_class},
              {"feature_names", a.feature_names}};
}

inline json to_json(const GroupImportance& g) {
  return json{{"totals", g.totals}, {"per_feature", g.per_feature}};
}

// ---------------------------------------------------------------------------
// File helpers
// ---------------------------------------------------------------------------

inline void write_json_file(const json& j, const std::string& path) {
  std::ofstream out(path);
  if (!out) fail("cannot write: " + path);
  out << j.dump(2) << '\n';
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("cannot open file: " + path);
  return json::parse(in);
}

}  // namespace genis
