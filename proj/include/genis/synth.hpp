#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "genis/core.hpp"
#include "genis/flow_table.hpp"
#include "genis/taxonomy.hpp"

namespace genis {

// ---------------------------------------------------------------------------
// GeNIS-like synthetic flows: class-conditional log-normal draws for
// quantity/hybrid features, gamma draws for durations, plus configurable
// pure-noise and constant columns for selection tests.
// ---------------------------------------------------------------------------

struct SynthClass {
  std::string name;
  double ratio_percent = 0.0;
  // multiplies each feature's separation; benign sits at 0
  double location_index = 0.0;
};

struct SynthFeature {
  enum class Dist { lognormal, gamma };
  std::string name;
  FeatureCategory category = FeatureCategory::quantity_based;
  Dist dist = Dist::lognormal;
  double base = 1.0;        // log-scale location at index 0
  double separation = 1.0;  // log-scale step per class location index
  double spread = 0.5;      // relative width: lognormal sigma, or gamma 1/sqrt(shape)
  // reversed features put the lowest class index at the top of the scale
  // (idle benign traffic has the longest durations, floods the shortest)
  bool reverse = false;
  // per-class location indices (spec.classes order) overriding the ladder
  std::vector<double> location_overrides;
};

struct SynthSpec {
  std::size_t n_rows = 20000;
  std::vector<SynthClass> classes;
  std::vector<SynthFeature> features;
  std::size_t n_noise_features = 6;
  std::size_t n_constant_features = 2;
  std::uint64_t seed = 0;

  static SynthSpec multiclass_default();
  static SynthSpec binary_default();
};

namespace synth_detail {

inline SynthFeature ladder_feature(const char* name, FeatureCategory cat,
                                   SynthFeature::Dist dist, std::size_t j,
                                   double separation_scale = 1.0) {
  SynthFeature f;
  f.name = name;
  f.category = cat;
  f.dist = dist;
  f.base = 1.0 + 0.15 * static_cast<double>(j);
  f.separation = (0.95 + 0.05 * static_cast<double>(j % 8)) * separation_scale;
  const bool time = cat == FeatureCategory::time_based;
  f.spread = time ? 0.35 : 0.45;
  f.reverse = time;
  return f;
}

// the union of the binary and multiclass reference feature subsets
inline std::vector<SynthFeature> default_features() {
  std::vector<SynthFeature> out;
  auto add = [&out](const char* name, FeatureCategory cat, SynthFeature::Dist dist) {
    out.push_back(ladder_feature(name, cat, dist, out.size()));
  };
  using FC = FeatureCategory;
  using D = SynthFeature::Dist;
  add("DstTCPBase", FC::quantity_based, D::lognormal);
  add("SrcTCPBase", FC::quantity_based, D::lognormal);
  add("DstWin", FC::quantity_based, D::lognormal);
  add("SrcWin", FC::quantity_based, D::lognormal);
  add("TotBytes", FC::quantity_based, D::lognormal);
  add("TotPkts", FC::quantity_based, D::lognormal);
  add("DstBytes", FC::quantity_based, D::lognormal);
  add("SrcBytes", FC::quantity_based, D::lognormal);
  add("SAppBytes", FC::quantity_based, D::lognormal);
  add("Dur", FC::time_based, D::gamma);
  add("Min", FC::time_based, D::gamma);
  add("Mean", FC::time_based, D::gamma);
  add("Max", FC::time_based, D::gamma);
  add("Sum", FC::time_based, D::gamma);
  add("RunTime", FC::time_based, D::gamma);
  add("Load", FC::hybrid, D::lognormal);
  add("SrcLoad", FC::hybrid, D::lognormal);
  add("DstLoad", FC::hybrid, D::lognormal);
  add("Rate", FC::hybrid, D::lognormal);
  add("SrcRate", FC::hybrid, D::lognormal);
  return out;
}

// largest-remainder apportionment: counts sum to n, each within 1 of exact
inline std::vector<std::size_t> apportion(const std::vector<SynthClass>& classes,
                                          std::size_t n_rows) {
  double ratio_sum = 0.0;
  for (const auto& c : classes) ratio_sum += c.ratio_percent;
  require(std::abs(ratio_sum - 100.0) <= 1e-9, "class ratios must sum to 100%");
  require(n_rows >= classes.size(), "n_rows smaller than class count");

  std::vector<double> exact(classes.size());
  std::vector<std::size_t> counts(classes.size());
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < classes.size(); ++i) {
    exact[i] = classes[i].ratio_percent * static_cast<double>(n_rows) / 100.0;
    counts[i] = static_cast<std::size_t>(std::floor(exact[i]));
    assigned += counts[i];
  }
  std::vector<std::size_t> order(classes.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const double fa = exact[a] - std::floor(exact[a]);
    const double fb = exact[b] - std::floor(exact[b]);
    if (fa != fb) return fa > fb;
    return a < b;
  });
  for (std::size_t i = 0; assigned < n_rows; ++i, ++assigned) {
    ++counts[order[i % order.size()]];
  }
  for (std::size_t i = 0; i < counts.size(); ++i) {
    require(counts[i] > 0, "degenerate spec: zero rows for class " + classes[i].name);
  }
  return counts;
}

}  // namespace synth_detail

inline SynthSpec SynthSpec::multiclass_default() {
  SynthSpec spec;
  // Recon and Bruteforce share the volume/time ladder; only the app-byte
  // counters below tell them apart (brute force exchanges payloads and
  // completes connections, scans stay half-open), which keeps a small
  // irreducible confusion floor between the two minority attack classes.
  spec.classes = {{"DoS", 80.22, 3.0},
                  {"Recon", 7.52, 1.0},
                  {"Benign", 7.37, 0.0},
                  {"Bruteforce", 4.89, 1.0}};

  using FC = FeatureCategory;
  using D = SynthFeature::Dist;
  std::size_t j = 0;
  auto add = [&](const char* name, FC cat, D dist, double separation_scale = 1.0) {
    spec.features.push_back(synth_detail::ladder_feature(name, cat, dist, j++, separation_scale));
  };
  // 13 strong ladder features
  add("DstTCPBase", FC::quantity_based, D::lognormal);
  add("SrcTCPBase", FC::quantity_based, D::lognormal);
  add("DstWin", FC::quantity_based, D::lognormal);
  add("SrcWin", FC::quantity_based, D::lognormal);
  add("TotBytes", FC::quantity_based, D::lognormal);
  add("Dur", FC::time_based, D::gamma);
  add("Min", FC::time_based, D::gamma);
  add("Mean", FC::time_based, D::gamma);
  add("Max", FC::time_based, D::gamma);
  add("Sum", FC::time_based, D::gamma);
  add("RunTime", FC::time_based, D::gamma);
  add("DstLoad", FC::hybrid, D::lognormal);
  add("SrcLoad", FC::hybrid, D::lognormal);

  // 3 recon/bruteforce discriminators
  auto payload = [&spec](const char* name, double base, double separation) {
    SynthFeature f;
    f.name = name;
    f.category = FeatureCategory::quantity_based;
    f.dist = SynthFeature::Dist::lognormal;
    f.base = base;
    f.separation = separation;
    f.spread = 0.45;
    f.location_overrides = {0.0, 1.0, 0.0, 2.0};  // DoS, Recon, Benign, Bruteforce
    spec.features.push_back(f);
  };
  payload("DstBytes", 2.0, 1.12);
  payload("SAppBytes", 1.6, 1.05);
  payload("SrcBytes", 1.2, 1.2);

  // mildly informative extras that rank below the reference subset
  add("TotPkts", FC::quantity_based, D::lognormal, 0.3);
  add("Load", FC::hybrid, D::lognormal, 0.3);
  add("Rate", FC::hybrid, D::lognormal, 0.3);
  add("SrcRate", FC::hybrid, D::lognormal, 0.3);
  return spec;
}

inline SynthSpec SynthSpec::binary_default() {
  SynthSpec spec;
  spec.classes = {{"Malicious", 92.63, 2.0}, {"Benign", 7.37, 0.0}};
  spec.features = synth_detail::default_features();
  return spec;
}

inline FlowTable synth_generate(const SynthSpec& spec) {
  require(!spec.classes.empty(), "no classes in spec");
  require(!spec.features.empty() || spec.n_noise_features > 0, "no features in spec");
  const auto counts = synth_detail::apportion(spec.classes, spec.n_rows);

  // class per row, shuffled so stratification never depends on block order
  std::vector<std::size_t> class_of_row;
  class_of_row.reserve(spec.n_rows);
  for (std::size_t c = 0; c < spec.classes.size(); ++c) {
    class_of_row.insert(class_of_row.end(), counts[c], c);
  }
  Rng shuffle_rng(derive_seed(spec.seed, 0x0d3a));
  shuffle_rng.shuffle(class_of_row);

  FlowTable table;
  Taxonomy tax;
  {
    std::vector<std::string> binary(spec.n_rows), category(spec.n_rows), sub(spec.n_rows);
    for (std::size_t r = 0; r < spec.n_rows; ++r) {
      const auto& cls = spec.classes[class_of_row[r]];
      category[r] = cls.name;
      binary[r] = cls.name == "Benign" ? "Benign" : "Malicious";
      sub[r] = cls.name;
    }
    table.add_label("BinaryLabel", std::move(binary));
    table.add_label("CategoryLabel", std::move(category));
    table.add_label("SubCategoryLabel", std::move(sub));
    tax.add(FeatureMeta{"BinaryLabel", FeatureCategory::label, ColumnKind::label, false, ""});
    tax.add(FeatureMeta{"CategoryLabel", FeatureCategory::label, ColumnKind::label, false, ""});
    tax.add(FeatureMeta{"SubCategoryLabel", FeatureCategory::label, ColumnKind::label, false, ""});
  }

  double top_location = 0.0;
  for (const auto& c : spec.classes) top_location = std::max(top_location, c.location_index);

  for (std::size_t f = 0; f < spec.features.size(); ++f) {
    const SynthFeature& feat = spec.features[f];
    if (!feat.location_overrides.empty()) {
      require(feat.location_overrides.size() == spec.classes.size(),
              "location_overrides must match the class count for " + feat.name);
    }
    Rng rng(derive_seed(spec.seed, 0xfea, f));
    std::vector<double> column(spec.n_rows);
    for (std::size_t r = 0; r < spec.n_rows; ++r) {
      const std::size_t cls = class_of_row[r];
      double index;
      if (!feat.location_overrides.empty()) {
        index = feat.location_overrides[cls];
      } else {
        index = spec.classes[cls].location_index;
        if (feat.reverse) index = top_location - index;
      }
      const double loc = feat.base + feat.separation * index;
      if (feat.dist == SynthFeature::Dist::lognormal) {
        column[r] = std::exp(loc + feat.spread * rng.normal());
      } else {
        // gamma with mean exp(loc) and relative std = spread
        const double shape = 1.0 / (feat.spread * feat.spread);
        column[r] = rng.gamma(shape, std::exp(loc) / shape);
      }
    }
    table.add_numeric(feat.name, std::move(column));
    tax.add(FeatureMeta{feat.name, feat.category, ColumnKind::numeric, false, ""});
  }

  for (std::size_t j = 0; j < spec.n_noise_features; ++j) {
    Rng rng(derive_seed(spec.seed, 0x401e, j));
    std::vector<double> column(spec.n_rows);
    for (double& v : column) v = std::exp(2.0 + 0.8 * rng.normal());
    const std::string name = "Noise" + std::string(j < 9 ? "0" : "") + std::to_string(j + 1);
    table.add_numeric(name, std::move(column));
    tax.add(FeatureMeta{name, FeatureCategory::general, ColumnKind::numeric, false, ""});
  }
  for (std::size_t j = 0; j < spec.n_constant_features; ++j) {
    const std::string name = "Const" + std::string(j < 9 ? "0" : "") + std::to_string(j + 1);
    table.add_numeric(name, std::vector<double>(spec.n_rows, 3.0));
    tax.add(FeatureMeta{name, FeatureCategory::general, ColumnKind::numeric, false, ""});
  }
  table.set_taxonomy(std::move(tax));
  return table;
}

// ---------------------------------------------------------------------------
// Full 125-column GeNIS-schema table (all taxonomy columns, plausible junk
// values). Used for ingestion/exclusion/encoding checks and demos.
// ---------------------------------------------------------------------------

inline FlowTable genis_schema_table(std::size_t n_rows, std::uint64_t seed) {
  require(n_rows >= 4, "need at least 4 rows");
  const Taxonomy tax = genis_default_taxonomy();
  FlowTable table;

  Rng label_rng(derive_seed(seed, 0x1abe1));
  std::vector<std::string> category(n_rows);
  const std::vector<std::pair<std::string, double>> mix = {
      {"DoS", 0.8022}, {"Recon", 0.0752}, {"Benign", 0.0737}, {"Bruteforce", 0.0489}};
  for (auto& v : category) {
    const double u = label_rng.next_double();
    double acc = 0.0;
    v = mix.back().first;
    for (const auto& [name, p] : mix) {
      acc += p;
      if (u < acc) {
        v = name;
        break;
      }
    }
  }

  auto pick = [](Rng& rng, const std::vector<std::string>& options) {
    return options[rng.next_below(options.size())];
  };

  std::size_t feature_index = 0;
  for (const FeatureMeta& meta : tax.features()) {
    Rng rng(derive_seed(seed, 0x6e5, feature_index++));
    if (meta.kind == ColumnKind::label) {
      if (meta.name == "BinaryLabel") {
        std::vector<std::string> v(n_rows);
        for (std::size_t r = 0; r < n_rows; ++r) {
          v[r] = category[r] == "Benign" ? "Benign" : "Malicious";
        }
        table.add_label(meta.name, std::move(v));
      } else if (meta.name == "CategoryLabel") {
        table.add_label(meta.name, category);
      } else {
        std::vector<std::string> v(n_rows);
        for (std::size_t r = 0; r < n_rows; ++r) v[r] = category[r] + "-1";
        table.add_label(meta.name, std::move(v));
      }
      continue;
    }
    if (meta.kind == ColumnKind::categorical) {
      std::vector<std::string> v(n_rows);
      if (meta.name == "Protocol") {
        for (auto& s : v) s = pick(rng, {"tcp", "udp"});
      } else if (meta.name == "State") {
        for (auto& s : v) s = pick(rng, {"CON", "INT"});
      } else if (meta.name == "Flags") {
        for (auto& s : v) s = "e";
      } else if (meta.name == "TcpOpt") {
        for (auto& s : v) s = pick(rng, {"M", "MSs", "-"});
      } else if (meta.name == "Cause") {
        for (auto& s : v) s = pick(rng, {"Start", "Status", "Stop"});
      } else if (meta.name.find("Mac") != std::string::npos) {
        for (auto& s : v) {
          s = "02:42:ac:11:00:" + std::to_string(10 + rng.next_below(80));
        }
      } else {
        for (auto& s : v) {
          s = "10." + std::to_string(rng.next_below(4)) + ".0." +
              std::to_string(1 + rng.next_below(250));
        }
      }
      table.add_categorical(meta.name, std::move(v));
      continue;
    }
    std::vector<double> v(n_rows);
    for (double& x : v) x = std::exp(1.0 + 1.0 * rng.normal());
    table.add_numeric(meta.name, std::move(v));
  }
  table.set_taxonomy(tax);
  return table;
}

}  // namespace genis
