#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "genis/core.hpp"
#include "genis/csv.hpp"

namespace genis {

enum class FeatureCategory { general, time_based, quantity_based, hybrid, context, label };

enum class ColumnKind { numeric, categorical, label };

inline std::string to_string(FeatureCategory c) {
  switch (c) {
    case FeatureCategory::general: return "general";
    case FeatureCategory::time_based: return "time";
    case FeatureCategory::quantity_based: return "quantity";
    case FeatureCategory::hybrid: return "hybrid";
    case FeatureCategory::context: return "context";
    case FeatureCategory::label: return "label";
  }
  return "general";
}

inline FeatureCategory category_from_string(const std::string& s) {
  if (s == "general") return FeatureCategory::general;
  if (s == "time" || s == "time_based") return FeatureCategory::time_based;
  if (s == "quantity" || s == "quantity_based") return FeatureCategory::quantity_based;
  if (s == "hybrid") return FeatureCategory::hybrid;
  if (s == "context") return FeatureCategory::context;
  if (s == "label") return FeatureCategory::label;
  fail("unknown feature category: " + s);
}

inline std::string to_string(ColumnKind k) {
  switch (k) {
    case ColumnKind::numeric: return "numeric";
    case ColumnKind::categorical: return "categorical";
    case ColumnKind::label: return "label";
  }
  return "numeric";
}

inline ColumnKind kind_from_string(const std::string& s) {
  if (s == "numeric") return ColumnKind::numeric;
  if (s == "categorical") return ColumnKind::categorical;
  if (s == "label") return ColumnKind::label;
  fail("unknown column kind: " + s);
}

struct FeatureMeta {
  std::string name;
  FeatureCategory category = FeatureCategory::general;
  ColumnKind kind = ColumnKind::numeric;
  bool excluded = false;
  std::string exclusion_reason;  // empty when not excluded

  bool operator==(const FeatureMeta&) const = default;
};

// Feature dictionary attached to a FlowTable. Order is the canonical schema
// order; lookups are by name.
class Taxonomy {
 public:
  Taxonomy() = default;
  explicit Taxonomy(std::vector<FeatureMeta> features) : features_(std::move(features)) {
    reindex();
  }

  const std::vector<FeatureMeta>& features() const { return features_; }
  std::size_t size() const { return features_.size(); }

  bool contains(const std::string& name) const { return index_.count(name) > 0; }

  const FeatureMeta& at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) fail("feature not in taxonomy: " + name);
    return features_[it->second];
  }

  void add(FeatureMeta meta) {
    if (contains(meta.name)) fail("duplicate taxonomy entry: " + meta.name);
    index_[meta.name] = features_.size();
    features_.push_back(std::move(meta));
  }

  void remove(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) return;
    features_.erase(features_.begin() + static_cast<std::ptrdiff_t>(it->second));
    reindex();
  }

  bool operator==(const Taxonomy& other) const { return features_ == other.features_; }

 private:
  void reindex() {
    index_.clear();
    for (std::size_t i = 0; i < features_.size(); ++i) index_[features_[i].name] = i;
  }

  std::vector<FeatureMeta> features_;
  std::map<std::string, std::size_t> index_;
};

// ---------------------------------------------------------------------------
// Descriptor file: CSV with header `feature,category,kind,excluded,reason`.
// ---------------------------------------------------------------------------

inline Taxonomy load_taxonomy(const std::string& path) {
  auto doc = csv::read_file(path);
  require(doc.header.size() >= 4, "taxonomy file needs columns feature,category,kind,excluded[,reason]");
  std::vector<FeatureMeta> metas;
  metas.reserve(doc.rows.size());
  for (const auto& row : doc.rows) {
    if (row.size() < 4) fail("taxonomy row with fewer than 4 cells");
    FeatureMeta m;
    m.name = csv::trim(row[0]);
    m.category = category_from_string(csv::trim(row[1]));
    m.kind = kind_from_string(csv::trim(row[2]));
    const std::string excl = csv::trim(row[3]);
    m.excluded = (excl == "1" || excl == "true" || excl == "yes");
    if (row.size() >= 5) m.exclusion_reason = csv::trim(row[4]);
    if (m.category == FeatureCategory::label) m.kind = ColumnKind::label;
    metas.push_back(std::move(m));
  }
  return Taxonomy(std::move(metas));
}

inline void save_taxonomy(const Taxonomy& tax, const std::string& path) {
  std::ofstream out(path);
  if (!out) fail("cannot write taxonomy file: " + path);
  out << "feature,category,kind,excluded,reason\n";
  for (const auto& m : tax.features()) {
    out << csv::escape(m.name) << ',' << to_string(m.category) << ',' << to_string(m.kind) << ','
        << (m.excluded ? "1" : "0") << ',' << csv::escape(m.exclusion_reason) << '\n';
  }
}

// ---------------------------------------------------------------------------
// Bundled GeNIS default: 125 features = 3 labels + 17 general + 20 time +
// 38 quantity + 18 hybrid + 29 context. Exporter artifacts, the two
// HERA connection counters, and all context identifiers are excluded.
// ---------------------------------------------------------------------------

inline const char* kExporterArtifactReason = "exporter artifact";
inline const char* kTopologyReason = "topology-dependent";
inline const char* kContextReason = "network identifier";

inline Taxonomy genis_default_taxonomy() {
  std::vector<FeatureMeta> m;
  m.reserve(125);
  auto add = [&m](const char* name, FeatureCategory cat, ColumnKind kind, bool excl = false,
                  const char* reason = "") {
    m.push_back(FeatureMeta{name, cat, kind, excl, reason});
  };
  using FC = FeatureCategory;
  using CK = ColumnKind;

  // labels
  add("BinaryLabel", FC::label, CK::label);
  add("CategoryLabel", FC::label, CK::label);
  add("SubCategoryLabel", FC::label, CK::label);

  // general (17): 6 Argus bookkeeping fields excluded, 3 categorical protocol
  // descriptors, 8 numeric metadata fields
  add("FlowID", FC::general, CK::numeric, true, kExporterArtifactReason);
  add("Rank", FC::general, CK::numeric, true, kExporterArtifactReason);
  add("Seq", FC::general, CK::numeric, true, kExporterArtifactReason);
  add("AutoId", FC::general, CK::numeric, true, kExporterArtifactReason);
  add("TcpOpt", FC::general, CK::categorical, true, kExporterArtifactReason);
  add("Cause", FC::general, CK::categorical, true, kExporterArtifactReason);
  add("Protocol", FC::general, CK::categorical);
  add("State", FC::general, CK::categorical);
  add("Flags", FC::general, CK::categorical);
  add("sTos", FC::general, CK::numeric);
  add("dTos", FC::general, CK::numeric);
  add("sDSb", FC::general, CK::numeric);
  add("dDSb", FC::general, CK::numeric);
  add("sHops", FC::general, CK::numeric);
  add("dHops", FC::general, CK::numeric);
  add("sTtl", FC::general, CK::numeric);
  add("dTtl", FC::general, CK::numeric);

  // time-based (20)
  for (const char* name : {"StartTime", "LastTime", "Dur", "RunTime", "IdleTime", "Sum", "Min",
                           "Max", "Mean", "StdDev", "SIntPkt", "DIntPkt", "SIntPktAct",
                           "DIntPktAct", "SIntPktIdl", "DIntPktIdl", "SrcJitter", "DstJitter",
                           "SrcJitAct", "DstJitAct"}) {
    add(name, FC::time_based, CK::numeric);
  }

  // quantity-based (38), Ssaddr/Sdaddr excluded
  for (const char* name : {"TotPkts", "SrcPkts", "DstPkts", "TotBytes", "SrcBytes", "DstBytes",
                           "TotAppByte", "SAppBytes", "DAppBytes", "SrcWin", "DstWin",
                           "SrcTCPBase", "DstTCPBase", "sMeanPktSz", "dMeanPktSz", "sMaxPktSz",
                           "sMinPktSz", "dMaxPktSz", "dMinPktSz", "Loss", "SrcLoss", "DstLoss",
                           "pLoss", "Retrans", "SrcRetra", "DstRetra", "pRetran", "SrcGap",
                           "DstGap", "SrcDup", "DstDup", "SrcOutOfOrder", "DstOutOfOrder",
                           "SynAck", "AckDat", "Trans"}) {
    add(name, FC::quantity_based, CK::numeric);
  }
  add("Ssaddr", FC::quantity_based, CK::numeric, true, kTopologyReason);
  add("Sdaddr", FC::quantity_based, CK::numeric, true, kTopologyReason);

  // hybrid (18)
  for (const char* name : {"Rate", "SrcRate", "DstRate", "Load", "SrcLoad", "DstLoad", "AppRate",
                           "SAppRate", "DAppRate", "SrcLoadAct", "DstLoadAct", "RateAct",
                           "ByteRateVar", "PktRateVar", "SrcBurstRate", "DstBurstRate",
                           "LoadRatio", "RateRatio"}) {
    add(name, FC::hybrid, CK::numeric);
  }

  // context (29): all identifier-like, all excluded
  for (const char* name : {"SrcAddr", "DstAddr", "SrcMac", "DstMac", "SrcSubnet", "DstSubnet",
                           "SrcGateway", "DstGateway"}) {
    add(name, FC::context, CK::categorical, true, kContextReason);
  }
  for (const char* name : {"Sport", "Dport", "Svlan", "Dvlan", "sVid", "dVid", "sVpri", "dVpri",
                           "SrcAS", "DstAS", "sMpls", "dMpls", "SrcOui", "DstOui", "SrcHostId",
                           "DstHostId", "VlanTag", "SrcIfIdx", "DstIfIdx", "SrcNetId",
                           "DstNetId"}) {
    add(name, FC::context, CK::numeric, true, kContextReason);
  }

  Taxonomy tax(std::move(m));
  require(tax.size() == 125, "GeNIS default taxonomy must have 125 entries");
  return tax;
}

}  // namespace genis
