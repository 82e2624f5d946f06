#pragma once

// JSON shapes for trees, reports, and phantom ground truth, plus the rank
// encoding that packs the four nested branch levels into one label volume.
// nlohmann::json keeps keys sorted, so serializing equal content yields
// byte-identical text — the reproducibility checks rely on that.

#include <cmath>
#include <string>

#include <json.hpp>

#include "vasq/metrics.hpp"
#include "vasq/phantom.hpp"
#include "vasq/stats.hpp"
#include "vasq/tree.hpp"

namespace vasq {

using json = nlohmann::json;

namespace detail {

// JSON has no NaN; undefined metrics (e.g. hd95 of an empty mask) become null.
inline json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(); }

}  // namespace detail

// --- vessel trees -----------------------------------------------------------------

inline const char* node_kind_name(NodeKind k) {
  switch (k) {
    case NodeKind::Root: return "root";
    case NodeKind::Junction: return "junction";
    default: return "endpoint";
  }
}

inline json tree_to_json(const VesselTree& t) {
  json j;
  j["dims"] = {t.dims[0], t.dims[1], t.dims[2]};
  j["spacing"] = t.spacing;
  j["origin"] = t.origin;
  j["label"] = int(t.label);
  j["is_forest"] = t.is_forest;
  j["roots"] = t.roots;

  json nodes = json::array();
  for (const auto& n : t.nodes) {
    json jn;
    jn["voxel"] = n.voxel;
    jn["kind"] = node_kind_name(n.kind);
    jn["degree"] = n.degree;
    nodes.push_back(std::move(jn));
  }
  j["nodes"] = std::move(nodes);

  json branches = json::array();
  for (const auto& b : t.branches) {
    json jb;
    jb["node_a"] = b.node_a;
    jb["node_b"] = b.node_b;
    jb["generation"] = b.generation;
    jb["component"] = b.component;
    jb["voxels"] = b.voxels;  // interior polyline as linear grid indices
    branches.push_back(std::move(jb));
  }
  j["branches"] = std::move(branches);
  return j;
}

// --- evaluation reports -----------------------------------------------------------

inline json metrics_report_to_json(const MetricsReport& r) {
  json j;
  j["dsc_whole_artery"] = r.dsc_whole_artery;
  j["dsc_whole_vein"] = r.dsc_whole_vein;
  j["dsc_intra_artery"] = r.dsc_intra_artery;
  j["dsc_intra_vein"] = r.dsc_intra_vein;
  j["sen"] = r.sen;
  j["mcs"] = r.mcs;
  j["hd95_mm"] = detail::finite_or_null(r.hd95_mm);
  j["bc_ratio_artery"] = r.bc_ratio_artery;
  j["bc_ratio_vein"] = r.bc_ratio_vein;
  j["sl_ratio_artery"] = r.sl_ratio_artery;
  j["sl_ratio_vein"] = r.sl_ratio_vein;
  j["bc_pred_artery"] = r.bc_pred_artery;
  j["bc_truth_artery"] = r.bc_truth_artery;
  j["bc_pred_vein"] = r.bc_pred_vein;
  j["bc_truth_vein"] = r.bc_truth_vein;
  j["sl_pred_artery"] = r.sl_pred_artery;
  j["sl_truth_artery"] = r.sl_truth_artery;
  j["sl_pred_vein"] = r.sl_pred_vein;
  j["sl_truth_vein"] = r.sl_truth_vein;
  j["loss_dsc"] = r.loss_dsc;
  j["loss_overlap"] = r.loss_overlap;
  j["loss_total"] = r.loss_total;
  j["conventions"] = r.conventions;
  return j;
}

// --- cohort statistics --------------------------------------------------------------

inline json regression_to_json(const RegressionResult& r) {
  json j;
  j["n"] = r.n;
  j["r_squared"] = r.r_squared;
  j["sigma2"] = r.sigma2;
  json coeffs = json::array();
  for (std::size_t i = 0; i < r.names.size(); ++i) {
    json c;
    c["name"] = r.names[i];
    c["coef"] = r.coef[i];
    c["se"] = r.se[i];
    c["t"] = detail::finite_or_null(r.tstat[i]);
    c["p"] = r.pvalue[i];
    coeffs.push_back(std::move(c));
  }
  j["coefficients"] = std::move(coeffs);
  return j;
}

inline json test_result_to_json(const TestResult& t) {
  json j;
  j["method"] = t.method;
  j["statistic"] = t.statistic;
  j["p_value"] = t.p_value;
  j["n"] = t.n;
  j["n1"] = t.n1;
  j["n2"] = t.n2;
  j["exact"] = t.exact;
  return j;
}

inline json group_summary_to_json(const GroupSummary& g) {
  json j;
  j["n"] = g.n;
  j["mean"] = g.mean;
  j["sd"] = g.sd;
  j["sem"] = g.sem;
  return j;
}

inline json cohort_report_to_json(const CohortReport& rep) {
  json j;
  j["n"] = rep.n;
  json per_index = json::object();
  for (std::size_t k = 0; k < kAbundanceIndices.size(); ++k) {
    json idx;
    idx["by_sex"]["female"] = group_summary_to_json(rep.sex_summary[k][0]);
    idx["by_sex"]["male"] = group_summary_to_json(rep.sex_summary[k][1]);
    json decades = json::array();
    for (const auto& bin : rep.age_summary[k]) {
      json d;
      d["decade"] = bin.decade;
      d["stats"] = group_summary_to_json(bin.stats);
      decades.push_back(std::move(d));
    }
    idx["by_decade"] = std::move(decades);
    if (rep.joint_fit[k].n > 0) idx["joint_fit"] = regression_to_json(rep.joint_fit[k]);
    for (int s = 0; s < 2; ++s)
      if (rep.per_sex_fit[k][std::size_t(s)].n > 0)
        idx[s ? "fit_male" : "fit_female"] =
            regression_to_json(rep.per_sex_fit[k][std::size_t(s)]);
    if (rep.sex_test[k].n > 0) {
      idx["sex_test"] = test_result_to_json(rep.sex_test[k]);
      idx["sex_stars"] = rep.sex_stars[k];
    }
    per_index[index_name(kAbundanceIndices[k])] = std::move(idx);
  }
  j["indices"] = std::move(per_index);
  return j;
}

// --- phantom ground truth -------------------------------------------------------------

inline json analytic_topology_to_json(const AnalyticTopology& a) {
  json j;
  j["segment_count"] = a.segment_count;
  j["junction_count"] = a.junction_count;
  j["branching_depth"] = a.branching_depth;
  j["total_length_mm"] = a.total_length_mm;
  j["first_lung_generation"] = a.first_lung_generation;
  j["segment_generations"] = a.segment_generations;
  return j;
}

// --- branch-level rank encoding ----------------------------------------------------

// The four nested level masks collapse losslessly to one volume: 0 is
// background, value k+1 marks the innermost level k containing the voxel.
inline LabelMask levels_to_rank(const BranchLevels& levels) {
  LabelMask rank = LabelMask::like(levels.levels[3]);
  for (int k = 3; k >= 0; --k)
    for (std::size_t i = 0; i < rank.size(); ++i)
      if (levels.levels[std::size_t(k)].data[i]) rank.data[i] = std::uint8_t(k + 1);
  rank.meta["mhd:LevelEncoding"] = "rank";
  if (levels.heart_fallback) rank.meta["mhd:HeartFallback"] = "True";
  return rank;
}

inline BranchLevels levels_from_rank(const LabelMask& rank, std::uint8_t cls) {
  BranchLevels out;
  for (auto& level : out.levels) level = LabelMask::like(rank);
  for (std::size_t i = 0; i < rank.size(); ++i) {
    const std::uint8_t r = rank.data[i];
    if (r == 0) continue;
    if (r > 4)
      throw validation_error("level rank volume: value " + std::to_string(int(r)) +
                             " outside the 0-4 rank encoding");
    for (int k = int(r) - 1; k < 4; ++k) out.levels[std::size_t(k)].data[i] = cls;
  }
  auto fb = rank.meta.find("mhd:HeartFallback");
  out.heart_fallback = fb != rank.meta.end() && fb->second == "True";
  return out;
}

}  // namespace vasq
