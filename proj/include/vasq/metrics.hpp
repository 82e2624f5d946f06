#pragma once

// Evaluation suite for artery/vein segmentations: overlap scores, boundary
// distance, branch-abundance ratios, and the training losses.  Everything here
// is pure; the only state is the `conventions` list each report carries, which
// records every tie-breaking convention that fired (empty-set fallbacks,
// skipped loss terms, and so on) so downstream readers can tell a clean score
// from a degenerate one.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "vasq/core.hpp"
#include "vasq/distance.hpp"
#include "vasq/grid.hpp"
#include "vasq/morphology.hpp"
#include "vasq/skeleton.hpp"
#include "vasq/tree.hpp"
#include "vasq/volume.hpp"

namespace vasq {

namespace detail {

inline void note(std::vector<std::string>* conventions, std::string msg) {
  if (conventions) conventions->push_back(std::move(msg));
}

inline std::size_t count_nonzero(const LabelMask& m) {
  std::size_t n = 0;
  for (std::uint8_t v : m.data) n += (v != 0);
  return n;
}

}  // namespace detail

// --- overlap scores on hard masks -------------------------------------------

// Dice similarity coefficient over the nonzero voxels of each mask.
// Two empty masks are identical, so the score is 1 by convention.
inline double dice(const LabelMask& pred, const LabelMask& truth) {
  require_same_geometry(pred, truth, "dice");
  std::size_t np = 0, nt = 0, ni = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred.data[i] != 0, t = truth.data[i] != 0;
    np += p;
    nt += t;
    ni += (p && t);
  }
  if (np + nt == 0) return 1.0;
  return 2.0 * double(ni) / double(np + nt);
}

// Fraction of truth voxels recovered by the prediction.  An empty truth set
// leaves nothing to miss, so the score is 1 by convention (and flagged).
inline double sensitivity(const LabelMask& pred, const LabelMask& truth,
                          std::vector<std::string>* conventions = nullptr) {
  require_same_geometry(pred, truth, "sensitivity");
  std::size_t nt = 0, ni = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool t = truth.data[i] != 0;
    nt += t;
    ni += (t && pred.data[i] != 0);
  }
  if (nt == 0) {
    detail::note(conventions, "sensitivity: empty truth set, reported as 1 by convention");
    return 1.0;
  }
  return double(ni) / double(nt);
}

// Artery/vein misclassification score: the fraction of labelled volume that
// lands on the opposite class, (|P_A∩T_V| + |P_V∩T_A|) / (|P_A|+|P_V|+|T_A|+|T_V|).
inline double mcs(const LabelMask& pred, const LabelMask& truth,
                  std::vector<std::string>* conventions = nullptr) {
  require_same_geometry(pred, truth, "mcs");
  std::size_t cross = 0, total = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const std::uint8_t p = pred.data[i], t = truth.data[i];
    total += (p == kArtery) + (p == kVein) + (t == kArtery) + (t == kVein);
    cross += (p == kArtery && t == kVein) + (p == kVein && t == kArtery);
  }
  if (total == 0) {
    detail::note(conventions, "mcs: no labelled voxels in either mask, reported as 0");
    return 0.0;
  }
  return double(cross) / double(total);
}

// --- boundary distance -------------------------------------------------------

namespace detail {

// Directed 95th-percentile distance: for every boundary voxel of `from`, the
// Euclidean distance (in mm, anisotropic spacing) to the nearest boundary
// voxel of `to`, then the 95th percentile of those distances.
inline double directed_hd95(const LabelMask& from, const LabelMask& to,
                            std::array<double, 3> spacing) {
  const auto from_b = boundary_voxels(from);
  const auto to_b = boundary_voxels(to);

  LabelMask sites = LabelMask::zeros(to.dims, spacing, to.origin);
  for (std::size_t i : to_b) sites.data[i] = 1;
  const DistanceField field = distance_to_sites(sites);

  // The field stores float distances; recompute in double from the matched
  // site so the percentile is full-precision.
  std::vector<double> d;
  d.reserve(from_b.size());
  for (std::size_t i : from_b) {
    const auto a = sites.coords(i);
    const auto b = sites.coords(std::size_t(field.nearest.data[i]));
    const double dx = (a[0] - b[0]) * spacing[0];
    const double dy = (a[1] - b[1]) * spacing[1];
    const double dz = (a[2] - b[2]) * spacing[2];
    d.push_back(std::sqrt(dx * dx + dy * dy + dz * dz));
  }
  std::sort(d.begin(), d.end());

  // Nearest-rank percentile; the min() guard only matters for tiny samples.
  const std::size_t n = d.size();
  const std::size_t k = std::min(n - 1, std::size_t(std::ceil(0.95 * double(n))) - 1);
  return d[k];
}

}  // namespace detail

// 95th-percentile Hausdorff distance between mask boundaries, in mm.  Pools
// the two directions by taking the larger of the two directed percentiles.
// Boundary voxels are foreground voxels with a face neighbour outside the
// mask (the volume border counts as outside).
inline double hd95(const LabelMask& pred, const LabelMask& truth, std::array<double, 3> spacing) {
  if (pred.dims != truth.dims) {
    throw validation_error("hd95: mask dimensions differ");
  }
  if (detail::count_nonzero(pred) == 0 || detail::count_nonzero(truth) == 0) {
    throw validation_error("hd95: empty mask has an undefined distance");
  }
  return std::max(detail::directed_hd95(pred, truth, spacing),
                  detail::directed_hd95(truth, pred, spacing));
}

// --- branch abundance ---------------------------------------------------------

// Per-class skeleton/branch abundance, reported both as recovered fractions
// and as the raw counts behind them (the table form and the ratio form of the
// same measurement).
struct ClassAbundance {
  double sl_ratio = 0.0;  // skeleton length, pred / truth
  double bc_ratio = 0.0;  // bifurcation count, pred / truth
  std::size_t sl_pred = 0, sl_truth = 0;
  std::size_t bc_pred = 0, bc_truth = 0;
};

struct AbundanceResult {
  ClassAbundance artery;
  ClassAbundance vein;
  std::vector<std::string> conventions;
};

namespace detail {

// Physical-space centroid of the nonzero voxels of `m`; nullopt when empty.
inline std::optional<Vec3> mask_centroid(const LabelMask& m) {
  double sx = 0, sy = 0, sz = 0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (!m.data[i]) continue;
    const auto c = m.coords(i);
    sx += m.origin[0] + c[0] * m.spacing[0];
    sy += m.origin[1] + c[1] * m.spacing[1];
    sz += m.origin[2] + c[2] * m.spacing[2];
    ++n;
  }
  if (n == 0) return std::nullopt;
  return Vec3{sx / double(n), sy / double(n), sz / double(n)};
}

// Skeleton voxel nearest to a physical point, as a voxel index triple.  Used
// to plant tree roots: the anchor point is the cardinal-trunk centroid, which
// can fall off the skeleton (or outside the mask entirely), so we snap it.
inline Index3 snap_to_skeleton(const Skeleton& skel, Vec3 point_mm) {
  const double px = (point_mm.x - skel.origin[0]) / skel.spacing[0];
  const double py = (point_mm.y - skel.origin[1]) / skel.spacing[1];
  const double pz = (point_mm.z - skel.origin[2]) / skel.spacing[2];
  double best = std::numeric_limits<double>::infinity();
  Index3 best_v{0, 0, 0};
  for (std::size_t i : skel.voxels) {
    const auto c = skel.coords(i);
    const double dx = c[0] - px, dy = c[1] - py, dz = c[2] - pz;
    const double d2 = dx * dx + dy * dy + dz * dz;
    if (d2 < best) {
      best = d2;
      best_v = c;
    }
  }
  return best_v;
}

}  // namespace detail

// Skeleton-length and bifurcation-count recovery per class.  Both masks are
// resampled to the fixed metric spacing before skeletonization so that the
// counts are comparable across input resolutions; the truth level decomposition
// supplies the cardinal-trunk centroid used to root the trees.  Ratios are
// reported raw and may exceed 1 for over-segmented predictions.
inline AbundanceResult abundance_ratios(const LabelMask& pred, const LabelMask& truth,
                                        const BranchLevels& truth_levels_artery,
                                        const BranchLevels& truth_levels_vein) {
  require_same_geometry(pred, truth, "abundance_ratios");

  const std::array<double, 3> metric{kMetricSpacingXY, kMetricSpacingXY, kMetricSpacingZ};
  Index3 mdims;
  for (int k = 0; k < 3; ++k) {
    const double extent = truth.dims[k] * truth.spacing[k];
    mdims[k] = std::max(1, int(std::ceil(extent / metric[k] - 1e-9)));
  }
  const LabelMask rp = resample_labels_nearest(pred, metric, mdims);
  const LabelMask rt = resample_labels_nearest(truth, metric, mdims);

  AbundanceResult out;
  const struct {
    std::uint8_t cls;
    const BranchLevels* levels;
    const char* name;
    ClassAbundance* slot;
  } classes[] = {{kArtery, &truth_levels_artery, "artery", &out.artery},
                 {kVein, &truth_levels_vein, "vein", &out.vein}};

  for (const auto& c : classes) {
    const Skeleton st = extract_skeleton(rt, c.cls);
    if (st.voxels.empty()) {
      throw validation_error(std::string("abundance_ratios: empty truth skeleton for ") + c.name);
    }

    // Root anchor: the centroid of the cardinal (in-heart) level when it is
    // populated, otherwise the centroid of the whole class.
    std::optional<Vec3> anchor = detail::mask_centroid(c.levels->levels[0]);
    if (!anchor) {
      LabelMask cls_mask = LabelMask::like(truth);
      for (std::size_t i = 0; i < truth.size(); ++i) cls_mask.data[i] = (truth.data[i] == c.cls);
      anchor = detail::mask_centroid(cls_mask);
      detail::note(&out.conventions, std::string("abundance_ratios: no cardinal level for ") +
                                         c.name + ", tree rooted at the class centroid");
    }

    const VesselTree tt = build_tree(st, detail::snap_to_skeleton(st, *anchor));
    c.slot->sl_truth = skeleton_length(st);
    c.slot->bc_truth = count_bifurcations(tt);

    const Skeleton sp = extract_skeleton(rp, c.cls);
    if (sp.voxels.empty()) {
      // Nothing predicted for this class: both ratios are 0 by definition.
      continue;
    }
    const VesselTree tp = build_tree(sp, detail::snap_to_skeleton(sp, *anchor));
    c.slot->sl_pred = skeleton_length(sp);
    c.slot->bc_pred = count_bifurcations(tp);

    c.slot->sl_ratio = double(c.slot->sl_pred) / double(c.slot->sl_truth);
    if (c.slot->bc_truth == 0) {
      // A truth tree with no junctions cannot anchor a recovery fraction;
      // treat a junction-free prediction as full recovery and anything else
      // as the raw excess count.
      c.slot->bc_ratio = double(std::max<std::size_t>(c.slot->bc_pred, 1)) /
                         double(std::max<std::size_t>(c.slot->bc_truth, 1));
      detail::note(&out.conventions,
                   std::string("abundance_ratios: truth tree for ") + c.name +
                       " has no bifurcations, ratio denominator clamped to 1");
    } else {
      c.slot->bc_ratio = double(c.slot->bc_pred) / double(c.slot->bc_truth);
    }
  }
  return out;
}

// --- training losses ----------------------------------------------------------

namespace detail {

// One class of the level-weighted soft-dice loss.  The truth is split into the
// cardinal level and the per-level shells ΔT^i = T^i − T^{i−1}; each shell gets
// a soft-dice term weighted by V(T⁰)/V(ΔT^i) (voxel counts), so sparse distal
// shells count as much as the bulky trunk.  Terms use Σp·t / Σ(p+t) with no
// smoothing epsilon; an empty shell is skipped and flagged rather than padded.
inline double weighted_dice_class_loss(const VoxelGrid& prob, const BranchLevels& levels,
                                       const char* class_name,
                                       std::vector<std::string>* conventions) {
  for (const auto& l : levels.levels) require_same_geometry(prob, l, "weighted_dice_loss");

  double num[4] = {0, 0, 0, 0};     // Σ p_v over each shell
  std::size_t cnt[4] = {0, 0, 0, 0};  // Σ t_v == voxel count of each shell
  for (std::size_t i = 0; i < prob.size(); ++i) {
    int shell = -1;
    for (int k = 0; k < 4; ++k) {
      if (levels.levels[std::size_t(k)].data[i]) {
        shell = k;
        break;
      }
    }
    if (shell < 0) continue;
    num[shell] += prob.data[i];
    cnt[shell] += 1;
  }

  auto term = [&](int k) {
    const double den = num[k] + double(cnt[k]);
    return den > 0.0 ? num[k] / den : 0.0;
  };

  double total = term(0);
  if (cnt[0] == 0) {
    note(conventions, std::string("weighted_dice_loss: empty cardinal level for ") + class_name +
                          ", all level weights are zero");
  }
  for (int k = 1; k < 4; ++k) {
    if (cnt[k] == 0) {
      note(conventions, std::string("weighted_dice_loss: empty level shell ") +
                            std::to_string(k) + " for " + class_name + ", term skipped");
      continue;
    }
    total += (double(cnt[0]) / double(cnt[k])) * term(k);
  }
  return -total;
}

}  // namespace detail

// The per-level weights used by the weighted dice loss: 1 for the cardinal
// level, V(T⁰)/V(ΔT^i) for each shell (0 when the shell is empty).  Exposed so
// callers can audit the balancing directly.
inline std::array<double, 4> level_weights(const BranchLevels& levels) {
  std::size_t cnt[4] = {0, 0, 0, 0};
  const std::size_t n = levels.levels[0].size();
  for (std::size_t i = 0; i < n; ++i) {
    for (int k = 0; k < 4; ++k) {
      if (levels.levels[std::size_t(k)].data[i]) {
        cnt[k] += 1;
        break;
      }
    }
  }
  std::array<double, 4> w{1.0, 0.0, 0.0, 0.0};
  for (int k = 1; k < 4; ++k) {
    if (cnt[k] > 0) w[std::size_t(k)] = double(cnt[0]) / double(cnt[k]);
  }
  return w;
}

// Level-weighted soft-dice loss, computed per class and summed.  More negative
// is better; a perfect hard prediction scores −0.5·(1 + Σ V(T⁰)/V(ΔT^i)) per
// class, an all-zero prediction scores 0.
inline double weighted_dice_loss(const ProbabilityMap& pred, const BranchLevels& artery_levels,
                                 const BranchLevels& vein_levels,
                                 std::vector<std::string>* conventions = nullptr) {
  return detail::weighted_dice_class_loss(pred.prob_artery, artery_levels, "artery", conventions) +
         detail::weighted_dice_class_loss(pred.prob_vein, vein_levels, "vein", conventions);
}

// Soft artery/vein cross-talk: probability mass placed on the opposite class,
// normalised by total predicted mass plus total truth volume.  For hard
// predictions this reduces to mcs() exactly.
inline double overlap_loss(const ProbabilityMap& pred, const LabelMask& truth,
                           std::vector<std::string>* conventions = nullptr) {
  require_same_geometry(pred.prob_artery, truth, "overlap_loss");
  require_same_geometry(pred.prob_vein, truth, "overlap_loss");
  double cross = 0.0, mass = 0.0;
  std::size_t labelled = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const double pa = pred.prob_artery.data[i], pv = pred.prob_vein.data[i];
    const std::uint8_t t = truth.data[i];
    cross += pa * (t == kVein) + pv * (t == kArtery);
    mass += pa + pv;
    labelled += (t == kArtery) + (t == kVein);
  }
  const double den = mass + double(labelled);
  if (den == 0.0) {
    detail::note(conventions, "overlap_loss: no predicted mass and no labelled truth, reported as 0");
    return 0.0;
  }
  return cross / den;
}

// Full training objective: level-weighted dice plus cross-class overlap.
inline double total_loss(const ProbabilityMap& pred, const BranchLevels& artery_levels,
                         const BranchLevels& vein_levels, const LabelMask& truth,
                         std::vector<std::string>* conventions = nullptr) {
  return weighted_dice_loss(pred, artery_levels, vein_levels, conventions) +
         overlap_loss(pred, truth, conventions);
}

// --- report assembly -----------------------------------------------------------

// One evaluated case: a hard prediction (plus the soft map it came from, when
// available), the annotated truth, and the truth's per-class level split.
struct EvalPair {
  LabelMask pred;
  std::optional<ProbabilityMap> pred_prob;
  LabelMask truth;
  BranchLevels truth_levels_artery;
  BranchLevels truth_levels_vein;
};

struct MetricsReport {
  double dsc_whole_artery = 0.0, dsc_whole_vein = 0.0;
  double dsc_intra_artery = 0.0, dsc_intra_vein = 0.0;
  double sen = 0.0;
  double mcs = 0.0;
  double hd95_mm = 0.0;  // NaN when a mask is empty and the distance is undefined
  double bc_ratio_artery = 0.0, bc_ratio_vein = 0.0;
  double sl_ratio_artery = 0.0, sl_ratio_vein = 0.0;
  std::size_t bc_pred_artery = 0, bc_truth_artery = 0, bc_pred_vein = 0, bc_truth_vein = 0;
  std::size_t sl_pred_artery = 0, sl_truth_artery = 0, sl_pred_vein = 0, sl_truth_vein = 0;
  double loss_dsc = 0.0, loss_overlap = 0.0, loss_total = 0.0;
  std::vector<std::string> conventions;
};

namespace detail {

inline LabelMask select_class(const LabelMask& m, std::uint8_t cls) {
  LabelMask out = LabelMask::like(m);
  for (std::size_t i = 0; i < m.size(); ++i) out.data[i] = (m.data[i] == cls) ? cls : 0;
  return out;
}

inline LabelMask select_nonzero(const LabelMask& m) {
  LabelMask out = LabelMask::like(m);
  for (std::size_t i = 0; i < m.size(); ++i) out.data[i] = (m.data[i] != 0);
  return out;
}

// Drop every voxel that belongs to the truth's cardinal (in-heart) level.
// What remains of a class is its tree beyond the heart — the part the
// per-level scores call "intrapulmonary".
inline LabelMask strip_cardinal(const LabelMask& m, const LabelMask& cardinal) {
  LabelMask out = m;
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (cardinal.data[i]) out.data[i] = 0;
  }
  return out;
}

}  // namespace detail

// Every score the suite defines, computed on one case.  Scores that need a
// soft prediction fall back to the hard labels as 0/1 probabilities when no
// probability map is attached.
inline MetricsReport evaluate_pair(const EvalPair& ep) {
  require_same_geometry(ep.pred, ep.truth, "evaluate_pair");

  MetricsReport r;
  auto* conv = &r.conventions;

  const LabelMask pa = detail::select_class(ep.pred, kArtery);
  const LabelMask pv = detail::select_class(ep.pred, kVein);
  const LabelMask ta = detail::select_class(ep.truth, kArtery);
  const LabelMask tv = detail::select_class(ep.truth, kVein);

  r.dsc_whole_artery = dice(pa, ta);
  r.dsc_whole_vein = dice(pv, tv);

  const LabelMask& card_a = ep.truth_levels_artery.levels[0];
  const LabelMask& card_v = ep.truth_levels_vein.levels[0];
  require_same_geometry(ep.truth, card_a, "evaluate_pair");
  require_same_geometry(ep.truth, card_v, "evaluate_pair");
  r.dsc_intra_artery = dice(detail::strip_cardinal(pa, card_a), detail::strip_cardinal(ta, card_a));
  r.dsc_intra_vein = dice(detail::strip_cardinal(pv, card_v), detail::strip_cardinal(tv, card_v));
  detail::note(conv,
               "dsc_intra: both masks restricted to the complement of the truth cardinal level");

  const LabelMask pu = detail::select_nonzero(ep.pred);
  const LabelMask tu = detail::select_nonzero(ep.truth);
  r.sen = sensitivity(pu, tu, conv);
  r.mcs = mcs(ep.pred, ep.truth, conv);

  if (detail::count_nonzero(pu) == 0 || detail::count_nonzero(tu) == 0) {
    r.hd95_mm = std::numeric_limits<double>::quiet_NaN();
    detail::note(conv, "hd95: undefined for an empty mask, reported as null");
  } else {
    r.hd95_mm = hd95(pu, tu, ep.truth.spacing);
  }

  AbundanceResult ab =
      abundance_ratios(ep.pred, ep.truth, ep.truth_levels_artery, ep.truth_levels_vein);
  r.bc_ratio_artery = ab.artery.bc_ratio;
  r.bc_ratio_vein = ab.vein.bc_ratio;
  r.sl_ratio_artery = ab.artery.sl_ratio;
  r.sl_ratio_vein = ab.vein.sl_ratio;
  r.bc_pred_artery = ab.artery.bc_pred;
  r.bc_truth_artery = ab.artery.bc_truth;
  r.bc_pred_vein = ab.vein.bc_pred;
  r.bc_truth_vein = ab.vein.bc_truth;
  r.sl_pred_artery = ab.artery.sl_pred;
  r.sl_truth_artery = ab.artery.sl_truth;
  r.sl_pred_vein = ab.vein.sl_pred;
  r.sl_truth_vein = ab.vein.sl_truth;
  for (auto& c : ab.conventions) r.conventions.push_back(std::move(c));

  const ProbabilityMap prob = ep.pred_prob ? *ep.pred_prob : to_probability(ep.pred);
  r.loss_dsc = weighted_dice_loss(prob, ep.truth_levels_artery, ep.truth_levels_vein, conv);
  r.loss_overlap = overlap_loss(prob, ep.truth, conv);
  r.loss_total = r.loss_dsc + r.loss_overlap;

  return r;
}

}  // namespace vasq
