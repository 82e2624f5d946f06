#pragma once

// The staged segmentation pipeline.  Each stage sees the CT, a vesselness
// channel, and the previous stage's output smeared by a small shared smoothing
// kernel (the "transmitted prior").  Stage segmenters are pluggable; the
// classical backend below is a deterministic seeds-and-growth stand-in that
// exercises the same plumbing a learned stage would.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "vasq/core.hpp"
#include "vasq/enhance.hpp"
#include "vasq/grid.hpp"
#include "vasq/morphology.hpp"

namespace vasq {

// --- prior transmission --------------------------------------------------------

// Fixed 3×3×3 smoothing kernel shared by every stage and both classes.  Built
// as a separable Gaussian product, so the weights sum to 1 and are symmetric
// under any axis permutation.
struct TransmissionKernel {
  std::array<double, 27> w{};

  static TransmissionKernel gaussian(double sigma_vox = 1.0) {
    if (!(sigma_vox > 0)) throw validation_error("transmission kernel: sigma must be positive");
    const double side = std::exp(-0.5 / (sigma_vox * sigma_vox));
    const std::array<double, 3> g{side / (1.0 + 2.0 * side), 1.0 / (1.0 + 2.0 * side),
                                  side / (1.0 + 2.0 * side)};
    TransmissionKernel k;
    for (int dz = 0; dz < 3; ++dz)
      for (int dy = 0; dy < 3; ++dy)
        for (int dx = 0; dx < 3; ++dx)
          k.w[std::size_t(dx + 3 * dy + 9 * dz)] =
              g[std::size_t(dx)] * g[std::size_t(dy)] * g[std::size_t(dz)];
    return k;
  }

  double at(int dx, int dy, int dz) const {
    return w[std::size_t((dx + 1) + 3 * (dy + 1) + 9 * (dz + 1))];
  }
};

namespace detail {

inline VoxelGrid convolve_3x3x3(const VoxelGrid& in, const TransmissionKernel& k) {
  VoxelGrid out = VoxelGrid::like(in);
  const Index3 d = in.dims;
  parallel_for(std::size_t(d[2]), [&](std::size_t z0, std::size_t z1) {
    for (int z = int(z0); z < int(z1); ++z)
      for (int y = 0; y < d[1]; ++y)
        for (int x = 0; x < d[0]; ++x) {
          double acc = 0.0;
          for (int dz = -1; dz <= 1; ++dz)
            for (int dy = -1; dy <= 1; ++dy)
              for (int dx = -1; dx <= 1; ++dx) {
                const int sx = std::clamp(x + dx, 0, d[0] - 1);
                const int sy = std::clamp(y + dy, 0, d[1] - 1);
                const int sz = std::clamp(z + dz, 0, d[2] - 1);
                acc += k.at(dx, dy, dz) * in.at(sx, sy, sz);
              }
          out.at(x, y, z) = float(acc);
        }
  });
  return out;
}

}  // namespace detail

// Smooth both class channels of a prior map with the shared kernel.  A convex
// combination of in-range values, so the output stays in [0,1] and the global
// maximum never increases; boundaries clamp to the edge voxel.
inline ProbabilityMap transmit_prior(const ProbabilityMap& prev, const TransmissionKernel& kernel) {
  require_same_geometry(prev.prob_artery, prev.prob_vein, "transmit_prior");
  ProbabilityMap out;
  out.prob_artery = detail::convolve_3x3x3(prev.prob_artery, kernel);
  out.prob_vein = detail::convolve_3x3x3(prev.prob_vein, kernel);
  return out;
}

// --- stage input assembly ---------------------------------------------------------

// The fixed channel stack a stage consumes: windowed CT, vesselness, and the
// two transmitted prior channels.  Stage 0 has no predecessor, so its priors
// are identically zero.
struct StageInput {
  VoxelGrid ct;
  VoxelGrid vesselness;
  VoxelGrid prior_artery;
  VoxelGrid prior_vein;
  int stage = 0;
};

inline StageInput assemble_input(const VoxelGrid& ct, const VoxelGrid& vesselness,
                                 const VoxelGrid& prior_artery, const VoxelGrid& prior_vein,
                                 int stage) {
  if (stage < 0 || stage > 3) {
    throw validation_error("assemble_input: stage index " + std::to_string(stage) +
                           " outside 0..3");
  }
  require_same_geometry(ct, vesselness, "assemble_input");
  require_same_geometry(ct, prior_artery, "assemble_input");
  require_same_geometry(ct, prior_vein, "assemble_input");

  StageInput in;
  in.ct = ct;
  in.vesselness = vesselness;
  in.stage = stage;
  if (stage == 0) {
    in.prior_artery = VoxelGrid::like(ct);
    in.prior_vein = VoxelGrid::like(ct);
  } else {
    in.prior_artery = prior_artery;
    in.prior_vein = prior_vein;
  }
  return in;
}

// --- the cascade -------------------------------------------------------------------

// A stage segmenter maps the assembled input to per-class probabilities of the
// same geometry.  Any callable will do; the classical backend below is one.
using StageSegmenter = std::function<ProbabilityMap(const StageInput&)>;

struct CascadeResult {
  ProbabilityMap output;               // the stage-3 maps
  std::vector<ProbabilityMap> stages;  // all four, for audit
  std::vector<std::string> notes;
};

namespace detail {

inline void check_stage_output(const ProbabilityMap& p, const VoxelGrid& ct, int stage) {
  require_same_geometry(p.prob_artery, ct, "cascade stage output");
  require_same_geometry(p.prob_vein, ct, "cascade stage output");
  for (const VoxelGrid* ch : {&p.prob_artery, &p.prob_vein}) {
    for (float v : ch->data) {
      if (!(v >= 0.0f && v <= 1.0f)) {
        throw validation_error("cascade: stage " + std::to_string(stage) +
                               " emitted probability " + std::to_string(v) + " outside [0,1]");
      }
    }
  }
}

}  // namespace detail

// Run the four stages in order.  Stage i > 0 consumes the transmitted output
// of stage i−1; the history of all stage maps is kept for audit.
inline CascadeResult run_cascade(const VoxelGrid& ct, const VoxelGrid& vesselness,
                                 const std::array<StageSegmenter, 4>& segmenters,
                                 const TransmissionKernel& kernel) {
  require_same_geometry(ct, vesselness, "run_cascade");
  CascadeResult result;
  ProbabilityMap prior;
  prior.prob_artery = VoxelGrid::like(ct);
  prior.prob_vein = VoxelGrid::like(ct);

  for (int stage = 0; stage < 4; ++stage) {
    const StageInput in =
        assemble_input(ct, vesselness, prior.prob_artery, prior.prob_vein, stage);
    ProbabilityMap out = segmenters[std::size_t(stage)](in);
    detail::check_stage_output(out, ct, stage);
    if (stage < 3) prior = transmit_prior(out, kernel);
    result.stages.push_back(std::move(out));
  }
  result.output = result.stages.back();
  return result;
}

// Convenience overload: derive the vesselness channel from the CT with the
// default multiscale filter.
inline CascadeResult run_cascade(const VoxelGrid& ct,
                                 const std::array<StageSegmenter, 4>& segmenters,
                                 const TransmissionKernel& kernel) {
  return run_cascade(ct, frangi_vesselness(ct), segmenters, kernel);
}

// --- classical stage backend ----------------------------------------------------------

// Desk-scale stand-in for a learned stage.  Thresholded vesselness provides
// seeds; each stage grows them through the CT intensity band spanned by its
// seeds; the transmitted priors gate what any stage after the first may touch.
// Artery/vein identity comes from the labelled cardinal seed points (the
// classical workflow's operator annotation) and, for components holding
// neither, from the prior channels.
struct ClassicalConfig {
  std::array<double, 4> tau{0.30, 0.20, 0.12, 0.08};  // seed thresholds per stage,
                                                      // as fractions of the max response
  double gate = 0.05;      // minimum transmitted prior for admission at stage > 0
  bool prior_gate = true;  // ablation switch for the gate
  // Half-width of the growth intensity band around the seed consensus, in the
  // units of the ct channel (the windowed volume spans [0,1], so 0.015 is
  // about 24 HU of the full window).  A phantom-tuned knob.
  double band_halfwidth = 0.015;
  double kernel_sigma = 1.0;         // shared transmission kernel width, voxels
  std::vector<Index3> artery_seeds;  // cardinal annotations, voxel coordinates
  std::vector<Index3> vein_seeds;
};

inline ProbabilityMap classical_stage_segmenter(const StageInput& in, const ClassicalConfig& cfg,
                                                std::vector<std::string>* notes = nullptr) {
  require_same_geometry(in.ct, in.vesselness, "classical_stage_segmenter");
  require_same_geometry(in.ct, in.prior_artery, "classical_stage_segmenter");
  require_same_geometry(in.ct, in.prior_vein, "classical_stage_segmenter");
  const int stage = in.stage;
  const auto flag = [&](std::string msg) {
    if (notes) notes->push_back("stage " + std::to_string(stage) + ": " + std::move(msg));
  };

  ProbabilityMap empty = ProbabilityMap::zeros_like(in.ct);

  float vmax = 0.0f;
  for (float v : in.vesselness.data) vmax = std::max(vmax, v);
  if (vmax <= 0.0f) {
    flag("no vesselness signal, empty output");
    return empty;
  }

  const auto gate_pass = [&](std::size_t i) {
    if (stage == 0 || !cfg.prior_gate) return true;
    return std::max(in.prior_artery.data[i], in.prior_vein.data[i]) >= float(cfg.gate);
  };

  // Seed candidates: strong vesselness response, subject to the prior gate.
  const double thresh = cfg.tau[std::size_t(stage)] * double(vmax);
  std::vector<std::size_t> pool;
  for (std::size_t i = 0; i < in.vesselness.size(); ++i) {
    if (in.vesselness.data[i] >= thresh && gate_pass(i)) pool.push_back(i);
  }
  if (pool.empty()) {
    flag("no seeds above threshold, empty output");
    return empty;
  }

  // Band: the intensity consensus of the strongest candidates.  Low-threshold
  // stages pick up a halo of near-vessel background responses; taking the
  // median over the top of the pool keeps the band anchored on vessel tissue.
  std::vector<std::size_t> strongest = pool;
  std::sort(strongest.begin(), strongest.end(), [&](std::size_t a, std::size_t b) {
    const float va = in.vesselness.data[a], vb = in.vesselness.data[b];
    return va != vb ? va > vb : a < b;
  });
  strongest.resize(std::min(pool.size(), std::max<std::size_t>(16, pool.size() / 50)));
  std::vector<double> top_hu;
  for (std::size_t i : strongest) top_hu.push_back(in.ct.data[i]);
  std::sort(top_hu.begin(), top_hu.end());
  const double band_mid = top_hu[top_hu.size() / 2];
  const double band_lo = band_mid - cfg.band_halfwidth;
  const double band_hi = band_mid + cfg.band_halfwidth;

  // Seeds obey the band like any other voxel.
  std::vector<std::size_t> seeds;
  for (std::size_t i : pool) {
    const double hu = in.ct.data[i];
    if (hu >= band_lo && hu <= band_hi) seeds.push_back(i);
  }
  if (seeds.empty()) {
    flag("no seeds inside the intensity band, empty output");
    return empty;
  }

  // Face-connected flood from the seeds through the intensity band, still
  // honouring the gate voxel by voxel.
  const Index3 d = in.ct.dims;
  LabelMask accepted = LabelMask::like(in.ct);
  std::vector<std::size_t> frontier = seeds;
  for (std::size_t i : seeds) accepted.data[i] = 1;
  while (!frontier.empty()) {
    const std::size_t cur = frontier.back();
    frontier.pop_back();
    const auto c = accepted.coords(cur);
    const int nb[6][3] = {{c[0] + 1, c[1], c[2]}, {c[0] - 1, c[1], c[2]},
                          {c[0], c[1] + 1, c[2]}, {c[0], c[1] - 1, c[2]},
                          {c[0], c[1], c[2] + 1}, {c[0], c[1], c[2] - 1}};
    for (const auto& q : nb) {
      if (q[0] < 0 || q[0] >= d[0] || q[1] < 0 || q[1] >= d[1] || q[2] < 0 || q[2] >= d[2])
        continue;
      const std::size_t j = accepted.index(q[0], q[1], q[2]);
      if (accepted.data[j]) continue;
      const double hu = in.ct.data[j];
      if (hu < band_lo || hu > band_hi) continue;
      if (!gate_pass(j)) continue;
      accepted.data[j] = 1;
      frontier.push_back(j);
    }
  }

  // Split the accepted region into artery and vein.  A component owning a
  // cardinal seed takes that label; one owning both is divided voxel-wise by
  // the nearer seed; a component with neither is decided by its prior mass,
  // falling back to the nearest cardinal seed when the priors are silent.
  const ComponentLabels comp = connected_components(accepted, Connectivity::Full26);
  const int nc = comp.count;
  std::vector<char> has_a(std::size_t(nc) + 1, 0), has_v(std::size_t(nc) + 1, 0);
  for (const Index3& s : cfg.artery_seeds) {
    if (accepted.inside(s[0], s[1], s[2]))
      has_a[std::size_t(comp.labels.at(s[0], s[1], s[2]))] = 1;
  }
  for (const Index3& s : cfg.vein_seeds) {
    if (accepted.inside(s[0], s[1], s[2]))
      has_v[std::size_t(comp.labels.at(s[0], s[1], s[2]))] = 1;
  }
  std::vector<double> prior_a(std::size_t(nc) + 1, 0.0), prior_v(std::size_t(nc) + 1, 0.0);
  std::vector<double> cx(std::size_t(nc) + 1, 0.0), cy(std::size_t(nc) + 1, 0.0),
      cz(std::size_t(nc) + 1, 0.0);
  std::vector<std::size_t> cn(std::size_t(nc) + 1, 0);
  for (std::size_t i = 0; i < accepted.size(); ++i) {
    const std::size_t lbl = std::size_t(comp.labels.data[i]);
    if (lbl == 0) continue;
    prior_a[lbl] += in.prior_artery.data[i];
    prior_v[lbl] += in.prior_vein.data[i];
    const auto c = accepted.coords(i);
    cx[lbl] += c[0];
    cy[lbl] += c[1];
    cz[lbl] += c[2];
    cn[lbl] += 1;
  }

  const auto nearest_seed_label = [&](double x, double y, double z) -> std::uint8_t {
    double best_a = std::numeric_limits<double>::infinity();
    double best_v = std::numeric_limits<double>::infinity();
    for (const Index3& s : cfg.artery_seeds) {
      const double dx = x - s[0], dy = y - s[1], dz = z - s[2];
      best_a = std::min(best_a, dx * dx + dy * dy + dz * dz);
    }
    for (const Index3& s : cfg.vein_seeds) {
      const double dx = x - s[0], dy = y - s[1], dz = z - s[2];
      best_v = std::min(best_v, dx * dx + dy * dy + dz * dz);
    }
    if (best_a == best_v) return kArtery;  // includes the no-seeds-at-all case
    return best_a < best_v ? kArtery : kVein;
  };

  // 0 = artery, 1 = vein, 2 = voxel-wise by nearer seed.
  std::vector<std::uint8_t> comp_cls(std::size_t(nc) + 1, 0);
  int ambiguous = 0, unlabelled = 0;
  for (int l = 1; l <= nc; ++l) {
    const std::size_t lbl = std::size_t(l);
    if (has_a[lbl] && has_v[lbl]) {
      comp_cls[lbl] = 2;
      ++ambiguous;
    } else if (has_a[lbl]) {
      comp_cls[lbl] = 0;
    } else if (has_v[lbl]) {
      comp_cls[lbl] = 1;
    } else if (prior_a[lbl] != prior_v[lbl]) {
      comp_cls[lbl] = prior_a[lbl] > prior_v[lbl] ? 0 : 1;
    } else {
      comp_cls[lbl] =
          nearest_seed_label(cx[lbl] / double(cn[lbl]), cy[lbl] / double(cn[lbl]),
                             cz[lbl] / double(cn[lbl])) == kArtery
              ? 0
              : 1;
      ++unlabelled;
    }
  }
  if (ambiguous > 0)
    flag(std::to_string(ambiguous) + " component(s) touched both seed labels, split voxel-wise");
  if (unlabelled > 0)
    flag(std::to_string(unlabelled) +
         " component(s) had no seed and no prior mass, labelled by nearest cardinal seed");

  ProbabilityMap hard = ProbabilityMap::zeros_like(in.ct);
  for (std::size_t i = 0; i < accepted.size(); ++i) {
    const std::size_t lbl = std::size_t(comp.labels.data[i]);
    if (lbl == 0) continue;
    std::uint8_t cls = comp_cls[lbl];
    if (cls == 2) {
      const auto c = accepted.coords(i);
      cls = nearest_seed_label(c[0], c[1], c[2]) == kArtery ? 0 : 1;
    }
    (cls == 0 ? hard.prob_artery : hard.prob_vein).data[i] = 1.0f;
  }
  return transmit_prior(hard, TransmissionKernel::gaussian(cfg.kernel_sigma));
}

// Wire four classical stages into the cascade, collecting their flags.
inline CascadeResult run_classical_cascade(const VoxelGrid& ct, const VoxelGrid& vesselness,
                                           const ClassicalConfig& cfg) {
  std::vector<std::string> notes;
  std::array<StageSegmenter, 4> stages;
  for (auto& s : stages) {
    s = [&cfg, &notes](const StageInput& in) {
      return classical_stage_segmenter(in, cfg, &notes);
    };
  }
  CascadeResult result =
      run_cascade(ct, vesselness, stages, TransmissionKernel::gaussian(cfg.kernel_sigma));
  result.notes = std::move(notes);
  return result;
}

inline CascadeResult run_classical_cascade(const VoxelGrid& ct, const ClassicalConfig& cfg) {
  return run_classical_cascade(ct, frangi_vesselness(ct), cfg);
}

}  // namespace vasq
