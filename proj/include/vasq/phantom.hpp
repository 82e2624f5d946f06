#pragma once

// Synthetic vascular phantoms with analytic ground truth. A deterministic
// binary tree is grown in canonical coordinates, placed twice into a chest
// scene (the vein tree is the artery tree shifted by a whole-voxel offset,
// so the two trees run close together without touching and their voxel
// masks are exactly congruent), and rasterized as capsules over ellipsoidal
// lung/heart/body compartments. The per-segment geometry is kept alongside
// the voxel data so topology, centerline length, and branch-level
// assignments have closed-form answers.
//
// Also houses the contrast-to-non-contrast intensity remap and the synthetic
// cohort generator that plants a known linear model for the statistics
// oracle.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "vasq/core.hpp"
#include "vasq/distance.hpp"
#include "vasq/grid.hpp"
#include "vasq/stats.hpp"
#include "vasq/tree.hpp"

namespace vasq {

// --- tree generation ----------------------------------------------------------

struct TreeSpec {
  int generations = 5;        // segment generations; 2^generations - 1 segments
  double root_radius = 8.0;   // mm
  double radius_decay = 0.77;  // per generation
  double branch_length = 32.0;  // mm, generation-0 segment
  double length_decay = 0.72;   // per generation
  double branch_angle = 35.0;  // degrees between a child and its parent
  std::uint64_t rng_seed = 0;
  double jitter = 0.0;  // fraction of angle/length randomized, in [0, 0.5]
};

struct TreeSegment {
  Vec3 p0, p1;         // mm; p0 is the parent-side end
  double radius = 0.0;  // mm
  int generation = 0;   // 0 = root segment
  int parent = -1;      // segment index, -1 for the root
};

// Breadth-first segment list: generation g occupies [2^g - 1, 2^{g+1} - 1).
struct GeometricTree {
  std::vector<TreeSegment> segments;
  double total_length_mm = 0.0;
  int generations = 0;
};

namespace detail {

inline void validate_spec(const TreeSpec& s) {
  std::ostringstream os;
  if (s.generations < 1)
    os << "generations must be >= 1, got " << s.generations;
  else if (s.root_radius <= 0.0)
    os << "root_radius must be positive, got " << s.root_radius;
  else if (s.radius_decay <= 0.0 || s.radius_decay >= 1.0)
    os << "radius_decay must lie in (0,1), got " << s.radius_decay;
  else if (s.branch_length <= 0.0)
    os << "branch_length must be positive, got " << s.branch_length;
  else if (s.length_decay <= 0.0 || s.length_decay >= 1.0)
    os << "length_decay must lie in (0,1), got " << s.length_decay;
  else if (s.branch_angle <= 0.0 || s.branch_angle >= 90.0)
    os << "branch_angle must lie in (0,90) degrees, got " << s.branch_angle;
  else if (s.jitter < 0.0 || s.jitter > 0.5)
    os << "jitter must lie in [0, 0.5], got " << s.jitter;
  if (os.tellp() > 0) throw validation_error("tree spec: " + os.str());
}

// Rotate v about the unit axis k by angle (Rodrigues).
inline Vec3 rotate_about(const Vec3& v, const Vec3& k, double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  return v * c + k.cross(v) * s + k * (k.dot(v) * (1.0 - c));
}

}  // namespace detail

// Deterministic recursive binary tree in canonical coordinates: the root
// grows from the origin along +z, children fan out at +-branch_angle, and
// the branching plane turns a quarter turn every generation so the tree
// fills space instead of a sheet. Jitter perturbs each segment's length and
// branching angle by its own seeded stream, so a tree is a pure function of
// its spec.
inline GeometricTree generate_tree(const TreeSpec& spec) {
  detail::validate_spec(spec);

  GeometricTree tree;
  tree.generations = spec.generations;
  const std::size_t count = (std::size_t(1) << spec.generations) - 1;
  tree.segments.reserve(count);

  struct Frame {
    Vec3 dir, plane_normal;
  };
  std::vector<Frame> frames(count);

  auto wobble = [&](std::size_t segment, int which) {
    if (spec.jitter == 0.0) return 0.0;
    SplitMix64 g(mix_seed(spec.rng_seed, segment * 2 + std::uint64_t(which)));
    const double u = double(g() >> 11) * 0x1.0p-53;
    return spec.jitter * (2.0 * u - 1.0);
  };

  for (std::size_t i = 0; i < count; ++i) {
    TreeSegment seg;
    const int g = int(std::floor(std::log2(double(i) + 1.0)));
    seg.generation = g;
    seg.radius = spec.root_radius * std::pow(spec.radius_decay, g);
    const double length =
        spec.branch_length * std::pow(spec.length_decay, g) * (1.0 + wobble(i, 0));

    if (i == 0) {
      seg.parent = -1;
      seg.p0 = Vec3{0, 0, 0};
      frames[0] = {Vec3{0, 0, 1}, Vec3{1, 0, 0}};
    } else {
      seg.parent = int((i - 1) / 2);
      const Frame& pf = frames[std::size_t(seg.parent)];
      seg.p0 = tree.segments[std::size_t(seg.parent)].p1;
      const double sign = (i % 2 == 1) ? 1.0 : -1.0;
      const double angle =
          spec.branch_angle * std::numbers::pi / 180.0 * (1.0 + wobble(i, 1)) * sign;
      const Vec3 dir = detail::rotate_about(pf.dir, pf.plane_normal, angle).normalized();
      frames[i] = {dir, dir.cross(pf.plane_normal).normalized()};
    }
    seg.p1 = seg.p0 + frames[i].dir * length;
    tree.total_length_mm += length;
    tree.segments.push_back(seg);
  }
  return tree;
}

// --- scene layout and rasterization ---------------------------------------------

// Chest scene: ellipsoidal body/lung/heart compartments and the artery tree's
// pose. Everything is in mm; the defaults fill a 128 mm cube and keep the two
// trees disjoint for the default TreeSpec. The HU palette follows standard
// tissue values; the vessel value is the contrast-enhanced regime.
struct PhantomLayout {
  Index3 dims{128, 128, 128};
  std::array<double, 3> spacing{1.0, 1.0, 1.0};
  std::array<double, 3> origin{0.0, 0.0, 0.0};

  Vec3 artery_root{49.0, 78.0, 10.0};
  Vec3 artery_direction{-0.22, 0.0, 1.0};
  double artery_roll = 0.0;    // degrees about the root axis, before tilting
  Vec3 vein_offset{30.0, -30.0, 0.0};  // vein tree = artery tree + offset; keep
                                       // it on the voxel lattice so the two
                                       // class masks stay exactly congruent

  double vessel_hu = 300.0;
  double parenchyma_hu = -850.0;
  double soft_tissue_hu = 40.0;  // heart and mediastinum
  double air_hu = -1000.0;

  Vec3 body_center{63.5, 63.5, 66.0}, body_radii{62.0, 58.0, 64.0};
  Vec3 lung_center{63.5, 63.5, 90.0}, lung_radii{56.0, 52.0, 34.0};
  Vec3 heart_center{63.5, 63.5, 16.0}, heart_radii{27.0, 25.0, 14.0};
};

// Exact per-class topology and the per-branch generation labels. Both branch
// counting conventions are recorded: segment_count counts the segments of a
// tree with `generations` levels (2^G - 1), junction_count counts the nodes
// where a parent splits (2^{G-1} - 1), and branching_depth is the number of
// splitting rounds below the root, so junction_count == 2^branching_depth - 1.
struct AnalyticTopology {
  std::size_t segment_count = 0;
  std::size_t junction_count = 0;
  int branching_depth = 0;
  double total_length_mm = 0.0;
  int first_lung_generation = -1;  // generation of the first branch whose
                                   // midpoint voxel lies inside the lung
  std::vector<int> segment_generations;
};

struct PhantomCase {
  VoxelGrid image;  // HU
  LabelMask truth;  // kArtery / kVein
  BranchLevels levels_artery, levels_vein;
  LabelMask lung_mask, heart_mask;
  std::vector<TreeSegment> artery_segments, vein_segments;  // placed, mm
  AnalyticTopology analytic_artery, analytic_vein;
  TreeSpec spec;  // echoed generator inputs, for manifests
  PhantomLayout layout;
};

namespace detail {

// Rigid placement: roll the canonical tree about its own +z axis, rotate
// that axis onto `direction`, then translate the origin to `root`.
inline std::vector<TreeSegment> place_tree(const GeometricTree& tree, const Vec3& root,
                                           const Vec3& direction, double roll_deg = 0.0) {
  const Vec3 d = direction.normalized();
  const Vec3 z{0, 0, 1};
  Vec3 axis = z.cross(d);
  const double s = axis.norm(), c = z.dot(d);
  const double roll = roll_deg * std::numbers::pi / 180.0;
  std::vector<TreeSegment> placed = tree.segments;
  auto map = [&](Vec3 p) {
    p = rotate_about(p, z, roll);
    if (s < 1e-12) return c > 0 ? p : Vec3{p.x, -p.y, -p.z};  // parallel cases
    return rotate_about(p, axis / s, std::atan2(s, c));
  };
  for (auto& seg : placed) {
    seg.p0 = map(seg.p0) + root;
    seg.p1 = map(seg.p1) + root;
  }
  return placed;
}

inline std::vector<TreeSegment> shift_tree(const std::vector<TreeSegment>& segments,
                                           const Vec3& offset) {
  std::vector<TreeSegment> out = segments;
  for (auto& seg : out) {
    seg.p0 = seg.p0 + offset;
    seg.p1 = seg.p1 + offset;
  }
  return out;
}

inline double point_segment_dist2(const Vec3& p, const Vec3& a, const Vec3& b) {
  const Vec3 ab = b - a;
  const double len2 = ab.dot(ab);
  double t = len2 > 0.0 ? (p - a).dot(ab) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const Vec3 q = a + ab * t;
  const Vec3 d = p - q;
  return d.dot(d);
}

inline bool inside_ellipsoid(const Vec3& p, const Vec3& center, const Vec3& radii) {
  const double x = (p.x - center.x) / radii.x;
  const double y = (p.y - center.y) / radii.y;
  const double z = (p.z - center.z) / radii.z;
  return x * x + y * y + z * z <= 1.0;
}

// The level a branch of generation g belongs to once outside the heart:
// generations 1-2 are the hilar level, 3-5 the segmental level, deeper
// branches the peripheral level. The short extra-cardiac tail of the root
// joins the hilar level.
inline int level_of_generation(int g) { return g <= 2 ? 1 : g <= 5 ? 2 : 3; }

}  // namespace detail

// Rasterize one geometric tree (and its half-turn copy, the vein) into a
// phantom case. A voxel belongs to a vessel iff its center lies inside a
// capsule: within `radius` of the segment, hemispherical caps included.
// Throws when a capsule leaves the volume or the two class masks collide:
// silent clipping or overlap would falsify the analytic ground truth.
inline PhantomCase rasterize(const GeometricTree& tree, const PhantomLayout& layout = {}) {
  PhantomCase out;
  out.layout = layout;
  const Index3 d = layout.dims;
  for (int k = 0; k < 3; ++k)
    if (d[k] < 2) throw validation_error("phantom: dims must be at least 2 per axis");

  out.image = VoxelGrid::zeros(d, layout.spacing, layout.origin);
  out.truth = LabelMask::like(out.image);
  out.lung_mask = LabelMask::like(out.image);
  out.heart_mask = LabelMask::like(out.image);

  auto position = [&](int x, int y, int z) {
    return Vec3{layout.origin[0] + x * layout.spacing[0], layout.origin[1] + y * layout.spacing[1],
                layout.origin[2] + z * layout.spacing[2]};
  };

  // compartments, painted inside-out: air, body, lung, heart
  parallel_for(std::size_t(d[2]), [&](std::size_t z0, std::size_t z1) {
    for (int z = int(z0); z < int(z1); ++z)
      for (int y = 0; y < d[1]; ++y)
        for (int x = 0; x < d[0]; ++x) {
          const Vec3 p = position(x, y, z);
          float hu = float(layout.air_hu);
          if (detail::inside_ellipsoid(p, layout.body_center, layout.body_radii))
            hu = float(layout.soft_tissue_hu);
          if (detail::inside_ellipsoid(p, layout.lung_center, layout.lung_radii)) {
            hu = float(layout.parenchyma_hu);
            out.lung_mask.at(x, y, z) = 1;
          }
          if (detail::inside_ellipsoid(p, layout.heart_center, layout.heart_radii)) {
            hu = float(layout.soft_tissue_hu);
            out.heart_mask.at(x, y, z) = 1;
          }
          out.image.at(x, y, z) = hu;
        }
  });

  out.artery_segments =
      detail::place_tree(tree, layout.artery_root, layout.artery_direction, layout.artery_roll);
  out.vein_segments = detail::shift_tree(out.artery_segments, layout.vein_offset);

  // capsule rasterization, with the nearest-centerline generation kept per
  // voxel to drive the analytic level assignment
  const std::size_t n = out.truth.size();
  std::vector<float> best_d2(n);
  std::vector<std::int8_t> best_gen(n);
  std::size_t collisions = 0;

  const struct {
    const std::vector<TreeSegment>* segments;
    std::uint8_t cls;
    const char* name;
    BranchLevels* levels;
    AnalyticTopology* analytic;
  } classes[] = {{&out.artery_segments, kArtery, "artery", &out.levels_artery,
                  &out.analytic_artery},
                 {&out.vein_segments, kVein, "vein", &out.levels_vein, &out.analytic_vein}};

  for (const auto& c : classes) {
    std::fill(best_d2.begin(), best_d2.end(), std::numeric_limits<float>::infinity());
    std::fill(best_gen.begin(), best_gen.end(), std::int8_t(0));

    for (std::size_t si = 0; si < c.segments->size(); ++si) {
      const TreeSegment& seg = (*c.segments)[si];
      if (seg.radius <= 0.0) continue;

      Index3 lo, hi;
      for (int k = 0; k < 3; ++k) {
        const double a = k == 0 ? seg.p0.x : k == 1 ? seg.p0.y : seg.p0.z;
        const double b = k == 0 ? seg.p1.x : k == 1 ? seg.p1.y : seg.p1.z;
        const double min_mm = std::min(a, b) - seg.radius;
        const double max_mm = std::max(a, b) + seg.radius;
        if (min_mm < layout.origin[k] ||
            max_mm > layout.origin[k] + (d[k] - 1) * layout.spacing[k]) {
          std::ostringstream os;
          os << "phantom: " << c.name << " segment " << si << " (generation " << seg.generation
             << ") leaves the volume on axis " << "xyz"[k]
             << "; shrink the tree or move its root";
          throw validation_error(os.str());
        }
        lo[k] = int(std::floor((min_mm - layout.origin[k]) / layout.spacing[k]));
        hi[k] = int(std::ceil((max_mm - layout.origin[k]) / layout.spacing[k]));
      }

      const double r2 = seg.radius * seg.radius;
      for (int z = lo[2]; z <= hi[2]; ++z)
        for (int y = lo[1]; y <= hi[1]; ++y)
          for (int x = lo[0]; x <= hi[0]; ++x) {
            const double d2 = detail::point_segment_dist2(position(x, y, z), seg.p0, seg.p1);
            if (d2 > r2) continue;
            const std::size_t i = out.truth.index(x, y, z);
            if (float(d2) < best_d2[i]) {
              best_d2[i] = float(d2);
              best_gen[i] = std::int8_t(seg.generation);
            }
            if (out.truth.data[i] == 0) {
              out.truth.data[i] = c.cls;
              out.image.data[i] = float(layout.vessel_hu);
            } else if (out.truth.data[i] != c.cls) {
              ++collisions;
            }
          }
    }

    for (auto& level : c.levels->levels) level = LabelMask::like(out.truth);
    for (std::size_t i = 0; i < n; ++i) {
      if (out.truth.data[i] != c.cls) continue;
      const int level = out.heart_mask.data[i]
                            ? 0
                            : detail::level_of_generation(int(best_gen[i]));
      for (int k = level; k < 4; ++k) c.levels->levels[std::size_t(k)].data[i] = c.cls;
    }

    AnalyticTopology& a = *c.analytic;
    a.segment_count = c.segments->size();
    a.branching_depth = tree.generations - 1;
    a.junction_count = (std::size_t(1) << a.branching_depth) - 1;
    a.total_length_mm = 0.0;
    for (const auto& seg : *c.segments) {
      a.total_length_mm += (seg.p1 - seg.p0).norm();
      a.segment_generations.push_back(seg.generation);
      const Vec3 mid = (seg.p0 + seg.p1) * 0.5;
      const int mx = int(std::lround((mid.x - layout.origin[0]) / layout.spacing[0]));
      const int my = int(std::lround((mid.y - layout.origin[1]) / layout.spacing[1]));
      const int mz = int(std::lround((mid.z - layout.origin[2]) / layout.spacing[2]));
      if (out.lung_mask.inside(mx, my, mz) && out.lung_mask.at(mx, my, mz) &&
          (a.first_lung_generation < 0 || seg.generation < a.first_lung_generation))
        a.first_lung_generation = seg.generation;
    }
  }

  if (collisions > 0) {
    std::ostringstream os;
    os << "phantom: artery and vein masks overlap at " << collisions
       << " voxel(s); adjust the layout so the trees stay disjoint";
    throw validation_error(os.str());
  }
  return out;
}

inline PhantomCase generate_phantom(const TreeSpec& spec, const PhantomLayout& layout = {}) {
  PhantomCase out = rasterize(generate_tree(spec), layout);
  out.spec = spec;
  return out;
}

// --- intensity regimes ----------------------------------------------------------

// Remap the contrast-enhanced vessel interiors (~300 HU) to the non-contrast
// regime: 50 HU in the core, ramping to 60 HU within the last millimetre
// before the vessel wall. Purely geometric — it reads only the truth mask —
// so non-vessel voxels are untouched and re-application is a no-op.
inline PhantomCase ctpa_to_ncct(const PhantomCase& c) {
  PhantomCase out = c;
  LabelMask outside = LabelMask::like(c.truth);
  for (std::size_t i = 0; i < c.truth.size(); ++i) outside.data[i] = c.truth.data[i] == 0;
  const DistanceField depth = distance_to_sites(outside);
  for (std::size_t i = 0; i < c.truth.size(); ++i) {
    if (!c.truth.data[i]) continue;
    const double d_mm = double(depth.dist_mm.data[i]);
    out.image.data[i] = float(50.0 + 10.0 * std::max(0.0, 1.0 - d_mm));
  }
  out.image.meta["intensity_regime"] = "ncct";
  return out;
}

// --- synthetic cohorts ------------------------------------------------------------

// Generative model for cohort tables: sex is a fair coin, age is uniform over
// [30, 80), lung volume is normal per sex, and the artery skeleton length
// follows the planted linear model slpa = b0 + b_volume*volume + b_sex*sex +
// b_age*age + eps. The companion indices are fixed multiples so every table
// column is populated.
struct CohortModel {
  double beta0 = 3200.0;       // cm
  double beta_volume = 420.0;  // cm per liter
  double beta_sex = -918.86;   // cm, male = 1
  double beta_age = -6.5;      // cm per year
  double noise_sd = 0.0;       // eps, cm
  double lung_mean_male = 6.1, lung_mean_female = 4.8, lung_sd = 0.6;  // liters
  double vein_scale = 0.9;     // slpv = vein_scale * slpa
  double bc_per_cm = 2.4;      // bifurcations per cm of skeleton
  std::uint64_t seed = 0;
};

inline std::vector<SubjectRecord> generate_cohort(std::size_t n, const CohortModel& m) {
  std::vector<SubjectRecord> rows;
  rows.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    SplitMix64 g(mix_seed(m.seed, i));
    auto uniform01 = [&] { return double(g() >> 11) * 0x1.0p-53; };
    auto gaussian = [&] {
      double u1 = uniform01();
      while (u1 <= 0.0) u1 = uniform01();
      const double u2 = uniform01();
      return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    };

    SubjectRecord r;
    char id[32];
    std::snprintf(id, sizeof id, "subj-%05zu", i);
    r.id = id;
    r.sex = uniform01() < 0.5 ? 1 : 0;
    r.age = 30.0 + 50.0 * uniform01();
    r.lung_volume = (r.sex ? m.lung_mean_male : m.lung_mean_female) + m.lung_sd * gaussian();
    const double eps = m.noise_sd > 0.0 ? m.noise_sd * gaussian() : 0.0;
    r.slpa = m.beta0 + m.beta_volume * r.lung_volume + m.beta_sex * r.sex + m.beta_age * r.age +
             eps;
    r.slpv = m.vein_scale * r.slpa;
    r.bcpa = double(std::llround(r.slpa * m.bc_per_cm));
    r.bcpv = double(std::llround(r.slpv * m.bc_per_cm));

    if (r.lung_volume <= 0.0 || r.slpa < 0.0 || r.slpv < 0.0 || r.bcpa < 0.0 || r.bcpv < 0.0) {
      std::ostringstream os;
      os << "cohort model: subject " << i
         << " drew a negative volume or abundance; the planted coefficients leave no headroom";
      throw validation_error(os.str());
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace vasq
