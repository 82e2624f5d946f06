#pragma once

// Curve skeletonization of vessel masks by topology-preserving thinning.
//
// Six directional subiterations (up/down/north/south/east/west border voxels)
// peel the mask from alternating sides until stable. A voxel may be removed
// only when it is a simple point of the (26, 6) digital picture — removal
// keeps both the object's 26-components and the background's 6-components
// intact — and is not a curve endpoint. Candidates are detected in parallel
// against the frozen pre-subiteration state, then deletions are applied one
// at a time in scan order with the simple/endpoint tests re-evaluated against
// the mutating mask, which makes the result independent of thread count and
// topology preservation a per-deletion argument.

#include <array>
#include <cstdint>
#include <cstdlib>
#include <vector>

#include "vasq/core.hpp"
#include "vasq/grid.hpp"

namespace vasq {

// Sparse skeleton: the source mask's geometry plus the sorted linear indices
// of the centerline voxels (26-connected, unit width).
struct Skeleton {
  Index3 dims{0, 0, 0};
  std::array<double, 3> spacing{1, 1, 1};
  std::array<double, 3> origin{0, 0, 0};
  std::uint8_t label = 0;  // class the skeleton was extracted from
  std::vector<std::size_t> voxels;

  std::array<int, 3> coords(std::size_t i) const {
    int x = int(i % std::size_t(dims[0]));
    int y = int((i / std::size_t(dims[0])) % std::size_t(dims[1]));
    int z = int(i / (std::size_t(dims[0]) * std::size_t(dims[1])));
    return {x, y, z};
  }

  LabelMask to_mask() const {
    LabelMask m = LabelMask::zeros(dims, spacing, origin);
    for (std::size_t i : voxels) m.data[i] = label ? label : 1;
    return m;
  }
};

namespace detail {

// Local indexing of the 3x3x3 neighbourhood: (dx,dy,dz) in {-1,0,1}^3 maps to
// (dx+1) + 3(dy+1) + 9(dz+1); the centre is 13.
struct NeighborhoodTables {
  // 26-adjacency between the 26 non-centre locals
  std::array<std::vector<int>, 27> adj26;
  // 6-adjacency between the 18 face/edge locals
  std::array<std::vector<int>, 27> adj6;
  std::array<bool, 27> in_n18{};
  std::array<bool, 27> is_face{};

  NeighborhoodTables() {
    auto coords = [](int l) { return Index3{l % 3 - 1, (l / 3) % 3 - 1, l / 9 - 1}; };
    for (int l = 0; l < 27; ++l) {
      auto c = coords(l);
      int manhattan = std::abs(c[0]) + std::abs(c[1]) + std::abs(c[2]);
      in_n18[std::size_t(l)] = manhattan >= 1 && manhattan <= 2;
      is_face[std::size_t(l)] = manhattan == 1;
    }
    for (int a = 0; a < 27; ++a)
      for (int b = 0; b < 27; ++b) {
        if (a == b || a == 13 || b == 13) continue;
        auto ca = coords(a), cb = coords(b);
        int dx = std::abs(ca[0] - cb[0]), dy = std::abs(ca[1] - cb[1]),
            dz = std::abs(ca[2] - cb[2]);
        if (dx <= 1 && dy <= 1 && dz <= 1) adj26[std::size_t(a)].push_back(b);
        if (dx + dy + dz == 1 && in_n18[std::size_t(a)] && in_n18[std::size_t(b)])
          adj6[std::size_t(a)].push_back(b);
      }
  }
};

inline const NeighborhoodTables& neighborhood_tables() {
  static const NeighborhoodTables t;
  return t;
}

// Occupancy of the 27 locals around (x,y,z); voxels outside the volume read
// as background.
inline void gather_neighborhood(const std::vector<std::uint8_t>& fg, Index3 dims, int x, int y,
                                int z, std::array<bool, 27>& occ) {
  int l = 0;
  for (int dz = -1; dz <= 1; ++dz)
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx, ++l) {
        int nx = x + dx, ny = y + dy, nz = z + dz;
        occ[std::size_t(l)] =
            nx >= 0 && nx < dims[0] && ny >= 0 && ny < dims[1] && nz >= 0 && nz < dims[2] &&
            fg[std::size_t(nx) +
               std::size_t(dims[0]) * (std::size_t(ny) + std::size_t(dims[1]) * std::size_t(nz))];
      }
}

inline int foreground_neighbor_count(const std::array<bool, 27>& occ) {
  int n = 0;
  for (int l = 0; l < 27; ++l)
    if (l != 13 && occ[std::size_t(l)]) ++n;
  return n;
}

// Simple-point test for (26, 6) pictures: exactly one 26-component of the
// occupied locals, and exactly one 6-component of background N18 locals that
// touches a face neighbour.
inline bool is_simple_point(const std::array<bool, 27>& occ) {
  const auto& t = neighborhood_tables();

  int fg_components = 0;
  std::array<bool, 27> seen{};
  std::array<int, 27> stack;
  for (int s = 0; s < 27; ++s) {
    if (s == 13 || !occ[std::size_t(s)] || seen[std::size_t(s)]) continue;
    if (++fg_components > 1) return false;
    int top = 0;
    stack[std::size_t(top++)] = s;
    seen[std::size_t(s)] = true;
    while (top) {
      int cur = stack[std::size_t(--top)];
      for (int nb : t.adj26[std::size_t(cur)])
        if (occ[std::size_t(nb)] && !seen[std::size_t(nb)]) {
          seen[std::size_t(nb)] = true;
          stack[std::size_t(top++)] = nb;
        }
    }
  }
  if (fg_components != 1) return false;

  int bg_components = 0;
  seen.fill(false);
  for (int s = 0; s < 27; ++s) {
    if (!t.is_face[std::size_t(s)] || occ[std::size_t(s)] || seen[std::size_t(s)]) continue;
    // flood the background component within N18, seeded at a face local
    if (++bg_components > 1) return false;
    int top = 0;
    stack[std::size_t(top++)] = s;
    seen[std::size_t(s)] = true;
    while (top) {
      int cur = stack[std::size_t(--top)];
      for (int nb : t.adj6[std::size_t(cur)])
        if (!occ[std::size_t(nb)] && !seen[std::size_t(nb)]) {
          seen[std::size_t(nb)] = true;
          stack[std::size_t(top++)] = nb;
        }
    }
  }
  return bg_components == 1;
}

}  // namespace detail

inline Skeleton extract_skeleton(const LabelMask& mask, std::uint8_t cls) {
  const Index3 d = mask.dims;
  const std::size_t n = mask.size();
  std::vector<std::uint8_t> fg(n, 0);
  for (std::size_t i = 0; i < n; ++i) fg[i] = mask.data[i] == cls;

  const std::array<Index3, 6> directions{
      {{0, 0, 1}, {0, 0, -1}, {0, 1, 0}, {0, -1, 0}, {1, 0, 0}, {-1, 0, 0}}};

  auto removable = [&](int x, int y, int z) {
    std::array<bool, 27> occ;
    detail::gather_neighborhood(fg, d, x, y, z, occ);
    int neighbors = detail::foreground_neighbor_count(occ);
    if (neighbors <= 1) return false;  // isolated voxel or curve endpoint
    return detail::is_simple_point(occ);
  };

  // background probe that treats out-of-volume as background
  auto bg_at = [&](int x, int y, int z) {
    return !mask.inside(x, y, z) || !fg[mask.index(x, y, z)];
  };

  std::vector<std::uint8_t> candidate(n, 0);
  bool changed = true;
  while (changed) {
    changed = false;
    for (const auto& dir : directions) {
      // Detection against the frozen state; any order of evaluation agrees.
      // Beyond being a border voxel of this subiteration's direction, a
      // candidate must expose background on some orthogonal face: flat caps
      // then erode as concentric rims, in step with the lateral thinning of
      // the shaft they sit on, which keeps tips (and makes erosion depth
      // independent of the subiteration order, so counts survive rotations).
      parallel_for(n, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) {
          candidate[i] = 0;
          if (!fg[i]) continue;
          auto c = mask.coords(i);
          if (!bg_at(c[0] + dir[0], c[1] + dir[1], c[2] + dir[2])) continue;
          bool side_exposed = false;
          for (const auto& o : directions) {
            if (o[0] == dir[0] && o[1] == dir[1] && o[2] == dir[2]) continue;
            if (o[0] == -dir[0] && o[1] == -dir[1] && o[2] == -dir[2]) continue;
            if (bg_at(c[0] + o[0], c[1] + o[1], c[2] + o[2])) {
              side_exposed = true;
              break;
            }
          }
          if (side_exposed && removable(c[0], c[1], c[2])) candidate[i] = 1;
        }
      });
      // sequential deletions, re-validated against the mutating mask
      for (std::size_t i = 0; i < n; ++i) {
        if (!candidate[i]) continue;
        auto c = mask.coords(i);
        if (removable(c[0], c[1], c[2])) {
          fg[i] = 0;
          changed = true;
        }
      }
    }
  }

  Skeleton out;
  out.dims = d;
  out.spacing = mask.spacing;
  out.origin = mask.origin;
  out.label = cls;
  for (std::size_t i = 0; i < n; ++i)
    if (fg[i]) out.voxels.push_back(i);
  return out;
}

// The skeleton-length statistic is the plain voxel count of the centerline.
inline std::size_t skeleton_length(const Skeleton& skel) { return skel.voxels.size(); }

}  // namespace vasq
