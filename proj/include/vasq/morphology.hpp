#pragma once

// Binary-mask utilities: connected components (6/26-neighbourhood) and
// face-boundary extraction. Masks are any Grid<uint8_t> where nonzero = set.

#include <array>
#include <cstdint>
#include <vector>

#include "vasq/core.hpp"
#include "vasq/grid.hpp"

namespace vasq {

enum class Connectivity { Face6, Full26 };

namespace detail {

// Neighbour offsets for the 3x3x3 cube, face neighbours first.
inline const std::vector<Index3>& neighbor_offsets(Connectivity c) {
  static const std::vector<Index3> face = {{-1, 0, 0}, {1, 0, 0},  {0, -1, 0},
                                           {0, 1, 0},  {0, 0, -1}, {0, 0, 1}};
  static const std::vector<Index3> full = [] {
    std::vector<Index3> v;
    for (int dz = -1; dz <= 1; ++dz)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx)
          if (dx || dy || dz) v.push_back({dx, dy, dz});
    return v;
  }();
  return c == Connectivity::Face6 ? face : full;
}

}  // namespace detail

struct ComponentLabels {
  Grid<std::int32_t> labels;  // 0 = background, components numbered from 1
  int count = 0;
  std::vector<std::size_t> sizes;  // sizes[k] = voxels in component k+1
};

// Deterministic flood fill: components numbered by the smallest linear index
// they contain (scan order), so identical inputs give identical labelings.
inline ComponentLabels connected_components(const LabelMask& mask,
                                            Connectivity conn = Connectivity::Full26) {
  ComponentLabels out;
  out.labels = Grid<std::int32_t>::like(mask);
  const auto& offs = detail::neighbor_offsets(conn);
  std::vector<std::size_t> stack;
  for (std::size_t start = 0; start < mask.size(); ++start) {
    if (!mask.data[start] || out.labels.data[start]) continue;
    const std::int32_t id = ++out.count;
    std::size_t voxels = 0;
    stack.push_back(start);
    out.labels.data[start] = id;
    while (!stack.empty()) {
      std::size_t cur = stack.back();
      stack.pop_back();
      ++voxels;
      auto c = mask.coords(cur);
      for (const auto& o : offs) {
        int x = c[0] + o[0], y = c[1] + o[1], z = c[2] + o[2];
        if (!mask.inside(x, y, z)) continue;
        std::size_t ni = mask.index(x, y, z);
        if (mask.data[ni] && !out.labels.data[ni]) {
          out.labels.data[ni] = id;
          stack.push_back(ni);
        }
      }
    }
    out.sizes.push_back(voxels);
  }
  return out;
}

// Euler characteristic of the mask under 26-connectivity.
//
// The union of the closed unit cubes centred on the set voxels deformation-
// retracts onto the nerve of that cover (cubes are convex), and a set of
// cubes shares a point exactly when the voxels span at most 2 positions per
// axis — i.e. when they fit in a 2x2x2 window. So chi is the alternating sum
// over all such subsets, each counted once at the window anchored at its
// bounding-box corner (the subset must touch the low face of the window in
// every axis). Contributions per 8-bit window pattern are precomputed.
inline long long euler_characteristic_26(const LabelMask& mask) {
  static const std::array<int, 256> lut = [] {
    std::array<int, 256> t{};
    for (int cfg = 1; cfg < 256; ++cfg) {
      int contrib = 0;
      for (int sub = cfg;; sub = (sub - 1) & cfg) {
        if (sub) {
          bool low_x = false, low_y = false, low_z = false;
          int bits = 0;
          for (int b = 0; b < 8; ++b)
            if (sub & (1 << b)) {
              ++bits;
              if (!(b & 1)) low_x = true;
              if (!(b & 2)) low_y = true;
              if (!(b & 4)) low_z = true;
            }
          if (low_x && low_y && low_z) contrib += (bits % 2 == 1) ? 1 : -1;
        }
        if (sub == 0) break;
      }
      t[std::size_t(cfg)] = contrib;
    }
    return t;
  }();

  long long chi = 0;
  for (int z = 0; z < mask.dims[2]; ++z)
    for (int y = 0; y < mask.dims[1]; ++y)
      for (int x = 0; x < mask.dims[0]; ++x) {
        int cfg = 0;
        for (int b = 0; b < 8; ++b) {
          int nx = x + (b & 1), ny = y + ((b >> 1) & 1), nz = z + ((b >> 2) & 1);
          if (mask.inside(nx, ny, nz) && mask.at(nx, ny, nz)) cfg |= 1 << b;
        }
        chi += lut[std::size_t(cfg)];
      }
  return chi;
}

// Voxels of the mask with at least one of their 6 face neighbours outside the
// mask (the volume border counts as outside).
inline std::vector<std::size_t> boundary_voxels(const LabelMask& mask) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (!mask.data[i]) continue;
    auto c = mask.coords(i);
    bool boundary = false;
    for (const auto& o : detail::neighbor_offsets(Connectivity::Face6)) {
      int x = c[0] + o[0], y = c[1] + o[1], z = c[2] + o[2];
      if (!mask.inside(x, y, z) || !mask.at(x, y, z)) {
        boundary = true;
        break;
      }
    }
    if (boundary) out.push_back(i);
  }
  return out;
}

}  // namespace vasq
