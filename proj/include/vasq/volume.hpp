#pragma once

// Intensity windowing, physical-space resampling (the standardized spaces the
// rest of the pipeline assumes), and sub-volume tiling with exact stitching.

#include <cmath>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "vasq/core.hpp"
#include "vasq/grid.hpp"

namespace vasq {

// Standardized volume space: 512^3 voxels spanning 334 x 334 x 512 mm.
inline constexpr int kStandardDim = 512;
inline constexpr double kStandardSpacingXY = 334.0 / 512.0;  // 0.65234375 mm, binary-exact
inline constexpr double kStandardSpacingZ = 1.0;

// Standardized metric space used before skeleton-based measurements.
inline constexpr double kMetricSpacingXY = 0.652;
inline constexpr double kMetricSpacingZ = 1.0;

// Default HU window.
inline constexpr double kWindowLo = -1000.0;
inline constexpr double kWindowHi = 600.0;

// Linear HU window: clamp((v - lo)/(hi - lo), 0, 1).
inline VoxelGrid window_hu(const VoxelGrid& grid, double lo = kWindowLo, double hi = kWindowHi) {
  if (!(lo < hi)) {
    std::ostringstream os;
    os << "window_hu: lo must be < hi, got [" << lo << ", " << hi << "]";
    throw validation_error(os.str());
  }
  VoxelGrid out = grid;
  const double inv = 1.0 / (hi - lo);
  for (std::size_t i = 0; i < out.size(); ++i) {
    double v = grid.data[i];
    if (!std::isfinite(v)) {
      auto c = grid.coords(i);
      std::ostringstream os;
      os << "window_hu: non-finite value at voxel (" << c[0] << "," << c[1] << "," << c[2] << ")";
      throw validation_error(os.str());
    }
    out.data[i] = float(std::clamp((v - lo) * inv, 0.0, 1.0));
  }
  out.meta["windowed"] = "1";
  return out;
}

namespace detail {

// Per-axis continuous source coordinates of the target lattice. Values a hair
// away from an integer lattice point are snapped so that identity and exact
// 2x requests stay bit-exact despite origin-arithmetic round-off.
inline std::vector<double> axis_coords(int n_target, double t_origin, double t_spacing,
                                       double s_origin, double s_spacing) {
  const double off = (t_origin - s_origin) / s_spacing;
  const double r = t_spacing / s_spacing;
  std::vector<double> c(static_cast<std::size_t>(n_target));
  for (int k = 0; k < n_target; ++k) {
    double ci = off + k * r;
    double snapped = std::nearbyint(ci);
    if (std::abs(ci - snapped) <= 1e-9) ci = snapped;
    c[std::size_t(k)] = ci;
  }
  return c;
}

}  // namespace detail

// Trilinear resample onto a new lattice (origin preserved unless given).
// Samples beyond the source extent take the nearest boundary value
// (clamp-to-edge). Axes where the source is a single voxel degrade to
// nearest-neighbour and are flagged in the result's meta.
inline VoxelGrid resample_trilinear(const VoxelGrid& grid, std::array<double, 3> target_spacing,
                                    Index3 target_dims,
                                    std::optional<std::array<double, 3>> target_origin = {}) {
  std::array<double, 3> t_origin = target_origin.value_or(grid.origin);
  VoxelGrid out = VoxelGrid::zeros(target_dims, target_spacing, t_origin);
  out.meta = grid.meta;

  std::string nn_axes;
  for (int a = 0; a < 3; ++a) {
    if (grid.dims[a] == 1) {
      if (!nn_axes.empty()) nn_axes += ",";
      nn_axes += "xyz"[a];
    }
  }
  if (!nn_axes.empty()) out.meta["resample_nearest_axes"] = nn_axes;

  const auto cx = detail::axis_coords(target_dims[0], t_origin[0], target_spacing[0],
                                      grid.origin[0], grid.spacing[0]);
  const auto cy = detail::axis_coords(target_dims[1], t_origin[1], target_spacing[1],
                                      grid.origin[1], grid.spacing[1]);
  const auto cz = detail::axis_coords(target_dims[2], t_origin[2], target_spacing[2],
                                      grid.origin[2], grid.spacing[2]);

  struct AxisTap {
    int i0, i1;
    float w1;  // weight of i1; weight of i0 is 1 - w1
  };
  auto taps = [](const std::vector<double>& c, int src_dim) {
    std::vector<AxisTap> t(c.size());
    for (std::size_t k = 0; k < c.size(); ++k) {
      double ci = std::clamp(c[k], 0.0, double(src_dim - 1));
      int i0 = int(std::floor(ci));
      if (i0 >= src_dim - 1) i0 = src_dim - 1;
      int i1 = std::min(i0 + 1, src_dim - 1);
      t[k] = {i0, i1, float(ci - i0)};
    }
    return t;
  };
  const auto tx = taps(cx, grid.dims[0]);
  const auto ty = taps(cy, grid.dims[1]);
  const auto tz = taps(cz, grid.dims[2]);

  const std::size_t plane = std::size_t(target_dims[0]) * target_dims[1];
  parallel_for(std::size_t(target_dims[2]), [&](std::size_t z0, std::size_t z1) {
    for (std::size_t z = z0; z < z1; ++z) {
      const AxisTap& az = tz[z];
      for (int y = 0; y < target_dims[1]; ++y) {
        const AxisTap& ay = ty[std::size_t(y)];
        float* row = out.data.data() + z * plane + std::size_t(y) * target_dims[0];
        for (int x = 0; x < target_dims[0]; ++x) {
          const AxisTap& ax = tx[std::size_t(x)];
          if (ax.w1 == 0.0f && ay.w1 == 0.0f && az.w1 == 0.0f) {
            row[x] = grid.at(ax.i0, ay.i0, az.i0);  // lattice hit: exact copy
            continue;
          }
          const float c000 = grid.at(ax.i0, ay.i0, az.i0), c100 = grid.at(ax.i1, ay.i0, az.i0);
          const float c010 = grid.at(ax.i0, ay.i1, az.i0), c110 = grid.at(ax.i1, ay.i1, az.i0);
          const float c001 = grid.at(ax.i0, ay.i0, az.i1), c101 = grid.at(ax.i1, ay.i0, az.i1);
          const float c011 = grid.at(ax.i0, ay.i1, az.i1), c111 = grid.at(ax.i1, ay.i1, az.i1);
          const float fx = ax.w1, fy = ay.w1, fz = az.w1;
          const float c00 = c000 + fx * (c100 - c000);
          const float c10 = c010 + fx * (c110 - c010);
          const float c01 = c001 + fx * (c101 - c001);
          const float c11 = c011 + fx * (c111 - c011);
          const float c0 = c00 + fy * (c10 - c00);
          const float c1 = c01 + fy * (c11 - c01);
          row[x] = c0 + fz * (c1 - c0);
        }
      }
    }
  });
  return out;
}

// Maps any volume into the standardized 512^3 space at (334/512, 334/512, 1.0)
// mm, physically centred. Voxels beyond the source extent are filled with
// `fill` (default: 0 for windowed inputs, -1000 HU otherwise). Inputs larger
// than the standard extent are centre-cropped and flagged.
inline VoxelGrid normalize_to_standard_space(const VoxelGrid& grid,
                                             std::optional<double> fill = {}) {
  if (grid.meta.count("no_spacing"))
    throw validation_error(
        "normalize_to_standard_space: input has no spacing metadata; cannot place it in "
        "physical space");

  double fill_value;
  if (fill) {
    fill_value = *fill;
  } else {
    bool windowed = true;
    for (float v : grid.data) {
      if (v < -1e-6f || v > 1.0f + 1e-6f) {
        windowed = false;
        break;
      }
    }
    fill_value = windowed ? 0.0 : -1000.0;
  }

  const Index3 t_dims{kStandardDim, kStandardDim, kStandardDim};
  const std::array<double, 3> t_spacing{kStandardSpacingXY, kStandardSpacingXY,
                                        kStandardSpacingZ};
  std::array<double, 3> t_origin;
  std::string cropped;
  for (int a = 0; a < 3; ++a) {
    const double in_center = grid.origin[a] + 0.5 * (grid.dims[a] - 1) * grid.spacing[a];
    t_origin[a] = in_center - 0.5 * (t_dims[a] - 1) * t_spacing[a];
    if (grid.dims[a] * grid.spacing[a] > t_dims[a] * t_spacing[a] + 1e-9) {
      if (!cropped.empty()) cropped += ",";
      cropped += "xyz"[a];
    }
  }

  VoxelGrid out = resample_trilinear(grid, t_spacing, t_dims, t_origin);

  // Fill everything beyond the source's half-voxel physical edge.
  std::array<double, 2> lim[3];
  for (int a = 0; a < 3; ++a) {
    lim[a] = {grid.origin[a] - 0.5 * grid.spacing[a],
              grid.origin[a] + (grid.dims[a] - 0.5) * grid.spacing[a]};
  }
  for (int z = 0; z < t_dims[2]; ++z) {
    const double pz = t_origin[2] + z * t_spacing[2];
    const bool z_out = pz < lim[2][0] || pz > lim[2][1];
    for (int y = 0; y < t_dims[1]; ++y) {
      const double py = t_origin[1] + y * t_spacing[1];
      const bool zy_out = z_out || py < lim[1][0] || py > lim[1][1];
      for (int x = 0; x < t_dims[0]; ++x) {
        const double px = t_origin[0] + x * t_spacing[0];
        if (zy_out || px < lim[0][0] || px > lim[0][1])
          out.at(x, y, z) = float(fill_value);
      }
    }
  }

  out.meta["standardized"] = "1";
  out.meta["interpolated"] = "trilinear";
  if (!cropped.empty()) out.meta["cropped_axes"] = cropped;
  return out;
}

// Nearest-neighbour label resampling (labels must never be interpolated).
// Each source voxel owns the half-open physical cell [c - s/2, c + s/2), so
// exact half-voxel ties break toward the upper index; targets beyond the
// source's half-voxel edge become background.
inline LabelMask resample_labels_nearest(const LabelMask& mask,
                                         std::array<double, 3> target_spacing, Index3 target_dims,
                                         std::optional<std::array<double, 3>> target_origin = {}) {
  std::array<double, 3> t_origin = target_origin.value_or(mask.origin);
  LabelMask out = LabelMask::zeros(target_dims, target_spacing, t_origin);
  out.meta = mask.meta;

  const auto cx = detail::axis_coords(target_dims[0], t_origin[0], target_spacing[0],
                                      mask.origin[0], mask.spacing[0]);
  const auto cy = detail::axis_coords(target_dims[1], t_origin[1], target_spacing[1],
                                      mask.origin[1], mask.spacing[1]);
  const auto cz = detail::axis_coords(target_dims[2], t_origin[2], target_spacing[2],
                                      mask.origin[2], mask.spacing[2]);

  auto nearest = [](double ci, int src_dim) -> int {
    if (ci < -0.5 || ci > src_dim - 0.5) return -1;  // beyond physical edge
    int i = int(std::floor(ci + 0.5));               // half-open cells: ties round up
    return std::clamp(i, 0, src_dim - 1);
  };

  for (int z = 0; z < target_dims[2]; ++z) {
    int iz = nearest(cz[std::size_t(z)], mask.dims[2]);
    if (iz < 0) continue;
    for (int y = 0; y < target_dims[1]; ++y) {
      int iy = nearest(cy[std::size_t(y)], mask.dims[1]);
      if (iy < 0) continue;
      for (int x = 0; x < target_dims[0]; ++x) {
        int ix = nearest(cx[std::size_t(x)], mask.dims[0]);
        if (ix < 0) continue;
        out.at(x, y, z) = mask.at(ix, iy, iz);
      }
    }
  }
  return out;
}

// --- tiling -----------------------------------------------------------------

struct Tile {
  Index3 grid_pos{0, 0, 0};  // (kx, ky, kz) in the tile lattice
  Index3 offset{0, 0, 0};    // source voxel of this tile's (0,0,0)
  Index3 pad{0, 0, 0};       // zero-padding on the high side (source < tile)
  VoxelGrid data;
};

struct TileSet {
  Index3 tile_dims{192, 192, 128};
  Index3 overlap{0, 0, 0};
  Index3 source_dims{0, 0, 0};
  std::array<double, 3> source_spacing{1, 1, 1};
  std::array<double, 3> source_origin{0, 0, 0};
  std::map<std::string, std::string> source_meta;
  std::array<std::vector<int>, 3> offsets;  // per-axis tile offsets, ascending
  std::vector<Tile> tiles;                  // x-fastest over grid_pos
};

namespace detail {

inline std::vector<int> tile_offsets(int dim, int tile, int overlap) {
  std::vector<int> off;
  if (dim <= tile) {
    off.push_back(0);
    return off;
  }
  const int step = tile - overlap;
  for (int o = 0; o + tile < dim; o += step) off.push_back(o);
  off.push_back(dim - tile);
  return off;
}

// Ownership split of [0, dim): tile k owns [lo_k, lo_{k+1}) where boundaries
// sit at the midpoint of consecutive tiles' overlap.
inline std::vector<int> ownership_bounds(const std::vector<int>& off, int tile, int dim) {
  std::vector<int> b(off.size() + 1);
  b[0] = 0;
  for (std::size_t k = 1; k < off.size(); ++k)
    b[k] = (off[k] + off[k - 1] + tile) / 2;
  b[off.size()] = std::min(dim, off.back() + tile);
  return b;
}

}  // namespace detail

// Splits a grid into fixed-size tiles covering it completely. Edge tiles
// beyond the source are zero-padded with the padding recorded per tile.
inline TileSet tile(const VoxelGrid& grid, Index3 overlap, Index3 tile_dims = {192, 192, 128}) {
  for (int a = 0; a < 3; ++a) {
    if (tile_dims[a] < 1) throw validation_error("tile: tile dims must be >= 1");
    if (overlap[a] < 0 || overlap[a] >= tile_dims[a]) {
      std::ostringstream os;
      os << "tile: overlap " << overlap[a] << " must be in [0, tile dim) = [0, " << tile_dims[a]
         << ") on axis " << "xyz"[a];
      throw validation_error(os.str());
    }
  }

  TileSet ts;
  ts.tile_dims = tile_dims;
  ts.overlap = overlap;
  ts.source_dims = grid.dims;
  ts.source_spacing = grid.spacing;
  ts.source_origin = grid.origin;
  ts.source_meta = grid.meta;
  for (int a = 0; a < 3; ++a)
    ts.offsets[std::size_t(a)] = detail::tile_offsets(grid.dims[a], tile_dims[a], overlap[a]);

  for (std::size_t kz = 0; kz < ts.offsets[2].size(); ++kz)
    for (std::size_t ky = 0; ky < ts.offsets[1].size(); ++ky)
      for (std::size_t kx = 0; kx < ts.offsets[0].size(); ++kx) {
        Tile t;
        t.grid_pos = {int(kx), int(ky), int(kz)};
        t.offset = {ts.offsets[0][kx], ts.offsets[1][ky], ts.offsets[2][kz]};
        for (int a = 0; a < 3; ++a)
          t.pad[a] = std::max(0, t.offset[a] + tile_dims[a] - grid.dims[a]);
        t.data = VoxelGrid::zeros(tile_dims, grid.spacing,
                                  {grid.origin[0] + t.offset[0] * grid.spacing[0],
                                   grid.origin[1] + t.offset[1] * grid.spacing[1],
                                   grid.origin[2] + t.offset[2] * grid.spacing[2]});
        const int nx = tile_dims[0] - t.pad[0];
        for (int z = 0; z < tile_dims[2] - t.pad[2]; ++z)
          for (int y = 0; y < tile_dims[1] - t.pad[1]; ++y) {
            const float* src = &grid.at(t.offset[0], t.offset[1] + y, t.offset[2] + z);
            float* dst = &t.data.at(0, y, z);
            std::copy(src, src + nx, dst);
          }
        ts.tiles.push_back(std::move(t));
      }
  return ts;
}

inline TileSet tile(const VoxelGrid& grid, int overlap, Index3 tile_dims = {192, 192, 128}) {
  return tile(grid, Index3{overlap, overlap, overlap}, tile_dims);
}

// Reassembles the source grid. Overlaps are resolved by centred cropping of
// each tile's contribution, so the round trip is bit-exact.
inline VoxelGrid stitch(const TileSet& ts) {
  for (int a = 0; a < 3; ++a)
    if (ts.source_dims[a] < 1) throw validation_error("stitch: empty tile set");
  const std::size_t expected =
      ts.offsets[0].size() * ts.offsets[1].size() * ts.offsets[2].size();
  if (ts.tiles.size() != expected) {
    std::ostringstream os;
    os << "stitch: expected " << expected << " tiles, got " << ts.tiles.size();
    throw validation_error(os.str());
  }

  VoxelGrid out = VoxelGrid::zeros(ts.source_dims, ts.source_spacing, ts.source_origin);
  out.meta = ts.source_meta;

  std::array<std::vector<int>, 3> bounds;
  for (int a = 0; a < 3; ++a)
    bounds[std::size_t(a)] =
        detail::ownership_bounds(ts.offsets[std::size_t(a)], ts.tile_dims[a], ts.source_dims[a]);

  for (const Tile& t : ts.tiles) {
    if (t.data.dims != ts.tile_dims)
      throw validation_error("stitch: tile dims do not match tile set");
    const auto& bx = bounds[0];
    const auto& by = bounds[1];
    const auto& bz = bounds[2];
    const int kx = t.grid_pos[0], ky = t.grid_pos[1], kz = t.grid_pos[2];
    for (int z = bz[std::size_t(kz)]; z < bz[std::size_t(kz) + 1]; ++z)
      for (int y = by[std::size_t(ky)]; y < by[std::size_t(ky) + 1]; ++y) {
        const int x0 = bx[std::size_t(kx)], x1 = bx[std::size_t(kx) + 1];
        const float* src = &t.data.at(x0 - t.offset[0], y - t.offset[1], z - t.offset[2]);
        std::copy(src, src + (x1 - x0), &out.at(x0, y, z));
      }
  }
  return out;
}

}  // namespace vasq
