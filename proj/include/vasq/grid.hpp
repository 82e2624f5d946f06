#pragma once

// Voxel-grid container shared by all modules. Data is contiguous, x-fastest
// (index = x + nx*(y + ny*z)), with physical placement given by spacing and
// origin in millimetres (origin = centre of voxel (0,0,0)).

#include <algorithm>
#include <array>
#include <cstdint>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "vasq/core.hpp"

namespace vasq {

template <typename T>
struct Grid {
  Index3 dims{0, 0, 0};
  std::array<double, 3> spacing{1.0, 1.0, 1.0};
  std::array<double, 3> origin{0.0, 0.0, 0.0};
  std::vector<T> data;
  // Free-form provenance/flags ("interpolated", preserved foreign header keys,
  // ...). Never participates in geometry or value comparisons.
  std::map<std::string, std::string> meta;

  Grid() = default;

  static Grid zeros(Index3 dims, std::array<double, 3> spacing = {1, 1, 1},
                    std::array<double, 3> origin = {0, 0, 0}) {
    for (int a = 0; a < 3; ++a) {
      if (dims[a] < 1) {
        std::ostringstream os;
        os << "grid dims must be >= 1, got (" << dims[0] << ", " << dims[1] << ", " << dims[2]
           << ")";
        throw validation_error(os.str());
      }
      if (!(spacing[a] > 0))
        throw validation_error("grid spacing must be > 0 on every axis");
    }
    Grid g;
    g.dims = dims;
    g.spacing = spacing;
    g.origin = origin;
    g.data.assign(std::size_t(dims[0]) * dims[1] * dims[2], T{});
    return g;
  }

  static Grid like(const Grid& other) { return zeros(other.dims, other.spacing, other.origin); }

  template <typename U>
  static Grid like(const Grid<U>& other) {
    return zeros(other.dims, other.spacing, other.origin);
  }

  std::size_t size() const { return data.size(); }

  std::size_t index(int x, int y, int z) const {
    return std::size_t(x) + std::size_t(dims[0]) * (std::size_t(y) + std::size_t(dims[1]) * z);
  }
  Index3 coords(std::size_t i) const {
    int x = int(i % dims[0]);
    int y = int((i / dims[0]) % dims[1]);
    int z = int(i / (std::size_t(dims[0]) * dims[1]));
    return {x, y, z};
  }

  T& at(int x, int y, int z) { return data[index(x, y, z)]; }
  const T& at(int x, int y, int z) const { return data[index(x, y, z)]; }

  bool inside(int x, int y, int z) const {
    return x >= 0 && y >= 0 && z >= 0 && x < dims[0] && y < dims[1] && z < dims[2];
  }

  // Clamp-to-edge fetch: out-of-range indices are clamped to the border.
  const T& clamped(int x, int y, int z) const {
    x = std::clamp(x, 0, dims[0] - 1);
    y = std::clamp(y, 0, dims[1] - 1);
    z = std::clamp(z, 0, dims[2] - 1);
    return at(x, y, z);
  }

  // Physical position (mm) of a voxel centre.
  Vec3 position(int x, int y, int z) const {
    return {origin[0] + x * spacing[0], origin[1] + y * spacing[1], origin[2] + z * spacing[2]};
  }

  // Physical extent (mm) spanned by the voxel volume (edge to edge).
  std::array<double, 3> extent_mm() const {
    return {dims[0] * spacing[0], dims[1] * spacing[1], dims[2] * spacing[2]};
  }

  bool same_geometry(const Grid& o) const { return same_geometry_as(o); }

  template <typename U>
  bool same_geometry_as(const Grid<U>& o, double tol = 1e-9) const {
    if (dims != o.dims) return false;
    for (int a = 0; a < 3; ++a) {
      if (std::abs(spacing[a] - o.spacing[a]) > tol) return false;
      if (std::abs(origin[a] - o.origin[a]) > tol) return false;
    }
    return true;
  }

  std::string geometry_string() const {
    std::ostringstream os;
    os << "dims(" << dims[0] << "," << dims[1] << "," << dims[2] << ") spacing(" << spacing[0]
       << "," << spacing[1] << "," << spacing[2] << ") origin(" << origin[0] << "," << origin[1]
       << "," << origin[2] << ")";
    return os.str();
  }
};

template <typename T, typename U>
inline void require_same_geometry(const Grid<T>& a, const Grid<U>& b, const char* what) {
  if (!a.template same_geometry_as(b)) {
    throw validation_error(std::string(what) + ": geometry mismatch between " +
                           a.geometry_string() + " and " + b.geometry_string());
  }
}

using VoxelGrid = Grid<float>;
using LabelMask = Grid<std::uint8_t>;

// Label codes used throughout.
inline constexpr std::uint8_t kBackground = 0;
inline constexpr std::uint8_t kArtery = 1;
inline constexpr std::uint8_t kVein = 2;

inline void require_labels(const LabelMask& m, const char* what) {
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (m.data[i] > 2) {
      auto c = m.coords(i);
      std::ostringstream os;
      os << what << ": label code " << int(m.data[i]) << " at voxel (" << c[0] << "," << c[1]
         << "," << c[2] << ") outside {0,1,2}";
      throw validation_error(os.str());
    }
  }
}

// Parallel per-class probability fields (arteries and veins are segmented by
// independent heads, so the channels are not constrained to sum to <= 1).
struct ProbabilityMap {
  VoxelGrid prob_artery;
  VoxelGrid prob_vein;

  static ProbabilityMap zeros_like(const VoxelGrid& g) {
    ProbabilityMap p;
    p.prob_artery = VoxelGrid::like(g);
    p.prob_vein = VoxelGrid::like(g);
    return p;
  }

  const Index3& dims() const { return prob_artery.dims; }

  void validate(const char* what) const {
    require_same_geometry(prob_artery, prob_vein, what);
    for (const VoxelGrid* ch : {&prob_artery, &prob_vein}) {
      for (std::size_t i = 0; i < ch->size(); ++i) {
        float v = ch->data[i];
        if (!(v >= 0.0f && v <= 1.0f)) {
          auto c = ch->coords(i);
          std::ostringstream os;
          os << what << ": probability " << v << " at voxel (" << c[0] << "," << c[1] << ","
             << c[2] << ") outside [0,1]";
          throw validation_error(os.str());
        }
      }
    }
  }
};

// Hard labels -> indicator probabilities (used to evaluate losses on masks).
inline ProbabilityMap to_probability(const LabelMask& labels) {
  ProbabilityMap p;
  p.prob_artery = VoxelGrid::like(labels);
  p.prob_vein = VoxelGrid::like(labels);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    p.prob_artery.data[i] = labels.data[i] == kArtery ? 1.0f : 0.0f;
    p.prob_vein.data[i] = labels.data[i] == kVein ? 1.0f : 0.0f;
  }
  return p;
}

// Probabilities -> hard labels by per-voxel argmax, background unless the
// winning channel reaches 0.5.
inline LabelMask to_labels(const ProbabilityMap& p) {
  require_same_geometry(p.prob_artery, p.prob_vein, "to_labels");
  LabelMask m = LabelMask::like(p.prob_artery);
  for (std::size_t i = 0; i < m.size(); ++i) {
    float a = p.prob_artery.data[i], v = p.prob_vein.data[i];
    float best = std::max(a, v);
    if (best >= 0.5f) m.data[i] = (a >= v) ? kArtery : kVein;
  }
  return m;
}

}  // namespace vasq
