#pragma once

// Exact anisotropic Euclidean distance transform (lower-envelope-of-parabolas
// method, one pass per axis) with optional nearest-site propagation.

#include <cstdint>
#include <limits>
#include <vector>

#include "vasq/core.hpp"
#include "vasq/grid.hpp"

namespace vasq {

struct DistanceField {
  Grid<float> dist_mm;             // Euclidean distance to the nearest site
  Grid<std::int32_t> nearest;      // linear index of that site; -1 if no sites
  bool has_sites = false;
};

namespace detail {

constexpr double kInf = std::numeric_limits<double>::infinity();

// 1D squared-distance transform along samples at positions i*step. f holds
// squared source values (kInf = no site), arg the payload to propagate.
inline void edt_1d(std::vector<double>& f, std::vector<std::int32_t>& arg, double step,
                   std::vector<double>& d, std::vector<std::int32_t>& darg,
                   std::vector<int>& v, std::vector<double>& zbound) {
  const int n = int(f.size());
  int k = 0;
  v[0] = 0;
  zbound[0] = -kInf;
  zbound[1] = kInf;
  auto sq = [](double a) { return a * a; };
  for (int q = 1; q < n; ++q) {
    if (f[std::size_t(q)] == kInf) continue;
    while (true) {
      if (f[std::size_t(v[std::size_t(k)])] == kInf) {
        // previous vertex is a non-site: drop it
        if (k == 0) {
          v[0] = q;
          zbound[0] = -kInf;
          zbound[1] = kInf;
          break;
        }
        --k;
        continue;
      }
      const int p = v[std::size_t(k)];
      const double s = (f[std::size_t(q)] + sq(q * step) - f[std::size_t(p)] - sq(p * step)) /
                       (2.0 * step * (q - p));
      if (s <= zbound[std::size_t(k)]) {
        if (k == 0) {
          v[0] = q;
          zbound[0] = -kInf;
          zbound[1] = kInf;
          break;
        }
        --k;
      } else {
        ++k;
        v[std::size_t(k)] = q;
        zbound[std::size_t(k)] = s;
        zbound[std::size_t(k) + 1] = kInf;
        break;
      }
    }
  }
  if (f[std::size_t(v[0])] == kInf && k == 0) {
    // no sites in this scan line
    for (int q = 0; q < n; ++q) {
      d[std::size_t(q)] = kInf;
      darg[std::size_t(q)] = -1;
    }
    return;
  }
  int j = 0;
  for (int q = 0; q < n; ++q) {
    const double pos = q * step;
    while (zbound[std::size_t(j) + 1] < pos) ++j;
    const int p = v[std::size_t(j)];
    d[std::size_t(q)] = (pos - p * step) * (pos - p * step) + f[std::size_t(p)];
    darg[std::size_t(q)] = arg[std::size_t(p)];
  }
}

}  // namespace detail

// Distance (mm) from every voxel to the nearest nonzero voxel of `sites`.
// Exact for arbitrary anisotropic spacing. nearest[] propagates the linear
// index of the winning site (ties resolved by scan order, deterministic).
inline DistanceField distance_to_sites(const LabelMask& sites) {
  DistanceField out;
  out.dist_mm = Grid<float>::like(sites);
  out.nearest = Grid<std::int32_t>::like(sites);

  const Index3 d = sites.dims;
  const std::size_t n = sites.size();
  std::vector<double> sq(n);
  std::vector<std::int32_t> arg(n);
  bool any = false;
  for (std::size_t i = 0; i < n; ++i) {
    if (sites.data[i]) {
      sq[i] = 0.0;
      arg[i] = std::int32_t(i);
      any = true;
    } else {
      sq[i] = detail::kInf;
      arg[i] = -1;
    }
  }
  out.has_sites = any;
  if (!any) {
    for (std::size_t i = 0; i < n; ++i) {
      out.dist_mm.data[i] = std::numeric_limits<float>::infinity();
      out.nearest.data[i] = -1;
    }
    return out;
  }

  const auto max_dim = std::size_t(std::max({d[0], d[1], d[2]}));
  std::vector<double> line(max_dim), dline(max_dim);
  std::vector<std::int32_t> larg(max_dim), dlarg(max_dim);
  std::vector<int> v(max_dim);
  std::vector<double> z(max_dim + 1);

  auto run_axis = [&](int axis) {
    const int len = d[axis];
    const std::size_t stride = axis == 0 ? 1
                               : axis == 1 ? std::size_t(d[0])
                                           : std::size_t(d[0]) * d[1];
    const int u_len = axis == 0 ? d[1] : d[0];
    const int w_len = axis == 2 ? d[1] : d[2];
    const std::size_t u_stride = axis == 0 ? std::size_t(d[0]) : 1;
    const std::size_t w_stride = axis == 2 ? std::size_t(d[0]) : std::size_t(d[0]) * d[1];
    const double step = sites.spacing[axis];
    line.resize(std::size_t(len));
    dline.resize(std::size_t(len));
    larg.resize(std::size_t(len));
    dlarg.resize(std::size_t(len));
    for (int w = 0; w < w_len; ++w)
      for (int u = 0; u < u_len; ++u) {
        const std::size_t base = std::size_t(u) * u_stride + std::size_t(w) * w_stride;
        for (int i = 0; i < len; ++i) {
          line[std::size_t(i)] = sq[base + std::size_t(i) * stride];
          larg[std::size_t(i)] = arg[base + std::size_t(i) * stride];
        }
        detail::edt_1d(line, larg, step, dline, dlarg, v, z);
        for (int i = 0; i < len; ++i) {
          sq[base + std::size_t(i) * stride] = dline[std::size_t(i)];
          arg[base + std::size_t(i) * stride] = dlarg[std::size_t(i)];
        }
      }
  };
  run_axis(0);
  run_axis(1);
  run_axis(2);

  for (std::size_t i = 0; i < n; ++i) {
    out.dist_mm.data[i] = float(std::sqrt(sq[i]));
    out.nearest.data[i] = arg[i];
  }
  return out;
}

// Convenience: distance restricted to a specific label code.
inline DistanceField distance_to_label(const LabelMask& mask, std::uint8_t code) {
  LabelMask sites = LabelMask::like(mask);
  for (std::size_t i = 0; i < mask.size(); ++i) sites.data[i] = mask.data[i] == code;
  return distance_to_sites(sites);
}

}  // namespace vasq
