#pragma once

// Multiscale Hessian vessel enhancement and the dose-dependent noise model.
//
// The vesselness filter follows the classic three-ratio exponential form:
//   V = (1 - exp(-R_A^2 / 2a^2)) * exp(-R_B^2 / 2b^2) * (1 - exp(-S^2 / 2c^2))
// taken as a max over Gaussian scales, with second derivatives normalized by
// sigma^2 and bright-on-dark polarity (response is 0 unless lambda2,3 < 0).

#include <cmath>
#include <optional>
#include <random>
#include <sstream>
#include <vector>

#include "vasq/core.hpp"
#include "vasq/grid.hpp"

namespace vasq {

struct VesselnessParams {
  std::vector<double> scales{0.5, 1.0, 2.0, 4.0};  // Gaussian sigma, mm
  double alpha = 0.5;                               // plate/line discriminator
  double beta = 0.5;                                // blob discriminator
  // Structureness scale; unset = half the maximum Hessian Frobenius norm,
  // evaluated per scale.
  std::optional<double> c;

  void validate() const {
    if (scales.empty()) throw validation_error("vesselness: scales must be non-empty");
    for (double s : scales)
      if (!(s > 0)) throw validation_error("vesselness: scales must be > 0");
    if (!(alpha > 0) || !(beta > 0)) throw validation_error("vesselness: alpha, beta must be > 0");
    if (c && !(*c > 0)) throw validation_error("vesselness: c must be > 0");
  }
};

struct NoiseParams {
  double incident_count = 1e6;  // expected photons per detector element
  std::uint64_t seed = 0;
};

// --- Gaussian smoothing -------------------------------------------------------

namespace detail {

inline std::vector<float> gaussian_kernel(double sigma_vox) {
  const int radius = std::max(1, int(std::ceil(3.5 * sigma_vox)));
  std::vector<float> k(std::size_t(2 * radius + 1));
  double sum = 0;
  for (int i = -radius; i <= radius; ++i) {
    double w = std::exp(-0.5 * (i * i) / (sigma_vox * sigma_vox));
    k[std::size_t(i + radius)] = float(w);
    sum += w;
  }
  for (auto& w : k) w = float(w / sum);
  return k;
}

inline void convolve_axis(const VoxelGrid& in, VoxelGrid& out, int axis,
                          const std::vector<float>& kernel) {
  const Index3 d = in.dims;
  const int radius = int(kernel.size() / 2);
  const int len = d[axis];
  parallel_for(std::size_t(d[2]), [&](std::size_t z0, std::size_t z1) {
    for (std::size_t z = z0; z < z1; ++z)
      for (int y = 0; y < d[1]; ++y)
        for (int x = 0; x < d[0]; ++x) {
          const int pos = axis == 0 ? x : axis == 1 ? y : int(z);
          double acc = 0;
          for (int t = -radius; t <= radius; ++t) {
            int p = std::clamp(pos + t, 0, len - 1);
            const float v = axis == 0   ? in.at(p, y, int(z))
                            : axis == 1 ? in.at(x, p, int(z))
                                        : in.at(x, y, p);
            acc += double(kernel[std::size_t(t + radius)]) * v;
          }
          out.at(x, y, int(z)) = float(acc);
        }
  });
}

}  // namespace detail

// Separable Gaussian smoothing with a physically sized kernel (sigma in mm,
// converted per axis through the spacing) and clamp-to-edge boundaries.
inline VoxelGrid gaussian_smooth(const VoxelGrid& grid, double sigma_mm) {
  if (!(sigma_mm > 0)) throw validation_error("gaussian_smooth: sigma must be > 0");
  VoxelGrid a = grid, b = VoxelGrid::like(grid);
  b.meta = grid.meta;
  for (int axis = 0; axis < 3; ++axis) {
    auto kernel = detail::gaussian_kernel(sigma_mm / grid.spacing[axis]);
    detail::convolve_axis(a, b, axis, kernel);
    std::swap(a, b);
  }
  return a;
}

// --- Hessian eigenvalues ------------------------------------------------------

namespace detail {

// Eigenvalues of a symmetric 3x3 matrix by the trigonometric closed form.
// Fast enough to run per voxel; cross-checked against a dense eigensolver in
// the test suite.
inline std::array<double, 3> symmetric_eigenvalues(double a00, double a01, double a02, double a11,
                                                   double a12, double a22) {
  const double p1 = a01 * a01 + a02 * a02 + a12 * a12;
  if (p1 == 0.0) {
    std::array<double, 3> e{a00, a11, a22};
    std::sort(e.begin(), e.end());
    return e;
  }
  const double q = (a00 + a11 + a22) / 3.0;
  const double p2 =
      (a00 - q) * (a00 - q) + (a11 - q) * (a11 - q) + (a22 - q) * (a22 - q) + 2.0 * p1;
  const double p = std::sqrt(p2 / 6.0);
  // B = (A - qI)/p; r = det(B)/2
  const double b00 = (a00 - q) / p, b11 = (a11 - q) / p, b22 = (a22 - q) / p;
  const double b01 = a01 / p, b02 = a02 / p, b12 = a12 / p;
  const double detB = b00 * (b11 * b22 - b12 * b12) - b01 * (b01 * b22 - b12 * b02) +
                      b02 * (b01 * b12 - b11 * b02);
  double r = detB / 2.0;
  r = std::clamp(r, -1.0, 1.0);
  const double phi = std::acos(r) / 3.0;
  const double e1 = q + 2.0 * p * std::cos(phi);
  const double e3 = q + 2.0 * p * std::cos(phi + 2.0 * M_PI / 3.0);
  const double e2 = 3.0 * q - e1 - e3;
  std::array<double, 3> e{e3, e2, e1};  // ascending
  return e;
}

struct HessianAtVoxel {
  double xx, yy, zz, xy, xz, yz;
};

// Central finite differences of a (smoothed) field, in physical units.
inline HessianAtVoxel hessian_fd(const VoxelGrid& g, int x, int y, int z) {
  const double sx = g.spacing[0], sy = g.spacing[1], sz = g.spacing[2];
  const double c = g.clamped(x, y, z);
  HessianAtVoxel h;
  h.xx = (g.clamped(x + 1, y, z) - 2 * c + g.clamped(x - 1, y, z)) / (sx * sx);
  h.yy = (g.clamped(x, y + 1, z) - 2 * c + g.clamped(x, y - 1, z)) / (sy * sy);
  h.zz = (g.clamped(x, y, z + 1) - 2 * c + g.clamped(x, y, z - 1)) / (sz * sz);
  h.xy = (g.clamped(x + 1, y + 1, z) - g.clamped(x + 1, y - 1, z) - g.clamped(x - 1, y + 1, z) +
          g.clamped(x - 1, y - 1, z)) /
         (4 * sx * sy);
  h.xz = (g.clamped(x + 1, y, z + 1) - g.clamped(x + 1, y, z - 1) - g.clamped(x - 1, y, z + 1) +
          g.clamped(x - 1, y, z - 1)) /
         (4 * sx * sz);
  h.yz = (g.clamped(x, y + 1, z + 1) - g.clamped(x, y + 1, z - 1) - g.clamped(x, y - 1, z + 1) +
          g.clamped(x, y - 1, z - 1)) /
         (4 * sy * sz);
  return h;
}

}  // namespace detail

struct HessianEigenvalues {
  VoxelGrid lambda1, lambda2, lambda3;  // sorted |l1| <= |l2| <= |l3|
};

// Scale-normalized (sigma^2) Gaussian-derivative Hessian eigenvalues, sorted
// by magnitude. Boundaries use clamp-to-edge in both smoothing and derivative.
inline HessianEigenvalues hessian_eigenvalues(const VoxelGrid& grid, double sigma_mm) {
  const double max_spacing = std::max({grid.spacing[0], grid.spacing[1], grid.spacing[2]});
  if (!(sigma_mm >= max_spacing / 2)) {
    std::ostringstream os;
    os << "hessian_eigenvalues: sigma " << sigma_mm << " mm below half the coarsest spacing "
       << max_spacing << " mm";
    throw validation_error(os.str());
  }
  VoxelGrid smooth = gaussian_smooth(grid, sigma_mm);
  HessianEigenvalues out{VoxelGrid::like(grid), VoxelGrid::like(grid), VoxelGrid::like(grid)};
  const double s2 = sigma_mm * sigma_mm;
  const Index3 d = grid.dims;
  parallel_for(std::size_t(d[2]), [&](std::size_t z0, std::size_t z1) {
    for (std::size_t z = z0; z < z1; ++z)
      for (int y = 0; y < d[1]; ++y)
        for (int x = 0; x < d[0]; ++x) {
          auto h = detail::hessian_fd(smooth, x, y, int(z));
          auto e = detail::symmetric_eigenvalues(s2 * h.xx, s2 * h.xy, s2 * h.xz, s2 * h.yy,
                                                 s2 * h.yz, s2 * h.zz);
          std::sort(e.begin(), e.end(),
                    [](double a, double b) { return std::abs(a) < std::abs(b); });
          const std::size_t i = grid.index(x, y, int(z));
          out.lambda1.data[i] = float(e[0]);
          out.lambda2.data[i] = float(e[1]);
          out.lambda3.data[i] = float(e[2]);
        }
  });
  return out;
}

// --- vesselness ---------------------------------------------------------------

inline VoxelGrid frangi_vesselness(const VoxelGrid& grid, const VesselnessParams& params = {}) {
  params.validate();
  VoxelGrid out = VoxelGrid::like(grid);
  out.meta = grid.meta;
  const Index3 d = grid.dims;
  const double inv2a2 = 1.0 / (2.0 * params.alpha * params.alpha);
  const double inv2b2 = 1.0 / (2.0 * params.beta * params.beta);

  // Scratch eigenvalue fields, reused across scales.
  std::vector<double> l1(grid.size()), l2(grid.size()), l3(grid.size());

  for (double sigma : params.scales) {
    VoxelGrid smooth = gaussian_smooth(grid, sigma);
    const double s2 = sigma * sigma;
    std::vector<double> slab_max(std::size_t(d[2]), 0.0);
    parallel_for(std::size_t(d[2]), [&](std::size_t z0, std::size_t z1) {
      for (std::size_t z = z0; z < z1; ++z) {
        double local_max = 0;
        for (int y = 0; y < d[1]; ++y)
          for (int x = 0; x < d[0]; ++x) {
            auto h = detail::hessian_fd(smooth, x, y, int(z));
            auto e = detail::symmetric_eigenvalues(s2 * h.xx, s2 * h.xy, s2 * h.xz, s2 * h.yy,
                                                   s2 * h.yz, s2 * h.zz);
            std::sort(e.begin(), e.end(),
                      [](double a, double b) { return std::abs(a) < std::abs(b); });
            const std::size_t i = grid.index(x, y, int(z));
            l1[i] = e[0];
            l2[i] = e[1];
            l3[i] = e[2];
            local_max = std::max(local_max, e[0] * e[0] + e[1] * e[1] + e[2] * e[2]);
          }
        slab_max[z] = std::max(slab_max[z], local_max);
      }
    });
    double max_s2 = 0;
    for (double m : slab_max) max_s2 = std::max(max_s2, m);
    const double c = params.c ? *params.c : 0.5 * std::sqrt(max_s2);
    if (!(c > 0)) continue;  // flat at this scale: nothing to add
    const double inv2c2 = 1.0 / (2.0 * c * c);

    parallel_for(grid.size(), [&](std::size_t i0, std::size_t i1) {
      for (std::size_t i = i0; i < i1; ++i) {
        const double e1 = l1[i], e2 = l2[i], e3 = l3[i];
        if (e2 > 0 || e3 > 0) continue;          // dark-on-bright: not a bright vessel
        const double a3 = std::abs(e3);
        if (a3 == 0) continue;                   // limit case: no structure
        const double a2 = std::abs(e2);
        const double ra2 = (a2 / a3) * (a2 / a3);
        const double rb2 = (e1 * e1) / (a2 * a3);
        const double ss = e1 * e1 + e2 * e2 + e3 * e3;
        const double resp = (1.0 - std::exp(-ra2 * inv2a2)) * std::exp(-rb2 * inv2b2) *
                            (1.0 - std::exp(-ss * inv2c2));
        if (float(resp) > out.data[i]) out.data[i] = float(resp);
      }
    });
  }
  return out;
}

// Two-channel network input: the volume alongside its vessel-enhanced copy.
struct EnhancedInput {
  VoxelGrid ct;
  VoxelGrid vesselness;
};

inline EnhancedInput enhance_stack(const VoxelGrid& grid, const VesselnessParams& params = {}) {
  return {grid, frangi_vesselness(grid, params)};
}

// Mean squared difference between the filter responses of a reconstruction and
// its reference; 0 iff the responses agree.
inline double vessel_consistency_loss(const VoxelGrid& recon, const VoxelGrid& reference,
                                      const VesselnessParams& params = {}) {
  require_same_geometry(recon, reference, "vessel_consistency_loss");
  VoxelGrid fr = frangi_vesselness(recon, params);
  VoxelGrid fref = frangi_vesselness(reference, params);
  double acc = 0;
  for (std::size_t i = 0; i < fr.size(); ++i) {
    const double d = double(fr.data[i]) - double(fref.data[i]);
    acc += d * d;
  }
  return acc / double(fr.size());
}

// --- Poisson transmission noise -------------------------------------------------

// Single-ray transmission surrogate: HU -> linear attenuation -> Poisson photon
// count at dose N0 -> back to HU. Per-voxel counter-based RNG makes the result
// independent of traversal order and thread count.
inline VoxelGrid add_poisson_noise(const VoxelGrid& grid, const NoiseParams& params) {
  if (!(params.incident_count > 0))
    throw validation_error("add_poisson_noise: incident count N0 must be > 0");
  constexpr double kMuWater = 0.0195;  // 1/mm at ~70 keV
  constexpr double kPathMm = 100.0;

  VoxelGrid out = VoxelGrid::like(grid);
  out.meta = grid.meta;
  const double n0 = params.incident_count;
  parallel_for(grid.size(), [&](std::size_t i0, std::size_t i1) {
    for (std::size_t i = i0; i < i1; ++i) {
      const double hu = grid.data[i];
      if (!std::isfinite(hu)) {
        auto c = grid.coords(i);
        std::ostringstream os;
        os << "add_poisson_noise: non-finite HU at voxel (" << c[0] << "," << c[1] << "," << c[2]
           << ")";
        throw validation_error(os.str());
      }
      const double mu = kMuWater * (1.0 + hu / 1000.0);
      const double lambda = n0 * std::exp(-mu * kPathMm);
      SplitMix64 rng(mix_seed(params.seed, i));
      std::poisson_distribution<long long> poisson(lambda);
      const double t = std::max(double(poisson(rng)) / n0, 1.0 / n0);
      out.data[i] = float(1000.0 * (-std::log(t) / (kPathMm * kMuWater) - 1.0));
    }
  });
  return out;
}

}  // namespace vasq
