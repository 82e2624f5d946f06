#pragma once

// Cohort statistics: lung volume, the four skeleton/bifurcation abundance
// indices, ordinary least squares with t-tests, Wilcoxon tests (exact by
// enumeration for small samples, normal approximation with tie and continuity
// corrections otherwise), a sex-vs-abundance chi-square association, and the
// per-sex / per-decade summary tables.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numbers>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "vasq/core.hpp"
#include "vasq/grid.hpp"
#include "vasq/metrics.hpp"
#include "vasq/skeleton.hpp"
#include "vasq/tree.hpp"
#include "vasq/volume.hpp"

namespace vasq {

// One row of a cohort table. Sex is coded male = 1, female = 0; skeleton
// lengths are in cm; the bifurcation fields hold integer-valued counts.
struct SubjectRecord {
  std::string id;
  int sex = 0;
  double age = 0.0;          // years
  double lung_volume = 0.0;  // liters
  double slpa = 0.0, slpv = 0.0;
  double bcpa = 0.0, bcpv = 0.0;
};

enum class AbundanceIndex { slpa, slpv, bcpa, bcpv };
inline constexpr std::array<AbundanceIndex, 4> kAbundanceIndices{
    AbundanceIndex::slpa, AbundanceIndex::slpv, AbundanceIndex::bcpa, AbundanceIndex::bcpv};

inline const char* index_name(AbundanceIndex idx) {
  switch (idx) {
    case AbundanceIndex::slpa: return "slpa";
    case AbundanceIndex::slpv: return "slpv";
    case AbundanceIndex::bcpa: return "bcpa";
    default: return "bcpv";
  }
}

inline double index_value(const SubjectRecord& r, AbundanceIndex idx) {
  switch (idx) {
    case AbundanceIndex::slpa: return r.slpa;
    case AbundanceIndex::slpv: return r.slpv;
    case AbundanceIndex::bcpa: return r.bcpa;
    default: return r.bcpv;
  }
}

// --- volumes and abundance indices ------------------------------------------

// Lung volume minus the intrapulmonary vessel volume, in liters.
inline double lung_volume(const LabelMask& lung_mask, const LabelMask& vessels,
                          std::array<double, 3> spacing) {
  require_same_geometry(lung_mask, vessels, "lung volume");
  std::size_t in_lung = 0, vessel_in_lung = 0;
  for (std::size_t i = 0; i < lung_mask.size(); ++i) {
    if (!lung_mask.data[i]) continue;
    ++in_lung;
    if (vessels.data[i]) ++vessel_in_lung;
  }
  if (in_lung == 0) throw validation_error("lung volume: empty lung mask");
  const double voxel_mm3 = spacing[0] * spacing[1] * spacing[2];
  return double(in_lung - vessel_in_lung) * voxel_mm3 * 1e-6;
}

struct AbundanceIndices {
  double slpa_cm = 0.0, slpv_cm = 0.0;
  std::size_t bcpa = 0, bcpv = 0;
  // plain centerline voxel counts, the unconverted form of the length
  std::size_t sl_raw_artery = 0, sl_raw_vein = 0;
};

namespace detail {

// Physical polyline length of a tree, plus the number of unit steps behind
// the sum. The measure is rooting-independent: branch pairs meeting at a
// degree-2 node (an artifact of where the root landed, never a real
// junction) are fused back into one path first. The voxel-to-voxel step sum
// systematically overestimates digital curves (a digitized straight line
// zigzags), so each path is measured as a polygonal approximation through
// every 4th voxel: the subsampled chords cut the zigzag corners and track
// the true centerline within a couple of percent regardless of orientation.
inline std::pair<double, std::size_t> tree_polyline_length(const VesselTree& tree) {
  constexpr std::size_t kSpan = 4;

  // branch voxel paths, endpoints included, keyed by their end nodes
  std::vector<std::vector<std::size_t>> paths;
  std::vector<std::array<int, 2>> ends;
  paths.reserve(tree.branches.size());
  for (const auto& br : tree.branches) {
    std::vector<std::size_t> path;
    path.reserve(br.voxels.size() + 2);
    path.push_back(tree.nodes[std::size_t(br.node_a)].voxel);
    path.insert(path.end(), br.voxels.begin(), br.voxels.end());
    path.push_back(tree.nodes[std::size_t(br.node_b)].voxel);
    paths.push_back(std::move(path));
    ends.push_back({br.node_a, br.node_b});
  }

  // fuse across every degree-2 node so the decomposition matches the one an
  // unrooted reading of the skeleton would give
  for (int n = 0; n < int(tree.nodes.size()); ++n) {
    if (tree.nodes[std::size_t(n)].degree != 2) continue;
    int first = -1, second = -1;
    for (int p = 0; p < int(paths.size()); ++p) {
      if (paths[std::size_t(p)].empty()) continue;
      if (ends[std::size_t(p)][0] == n || ends[std::size_t(p)][1] == n)
        (first < 0 ? first : second) = p;
    }
    if (first < 0 || second < 0 || first == second) continue;
    auto& a = paths[std::size_t(first)];
    auto& b = paths[std::size_t(second)];
    if (ends[std::size_t(first)][1] != n) {  // orient a to end at n
      std::reverse(a.begin(), a.end());
      std::swap(ends[std::size_t(first)][0], ends[std::size_t(first)][1]);
    }
    if (ends[std::size_t(second)][0] != n) {  // orient b to start at n
      std::reverse(b.begin(), b.end());
      std::swap(ends[std::size_t(second)][0], ends[std::size_t(second)][1]);
    }
    a.insert(a.end(), b.begin() + 1, b.end());
    ends[std::size_t(first)][1] = ends[std::size_t(second)][1];
    b.clear();
  }

  const std::size_t dims0 = std::size_t(tree.dims[0]);
  const std::size_t dims1 = std::size_t(tree.dims[1]);
  auto coord = [&](std::size_t i) {
    return std::array<double, 3>{double(i % dims0), double((i / dims0) % dims1),
                                 double(i / (dims0 * dims1))};
  };
  double total = 0.0;
  std::size_t steps = 0;
  for (const auto& path : paths) {
    if (path.empty()) continue;
    steps += path.size() - 1;
    for (std::size_t k = 0; k + 1 < path.size(); k += kSpan) {
      const auto a = coord(path[k]);
      const auto b = coord(path[std::min(k + kSpan, path.size() - 1)]);
      const double dx = (a[0] - b[0]) * tree.spacing[0];
      const double dy = (a[1] - b[1]) * tree.spacing[1];
      const double dz = (a[2] - b[2]) * tree.spacing[2];
      total += std::sqrt(dx * dx + dy * dy + dz * dz);
    }
  }
  return {total, steps};
}

}  // namespace detail

// Skeleton length (cm) and bifurcation count per class, measured in the
// standardized metric space: masks are resampled to `metric_spacing`, the
// per-class skeleton is extracted there, and the length statistic is the
// centerline voxel count scaled by the mean polyline step (so the reported
// value tracks physical length rather than raw count). The cardinal levels
// root the trees; an absent class scores zero.
inline AbundanceIndices abundance_indices(
    const LabelMask& truth, const BranchLevels& levels_artery, const BranchLevels& levels_vein,
    const LabelMask& lung_mask,
    std::array<double, 3> metric_spacing = {kMetricSpacingXY, kMetricSpacingXY, kMetricSpacingZ}) {
  require_same_geometry(truth, lung_mask, "abundance indices");

  Index3 mdims;
  for (int k = 0; k < 3; ++k) {
    const double extent = truth.dims[k] * truth.spacing[k];
    mdims[k] = std::max(1, int(std::ceil(extent / metric_spacing[k] - 1e-9)));
  }
  const LabelMask rt = resample_labels_nearest(truth, metric_spacing, mdims);

  AbundanceIndices out;
  const struct {
    std::uint8_t cls;
    const BranchLevels* levels;
    double* sl_cm;
    std::size_t* bc;
    std::size_t* sl_raw;
  } classes[] = {{kArtery, &levels_artery, &out.slpa_cm, &out.bcpa, &out.sl_raw_artery},
                 {kVein, &levels_vein, &out.slpv_cm, &out.bcpv, &out.sl_raw_vein}};

  for (const auto& c : classes) {
    const Skeleton skel = extract_skeleton(rt, c.cls);
    if (skel.voxels.empty()) continue;  // absent class: all indices stay zero

    std::optional<Vec3> anchor = detail::mask_centroid(c.levels->levels[0]);
    if (!anchor) {
      // No cardinal level: root at the extrapulmonary end of the class.
      LabelMask stem = LabelMask::like(truth);
      for (std::size_t i = 0; i < truth.size(); ++i)
        stem.data[i] = truth.data[i] == c.cls && !lung_mask.data[i];
      anchor = detail::mask_centroid(stem);
    }
    const Index3 root = anchor ? detail::snap_to_skeleton(skel, *anchor)
                               : skel.coords(skel.voxels.front());
    const VesselTree tree = build_tree(skel, root);

    const auto [length_mm, steps] = detail::tree_polyline_length(tree);
    const double mean_step = steps ? length_mm / double(steps) : 0.0;
    *c.sl_raw = skeleton_length(skel);
    *c.sl_cm = double(*c.sl_raw) * mean_step / 10.0;
    *c.bc = count_bifurcations(tree);
  }
  return out;
}

// --- distribution tails ------------------------------------------------------

namespace detail {

// Continued-fraction core of the regularized incomplete beta (Lentz).
inline double betacf(double a, double b, double x) {
  constexpr double eps = 1e-14, floor = 1e-300;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < floor) d = floor;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= 300; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < floor) d = floor;
    c = 1.0 + aa / c;
    if (std::fabs(c) < floor) c = floor;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < floor) d = floor;
    c = 1.0 + aa / c;
    if (std::fabs(c) < floor) c = floor;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < eps) break;
  }
  return h;
}

// Regularized incomplete beta I_x(a, b).
inline double incbeta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double ln_bt = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                       a * std::log(x) + b * std::log1p(-x);
  const double bt = std::exp(ln_bt);
  if (x < (a + 1.0) / (a + b + 2.0)) return bt * betacf(a, b, x) / a;
  return 1.0 - bt * betacf(b, a, 1.0 - x) / b;
}

// Two-sided p-value of a t statistic with df degrees of freedom.
inline double student_t_two_sided(double t, double df) {
  if (!std::isfinite(t)) return 0.0;
  return incbeta(df / 2.0, 0.5, df / (df + t * t));
}

// Two-sided tail of the standard normal.
inline double normal_two_sided(double z) { return std::erfc(std::fabs(z) / std::sqrt(2.0)); }

// Chi-square upper tail with one degree of freedom.
inline double chi_square_1df_tail(double x) {
  return x <= 0.0 ? 1.0 : std::erfc(std::sqrt(x / 2.0));
}

// Average ranks (1-based, ties share their midrank). When `tie_cubed` is
// given it accumulates sum(t^3 - t) over the tie groups for the variance
// corrections of the Wilcoxon approximations.
inline std::vector<double> midranks(const std::vector<double>& v, double* tie_cubed = nullptr) {
  const std::size_t n = v.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t(0));
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });

  std::vector<double> ranks(n, 0.0);
  if (tie_cubed) *tie_cubed = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
    const double mid = 0.5 * double(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = mid;
    if (tie_cubed) {
      const double t = double(j - i + 1);
      *tie_cubed += t * t * t - t;
    }
    i = j + 1;
  }
  return ranks;
}

}  // namespace detail

// --- regression ---------------------------------------------------------------

struct RegressionResult {
  std::vector<std::string> names;
  std::vector<double> coef, se, tstat, pvalue;
  double r_squared = 0.0;
  double sigma2 = 0.0;  // residual variance
  std::size_t n = 0;
};

// Ordinary least squares with per-coefficient t-tests. The design must have
// full column rank and more rows than columns.
inline RegressionResult ols(const Eigen::MatrixXd& design, const Eigen::VectorXd& target,
                            std::vector<std::string> names) {
  const auto n = std::size_t(design.rows());
  const auto k = std::size_t(design.cols());
  if (names.size() != k)
    throw validation_error("ols: design has " + std::to_string(k) + " columns but " +
                           std::to_string(names.size()) + " names");
  if (std::size_t(target.size()) != n)
    throw validation_error("ols: target length does not match the design rows");
  if (n <= k)
    throw validation_error("ols: need more rows than predictors, got " + std::to_string(n) +
                           " rows for " + std::to_string(k) + " columns");

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  qr.setThreshold(1e-10);
  if (qr.rank() < Eigen::Index(k)) {
    const auto perm = qr.colsPermutation().indices();
    std::ostringstream os;
    os << "ols: design is rank-deficient; columns {";
    for (Eigen::Index j = qr.rank(); j < Eigen::Index(k); ++j) {
      if (j > qr.rank()) os << ", ";
      os << names[std::size_t(perm[j])];
    }
    os << "} are linearly dependent on the others";
    throw validation_error(os.str());
  }

  const Eigen::VectorXd beta = qr.solve(target);
  const Eigen::VectorXd resid = target - design * beta;
  const double rss = resid.squaredNorm();
  const double mean = target.mean();
  const double tss = (target.array() - mean).matrix().squaredNorm();

  RegressionResult out;
  out.names = std::move(names);
  out.n = n;
  out.sigma2 = rss / double(n - k);
  out.r_squared = tss > 0.0 ? 1.0 - rss / tss : 0.0;

  const Eigen::MatrixXd xtx_inv =
      (design.transpose() * design).ldlt().solve(Eigen::MatrixXd::Identity(
          Eigen::Index(k), Eigen::Index(k)));
  for (std::size_t j = 0; j < k; ++j) {
    const double b = beta[Eigen::Index(j)];
    const double var = out.sigma2 * xtx_inv(Eigen::Index(j), Eigen::Index(j));
    const double se = var > 0.0 ? std::sqrt(var) : 0.0;
    double t, p;
    if (se > 0.0) {
      t = b / se;
      p = detail::student_t_two_sided(t, double(n - k));
    } else {
      // exact fit: a zero coefficient carries no evidence, a nonzero one is certain
      t = b == 0.0 ? 0.0 : std::numeric_limits<double>::infinity() * (b > 0 ? 1 : -1);
      p = b == 0.0 ? 1.0 : 0.0;
    }
    out.coef.push_back(b);
    out.se.push_back(se);
    out.tstat.push_back(t);
    out.pvalue.push_back(p);
  }
  return out;
}

// The study's model: index ~ 1 + lung_volume + sex + age.
inline RegressionResult fit_abundance_model(const std::vector<SubjectRecord>& rows,
                                            AbundanceIndex target) {
  const auto n = Eigen::Index(rows.size());
  Eigen::MatrixXd design(n, 4);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& r = rows[std::size_t(i)];
    design(i, 0) = 1.0;
    design(i, 1) = r.lung_volume;
    design(i, 2) = double(r.sex);
    design(i, 3) = r.age;
    y[i] = index_value(r, target);
  }
  return ols(design, y, {"intercept", "lung_volume", "sex", "age"});
}

// --- rank tests ----------------------------------------------------------------

struct TestResult {
  double statistic = 0.0;
  double p_value = 1.0;
  std::string method;       // "signed-rank", "rank-sum", or "chi-square"
  std::size_t n = 0;        // effective sample size
  std::size_t n1 = 0, n2 = 0;  // group sizes for two-sample tests
  bool exact = false;
};

namespace detail {

// Two-sided p from the tails of an enumerated null distribution.
inline double two_sided_from_tails(double ge, double le, double total) {
  return std::min(1.0, 2.0 * std::min(ge, le) / total);
}

}  // namespace detail

// Paired signed-rank test. Zero differences are dropped; the null is
// enumerated exactly over sign patterns when at most 12 informative pairs
// remain, otherwise the tie- and continuity-corrected normal approximation
// is used.
inline TestResult wilcoxon_signed_rank(const std::vector<double>& a,
                                       const std::vector<double>& b) {
  if (a.size() != b.size())
    throw validation_error("wilcoxon signed-rank: paired samples differ in length");
  std::vector<double> diffs, mags;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    if (d != 0.0) {
      diffs.push_back(d);
      mags.push_back(std::fabs(d));
    }
  }
  const std::size_t n = diffs.size();
  if (n == 0) throw validation_error("wilcoxon signed-rank: degenerate pairs, all differences zero");

  double tie_cubed = 0.0;
  const std::vector<double> ranks = detail::midranks(mags, &tie_cubed);
  double w_plus = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    if (diffs[i] > 0.0) w_plus += ranks[i];

  TestResult out;
  out.method = "signed-rank";
  out.statistic = w_plus;
  out.n = n;

  if (n <= 12) {
    out.exact = true;
    const std::uint64_t patterns = 1ull << n;
    std::uint64_t ge = 0, le = 0;
    for (std::uint64_t s = 0; s < patterns; ++s) {
      double w = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        if (s & (1ull << i)) w += ranks[i];
      if (w >= w_plus - 1e-9) ++ge;
      if (w <= w_plus + 1e-9) ++le;
    }
    out.p_value = detail::two_sided_from_tails(double(ge), double(le), double(patterns));
    return out;
  }

  const double nn = double(n);
  const double mu = nn * (nn + 1.0) / 4.0;
  const double var = nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0 - tie_cubed / 48.0;
  double num = w_plus - mu;
  num -= std::copysign(std::min(0.5, std::fabs(num)), num);  // continuity correction
  const double z = var > 0.0 ? num / std::sqrt(var) : 0.0;
  out.p_value = detail::normal_two_sided(z);
  return out;
}

// Two-sample rank-sum test on the rank sum of the first group. Exact by
// enumeration of group assignments when n1 + n2 <= 12.
inline TestResult wilcoxon_rank_sum(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.empty() || y.empty())
    throw validation_error("wilcoxon rank-sum: both groups must be nonempty");
  const std::size_t n1 = x.size(), n2 = y.size(), total = n1 + n2;

  std::vector<double> combined = x;
  combined.insert(combined.end(), y.begin(), y.end());
  double tie_cubed = 0.0;
  const std::vector<double> ranks = detail::midranks(combined, &tie_cubed);
  double w = 0.0;
  for (std::size_t i = 0; i < n1; ++i) w += ranks[i];

  TestResult out;
  out.method = "rank-sum";
  out.statistic = w;
  out.n = total;
  out.n1 = n1;
  out.n2 = n2;

  if (total <= 12) {
    out.exact = true;
    std::vector<int> pick(total, 0);
    std::fill(pick.begin(), pick.begin() + std::ptrdiff_t(n1), 1);
    std::sort(pick.begin(), pick.end());
    double ge = 0.0, le = 0.0, count = 0.0;
    do {
      double s = 0.0;
      for (std::size_t i = 0; i < total; ++i)
        if (pick[i]) s += ranks[i];
      if (s >= w - 1e-9) ++ge;
      if (s <= w + 1e-9) ++le;
      ++count;
    } while (std::next_permutation(pick.begin(), pick.end()));
    out.p_value = detail::two_sided_from_tails(ge, le, count);
    return out;
  }

  const double fn1 = double(n1), fn2 = double(n2), fn = double(total);
  const double mu = fn1 * (fn + 1.0) / 2.0;
  const double var = fn1 * fn2 / 12.0 * ((fn + 1.0) - tie_cubed / (fn * (fn - 1.0)));
  double num = w - mu;
  num -= std::copysign(std::min(0.5, std::fabs(num)), num);
  const double z = var > 0.0 ? num / std::sqrt(var) : 0.0;
  out.p_value = detail::normal_two_sided(z);
  return out;
}

// Association between sex and an abundance index, as a 2x2 contingency test
// over the median split of the index.
inline TestResult chi_square_sex_association(const std::vector<SubjectRecord>& rows,
                                             AbundanceIndex idx) {
  if (rows.empty()) throw validation_error("chi-square: empty cohort");
  std::vector<double> vals;
  for (const auto& r : rows) vals.push_back(index_value(r, idx));
  std::vector<double> sorted = vals;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  const double median =
      n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);

  double table[2][2] = {{0, 0}, {0, 0}};  // [sex][above median]
  for (std::size_t i = 0; i < n; ++i)
    table[rows[i].sex ? 1 : 0][vals[i] > median ? 1 : 0] += 1.0;

  const double row0 = table[0][0] + table[0][1], row1 = table[1][0] + table[1][1];
  const double col0 = table[0][0] + table[1][0], col1 = table[0][1] + table[1][1];
  if (row0 == 0.0 || row1 == 0.0 || col0 == 0.0 || col1 == 0.0)
    throw validation_error(
        "chi-square: the sex-by-median-split table has an empty margin; the test needs both "
        "sexes and spread in the index");

  double stat = 0.0;
  const double rows_sum[2] = {row0, row1}, cols_sum[2] = {col0, col1};
  for (int s = 0; s < 2; ++s)
    for (int c = 0; c < 2; ++c) {
      const double expected = rows_sum[s] * cols_sum[c] / double(n);
      const double d = table[s][c] - expected;
      stat += d * d / expected;
    }

  TestResult out;
  out.method = "chi-square";
  out.statistic = stat;
  out.p_value = detail::chi_square_1df_tail(stat);
  out.n = n;
  out.n1 = std::size_t(row1);  // males
  out.n2 = std::size_t(row0);  // females
  return out;
}

// --- cohort summary -------------------------------------------------------------

inline std::string significance_stars(double p) {
  if (p < 0.0001) return "****";
  if (p < 0.001) return "***";
  if (p < 0.01) return "**";
  if (p < 0.05) return "*";
  return "";
}

struct GroupSummary {
  std::size_t n = 0;
  double mean = 0.0, sd = 0.0, sem = 0.0;
};

struct AgeBinSummary {
  int decade = 0;  // bin [decade, decade + 10)
  GroupSummary stats;
};

struct CohortReport {
  std::size_t n = 0;
  // All per-index tables are ordered as kAbundanceIndices (slpa, slpv, bcpa, bcpv).
  std::array<std::array<GroupSummary, 2>, 4> sex_summary;  // [index][sex 0/1]
  std::array<std::vector<AgeBinSummary>, 4> age_summary;   // ascending decades
  std::array<RegressionResult, 4> joint_fit;               // 1 + lung_volume + sex + age
  std::array<std::array<RegressionResult, 2>, 4> per_sex_fit;  // 1 + lung_volume + age
  std::array<TestResult, 4> sex_test;                      // rank-sum, male vs female
  std::array<std::string, 4> sex_stars;
};

namespace detail {

inline GroupSummary summarize(const std::vector<double>& v) {
  GroupSummary s;
  s.n = v.size();
  if (s.n == 0) return s;
  s.mean = std::accumulate(v.begin(), v.end(), 0.0) / double(s.n);
  if (s.n > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - s.mean) * (x - s.mean);
    s.sd = std::sqrt(ss / double(s.n - 1));
    s.sem = s.sd / std::sqrt(double(s.n));
  }
  return s;
}

}  // namespace detail

// Per-sex and per-decade tables, the joint and per-sex regressions, and the
// male-vs-female rank-sum comparison (with significance stars) for each of
// the four abundance indices. Fits and tests whose preconditions fail (too
// few rows, a missing sex) are left default-initialized with n == 0.
inline CohortReport cohort_report(const std::vector<SubjectRecord>& rows) {
  CohortReport rep;
  rep.n = rows.size();

  for (std::size_t k = 0; k < kAbundanceIndices.size(); ++k) {
    const AbundanceIndex idx = kAbundanceIndices[k];

    std::array<std::vector<double>, 2> by_sex;
    std::map<int, std::vector<double>> by_decade;
    for (const auto& r : rows) {
      const double v = index_value(r, idx);
      by_sex[r.sex ? 1 : 0].push_back(v);
      by_decade[int(std::floor(r.age / 10.0)) * 10].push_back(v);
    }

    for (int s = 0; s < 2; ++s)
      rep.sex_summary[k][std::size_t(s)] = detail::summarize(by_sex[std::size_t(s)]);
    for (const auto& [decade, vals] : by_decade)
      rep.age_summary[k].push_back({decade, detail::summarize(vals)});

    if (rows.size() > 4) {
      rep.joint_fit[k] = fit_abundance_model(rows, idx);
    }
    for (int s = 0; s < 2; ++s) {
      std::vector<const SubjectRecord*> grp;
      for (const auto& r : rows)
        if ((r.sex ? 1 : 0) == s) grp.push_back(&r);
      if (grp.size() <= 3) continue;
      Eigen::MatrixXd design(Eigen::Index(grp.size()), 3);
      Eigen::VectorXd y(Eigen::Index(grp.size()));
      for (Eigen::Index i = 0; i < Eigen::Index(grp.size()); ++i) {
        design(i, 0) = 1.0;
        design(i, 1) = grp[std::size_t(i)]->lung_volume;
        design(i, 2) = grp[std::size_t(i)]->age;
        y[i] = index_value(*grp[std::size_t(i)], idx);
      }
      rep.per_sex_fit[k][std::size_t(s)] =
          ols(design, y, {"intercept", "lung_volume", "age"});
    }

    if (!by_sex[0].empty() && !by_sex[1].empty()) {
      rep.sex_test[k] = wilcoxon_rank_sum(by_sex[1], by_sex[0]);
      rep.sex_stars[k] = significance_stars(rep.sex_test[k].p_value);
    }
  }
  return rep;
}

}  // namespace vasq
