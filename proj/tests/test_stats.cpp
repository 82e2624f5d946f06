#include "vasq/stats.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "vasq/phantom.hpp"

using namespace vasq;

namespace {

// records with a known linear structure: slpa = 1000 + 300*volume - 200*sex - 4*age
// plus an explicit disturbance column the caller controls
SubjectRecord make_record(std::size_t i, int sex, double age, double volume, double eps = 0.0) {
  SubjectRecord r;
  r.id = "row-" + std::to_string(i);
  r.sex = sex;
  r.age = age;
  r.lung_volume = volume;
  r.slpa = 1000.0 + 300.0 * volume - 200.0 * sex - 4.0 * age + eps;
  r.slpv = 0.9 * r.slpa;
  r.bcpa = std::floor(2.0 * r.slpa);
  r.bcpv = std::floor(2.0 * r.slpv);
  return r;
}

// deterministic hash-to-unit-interval for spreading covariates without <random>
double unit(std::size_t i, std::size_t salt) {
  SplitMix64 g(mix_seed(salt, i));
  return double(g() >> 11) * 0x1.0p-53;
}

std::vector<SubjectRecord> synthetic_rows(std::size_t n, double noise = 0.0) {
  std::vector<SubjectRecord> rows;
  for (std::size_t i = 0; i < n; ++i) {
    const int sex = unit(i, 1) < 0.5 ? 0 : 1;
    const double age = 30.0 + 50.0 * unit(i, 2);
    const double volume = 4.0 + 3.0 * unit(i, 3);
    const double eps = noise * (2.0 * unit(i, 4) - 1.0);
    rows.push_back(make_record(i, sex, age, volume, eps));
  }
  return rows;
}

}  // namespace

// --- volumes ------------------------------------------------------------------

TEST(LungVolume, SubtractsIntrapulmonaryVessels) {
  const Index3 dims{100, 100, 100};
  LabelMask lung = LabelMask::zeros(dims);
  std::fill(lung.data.begin(), lung.data.end(), std::uint8_t(1));
  LabelMask vessels = LabelMask::zeros(dims);

  // a full 100^3 lung at 1 mm spacing is exactly one liter
  EXPECT_DOUBLE_EQ(lung_volume(lung, vessels, {1, 1, 1}), 1.0);

  // 5% of the lung taken by vessels leaves 0.95 L
  const std::size_t five_percent = lung.size() / 20;
  for (std::size_t i = 0; i < five_percent; ++i) vessels.data[i] = kArtery;
  EXPECT_DOUBLE_EQ(lung_volume(lung, vessels, {1, 1, 1}), 0.95);

  // vessels outside the lung do not count
  LabelMask half_lung = LabelMask::zeros(dims);
  for (std::size_t i = lung.size() / 2; i < lung.size(); ++i) half_lung.data[i] = 1;
  LabelMask outside = LabelMask::zeros(dims);
  for (std::size_t i = 0; i < lung.size() / 4; ++i) outside.data[i] = kVein;
  EXPECT_DOUBLE_EQ(lung_volume(half_lung, outside, {1, 1, 1}), 0.5);

  // spacing scales the voxel volume
  EXPECT_NEAR(lung_volume(lung, LabelMask::zeros(dims), {0.5, 0.5, 2.0}), 0.5, 1e-12);

  EXPECT_THROW(lung_volume(LabelMask::zeros(dims), vessels, {1, 1, 1}), validation_error);
}

// --- abundance indices ----------------------------------------------------------

TEST(Abundance, TracksTheAnalyticCenterlineLength) {
  // phantom generated on a grid that already matches the metric spacing, so
  // the standardization step is loss-free and artery/vein stay congruent
  PhantomLayout lay;
  lay.dims = {196, 196, 128};
  lay.spacing = {0.652344, 0.652344, 1.0};
  lay.vein_offset = {46 * 0.652344, -46 * 0.652344, 0.0};
  const PhantomCase pc = generate_phantom(TreeSpec{}, lay);

  const AbundanceIndices idx =
      abundance_indices(pc.truth, pc.levels_artery, pc.levels_vein, pc.lung_mask);

  const double analytic_cm = pc.analytic_artery.total_length_mm / 10.0;
  EXPECT_NEAR(idx.slpa_cm, analytic_cm, 0.08 * analytic_cm);
  EXPECT_GT(idx.sl_raw_artery, 0u);

  // the vein tree is a translated copy, so its indices must match exactly
  EXPECT_EQ(idx.slpa_cm, idx.slpv_cm);
  EXPECT_EQ(idx.sl_raw_artery, idx.sl_raw_vein);
  EXPECT_EQ(idx.bcpa, idx.bcpv);
  EXPECT_EQ(idx.bcpa, pc.analytic_artery.junction_count);
}

TEST(Abundance, AbsentClassScoresZero) {
  // a straight artery tube and no vein at all
  const Index3 dims{24, 24, 48};
  LabelMask truth = LabelMask::zeros(dims);
  for (int z = 4; z < 44; ++z)
    for (int y = 10; y <= 14; ++y)
      for (int x = 10; x <= 14; ++x)
        if ((x - 12) * (x - 12) + (y - 12) * (y - 12) <= 4) truth.at(x, y, z) = kArtery;

  const BranchLevels no_levels;  // no cardinal masks: the stem fallback roots the tree
  const AbundanceIndices idx =
      abundance_indices(truth, no_levels, no_levels, LabelMask::zeros(dims));

  EXPECT_GT(idx.slpa_cm, 0.0);
  EXPECT_EQ(idx.bcpa, 0u);  // an unbranched tube has no junctions
  EXPECT_DOUBLE_EQ(idx.slpv_cm, 0.0);
  EXPECT_EQ(idx.bcpv, 0u);
  EXPECT_EQ(idx.sl_raw_vein, 0u);
}

// --- regression -------------------------------------------------------------------

TEST(Regression, RecoversPlantedCoefficients) {
  CohortModel m;  // noise-free: the table is an exact linear function
  const auto rows = generate_cohort(200, m);

  const RegressionResult fit = fit_abundance_model(rows, AbundanceIndex::slpa);
  ASSERT_EQ(fit.coef.size(), 4u);
  EXPECT_EQ(fit.n, 200u);
  const double planted[4] = {m.beta0, m.beta_volume, m.beta_sex, m.beta_age};
  for (int j = 0; j < 4; ++j)
    EXPECT_NEAR(fit.coef[std::size_t(j)], planted[j], 1e-8 * std::fabs(planted[j]))
        << fit.names[std::size_t(j)];
  EXPECT_GT(fit.r_squared, 1.0 - 1e-12);

  // the vein column is a fixed multiple, so every coefficient scales with it
  const RegressionResult vein = fit_abundance_model(rows, AbundanceIndex::slpv);
  for (int j = 0; j < 4; ++j)
    EXPECT_NEAR(vein.coef[std::size_t(j)], m.vein_scale * planted[j],
                1e-8 * std::fabs(planted[j]));

  // with noise the estimates land within a few standard errors
  m.noise_sd = 55.0;
  const RegressionResult noisy = fit_abundance_model(generate_cohort(500, m), AbundanceIndex::slpa);
  for (int j = 0; j < 4; ++j) {
    EXPECT_GT(noisy.se[std::size_t(j)], 0.0);
    EXPECT_NEAR(noisy.coef[std::size_t(j)], planted[j], 5.0 * noisy.se[std::size_t(j)])
        << noisy.names[std::size_t(j)];
  }
  EXPECT_LT(noisy.pvalue[2], 1e-6);  // the sex effect dwarfs the noise
}

TEST(Regression, SatisfiesLeastSquaresIdentities) {
  const auto rows = synthetic_rows(40, 80.0);
  const auto n = Eigen::Index(rows.size());
  Eigen::MatrixXd design(n, 4);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& r = rows[std::size_t(i)];
    design(i, 0) = 1.0;
    design(i, 1) = r.lung_volume;
    design(i, 2) = double(r.sex);
    design(i, 3) = r.age;
    y[i] = r.slpa;
  }
  const std::vector<std::string> names{"intercept", "lung_volume", "sex", "age"};

  const RegressionResult base = ols(design, y, names);
  Eigen::VectorXd beta(4);
  for (int j = 0; j < 4; ++j) beta[j] = base.coef[std::size_t(j)];

  // residuals are orthogonal to every design column
  const Eigen::VectorXd resid = y - design * beta;
  for (int j = 0; j < 4; ++j) {
    const double scale = design.col(j).norm() * y.norm();
    EXPECT_LE(std::fabs(design.col(j).dot(resid)), 1e-8 * scale) << names[std::size_t(j)];
  }

  // shifting the target moves only the intercept
  const RegressionResult shifted = ols(design, (y.array() + 100.0).matrix(), names);
  EXPECT_NEAR(shifted.coef[0], base.coef[0] + 100.0, 1e-7);
  for (int j = 1; j < 4; ++j) EXPECT_NEAR(shifted.coef[std::size_t(j)], base.coef[std::size_t(j)], 1e-8);

  // rescaling the target rescales the fit; negation flips it and keeps the tests
  const RegressionResult scaled = ols(design, (y * 3.0).eval(), names);
  const RegressionResult negated = ols(design, (-y).eval(), names);
  for (int j = 0; j < 4; ++j) {
    EXPECT_NEAR(scaled.coef[std::size_t(j)], 3.0 * base.coef[std::size_t(j)], 1e-7);
    EXPECT_NEAR(negated.coef[std::size_t(j)], -base.coef[std::size_t(j)], 1e-9);
    EXPECT_NEAR(negated.pvalue[std::size_t(j)], base.pvalue[std::size_t(j)], 1e-12);
  }
  EXPECT_NEAR(scaled.r_squared, base.r_squared, 1e-12);

  // a constant target has nothing to explain
  const RegressionResult flat =
      ols(design, Eigen::VectorXd::Constant(n, 7.0), names);
  EXPECT_DOUBLE_EQ(flat.r_squared, 0.0);
  for (int j = 1; j < 4; ++j) EXPECT_NEAR(flat.coef[std::size_t(j)], 0.0, 1e-10);
}

TEST(Regression, RejectsDegenerateDesigns) {
  Eigen::MatrixXd design(10, 3);
  Eigen::VectorXd y(10);
  for (Eigen::Index i = 0; i < 10; ++i) {
    design(i, 0) = 1.0;
    design(i, 1) = double(i);
    design(i, 2) = 2.0 * double(i);  // collinear with the second column
    y[i] = double(i * i);
  }
  try {
    ols(design, y, {"intercept", "x", "two_x"});
    FAIL() << "rank-deficient design was accepted";
  } catch (const validation_error& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("rank-deficient"), std::string::npos) << msg;
    // the offending column is called out by name
    EXPECT_TRUE(msg.find("x") != std::string::npos) << msg;
  }

  EXPECT_THROW(ols(Eigen::MatrixXd::Ones(3, 4), Eigen::VectorXd::Zero(3),
                   {"a", "b", "c", "d"}),
               validation_error);
  EXPECT_THROW(ols(design, Eigen::VectorXd::Zero(4), {"a", "b", "c"}), validation_error);
  EXPECT_THROW(ols(design, y, {"only", "two"}), validation_error);

  // a single-sex cohort makes the sex column a copy of the intercept
  std::vector<SubjectRecord> males;
  for (std::size_t i = 0; i < 12; ++i)
    males.push_back(make_record(i, 1, 40.0 + double(i), 5.0 + 0.1 * double(i)));
  try {
    fit_abundance_model(males, AbundanceIndex::slpa);
    FAIL() << "constant sex column was accepted";
  } catch (const validation_error& e) {
    EXPECT_NE(std::string(e.what()).find("rank-deficient"), std::string::npos) << e.what();
  }
}

// --- rank tests --------------------------------------------------------------------

TEST(RankTests, SignedRankEnumeratesSmallSamples) {
  // five uniformly positive differences: the most extreme of the 32 sign
  // patterns, so the two-sided exact p is 2/32
  const std::vector<double> before{10.0, 12.0, 9.0, 14.0, 11.0};
  const std::vector<double> after{11.5, 14.0, 12.0, 18.5, 12.0};
  const TestResult r = wilcoxon_signed_rank(after, before);
  EXPECT_TRUE(r.exact);
  EXPECT_EQ(r.n, 5u);
  EXPECT_DOUBLE_EQ(r.statistic, 15.0);  // all positive ranks
  EXPECT_DOUBLE_EQ(r.p_value, 0.0625);

  // swapping the samples mirrors the statistic but not the p-value
  const TestResult flipped = wilcoxon_signed_rank(before, after);
  EXPECT_DOUBLE_EQ(flipped.statistic, 0.0);
  EXPECT_DOUBLE_EQ(flipped.p_value, r.p_value);

  EXPECT_THROW(wilcoxon_signed_rank(before, before), validation_error);
  EXPECT_THROW(wilcoxon_signed_rank(before, {1.0}), validation_error);
}

TEST(RankTests, RankSumSeesNoDifferenceInPermutedCopies) {
  const std::vector<double> x{3.0, 1.0, 4.0, 1.5, 5.0, 9.0};
  std::vector<double> y = x;
  std::rotate(y.begin(), y.begin() + 2, y.end());
  const TestResult r = wilcoxon_rank_sum(x, y);
  EXPECT_TRUE(r.exact);
  EXPECT_EQ(r.n1, 6u);
  EXPECT_EQ(r.n2, 6u);
  EXPECT_DOUBLE_EQ(r.p_value, 1.0);

  EXPECT_THROW(wilcoxon_rank_sum({}, y), validation_error);
  EXPECT_THROW(wilcoxon_rank_sum(x, {}), validation_error);
}

TEST(RankTests, ExactAndApproximateTailsAgreeAtTheCutoff) {
  // twelve informative pairs sit right at the exact-enumeration limit; the
  // normal approximation recomputed by hand must land within 0.01 of it
  std::vector<double> a, b;
  for (std::size_t i = 0; i < 12; ++i) {
    const double delta = (i % 3 == 0 ? -1.0 : 1.0) * (1.0 + double(i) * 0.37);
    a.push_back(100.0 + double(i));
    b.push_back(100.0 + double(i) - delta);
  }
  const TestResult exact = wilcoxon_signed_rank(a, b);
  ASSERT_TRUE(exact.exact);
  ASSERT_EQ(exact.n, 12u);

  const double n = 12.0;
  const double mu = n * (n + 1.0) / 4.0;
  const double var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0;  // distinct magnitudes: no ties
  double num = exact.statistic - mu;
  num -= std::copysign(std::min(0.5, std::fabs(num)), num);
  const double approx = std::erfc(std::fabs(num / std::sqrt(var)) / std::sqrt(2.0));
  EXPECT_NEAR(exact.p_value, approx, 0.01);

  // thirteen pairs tip the routine over to the same approximation
  a.push_back(50.0);
  b.push_back(51.0);
  const TestResult large = wilcoxon_signed_rank(a, b);
  EXPECT_FALSE(large.exact);
}

TEST(RankTests, ChiSquareFlagsAPerfectMedianSplit) {
  std::vector<SubjectRecord> rows;
  for (std::size_t i = 0; i < 40; ++i) {
    SubjectRecord r;
    r.id = "r" + std::to_string(i);
    r.sex = i < 20 ? 1 : 0;
    r.slpa = r.sex ? 100.0 + double(i) : 1.0 + double(i);
    rows.push_back(r);
  }
  const TestResult r = chi_square_sex_association(rows, AbundanceIndex::slpa);
  EXPECT_EQ(r.method, "chi-square");
  EXPECT_NEAR(r.statistic, 40.0, 1e-9);  // perfect association: chi^2 == n
  EXPECT_LT(r.p_value, 1e-9);
  EXPECT_EQ(r.n1, 20u);
  EXPECT_EQ(r.n2, 20u);

  // degenerate tables are refused rather than scored
  std::vector<SubjectRecord> one_sex(rows.begin(), rows.begin() + 20);
  EXPECT_THROW(chi_square_sex_association(one_sex, AbundanceIndex::slpa), validation_error);
  for (auto& row : rows) row.slpa = 5.0;
  EXPECT_THROW(chi_square_sex_association(rows, AbundanceIndex::slpa), validation_error);
  EXPECT_THROW(chi_square_sex_association({}, AbundanceIndex::slpa), validation_error);
}

TEST(RankTests, StarsFollowTheConventionalThresholds) {
  EXPECT_EQ(significance_stars(0.2), "");
  EXPECT_EQ(significance_stars(0.05), "");
  EXPECT_EQ(significance_stars(0.049), "*");
  EXPECT_EQ(significance_stars(0.01), "*");
  EXPECT_EQ(significance_stars(0.0099), "**");
  EXPECT_EQ(significance_stars(0.001), "**");
  EXPECT_EQ(significance_stars(0.0009), "***");
  EXPECT_EQ(significance_stars(0.0001), "***");
  EXPECT_EQ(significance_stars(0.00009), "****");
}

// --- cohort report ------------------------------------------------------------------

TEST(CohortReport, SummarizesAPlantedCohort) {
  CohortModel m;
  m.noise_sd = 40.0;
  const auto rows = generate_cohort(300, m);
  const CohortReport rep = cohort_report(rows);

  EXPECT_EQ(rep.n, 300u);
  const std::size_t slpa = 0;  // kAbundanceIndices order

  const GroupSummary& female = rep.sex_summary[slpa][0];
  const GroupSummary& male = rep.sex_summary[slpa][1];
  EXPECT_EQ(female.n + male.n, 300u);
  EXPECT_GT(female.n, 0u);
  EXPECT_GT(male.n, 0u);
  EXPECT_NEAR(female.sem, female.sd / std::sqrt(double(female.n)), 1e-12);

  // the planted sex effect (-918.86 cm) is partially offset by the larger
  // male lung volumes (+420 cm/L * 1.3 L), leaving males ~370 cm lower
  EXPECT_LT(male.mean, female.mean - 200.0);

  const RegressionResult& joint = rep.joint_fit[slpa];
  ASSERT_EQ(joint.coef.size(), 4u);
  EXPECT_NEAR(joint.coef[2], m.beta_sex, 5.0 * joint.se[2]);

  for (int s = 0; s < 2; ++s) {
    const RegressionResult& per_sex = rep.per_sex_fit[slpa][std::size_t(s)];
    ASSERT_EQ(per_sex.coef.size(), 3u);  // 1 + lung_volume + age
    EXPECT_NEAR(per_sex.coef[1], m.beta_volume, 5.0 * per_sex.se[1]);
  }

  EXPECT_LT(rep.sex_test[slpa].p_value, 0.001);
  EXPECT_FALSE(rep.sex_stars[slpa].empty());

  // decades cover the sampled [30, 80) range in order
  ASSERT_FALSE(rep.age_summary[slpa].empty());
  int prev = 0;
  std::size_t binned = 0;
  for (const auto& bin : rep.age_summary[slpa]) {
    EXPECT_GT(bin.decade, prev);
    EXPECT_GE(bin.decade, 30);
    EXPECT_LE(bin.decade, 70);
    prev = bin.decade;
    binned += bin.stats.n;
  }
  EXPECT_EQ(binned, 300u);
}

TEST(CohortReport, HandlesTinyDegenerateCohorts) {
  // four subjects with identical indices: too few rows for any fit, all ranks
  // tied (the eps term cancels the sex effect so the sexes coincide)
  std::vector<SubjectRecord> rows;
  for (std::size_t i = 0; i < 4; ++i)
    rows.push_back(make_record(i, int(i % 2), 50.0, 5.0, 200.0 * double(i % 2)));
  const CohortReport rep = cohort_report(rows);

  EXPECT_EQ(rep.n, 4u);
  for (int s = 0; s < 2; ++s) {
    EXPECT_EQ(rep.sex_summary[0][std::size_t(s)].n, 2u);
    EXPECT_DOUBLE_EQ(rep.sex_summary[0][std::size_t(s)].sd, 0.0);
    EXPECT_DOUBLE_EQ(rep.sex_summary[0][std::size_t(s)].sem, 0.0);
    EXPECT_EQ(rep.per_sex_fit[0][std::size_t(s)].n, 0u);  // skipped, not fitted
  }
  EXPECT_EQ(rep.joint_fit[0].n, 0u);
  EXPECT_DOUBLE_EQ(rep.sex_test[0].p_value, 1.0);  // male and female values coincide
  EXPECT_EQ(rep.sex_stars[0], "");
}
