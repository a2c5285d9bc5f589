#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "amrpc/benchmarks.hpp"
#include "amrpc/gsa.hpp"
#include "amrpc/surrogate.hpp"
#include "oracles.hpp"

using namespace amrpc;

namespace {

std::vector<OrthonormalBasis1D> global_bases(const DesignMatrix& d, int No) {
  std::vector<OrthonormalBasis1D> out;
  for (Eigen::Index j = 0; j < d.values.cols(); ++j) {
    std::vector<double> s(d.values.col(j).data(), d.values.col(j).data() + d.values.rows());
    out.push_back(build_basis(raw_moments(s, 2 * No), No));
  }
  return out;
}

Eigen::MatrixXd apply(const DesignMatrix& d, auto f) {
  Eigen::MatrixXd y(d.values.rows(), 1);
  for (Eigen::Index i = 0; i < d.values.rows(); ++i) y(i, 0) = f(d.values.row(i));
  return y;
}

SurrogateModel fit_model(const AnalyticModel& m, std::size_t n, int Nr, int No, double q = 1.0) {
  return fit(m.training_set(qmc_design(m.space, n)), Nr, No, q);
}

// Model with the structure of a fit but coefficients placed by hand.
SurrogateModel hand_placed(const DesignMatrix& d, int Nr, int No, std::uint64_t seed) {
  SurrogateModel m;
  m.basis = build_piecewise_basis(d, decompose(d, Nr), No);
  m.degrees = degree_set(d.dims(), No, 1.0);
  m.cells = 1;
  m.coefficients.resize(m.coefficients_per_cell());
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (double& c : m.coefficients) c = u(rng);
  return m;
}

Eigen::MatrixXd mc_predictions(const SurrogateModel& m, const ParameterSpace& s, std::size_t n, std::uint64_t seed) {
  return predict_batch(m, mc_design(s, n, seed).values);
}

}  // namespace

TEST(IndexSubset, LabelsAndValidation) {
  EXPECT_EQ(IndexSubset({4, 0, 1}, 5).label(), "125");
  EXPECT_EQ(IndexSubset({0, 9}, 12).label(), "1[10]");
  EXPECT_EQ(IndexSubset({0, 2}, 3).mask(), 5u);
  EXPECT_EQ(IndexSubset::from_mask(6).dims(), (std::vector<std::size_t>{1, 2}));
  EXPECT_THROW(IndexSubset({1, 1}, 3), ConfigError);
  EXPECT_THROW(IndexSubset({3}, 3), ConfigError);
}

TEST(Mean, ConstantAndGlobalLimit) {
  const auto design = qmc_design(detail::uniform_space(3, 0.0, 1.0), 1024);
  for (int Nr : {0, 1, 2}) {
    const auto m = fit({design, Eigen::MatrixXd::Constant(1024, 1, -2.5), std::nullopt}, Nr, 2, 1.0);
    EXPECT_NEAR(mean_from_coeffs(m)[0], -2.5, 1e-12);
    EXPECT_LT(variance_from_coeffs(m)[0], 1e-20);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(amrpc_variance_index(m, IndexSubset({i}, 3))[0], 0.0, 1e-20);
  }
  const auto m = hand_placed(design, 0, 2, 5);
  EXPECT_EQ(mean_from_coeffs(m)[0], m.coefficient(0, 0, *m.degrees.position({0, 0, 0})));
}

TEST(Variance, SingleOrthonormalFunction) {
  const auto design = qmc_design(table1_space(), 2048);
  const auto b = global_bases(design, 2);
  const auto y = apply(design, [&](const auto& r) { return 2.0 * b[3].eval(r(3))[2]; });
  const auto m = fit({design, y, std::nullopt}, 0, 2, 1.0);
  EXPECT_NEAR(mean_from_coeffs(m)[0], 0.0, 1e-10);
  EXPECT_NEAR(variance_from_coeffs(m)[0], 4.0, 1e-9);
}

TEST(Moments, AgreeWithMonteCarloPredictions) {
  for (int Nr : {0, 1}) {
    const auto g = g_function({0.0, 1.0, 9.0});
    const auto m = fit_model(g, 8192, Nr, 3);
    const auto pred = mc_predictions(m, g.space, 200000, 77);
    const auto [mean, var] = oracle::mean_variance(pred.col(0));
    EXPECT_NEAR(mean_from_coeffs(m)[0], mean, 3.0 * std::sqrt(var / 200000.0)) << Nr;
    EXPECT_NEAR(variance_from_coeffs(m)[0], var, 0.02 * var) << Nr;
  }
}

TEST(PceSobol, AdditiveInSpanModel) {
  const auto d = qmc_design(detail::uniform_space(2, -1.0, 3.0), 1024);
  const auto b = global_bases(d, 2);
  const auto y = apply(d, [&](const auto& r) { return b[0].eval(r(0))[1] + 2.0 * b[1].eval(r(1))[1]; });
  const auto m = fit({d, y, std::nullopt}, 0, 2, 1.0);
  EXPECT_NEAR(pce_sobol(m, IndexSubset({0}, 2))[0], 0.2, 1e-8);
  EXPECT_NEAR(pce_sobol(m, IndexSubset({1}, 2))[0], 0.8, 1e-8);
  EXPECT_NEAR(pce_sobol(m, IndexSubset({0, 1}, 2))[0], 0.0, 1e-8);
  EXPECT_NEAR(pce_total(m, 0)[0], pce_sobol(m, IndexSubset({0}, 2))[0], 1e-12);
  EXPECT_NEAR(pce_total(m, 1)[0], 0.8, 1e-8);
}

TEST(PceSobol, PureInteraction) {
  const auto d = qmc_design(table1_space(), 2048);
  const auto b = global_bases(d, 5);
  const auto y = apply(d, [&](const auto& r) {
    double v = 1.0;
    for (int j = 0; j < 5; ++j) v *= b[static_cast<std::size_t>(j)].eval(r(j))[1];
    return v;
  });
  const auto m = fit({d, y, std::nullopt}, 0, 5, 1.0);
  EXPECT_NEAR(pce_sobol(m, IndexSubset({0, 1, 2, 3, 4}, 5))[0], 1.0, 1e-8);
}

TEST(PceSobol, WrongMethodAndEmptySubset) {
  const auto d = qmc_design(detail::uniform_space(2, 0.0, 1.0), 256);
  const auto m = hand_placed(d, 1, 1, 1);
  EXPECT_THROW(pce_sobol(m, IndexSubset({0}, 2)), NumericalError);
  EXPECT_THROW(pce_total(m, 0), NumericalError);
  EXPECT_THROW(amrpc_sobol(m, IndexSubset()), ConfigError);
  EXPECT_THROW(amrpc_variance_index(m, IndexSubset({2}, 3)), ConfigError);
}

TEST(PceSobol, GFunctionAgainstClosedForm) {
  const std::vector<double> a{0.0, 1.0, 9.0};
  const auto truth = oracle::g_function(a);
  const auto m = fit_model(g_function(a), 16384, 0, 6);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_NEAR(pce_sobol(m, IndexSubset({i}, 3))[0], truth.first[i], 0.02) << i;
    EXPECT_NEAR(pce_total(m, i)[0], truth.total[i], 0.02) << i;
  }
}

TEST(PceSobol, BelowFloorIsUndefined) {
  const auto d = qmc_design(detail::uniform_space(2, 0.0, 1.0), 256);
  const auto y = apply(d, [](const auto& r) { return 1.0 + 1e-7 * r(0); });
  const auto m = fit({d, y, std::nullopt}, 0, 1, 1.0);
  EXPECT_TRUE(std::isnan(pce_sobol(m, IndexSubset({0}, 2))[0]));
  EXPECT_TRUE(std::isnan(amrpc_total(m, 0)[0]));
  EXPECT_NEAR(pce_sobol(m, IndexSubset({0}, 2), 0.0)[0], 1.0, 1e-6);
}

TEST(AmrpcIndices, GlobalModelMatchesPcePath) {
  const auto d = qmc_design(table1_space(), 1024);
  const auto m = hand_placed(d, 0, 3, 9);
  const auto var = variance_from_coeffs(m)[0];
  for (std::uint64_t mask = 1; mask < 32; ++mask) {
    const auto I = IndexSubset::from_mask(mask);
    EXPECT_NEAR(amrpc_sobol(m, I)[0], pce_sobol(m, I)[0], 1e-12) << I.label();
    EXPECT_NEAR(amrpc_variance_index(m, I)[0], pce_sobol(m, I)[0] * var, 1e-12 * var) << I.label();
  }
  for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(amrpc_total(m, i)[0], pce_total(m, i)[0], 1e-12);
}

TEST(AmrpcIndices, BruteForceAnovaOnTensorGrid) {
  const auto d = qmc_design(detail::uniform_space(2, 0.0, 1.0), 256);
  std::vector<std::vector<double>> nodes(2);
  for (Eigen::Index j = 0; j < 2; ++j) nodes[static_cast<std::size_t>(j)].assign(d.values.col(j).data(), d.values.col(j).data() + 256);
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto m = hand_placed(d, 1, 1, seed);
    const auto truth = oracle::anova_partial_variances(
        nodes, [&](const std::vector<double>& x) { return predict(m, x)[0]; });
    double sum = 0.0;
    for (std::uint64_t mask = 1; mask < 4; ++mask) {
      const double v = amrpc_variance_index(m, IndexSubset::from_mask(mask))[0];
      EXPECT_NEAR(v, truth[mask], 1e-6 * truth[mask]) << mask;
      sum += v;
    }
    EXPECT_NEAR(sum, variance_from_coeffs(m)[0], 1e-8 * variance_from_coeffs(m)[0]);
    EXPECT_NEAR(std::sqrt(truth[0]), std::abs(mean_from_coeffs(m)[0]), 1e-10);
  }
}

TEST(AmrpcIndices, BruteForceAnovaThreeDimensionsNr2) {
  const auto d = qmc_design(detail::uniform_space(3, 0.0, 1.0), 64);
  std::vector<std::vector<double>> nodes(3);
  for (Eigen::Index j = 0; j < 3; ++j) nodes[static_cast<std::size_t>(j)].assign(d.values.col(j).data(), d.values.col(j).data() + 64);
  const auto m = hand_placed(d, 2, 1, 4);
  const auto truth = oracle::anova_partial_variances(nodes, [&](const std::vector<double>& x) { return predict(m, x)[0]; });
  for (std::uint64_t mask = 1; mask < 8; ++mask) {
    EXPECT_NEAR(amrpc_variance_index(m, IndexSubset::from_mask(mask))[0], truth[mask], 1e-6 * truth[mask]) << mask;
  }
}

TEST(AmrpcIndices, AdditiveFitAtRefinementOne) {
  const auto d = qmc_design(detail::uniform_space(2, -1.0, 3.0), 8192);
  const auto b = global_bases(d, 2);
  const auto y = apply(d, [&](const auto& r) { return b[0].eval(r(0))[1] + 2.0 * b[1].eval(r(1))[1]; });
  const auto m = fit({d, y, std::nullopt}, 1, 2, 1.0);
  const double s = amrpc_sobol(m, IndexSubset({0}, 2))[0] + amrpc_sobol(m, IndexSubset({1}, 2))[0];
  EXPECT_NEAR(s, 1.0, 2e-2);
}

TEST(AmrpcIndices, GFunctionTotals) {
  const std::vector<double> a{0.0, 1.0, 9.0};
  const auto truth = oracle::g_function(a);
  const auto m = fit_model(g_function(a), 16384, 1, 2);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(amrpc_total(m, i)[0], truth.total[i], 0.03) << i;
}

TEST(Invariants, CompletenessAndTotalsDominate) {
  const auto d = qmc_design(table1_space(), 1024);
  for (int Nr : {0, 1}) {
    const auto m = hand_placed(d, Nr, 2, 20 + static_cast<std::uint64_t>(Nr));
    IndexRequest req;
    req.all = true;
    const auto r = analyze(m, req);
    ASSERT_EQ(r.interactions.size(), 31u);
    double sum = 0.0;
    for (const auto& f : r.interactions) sum += f.values[0];
    EXPECT_NEAR(sum, 1.0, 1e-8);
    for (std::size_t i = 0; i < 5; ++i) EXPECT_GE(r.total[i].values[0], r.first[i].values[0] - 1e-10);
    // Moebius path versus per-subset inclusion-exclusion.
    for (const auto& f : r.interactions) {
      EXPECT_NEAR(f.values[0], amrpc_sobol(m, f.subset)[0], 1e-10) << f.subset.label();
    }
    for (std::size_t i = 0; i < 5; ++i) {
      double t = 0.0;
      for (const auto& f : r.interactions) {
        if ((f.subset.mask() >> i) & 1u) t += f.values[0];
      }
      EXPECT_NEAR(r.total[i].values[0], t, 1e-10);
    }
  }
}

TEST(Invariants, VarianceIndicesSumToVariance) {
  const auto d = qmc_design(detail::uniform_space(3, 0.0, 2.0), 512);
  for (int Nr : {0, 1, 2}) {
    const auto m = hand_placed(d, Nr, 2, 30 + static_cast<std::uint64_t>(Nr));
    const double var = variance_from_coeffs(m)[0];
    double sum = 0.0;
    for (std::uint64_t mask = 1; mask < 8; ++mask) sum += amrpc_variance_index(m, IndexSubset::from_mask(mask))[0];
    EXPECT_NEAR(sum, var, 1e-8 * var) << Nr;
  }
}

TEST(Invariants, ScalingLeavesIndicesUnchanged) {
  const auto d = qmc_design(table1_space(), 1024);
  auto m = hand_placed(d, 1, 1, 40);
  auto scaled = m;
  for (double& c : scaled.coefficients) c *= 123.0;
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_NEAR(amrpc_total(m, i)[0], amrpc_total(scaled, i)[0], 1e-10);
    EXPECT_NEAR(amrpc_sobol(m, IndexSubset({i}, 5))[0], amrpc_sobol(scaled, IndexSubset({i}, 5))[0], 1e-10);
  }
}

TEST(SpaceAverage, UniformFieldAndExclusion) {
  const std::vector<double> v(10, 0.4);
  std::vector<double> var(10, 1.0);
  auto s = space_average(v, var);
  EXPECT_DOUBLE_EQ(s.mean, 0.4);
  EXPECT_EQ(s.summary.q3 - s.summary.q1, 0.0);
  EXPECT_EQ(s.retained, 10u);

  std::vector<double> w{0.1, 0.2, 0.3, 5.0};
  std::vector<double> wv{1.0, 1.0, 1.0, 1e-12};
  s = space_average(w, wv);
  EXPECT_EQ(s.retained, 3u);
  EXPECT_NEAR(s.mean, 0.2, 1e-15);

  s = space_average(w, std::vector<double>(4, 0.0));
  EXPECT_TRUE(s.empty);
  EXPECT_EQ(s.retained, 0u);
  EXPECT_FALSE(std::isnan(s.mean));
  EXPECT_THROW(space_average(w, std::vector<double>(3, 1.0)), DataError);
}

TEST(SpaceAverage, FiveNumberSummaryMatchesSort) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> normal(0.5, 0.1);
  std::vector<double> v(1001);
  for (auto& x : v) x = normal(rng);
  v[3] = 3.0;
  v[10] = -2.0;
  const auto s = space_average(v, std::vector<double>(v.size(), 1.0));
  auto sorted = v;
  std::sort(sorted.begin(), sorted.end());
  // n = 1001: h = 1000 p falls on order statistics exactly.
  EXPECT_EQ(s.summary.q1, sorted[250]);
  EXPECT_EQ(s.summary.median, sorted[500]);
  EXPECT_EQ(s.summary.q3, sorted[750]);
  const double iqr = sorted[750] - sorted[250];
  std::vector<double> inside, outside;
  for (double x : sorted) (x < sorted[250] - 1.5 * iqr || x > sorted[750] + 1.5 * iqr ? outside : inside).push_back(x);
  EXPECT_EQ(s.summary.lower_whisker, inside.front());
  EXPECT_EQ(s.summary.upper_whisker, inside.back());
  auto out = s.summary.outliers;
  std::sort(out.begin(), out.end());
  EXPECT_EQ(out, outside);
}

TEST(MonteCarloOracle, LinearModelShares) {
  const auto space = detail::uniform_space(3, 0.0, 1.0);
  const std::vector<double> c{1.0, 2.0, 3.0};
  Evaluator f = [&](std::span<const double> x, std::span<double> y) { y[0] = c[0] * x[0] + c[1] * x[1] + c[2] * x[2]; };
  const auto r = mc_sobol_oracle(f, 1, space, 20000, 3);
  for (std::size_t i = 0; i < 3; ++i) {
    const double truth = c[i] * c[i] / 14.0;
    EXPECT_NEAR(r.cells[0].first[i], truth, 3.0 * r.cells[0].first_sd[i]) << i;
    EXPECT_NEAR(r.cells[0].total[i], truth, 3.0 * r.cells[0].total_sd[i]) << i;
  }
}

TEST(MonteCarloOracle, ConstantUndefinedAndSmallN) {
  const auto space = detail::uniform_space(2, 0.0, 1.0);
  Evaluator f = [](std::span<const double>, std::span<double> y) { y[0] = 4.0; };
  const auto r = mc_sobol_oracle(f, 1, space, 256, 1);
  EXPECT_FALSE(r.cells[0].defined);
  EXPECT_TRUE(std::isnan(r.cells[0].first[0]));
  EXPECT_THROW(mc_sobol_oracle(f, 1, space, 63, 1), ConfigError);
}

TEST(MonteCarloOracle, DeterministicPerSeed) {
  const auto g = g_function({0.0, 1.0});
  const auto a = mc_sobol_oracle(g.evaluate, 1, g.space, 1000, 5, {}, 20);
  const auto b = mc_sobol_oracle(g.evaluate, 1, g.space, 1000, 5, {}, 20);
  EXPECT_EQ(a.cells[0].total, b.cells[0].total);
  EXPECT_EQ(a.cells[0].total_sd, b.cells[0].total_sd);
}

TEST(MonteCarloOracle, GFunctionClosedForm) {
  const std::vector<double> a{0.0, 1.0, 9.0};
  const auto truth = oracle::g_function(a);
  const auto g = g_function(a);
  const auto r = mc_sobol_oracle(g.evaluate, 1, g.space, 200000, 11, {}, 50);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_NEAR(r.cells[0].first[i], truth.first[i], 0.01) << i;
    EXPECT_NEAR(r.cells[0].total[i], truth.total[i], 0.01) << i;
  }
}
