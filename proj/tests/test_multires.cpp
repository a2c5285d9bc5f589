#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include <gtest/gtest.h>

#include "amrpc/distributions.hpp"
#include "amrpc/multires.hpp"
#include "amrpc/qmc.hpp"

using namespace amrpc;

namespace {

DesignMatrix column_design(std::vector<double> v) {
  DesignMatrix d;
  d.values.resize(static_cast<Eigen::Index>(v.size()), 1);
  for (std::size_t i = 0; i < v.size(); ++i) d.values(static_cast<Eigen::Index>(i), 0) = v[i];
  d.names = {"x"};
  return d;
}

std::set<MultiIndex> brute_force_set(std::size_t M, int No, double q) {
  std::set<MultiIndex> out;
  MultiIndex a(M, 0);
  while (true) {
    double s = 0.0;
    for (int v : a) s += std::pow(v, q);
    if (std::pow(s, 1.0 / q) <= No + 1e-9) out.insert(a);
    std::size_t j = 0;
    while (j < M && a[j] == No) a[j++] = 0;
    if (j == M) break;
    ++a[j];
  }
  return out;
}

std::set<MultiIndex> as_set(const DegreeIndexSet& d) { return {d.items().begin(), d.items().end()}; }

// max |G - I| of the empirical Gram matrix of all Phi_{l,alpha} over the design.
double global_gram_deviation(const PiecewiseBasis& basis, const DegreeIndexSet& degrees, const DesignMatrix& design) {
  const std::size_t nsd = basis.decomposition.subdomains();
  const std::size_t T = degrees.size();
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(nsd * T), static_cast<Eigen::Index>(nsd * T));
  std::vector<double> phi(T);
  std::vector<double> x(design.dims());
  for (std::size_t i = 0; i < design.rows(); ++i) {
    for (std::size_t j = 0; j < x.size(); ++j) x[j] = design.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    const auto loc = basis.evaluate(degrees, x, phi);
    Eigen::VectorXd full = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(nsd * T));
    for (std::size_t a = 0; a < T; ++a) full(static_cast<Eigen::Index>(loc.linear * T + a)) = phi[a];
    g.noalias() += full * full.transpose();
  }
  g /= static_cast<double>(design.rows());
  return (g - Eigen::MatrixXd::Identity(g.rows(), g.cols())).cwiseAbs().maxCoeff();
}

ParameterSpace two_dim_space() {
  const auto t = table1_space();
  return ParameterSpace({t[0], t[2]});
}

}  // namespace

TEST(Decompose, NoRefinementIsOneBin) {
  const auto d = qmc_design(table1_space(), 100);
  const auto dec = decompose(d, 0);
  ASSERT_EQ(dec.bins(), 1u);
  EXPECT_EQ(dec.subdomains(), 1u);
  for (std::size_t j = 0; j < 5; ++j) {
    EXPECT_EQ(dec.members[j][0].size(), 100u);
    EXPECT_EQ(dec.breakpoints[j].front(), d.values.col(static_cast<Eigen::Index>(j)).minCoeff());
    EXPECT_EQ(dec.breakpoints[j].back(), d.values.col(static_cast<Eigen::Index>(j)).maxCoeff());
  }
}

TEST(Decompose, MedianSplitOfFourValues) {
  const auto dec = decompose(column_design({3, 1, 4, 2}), 1);
  ASSERT_EQ(dec.breakpoints[0].size(), 3u);
  EXPECT_EQ(dec.breakpoints[0][1], 2.5);
  EXPECT_EQ(dec.members[0][0], (std::vector<std::size_t>{1, 3}));
  EXPECT_EQ(dec.members[0][1], (std::vector<std::size_t>{0, 2}));
  EXPECT_TRUE(dec.warnings.empty());
}

TEST(Decompose, EqualMassOnDivisibleCounts) {
  const auto d = mc_design(ParameterSpace({{"u", Uniform{0, 1}}}), 4096, 3);
  const auto dec = decompose(d, 2);
  for (std::size_t b = 0; b < 4; ++b) EXPECT_EQ(dec.members[0][b].size(), 1024u);
}

TEST(Decompose, BinCountsDifferByAtMostOne) {
  for (std::size_t n : {1001u, 333u, 77u}) {
    const auto d = mc_design(table1_space(), n, n);
    for (int Nr = 1; Nr <= 3; ++Nr) {
      const auto dec = decompose(d, Nr);
      for (std::size_t j = 0; j < 5; ++j) {
        std::size_t lo = n, hi = 0, sum = 0;
        for (const auto& m : dec.members[j]) {
          lo = std::min(lo, m.size());
          hi = std::max(hi, m.size());
          sum += m.size();
        }
        EXPECT_LE(hi - lo, 1u) << "n=" << n << " Nr=" << Nr;
        EXPECT_EQ(sum, n);
      }
    }
  }
}

TEST(Decompose, TiesMoveBreakpointWithWarning) {
  const auto dec = decompose(column_design({1, 1, 1, 1, 2, 3}), 1);
  EXPECT_EQ(dec.breakpoints[0][1], 1.5);
  EXPECT_EQ(dec.members[0][0].size(), 4u);
  EXPECT_EQ(dec.members[0][1].size(), 2u);
  EXPECT_EQ(dec.warnings.size(), 1u);
}

TEST(Decompose, TooFewDistinctValuesNamesDimension) {
  DesignMatrix d;
  d.values.resize(6, 2);
  d.values << 1, 5, 2, 5, 3, 5, 4, 5, 5, 5, 6, 5;
  d.names = {"a", "b"};
  try {
    decompose(d, 1);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("dimension 2 (b)"), std::string::npos) << e.what();
  }
}

TEST(Decompose, DistributionQuantileVariant) {
  const auto space = table1_space();
  const auto d = qmc_design(space, 1024);
  const auto dec = decompose(d, 1, space);
  for (std::size_t j = 0; j < 5; ++j) {
    EXPECT_NEAR(space[j].distribution.cdf(dec.breakpoints[j][1]), 0.5, 1e-10);
    // Row 1 of the sequence sits exactly on the median and goes to the upper bin.
    EXPECT_NEAR(static_cast<double>(dec.members[j][0].size()), 512.0, 1.0);
    EXPECT_EQ(dec.members[j][0].size() + dec.members[j][1].size(), 1024u);
  }
}

TEST(Decompose, RejectsNegativeOrHugeRefinement) {
  const auto d = qmc_design(table1_space(), 64);
  EXPECT_THROW(decompose(d, -1), ConfigError);
  EXPECT_THROW(decompose(d, 7), ConfigError);
}

TEST(Locate, NoRefinementIsOrigin) {
  const auto d = qmc_design(table1_space(), 64);
  const auto dec = decompose(d, 0);
  const std::vector<double> x{3.0, 1e-3, 2.0, 5.0, 1e-6};
  const auto loc = locate(dec, x);
  EXPECT_EQ(loc.linear, 0u);
  EXPECT_EQ(loc.index.l, (std::vector<std::size_t>(5, 0)));
}

TEST(Locate, InteriorBreakpointGoesUp) {
  const auto dec = decompose(column_design({1, 2, 3, 4}), 1);
  EXPECT_EQ(locate(dec, std::vector<double>{2.5}).linear, 1u);
  EXPECT_EQ(locate(dec, std::vector<double>{4.0}).linear, 1u);
  EXPECT_EQ(locate(dec, std::vector<double>{1.0}).linear, 0u);
}

TEST(Locate, OutsidePointsAreClampedAndFlagged) {
  const auto dec = decompose(column_design({1, 2, 3, 4}), 1);
  const auto lo = locate(dec, std::vector<double>{-5.0});
  const auto hi = locate(dec, std::vector<double>{9.0});
  EXPECT_TRUE(lo.clamped);
  EXPECT_TRUE(hi.clamped);
  EXPECT_EQ(lo.linear, 0u);
  EXPECT_EQ(hi.linear, 1u);
  EXPECT_FALSE(locate(dec, std::vector<double>{2.0}).clamped);
}

TEST(Locate, AgreesWithExhaustiveScan) {
  const auto space = table1_space();
  const auto dec = decompose(qmc_design(space, 2048), 2);
  const auto pts = mc_design(space, 10000, 99);
  for (Eigen::Index i = 0; i < pts.values.rows(); ++i) {
    std::vector<double> x(5);
    for (std::size_t j = 0; j < 5; ++j) x[j] = pts.values(i, static_cast<Eigen::Index>(j));
    const auto loc = locate(dec, x);
    for (std::size_t j = 0; j < 5; ++j) {
      const auto& bp = dec.breakpoints[j];
      std::size_t bin = 0;
      for (std::size_t b = 0; b < 4; ++b) {
        const bool last = b == 3;
        const bool inside = (b == 0 ? true : x[j] >= bp[b]) && (last ? true : x[j] < bp[b + 1]);
        if (inside) bin = b;
      }
      ASSERT_EQ(loc.index.l[j], bin);
    }
  }
}

TEST(SDIndex, LinearizationIsBijective) {
  const std::size_t M = 3;
  const int Nr = 2;
  std::set<std::size_t> seen;
  for (std::size_t lin = 0; lin < (std::size_t{1} << (M * Nr)); ++lin) {
    const auto idx = SDIndex::from_linear(lin, M, Nr);
    std::size_t expected = 0;
    for (std::size_t j = 0; j < M; ++j) expected += idx.l[j] << (Nr * j);
    EXPECT_EQ(expected, lin);
    EXPECT_EQ(idx.linear(Nr), lin);
    seen.insert(idx.linear(Nr));
  }
  EXPECT_EQ(seen.size(), 64u);
}

TEST(DegreeSet, TotalDegreeCount) {
  EXPECT_EQ(degree_set(5, 2, 1.0).size(), 21u);
  for (std::size_t M = 1; M <= 6; ++M) {
    for (int No = 0; No <= 6; ++No) {
      EXPECT_EQ(as_set(degree_set(M, No, 1.0)), brute_force_set(M, No, 1.0)) << M << "," << No;
      std::uint64_t binom = 1;
      for (std::uint64_t k = 1; k <= M; ++k) binom = binom * (static_cast<std::uint64_t>(No) + k) / k;
      EXPECT_EQ(degree_set(M, No, 1.0).size(), binom);
    }
  }
}

TEST(DegreeSet, HyperbolicDropsMixedTerm) {
  const auto d = degree_set(2, 2, 0.75);
  EXPECT_GT(std::pow(2.0, 4.0 / 3.0), 2.0);
  auto expected = brute_force_set(2, 2, 1.0);
  expected.erase(MultiIndex{1, 1});
  EXPECT_EQ(as_set(d), expected);
  EXPECT_EQ(as_set(d), brute_force_set(2, 2, 0.75));
}

TEST(DegreeSet, DegreeZero) {
  for (double q : {0.3, 0.75, 1.0}) {
    const auto d = degree_set(4, 0, q);
    ASSERT_EQ(d.size(), 1u);
    EXPECT_EQ(d[0], MultiIndex(4, 0));
  }
}

TEST(DegreeSet, RejectsBadNorm) {
  EXPECT_THROW(degree_set(3, 2, 0.0), ConfigError);
  EXPECT_THROW(degree_set(3, 2, -1.0), ConfigError);
  EXPECT_THROW(degree_set(3, 2, 1.5), ConfigError);
}

TEST(DegreeSet, MonotoneInQAndDegree) {
  const std::vector<double> qs{0.3, 0.5, 0.6, 0.75, 0.9, 1.0};
  for (std::size_t M = 1; M <= 5; ++M) {
    for (int No = 0; No <= 5; ++No) {
      for (std::size_t k = 1; k < qs.size(); ++k) {
        const auto small = as_set(degree_set(M, No, qs[k - 1]));
        const auto large = as_set(degree_set(M, No, qs[k]));
        EXPECT_TRUE(std::includes(large.begin(), large.end(), small.begin(), small.end()));
      }
      for (double q : qs) {
        const auto a = as_set(degree_set(M, No, q));
        const auto b = as_set(degree_set(M, No + 1, q));
        EXPECT_TRUE(std::includes(b.begin(), b.end(), a.begin(), a.end()));
        EXPECT_EQ(a, brute_force_set(M, No, q)) << M << " " << No << " " << q;
      }
    }
  }
}

TEST(DegreeSet, GradedOrderWithZeroFirst) {
  const auto d = degree_set(3, 3, 1.0);
  EXPECT_EQ(d[0], MultiIndex(3, 0));
  EXPECT_EQ(d[1], (MultiIndex{1, 0, 0}));
  EXPECT_EQ(d[2], (MultiIndex{0, 1, 0}));
  EXPECT_EQ(d[3], (MultiIndex{0, 0, 1}));
  int prev = 0;
  for (const auto& a : d.items()) {
    int deg = 0;
    for (int v : a) deg += v;
    EXPECT_GE(deg, prev);
    prev = deg;
  }
  for (std::size_t a = 0; a < d.size(); ++a) EXPECT_EQ(d.position(d[a]), a);
  EXPECT_FALSE(d.position(MultiIndex{4, 0, 0}).has_value());
}

TEST(Ncf, Examples) {
  EXPECT_EQ(ncf(5, 1, 2), 672u);
  EXPECT_EQ(ncf(5, 0, 2), 21u);
  EXPECT_EQ(ncf(1, 0, 0), 1u);
  EXPECT_EQ(ncf(5, 1, 2), (std::uint64_t{1} << 5) * degree_set(5, 2, 1.0).size());
  EXPECT_THROW(ncf(10, 7, 3), ConfigError);
  EXPECT_THROW(ncf(60, 0, 60), ConfigError);
}

TEST(PiecewiseBasis, NoRefinementIsPlainTensorBasis) {
  const auto space = table1_space();
  const auto d = qmc_design(space, 1024);
  const auto pb = build_piecewise_basis(d, decompose(d, 0), 3);
  const auto degrees = degree_set(5, 3, 1.0);
  std::vector<OrthonormalBasis1D> plain;
  for (Eigen::Index j = 0; j < 5; ++j) {
    std::vector<double> col(d.values.col(j).data(), d.values.col(j).data() + d.values.rows());
    plain.push_back(build_basis(raw_moments(col, 6), 3));
  }
  const auto pts = mc_design(space, 50, 1);
  std::vector<double> phi(degrees.size());
  for (Eigen::Index i = 0; i < pts.values.rows(); ++i) {
    std::vector<double> x(5);
    for (int j = 0; j < 5; ++j) x[static_cast<std::size_t>(j)] = pts.values(i, j);
    pb.evaluate(degrees, x, phi);
    for (std::size_t a = 0; a < degrees.size(); ++a) {
      double v = 1.0;
      for (std::size_t j = 0; j < 5; ++j) v *= plain[j].eval(x[j])[static_cast<std::size_t>(degrees[a][j])];
      EXPECT_EQ(phi[a], v);
    }
  }
}

TEST(PiecewiseBasis, ZeroDegreeIsScaledIndicator) {
  const auto space = two_dim_space();
  const auto d = qmc_design(space, 512);
  for (int Nr = 0; Nr <= 3; ++Nr) {
    const auto pb = build_piecewise_basis(d, decompose(d, Nr), 1);
    const auto degrees = degree_set(2, 1, 1.0);
    std::vector<double> phi(degrees.size());
    const std::vector<double> x{4.0, 2.0};
    pb.evaluate(degrees, x, phi);
    EXPECT_NEAR(phi[0], std::exp2(2 * Nr / 2.0), 1e-14);
  }
}

TEST(PiecewiseBasis, GlobalOrthonormality) {
  const auto space = two_dim_space();
  const auto degrees = degree_set(2, 2, 1.0);
  const auto small = qmc_design(space, 8192);
  const auto large = qmc_design(space, 65536);
  const auto pb_small = build_piecewise_basis(small, decompose(small, 1), 2);
  const auto pb_large = build_piecewise_basis(large, decompose(large, 1), 2);
  EXPECT_LT(global_gram_deviation(pb_small, degrees, small), 5e-2);
  EXPECT_LT(global_gram_deviation(pb_large, degrees, large), 5e-3);
}

TEST(PiecewiseBasis, PartitionAndFiniteValues) {
  const auto space = table1_space();
  const auto d = qmc_design(space, 2048);
  const auto dec = decompose(d, 1);
  const auto pb = build_piecewise_basis(d, dec, 2);
  const auto degrees = degree_set(5, 2, 1.0);
  std::vector<std::size_t> counts(dec.subdomains(), 0);
  std::vector<double> phi(degrees.size());
  for (Eigen::Index i = 0; i < d.values.rows(); ++i) {
    std::vector<double> x(5);
    for (int j = 0; j < 5; ++j) x[static_cast<std::size_t>(j)] = d.values(i, j);
    const auto loc = pb.evaluate(degrees, x, phi);
    EXPECT_FALSE(loc.clamped);
    ++counts[loc.linear];
    for (double v : phi) ASSERT_TRUE(std::isfinite(v));
  }
  std::size_t total = 0;
  for (auto c : counts) total += c;
  EXPECT_EQ(total, 2048u);
  for (const auto& dim : pb.bases) {
    for (const auto& b : dim) EXPECT_LE(b.gram_deviation(), 1e-6);
  }
}

TEST(PiecewiseBasis, ErrorsCarryDimensionAndBin) {
  DesignMatrix d;
  d.values.resize(8, 2);
  const double col2[8] = {0, 0, 0, 0, 1, 2, 3, 4};
  for (int i = 0; i < 8; ++i) {
    d.values(i, 0) = i;
    d.values(i, 1) = col2[i];
  }
  d.names = {"a", "b"};
  const auto dec = decompose(d, 1);
  try {
    build_piecewise_basis(d, dec, 1);
    FAIL() << "expected a numerical error";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("dimension 2 (b), bin 0"), std::string::npos) << e.what();
  }
}
