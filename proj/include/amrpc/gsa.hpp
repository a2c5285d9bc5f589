#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "amrpc/distributions.hpp"
#include "amrpc/errors.hpp"
#include "amrpc/parallel.hpp"
#include "amrpc/qmc.hpp"
#include "amrpc/surrogate.hpp"

namespace amrpc {

inline constexpr double kDefaultVarFloor = 1e-10;

/// Nonempty-or-empty set of input dimensions, stored 0-based and sorted.
/// Labels are 1-based digit strings ("1", "25", "12345"); dimensions past 9
/// are bracketed, e.g. "1[10]".
class IndexSubset {
 public:
  IndexSubset() = default;
  IndexSubset(std::vector<std::size_t> dims, std::size_t M) : dims_(std::move(dims)) {
    std::sort(dims_.begin(), dims_.end());
    if (std::adjacent_find(dims_.begin(), dims_.end()) != dims_.end()) {
      throw ConfigError("index subset has repeated dimensions");
    }
    if (M > 64) throw ConfigError("index subsets support at most 64 dimensions");
    for (auto d : dims_) {
      if (d >= M) throw ConfigError("index subset refers to dimension " + std::to_string(d + 1) + " of " + std::to_string(M));
    }
  }

  static IndexSubset from_mask(std::uint64_t mask) {
    IndexSubset s;
    for (std::size_t d = 0; d < 64; ++d) {
      if ((mask >> d) & 1u) s.dims_.push_back(d);
    }
    return s;
  }

  const std::vector<std::size_t>& dims() const noexcept { return dims_; }
  bool empty() const noexcept { return dims_.empty(); }
  std::size_t size() const noexcept { return dims_.size(); }

  std::uint64_t mask() const noexcept {
    std::uint64_t m = 0;
    for (auto d : dims_) m |= std::uint64_t{1} << d;
    return m;
  }

  std::string label() const {
    std::string s;
    for (auto d : dims_) s += d < 9 ? std::to_string(d + 1) : "[" + std::to_string(d + 1) + "]";
    return s;
  }

  friend bool operator==(const IndexSubset&, const IndexSubset&) = default;

 private:
  std::vector<std::size_t> dims_;
};

namespace detail {

inline std::uint64_t support_mask(const MultiIndex& alpha) {
  std::uint64_t m = 0;
  for (std::size_t j = 0; j < alpha.size(); ++j) {
    if (alpha[j] > 0) m |= std::uint64_t{1} << j;
  }
  return m;
}

/// Coefficient-space ANOVA for piecewise expansions.
///
/// For J a set of dimensions, T_J = E[(E[Y | x_J])^2] of the centred surrogate:
///   T_J = 2^(-Nr (M - |J|)) sum_{alpha in A_J} sum_{g} (sum_{l in g} c_{l,alpha})^2
/// with A_J the degree indices vanishing outside J and g the groups of
/// subdomains sharing l_j for j in J. Partial variances follow by
/// inclusion-exclusion sigma^2_I = sum_{J subset I} (-1)^{|I \ J|} T_J.
class AnovaEngine {
 public:
  explicit AnovaEngine(const SurrogateModel& model) : model_(model) {
    if (model.dims() > 64) throw ConfigError("variance indices support at most 64 dimensions");
    support_.reserve(model.terms());
    for (const auto& alpha : model.degrees.items()) support_.push_back(support_mask(alpha));
    zero_ = *model.degrees.position(MultiIndex(model.dims(), 0));
  }

  /// Coefficients of cell with the mean removed from the zero-degree terms.
  std::vector<double> centred(std::size_t cell) const {
    auto c = model_.cell_coefficients(cell);
    std::vector<double> out(c.begin(), c.end());
    const std::size_t nsd = model_.subdomains();
    const std::size_t nA = model_.terms();
    double avg = 0.0;
    bool equal = true;
    for (std::size_t sd = 0; sd < nsd; ++sd) {
      avg += out[sd * nA + zero_];
      equal = equal && out[sd * nA + zero_] == out[zero_];
    }
    // Equal subdomain means centre to exact zeros.
    avg = equal ? out[zero_] : avg / static_cast<double>(nsd);
    for (std::size_t sd = 0; sd < nsd; ++sd) out[sd * nA + zero_] -= avg;
    return out;
  }

  double second_moment(std::span<const double> c, std::uint64_t J) const {
    const std::size_t nsd = model_.subdomains();
    const std::size_t nA = model_.terms();
    const int Nr = model_.refinement();
    const auto M = model_.dims();
    std::size_t key_mask = 0;
    for (std::size_t j = 0; j < M; ++j) {
      if ((J >> j) & 1u) key_mask |= ((std::size_t{1} << Nr) - 1) << (static_cast<std::size_t>(Nr) * j);
    }
    const auto outside = static_cast<int>(M) - std::popcount(J);
    const double weight = std::exp2(-static_cast<double>(Nr * outside));
    std::vector<double> groups(nsd);
    double total = 0.0;
    for (std::size_t a = 0; a < nA; ++a) {
      if ((support_[a] & ~J) != 0) continue;
      std::fill(groups.begin(), groups.end(), 0.0);
      for (std::size_t sd = 0; sd < nsd; ++sd) groups[sd & key_mask] += c[sd * nA + a];
      double s = 0.0;
      for (double g : groups) s += g * g;
      total += s;
    }
    return weight * total;
  }

  double partial_variance(std::span<const double> c, std::uint64_t I) const {
    double s = 0.0;
    // Enumerate J subset I (including empty) via the standard submask walk.
    for (std::uint64_t J = I;; J = (J - 1) & I) {
      const int sign = (std::popcount(I & ~J) % 2) ? -1 : 1;
      s += sign * second_moment(c, J);
      if (J == 0) break;
    }
    return s;
  }

  /// Variance of the surrogate: sum of squared centred coefficients.
  static double variance(std::span<const double> c) {
    double s = 0.0;
    for (double v : c) s += v * v;
    return std::max(0.0, s);
  }

  std::uint64_t full_mask() const noexcept {
    const auto M = model_.dims();
    return M == 64 ? ~std::uint64_t{0} : (std::uint64_t{1} << M) - 1;
  }

  const std::vector<std::uint64_t>& supports() const noexcept { return support_; }

 private:
  const SurrogateModel& model_;
  std::vector<std::uint64_t> support_;
  std::size_t zero_ = 0;
};

inline double undefined() { return std::numeric_limits<double>::quiet_NaN(); }

inline void check_subset(const SurrogateModel& model, const IndexSubset& I) {
  if (I.empty()) throw ConfigError("Sobol' index subset must be nonempty");
  for (auto d : I.dims()) {
    if (d >= model.dims()) throw ConfigError("index subset refers to a dimension outside the model");
  }
}

}  // namespace detail

inline std::vector<double> mean_from_coeffs(const SurrogateModel& model) {
  const std::size_t nsd = model.subdomains();
  const std::size_t nA = model.terms();
  const std::size_t zero = *model.degrees.position(MultiIndex(model.dims(), 0));
  const double w = std::exp2(-0.5 * static_cast<double>(model.dims() * static_cast<std::size_t>(model.refinement())));
  std::vector<double> out(model.cells);
  for (std::size_t p = 0; p < model.cells; ++p) {
    double s = 0.0;
    for (std::size_t sd = 0; sd < nsd; ++sd) s += model.coefficients[(p * nsd + sd) * nA + zero];
    out[p] = s * w;
  }
  return out;
}

/// sum of squared coefficients minus the squared mean, evaluated in the
/// equivalent centred form sum_l (c_{l,0} - mean c_{.,0})^2 + sum_{alpha != 0} c^2.
inline std::vector<double> variance_from_coeffs(const SurrogateModel& model) {
  const detail::AnovaEngine engine(model);
  std::vector<double> out(model.cells);
  for (std::size_t p = 0; p < model.cells; ++p) {
    out[p] = detail::AnovaEngine::variance(engine.centred(p));
  }
  return out;
}

/// Normalized partial variance of subset I for a global expansion (Nr = 0):
/// squared coefficients whose degree multi-index has support exactly I.
/// Cells with variance below `var_floor` are NaN.
inline std::vector<double> pce_sobol(const SurrogateModel& model, const IndexSubset& I,
                                     double var_floor = kDefaultVarFloor) {
  if (model.refinement() != 0) {
    throw NumericalError("pce_sobol applies to global expansions (Nr = 0); use amrpc_sobol");
  }
  detail::check_subset(model, I);
  const auto var = variance_from_coeffs(model);
  const std::uint64_t mask = I.mask();
  std::vector<double> out(model.cells);
  for (std::size_t p = 0; p < model.cells; ++p) {
    if (!(var[p] >= var_floor)) {
      out[p] = detail::undefined();
      continue;
    }
    double s = 0.0;
    const auto c = model.cell_coefficients(p);
    for (std::size_t a = 0; a < model.terms(); ++a) {
      if (detail::support_mask(model.degrees[a]) == mask) s += c[a] * c[a];
    }
    out[p] = s / var[p];
  }
  return out;
}

/// Total index of dimension i (0-based) for a global expansion: every
/// coefficient with alpha_i > 0 contributes.
inline std::vector<double> pce_total(const SurrogateModel& model, std::size_t i, double var_floor = kDefaultVarFloor) {
  if (model.refinement() != 0) {
    throw NumericalError("pce_total applies to global expansions (Nr = 0); use amrpc_total");
  }
  if (i >= model.dims()) throw ConfigError("dimension index out of range");
  const auto var = variance_from_coeffs(model);
  std::vector<double> out(model.cells);
  for (std::size_t p = 0; p < model.cells; ++p) {
    if (!(var[p] >= var_floor)) {
      out[p] = detail::undefined();
      continue;
    }
    double s = 0.0;
    const auto c = model.cell_coefficients(p);
    for (std::size_t a = 0; a < model.terms(); ++a) {
      if (model.degrees[a][i] > 0) s += c[a] * c[a];
    }
    out[p] = s / var[p];
  }
  return out;
}

/// ANOVA partial variance sigma^2_I of the piecewise surrogate (any Nr).
inline std::vector<double> amrpc_variance_index(const SurrogateModel& model, const IndexSubset& I) {
  detail::check_subset(model, I);
  const detail::AnovaEngine engine(model);
  std::vector<double> out(model.cells);
  for (std::size_t p = 0; p < model.cells; ++p) out[p] = engine.partial_variance(engine.centred(p), I.mask());
  return out;
}

inline std::vector<double> amrpc_sobol(const SurrogateModel& model, const IndexSubset& I,
                                       double var_floor = kDefaultVarFloor) {
  detail::check_subset(model, I);
  const detail::AnovaEngine engine(model);
  std::vector<double> out(model.cells);
  for (std::size_t p = 0; p < model.cells; ++p) {
    const auto c = engine.centred(p);
    const double var = detail::AnovaEngine::variance(c);
    out[p] = var >= var_floor ? engine.partial_variance(c, I.mask()) / var : detail::undefined();
  }
  return out;
}

/// Total index of dimension i: sum of sigma^2_J over J containing i, which
/// telescopes to T_N - T_{N \ i}.
inline std::vector<double> amrpc_total(const SurrogateModel& model, std::size_t i,
                                       double var_floor = kDefaultVarFloor) {
  if (i >= model.dims()) throw ConfigError("dimension index out of range");
  const detail::AnovaEngine engine(model);
  const std::uint64_t all = engine.full_mask();
  std::vector<double> out(model.cells);
  for (std::size_t p = 0; p < model.cells; ++p) {
    const auto c = engine.centred(p);
    const double var = detail::AnovaEngine::variance(c);
    out[p] = var >= var_floor ? (var - engine.second_moment(c, all & ~(std::uint64_t{1} << i))) / var
                              : detail::undefined();
  }
  return out;
}

/// Quartiles (linear interpolation between order statistics, h = (n-1)p),
/// Tukey whiskers at 1.5 IQR and the points beyond them.
struct FiveNumberSummary {
  double lower_whisker = 0.0;
  double q1 = 0.0;
  double median = 0.0;
  double q3 = 0.0;
  double upper_whisker = 0.0;
  std::vector<double> outliers;
};

struct SpaceAverage {
  double mean = 0.0;
  std::size_t retained = 0;
  bool empty = true;
  FiveNumberSummary summary;
};

namespace detail {

inline double sorted_quantile(const std::vector<double>& v, double p) {
  const double h = static_cast<double>(v.size() - 1) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

}  // namespace detail

/// Average of an index field over cells whose variance is at least var_floor
/// (non-finite values are skipped as well).
inline SpaceAverage space_average(std::span<const double> values, std::span<const double> variance,
                                  double var_floor = kDefaultVarFloor) {
  if (values.size() != variance.size()) throw DataError("index field and variance field differ in length");
  std::vector<double> kept;
  for (std::size_t p = 0; p < values.size(); ++p) {
    if (variance[p] >= var_floor && std::isfinite(values[p])) kept.push_back(values[p]);
  }
  SpaceAverage out;
  out.retained = kept.size();
  out.empty = kept.empty();
  if (kept.empty()) return out;
  double s = 0.0;
  for (double v : kept) s += v;
  out.mean = s / static_cast<double>(kept.size());
  std::sort(kept.begin(), kept.end());
  auto& f = out.summary;
  f.q1 = detail::sorted_quantile(kept, 0.25);
  f.median = detail::sorted_quantile(kept, 0.5);
  f.q3 = detail::sorted_quantile(kept, 0.75);
  const double iqr = f.q3 - f.q1;
  const double lo_fence = f.q1 - 1.5 * iqr;
  const double hi_fence = f.q3 + 1.5 * iqr;
  f.lower_whisker = f.q1;
  f.upper_whisker = f.q3;
  for (double v : kept) {
    if (v < lo_fence || v > hi_fence) {
      f.outliers.push_back(v);
    } else {
      f.lower_whisker = std::min(f.lower_whisker, v);
      f.upper_whisker = std::max(f.upper_whisker, v);
    }
  }
  return out;
}

struct IndexField {
  IndexSubset subset;
  std::vector<double> values;  // per cell; NaN below the variance floor
  SpaceAverage average;
  std::size_t negative_cells = 0;
};

struct IndexRequest {
  bool first = true;
  bool total = true;
  bool all = false;  // every nonempty subset (only when M <= 12)
  double var_floor = kDefaultVarFloor;
};

struct SensitivityReport {
  std::vector<std::string> names;
  int refinement = 0;
  int degree = 0;
  double q = 1.0;
  std::size_t n_train = 0;
  double var_floor = kDefaultVarFloor;
  std::vector<double> mean;
  std::vector<double> variance;
  std::size_t retained_cells = 0;
  std::vector<IndexField> first;          // one per dimension
  std::vector<IndexField> total;          // one per dimension; subset = {i}
  std::vector<IndexField> interactions;   // nonempty subsets, ascending mask
};

/// Coefficient-based sensitivity analysis of every cell. Global expansions use
/// the direct squared-coefficient sums, piecewise ones the inclusion-exclusion
/// form.
inline SensitivityReport analyze(const SurrogateModel& model, const IndexRequest& request = {}) {
  const std::size_t M = model.dims();
  SensitivityReport r;
  r.names = model.names;
  r.refinement = model.refinement();
  r.degree = model.degree();
  r.q = model.q();
  r.n_train = model.n_train;
  r.var_floor = request.var_floor;
  r.mean = mean_from_coeffs(model);
  r.variance = variance_from_coeffs(model);
  for (double v : r.variance) r.retained_cells += v >= request.var_floor ? 1 : 0;

  auto finish = [&](IndexSubset subset, std::vector<double> values) {
    IndexField f;
    f.subset = std::move(subset);
    f.values = std::move(values);
    f.average = space_average(f.values, r.variance, request.var_floor);
    for (double v : f.values) f.negative_cells += v < 0.0 ? 1 : 0;
    return f;
  };

  const bool global = model.refinement() == 0;
  if (request.first) {
    for (std::size_t i = 0; i < M; ++i) {
      IndexSubset s({i}, M);
      r.first.push_back(finish(s, global ? pce_sobol(model, s, request.var_floor)
                                         : amrpc_sobol(model, s, request.var_floor)));
    }
  }
  if (request.total) {
    for (std::size_t i = 0; i < M; ++i) {
      r.total.push_back(finish(IndexSubset({i}, M), global ? pce_total(model, i, request.var_floor)
                                                           : amrpc_total(model, i, request.var_floor)));
    }
  }
  if (request.all && M <= 12) {
    // All T_J once per cell, then a Moebius transform to partial variances.
    const detail::AnovaEngine engine(model);
    const std::size_t nsub = std::size_t{1} << M;
    std::vector<std::vector<double>> fields(nsub, std::vector<double>(model.cells));
    std::vector<double> t(nsub);
    for (std::size_t p = 0; p < model.cells; ++p) {
      const auto c = engine.centred(p);
      for (std::size_t J = 0; J < nsub; ++J) t[J] = engine.second_moment(c, J);
      for (std::size_t j = 0; j < M; ++j) {
        for (std::size_t J = 0; J < nsub; ++J) {
          if ((J >> j) & 1u) t[J] -= t[J ^ (std::size_t{1} << j)];
        }
      }
      const double var = r.variance[p];
      for (std::size_t I = 1; I < nsub; ++I) {
        fields[I][p] = var >= request.var_floor ? t[I] / var : detail::undefined();
      }
    }
    for (std::size_t I = 1; I < nsub; ++I) {
      r.interactions.push_back(finish(IndexSubset::from_mask(I), std::move(fields[I])));
    }
  }
  return r;
}

// ---------------------------------------------------------------------------
// Monte-Carlo reference

/// Black-box model: writes the P outputs for input x into y.
using Evaluator = std::function<void(std::span<const double> x, std::span<double> y)>;

struct OracleCell {
  std::size_t cell = 0;
  bool defined = false;
  double variance = 0.0;
  std::vector<double> first;
  std::vector<double> total;
  std::vector<double> first_sd;  // bootstrap standard deviations
  std::vector<double> total_sd;
};

struct OracleResult {
  std::size_t n = 0;
  std::uint64_t seed = 0;
  std::size_t bootstrap = 0;
  std::vector<OracleCell> cells;
};

/// Pick-freeze estimates of first-order (Saltelli 2010) and total (Jansen)
/// indices with bootstrap standard deviations. A and B are the two halves of a
/// 2M-dimensional mc_points draw mapped through the marginals; the bootstrap
/// resamples rows with an mt19937_64 seeded from `seed`.
inline OracleResult mc_sobol_oracle(const Evaluator& f, std::size_t outputs, const ParameterSpace& space,
                                    std::size_t n, std::uint64_t seed, std::vector<std::size_t> cells = {},
                                    std::size_t bootstrap = 200) {
  if (n < 64) throw ConfigError("pick-freeze oracle needs n >= 64");
  const std::size_t M = space.size();
  if (cells.empty()) {
    for (std::size_t p = 0; p < outputs; ++p) cells.push_back(p);
  }
  for (auto c : cells) {
    if (c >= outputs) throw ConfigError("oracle cell index out of range");
  }
  const Eigen::MatrixXd u = mc_points(2 * M, n, seed);
  Eigen::MatrixXd a(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(M));
  Eigen::MatrixXd b(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(M));
  for (std::size_t j = 0; j < M; ++j) {
    const auto& dist = space[j].distribution;
    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(n); ++i) {
      a(i, static_cast<Eigen::Index>(j)) = dist.quantile(u(i, static_cast<Eigen::Index>(j)));
      b(i, static_cast<Eigen::Index>(j)) = dist.quantile(u(i, static_cast<Eigen::Index>(M + j)));
    }
  }

  const std::size_t nc = cells.size();
  // values[(s * n + i) * nc + c]: s = 0 for A, 1 for B, 2 + j for A with column j from B.
  std::vector<double> values((M + 2) * n * nc);
  {
    std::vector<double> x(M);
    std::vector<double> y(outputs);
    for (std::size_t s = 0; s < M + 2; ++s) {
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < M; ++j) {
          const bool from_b = s == 1 || (s >= 2 && j == s - 2);
          x[j] = from_b ? b(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))
                        : a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
        }
        f(x, y);
        for (std::size_t c = 0; c < nc; ++c) values[(s * n + i) * nc + c] = y[cells[c]];
      }
    }
  }
  auto val = [&](std::size_t s, std::size_t i, std::size_t c) { return values[(s * n + i) * nc + c]; };

  // Estimates for a given row multiset (idx) and cell.
  struct Estimate {
    double var;
    std::vector<double> first, total;
  };
  auto estimate = [&](const std::vector<std::size_t>& idx, std::size_t c) {
    Estimate e{0.0, std::vector<double>(M), std::vector<double>(M)};
    double mean = 0.0;
    for (auto i : idx) mean += val(0, i, c) + val(1, i, c);
    mean /= 2.0 * static_cast<double>(idx.size());
    for (auto i : idx) {
      const double da = val(0, i, c) - mean;
      const double db = val(1, i, c) - mean;
      e.var += da * da + db * db;
    }
    e.var /= 2.0 * static_cast<double>(idx.size());
    for (std::size_t j = 0; j < M; ++j) {
      double sf = 0.0;
      double st = 0.0;
      for (auto i : idx) {
        const double fa = val(0, i, c);
        const double fab = val(2 + j, i, c);
        sf += val(1, i, c) * (fab - fa);
        st += (fa - fab) * (fa - fab);
      }
      const auto m = static_cast<double>(idx.size());
      e.first[j] = sf / m / e.var;
      e.total[j] = st / (2.0 * m) / e.var;
    }
    return e;
  };

  OracleResult result;
  result.n = n;
  result.seed = seed;
  result.bootstrap = bootstrap;
  std::vector<std::size_t> base(n);
  for (std::size_t i = 0; i < n; ++i) base[i] = i;

  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t c = 0; c < nc; ++c) {
    OracleCell cell;
    cell.cell = cells[c];
    const Estimate full = estimate(base, c);
    cell.variance = full.var;
    cell.defined = full.var > 0.0;
    cell.first = cell.defined ? full.first : std::vector<double>(M, nan);
    cell.total = cell.defined ? full.total : std::vector<double>(M, nan);
    cell.first_sd.assign(M, nan);
    cell.total_sd.assign(M, nan);
    result.cells.push_back(std::move(cell));
  }
  if (bootstrap < 2) return result;

  // Sums and sums of squares of the bootstrap replicates, per cell and dimension.
  std::vector<double> s1(nc * M, 0.0), s2(nc * M, 0.0), t1(nc * M, 0.0), t2(nc * M, 0.0);
  std::mt19937_64 rng(seed ^ 0x9E3779B97F4A7C15ull);
  std::vector<std::size_t> rs(n);
  for (std::size_t rep = 0; rep < bootstrap; ++rep) {
    for (auto& i : rs) i = static_cast<std::size_t>(static_cast<double>(rng() >> 11) * 0x1.0p-53 * static_cast<double>(n));
    for (std::size_t c = 0; c < nc; ++c) {
      if (!result.cells[c].defined) continue;
      const Estimate e = estimate(rs, c);
      for (std::size_t j = 0; j < M; ++j) {
        s1[c * M + j] += e.first[j];
        s2[c * M + j] += e.first[j] * e.first[j];
        t1[c * M + j] += e.total[j];
        t2[c * M + j] += e.total[j] * e.total[j];
      }
    }
  }
  const auto B = static_cast<double>(bootstrap);
  for (std::size_t c = 0; c < nc; ++c) {
    if (!result.cells[c].defined) continue;
    for (std::size_t j = 0; j < M; ++j) {
      const std::size_t k = c * M + j;
      result.cells[c].first_sd[j] = std::sqrt(std::max(0.0, (s2[k] - s1[k] * s1[k] / B) / (B - 1.0)));
      result.cells[c].total_sd[j] = std::sqrt(std::max(0.0, (t2[k] - t1[k] * t1[k] / B) / (B - 1.0)));
    }
  }
  return result;
}

}  // namespace amrpc
