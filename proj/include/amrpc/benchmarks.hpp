#pragma once

#include <cmath>
#include <memory>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "amrpc/distributions.hpp"
#include "amrpc/errors.hpp"
#include "amrpc/gsa.hpp"
#include "amrpc/multires.hpp"
#include "amrpc/qmc.hpp"
#include "amrpc/surrogate.hpp"

namespace amrpc {

/// Known variance decomposition of a scalar model.
struct ClosedForm {
  double variance = 0.0;
  std::vector<double> first;
  std::vector<double> total;
};

struct AnalyticModel {
  std::string name;
  ParameterSpace space;
  std::size_t outputs = 1;
  Evaluator evaluate;
  std::optional<ClosedForm> closed_form;
  std::optional<GridGeometry> grid;

  std::size_t dims() const { return space.size(); }

  std::vector<double> operator()(std::span<const double> x) const {
    std::vector<double> y(outputs);
    evaluate(x, y);
    return y;
  }

  /// Outputs for every design row, n x P.
  Eigen::MatrixXd evaluate_design(const DesignMatrix& design) const {
    Eigen::MatrixXd out(design.values.rows(), static_cast<Eigen::Index>(outputs));
    std::vector<double> x(design.dims());
    std::vector<double> y(outputs);
    for (Eigen::Index i = 0; i < design.values.rows(); ++i) {
      for (std::size_t j = 0; j < x.size(); ++j) x[j] = design.values(i, static_cast<Eigen::Index>(j));
      evaluate(x, y);
      for (std::size_t p = 0; p < outputs; ++p) out(i, static_cast<Eigen::Index>(p)) = y[p];
    }
    return out;
  }

  TrainingSet training_set(const DesignMatrix& design) const {
    return TrainingSet{design, evaluate_design(design), grid};
  }
};

namespace detail {

inline ParameterSpace uniform_space(std::size_t M, double lo, double hi) {
  std::vector<Parameter> dims;
  for (std::size_t j = 0; j < M; ++j) dims.push_back({"x" + std::to_string(j + 1), Uniform{lo, hi}});
  return ParameterSpace(std::move(dims));
}

}  // namespace detail

/// Sobol' g-function Y = prod_i (|4 x_i - 2| + a_i) / (1 + a_i) on [0, 1]^M.
/// Partial variances D_i = (1/3) / (1 + a_i)^2, D = prod (1 + D_i) - 1.
inline AnalyticModel g_function(std::vector<double> a) {
  if (a.empty()) throw ConfigError("g-function needs at least one coefficient");
  for (double ai : a) {
    if (!(ai >= 0.0)) throw ConfigError("g-function coefficients must be nonnegative");
  }
  const std::size_t M = a.size();
  ClosedForm cf;
  std::vector<double> d(M);
  double prod = 1.0;
  for (std::size_t i = 0; i < M; ++i) {
    d[i] = (1.0 / 3.0) / ((1.0 + a[i]) * (1.0 + a[i]));
    prod *= 1.0 + d[i];
  }
  cf.variance = prod - 1.0;
  for (std::size_t i = 0; i < M; ++i) {
    cf.first.push_back(d[i] / cf.variance);
    cf.total.push_back(d[i] * (prod / (1.0 + d[i])) / cf.variance);
  }
  AnalyticModel m{"g_function", detail::uniform_space(M, 0.0, 1.0), 1,
                  [a](std::span<const double> x, std::span<double> y) {
                    double v = 1.0;
                    for (std::size_t i = 0; i < a.size(); ++i) v *= (std::abs(4.0 * x[i] - 2.0) + a[i]) / (1.0 + a[i]);
                    y[0] = v;
                  },
                  cf, std::nullopt};
  return m;
}

/// Ishigami function sin x1 + a sin^2 x2 + b x3^4 sin x1 on [-pi, pi]^3.
inline AnalyticModel ishigami(double a = 7.0, double b = 0.1) {
  using std::numbers::pi;
  const double pi4 = std::pow(pi, 4);
  const double pi8 = pi4 * pi4;
  const double v1 = 0.5 * std::pow(1.0 + b * pi4 / 5.0, 2);
  const double v2 = a * a / 8.0;
  const double v13 = 0.5 * b * b * (pi8 / 9.0 - pi8 / 25.0);
  const double v = v1 + v2 + v13;
  ClosedForm cf{v, {v1 / v, v2 / v, 0.0}, {(v1 + v13) / v, v2 / v, v13 / v}};
  return AnalyticModel{"ishigami", detail::uniform_space(3, -pi, pi), 1,
                       [a, b](std::span<const double> x, std::span<double> y) {
                         const double s2 = std::sin(x[1]);
                         y[0] = std::sin(x[0]) + a * s2 * s2 + b * std::pow(x[2], 4) * std::sin(x[0]);
                       },
                       cf, std::nullopt};
}

/// One term of a span polynomial: coefficient * Phi_{l, alpha}. Without a
/// subdomain the same coefficient is used in every subdomain.
struct SpanTerm {
  MultiIndex alpha;
  double coefficient = 0.0;
  std::optional<std::size_t> subdomain;
};

/// A function lying exactly in the truncated piecewise expansion built from
/// `design` with (Nr, No, q). Fitting it on the same design recovers the
/// coefficients; when every term is global, the closed form holds the
/// squared-coefficient variance shares.
inline AnalyticModel span_polynomial(const ParameterSpace& space, const DesignMatrix& design, int Nr, int No,
                                     double q, std::vector<SpanTerm> terms) {
  auto basis = std::make_shared<PiecewiseBasis>(build_piecewise_basis(design, decompose(design, Nr), No));
  auto degrees = std::make_shared<DegreeIndexSet>(degree_set(design.dims(), No, q));
  const std::size_t nsd = basis->decomposition.subdomains();
  struct Resolved {
    std::size_t position;
    double coefficient;
    std::optional<std::size_t> subdomain;
  };
  std::vector<Resolved> resolved;
  bool global = true;
  for (const auto& t : terms) {
    const auto pos = degrees->position(t.alpha);
    if (!pos) throw ConfigError("span term degree index lies outside the truncation");
    if (t.subdomain && *t.subdomain >= nsd) throw ConfigError("span term subdomain out of range");
    global = global && !t.subdomain;
    resolved.push_back({*pos, t.coefficient, t.subdomain});
  }

  std::optional<ClosedForm> cf;
  if (global) {
    ClosedForm c;
    const std::size_t M = design.dims();
    c.first.assign(M, 0.0);
    c.total.assign(M, 0.0);
    for (const auto& t : terms) {
      const std::uint64_t supp = detail::support_mask(t.alpha);
      if (supp == 0) continue;
      const double v = t.coefficient * t.coefficient * static_cast<double>(nsd);
      c.variance += v;
      for (std::size_t j = 0; j < M; ++j) {
        if ((supp >> j) & 1u) {
          c.total[j] += v;
          if (supp == (std::uint64_t{1} << j)) c.first[j] += v;
        }
      }
    }
    if (c.variance > 0.0) {
      for (auto& s : c.first) s /= c.variance;
      for (auto& s : c.total) s /= c.variance;
    }
    cf = c;
  }

  return AnalyticModel{"span_polynomial", space, 1,
                       [basis, degrees, resolved](std::span<const double> x, std::span<double> y) {
                         std::vector<double> phi(degrees->size());
                         const Location loc = basis->evaluate(*degrees, x, phi);
                         double s = 0.0;
                         for (const auto& t : resolved) {
                           if (t.subdomain && *t.subdomain != loc.linear) continue;
                           s += t.coefficient * phi[t.position];
                         }
                         y[0] = s;
                       },
                       cf, std::nullopt};
}

/// Synthetic rows x cols field over the five-parameter space. Along the
/// column axis the response shifts from a k_pm-dominated regime (first column)
/// to a beta_sj-dominated one (last column). The top tenth of the rows carries
/// an amplitude of 1e-7, so their variance sits far below 1e-10.
inline AnalyticModel field_toy(const ParameterSpace& space, std::size_t rows, std::size_t cols) {
  if (space.size() != 5) throw ConfigError("field_toy expects the five-dimensional parameter space");
  if (rows < 2 || cols < 2) throw ConfigError("field_toy needs at least a 2 x 2 grid");
  std::vector<double> lo(5), width(5);
  for (std::size_t j = 0; j < 5; ++j) {
    lo[j] = space[j].distribution.lo();
    width[j] = space[j].distribution.hi() - lo[j];
  }
  const std::size_t strip = std::max<std::size_t>(1, rows / 10);
  GridGeometry grid{rows, cols, {"u"}};
  return AnalyticModel{
      "field_toy", space, rows * cols,
      [lo, width, rows, cols, strip](std::span<const double> x, std::span<double> y) {
        double t[5];
        for (std::size_t j = 0; j < 5; ++j) t[j] = (x[j] - lo[j]) / width[j];
        const double g1 = t[0] + 0.5 * t[0] * t[0];
        const double g5 = 8.0 * (t[4] + 0.5 * t[4] * t[4]);
        const double rest = 0.3 * t[2] * t[3] + 0.2 * t[1];
        for (std::size_t r = 0; r < rows; ++r) {
          const double v = static_cast<double>(r) / static_cast<double>(rows - 1);
          const double amp = r >= rows - strip ? 1e-7 : 0.5 + v;
          for (std::size_t c = 0; c < cols; ++c) {
            const double w = static_cast<double>(c) / static_cast<double>(cols - 1);
            y[r * cols + c] = 0.1 * v + amp * (w * g1 + (1.0 - w) * g5 + rest);
          }
        }
      },
      std::nullopt, grid};
}

/// Cells of the field_toy low-variance strip (row-major cell numbering).
inline std::vector<std::size_t> field_toy_strip(std::size_t rows, std::size_t cols) {
  const std::size_t strip = std::max<std::size_t>(1, rows / 10);
  std::vector<std::size_t> out;
  for (std::size_t r = rows - strip; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out.push_back(r * cols + c);
  }
  return out;
}

}  // namespace amrpc
