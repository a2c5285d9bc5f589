#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "amrpc/errors.hpp"

namespace amrpc {

namespace detail {

/// Kahan-Babuska-Neumaier compensated accumulator.
class CompensatedSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      comp_ += (sum_ - t) + x;
    } else {
      comp_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

}  // namespace detail

/// Raw moments of a (weighted) sample set.
///
/// `raw[k]` is the k-th moment of the samples themselves. The basis
/// construction works on `scaled[k]`, the moments of y = (x - center) /
/// half_width, which maps the sample range onto [-1, 1] and keeps the Hankel
/// matrix well conditioned.
struct MomentSet {
  std::vector<double> raw;
  std::vector<double> scaled;
  double center = 0.0;
  double half_width = 1.0;
  std::size_t count = 0;

  int max_order() const noexcept { return static_cast<int>(raw.size()) - 1; }

  /// Moments known analytically (identity scaling). They are normalized by m_0.
  static MomentSet from_raw(std::vector<double> moments) {
    if (moments.empty() || !(moments[0] > 0.0)) {
      throw DegenerateMomentsError("moment sequence needs m_0 > 0");
    }
    const double m0 = moments[0];
    for (double& m : moments) m /= m0;
    MomentSet out;
    out.raw = moments;
    out.scaled = std::move(moments);
    return out;
  }
};

/// Moments m_0..m_K of the samples, weighted by `weights` (empty = equal weights).
/// Needs at least ceil(K/2)+1 distinct values, enough to carry an orthonormal
/// basis of degree K/2.
inline MomentSet raw_moments(std::span<const double> samples, std::span<const double> weights,
                             int K) {
  if (K < 0) throw ConfigError("moment order must be nonnegative");
  if (!weights.empty() && weights.size() != samples.size()) {
    throw DataError("weights and samples differ in length");
  }
  auto weight = [&](std::size_t i) { return weights.empty() ? 1.0 : weights[i]; };

  std::vector<double> support;
  double wsum = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double w = weight(i);
    if (!(w >= 0.0) || !std::isfinite(w)) throw DataError("weights must be finite and nonnegative");
    if (!std::isfinite(samples[i])) throw DataError("samples must be finite");
    if (w > 0.0) {
      support.push_back(samples[i]);
      wsum += w;
    }
  }
  if (!(wsum > 0.0)) throw DegenerateMomentsError("weights are all zero");
  std::sort(support.begin(), support.end());
  const auto distinct = static_cast<int>(std::unique(support.begin(), support.end()) - support.begin());
  const int needed = (K + 1) / 2 + 1;
  if (K >= 1 && distinct < needed) {
    throw DegenerateMomentsError("moments up to order " + std::to_string(K) + " need " +
                                 std::to_string(needed) + " distinct sample values, got " +
                                 std::to_string(distinct));
  }

  MomentSet out;
  out.count = samples.size();
  const double lo = support.front();
  const double hi = support[static_cast<std::size_t>(distinct) - 1];
  out.center = 0.5 * (lo + hi);
  out.half_width = hi > lo ? 0.5 * (hi - lo) : 1.0;

  std::vector<detail::CompensatedSum> raw(static_cast<std::size_t>(K) + 1);
  std::vector<detail::CompensatedSum> scaled(static_cast<std::size_t>(K) + 1);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double w = weight(i) / wsum;
    if (w == 0.0) continue;
    const double x = samples[i];
    const double y = (x - out.center) / out.half_width;
    double px = w;
    double py = w;
    for (int k = 0; k <= K; ++k) {
      raw[static_cast<std::size_t>(k)].add(px);
      scaled[static_cast<std::size_t>(k)].add(py);
      px *= x;
      py *= y;
    }
  }
  for (int k = 0; k <= K; ++k) {
    out.raw.push_back(raw[static_cast<std::size_t>(k)].value());
    out.scaled.push_back(scaled[static_cast<std::size_t>(k)].value());
  }
  out.raw[0] = 1.0;
  out.scaled[0] = 1.0;
  return out;
}

inline MomentSet raw_moments(std::span<const double> samples, int K) {
  return raw_moments(samples, {}, K);
}

/// Orthonormal polynomials phi_0..phi_No of one variable, stored as the
/// three-term recurrence
///   beta_{k+1} phi_{k+1}(y) = (y - alpha_k) phi_k(y) - beta_k phi_{k-1}(y)
/// in the scaled variable y = (x - center) / half_width.
class OrthonormalBasis1D {
 public:
  OrthonormalBasis1D() = default;
  OrthonormalBasis1D(std::vector<double> alpha, std::vector<double> beta, double center,
                     double half_width, std::vector<std::vector<double>> monomials = {})
      : alpha_(std::move(alpha)),
        beta_(std::move(beta)),
        center_(center),
        half_width_(half_width),
        monomials_(std::move(monomials)) {}

  int degree() const noexcept { return static_cast<int>(beta_.size()) - 1; }
  double center() const noexcept { return center_; }
  double half_width() const noexcept { return half_width_; }

  /// alpha_0..alpha_{No-1} of the scaled recurrence.
  const std::vector<double>& alpha() const noexcept { return alpha_; }
  /// beta_0..beta_No of the scaled recurrence; beta_0 is 0 by convention.
  const std::vector<double>& beta() const noexcept { return beta_; }

  /// Recurrence in the original variable: x phi_k = b_{k+1} phi_{k+1} + a_k phi_k + b_k phi_{k-1}.
  double a(int k) const { return half_width_ * alpha_.at(static_cast<std::size_t>(k)) + center_; }
  double b(int k) const { return half_width_ * beta_.at(static_cast<std::size_t>(k)); }

  /// Monomial coefficients of phi_p in the scaled variable, as produced by the
  /// Gram-Schmidt construction. Empty for bases restored from a file.
  const std::vector<std::vector<double>>& monomials() const noexcept { return monomials_; }

  /// Worst |G - I| entry of the empirical Gram matrix on the construction
  /// samples; NaN when not measured.
  double gram_deviation() const noexcept { return gram_deviation_; }
  void set_gram_deviation(double g) noexcept { gram_deviation_ = g; }

  void eval(double x, std::span<double> out) const {
    const int n = degree();
    const double y = (x - center_) / half_width_;
    out[0] = 1.0;
    if (n == 0) return;
    out[1] = (y - alpha_[0]) / beta_[1];
    for (int k = 1; k < n; ++k) {
      const auto ku = static_cast<std::size_t>(k);
      out[ku + 1] = ((y - alpha_[ku]) * out[ku] - beta_[ku] * out[ku - 1]) / beta_[ku + 1];
    }
  }

  std::vector<double> eval(double x) const {
    std::vector<double> out(static_cast<std::size_t>(degree()) + 1);
    eval(x, out);
    return out;
  }

 private:
  std::vector<double> alpha_;
  std::vector<double> beta_{0.0};
  double center_ = 0.0;
  double half_width_ = 1.0;
  std::vector<std::vector<double>> monomials_;
  double gram_deviation_ = std::numeric_limits<double>::quiet_NaN();
};

namespace detail {

// <p, q> under the measure with the given moments; p, q are monomial
// coefficient vectors.
inline double moment_inner(const std::vector<double>& p, const std::vector<double>& q,
                           const std::vector<double>& m) {
  CompensatedSum s;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0) continue;
    for (std::size_t j = 0; j < q.size(); ++j) s.add(p[i] * q[j] * m[i + j]);
  }
  return s.value();
}

}  // namespace detail

/// Orthonormal basis of degrees 0..No for the measure behind `moments`.
///
/// Polynomials are generated by Stieltjes-style Gram-Schmidt on y * phi_{k-1}
/// with a second (re)orthogonalization pass; recurrence coefficients are read
/// off the resulting polynomials. Requires the (No+1)x(No+1) Hankel matrix to
/// be positive definite to 1e-12 relative.
inline OrthonormalBasis1D build_basis(const MomentSet& moments, int No) {
  if (No < 0) throw ConfigError("polynomial degree must be nonnegative");
  if (moments.max_order() < 2 * No) {
    throw ConfigError("degree " + std::to_string(No) + " needs moments up to order " +
                      std::to_string(2 * No));
  }
  const auto& m = moments.scaled;
  const auto n = static_cast<Eigen::Index>(No) + 1;

  constexpr double kPdTol = 1e-12;
  Eigen::MatrixXd hankel(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) hankel(i, j) = m[static_cast<std::size_t>(i + j)];
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(hankel, Eigen::EigenvaluesOnly);
  const double lmin = eig.eigenvalues().minCoeff();
  const double lmax = eig.eigenvalues().maxCoeff();
  if (!(lmin > kPdTol * lmax)) {
    throw BasisConstructionError(
        "Hankel matrix of degree " + std::to_string(No) +
            " is not positive definite (min/max eigenvalue " + std::to_string(lmin / lmax) + ")",
        lmin);
  }

  const auto nu = static_cast<std::size_t>(n);
  std::vector<std::vector<double>> phi;
  phi.reserve(nu);
  phi.push_back({1.0 / std::sqrt(m[0])});
  for (std::size_t k = 1; k < nu; ++k) {
    std::vector<double> v(k + 1, 0.0);
    for (std::size_t i = 0; i < k; ++i) v[i + 1] = phi[k - 1][i];
    for (int pass = 0; pass < 2; ++pass) {
      for (std::size_t j = 0; j < k; ++j) {
        const double proj = detail::moment_inner(v, phi[j], m);
        for (std::size_t i = 0; i < phi[j].size(); ++i) v[i] -= proj * phi[j][i];
      }
    }
    const double norm2 = detail::moment_inner(v, v, m);
    if (!(norm2 > 0.0)) {
      throw BasisConstructionError("orthogonalization collapsed at degree " + std::to_string(k),
                                   lmin);
    }
    const double inv = 1.0 / std::sqrt(norm2);
    for (double& c : v) c *= inv;
    phi.push_back(std::move(v));
  }

  std::vector<double> alpha(nu - 1);
  std::vector<double> beta(nu, 0.0);
  for (std::size_t k = 0; k + 1 < nu; ++k) {
    std::vector<double> yphi(k + 2, 0.0);
    for (std::size_t i = 0; i <= k; ++i) yphi[i + 1] = phi[k][i];
    alpha[k] = detail::moment_inner(yphi, phi[k], m);
    beta[k + 1] = phi[k][k] / phi[k + 1][k + 1];
  }
  return OrthonormalBasis1D(std::move(alpha), std::move(beta), moments.center, moments.half_width,
                            std::move(phi));
}

inline std::vector<double> eval_basis(const OrthonormalBasis1D& basis, double x) {
  return basis.eval(x);
}

/// max |G - I| for G[p][q] = weighted mean of phi_p * phi_q over the samples.
inline double gram_deviation(const OrthonormalBasis1D& basis, std::span<const double> samples,
                             std::span<const double> weights = {}) {
  const auto n = static_cast<std::size_t>(basis.degree()) + 1;
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  std::vector<double> v(n);
  double wsum = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double w = weights.empty() ? 1.0 : weights[i];
    basis.eval(samples[i], v);
    const Eigen::Map<const Eigen::VectorXd> vm(v.data(), static_cast<Eigen::Index>(n));
    g.noalias() += w * vm * vm.transpose();
    wsum += w;
  }
  g /= wsum;
  return (g - Eigen::MatrixXd::Identity(g.rows(), g.cols())).cwiseAbs().maxCoeff();
}

}  // namespace amrpc
