#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "amrpc/distributions.hpp"
#include "amrpc/errors.hpp"
#include "amrpc/gsa.hpp"
#include "amrpc/qmc.hpp"

namespace amrpc {

namespace detail {

inline void check_same_shape(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DataError("shape mismatch: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) + " vs " +
                    std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  }
}

}  // namespace detail

/// Root mean squared error over all k x P entries.
inline double rmse(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& truth) {
  detail::check_same_shape(pred, truth);
  if (pred.size() == 0) throw DataError("rmse of an empty array");
  return std::sqrt((pred - truth).squaredNorm() / static_cast<double>(pred.size()));
}

/// Mean squared error divided by the population variance of `truth` (all
/// entries pooled). nullopt when the truth has zero variance.
inline std::optional<double> relative_mse(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& truth) {
  detail::check_same_shape(pred, truth);
  if (pred.size() == 0) throw DataError("relative MSE of an empty array");
  const auto n = static_cast<double>(truth.size());
  const double var = (truth.array() - truth.mean()).square().sum() / n;
  if (!(var > 0.0)) return std::nullopt;
  return (pred - truth).squaredNorm() / n / var;
}

/// sqrt(sum_p w_p (a_p - b_p)^2); uniform weights 1/P when none are given.
inline double l2_field_error(std::span<const double> a, std::span<const double> b,
                             std::span<const double> weights = {}) {
  if (a.size() != b.size()) throw DataError("field lengths differ");
  if (!weights.empty() && weights.size() != a.size()) throw DataError("weight length differs from field length");
  if (a.empty()) return 0.0;
  const double uniform = 1.0 / static_cast<double>(a.size());
  double s = 0.0;
  for (std::size_t p = 0; p < a.size(); ++p) {
    const double d = a[p] - b[p];
    s += (weights.empty() ? uniform : weights[p]) * d * d;
  }
  return std::sqrt(s);
}

/// Per-cell mean and standard deviation (population, 1/n) of model outputs.
struct ReferenceStats {
  std::vector<double> mean;
  std::vector<double> sd;
  std::size_t count = 0;
  std::uint64_t seed = 0;
};

/// Welford one-pass accumulator; shards merge exactly (Chan et al.).
class StreamingStats {
 public:
  explicit StreamingStats(std::size_t cells) : mean_(cells, 0.0), m2_(cells, 0.0) {}

  void add(std::span<const double> y) {
    ++count_;
    const double inv = 1.0 / static_cast<double>(count_);
    for (std::size_t p = 0; p < mean_.size(); ++p) {
      const double d = y[p] - mean_[p];
      mean_[p] += d * inv;
      m2_[p] += d * (y[p] - mean_[p]);
    }
  }

  void merge(const StreamingStats& other) {
    if (other.mean_.size() != mean_.size()) throw DataError("cannot merge statistics of different sizes");
    if (other.count_ == 0) return;
    const auto na = static_cast<double>(count_);
    const auto nb = static_cast<double>(other.count_);
    const double n = na + nb;
    for (std::size_t p = 0; p < mean_.size(); ++p) {
      const double d = other.mean_[p] - mean_[p];
      mean_[p] += d * nb / n;
      m2_[p] += other.m2_[p] + d * d * na * nb / n;
    }
    count_ += other.count_;
  }

  ReferenceStats finish(std::uint64_t seed = 0) const {
    ReferenceStats r;
    r.mean = mean_;
    r.sd.resize(mean_.size());
    for (std::size_t p = 0; p < mean_.size(); ++p) {
      r.sd[p] = count_ ? std::sqrt(std::max(0.0, m2_[p] / static_cast<double>(count_))) : 0.0;
    }
    r.count = count_;
    r.seed = seed;
    return r;
  }

 private:
  std::vector<double> mean_;
  std::vector<double> m2_;
  std::size_t count_ = 0;
};

/// Monte-Carlo reference statistics from n evaluations on mc_design(space, n, seed).
inline ReferenceStats mc_reference(const Evaluator& f, std::size_t outputs, const ParameterSpace& space,
                                   std::size_t n = 50000, std::uint64_t seed = 0) {
  const DesignMatrix design = mc_design(space, n, seed);
  StreamingStats stats(outputs);
  std::vector<double> x(space.size());
  std::vector<double> y(outputs);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < x.size(); ++j) x[j] = design.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    f(x, y);
    stats.add(y);
  }
  return stats.finish(seed);
}

/// Held-out evaluation points: rows n_reference .. n_reference + n_test - 1
/// of the same mc stream the reference statistics were drawn from.
inline DesignMatrix held_out_design(const ParameterSpace& space, std::size_t n_test, std::uint64_t seed,
                                    std::size_t n_reference) {
  return mc_design(space, n_test, seed, n_reference);
}

/// Summary of a surrogate against held-out runs and reference statistics.
struct ErrorReport {
  double rmse = 0.0;
  std::optional<double> relative_mse;
  std::optional<double> l2_mean;
  std::optional<double> l2_sd;
  std::size_t test_points = 0;
};

}  // namespace amrpc
