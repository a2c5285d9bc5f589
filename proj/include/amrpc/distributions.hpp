#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>
#include <string>
#include <type_traits>
#include <utility>
#include <variant>
#include <vector>

#include <boost/math/special_functions/beta.hpp>
#include <boost/math/special_functions/erf.hpp>

#include "amrpc/errors.hpp"

namespace amrpc {

struct Uniform {
  double lo;
  double hi;
};

/// Log-normal law (natural log) restricted to [lo, hi] and renormalized.
struct TruncatedLogNormal {
  double mu_log;
  double sigma_log;
  double lo;
  double hi;
};

/// Beta(shape_a, shape_b) law affinely stretched onto [lo, hi].
struct ScaledBeta {
  double shape_a;
  double shape_b;
  double lo;
  double hi;
};

/// A validated marginal distribution. Immutable after construction.
class DistributionSpec {
 public:
  using Variant = std::variant<Uniform, TruncatedLogNormal, ScaledBeta>;

  DistributionSpec(Uniform u) : law_(u) { validate(); }
  DistributionSpec(TruncatedLogNormal t) : law_(t) { validate(); }
  DistributionSpec(ScaledBeta b) : law_(b) { validate(); }

  const Variant& law() const noexcept { return law_; }

  double lo() const {
    return std::visit([](const auto& d) { return d.lo; }, law_);
  }
  double hi() const {
    return std::visit([](const auto& d) { return d.hi; }, law_);
  }

  /// "uniform", "truncated_lognormal" or "scaled_beta".
  std::string kind() const {
    switch (law_.index()) {
      case 0: return "uniform";
      case 1: return "truncated_lognormal";
      default: return "scaled_beta";
    }
  }

  double pdf(double x) const;
  double cdf(double x) const;
  double quantile(double r) const;

 private:
  void validate() const;

  Variant law_;
};

namespace detail {

inline double std_normal_cdf(double z) {
  return 0.5 * std::erfc(-z / std::numbers::sqrt2);
}

inline double std_normal_sf(double z) {
  return 0.5 * std::erfc(z / std::numbers::sqrt2);
}

inline double std_normal_pdf(double z) {
  return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
}

// Quantities of a truncated log-normal needed by cdf/quantile. When the
// truncation window sits in the upper tail, probabilities are formed from
// survival functions to avoid cancellation against 1.
struct LogNormalWindow {
  double z_lo;
  double z_hi;
  bool upper_tail;
  double p_lo;  // Phi(z_lo), or Q(z_lo) when upper_tail
  double p_hi;  // Phi(z_hi), or Q(z_hi) when upper_tail
  double mass;

  explicit LogNormalWindow(const TruncatedLogNormal& t)
      : z_lo((std::log(t.lo) - t.mu_log) / t.sigma_log),
        z_hi((std::log(t.hi) - t.mu_log) / t.sigma_log),
        upper_tail(z_lo > 0.0) {
    if (upper_tail) {
      p_lo = std_normal_sf(z_lo);
      p_hi = std_normal_sf(z_hi);
      mass = p_lo - p_hi;
    } else {
      p_lo = std_normal_cdf(z_lo);
      p_hi = std_normal_cdf(z_hi);
      mass = p_hi - p_lo;
    }
  }
};

// Beta functions return +inf / report overflow at endpoints where a shape is
// below 1; those values are handled by the callers instead of throwing.
using BetaPolicy = boost::math::policies::policy<boost::math::policies::overflow_error<boost::math::policies::ignore_error>>;

}  // namespace detail

inline void DistributionSpec::validate() const {
  const double l = lo();
  const double h = hi();
  if (!std::isfinite(l) || !std::isfinite(h) || !(l < h)) {
    throw ConfigError("distribution bounds must be finite with lo < hi");
  }
  if (const auto* t = std::get_if<TruncatedLogNormal>(&law_)) {
    if (!(t->lo > 0.0)) throw ConfigError("truncated log-normal requires lo > 0");
    if (!(t->sigma_log > 0.0) || !std::isfinite(t->mu_log)) {
      throw ConfigError("truncated log-normal requires sigma_log > 0");
    }
    if (!(detail::LogNormalWindow(*t).mass > 0.0)) {
      throw ConfigError("truncated log-normal window carries no probability mass");
    }
  }
  if (const auto* b = std::get_if<ScaledBeta>(&law_)) {
    if (!(b->shape_a > 0.0) || !(b->shape_b > 0.0)) {
      throw ConfigError("beta shapes must be positive");
    }
  }
}

inline double DistributionSpec::pdf(double x) const {
  if (!(x >= lo() && x <= hi())) return 0.0;
  return std::visit(
      [x](const auto& d) -> double {
        using T = std::decay_t<decltype(d)>;
        if constexpr (std::is_same_v<T, Uniform>) {
          return 1.0 / (d.hi - d.lo);
        } else if constexpr (std::is_same_v<T, TruncatedLogNormal>) {
          const detail::LogNormalWindow w(d);
          const double z = (std::log(x) - d.mu_log) / d.sigma_log;
          return detail::std_normal_pdf(z) / (x * d.sigma_log * w.mass);
        } else {
          const double width = d.hi - d.lo;
          const double t = (x - d.lo) / width;
          // Unbounded densities at the endpoints (shape < 1) are reported as
          // +inf by boost; keep them finite at the closed boundary.
          const double v = boost::math::ibeta_derivative(d.shape_a, d.shape_b, t, detail::BetaPolicy()) / width;
          return std::isfinite(v) ? v : 0.0;
        }
      },
      law_);
}

inline double DistributionSpec::cdf(double x) const {
  if (std::isnan(x)) return 0.0;
  if (x <= lo()) return 0.0;
  if (x >= hi()) return 1.0;
  const double p = std::visit(
      [x](const auto& d) -> double {
        using T = std::decay_t<decltype(d)>;
        if constexpr (std::is_same_v<T, Uniform>) {
          return (x - d.lo) / (d.hi - d.lo);
        } else if constexpr (std::is_same_v<T, TruncatedLogNormal>) {
          const detail::LogNormalWindow w(d);
          const double z = (std::log(x) - d.mu_log) / d.sigma_log;
          if (w.upper_tail) return (w.p_lo - detail::std_normal_sf(z)) / w.mass;
          return (detail::std_normal_cdf(z) - w.p_lo) / w.mass;
        } else {
          return boost::math::ibeta(d.shape_a, d.shape_b, (x - d.lo) / (d.hi - d.lo));
        }
      },
      law_);
  return std::clamp(p, 0.0, 1.0);
}

inline double DistributionSpec::quantile(double r) const {
  if (!(r >= 0.0 && r <= 1.0)) {
    throw DomainError("quantile level must lie in [0, 1]");
  }
  if (r == 0.0) return lo();
  if (r == 1.0) return hi();
  const double x = std::visit(
      [r](const auto& d) -> double {
        using T = std::decay_t<decltype(d)>;
        if constexpr (std::is_same_v<T, Uniform>) {
          return d.lo + r * (d.hi - d.lo);
        } else if constexpr (std::is_same_v<T, TruncatedLogNormal>) {
          const detail::LogNormalWindow w(d);
          double z;
          if (w.upper_tail) {
            const double q = w.p_lo - r * w.mass;
            z = std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * q);
          } else {
            const double p = w.p_lo + r * w.mass;
            z = -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * p);
          }
          return std::exp(d.mu_log + d.sigma_log * z);
        } else {
          return d.lo + (d.hi - d.lo) * boost::math::ibeta_inv(d.shape_a, d.shape_b, r, detail::BetaPolicy());
        }
      },
      law_);
  return std::clamp(x, lo(), hi());
}

inline double pdf(const DistributionSpec& spec, double x) { return spec.pdf(x); }
inline double cdf(const DistributionSpec& spec, double x) { return spec.cdf(x); }
inline double quantile(const DistributionSpec& spec, double r) { return spec.quantile(r); }

struct Parameter {
  std::string name;
  DistributionSpec distribution;
};

/// Ordered set of independent marginals. Dimension order is the index order
/// used throughout sensitivity reports (first parameter is index 1).
class ParameterSpace {
 public:
  explicit ParameterSpace(std::vector<Parameter> dims) : dims_(std::move(dims)) {
    if (dims_.empty()) throw ConfigError("parameter space needs at least one dimension");
    std::set<std::string> seen;
    for (const auto& p : dims_) {
      if (p.name.empty()) throw ConfigError("parameter names must be nonempty");
      if (!seen.insert(p.name).second) {
        throw ConfigError("duplicate parameter name '" + p.name + "'");
      }
    }
  }

  std::size_t size() const noexcept { return dims_.size(); }
  const Parameter& operator[](std::size_t j) const { return dims_.at(j); }
  const std::vector<Parameter>& dims() const noexcept { return dims_; }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    out.reserve(dims_.size());
    for (const auto& p : dims_) out.push_back(p.name);
    return out;
  }

 private:
  std::vector<Parameter> dims_;
};

/// Truncated log-normal over (lo, hi) centred in log space with a quarter of
/// the log-width as standard deviation.
inline TruncatedLogNormal log_centered_lognormal(double lo, double hi) {
  const double a = std::log(lo);
  const double b = std::log(hi);
  return TruncatedLogNormal{0.5 * (a + b), (b - a) / 4.0, lo, hi};
}

/// Scaled beta on [lo, hi] with first shape `shape_a` (> 1) and the second
/// shape chosen so that the density peaks at `mode`.
inline ScaledBeta beta_with_mode(double shape_a, double mode, double lo, double hi) {
  if (!(shape_a > 1.0) || !(mode > lo && mode < hi)) {
    throw ConfigError("beta_with_mode needs shape_a > 1 and lo < mode < hi");
  }
  const double t = (mode - lo) / (hi - lo);
  const double shape_b = (shape_a - 1.0) / t - shape_a + 2.0;
  return ScaledBeta{shape_a, shape_b, lo, hi};
}

/// The five uncertain interface/porous-medium parameters of the coupled
/// free-flow / porous-medium model, in report order:
///   1 beta_sj  stress-jump coefficient     Uniform[0, 10]
///   2 k_gamma  interface permeability      truncated log-normal on (1e-5, 1e-2)
///   3 mu_eff   effective viscosity         scaled beta(2, 6) on [0.1, 10]
///   4 alpha_bj Beavers-Joseph coefficient  scaled beta on (0, 10), mode 1
///   5 k_pm     porous-medium permeability  truncated log-normal on (1e-8, 1e-5)
inline ParameterSpace table1_space() {
  return ParameterSpace({
      {"beta_sj", Uniform{0.0, 10.0}},
      {"k_gamma", log_centered_lognormal(1e-5, 1e-2)},
      {"mu_eff", ScaledBeta{2.0, 6.0, 0.1, 10.0}},
      {"alpha_bj", beta_with_mode(1.5, 1.0, 0.0, 10.0)},
      {"k_pm", log_centered_lognormal(1e-8, 1e-5)},
  });
}

}  // namespace amrpc
