#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "amrpc/distributions.hpp"
#include "amrpc/errors.hpp"
#include "amrpc/parallel.hpp"
#include "amrpc/polybasis.hpp"
#include "amrpc/qmc.hpp"

namespace amrpc {

enum class QuantileSource { empirical, distribution };

/// Dyadic split of every input dimension into 2^Nr equal-probability bins.
///
/// Bins are left-closed and right-open except the last, which is closed.
/// Values outside [breakpoints.front(), breakpoints.back()] are assigned to the
/// nearest bin and reported as clamped.
struct Decomposition {
  int refinement = 0;
  std::vector<std::vector<double>> breakpoints;                 // [dim][0 .. 2^Nr]
  std::vector<std::vector<std::vector<std::size_t>>> members;   // [dim][bin] -> rows
  std::vector<std::string> warnings;

  std::size_t dims() const noexcept { return breakpoints.size(); }
  std::size_t bins() const noexcept { return std::size_t{1} << refinement; }
  std::size_t subdomains() const noexcept { return std::size_t{1} << (refinement * dims()); }

  std::size_t bin_of(std::size_t dim, double x, bool* clamped = nullptr) const {
    const auto& bp = breakpoints[dim];
    const bool outside = !(x >= bp.front() && x <= bp.back());
    if (clamped) *clamped = outside;
    if (std::isnan(x)) return 0;
    const auto first = bp.begin() + 1;
    const auto last = bp.end() - 1;
    return static_cast<std::size_t>(std::upper_bound(first, last, x) - first);
  }
};

/// Per-dimension bin numbers l = (l_1, ..., l_M) of one stochastic subdomain.
struct SDIndex {
  std::vector<std::size_t> l;

  /// lin(l) = sum_j l_j * 2^(Nr * j) with dimension 0 fastest.
  std::size_t linear(int refinement) const {
    std::size_t out = 0;
    for (std::size_t j = l.size(); j-- > 0;) out = (out << refinement) | l[j];
    return out;
  }

  static SDIndex from_linear(std::size_t lin, std::size_t dims, int refinement) {
    SDIndex idx;
    idx.l.resize(dims);
    const std::size_t mask = (std::size_t{1} << refinement) - 1;
    for (std::size_t j = 0; j < dims; ++j) {
      idx.l[j] = lin & mask;
      lin >>= refinement;
    }
    return idx;
  }

  friend bool operator==(const SDIndex&, const SDIndex&) = default;
};

struct Location {
  SDIndex index;
  std::size_t linear = 0;
  bool clamped = false;
};

inline Location locate(const Decomposition& dec, std::span<const double> x) {
  Location loc;
  loc.index.l.resize(dec.dims());
  for (std::size_t j = 0; j < dec.dims(); ++j) {
    bool c = false;
    loc.index.l[j] = dec.bin_of(j, x[j], &c);
    loc.clamped = loc.clamped || c;
  }
  loc.linear = loc.index.linear(dec.refinement);
  return loc;
}

namespace detail {

inline void check_refinement(std::size_t dims, int refinement) {
  if (refinement < 0) throw ConfigError("refinement level must be nonnegative");
  if (static_cast<std::size_t>(refinement) * dims > 30) {
    throw ConfigError("2^(M*Nr) subdomains exceeds the supported 2^30");
  }
}

inline void assign_members(Decomposition& dec, const DesignMatrix& design) {
  dec.members.assign(dec.dims(), std::vector<std::vector<std::size_t>>(dec.bins()));
  for (std::size_t j = 0; j < dec.dims(); ++j) {
    for (std::size_t i = 0; i < design.rows(); ++i) {
      const double x = design.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      dec.members[j][dec.bin_of(j, x)].push_back(i);
    }
  }
}

inline std::string dim_label(const DesignMatrix& design, std::size_t j) {
  std::string s = "dimension " + std::to_string(j + 1);
  if (j < design.names.size()) s += " (" + design.names[j] + ")";
  return s;
}

}  // namespace detail

/// Empirical-quantile decomposition: interior breakpoint k sits halfway
/// between the sorted samples at positions floor(k n / 2^Nr) - 1 and
/// floor(k n / 2^Nr). Ties that make this split impossible move it to the
/// nearest achievable position and record a warning.
inline Decomposition decompose(const DesignMatrix& design, int Nr) {
  detail::check_refinement(design.dims(), Nr);
  Decomposition dec;
  dec.refinement = Nr;
  const std::size_t nb = dec.bins();
  const std::size_t n = design.rows();
  for (std::size_t j = 0; j < design.dims(); ++j) {
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = design.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    std::sort(v.begin(), v.end());
    std::vector<std::size_t> changes;  // s with v[s-1] < v[s]
    for (std::size_t s = 1; s < n; ++s) {
      if (v[s - 1] < v[s]) changes.push_back(s);
    }
    if (n == 0 || changes.size() + 1 < nb) {
      throw DataError(detail::dim_label(design, j) + " has " + std::to_string(n ? changes.size() + 1 : 0) +
                      " distinct values; refinement level " + std::to_string(Nr) + " needs " +
                      std::to_string(nb));
    }
    std::vector<double> bp(nb + 1);
    bp.front() = v.front();
    bp.back() = v.back();
    std::size_t next_allowed = 0;
    for (std::size_t k = 1; k < nb; ++k) {
      const std::size_t target = k * n / nb;
      const std::size_t last_allowed = changes.size() - (nb - k);
      // Nearest change point to the target rank that still leaves one change
      // point for each remaining breakpoint.
      const auto first = changes.begin() + static_cast<std::ptrdiff_t>(next_allowed);
      const auto last = changes.begin() + static_cast<std::ptrdiff_t>(last_allowed) + 1;
      const auto it = std::lower_bound(first, last, target);
      std::size_t pick;
      if (it == last) {
        pick = last_allowed;
      } else {
        pick = static_cast<std::size_t>(it - changes.begin());
        if (it != first && target - *(it - 1) <= *it - target) --pick;
      }
      const std::size_t s = changes[pick];
      if (s != target) {
        dec.warnings.push_back(detail::dim_label(design, j) + ": ties moved breakpoint " +
                               std::to_string(k) + " from rank " + std::to_string(target) + " to " +
                               std::to_string(s));
      }
      const double a = v[s - 1];
      const double b = v[s];
      double mid = a + 0.5 * (b - a);
      if (mid <= a) mid = b;
      bp[k] = mid;
      next_allowed = pick + 1;
    }
    dec.breakpoints.push_back(std::move(bp));
  }
  detail::assign_members(dec, design);
  return dec;
}

/// Decomposition at the marginal distributions' quantiles k / 2^Nr instead of
/// the dataset's empirical quantiles.
inline Decomposition decompose(const DesignMatrix& design, int Nr, const ParameterSpace& space) {
  detail::check_refinement(design.dims(), Nr);
  if (space.size() != design.dims()) throw DataError("space and design dimensions differ");
  Decomposition dec;
  dec.refinement = Nr;
  const std::size_t nb = dec.bins();
  for (std::size_t j = 0; j < design.dims(); ++j) {
    std::vector<double> bp(nb + 1);
    for (std::size_t k = 0; k <= nb; ++k) {
      bp[k] = space[j].distribution.quantile(static_cast<double>(k) / static_cast<double>(nb));
    }
    dec.breakpoints.push_back(std::move(bp));
  }
  detail::assign_members(dec, design);
  for (std::size_t j = 0; j < dec.dims(); ++j) {
    for (std::size_t b = 0; b < nb; ++b) {
      if (dec.members[j][b].empty()) {
        throw DataError(detail::dim_label(design, j) + ": bin " + std::to_string(b) + " holds no samples");
      }
    }
  }
  return dec;
}

using MultiIndex = std::vector<int>;

inline double q_norm(const MultiIndex& alpha, double q) {
  double s = 0.0;
  for (int a : alpha) s += std::pow(static_cast<double>(a), q);
  return std::pow(s, 1.0 / q);
}

/// Hyperbolic-truncation membership ||alpha||_q <= No, tested as
/// sum alpha_i^q <= No^q with a 1e-12 relative allowance for rounding.
inline bool within_q_ball(const MultiIndex& alpha, int No, double q) {
  double s = 0.0;
  for (int a : alpha) {
    if (a > 0) s += std::pow(static_cast<double>(a), q);
  }
  return s <= std::pow(static_cast<double>(No), q) * (1.0 + 1e-12);
}

/// The truncated degree set {alpha : ||alpha||_q <= No} in graded order:
/// by total degree, then lexicographically descending (e_1 before e_2).
class DegreeIndexSet {
 public:
  DegreeIndexSet() = default;
  DegreeIndexSet(std::size_t M, int No, double q, std::vector<MultiIndex> items)
      : M_(M), No_(No), q_(q), items_(std::move(items)) {
    for (std::size_t a = 0; a < items_.size(); ++a) positions_.emplace(items_[a], a);
  }

  std::size_t dims() const noexcept { return M_; }
  int max_degree() const noexcept { return No_; }
  double q() const noexcept { return q_; }
  std::size_t size() const noexcept { return items_.size(); }
  const MultiIndex& operator[](std::size_t a) const { return items_[a]; }
  const std::vector<MultiIndex>& items() const noexcept { return items_; }

  std::optional<std::size_t> position(const MultiIndex& alpha) const {
    const auto it = positions_.find(alpha);
    if (it == positions_.end()) return std::nullopt;
    return it->second;
  }
  bool contains(const MultiIndex& alpha) const { return positions_.count(alpha) != 0; }

 private:
  std::size_t M_ = 0;
  int No_ = 0;
  double q_ = 1.0;
  std::vector<MultiIndex> items_;
  std::map<MultiIndex, std::size_t> positions_;
};

inline DegreeIndexSet degree_set(std::size_t M, int No, double q) {
  if (!(q > 0.0 && q <= 1.0)) throw ConfigError("truncation norm q must lie in (0, 1]");
  if (No < 0) throw ConfigError("polynomial degree must be nonnegative");
  if (M == 0) throw ConfigError("degree set needs at least one dimension");
  std::vector<MultiIndex> items;
  MultiIndex alpha(M, 0);
  // Depth-first over all alpha with |alpha| <= No; ||alpha||_q >= |alpha| for q <= 1.
  auto recurse = [&](auto&& self, std::size_t j, int budget) -> void {
    if (j == M) {
      if (within_q_ball(alpha, No, q)) items.push_back(alpha);
      return;
    }
    for (int a = 0; a <= budget; ++a) {
      alpha[j] = a;
      self(self, j + 1, budget - a);
    }
    alpha[j] = 0;
  };
  recurse(recurse, 0, No);
  std::sort(items.begin(), items.end(), [](const MultiIndex& x, const MultiIndex& y) {
    int dx = 0, dy = 0;
    for (int a : x) dx += a;
    for (int a : y) dy += a;
    if (dx != dy) return dx < dy;
    return x > y;
  });
  return DegreeIndexSet(M, No, q, std::move(items));
}

/// Full-tensor coefficient count 2^(M Nr) * (No+M)! / (No! M!).
inline std::uint64_t ncf(std::uint64_t M, std::uint64_t Nr, std::uint64_t No) {
  std::uint64_t binom = 1;
  for (std::uint64_t k = 1; k <= M; ++k) {
    // binom * (No + k) / k stays integral at every step.
    std::uint64_t t;
    if (__builtin_mul_overflow(binom, No + k, &t)) throw ConfigError("coefficient count overflows");
    binom = t / k;
  }
  const std::uint64_t shift = M * Nr;
  if (shift >= 64 || (shift > 0 && (binom >> (64 - shift)) != 0)) throw ConfigError("coefficient count overflows");
  return binom << shift;
}

/// Piecewise orthonormal bases: for each dimension and bin an aPC basis of
/// degree No built from the training samples in that bin, scaled by 2^(Nr/2)
/// so the piecewise functions are orthonormal on the whole domain.
struct PiecewiseBasis {
  Decomposition decomposition;
  int degree = 0;
  std::vector<std::vector<OrthonormalBasis1D>> bases;  // [dim][bin]

  std::size_t dims() const noexcept { return decomposition.dims(); }
  double scale() const noexcept { return std::exp2(0.5 * decomposition.refinement); }

  /// Scaled 1D values 2^(Nr/2) phi_{bin,p}(x), p = 0..No.
  void eval_dim(std::size_t dim, std::size_t bin, double x, std::span<double> out) const {
    bases[dim][bin].eval(x, out);
    const double s = scale();
    for (double& v : out) v *= s;
  }

  /// Values of Phi_{l, alpha}(x) for every alpha in `degrees`, where l is the
  /// subdomain containing x. Returns the location.
  Location evaluate(const DegreeIndexSet& degrees, std::span<const double> x, std::span<double> out) const {
    const Location loc = locate(decomposition, x);
    const std::size_t stride = static_cast<std::size_t>(degree) + 1;
    std::vector<double> uni(dims() * stride);
    for (std::size_t j = 0; j < dims(); ++j) {
      eval_dim(j, loc.index.l[j], x[j], std::span<double>(uni.data() + j * stride, stride));
    }
    for (std::size_t a = 0; a < degrees.size(); ++a) {
      const auto& alpha = degrees[a];
      double v = 1.0;
      for (std::size_t j = 0; j < dims(); ++j) v *= uni[j * stride + static_cast<std::size_t>(alpha[j])];
      out[a] = v;
    }
    return loc;
  }
};

inline PiecewiseBasis build_piecewise_basis(const DesignMatrix& design, const Decomposition& dec, int No,
                                            std::size_t threads = default_threads()) {
  PiecewiseBasis pb;
  pb.decomposition = dec;
  pb.degree = No;
  const std::size_t M = dec.dims();
  const std::size_t nb = dec.bins();
  pb.bases.assign(M, std::vector<OrthonormalBasis1D>(nb));
  parallel_for(
      M * nb,
      [&](std::size_t task) {
        const std::size_t j = task / nb;
        const std::size_t b = task % nb;
        std::vector<double> xs;
        xs.reserve(dec.members[j][b].size());
        for (std::size_t row : dec.members[j][b]) {
          xs.push_back(design.values(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(j)));
        }
        try {
          auto basis = build_basis(raw_moments(xs, 2 * No), No);
          basis.set_gram_deviation(gram_deviation(basis, xs));
          pb.bases[j][b] = std::move(basis);
        } catch (const BasisConstructionError& e) {
          throw BasisConstructionError(detail::dim_label(design, j) + ", bin " + std::to_string(b) + ": " +
                                           e.what(),
                                       e.eigenvalue());
        } catch (const DegenerateMomentsError& e) {
          throw DegenerateMomentsError(detail::dim_label(design, j) + ", bin " + std::to_string(b) + ": " +
                                       e.what());
        }
      },
      threads);
  return pb;
}

}  // namespace amrpc
