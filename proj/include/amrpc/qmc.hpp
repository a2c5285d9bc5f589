#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "amrpc/distributions.hpp"
#include "amrpc/errors.hpp"
#include "amrpc/sobol_directions.hpp"

namespace amrpc {

enum class Provenance { qmc, mc, external };

inline std::string to_string(Provenance p) {
  switch (p) {
    case Provenance::qmc: return "qmc";
    case Provenance::mc: return "mc";
    default: return "external";
  }
}

/// n x M matrix of parameter values, one row per model run.
struct DesignMatrix {
  Eigen::MatrixXd values;
  Provenance provenance = Provenance::external;
  std::uint64_t skip = 0;  // qmc: index of the first row in the sequence
  std::uint64_t seed = 0;  // mc: generator seed
  std::vector<std::string> names;

  std::size_t rows() const noexcept { return static_cast<std::size_t>(values.rows()); }
  std::size_t dims() const noexcept { return static_cast<std::size_t>(values.cols()); }
};

/// Gray-code Sobol' generator with 32-bit direction numbers.
class SobolGenerator {
 public:
  static constexpr int kBits = 32;
  static constexpr std::size_t max_dimension() { return detail::kSobolMaxDimension; }

  explicit SobolGenerator(std::size_t dim) : directions_(dim), state_(dim, 0u) {
    if (dim == 0 || dim > max_dimension()) {
      throw ConfigError("Sobol' dimension " + std::to_string(dim) +
                        " unsupported (1.." + std::to_string(max_dimension()) + ")");
    }
    for (int k = 0; k < kBits; ++k) directions_[0][k] = 1u << (kBits - 1 - k);
    for (std::size_t j = 1; j < dim; ++j) {
      const auto& poly = detail::kSobolTable[j - 1];
      const std::uint32_t s = poly.degree;
      auto& v = directions_[j];
      for (std::uint32_t k = 0; k < s && k < kBits; ++k) {
        v[k] = poly.m[k] << (kBits - 1 - k);
      }
      for (std::uint32_t k = s; k < kBits; ++k) {
        std::uint32_t x = v[k - s] ^ (v[k - s] >> s);
        for (std::uint32_t i = 1; i < s; ++i) {
          if ((poly.coeffs >> (s - 1 - i)) & 1u) x ^= v[k - i];
        }
        v[k] = x;
      }
    }
  }

  std::size_t dimension() const noexcept { return state_.size(); }
  std::uint64_t index() const noexcept { return index_; }

  /// Positions the generator so the next call to `next` yields point `index`.
  void skip_to(std::uint64_t index) {
    if (index >= (std::uint64_t{1} << kBits)) throw ConfigError("Sobol' index exceeds 2^32");
    const std::uint64_t gray = index ^ (index >> 1);
    for (std::size_t j = 0; j < state_.size(); ++j) {
      std::uint32_t x = 0;
      for (int b = 0; b < kBits; ++b) {
        if ((gray >> b) & 1u) x ^= directions_[j][b];
      }
      state_[j] = x;
    }
    index_ = index;
  }

  void next(std::span<double> out) {
    if (index_ >= (std::uint64_t{1} << kBits)) throw ConfigError("Sobol' sequence exhausted");
    constexpr double kScale = 1.0 / 4294967296.0;
    for (std::size_t j = 0; j < state_.size(); ++j) out[j] = state_[j] * kScale;
    const int c = std::countr_one(index_);
    if (c < kBits) {
      for (std::size_t j = 0; j < state_.size(); ++j) state_[j] ^= directions_[j][c];
    }
    ++index_;
  }

 private:
  std::vector<std::array<std::uint32_t, kBits>> directions_;
  std::vector<std::uint32_t> state_;
  std::uint64_t index_ = 0;
};

/// Rows skip .. skip+n-1 of the d-dimensional Sobol' sequence (row 0 of the
/// sequence is the origin).
inline Eigen::MatrixXd sobol_points(std::size_t d, std::size_t n, std::uint64_t skip = 1) {
  SobolGenerator gen(d);
  gen.skip_to(skip);
  Eigen::MatrixXd out(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  std::vector<double> row(d);
  for (std::size_t i = 0; i < n; ++i) {
    gen.next(row);
    for (std::size_t j = 0; j < d; ++j) out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = row[j];
  }
  return out;
}

/// Pseudo-random uniforms in [0,1): std::mt19937_64 seeded with `seed`, each
/// 64-bit draw mapped to (draw >> 11) * 2^-53, matrix filled row by row.
/// `row_offset` skips that many complete rows of the stream.
inline Eigen::MatrixXd mc_points(std::size_t d, std::size_t n, std::uint64_t seed,
                                 std::uint64_t row_offset = 0) {
  std::mt19937_64 rng(seed);
  rng.discard(row_offset * d);
  Eigen::MatrixXd out(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  constexpr double kScale = 1.0 / 9007199254740992.0;
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    for (Eigen::Index j = 0; j < out.cols(); ++j) out(i, j) = static_cast<double>(rng() >> 11) * kScale;
  }
  return out;
}

/// Maps unit-cube points column-wise through the marginal quantiles.
inline DesignMatrix map_design(const Eigen::MatrixXd& points, const ParameterSpace& space) {
  if (static_cast<std::size_t>(points.cols()) != space.size()) {
    throw DataError("design has " + std::to_string(points.cols()) + " columns but the space has " +
                    std::to_string(space.size()) + " dimensions");
  }
  DesignMatrix design;
  design.values.resize(points.rows(), points.cols());
  for (Eigen::Index j = 0; j < points.cols(); ++j) {
    const auto& dist = space[static_cast<std::size_t>(j)].distribution;
    for (Eigen::Index i = 0; i < points.rows(); ++i) design.values(i, j) = dist.quantile(points(i, j));
  }
  design.names = space.names();
  return design;
}

inline DesignMatrix qmc_design(const ParameterSpace& space, std::size_t n, std::uint64_t skip = 1) {
  DesignMatrix d = map_design(sobol_points(space.size(), n, skip), space);
  d.provenance = Provenance::qmc;
  d.skip = skip;
  return d;
}

inline DesignMatrix mc_design(const ParameterSpace& space, std::size_t n, std::uint64_t seed,
                              std::uint64_t row_offset = 0) {
  DesignMatrix d = map_design(mc_points(space.size(), n, seed, row_offset), space);
  d.provenance = Provenance::mc;
  d.seed = seed;
  d.skip = row_offset;
  return d;
}

}  // namespace amrpc
