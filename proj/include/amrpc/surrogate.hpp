#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "amrpc/errors.hpp"
#include "amrpc/multires.hpp"
#include "amrpc/parallel.hpp"
#include "amrpc/qmc.hpp"

namespace amrpc {

/// Shape of a gridded output field: rows x cols cells per component,
/// components stored one after the other.
struct GridGeometry {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::string> components;

  std::size_t cells() const noexcept {
    return rows * cols * (components.empty() ? 1 : components.size());
  }
};

/// Model runs: design row i produced output row i (one value per cell).
struct TrainingSet {
  DesignMatrix design;
  Eigen::MatrixXd outputs;  // n x P
  std::optional<GridGeometry> grid;

  void validate() const {
    if (design.values.rows() != outputs.rows()) {
      throw DataError("design has " + std::to_string(design.values.rows()) + " rows but outputs have " +
                      std::to_string(outputs.rows()));
    }
    std::vector<Eigen::Index> bad;
    for (Eigen::Index i = 0; i < outputs.rows(); ++i) {
      if (!design.values.row(i).allFinite() || !outputs.row(i).allFinite()) bad.push_back(i);
    }
    if (!bad.empty()) {
      std::string rows;
      for (std::size_t k = 0; k < bad.size() && k < 20; ++k) rows += (k ? "," : "") + std::to_string(bad[k]);
      if (bad.size() > 20) rows += ",...";
      throw DataError(std::to_string(bad.size()) + " row(s) with non-finite values: " + rows);
    }
    if (grid && grid->cells() != static_cast<std::size_t>(outputs.cols())) {
      throw DataError("grid geometry describes " + std::to_string(grid->cells()) + " cells but outputs have " +
                      std::to_string(outputs.cols()));
    }
  }
};

struct FitOptions {
  double rcond = 1e-10;
  QuantileSource quantiles = QuantileSource::empirical;
  std::optional<ParameterSpace> space;  // required for QuantileSource::distribution
  std::size_t threads = default_threads();
};

struct SubdomainDiagnostics {
  std::size_t samples = 0;
  std::size_t rank = 0;
  double condition = 0.0;       // sigma_max / sigma_min of the block
  double gram_deviation = 0.0;  // max |A^T A / n - I| restricted to the block
  bool underdetermined = false;
};

/// Fitted expansion Y(x) = sum_l sum_alpha c[cell][l][alpha] Phi_{l,alpha}(x).
/// Coefficients are stored cell-major, then subdomain (linear index), then
/// position of alpha in the degree set.
struct SurrogateModel {
  PiecewiseBasis basis;
  DegreeIndexSet degrees;
  std::size_t cells = 0;
  std::vector<double> coefficients;
  std::vector<SubdomainDiagnostics> diagnostics;

  double rcond = 1e-10;
  std::size_t n_train = 0;
  Provenance provenance = Provenance::external;
  std::uint64_t skip = 0;
  std::uint64_t seed = 0;
  std::vector<std::string> names;
  std::optional<GridGeometry> grid;
  std::vector<std::string> warnings;

  int refinement() const noexcept { return basis.decomposition.refinement; }
  int degree() const noexcept { return basis.degree; }
  double q() const noexcept { return degrees.q(); }
  std::size_t dims() const noexcept { return basis.dims(); }
  std::size_t subdomains() const noexcept { return basis.decomposition.subdomains(); }
  std::size_t terms() const noexcept { return degrees.size(); }
  std::size_t coefficients_per_cell() const noexcept { return subdomains() * terms(); }

  double coefficient(std::size_t cell, std::size_t sd, std::size_t a) const {
    return coefficients[(cell * subdomains() + sd) * terms() + a];
  }
  std::span<const double> cell_coefficients(std::size_t cell) const {
    return {coefficients.data() + cell * coefficients_per_cell(), coefficients_per_cell()};
  }
};

/// Rows of the least-squares system restricted to one subdomain.
struct DesignBlock {
  std::vector<std::size_t> rows;
  Eigen::MatrixXd matrix;  // rows.size() x |degrees|
};

/// Because Phi_{l,alpha} vanishes outside subdomain l, the global system
/// splits into one independent block per subdomain.
inline std::vector<DesignBlock> assemble_design(const PiecewiseBasis& basis, const DegreeIndexSet& degrees,
                                                const DesignMatrix& design) {
  const std::size_t nsd = basis.decomposition.subdomains();
  std::vector<std::size_t> owner(design.rows());
  std::vector<DesignBlock> blocks(nsd);
  std::vector<double> x(design.dims());
  for (std::size_t i = 0; i < design.rows(); ++i) {
    for (std::size_t j = 0; j < x.size(); ++j) x[j] = design.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    owner[i] = locate(basis.decomposition, x).linear;
    blocks[owner[i]].rows.push_back(i);
  }
  for (std::size_t sd = 0; sd < nsd; ++sd) {
    if (blocks[sd].rows.empty()) {
      throw DataError("subdomain " + std::to_string(sd) + " receives no training rows");
    }
  }
  std::vector<double> row(degrees.size());
  for (auto& block : blocks) {
    block.matrix.resize(static_cast<Eigen::Index>(block.rows.size()), static_cast<Eigen::Index>(degrees.size()));
    for (std::size_t r = 0; r < block.rows.size(); ++r) {
      for (std::size_t j = 0; j < x.size(); ++j) {
        x[j] = design.values(static_cast<Eigen::Index>(block.rows[r]), static_cast<Eigen::Index>(j));
      }
      basis.evaluate(degrees, x, row);
      for (std::size_t a = 0; a < row.size(); ++a) block.matrix(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(a)) = row[a];
    }
  }
  return blocks;
}

/// Minimum-norm least-squares fit of every output cell. Each subdomain block
/// is factored once by SVD (singular values below rcond * sigma_max dropped)
/// and the pseudoinverse is applied to all cells at once.
inline SurrogateModel fit(const TrainingSet& train, int Nr, int No, double q, const FitOptions& options = {}) {
  train.validate();
  if (!(options.rcond >= 0.0)) throw ConfigError("rcond must be nonnegative");
  const DesignMatrix& design = train.design;

  Decomposition dec;
  if (options.quantiles == QuantileSource::distribution) {
    if (!options.space) throw ConfigError("distribution quantiles need a parameter space");
    dec = decompose(design, Nr, *options.space);
  } else {
    dec = decompose(design, Nr);
  }

  SurrogateModel model;
  model.degrees = degree_set(design.dims(), No, q);
  model.basis = build_piecewise_basis(design, dec, No, options.threads);
  model.cells = static_cast<std::size_t>(train.outputs.cols());
  model.rcond = options.rcond;
  model.n_train = design.rows();
  model.provenance = design.provenance;
  model.skip = design.skip;
  model.seed = design.seed;
  model.names = design.names;
  model.grid = train.grid;
  model.warnings = dec.warnings;

  const auto blocks = assemble_design(model.basis, model.degrees, design);
  const std::size_t nsd = blocks.size();
  const std::size_t nA = model.degrees.size();
  const std::size_t P = model.cells;
  model.coefficients.assign(P * nsd * nA, 0.0);
  model.diagnostics.resize(nsd);
  const double n_total = static_cast<double>(design.rows());

  parallel_for(
      nsd,
      [&](std::size_t sd) {
        const DesignBlock& block = blocks[sd];
        const auto nl = static_cast<Eigen::Index>(block.rows.size());
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(block.matrix, Eigen::ComputeThinU | Eigen::ComputeThinV);
        const Eigen::VectorXd& sv = svd.singularValues();
        const double smax = sv.size() ? sv(0) : 0.0;
        Eigen::VectorXd inv = Eigen::VectorXd::Zero(sv.size());
        std::size_t rank = 0;
        for (Eigen::Index k = 0; k < sv.size(); ++k) {
          if (sv(k) > options.rcond * smax) {
            inv(k) = 1.0 / sv(k);
            ++rank;
          }
        }
        Eigen::MatrixXd y(nl, static_cast<Eigen::Index>(P));
        for (Eigen::Index r = 0; r < nl; ++r) y.row(r) = train.outputs.row(static_cast<Eigen::Index>(block.rows[static_cast<std::size_t>(r)]));
        const Eigen::MatrixXd c = svd.matrixV() * inv.asDiagonal() * (svd.matrixU().transpose() * y);

        for (std::size_t p = 0; p < P; ++p) {
          double* dst = model.coefficients.data() + (p * nsd + sd) * nA;
          for (std::size_t a = 0; a < nA; ++a) dst[a] = c(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(p));
        }

        auto& diag = model.diagnostics[sd];
        diag.samples = block.rows.size();
        diag.rank = rank;
        const double smin = sv.size() ? sv(sv.size() - 1) : 0.0;
        diag.condition = smin > 0.0 ? smax / smin : std::numeric_limits<double>::infinity();
        const Eigen::MatrixXd gram = block.matrix.transpose() * block.matrix / n_total;
        diag.gram_deviation = (gram - Eigen::MatrixXd::Identity(gram.rows(), gram.cols())).cwiseAbs().maxCoeff();
        diag.underdetermined = block.rows.size() < nA;
      },
      options.threads);

  // Constant cells get the exact expansion (only the Phi_{l,0} terms), so
  // their variance is zero and not a roundoff residue.
  const std::size_t zero = *model.degrees.position(MultiIndex(design.dims(), 0));
  const double phi0 = std::pow(model.basis.scale(), static_cast<double>(design.dims()));
  for (std::size_t p = 0; p < P && design.rows() > 0; ++p) {
    const auto col = train.outputs.col(static_cast<Eigen::Index>(p));
    if ((col.array() != col(0)).any()) continue;
    double* dst = model.coefficients.data() + p * nsd * nA;
    std::fill(dst, dst + nsd * nA, 0.0);
    for (std::size_t sd = 0; sd < nsd; ++sd) dst[sd * nA + zero] = col(0) / phi0;
  }

  for (std::size_t sd = 0; sd < nsd; ++sd) {
    const auto& d = model.diagnostics[sd];
    if (d.underdetermined) {
      model.warnings.push_back("subdomain " + std::to_string(sd) + " is underdetermined (" +
                               std::to_string(d.samples) + " rows for " + std::to_string(nA) +
                               " terms); minimum-norm solution used");
    } else if (d.rank < nA) {
      model.warnings.push_back("subdomain " + std::to_string(sd) + " is rank deficient (rank " +
                               std::to_string(d.rank) + " of " + std::to_string(nA) + ")");
    }
  }
  return model;
}

/// Evaluates the surrogate at each row of `points` (k x M); result is k x P.
/// Points outside the training range use the nearest subdomain.
inline Eigen::MatrixXd predict_batch(const SurrogateModel& model, const Eigen::MatrixXd& points,
                                     std::size_t threads = default_threads()) {
  if (static_cast<std::size_t>(points.cols()) != model.dims()) {
    throw DataError("points have " + std::to_string(points.cols()) + " columns, model expects " +
                    std::to_string(model.dims()));
  }
  const std::size_t k = static_cast<std::size_t>(points.rows());
  const std::size_t nA = model.terms();
  const std::size_t nsd = model.subdomains();
  const std::size_t P = model.cells;
  Eigen::MatrixXd out(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(P));
  constexpr std::size_t kChunk = 256;
  const std::size_t chunks = (k + kChunk - 1) / kChunk;
  parallel_for(
      chunks,
      [&](std::size_t chunk) {
        std::vector<double> x(model.dims());
        std::vector<double> phi(nA);
        const std::size_t end = std::min(k, (chunk + 1) * kChunk);
        for (std::size_t i = chunk * kChunk; i < end; ++i) {
          for (std::size_t j = 0; j < x.size(); ++j) x[j] = points(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
          const std::size_t sd = model.basis.evaluate(model.degrees, x, phi).linear;
          for (std::size_t p = 0; p < P; ++p) {
            const double* c = model.coefficients.data() + (p * nsd + sd) * nA;
            double s = 0.0;
            for (std::size_t a = 0; a < nA; ++a) s += c[a] * phi[a];
            out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(p)) = s;
          }
        }
      },
      threads);
  return out;
}

inline std::vector<double> predict(const SurrogateModel& model, std::span<const double> x) {
  Eigen::MatrixXd pt(1, static_cast<Eigen::Index>(x.size()));
  for (std::size_t j = 0; j < x.size(); ++j) pt(0, static_cast<Eigen::Index>(j)) = x[j];
  const Eigen::MatrixXd y = predict_batch(model, pt, 1);
  return std::vector<double>(y.data(), y.data() + y.size());
}

}  // namespace amrpc
