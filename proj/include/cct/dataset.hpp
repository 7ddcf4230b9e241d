#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "cct/errors.hpp"
#include "cct/random.hpp"

namespace cct {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using VectorRef = Eigen::Ref<const Eigen::VectorXd>;
using Index = Eigen::Index;

/// Rows of `m` selected by `rows`, in that order.
inline Matrix select_rows(const Matrix& m, std::span<const std::size_t> rows) {
  Matrix out(static_cast<Index>(rows.size()), m.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out.row(static_cast<Index>(r)) = m.row(static_cast<Index>(rows[r]));
  }
  return out;
}

/// Columns of `m` selected by `cols`, in that order.
inline Matrix select_columns(const Matrix& m, std::span<const Index> cols) {
  Matrix out(m.rows(), static_cast<Index>(cols.size()));
  for (std::size_t c = 0; c < cols.size(); ++c) {
    if (cols[c] < 0 || cols[c] >= m.cols()) {
      throw argument_error("column index out of range");
    }
    out.col(static_cast<Index>(c)) = m.col(cols[c]);
  }
  return out;
}

/// Covariates plus zero or more response columns, one row per observation.
struct Dataset {
  Matrix covariates;
  Matrix responses;  // rows x q; q == 0 for unlabeled data
  std::vector<std::string> covariate_names;
  std::vector<std::string> response_names;

  Index rows() const noexcept { return covariates.rows(); }
  Index dim() const noexcept { return covariates.cols(); }
  bool labeled() const noexcept { return responses.cols() > 0; }

  /// First response column as a vector.
  std::vector<double> response(Index column = 0) const {
    if (column >= responses.cols()) {
      throw argument_error("dataset has no response column " + std::to_string(column));
    }
    std::vector<double> out(static_cast<std::size_t>(rows()));
    for (Index i = 0; i < rows(); ++i) out[static_cast<std::size_t>(i)] = responses(i, column);
    return out;
  }

  Dataset subset(std::span<const std::size_t> idx) const {
    Dataset out;
    out.covariates = select_rows(covariates, idx);
    out.responses = responses.cols() > 0 ? select_rows(responses, idx) : Matrix(static_cast<Index>(idx.size()), 0);
    out.covariate_names = covariate_names;
    out.response_names = response_names;
    return out;
  }
};

/// Z-score transform with statistics from a reference (training) sample.
///
/// Zero-variance columns keep scale 1 so they map to a constant 0.
struct Standardizer {
  Vector mean;
  Vector scale;

  static Standardizer fit(const Matrix& x) {
    Standardizer s;
    const Index n = x.rows();
    s.mean = x.colwise().mean().transpose();
    s.scale = Vector::Ones(x.cols());
    if (n > 1) {
      for (Index c = 0; c < x.cols(); ++c) {
        const double var = (x.col(c).array() - s.mean(c)).square().sum() / static_cast<double>(n - 1);
        if (var > 0.0 && std::isfinite(var)) s.scale(c) = std::sqrt(var);
      }
    }
    return s;
  }

  static Standardizer identity(Index dim) {
    return Standardizer{Vector::Zero(dim), Vector::Ones(dim)};
  }

  Vector apply(VectorRef x) const { return (x - mean).cwiseQuotient(scale); }

  Matrix apply_rows(const Matrix& x) const {
    Matrix out = x;
    for (Index i = 0; i < out.rows(); ++i) {
      out.row(i) = (x.row(i) - mean.transpose()).cwiseQuotient(scale.transpose());
    }
    return out;
  }
};

/// Random train/calibration partition. `calibration_fraction` of the rows
/// (rounded down, at least one on each side) go to calibration.
struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> calibration;
};

inline SplitIndices random_split(std::size_t n, double calibration_fraction, RandomStream& rng) {
  if (!(calibration_fraction > 0.0 && calibration_fraction < 1.0)) {
    throw argument_error("split ratio must lie in (0, 1)");
  }
  if (n < 2) throw calibration_error("need at least two rows to split into train and calibration");
  auto n_cal = static_cast<std::size_t>(std::floor(static_cast<double>(n) * calibration_fraction));
  n_cal = std::clamp<std::size_t>(n_cal, 1, n - 1);
  const std::vector<std::size_t> perm = rng.permutation(n);
  SplitIndices out;
  out.train.assign(perm.begin(), perm.end() - static_cast<std::ptrdiff_t>(n_cal));
  out.calibration.assign(perm.end() - static_cast<std::ptrdiff_t>(n_cal), perm.end());
  return out;
}

}  // namespace cct
