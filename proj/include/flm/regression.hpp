#pragma once

// Solvers for U = F W. Sparse fits threshold repeated minimum-norm
// least-squares solves; the ridge variant runs Jacobi-preconditioned conjugate
// gradients on the regularized normal equations.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "flm/assembly.hpp"

namespace flm {

struct StlsqConfig {
  double threshold = 0.1;
  int max_sweeps = 20;
  double inner_ridge = 0.0;
  /// Solve and threshold on unit-norm columns.
  bool normalize_columns = true;
  /// Threshold raw coefficients even when columns are normalized for the solve.
  bool raw_threshold = false;
};

struct RidgeCgConfig {
  double lambda = 1e-9;
  double tol = 1e-10;
  /// 0 selects 10 * P.
  int max_iter = 0;
};

struct FitReport {
  std::size_t active_count = 0;
  int sweeps = 0;
  double train_residual_rms = 0.0;
  std::optional<int> cg_iterations;
  bool converged = true;
  std::vector<std::size_t> dropped_terms;
  std::vector<std::size_t> zero_columns;
  double column_condition_estimate = 0.0;
  /// Every non-bias term was thresholded away.
  bool bias_only_fallback = false;
};

struct FitResult {
  std::vector<double> W;
  FitReport report;
};

namespace detail {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline Eigen::Map<const RowMatrix> as_eigen(const DesignMatrix& F) {
  return {F.data.data(), static_cast<Eigen::Index>(F.rows), static_cast<Eigen::Index>(F.cols)};
}

inline void require_system(const DesignMatrix& F, std::span<const double> U) {
  if (F.rows == 0 || F.cols == 0) fail(ErrorKind::Data, "empty design matrix");
  if (U.size() != F.rows)
    fail(ErrorKind::Data, "target has " + std::to_string(U.size()) + " rows, matrix has " + std::to_string(F.rows));
  for (double v : F.data)
    if (!std::isfinite(v)) fail(ErrorKind::Numerical, "design matrix has non-finite entries");
  for (double v : U)
    if (!std::isfinite(v)) fail(ErrorKind::Numerical, "target has non-finite entries");
}

struct SubsetSolve {
  Eigen::VectorXd coeffs;
  double condition = 0.0;
};

/// Minimum-norm least squares over the listed columns, each divided by its
/// scale. An optional ridge term augments the system with sqrt(ridge) * I.
inline SubsetSolve solve_subset(const DesignMatrix& F, std::span<const double> U, const std::vector<std::size_t>& cols,
                                std::span<const double> scales, double ridge = 0.0) {
  const auto full = as_eigen(F);
  const auto k = static_cast<Eigen::Index>(cols.size());
  const auto extra = ridge > 0.0 ? k : 0;
  Eigen::MatrixXd A(static_cast<Eigen::Index>(F.rows) + extra, k);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(A.rows());
  for (Eigen::Index c = 0; c < k; ++c) {
    const auto j = static_cast<Eigen::Index>(cols[static_cast<std::size_t>(c)]);
    A.col(c).head(full.rows()) = full.col(j) / scales[static_cast<std::size_t>(j)];
  }
  if (extra > 0) {
    A.bottomRows(extra).setZero();
    A.bottomRows(extra).diagonal().setConstant(std::sqrt(ridge));
  }
  for (std::size_t r = 0; r < F.rows; ++r) b(static_cast<Eigen::Index>(r)) = U[r];

  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(A);
  SubsetSolve out;
  out.coeffs = cod.solve(b);
  const auto rank = cod.rank();
  if (rank > 0) {
    const auto d = cod.matrixQTZ().topLeftCorner(rank, rank).diagonal().cwiseAbs();
    out.condition = d.maxCoeff() / d.minCoeff();
    if (rank < k) out.condition = INFINITY;
  }
  return out;
}

inline double residual_rms(const DesignMatrix& F, std::span<const double> U, std::span<const double> W) {
  double ss = 0.0;
  for (std::size_t r = 0; r < F.rows; ++r) {
    double pred = 0.0;
    for (std::size_t c = 0; c < F.cols; ++c) pred += F(r, c) * W[c];
    ss += (U[r] - pred) * (U[r] - pred);
  }
  return std::sqrt(ss / static_cast<double>(F.rows));
}

}  // namespace detail

/// Least-squares solution of min ||U - F W||; the minimum-norm one when F is
/// rank deficient.
inline std::vector<double> least_squares(const DesignMatrix& F, std::span<const double> U) {
  detail::require_system(F, U);
  std::vector<std::size_t> all(F.cols);
  for (std::size_t c = 0; c < F.cols; ++c) all[c] = c;
  const std::vector<double> ones(F.cols, 1.0);
  const auto sol = detail::solve_subset(F, U, all, ones);
  return {sol.coeffs.data(), sol.coeffs.data() + sol.coeffs.size()};
}

/// Sequential thresholded least squares. Each sweep refits on the active set
/// and drops coefficients with magnitude below the threshold; the bias column
/// is never dropped. Stops when the active set is unchanged.
inline FitResult stlsq(const DesignMatrix& F, std::span<const double> U, const StlsqConfig& cfg = {}) {
  detail::require_system(F, U);
  if (!(cfg.threshold >= 0.0)) fail(ErrorKind::Usage, "stlsq threshold must be non-negative");
  if (cfg.max_sweeps < 1) fail(ErrorKind::Usage, "stlsq needs at least one sweep");

  std::vector<double> scales(F.cols, 1.0);
  FitReport rep;
  if (cfg.normalize_columns) {
    ColumnScaling sc = column_normalize(F).second;
    scales = std::move(sc.scales);
    rep.zero_columns = std::move(sc.zero_columns);
  } else {
    for (std::size_t c = 0; c < F.cols; ++c) {
      bool zero = true;
      for (std::size_t r = 0; r < F.rows && zero; ++r) zero = F(r, c) == 0.0;
      if (zero) rep.zero_columns.push_back(c);
    }
  }

  std::vector<std::size_t> active;
  for (std::size_t c = 0; c < F.cols; ++c)
    if (!std::binary_search(rep.zero_columns.begin(), rep.zero_columns.end(), c)) active.push_back(c);

  std::vector<double> W(F.cols, 0.0);
  auto refit = [&](const std::vector<std::size_t>& cols) {
    std::fill(W.begin(), W.end(), 0.0);
    if (cols.empty()) return Eigen::VectorXd();
    auto sol = detail::solve_subset(F, U, cols, scales, cfg.inner_ridge);
    rep.column_condition_estimate = sol.condition;
    for (std::size_t i = 0; i < cols.size(); ++i)
      W[cols[i]] = sol.coeffs(static_cast<Eigen::Index>(i)) / scales[cols[i]];
    return sol.coeffs;
  };

  bool settled = false;
  while (rep.sweeps < cfg.max_sweeps) {
    ++rep.sweeps;
    const Eigen::VectorXd c = refit(active);
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < active.size(); ++i) {
      const std::size_t j = active[i];
      const double mag = cfg.normalize_columns && !cfg.raw_threshold ? std::abs(c(static_cast<Eigen::Index>(i)))
                                                                     : std::abs(W[j]);
      if (mag >= cfg.threshold || (F.bias_column && *F.bias_column == j)) keep.push_back(j);
    }
    if (keep == active) {
      settled = true;
      break;
    }
    for (std::size_t j : active)
      if (!std::binary_search(keep.begin(), keep.end(), j)) rep.dropped_terms.push_back(j);
    active = std::move(keep);
  }
  if (!settled) refit(active);
  rep.converged = settled;

  std::sort(rep.dropped_terms.begin(), rep.dropped_terms.end());
  rep.active_count = static_cast<std::size_t>(std::count_if(W.begin(), W.end(), [](double w) { return w != 0.0; }));
  const std::size_t non_bias = active.size() - (F.bias_column && std::count(active.begin(), active.end(), *F.bias_column));
  rep.bias_only_fallback = non_bias == 0;
  rep.train_residual_rms = detail::residual_rms(F, U, W);
  return {std::move(W), std::move(rep)};
}

/// Solves (F^T F + lambda I) W = F^T U by conjugate gradients with a Jacobi
/// preconditioner. On non-convergence returns the iterate with the smallest
/// residual and converged = false.
inline FitResult ridge_normal_cg(const DesignMatrix& F, std::span<const double> U, const RidgeCgConfig& cfg = {}) {
  detail::require_system(F, U);
  if (!(cfg.lambda > 0.0)) fail(ErrorKind::Usage, "ridge lambda must be positive");
  if (!(cfg.tol > 0.0)) fail(ErrorKind::Usage, "cg tolerance must be positive");
  const auto A = detail::as_eigen(F);
  const Eigen::Map<const Eigen::VectorXd> u(U.data(), static_cast<Eigen::Index>(U.size()));
  const auto P = static_cast<Eigen::Index>(F.cols);
  const int max_iter = cfg.max_iter > 0 ? cfg.max_iter : static_cast<int>(10 * F.cols);

  Eigen::MatrixXd G = A.transpose() * A;
  G.diagonal().array() += cfg.lambda;
  const Eigen::VectorXd b = A.transpose() * u;
  const Eigen::VectorXd inv_diag = G.diagonal().cwiseInverse();

  Eigen::VectorXd x = Eigen::VectorXd::Zero(P);
  Eigen::VectorXd r = b;
  const double bnorm = b.norm();
  FitReport rep;
  rep.cg_iterations = 0;
  Eigen::VectorXd best = x;
  double best_res = bnorm;
  if (bnorm > 0.0) {
    Eigen::VectorXd z = inv_diag.cwiseProduct(r);
    Eigen::VectorXd p = z;
    double rz = r.dot(z);
    rep.converged = false;
    for (int it = 1; it <= max_iter; ++it) {
      const Eigen::VectorXd Gp = G * p;
      const double alpha = rz / p.dot(Gp);
      x += alpha * p;
      r -= alpha * Gp;
      rep.cg_iterations = it;
      const double res = r.norm();
      if (res < best_res) {
        best_res = res;
        best = x;
      }
      if (res <= cfg.tol * bnorm) {
        rep.converged = true;
        break;
      }
      z = inv_diag.cwiseProduct(r);
      const double rz_next = r.dot(z);
      p = z + (rz_next / rz) * p;
      rz = rz_next;
    }
  }
  std::vector<double> W(best.data(), best.data() + best.size());
  rep.active_count = static_cast<std::size_t>(std::count_if(W.begin(), W.end(), [](double w) { return w != 0.0; }));
  rep.sweeps = 1;
  rep.train_residual_rms = detail::residual_rms(F, U, W);
  const auto d = G.diagonal();
  rep.column_condition_estimate = d.maxCoeff() / d.minCoeff();
  return {std::move(W), std::move(rep)};
}

}  // namespace flm
