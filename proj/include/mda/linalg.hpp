#pragma once

// Dense linear algebra for the sequential-regression parameterization of a
// covariance matrix: Sigma = L Lambda L', U = L^{-1}, and the identities that
// let the samplers avoid forming Sigma or its inverse.

#include <Eigen/Dense>

#include <cmath>
#include <string>
#include <vector>

#include "mda/errors.hpp"

namespace mda {

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Relative pivot tolerance for Cholesky/LDL factorizations.
inline constexpr double kPivotTolerance = 1e-12;

template <typename Scalar>
struct LdlFactors {
  Mat<Scalar> L;       // unit lower triangular
  Vec<Scalar> lambda;  // diagonal of Lambda (conditional variances)
  Mat<Scalar> U;       // L^{-1}; below-diagonal entries are -beta_{jk}

  Vec<Scalar> gamma() const { return lambda.cwiseInverse(); }
  Mat<Scalar> recompose() const { return L * lambda.asDiagonal() * L.transpose(); }
};

/// Inverse of a unit lower-triangular matrix by forward substitution.
template <typename Derived>
Mat<typename Derived::Scalar> unit_lower_inverse(const Eigen::MatrixBase<Derived>& L) {
  using Scalar = typename Derived::Scalar;
  const Eigen::Index p = L.rows();
  Mat<Scalar> inv = Mat<Scalar>::Identity(p, p);
  for (Eigen::Index j = 0; j < p; ++j) {
    for (Eigen::Index i = j + 1; i < p; ++i) {
      Scalar s = L(i, j);
      for (Eigen::Index k = j + 1; k < i; ++k) s += L(i, k) * inv(k, j);
      inv(i, j) = -s;
    }
  }
  return inv;
}

template <typename Derived>
bool is_symmetric(const Eigen::MatrixBase<Derived>& a, double rel_tol = 1e-12) {
  if (a.rows() != a.cols()) return false;
  const double scale = std::max<double>(1.0, a.cwiseAbs().maxCoeff());
  return (a - a.transpose()).cwiseAbs().maxCoeff() <= rel_tol * scale;
}

/// Unpivoted LDL' of a symmetric positive-definite matrix. Throws
/// NotPositiveDefinite when a pivot falls below kPivotTolerance times the
/// largest diagonal entry.
template <typename Derived>
LdlFactors<typename Derived::Scalar> ldl_decompose(const Eigen::MatrixBase<Derived>& sigma) {
  using Scalar = typename Derived::Scalar;
  if (!is_symmetric(sigma, 1e-10))
    throw Error(ErrorKind::NotPositiveDefinite, "ldl_decompose: matrix is not symmetric");
  const Eigen::Index p = sigma.rows();
  LdlFactors<Scalar> f;
  f.L = Mat<Scalar>::Identity(p, p);
  f.lambda = Vec<Scalar>::Zero(p);
  const Scalar scale = p > 0 ? sigma.diagonal().cwiseAbs().maxCoeff() : Scalar(1);
  for (Eigen::Index j = 0; j < p; ++j) {
    Scalar dj = sigma(j, j);
    for (Eigen::Index k = 0; k < j; ++k) dj -= f.L(j, k) * f.L(j, k) * f.lambda(k);
    if (!(dj > kPivotTolerance * scale))
      throw Error(ErrorKind::NotPositiveDefinite,
                  "ldl_decompose: pivot " + std::to_string(j + 1) + " is not positive");
    f.lambda(j) = dj;
    for (Eigen::Index i = j + 1; i < p; ++i) {
      Scalar s = sigma(i, j);
      for (Eigen::Index k = 0; k < j; ++k) s -= f.L(i, k) * f.L(j, k) * f.lambda(k);
      f.L(i, j) = s / dj;
    }
  }
  f.U = unit_lower_inverse(f.L);
  return f;
}

/// Lower Cholesky factor B with D = B B'. Throws `kind` when a pivot falls
/// below kPivotTolerance times the largest diagonal entry (no jitter).
template <typename Derived>
Mat<typename Derived::Scalar> checked_cholesky(const Eigen::MatrixBase<Derived>& d,
                                               ErrorKind kind = ErrorKind::SingularCholesky) {
  using Scalar = typename Derived::Scalar;
  const Eigen::Index m = d.rows();
  Mat<Scalar> b = Mat<Scalar>::Zero(m, m);
  const Scalar scale = m > 0 ? d.diagonal().cwiseAbs().maxCoeff() : Scalar(1);
  for (Eigen::Index j = 0; j < m; ++j) {
    Scalar pivot = d(j, j) - b.row(j).head(j).squaredNorm();
    if (!(pivot > kPivotTolerance * scale))
      throw Error(kind, "cholesky: pivot " + std::to_string(j + 1) + " is not positive");
    b(j, j) = std::sqrt(pivot);
    for (Eigen::Index i = j + 1; i < m; ++i)
      b(i, j) = (d(i, j) - b.row(i).head(j).dot(b.row(j).head(j))) / b(j, j);
  }
  return b;
}

// Sequential-regression identities. `U` is the unit lower-triangular matrix
// with -beta below the diagonal, `L` its inverse and `gamma` the precisions.

/// Marginal variances Sigma_jj = sum_{k<j} l_jk^2 / gamma_k + 1 / gamma_j.
template <typename DL, typename DG>
Vec<typename DL::Scalar> marginal_variances(const Eigen::MatrixBase<DL>& L,
                                            const Eigen::MatrixBase<DG>& gamma) {
  using Scalar = typename DL::Scalar;
  const Eigen::Index p = L.rows();
  Vec<Scalar> d(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    Scalar s = Scalar(1) / gamma(j);
    for (Eigen::Index k = 0; k < j; ++k) s += L(j, k) * L(j, k) / gamma(k);
    d(j) = s;
  }
  return d;
}

/// Diagonal of Sigma^{-1}: Sigma^{jj} = gamma_j + sum_{k>j} gamma_k beta_kj^2.
template <typename DU, typename DG>
Vec<typename DU::Scalar> precision_diagonal(const Eigen::MatrixBase<DU>& U,
                                            const Eigen::MatrixBase<DG>& gamma) {
  using Scalar = typename DU::Scalar;
  const Eigen::Index p = U.rows();
  Vec<Scalar> s(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    Scalar acc = gamma(j);
    for (Eigen::Index k = j + 1; k < p; ++k) acc += gamma(k) * U(k, j) * U(k, j);
    s(j) = acc;
  }
  return s;
}

/// log|Sigma| = -sum log gamma_j.
template <typename DG>
typename DG::Scalar log_det_covariance(const Eigen::MatrixBase<DG>& gamma) {
  return -gamma.array().log().sum();
}

/// log|R| for R the correlation matrix of Sigma: -sum_{j>=2} log(gamma_j d_j).
template <typename DG, typename DD>
typename DG::Scalar log_det_correlation(const Eigen::MatrixBase<DG>& gamma,
                                        const Eigen::MatrixBase<DD>& d) {
  typename DG::Scalar s = 0;
  for (Eigen::Index j = 1; j < gamma.size(); ++j) s -= std::log(gamma(j) * d(j));
  return s;
}

/// Correlation matrix of a covariance matrix.
template <typename Derived>
Mat<typename Derived::Scalar> correlation_from_covariance(const Eigen::MatrixBase<Derived>& sigma) {
  using Scalar = typename Derived::Scalar;
  const Vec<Scalar> inv_sd = sigma.diagonal().cwiseSqrt().cwiseInverse();
  Mat<Scalar> r = inv_sd.asDiagonal() * sigma * inv_sd.asDiagonal();
  r.diagonal().setOnes();
  return r;
}

/// Mean and covariance of the `missing` coordinates of N(mean, cov) given the
/// `observed` coordinates equal `values`.
template <typename Scalar>
struct ConditionalNormal {
  Vec<Scalar> mean;
  Mat<Scalar> cov;
};

template <typename DM, typename DC, typename DV>
ConditionalNormal<typename DM::Scalar> conditional_normal(const Eigen::MatrixBase<DM>& mean,
                                                          const Eigen::MatrixBase<DC>& cov,
                                                          const std::vector<int>& missing,
                                                          const std::vector<int>& observed,
                                                          const Eigen::MatrixBase<DV>& values) {
  using Scalar = typename DM::Scalar;
  const Eigen::Index nm = static_cast<Eigen::Index>(missing.size());
  const Eigen::Index no = static_cast<Eigen::Index>(observed.size());
  ConditionalNormal<Scalar> out;
  out.mean = mean(missing);
  out.cov = cov(missing, missing);
  if (no == 0 || nm == 0) return out;
  const Mat<Scalar> s_oo = cov(observed, observed);
  const Mat<Scalar> s_mo = cov(missing, observed);
  Eigen::LLT<Mat<Scalar>> llt(s_oo);
  if (llt.info() != Eigen::Success)
    throw Error(ErrorKind::NotPositiveDefinite, "conditional_normal: observed block not SPD");
  const Vec<Scalar> resid = values - mean(observed);
  out.mean += s_mo * llt.solve(resid);
  out.cov -= s_mo * llt.solve(s_mo.transpose());
  out.cov = (0.5 * (out.cov + out.cov.transpose())).eval();
  return out;
}

}  // namespace mda
