#pragma once

#include "nlcausal/common.hpp"

#include <cmath>

namespace nlcausal {

/// Adds eps * I with eps = 1e-8 * trace/p when the smallest eigenvalue is below eps.
/// Returns the jitter actually applied through `jitter_out`.
template <typename Scalar>
Matrix<Scalar> ridge_jitter(const Matrix<Scalar>& sigma, Scalar* jitter_out = nullptr) {
  const Index p = sigma.rows();
  const Scalar trace = sigma.trace();
  require(trace > 0 && std::isfinite(trace), ErrorCode::SingularCovariance,
          "covariance has non-positive trace");
  const Scalar eps = Scalar(1e-8) * trace / static_cast<Scalar>(p);
  Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> eig(sigma, Eigen::EigenvaluesOnly);
  Matrix<Scalar> out = sigma;
  Scalar jitter = 0;
  if (eig.eigenvalues()(0) < eps) {
    jitter = eps;
    out.diagonal().array() += eps;
  }
  if (jitter_out) *jitter_out = jitter;
  return out;
}

/// theta' (Sigma - Sigma_{*A} Sigma_{AA}^{-1} Sigma_{A*}) theta.
template <typename Scalar, typename Derived>
Scalar schur_quadratic(const Matrix<Scalar>& sigma, const Eigen::MatrixBase<Derived>& theta,
                       const IndexSet& support) {
  const Vector<Scalar> u = sigma * theta;
  Scalar q = theta.dot(u);
  if (support.empty()) return q;
  const Matrix<Scalar> s_aa = sigma(support, support);
  const Vector<Scalar> u_a = u(support);
  Eigen::LDLT<Matrix<Scalar>> ldlt(s_aa);
  require(ldlt.info() == Eigen::Success && ldlt.isPositive(), ErrorCode::SingularCovariance,
          "Sigma_AA is not positive definite");
  q -= u_a.dot(ldlt.solve(u_a));
  return q;
}

/// Sigma - Sigma_{*A} Sigma_{AA}^{-1} Sigma_{A*}.
template <typename Scalar>
Matrix<Scalar> schur_complement(const Matrix<Scalar>& sigma, const IndexSet& support) {
  if (support.empty()) return sigma;
  const Index p = sigma.rows();
  std::vector<Index> all(static_cast<std::size_t>(p));
  for (Index j = 0; j < p; ++j) all[static_cast<std::size_t>(j)] = j;
  const Matrix<Scalar> s_aa = sigma(support, support);
  const Matrix<Scalar> s_a_all = sigma(support, all);
  Eigen::LDLT<Matrix<Scalar>> ldlt(s_aa);
  require(ldlt.info() == Eigen::Success && ldlt.isPositive(), ErrorCode::SingularCovariance,
          "Sigma_AA is not positive definite");
  Matrix<Scalar> out = sigma - s_a_all.transpose() * ldlt.solve(s_a_all);
  return (out + out.transpose()) / Scalar(2);
}

}  // namespace nlcausal
