#pragma once

// Stage one: sliced inverse regression for the instrument index direction.

#include "nlcausal/core.hpp"
#include "nlcausal/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace nlcausal {

/// Equal-frequency slices over the stable rank order of x.
struct SlicePartition {
  std::vector<Index> assignment;  // slice of each row, 0..S-1
  std::vector<Index> counts;      // rows per slice

  Index n_slices() const { return static_cast<Index>(counts.size()); }
};

/// Row order of x, ascending, ties broken by row index.
template <typename Derived>
std::vector<Index> stable_order(const Eigen::DenseBase<Derived>& x) {
  std::vector<Index> order(static_cast<std::size_t>(x.size()));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return x(a) < x(b); });
  return order;
}

/// Slice sizes for n items in S slices; the remainder goes to the lowest slices.
inline std::vector<Index> slice_counts(Index n, Index S) {
  std::vector<Index> counts(static_cast<std::size_t>(S), n / S);
  for (Index s = 0; s < n % S; ++s) ++counts[static_cast<std::size_t>(s)];
  return counts;
}

template <typename Derived>
SlicePartition slice_partition(const Eigen::DenseBase<Derived>& x, Index S) {
  const Index n = x.size();
  require(S >= 2 && S <= n, ErrorCode::BadSliceCount,
          "slice count " + std::to_string(S) + " outside [2, " + std::to_string(n) + "]");
  SlicePartition part;
  part.counts = slice_counts(n, S);
  part.assignment.assign(static_cast<std::size_t>(n), 0);
  const auto order = stable_order(x);
  std::size_t pos = 0;
  for (Index s = 0; s < S; ++s)
    for (Index c = 0; c < part.counts[static_cast<std::size_t>(s)]; ++c)
      part.assignment[static_cast<std::size_t>(order[pos++])] = s;
  return part;
}

template <typename Scalar>
struct SirMoments {
  Matrix<Scalar> Sigma_hat;  // n1^{-1} sum z z'
  Matrix<Scalar> Gamma_hat;  // sum_s (n_s/n1) zbar_s zbar_s'
};

template <typename Scalar>
SirMoments<Scalar> sir_moments(const BasicStageOneData<Scalar>& data, const SlicePartition& partition) {
  const Index n = data.n();
  const Index p = data.p();
  require(static_cast<Index>(partition.assignment.size()) == n, ErrorCode::DimensionMismatch,
          "slice partition does not match the number of rows");
  const Index S = partition.n_slices();

  Matrix<Scalar> sums = Matrix<Scalar>::Zero(p, S);
  for (Index i = 0; i < n; ++i) sums.col(partition.assignment[static_cast<std::size_t>(i)]) += data.Z.row(i).transpose();

  SirMoments<Scalar> m;
  m.Sigma_hat = sample_covariance(data);
  m.Gamma_hat = Matrix<Scalar>::Zero(p, p);
  for (Index s = 0; s < S; ++s) {
    const Scalar ns = static_cast<Scalar>(partition.counts[static_cast<std::size_t>(s)]);
    if (ns == 0) continue;
    const Vector<Scalar> mean = sums.col(s) / ns;
    m.Gamma_hat.noalias() += (ns / static_cast<Scalar>(n)) * mean * mean.transpose();
  }
  return m;
}

template <typename Scalar>
struct SirDirection {
  Vector<Scalar> theta;    // theta' Sigma_hat theta = 1
  Scalar eigenvalue = 0;   // attained theta' Gamma_hat theta
  bool degenerate_spectrum = false;
  Scalar jitter = 0;
};

/// Leading generalized eigenvector of (Gamma_hat, Sigma_hat) via Cholesky whitening.
template <typename Scalar>
SirDirection<Scalar> sir_direction(const SirMoments<Scalar>& moments) {
  const Index p = moments.Sigma_hat.rows();
  require(moments.Gamma_hat.rows() == p && moments.Gamma_hat.cols() == p && moments.Sigma_hat.cols() == p,
          ErrorCode::DimensionMismatch, "SIR moment matrices differ in size");

  SirDirection<Scalar> out;
  const Matrix<Scalar> sigma = ridge_jitter(moments.Sigma_hat, &out.jitter);
  Eigen::LLT<Matrix<Scalar>> llt(sigma);
  require(llt.info() == Eigen::Success, ErrorCode::SingularCovariance,
          "instrument covariance is not positive definite");
  const auto L = llt.matrixL();

  // W = L^{-1} Gamma L^{-T}
  Matrix<Scalar> half = L.solve(moments.Gamma_hat);
  Matrix<Scalar> whitened = L.solve(half.transpose()).transpose();
  whitened = (whitened + whitened.transpose()) / Scalar(2);

  Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> eig(whitened);
  require(eig.info() == Eigen::Success, ErrorCode::SingularCovariance, "eigensolver failed");
  const Scalar top = eig.eigenvalues()(p - 1);
  if (p > 1) {
    const Scalar gap = top - eig.eigenvalues()(p - 2);
    const Scalar scale = std::max(std::abs(top), std::numeric_limits<Scalar>::min());
    out.degenerate_spectrum = gap < Scalar(1e-10) * scale;
  }

  Vector<Scalar> theta = llt.matrixU().solve(eig.eigenvectors().col(p - 1));
  // Normalize against the unjittered covariance.
  const Scalar norm2 = theta.dot(moments.Sigma_hat * theta);
  require(norm2 > 0, ErrorCode::SingularCovariance, "direction has zero variance");
  theta /= std::sqrt(norm2);

  Index lead = 0;
  theta.cwiseAbs().maxCoeff(&lead);
  if (theta(lead) < 0) theta = -theta;

  out.theta = std::move(theta);
  out.eigenvalue = out.theta.dot(moments.Gamma_hat * out.theta);
  return out;
}

/// Slice, form moments and extract the direction in one call.
template <typename Scalar>
SirDirection<Scalar> sir_fit(const BasicStageOneData<Scalar>& data, Index S, SirMoments<Scalar>* moments_out = nullptr) {
  const auto part = slice_partition(data.x, S);
  auto moments = sir_moments(data, part);
  auto dir = sir_direction(moments);
  if (moments_out) *moments_out = std::move(moments);
  return dir;
}

namespace detail {

/// SIR moments of a bootstrap resample described by per-row multiplicities.
/// `order` is the stable rank order of the original x. With `recenter` the
/// resample is re-centered at its own weighted mean.
template <typename Scalar>
SirMoments<Scalar> resampled_sir_moments(const Matrix<Scalar>& Z, const std::vector<Index>& order,
                                         const std::vector<Index>& multiplicity, Index S, bool recenter = true) {
  const Index n = Z.rows();
  const Index p = Z.cols();
  Index used = 0;
  for (Index c : multiplicity) used += (c > 0);

  Matrix<Scalar> weighted(used, p);
  Vector<Scalar> mean = Vector<Scalar>::Zero(p);
  Index r = 0;
  for (Index i = 0; i < n; ++i) {
    const Index c = multiplicity[static_cast<std::size_t>(i)];
    if (c == 0) continue;
    weighted.row(r++) = std::sqrt(static_cast<Scalar>(c)) * Z.row(i);
    mean.noalias() += static_cast<Scalar>(c) * Z.row(i).transpose();
  }
  const Scalar total = static_cast<Scalar>(n);
  mean /= total;
  if (!recenter) mean.setZero();

  SirMoments<Scalar> m;
  m.Sigma_hat = Matrix<Scalar>::Zero(p, p);
  m.Sigma_hat.template selfadjointView<Eigen::Lower>().rankUpdate(weighted.transpose(), Scalar(1) / total);
  m.Sigma_hat.template selfadjointView<Eigen::Lower>().rankUpdate(mean, Scalar(-1));
  m.Sigma_hat = m.Sigma_hat.template selfadjointView<Eigen::Lower>();

  const auto counts = slice_counts(n, S);
  Matrix<Scalar> sums = Matrix<Scalar>::Zero(p, S);
  Index slice = 0;
  Index room = counts[0];
  for (Index i : order) {
    Index c = multiplicity[static_cast<std::size_t>(i)];
    while (c > 0) {
      while (room == 0) room = counts[static_cast<std::size_t>(++slice)];
      const Index take = std::min(c, room);
      sums.col(slice).noalias() += static_cast<Scalar>(take) * Z.row(i).transpose();
      c -= take;
      room -= take;
    }
  }
  m.Gamma_hat = Matrix<Scalar>::Zero(p, p);
  for (Index s = 0; s < S; ++s) {
    const Scalar ns = static_cast<Scalar>(counts[static_cast<std::size_t>(s)]);
    const Vector<Scalar> zbar = sums.col(s) / ns - mean;
    m.Gamma_hat.noalias() += (ns / total) * zbar * zbar.transpose();
  }
  return m;
}

}  // namespace detail
}  // namespace nlcausal
