#pragma once

#include "nlcausal/common.hpp"

#include <cmath>
#include <functional>
#include <memory>
#include <string>

namespace nlcausal {

/// Individual-level first sample: instruments Z (n1 x p) and exposure x.
///
/// `center` records the removed column means in `z_shift` / `x_shift`, so the
/// original exposure scale is `x + x_shift`. Estimators that report results on
/// the exposure axis (the transformation estimate, the power transform) use it.
///
/// `mean_zero_assumed` marks draws whose population mean is zero by design;
/// estimators then work with raw second moments instead of centering.
template <typename Scalar>
struct BasicStageOneData {
  Matrix<Scalar> Z;
  Vector<Scalar> x;
  Vector<Scalar> z_shift;
  Scalar x_shift = 0;
  bool mean_zero_assumed = false;

  Index n() const { return Z.rows(); }
  Index p() const { return Z.cols(); }
  Vector<Scalar> raw_x() const { return x.array() + x_shift; }
};
using StageOneData = BasicStageOneData<double>;

template <typename Scalar>
void validate(const BasicStageOneData<Scalar>& data) {
  require(data.n() >= 2, ErrorCode::EmptyData, "stage-one data needs at least 2 rows");
  require(data.p() >= 1, ErrorCode::EmptyData, "stage-one data needs at least one instrument");
  require(data.x.size() == data.n(), ErrorCode::DimensionMismatch,
          "exposure length differs from instrument rows");
  require(all_finite(data.Z) && all_finite(data.x), ErrorCode::InvalidData,
          "stage-one data contains NaN or Inf");
}

template <typename DerivedZ, typename DerivedX>
auto make_stage_one(const Eigen::MatrixBase<DerivedZ>& Z, const Eigen::MatrixBase<DerivedX>& x) {
  using Scalar = typename DerivedZ::Scalar;
  BasicStageOneData<Scalar> data;
  data.Z = Z;
  data.x = x;
  data.z_shift = Vector<Scalar>::Zero(Z.cols());
  validate(data);
  return data;
}

/// Subtracts column means from Z and x; shifts accumulate in z_shift/x_shift.
template <typename Scalar>
BasicStageOneData<Scalar> center(const BasicStageOneData<Scalar>& data) {
  require(data.n() >= 2, ErrorCode::EmptyData, "centering needs at least 2 rows");
  BasicStageOneData<Scalar> out;
  const Vector<Scalar> zmean = data.Z.colwise().mean().transpose();
  const Scalar xmean = data.x.mean();
  out.Z = data.Z.rowwise() - zmean.transpose();
  out.x = data.x.array() - xmean;
  out.z_shift = (data.z_shift.size() == data.p() ? data.z_shift : Vector<Scalar>::Zero(data.p())) + zmean;
  out.x_shift = data.x_shift + xmean;
  return out;
}

template <typename Scalar>
bool is_centered(const BasicStageOneData<Scalar>& data, Scalar rel_tol = Scalar(1e-10)) {
  using std::abs;
  using std::sqrt;
  const Scalar n = static_cast<Scalar>(data.n());
  auto column_ok = [&](const auto& col) {
    const Scalar mean = col.mean();
    const Scalar sd = sqrt(col.squaredNorm() / n);
    return abs(mean) <= rel_tol * (sd > 0 ? sd : Scalar(1));
  };
  if (!column_ok(data.x)) return false;
  for (Index j = 0; j < data.p(); ++j)
    if (!column_ok(data.Z.col(j))) return false;
  return true;
}

/// Centered copy, unless the data is already centered or declared mean-zero.
template <typename Scalar>
BasicStageOneData<Scalar> ensure_centered(const BasicStageOneData<Scalar>& data) {
  validate(data);
  if (data.mean_zero_assumed) {
    BasicStageOneData<Scalar> out = data;
    if (out.z_shift.size() != out.p()) out.z_shift = Vector<Scalar>::Zero(out.p());
    return out;
  }
  return is_centered(data) ? data : center(data);
}

/// n1^{-1} Z'Z of centered (or mean-zero) stage-one instruments.
template <typename Scalar>
Matrix<Scalar> sample_covariance(const BasicStageOneData<Scalar>& data) {
  Matrix<Scalar> sigma = Matrix<Scalar>::Zero(data.p(), data.p());
  sigma.template selfadjointView<Eigen::Lower>().rankUpdate(data.Z.transpose(),
                                                            Scalar(1) / static_cast<Scalar>(data.n()));
  return sigma.template selfadjointView<Eigen::Lower>();
}

/// Second-sample moments n2^{-1}Z'Z, n2^{-1}Z'Y, n2^{-1}Y'Y.
template <typename Scalar>
struct BasicSummaryStats {
  Matrix<Scalar> S_zz;
  Vector<Scalar> s_zy;
  Scalar s_yy = 1;
  Index n2 = 0;

  Index p() const { return S_zz.rows(); }
};
using SummaryStats = BasicSummaryStats<double>;

template <typename Scalar>
void validate(const BasicSummaryStats<Scalar>& stats) {
  using std::abs;
  const Index p = stats.p();
  require(p >= 1 && stats.S_zz.cols() == p && stats.s_zy.size() == p, ErrorCode::DimensionMismatch,
          "summary statistics have inconsistent dimensions");
  require(stats.n2 >= 1, ErrorCode::EmptyData, "summary statistics need n2 >= 1");
  require(all_finite(stats.S_zz) && all_finite(stats.s_zy) && std::isfinite(stats.s_yy),
          ErrorCode::InvalidData, "summary statistics contain NaN or Inf");
  require(stats.s_yy > 0, ErrorCode::InvalidData, "s_yy must be positive");
  const Scalar scale = std::max(stats.S_zz.cwiseAbs().maxCoeff(), Scalar(1));
  require((stats.S_zz - stats.S_zz.transpose()).cwiseAbs().maxCoeff() <= Scalar(1e-10) * scale,
          ErrorCode::InvalidData, "S_zz is not symmetric");
  const Scalar floor = Scalar(-1e-8) * stats.S_zz.trace() / static_cast<Scalar>(p);
  Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> eig(stats.S_zz, Eigen::EigenvaluesOnly);
  require(eig.eigenvalues()(0) >= floor, ErrorCode::InvalidData, "S_zz is not positive semidefinite");
}

/// Rescales so that s_yy = 1, dividing s_zy by the outcome's root mean square.
template <typename Scalar>
BasicSummaryStats<Scalar> normalize(const BasicSummaryStats<Scalar>& stats) {
  validate(stats);
  BasicSummaryStats<Scalar> out = stats;
  const Scalar scale = std::sqrt(stats.s_yy);
  out.s_zy /= scale;
  out.s_yy = 1;
  return out;
}

/// Builds normalized summary statistics from individual-level second-sample
/// data. Y2 should be centered, or mean zero by design.
template <typename DerivedZ, typename DerivedY>
auto summarize(const Eigen::MatrixBase<DerivedZ>& Z2, const Eigen::MatrixBase<DerivedY>& Y2) {
  using Scalar = typename DerivedZ::Scalar;
  require(Z2.rows() == Y2.size(), ErrorCode::DimensionMismatch, "Z2 rows differ from Y2 length");
  require(Z2.rows() >= 1 && Z2.cols() >= 1, ErrorCode::EmptyData, "empty second sample");
  if (Z2.rows() < Z2.cols()) warn("summarize: n2 < p, S_zz is singular");
  const Scalar n2 = static_cast<Scalar>(Z2.rows());
  BasicSummaryStats<Scalar> stats;
  stats.n2 = Z2.rows();
  stats.S_zz = Matrix<Scalar>::Zero(Z2.cols(), Z2.cols());
  stats.S_zz.template selfadjointView<Eigen::Lower>().rankUpdate(Z2.transpose(), Scalar(1) / n2);
  stats.S_zz = stats.S_zz.template selfadjointView<Eigen::Lower>();
  stats.s_zy = Z2.transpose() * Y2 / n2;
  stats.s_yy = Y2.squaredNorm() / n2;
  return normalize(stats);
}

/// Output of the two-stage fit (sign-adjusted, SIR normalization theta' Sigma theta = 1).
template <typename Scalar>
struct BasicCausalFit {
  Scalar beta_hat = 0;
  Vector<Scalar> theta_hat;
  Vector<Scalar> theta_unit;
  Scalar beta_report = 0;
  Vector<Scalar> alpha_hat;
  IndexSet invalid_set;
  Scalar sigma_e_hat = 0;
  Scalar omega_x_hat = 0;
  Index n_slices = 0;
  bool degenerate_spectrum = false;
};
using CausalFit = BasicCausalFit<double>;

enum class Method { TwoSIR, Comb2SIR, TwoSLS, PT2SLS };

inline const char* to_string(Method m) {
  switch (m) {
    case Method::TwoSIR: return "2SIR";
    case Method::Comb2SIR: return "Comb-2SIR";
    case Method::TwoSLS: return "2SLS";
    case Method::PT2SLS: return "PT-2SLS";
  }
  return "?";
}

template <typename Scalar>
struct BasicTestResult {
  Scalar statistic = 0;
  Scalar p_value = 1;
  Index n_slices = 0;
  Method method = Method::TwoSIR;
  /// Per-slice p-values that entered a combined test (empty otherwise).
  std::vector<Scalar> slice_p_values;
  std::vector<Index> slices_used;

  bool rejects(Scalar alpha) const { return p_value < alpha; }
};
using TestResult = BasicTestResult<double>;

template <typename Scalar>
struct BasicConfidenceInterval {
  Scalar lower = 0;
  Scalar upper = 0;
  Scalar level = Scalar(0.95);
  Index monte_carlo_size = 0;
  /// Quantile used for the half-width, on the sqrt(n2) scale.
  Scalar quantile = 0;

  Scalar length() const { return upper - lower; }
  bool contains(Scalar value) const { return lower <= value && value <= upper; }
};
using ConfidenceInterval = BasicConfidenceInterval<double>;

template <typename Scalar>
struct BasicTransformEstimate {
  Scalar rho_hat = 0;
  std::function<Scalar(Scalar)> m_hat;
  Vector<Scalar> grid;
  Vector<Scalar> values;
};
using TransformEstimate = BasicTransformEstimate<double>;

}  // namespace nlcausal
