#pragma once

// Comparator estimators: two-sample 2SLS and its Yeo-Johnson power-transformed variant.

#include "nlcausal/inference.hpp"
#include "nlcausal/linalg.hpp"

#include <cmath>

namespace nlcausal {

template <typename Scalar>
struct TwoSlsFit {
  Scalar beta = 0;
  Scalar se = 0;
  Vector<Scalar> gamma;  // stage-one coefficients
  Scalar sigma2 = 0;     // outcome residual variance
};

template <typename Scalar>
TwoSlsFit<Scalar> fit_2sls(const BasicStageOneData<Scalar>& data, const BasicSummaryStats<Scalar>& stats) {
  validate(stats);
  const auto centered = ensure_centered(data);
  require(centered.p() == stats.p(), ErrorCode::DimensionMismatch, "stage-one and summary instrument counts differ");
  const Scalar n1 = static_cast<Scalar>(centered.n());

  const Matrix<Scalar> sigma = ridge_jitter(sample_covariance(centered));
  Eigen::LLT<Matrix<Scalar>> llt(sigma);
  require(llt.info() == Eigen::Success, ErrorCode::SingularCovariance, "instrument covariance is singular");

  TwoSlsFit<Scalar> fit;
  fit.gamma = llt.solve(centered.Z.transpose() * centered.x / n1);
  const Scalar gsg = fit.gamma.dot(stats.S_zz * fit.gamma);
  require(gsg > 0, ErrorCode::DegenerateDenominator, "predicted exposure has zero variance");
  const Scalar gs = fit.gamma.dot(stats.s_zy);
  fit.beta = gs / gsg;
  fit.sigma2 = std::max(stats.s_yy - 2 * fit.beta * gs + fit.beta * fit.beta * gsg, Scalar(1e-12));
  fit.se = std::sqrt(fit.sigma2 / (static_cast<Scalar>(stats.n2) * gsg));
  return fit;
}

template <typename Scalar>
BasicTestResult<Scalar> wald_test(const TwoSlsFit<Scalar>& fit, Method method = Method::TwoSLS) {
  BasicTestResult<Scalar> out;
  out.statistic = fit.beta / fit.se;
  out.p_value = two_sided_p(out.statistic);
  out.method = method;
  return out;
}

/// Wald interval on the non-negative half line.
template <typename Scalar>
BasicConfidenceInterval<Scalar> wald_interval(const TwoSlsFit<Scalar>& fit, Scalar level = Scalar(0.95)) {
  require(level > 0 && level < 1, ErrorCode::InvalidArgument, "level must lie in (0, 1)");
  const Scalar z = normal_quantile(Scalar(0.5) + level / 2);
  BasicConfidenceInterval<Scalar> ci;
  ci.level = level;
  ci.quantile = z;
  ci.lower = std::max(Scalar(0), fit.beta - z * fit.se);
  ci.upper = std::max(Scalar(0), fit.beta + z * fit.se);
  return ci;
}

template <typename Scalar>
struct BasicYeoJohnsonFit {
  Scalar lambda = 1;
  Scalar loglik = 0;
};
using YeoJohnsonFit = BasicYeoJohnsonFit<double>;

template <typename Scalar>
Scalar yeo_johnson_value(Scalar x, Scalar lambda) {
  constexpr Scalar eps = Scalar(1e-12);
  if (x >= 0) {
    const Scalar l = std::log1p(x);
    return std::abs(lambda) < eps ? l : std::expm1(lambda * l) / lambda;
  }
  const Scalar l = std::log1p(-x);
  const Scalar mu = 2 - lambda;
  return std::abs(mu) < eps ? -l : -std::expm1(mu * l) / mu;
}

template <typename Scalar>
Vector<Scalar> yeo_johnson_apply(const Vector<Scalar>& x, Scalar lambda) {
  return x.unaryExpr([lambda](Scalar v) { return yeo_johnson_value(v, lambda); });
}

/// Gaussian profile log-likelihood of the transformed sample, up to a constant.
template <typename Scalar>
Scalar yeo_johnson_loglik(const Vector<Scalar>& x, Scalar lambda) {
  const Vector<Scalar> y = yeo_johnson_apply(x, lambda);
  const Scalar n = static_cast<Scalar>(x.size());
  const Scalar var = (y.array() - y.mean()).square().sum() / n;
  Scalar jac = 0;
  for (Index i = 0; i < x.size(); ++i) jac += (x(i) < 0 ? -1 : 1) * std::log1p(std::abs(x(i)));
  if (!(var > 0)) return -std::numeric_limits<Scalar>::infinity();
  return -n / 2 * std::log(var) + (lambda - 1) * jac;
}

/// Maximum-likelihood power parameter by golden-section search on [-5, 5].
/// Returns the zero-mean transformed sample.
template <typename Scalar>
std::pair<Vector<Scalar>, BasicYeoJohnsonFit<Scalar>> yeo_johnson(const Vector<Scalar>& x) {
  require(x.size() >= 2 && all_finite(x), ErrorCode::InvalidData, "power transform needs finite data");
  const Scalar g = (std::sqrt(Scalar(5)) - 1) / 2;
  Scalar a = -5, b = 5;
  Scalar c = b - g * (b - a), d = a + g * (b - a);
  Scalar fc = yeo_johnson_loglik(x, c), fd = yeo_johnson_loglik(x, d);
  while (b - a > Scalar(1e-6)) {
    if (fc > fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - g * (b - a);
      fc = yeo_johnson_loglik(x, c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + g * (b - a);
      fd = yeo_johnson_loglik(x, d);
    }
  }
  BasicYeoJohnsonFit<Scalar> fit;
  fit.lambda = (a + b) / 2;
  fit.loglik = yeo_johnson_loglik(x, fit.lambda);
  Vector<Scalar> y = yeo_johnson_apply(x, fit.lambda);
  y.array() -= y.mean();
  return {std::move(y), fit};
}

template <typename Scalar>
struct PtTwoSlsFit {
  TwoSlsFit<Scalar> two_sls;
  BasicYeoJohnsonFit<Scalar> transform;
  Scalar center = 0;  // mean of the transformed exposure
  Scalar scale = 1;   // its standard deviation
};

/// 2SLS on the Yeo-Johnson transformed exposure (original scale, before centering).
template <typename Scalar>
PtTwoSlsFit<Scalar> fit_pt2sls(const BasicStageOneData<Scalar>& data, const BasicSummaryStats<Scalar>& stats) {
  const auto centered = ensure_centered(data);
  const Vector<Scalar> raw = centered.raw_x();
  auto [y, yj] = yeo_johnson(raw);

  PtTwoSlsFit<Scalar> out;
  out.transform = yj;
  out.center = yeo_johnson_apply(raw, yj.lambda).mean();
  out.scale = std::sqrt(y.squaredNorm() / static_cast<Scalar>(y.size()));

  BasicStageOneData<Scalar> transformed = centered;
  transformed.x = std::move(y);
  transformed.x_shift = out.center;
  out.two_sls = fit_2sls(transformed, stats);
  return out;
}

/// Standardized power transform of the fitted PT-2SLS model, used as its
/// estimate of the exposure transformation.
template <typename Scalar>
Vector<Scalar> pt_transform_values(const PtTwoSlsFit<Scalar>& fit, const Vector<Scalar>& grid) {
  return (yeo_johnson_apply(grid, fit.transform.lambda).array() - fit.center) / fit.scale;
}

}  // namespace nlcausal
