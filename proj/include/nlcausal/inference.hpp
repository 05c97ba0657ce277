#pragma once

// Pivotal test, Cauchy slice combination and the resampling confidence interval.

#include "nlcausal/random.hpp"
#include "nlcausal/stage2.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

namespace nlcausal {

template <typename Scalar>
Scalar normal_cdf(Scalar x) {
  return Scalar(0.5) * std::erfc(-x / std::numbers::sqrt2_v<Scalar>);
}

/// Two-sided tail P(|W| > t) for W ~ N(0, 1), computed without cancellation.
template <typename Scalar>
Scalar two_sided_p(Scalar t) {
  return std::min(Scalar(1), std::erfc(std::abs(t) / std::numbers::sqrt2_v<Scalar>));
}

/// Inverse of normal_cdf by bisection, polished with Newton steps.
template <typename Scalar>
Scalar normal_quantile(Scalar p) {
  require(p > 0 && p < 1, ErrorCode::DomainError, "normal quantile needs p in (0, 1)");
  Scalar lo = -40, hi = 40;
  for (int i = 0; i < 80; ++i) {
    const Scalar mid = (lo + hi) / 2;
    (normal_cdf(mid) < p ? lo : hi) = mid;
  }
  Scalar x = (lo + hi) / 2;
  const Scalar c = 1 / std::sqrt(2 * std::numbers::pi_v<Scalar>);
  for (int i = 0; i < 3; ++i) {
    const Scalar dens = c * std::exp(-x * x / 2);
    if (!(dens > 0)) break;
    x -= (normal_cdf(x) - p) / dens;
  }
  return x;
}

enum class StatisticForm {
  Verbatim,           // sqrt(n2) beta / (sigma_e sqrt(q))
  VarianceConsistent  // sqrt(n2) beta sqrt(q) / sigma_e
};

template <typename Scalar>
BasicTestResult<Scalar> test_statistic(const BasicCausalFit<Scalar>& fit, const BasicSummaryStats<Scalar>& stats,
                                       const Matrix<Scalar>& Sigma_hat,
                                       StatisticForm form = StatisticForm::Verbatim) {
  require(fit.theta_hat.size() == Sigma_hat.rows(), ErrorCode::DimensionMismatch,
          "theta length differs from the covariance size");
  require(fit.sigma_e_hat > 0, ErrorCode::InvalidArgument, "sigma_e must be positive");
  const Scalar q = schur_quadratic(Sigma_hat, fit.theta_hat, fit.invalid_set);
  require(q > Scalar(1e-12), ErrorCode::DegenerateDenominator, "theta' Sigma_tilde theta is not positive");

  const Scalar root_n = std::sqrt(static_cast<Scalar>(stats.n2));
  BasicTestResult<Scalar> out;
  out.statistic = form == StatisticForm::Verbatim ? root_n * fit.beta_hat / (fit.sigma_e_hat * std::sqrt(q))
                                                  : root_n * fit.beta_hat * std::sqrt(q) / fit.sigma_e_hat;
  out.p_value = two_sided_p(out.statistic);
  out.n_slices = fit.n_slices;
  out.method = Method::TwoSIR;
  return out;
}

/// Cauchy combination of p-values: p* = 1/2 - arctan(sum w_i tan((1/2 - p_i) pi)) / pi.
template <typename Scalar>
Scalar cauchy_combine(const std::vector<Scalar>& p_values, const std::vector<Scalar>& weights,
                      Scalar* t0_out = nullptr) {
  require(!p_values.empty() && p_values.size() == weights.size(), ErrorCode::InvalidArgument,
          "p-values and weights must be non-empty and of equal length");
  constexpr Scalar pi = std::numbers::pi_v<Scalar>;
  const Scalar eps = Scalar(1e-15);
  Scalar t0 = 0;
  for (std::size_t i = 0; i < p_values.size(); ++i) {
    require(p_values[i] >= 0 && p_values[i] <= 1, ErrorCode::DomainError, "p-value outside [0, 1]");
    const Scalar p = std::clamp(p_values[i], eps, 1 - eps);
    t0 += weights[i] * std::tan((Scalar(0.5) - p) * pi);
  }
  if (t0_out) *t0_out = t0;
  return Scalar(0.5) - std::atan(t0) / pi;
}

template <typename Scalar>
struct BasicCombineConfig {
  std::vector<Index> slice_set{2, 3, 5, 10};
  std::vector<Scalar> weights;  // empty: uniform
  StatisticForm form = StatisticForm::Verbatim;
};
using CombineConfig = BasicCombineConfig<double>;

template <typename Scalar>
BasicTestResult<Scalar> combined_test(const BasicStageOneData<Scalar>& data, const BasicSummaryStats<Scalar>& stats,
                                      const BasicCombineConfig<Scalar>& config = {},
                                      const BasicStage2Config<Scalar>& stage2 = {}) {
  const auto& slices = config.slice_set;
  require(!slices.empty(), ErrorCode::InvalidConfig, "slice set is empty");
  std::vector<Scalar> weights = config.weights;
  if (weights.empty()) weights.assign(slices.size(), Scalar(1) / static_cast<Scalar>(slices.size()));
  require(weights.size() == slices.size(), ErrorCode::InvalidConfig, "weights length differs from slice set");
  Scalar wsum = 0;
  for (Scalar w : weights) {
    require(w >= 0, ErrorCode::InvalidConfig, "weights must be non-negative");
    wsum += w;
  }
  require(std::abs(wsum - 1) < Scalar(1e-9), ErrorCode::InvalidConfig, "weights must sum to 1");

  const auto centered = ensure_centered(data);
  for (Index S : slices)
    require(S >= 2 && S <= centered.n(), ErrorCode::BadSliceCount, "slice count " + std::to_string(S) + " out of range");

  BasicTestResult<Scalar> out;
  out.method = Method::Comb2SIR;
  std::vector<Scalar> used_w;
  for (std::size_t i = 0; i < slices.size(); ++i) {
    try {
      SirMoments<Scalar> moments;
      const auto dir = sir_fit(centered, slices[i], &moments);
      const auto fit = fit_2sir_from_direction(dir.theta, moments.Sigma_hat, stats, slices[i], stage2);
      const auto t = test_statistic(fit, stats, moments.Sigma_hat, config.form);
      out.slice_p_values.push_back(t.p_value);
      out.slices_used.push_back(slices[i]);
      used_w.push_back(weights[i]);
    } catch (const Error& e) {
      warn("combined test: dropping S=" + std::to_string(slices[i]) + " (" + e.what() + ")");
    }
  }
  require(!used_w.empty(), ErrorCode::InvalidData, "every slice count failed in the combined test");
  Scalar used_sum = 0;
  for (Scalar w : used_w) used_sum += w;
  require(used_sum > 0, ErrorCode::InvalidConfig, "remaining slice weights are all zero");
  for (Scalar& w : used_w) w /= used_sum;

  out.p_value = cauchy_combine(out.slice_p_values, used_w, &out.statistic);
  out.n_slices = static_cast<Index>(out.slices_used.size());
  return out;
}

/// The ceil(level * M)-th smallest value (1-based), found by selection.
template <typename Scalar>
Scalar empirical_quantile(std::vector<Scalar> values, Scalar level) {
  require(!values.empty(), ErrorCode::EmptyData, "quantile of an empty sample");
  require(level > 0 && level < 1, ErrorCode::InvalidArgument, "quantile level must lie in (0, 1)");
  const auto m = static_cast<Scalar>(values.size());
  // Guard against level * M landing a hair above an integer.
  auto k = static_cast<std::size_t>(std::ceil(level * m - Scalar(1e-9)));
  k = std::clamp<std::size_t>(k, 1, values.size());
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(k - 1), values.end());
  return values[k - 1];
}

template <typename Scalar>
struct BasicBootstrapConfig {
  Index M = 1000;
  std::uint64_t seed = 1;
  Scalar level = Scalar(0.95);
};
using BootstrapConfig = BasicBootstrapConfig<double>;

template <typename Scalar>
BasicConfidenceInterval<Scalar> confidence_interval(const BasicStageOneData<Scalar>& data,
                                                    const BasicSummaryStats<Scalar>& stats,
                                                    const BasicCausalFit<Scalar>& fit,
                                                    const BasicBootstrapConfig<Scalar>& config = {}) {
  require(config.M >= 100, ErrorCode::InvalidConfig, "Monte Carlo size must be at least 100");
  require(config.level > 0 && config.level < 1, ErrorCode::InvalidConfig, "level must lie in (0, 1)");
  const auto centered = ensure_centered(data);
  const Index n = centered.n();
  const Index p = centered.p();
  require(fit.theta_hat.size() == p, ErrorCode::DimensionMismatch, "fit does not match the stage-one data");
  const Index S = fit.n_slices;
  require(S >= 2 && S <= n, ErrorCode::BadSliceCount, "fit carries an invalid slice count");
  if (n < 50) warn("bootstrap interval with fewer than 50 stage-one rows");

  const Matrix<Scalar> sigma = sample_covariance(centered);
  const Matrix<Scalar> sigma_tilde = schur_complement(sigma, fit.invalid_set);
  const Scalar base = fit.theta_hat.dot(sigma_tilde * fit.theta_hat);
  const Scalar root_n = std::sqrt(static_cast<Scalar>(stats.n2));
  const Scalar zeta_sd = std::sqrt(fit.omega_x_hat) * fit.sigma_e_hat;
  const Scalar eta_scale = Scalar(0.5) * root_n * fit.beta_hat * fit.omega_x_hat;
  const auto order = stable_order(centered.x);

  const Index M = config.M;
  std::vector<Scalar> dev(static_cast<std::size_t>(M));
  std::vector<char> ok(static_cast<std::size_t>(M), 0);

#pragma omp parallel for schedule(dynamic, 4)
  for (Index l = 0; l < M; ++l) {
    Rng rng = make_rng(config.seed, static_cast<std::uint64_t>(l));
    std::uniform_int_distribution<Index> pick(0, n - 1);
    std::vector<Index> mult(static_cast<std::size_t>(n), 0);
    for (Index i = 0; i < n; ++i) ++mult[static_cast<std::size_t>(pick(rng))];
    std::normal_distribution<Scalar> normal(0, 1);
    const Scalar zeta = zeta_sd * normal(rng);
    try {
      const auto moments = detail::resampled_sir_moments(centered.Z, order, mult, S, !centered.mean_zero_assumed);
      Vector<Scalar> theta = sir_direction(moments).theta;
      if (theta.dot(fit.theta_hat) < 0) theta = -theta;
      const Scalar eta = eta_scale * (theta.dot(sigma_tilde * theta) - base);
      dev[static_cast<std::size_t>(l)] = std::abs(zeta - eta);
      ok[static_cast<std::size_t>(l)] = std::isfinite(dev[static_cast<std::size_t>(l)]);
    } catch (const Error&) {
    }
  }

  std::vector<Scalar> good;
  good.reserve(dev.size());
  for (std::size_t l = 0; l < dev.size(); ++l)
    if (ok[l]) good.push_back(dev[l]);
  const auto failed = static_cast<Index>(dev.size() - good.size());
  require(10 * failed <= M, ErrorCode::BootstrapFailure,
          std::to_string(failed) + " of " + std::to_string(M) + " resamples failed");
  if (failed > 0) warn(std::to_string(failed) + " bootstrap resamples failed and were skipped");

  BasicConfidenceInterval<Scalar> ci;
  ci.level = config.level;
  ci.monte_carlo_size = M;
  ci.quantile = empirical_quantile(std::move(good), config.level);
  ci.lower = std::max(Scalar(0), fit.beta_hat - ci.quantile / root_n);
  ci.upper = fit.beta_hat + ci.quantile / root_n;
  return ci;
}

}  // namespace nlcausal
