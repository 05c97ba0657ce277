#pragma once

// Adjusted inverse regression: phi is recovered as rho * E(z'theta | x).
// Only stage-one data is used here.

#include "nlcausal/core.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>
#include <numeric>

namespace nlcausal {

enum class Smoother { KNN, LocalLinear };

template <typename Scalar>
struct BasicSmootherConfig {
  Smoother method = Smoother::KNN;
  Index k = 100;
  Scalar bandwidth = 0;  // LocalLinear; 0 picks Silverman's rule
};
using SmootherConfig = BasicSmootherConfig<double>;

/// Linear-interpolation sample quantile (R type 7).
template <typename Scalar>
Scalar sample_quantile(std::vector<Scalar> v, Scalar q) {
  require(!v.empty(), ErrorCode::EmptyData, "quantile of an empty sample");
  std::sort(v.begin(), v.end());
  const Scalar h = static_cast<Scalar>(v.size() - 1) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<Scalar>(lo)) * (v[hi] - v[lo]);
}

/// Fitted m(x) = E(z'theta | x). Immutable once built; evaluation is thread-safe.
template <typename Scalar>
class ConditionalMean {
 public:
  ConditionalMean(const Vector<Scalar>& x, const Vector<Scalar>& target, const BasicSmootherConfig<Scalar>& config)
      : config_(config) {
    const Index n = x.size();
    require(n >= 2 && target.size() == n, ErrorCode::DimensionMismatch, "smoother inputs differ in length");
    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return x(a) < x(b); });
    xs_.resize(static_cast<std::size_t>(n));
    ts_.resize(static_cast<std::size_t>(n));
    idx_ = order;
    prefix_.assign(static_cast<std::size_t>(n) + 1, 0);
    for (std::size_t i = 0; i < order.size(); ++i) {
      xs_[i] = x(order[i]);
      ts_[i] = target(order[i]);
      prefix_[i + 1] = prefix_[i] + ts_[i];
    }
    if (config_.method == Smoother::KNN) {
      require(config_.k >= 1, ErrorCode::InvalidConfig, "k must be at least 1");
      require(config_.k <= n, ErrorCode::TooFewSamples,
              "k = " + std::to_string(config_.k) + " exceeds the sample size " + std::to_string(n));
      if (2 * config_.k > n) warn("KNN smoother: fewer than 2k samples, the fit is very smooth");
    } else {
      if (!(config_.bandwidth > 0)) config_.bandwidth = silverman(x);
      require(config_.bandwidth > 0 && std::isfinite(config_.bandwidth), ErrorCode::InvalidConfig,
              "bandwidth must be positive");
    }
  }

  Scalar operator()(Scalar q) const {
    q = std::clamp(q, xs_.front(), xs_.back());
    return config_.method == Smoother::KNN ? knn(q) : local_linear(q);
  }

  Vector<Scalar> operator()(const Vector<Scalar>& q) const {
    Vector<Scalar> out(q.size());
    for (Index i = 0; i < q.size(); ++i) out(i) = (*this)(q(i));
    return out;
  }

  const BasicSmootherConfig<Scalar>& config() const { return config_; }

 private:
  static Scalar silverman(const Vector<Scalar>& x) {
    const Index n = x.size();
    const Scalar mean = x.mean();
    const Scalar sd = std::sqrt((x.array() - mean).square().sum() / static_cast<Scalar>(n - 1));
    std::vector<Scalar> v(x.data(), x.data() + n);
    const Scalar iqr = sample_quantile(v, Scalar(0.75)) - sample_quantile(v, Scalar(0.25));
    Scalar spread = sd;
    if (iqr > 0) spread = std::min(sd, iqr / Scalar(1.34));
    return Scalar(0.9) * spread * std::pow(static_cast<Scalar>(n), Scalar(-0.2));
  }

  Scalar knn(Scalar q) const {
    const std::size_t n = xs_.size();
    const auto k = static_cast<std::size_t>(config_.k);
    if (k == n) return prefix_[n] / static_cast<Scalar>(n);

    // The k nearest points form a window [lo, lo + k) in sorted order.
    std::size_t lo = 0, hi = n - k;
    while (lo < hi) {
      const std::size_t mid = (lo + hi) / 2;
      if (q - xs_[mid] > xs_[mid + k] - q)
        lo = mid + 1;
      else
        hi = mid;
    }
    auto dist = [&](std::size_t i) { return std::abs(xs_[i] - q); };
    const Scalar dk = std::max(dist(lo), dist(lo + k - 1));

    // [L, R] holds every point within dk. Strictly closer points are all
    // neighbours; ties at dk go to the lowest original row index.
    std::size_t L = lo, R = lo + k - 1;
    while (L > 0 && dist(L - 1) <= dk) --L;
    while (R + 1 < n && dist(R + 1) <= dk) ++R;
    std::size_t sl = L, sr = R + 1;  // strict range [sl, sr)
    while (sl < sr && dist(sl) == dk) ++sl;
    while (sr > sl && dist(sr - 1) == dk) --sr;

    Scalar sum = prefix_[sr] - prefix_[sl];
    std::size_t need = k - (sr - sl);
    // Both tie runs are already in ascending row order from the stable sort.
    std::size_t a = L, b = sr;
    const std::size_t a_end = sl, b_end = R + 1;
    while (need > 0) {
      const bool take_a = a < a_end && (b >= b_end || idx_[a] < idx_[b]);
      sum += take_a ? ts_[a++] : ts_[b++];
      --need;
    }
    return sum / static_cast<Scalar>(k);
  }

  Scalar local_linear(Scalar q) const {
    const Scalar h = config_.bandwidth;
    const auto begin = std::lower_bound(xs_.begin(), xs_.end(), q - 8 * h) - xs_.begin();
    const auto end = std::upper_bound(xs_.begin(), xs_.end(), q + 8 * h) - xs_.begin();
    Scalar s0 = 0, s1 = 0, s2 = 0, t0 = 0, t1 = 0;
    for (auto i = static_cast<std::size_t>(begin); i < static_cast<std::size_t>(end); ++i) {
      const Scalar d = xs_[i] - q;
      const Scalar u = d / h;
      const Scalar w = std::exp(Scalar(-0.5) * u * u);
      s0 += w;
      s1 += w * d;
      s2 += w * d * d;
      t0 += w * ts_[i];
      t1 += w * d * ts_[i];
    }
    require(s0 > 0, ErrorCode::DegenerateRatio, "no sample within the kernel support");
    const Scalar det = s0 * s2 - s1 * s1;
    if (det <= Scalar(1e-12) * s0 * s2) return t0 / s0;
    return (s2 * t0 - s1 * t1) / det;
  }

  BasicSmootherConfig<Scalar> config_;
  std::vector<Scalar> xs_;
  std::vector<Scalar> ts_;
  std::vector<Index> idx_;
  std::vector<Scalar> prefix_;
};

/// Smooths t = z'theta against the exposure on its original scale.
template <typename Scalar, typename Derived>
std::shared_ptr<const ConditionalMean<Scalar>> fit_conditional_mean(const BasicStageOneData<Scalar>& data,
                                                                    const Eigen::MatrixBase<Derived>& theta,
                                                                    const BasicSmootherConfig<Scalar>& config = {}) {
  const auto centered = ensure_centered(data);
  require(theta.size() == centered.p(), ErrorCode::DimensionMismatch, "theta length differs from p");
  const Vector<Scalar> t = centered.Z * theta;
  return std::make_shared<const ConditionalMean<Scalar>>(centered.raw_x(), t, config);
}

/// rho = theta' (sum z z') theta / theta' sum m(x_i) z_i.
template <typename Scalar, typename Derived, typename Fn>
Scalar adjustment_ratio(const BasicStageOneData<Scalar>& data, const Eigen::MatrixBase<Derived>& theta,
                        const Fn& m_hat) {
  const auto centered = ensure_centered(data);
  require(theta.size() == centered.p(), ErrorCode::DimensionMismatch, "theta length differs from p");
  const Vector<Scalar> t = centered.Z * theta;
  const Vector<Scalar> raw = centered.raw_x();
  Scalar den = 0;
  for (Index i = 0; i < t.size(); ++i) den += m_hat(raw(i)) * t(i);
  const Scalar num = t.squaredNorm();
  require(std::isfinite(den) && std::abs(den) >= Scalar(1e-10) * std::abs(num), ErrorCode::DegenerateRatio,
          "exposure carries no instrument signal");
  return num / den;
}

template <typename Scalar, typename Derived>
BasicTransformEstimate<Scalar> estimate_transform(const BasicStageOneData<Scalar>& data,
                                                  const Eigen::MatrixBase<Derived>& theta,
                                                  const BasicSmootherConfig<Scalar>& config = {},
                                                  Index grid_size = 100) {
  require(grid_size >= 2, ErrorCode::InvalidArgument, "grid needs at least 2 points");
  const auto centered = ensure_centered(data);
  const auto m = fit_conditional_mean(centered, theta, config);

  BasicTransformEstimate<Scalar> est;
  est.rho_hat = adjustment_ratio(centered, theta, *m);
  est.m_hat = [m](Scalar x) { return (*m)(x); };

  const Vector<Scalar> raw = centered.raw_x();
  std::vector<Scalar> v(raw.data(), raw.data() + raw.size());
  const Scalar lo = sample_quantile(v, Scalar(0.05));
  const Scalar hi = sample_quantile(v, Scalar(0.95));
  est.grid = Vector<Scalar>::LinSpaced(grid_size, lo, hi);
  est.values = est.rho_hat * (*m)(est.grid);
  return est;
}

template <typename Scalar>
struct TransformError {
  Scalar mse = 0;
  Scalar ue = 0;
};

template <typename Scalar>
TransformError<Scalar> transform_error(const BasicTransformEstimate<Scalar>& est, const Vector<Scalar>& truth) {
  require(est.values.size() == est.grid.size() && truth.size() == est.grid.size() && truth.size() > 0,
          ErrorCode::GridMismatch, "estimate and truth grids differ");
  const Vector<Scalar> diff = est.values - truth;
  return {diff.squaredNorm() / static_cast<Scalar>(diff.size()), diff.cwiseAbs().maxCoeff()};
}

template <typename Scalar, typename Fn>
TransformError<Scalar> transform_error(const BasicTransformEstimate<Scalar>& est, const Fn& phi_true) {
  Vector<Scalar> truth(est.grid.size());
  for (Index i = 0; i < truth.size(); ++i) truth(i) = phi_true(est.grid(i));
  return transform_error(est, truth);
}

}  // namespace nlcausal
