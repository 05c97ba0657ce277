#pragma once

// Stage two: sparse instrumental regression on summary statistics, and the
// assembled two-stage fit.

#include "nlcausal/core.hpp"
#include "nlcausal/linalg.hpp"
#include "nlcausal/sir.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <set>
#include <variant>

namespace nlcausal {

enum class Penalty { ExhaustiveL0, SCAD, MCP, TLP };

inline const char* to_string(Penalty p) {
  switch (p) {
    case Penalty::ExhaustiveL0: return "l0";
    case Penalty::SCAD: return "scad";
    case Penalty::MCP: return "mcp";
    case Penalty::TLP: return "tlp";
  }
  return "?";
}

struct FixedK {
  Index k = 0;
};
struct Bic {};
using Selection = std::variant<Bic, FixedK>;

template <typename Scalar>
struct BasicStage2Config {
  Penalty penalty = Penalty::SCAD;
  Index K_max = -1;  // negative: floor(p/2) - 1
  Scalar scad_a = Scalar(3.7);
  Scalar mcp_gamma = Scalar(3);
  Scalar tlp_tau = Scalar(0.1);
  std::vector<Scalar> lambda_grid;  // empty: log grid from lambda_max
  Index grid_points = 50;
  Scalar lambda_min_ratio = Scalar(1e-3);
  Selection selection = Bic{};
  Index max_iter = 10000;
  Scalar tol = Scalar(1e-8);
  /// Record the penalized objective after every coordinate sweep.
  bool record_trace = false;

  Index resolved_k_max(Index p) const { return K_max >= 0 ? K_max : std::max<Index>(0, p / 2 - 1); }
};
using Stage2Config = BasicStage2Config<double>;

template <typename Scalar>
void validate(const BasicStage2Config<Scalar>& config, Index p) {
  const Index k_max = config.resolved_k_max(p);
  require(2 * k_max < p || k_max == 0, ErrorCode::InvalidConfig, "K_max must be below p/2");
  require(config.scad_a > 2, ErrorCode::InvalidConfig, "SCAD a must exceed 2");
  require(config.mcp_gamma > 1, ErrorCode::InvalidConfig, "MCP gamma must exceed 1");
  require(config.tlp_tau > 0, ErrorCode::InvalidConfig, "TLP tau must be positive");
  require(config.max_iter >= 1 && config.tol > 0, ErrorCode::InvalidConfig, "bad iteration settings");
  for (std::size_t i = 0; i < config.lambda_grid.size(); ++i) {
    require(config.lambda_grid[i] >= 0, ErrorCode::InvalidConfig, "lambda grid must be non-negative");
    if (i > 0)
      require(config.lambda_grid[i] < config.lambda_grid[i - 1], ErrorCode::InvalidConfig,
              "lambda grid must be strictly decreasing");
  }
  if (const auto* fixed = std::get_if<FixedK>(&config.selection)) {
    require(fixed->k >= 0 && 2 * fixed->k < p, ErrorCode::InvalidConfig, "FixedK must be below p/2");
  }
  if (config.penalty == Penalty::ExhaustiveL0)
    require(p <= 15, ErrorCode::InvalidConfig, "exhaustive L0 search is limited to p <= 15");
}

template <typename Scalar>
struct SupportFit {
  Scalar beta = 0;
  Vector<Scalar> alpha;  // length p, zero off the support
  IndexSet support;
  Scalar rss = 0;  // per-observation residual quadratic form, s_yy - 2 s'b + b'Sb
};

/// Per-observation residual quadratic form at b = theta * beta + alpha.
template <typename Scalar, typename Derived>
Scalar residual_form(const BasicSummaryStats<Scalar>& stats, const Eigen::MatrixBase<Derived>& b) {
  return stats.s_yy - 2 * stats.s_zy.dot(b) + b.dot(stats.S_zz * b);
}

/// Exact least squares for (beta, alpha_A) from the bordered normal equations.
template <typename Scalar, typename Derived>
SupportFit<Scalar> beta_given_support(const Eigen::MatrixBase<Derived>& theta, const BasicSummaryStats<Scalar>& stats,
                                      const IndexSet& support) {
  const Index p = stats.p();
  require(theta.size() == p, ErrorCode::DimensionMismatch, "theta length differs from p");
  const Index k = static_cast<Index>(support.size());
  require(2 * k < p || k == 0, ErrorCode::SupportTooLarge, "support size must be below p/2");
  for (std::size_t i = 0; i < support.size(); ++i) {
    require(support[i] >= 0 && support[i] < p, ErrorCode::InvalidArgument, "support index out of range");
    if (i > 0) require(support[i] > support[i - 1], ErrorCode::InvalidArgument, "support must be sorted");
  }

  const Vector<Scalar> s_theta = stats.S_zz * theta;
  Matrix<Scalar> gram(k + 1, k + 1);
  Vector<Scalar> rhs(k + 1);
  gram(0, 0) = theta.dot(s_theta);
  rhs(0) = theta.dot(stats.s_zy);
  for (Index a = 0; a < k; ++a) {
    const Index ja = support[static_cast<std::size_t>(a)];
    gram(0, a + 1) = gram(a + 1, 0) = s_theta(ja);
    rhs(a + 1) = stats.s_zy(ja);
    for (Index b = 0; b < k; ++b) gram(a + 1, b + 1) = stats.S_zz(ja, support[static_cast<std::size_t>(b)]);
  }

  Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> eig(gram, Eigen::EigenvaluesOnly);
  const Scalar top = eig.eigenvalues()(k);
  require(top > 0 && eig.eigenvalues()(0) > Scalar(1e-12) * top, ErrorCode::SingularGram,
          "bordered Gram matrix is singular");
  const Vector<Scalar> coef = gram.llt().solve(rhs);

  SupportFit<Scalar> fit;
  fit.beta = coef(0);
  fit.alpha = Vector<Scalar>::Zero(p);
  for (Index a = 0; a < k; ++a) fit.alpha(support[static_cast<std::size_t>(a)]) = coef(a + 1);
  fit.support = support;
  fit.rss = residual_form(stats, (theta * fit.beta + fit.alpha).eval());
  return fit;
}

namespace detail {

template <typename Scalar>
struct PenaltyShape {
  Penalty kind;
  Scalar lambda;
  Scalar a;  // SCAD a, MCP gamma or TLP tau

  Scalar value(Scalar t) const {  // t >= 0
    switch (kind) {
      case Penalty::SCAD:
        if (t <= lambda) return lambda * t;
        if (t <= a * lambda) return (2 * a * lambda * t - t * t - lambda * lambda) / (2 * (a - 1));
        return (a + 1) * lambda * lambda / 2;
      case Penalty::MCP:
        if (t <= a * lambda) return lambda * t - t * t / (2 * a);
        return a * lambda * lambda / 2;
      case Penalty::TLP:
        return lambda * std::min(t / a, Scalar(1));
      case Penalty::ExhaustiveL0:
        break;
    }
    return 0;
  }

  /// Slope at 0+, which sets lambda_max.
  Scalar initial_slope() const { return kind == Penalty::TLP ? lambda / a : lambda; }
};

/// argmin_t 0.5 v t^2 - r t + pen(|t|), exact: every piece of the penalty is
/// at most quadratic, so the minimum is among clipped stationary points and
/// piece boundaries.
template <typename Scalar>
Scalar penalized_scalar_min(Scalar v, Scalar r, const PenaltyShape<Scalar>& pen) {
  if (!(v > 0)) return 0;
  const Scalar g = std::abs(r);
  const Scalar lam = pen.lambda;
  const Scalar a = pen.a;
  auto objective = [&](Scalar t) { return Scalar(0.5) * v * t * t - g * t + pen.value(t); };

  std::array<Scalar, 8> cand{};
  int nc = 0;
  auto add = [&](Scalar t) {
    if (t >= 0 && std::isfinite(t)) cand[static_cast<std::size_t>(nc++)] = t;
  };
  auto clip = [](Scalar t, Scalar lo, Scalar hi) { return std::min(std::max(t, lo), hi); };
  const Scalar inf = std::numeric_limits<Scalar>::infinity();

  add(0);
  switch (pen.kind) {
    case Penalty::SCAD: {
      add(clip((g - lam) / v, Scalar(0), lam));
      const Scalar curv = v - 1 / (a - 1);
      if (curv > 0) add(clip((g - a * lam / (a - 1)) / curv, lam, a * lam));
      add(lam);
      add(a * lam);
      add(clip(g / v, a * lam, inf));
      break;
    }
    case Penalty::MCP: {
      const Scalar curv = v - 1 / a;
      if (curv > 0) add(clip((g - lam) / curv, Scalar(0), a * lam));
      add(a * lam);
      add(clip(g / v, a * lam, inf));
      break;
    }
    case Penalty::TLP: {
      add(clip((g - lam / a) / v, Scalar(0), a));
      add(a);
      add(clip(g / v, a, inf));
      break;
    }
    case Penalty::ExhaustiveL0:
      add(g / v);
      break;
  }
  Scalar best = 0;
  Scalar best_val = objective(0);
  for (int i = 1; i < nc; ++i) {
    const Scalar t = cand[static_cast<std::size_t>(i)];
    const Scalar val = objective(t);
    if (val < best_val || (val == best_val && t < best)) {
      best_val = val;
      best = t;
    }
  }
  return r < 0 ? -best : best;
}

inline void next_combination_size(Index p, Index k, const std::function<void(const IndexSet&)>& visit) {
  IndexSet idx(static_cast<std::size_t>(k));
  std::function<void(Index, Index)> rec = [&](Index start, Index depth) {
    if (depth == k) {
      visit(idx);
      return;
    }
    for (Index j = start; j <= p - (k - depth); ++j) {
      idx[static_cast<std::size_t>(depth)] = j;
      rec(j + 1, depth + 1);
    }
  };
  rec(0, 0);
}

}  // namespace detail

template <typename Scalar>
struct Stage2Fit {
  Scalar beta = 0;
  Vector<Scalar> alpha;
  IndexSet support;
  Scalar rss = 0;
  Scalar criterion = 0;     // BIC value, or rss for FixedK
  Index path_length = 0;    // lambda values visited
  Index sweeps = 0;         // total coordinate sweeps
  bool monotone = true;     // penalized objective never increased between sweeps
  std::vector<std::vector<Scalar>> trace;  // per-lambda objective after each sweep
};

/// Penalized objective 0.5 b'Sb - s'b + sum pen(|alpha_j|), b = theta beta + alpha.
template <typename Scalar>
Scalar penalized_objective(const BasicSummaryStats<Scalar>& stats, const Vector<Scalar>& b,
                           const Vector<Scalar>& alpha, const detail::PenaltyShape<Scalar>& pen) {
  Scalar val = Scalar(0.5) * b.dot(stats.S_zz * b) - stats.s_zy.dot(b);
  for (Index j = 0; j < alpha.size(); ++j) val += pen.value(std::abs(alpha(j)));
  return val;
}

template <typename Scalar, typename Derived>
Stage2Fit<Scalar> fit_stage2(const Eigen::MatrixBase<Derived>& theta_in, const BasicSummaryStats<Scalar>& stats,
                             const BasicStage2Config<Scalar>& config) {
  validate(stats);
  const Index p = stats.p();
  require(theta_in.size() == p, ErrorCode::DimensionMismatch, "theta length differs from p");
  validate(config, p);
  const Vector<Scalar> theta = theta_in;

  const Index k_max = config.resolved_k_max(p);
  Index k_limit = k_max;
  if (const auto* fixed = std::get_if<FixedK>(&config.selection)) k_limit = std::min(k_limit, fixed->k);
  if (const auto* fixed = std::get_if<FixedK>(&config.selection); fixed && config.penalty == Penalty::ExhaustiveL0)
    k_limit = fixed->k;

  Stage2Fit<Scalar> result;
  std::set<IndexSet> candidates;
  candidates.insert(IndexSet{});

  if (config.penalty == Penalty::ExhaustiveL0) {
    for (Index k = 1; k <= k_limit; ++k)
      detail::next_combination_size(p, k, [&](const IndexSet& s) { candidates.insert(s); });
  } else {
    const Vector<Scalar> s_theta = stats.S_zz * theta;
    const Scalar tst = theta.dot(s_theta);
    require(tst > 0, ErrorCode::SingularGram, "theta' S_zz theta is not positive");

    const Scalar shape_a = config.penalty == Penalty::SCAD  ? config.scad_a
                           : config.penalty == Penalty::MCP ? config.mcp_gamma
                                                            : config.tlp_tau;
    std::vector<Scalar> grid = config.lambda_grid;
    if (grid.empty()) {
      const Scalar beta0 = theta.dot(stats.s_zy) / tst;
      const Vector<Scalar> r = stats.s_zy - s_theta * beta0;
      Scalar lmax = r.cwiseAbs().maxCoeff();
      if (config.penalty == Penalty::TLP) lmax *= config.tlp_tau;
      if (lmax > 0) {
        const Index m = std::max<Index>(config.grid_points, 2);
        const Scalar lo = std::log(config.lambda_min_ratio);
        for (Index i = 0; i < m; ++i)
          grid.push_back(lmax * std::exp(lo * static_cast<Scalar>(i) / static_cast<Scalar>(m - 1)));
      }
    }

    Scalar beta = theta.dot(stats.s_zy) / tst;
    Vector<Scalar> alpha = Vector<Scalar>::Zero(p);
    Vector<Scalar> b = theta * beta;
    Vector<Scalar> g = stats.S_zz * b;  // S b

    for (const Scalar lambda : grid) {
      const detail::PenaltyShape<Scalar> pen{config.penalty, lambda, shape_a};
      Scalar obj = penalized_objective(stats, b, alpha, pen);
      std::vector<Scalar> trace;
      if (config.record_trace) trace.push_back(obj);
      Index iter = 0;
      for (;;) {
        // beta is unpenalized: exact update
        const Scalar new_beta = (theta.dot(stats.s_zy) - theta.dot(g - s_theta * beta)) / tst;
        if (new_beta != beta) {
          g.noalias() += s_theta * (new_beta - beta);
          b += theta * (new_beta - beta);
          beta = new_beta;
        }
        for (Index j = 0; j < p; ++j) {
          const Scalar v = stats.S_zz(j, j);
          const Scalar r = stats.s_zy(j) - (g(j) - v * alpha(j));
          const Scalar t = detail::penalized_scalar_min(v, r, pen);
          if (t != alpha(j)) {
            const Scalar d = t - alpha(j);
            g.noalias() += stats.S_zz.col(j) * d;
            b(j) += d;
            alpha(j) = t;
          }
        }
        const Scalar new_obj = penalized_objective(stats, b, alpha, pen);
        if (new_obj > obj + Scalar(1e-12) * (1 + std::abs(obj))) result.monotone = false;
        if (config.record_trace) trace.push_back(new_obj);
        ++iter;
        ++result.sweeps;
        const bool done = std::abs(obj - new_obj) <= config.tol * std::max(Scalar(1), std::abs(new_obj));
        obj = new_obj;
        if (done) break;
        require(iter < config.max_iter, ErrorCode::NoConvergence,
                "coordinate descent exceeded " + std::to_string(config.max_iter) + " sweeps");
        // Refresh the running product to avoid drift.
        if (iter % 64 == 0) g = stats.S_zz * b;
      }
      if (config.record_trace) result.trace.push_back(std::move(trace));
      ++result.path_length;

      IndexSet support;
      for (Index j = 0; j < p; ++j)
        if (alpha(j) != 0) support.push_back(j);
      if (static_cast<Index>(support.size()) > k_limit) break;
      candidates.insert(std::move(support));
    }
  }

  const Scalar n2 = static_cast<Scalar>(stats.n2);
  const bool bic = std::holds_alternative<Bic>(config.selection);
  bool found = false;
  for (const auto& support : candidates) {
    if (static_cast<Index>(support.size()) > k_limit) continue;
    SupportFit<Scalar> fit;
    try {
      fit = beta_given_support(theta, stats, support);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::SingularGram) continue;
      throw;
    }
    const Scalar rss = std::max(fit.rss, std::numeric_limits<Scalar>::min());
    const Scalar crit = bic ? n2 * std::log(rss) + static_cast<Scalar>(support.size()) * std::log(n2) : fit.rss;
    if (!found || crit < result.criterion ||
        (crit == result.criterion && support.size() < result.support.size())) {
      found = true;
      result.criterion = crit;
      result.beta = fit.beta;
      result.alpha = fit.alpha;
      result.support = fit.support;
      result.rss = fit.rss;
    }
  }
  require(found, ErrorCode::SingularGram, "no candidate support admits a non-singular refit");
  require(2 * static_cast<Index>(result.support.size()) < p || result.support.empty(), ErrorCode::SupportTooLarge,
          "selected support reaches p/2");
  return result;
}

/// Completes the two-stage fit from a stage-one direction: stage-two regression,
/// sign adjustment, residual scale and the variance factor Omega_X.
template <typename Scalar, typename Derived>
BasicCausalFit<Scalar> fit_2sir_from_direction(const Eigen::MatrixBase<Derived>& theta_sir, const Matrix<Scalar>& Sigma_hat,
                                               const BasicSummaryStats<Scalar>& stats, Index S,
                                               const BasicStage2Config<Scalar>& config) {
  const auto s2 = fit_stage2(theta_sir, stats, config);
  const Index p = stats.p();

  BasicCausalFit<Scalar> fit;
  const Scalar sign = s2.beta < 0 ? Scalar(-1) : Scalar(1);
  fit.theta_hat = sign * theta_sir;
  fit.beta_hat = std::abs(s2.beta);
  fit.alpha_hat = s2.alpha;
  fit.invalid_set = s2.support;
  fit.n_slices = S;

  Eigen::LDLT<Matrix<Scalar>> ldlt(stats.S_zz);
  require(ldlt.info() == Eigen::Success, ErrorCode::SingularCovariance, "S_zz factorization failed");
  Scalar sigma2 = stats.s_yy - stats.s_zy.dot(ldlt.solve(stats.s_zy));
  require(sigma2 >= Scalar(-1e-8), ErrorCode::NegativeVariance,
          "residual variance estimate is negative; summary inputs are inconsistent");
  if (sigma2 < Scalar(1e-12)) {
    warn("residual variance estimate below 1e-12; clamped");
    sigma2 = Scalar(1e-12);
  }
  fit.sigma_e_hat = std::sqrt(sigma2);

  require(Sigma_hat.rows() == p, ErrorCode::DimensionMismatch, "stage-one covariance size differs from p");
  const Scalar q = schur_quadratic(Sigma_hat, fit.theta_hat, fit.invalid_set);
  require(q > Scalar(1e-12), ErrorCode::DegenerateDenominator, "theta' Sigma_tilde theta is not positive");
  fit.omega_x_hat = 1 / q;

  const Scalar norm = fit.theta_hat.norm();
  fit.theta_unit = fit.theta_hat / norm;
  fit.beta_report = fit.beta_hat * norm;
  return fit;
}

/// Two-stage instrumental regression: SIR on the individual sample, sparse
/// regression on the summary sample, sign adjustment.
template <typename Scalar>
BasicCausalFit<Scalar> fit_2sir(const BasicStageOneData<Scalar>& data, const BasicSummaryStats<Scalar>& stats, Index S,
                                const BasicStage2Config<Scalar>& config = {}) {
  require(data.p() == stats.p(), ErrorCode::DimensionMismatch, "stage-one and summary instrument counts differ");
  const auto centered = ensure_centered(data);
  SirMoments<Scalar> moments;
  const auto dir = sir_fit(centered, S, &moments);
  auto fit = fit_2sir_from_direction(dir.theta, moments.Sigma_hat, stats, S, config);
  fit.degenerate_spectrum = dir.degenerate_spectrum;
  return fit;
}

}  // namespace nlcausal
