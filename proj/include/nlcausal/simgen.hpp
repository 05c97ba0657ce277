#pragma once

// Seedable generators for the simulation designs.

#include "nlcausal/core.hpp"
#include "nlcausal/random.hpp"

#include <optional>
#include <string>

namespace nlcausal {

enum class Transform { Linear, Log, CubeRoot, Inverse, PiecewiseLinear, Quadratic };
enum class ThetaMode { GaussianNormalized, Uniform, Weak };
enum class SigmaMode { Identity, AR1 };
enum class IvMode { Continuous, Categorical };
enum class AlphaMode { None, FirstFive, CorrelatedPleiotropy };
enum class WMode { UsqPlusGamma, UPlusGamma };
enum class Misspec { Identity, Exp, Abs, Inverse, LogAbs };

const char* to_string(Transform t);
const char* to_string(Misspec m);
Transform parse_transform(const std::string& name);
Misspec parse_misspec(const std::string& name);

struct Epistasis {
  double lambda = 0.3;
  double pairs_frac = 0.1;
};

struct SimDesign {
  Index n = 2000;
  Index p = 10;
  double beta = 0;
  Transform transform = Transform::Linear;
  ThetaMode theta_mode = ThetaMode::GaussianNormalized;
  double weak_pi = 0;  // Weak: fraction of leading coordinates set to zero
  SigmaMode sigma_mode = SigmaMode::Identity;
  double ar_nu = 0;  // AR1: Sigma_ij = nu^|i-j|
  IvMode iv_mode = IvMode::Continuous;
  double maf = 0.3;  // Categorical: z = Bernoulli(maf) + Bernoulli(maf)
  AlphaMode alpha_mode = AlphaMode::None;
  double alpha_value = 1;
  WMode w_mode = WMode::UsqPlusGamma;
  std::optional<Epistasis> epistasis;
  std::optional<Misspec> misspec;
  /// Subtract sample means from both samples. When false the draws are
  /// treated as mean zero by design and estimators use raw second moments.
  bool center = true;
};

void validate(const SimDesign& design);

/// Numbered example designs as presets. `example` is 1..6.
SimDesign example_design(int example, Transform transform, Index n, Index p, double beta);
/// Transformation-estimation study: uniform theta, beta = 1, w = u + gamma.
SimDesign transform_study_design(Transform transform, Index n, Index p);

double transform_eval(Transform t, double x);
/// Draws x with phi(x) = v; for Quadratic the sign is a fair coin.
double transform_solve(Transform t, double v, Rng& rng);
double misspec_eval(Misspec m, double x);

struct SimTruth {
  Vector<double> theta0;
  Vector<double> alpha0;
  double beta0 = 0;
  Transform transform = Transform::Linear;
  /// Root mean square of the second-sample outcome, the factor
  /// removed by normalization.
  double y_scale = 1;
  /// beta on the normalized outcome scale under theta' Sigma theta = 1.
  double beta_sir = 0;
  /// beta on the normalized outcome scale (the 2SLS estimand).
  double beta_linear = 0;
  Index retries = 0;

  double phi(double x) const { return transform_eval(transform, x); }
};

struct SimData {
  StageOneData d1;  // centered (or flagged mean-zero); shifts kept for the raw exposure scale
  SummaryStats d2;  // normalized
  SimTruth truth;
};

SimData generate(const SimDesign& design, std::uint64_t seed);

/// Population instrument covariance of a design.
Matrix<double> population_covariance(const SimDesign& design);

}  // namespace nlcausal
