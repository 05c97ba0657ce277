#include "nlcausal/simgen.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

namespace nlcausal {

const char* to_string(Transform t) {
  switch (t) {
    case Transform::Linear: return "linear";
    case Transform::Log: return "log";
    case Transform::CubeRoot: return "cube-root";
    case Transform::Inverse: return "inverse";
    case Transform::PiecewiseLinear: return "pl";
    case Transform::Quadratic: return "quad";
  }
  return "?";
}

const char* to_string(Misspec m) {
  switch (m) {
    case Misspec::Identity: return "identity";
    case Misspec::Exp: return "exp";
    case Misspec::Abs: return "abs";
    case Misspec::Inverse: return "inverse";
    case Misspec::LogAbs: return "logabs";
  }
  return "?";
}

Transform parse_transform(const std::string& name) {
  for (auto t : {Transform::Linear, Transform::Log, Transform::CubeRoot, Transform::Inverse,
                 Transform::PiecewiseLinear, Transform::Quadratic})
    if (name == to_string(t)) return t;
  if (name == "cuberoot") return Transform::CubeRoot;
  if (name == "quadratic") return Transform::Quadratic;
  if (name == "piecewise") return Transform::PiecewiseLinear;
  fail(ErrorCode::InvalidArgument, "unknown transform '" + name + "'");
}

Misspec parse_misspec(const std::string& name) {
  for (auto m : {Misspec::Identity, Misspec::Exp, Misspec::Abs, Misspec::Inverse, Misspec::LogAbs})
    if (name == to_string(m)) return m;
  fail(ErrorCode::InvalidArgument, "unknown misspecified outcome '" + name + "'");
}

void validate(const SimDesign& d) {
  require(d.n >= 4 && d.p >= 1, ErrorCode::InvalidConfig, "design needs n >= 4 and p >= 1");
  require(d.beta >= 0 && std::isfinite(d.beta), ErrorCode::InvalidConfig, "beta must be non-negative");
  require(d.weak_pi >= 0 && d.weak_pi < 1, ErrorCode::InvalidConfig, "weak fraction must lie in [0, 1)");
  require(std::abs(d.ar_nu) < 1, ErrorCode::InvalidConfig, "AR(1) coefficient must lie in (-1, 1)");
  require(d.maf > 0 && d.maf < 1, ErrorCode::InvalidConfig, "minor allele frequency must lie in (0, 1)");
  if (d.epistasis) {
    require(d.epistasis->pairs_frac >= 0 && d.epistasis->pairs_frac <= 0.5, ErrorCode::InvalidConfig,
            "pairs fraction must lie in [0, 0.5]");
    require(d.p >= 2 || d.epistasis->pairs_frac == 0, ErrorCode::InvalidConfig, "interactions need p >= 2");
  }
}

SimDesign example_design(int example, Transform transform, Index n, Index p, double beta) {
  SimDesign d;
  d.n = n;
  d.p = p;
  d.beta = beta;
  d.transform = transform;
  switch (example) {
    case 1: break;
    case 2:
      d.sigma_mode = SigmaMode::AR1;
      d.alpha_mode = AlphaMode::FirstFive;
      break;
    case 3: d.iv_mode = IvMode::Categorical; break;
    case 4:
      d.theta_mode = ThetaMode::Weak;
      d.weak_pi = 0.1;
      break;
    case 5:
      d.iv_mode = IvMode::Categorical;
      d.epistasis = Epistasis{};
      break;
    case 6: d.misspec = Misspec::Exp; break;
    default: fail(ErrorCode::InvalidArgument, "examples are numbered 1 to 6");
  }
  return d;
}

SimDesign transform_study_design(Transform transform, Index n, Index p) {
  SimDesign d;
  d.n = n;
  d.p = p;
  d.beta = 1;
  d.transform = transform;
  d.theta_mode = ThetaMode::Uniform;
  d.w_mode = WMode::UPlusGamma;
  return d;
}

double transform_eval(Transform t, double x) {
  switch (t) {
    case Transform::Linear: return x;
    case Transform::Log:
      require(x > 0, ErrorCode::DomainError, "log needs a positive argument");
      return std::log(x);
    case Transform::CubeRoot: return std::cbrt(x);
    case Transform::Inverse:
      require(x != 0, ErrorCode::DomainError, "inverse needs a non-zero argument");
      return 1 / x;
    case Transform::PiecewiseLinear: return x <= 0 ? x : 0.5 * x;
    case Transform::Quadratic: return x * x;
  }
  return x;
}

double transform_solve(Transform t, double v, Rng& rng) {
  switch (t) {
    case Transform::Linear: return v;
    case Transform::Log: {
      const double x = std::exp(v);
      require(x > 0 && std::isfinite(x), ErrorCode::DomainError, "exp overflow");
      return x;
    }
    case Transform::CubeRoot: return v * v * v;
    case Transform::Inverse:
      require(std::abs(v) >= 1e-6, ErrorCode::DomainError, "index too close to zero for 1/x");
      return 1 / v;
    case Transform::PiecewiseLinear: return v <= 0 ? v : 2 * v;
    case Transform::Quadratic: {
      require(v >= 0, ErrorCode::DomainError, "negative index has no square root");
      const double r = std::sqrt(v);
      return std::bernoulli_distribution(0.5)(rng) ? r : -r;
    }
  }
  return v;
}

double misspec_eval(Misspec m, double x) {
  switch (m) {
    case Misspec::Identity: return x;
    case Misspec::Exp: return std::exp(x);
    case Misspec::Abs: return std::abs(x);
    case Misspec::Inverse: return 1 / x;
    case Misspec::LogAbs: return std::log(std::abs(x));
  }
  return x;
}

Matrix<double> population_covariance(const SimDesign& d) {
  if (d.iv_mode == IvMode::Categorical) return Matrix<double>::Identity(d.p, d.p) * (2 * d.maf * (1 - d.maf));
  Matrix<double> sigma = Matrix<double>::Identity(d.p, d.p);
  if (d.sigma_mode == SigmaMode::AR1)
    for (Index i = 0; i < d.p; ++i)
      for (Index j = 0; j < d.p; ++j) sigma(i, j) = std::pow(d.ar_nu, static_cast<double>(std::abs(i - j)));
  return sigma;
}

namespace {

constexpr int kMaxRetries = 100;

struct Coefficients {
  Vector<double> theta;
  Vector<double> theta_d;  // dominance effects (epistasis only)
  Vector<double> alpha;
  std::vector<std::pair<Index, Index>> pairs;
  std::vector<double> delta;
};

Vector<double> gaussian_vector(Index p, Rng& rng) {
  std::normal_distribution<double> normal(0, 1);
  Vector<double> v(p);
  for (Index j = 0; j < p; ++j) v(j) = normal(rng);
  return v;
}

Coefficients draw_coefficients(const SimDesign& d, Rng& rng) {
  Coefficients c;
  const Index p = d.p;
  switch (d.theta_mode) {
    case ThetaMode::GaussianNormalized: c.theta = gaussian_vector(p, rng); break;
    case ThetaMode::Uniform: c.theta = Vector<double>::Constant(p, 1.0); break;
    case ThetaMode::Weak: {
      c.theta = gaussian_vector(p, rng);
      const auto zeroed = std::min<Index>(static_cast<Index>(std::floor(d.weak_pi * static_cast<double>(p))), p - 1);
      c.theta.head(zeroed).setZero();
      break;
    }
  }
  c.theta.normalize();

  c.alpha = Vector<double>::Zero(p);
  const Index lead = std::min<Index>(5, p);
  if (d.alpha_mode == AlphaMode::FirstFive) {
    c.alpha.head(lead).setConstant(d.alpha_value);
  } else if (d.alpha_mode == AlphaMode::CorrelatedPleiotropy) {
    Vector<double> mu = Vector<double>::Zero(p);
    mu.head(lead) = gaussian_vector(lead, rng);
    c.theta = (c.theta + mu).normalized();
    c.alpha.head(lead).setConstant(d.alpha_value);
    c.alpha += mu;
  }

  if (d.epistasis) {
    c.theta_d = d.epistasis->lambda * c.theta;
    const auto count = static_cast<Index>(std::floor(d.epistasis->pairs_frac * static_cast<double>(p)));
    std::uniform_int_distribution<Index> pick(0, p - 1);
    std::normal_distribution<double> normal(0, std::sqrt(0.1));
    for (Index k = 0; k < count; ++k) {
      Index a = pick(rng), b = pick(rng);
      while (b == a) b = pick(rng);
      c.pairs.emplace_back(std::min(a, b), std::max(a, b));
      c.delta.push_back(normal(rng));
    }
  }
  return c;
}

class RowSampler {
 public:
  RowSampler(const SimDesign& d, const Coefficients& c) : d_(d), c_(c), z_(d.p) {}

  /// Fills z and returns (x, y); retries the whole row on a domain failure.
  std::pair<double, double> draw(Rng& rng, Vector<double>& z, Index& retries) {
    for (int attempt = 0; attempt <= kMaxRetries; ++attempt) {
      draw_z(rng);
      std::normal_distribution<double> normal(0, 1);
      const double u = normal(rng);
      const double gamma = normal(rng);
      const double w = d_.w_mode == WMode::UsqPlusGamma ? u * u + gamma : u + gamma;
      const double v = index(z_) + w;
      const double zeta = normal(rng);
      try {
        const double x = transform_solve(d_.transform, v, rng);
        const double signal = d_.misspec ? misspec_eval(*d_.misspec, x) : transform_eval(d_.transform, x);
        const double y = d_.beta * signal + c_.alpha.dot(z_) + u + zeta;
        if (!std::isfinite(x) || !std::isfinite(y)) fail(ErrorCode::DomainError, "non-finite draw");
        z = z_;
        return {x, y};
      } catch (const Error& e) {
        if (e.code() != ErrorCode::DomainError) throw;
        ++retries;
      }
    }
    fail(ErrorCode::DomainError, "row generation failed after " + std::to_string(kMaxRetries) + " retries");
  }

 private:
  void draw_z(Rng& rng) {
    const Index p = d_.p;
    if (d_.iv_mode == IvMode::Categorical) {
      std::bernoulli_distribution allele(d_.maf);
      for (Index j = 0; j < p; ++j) z_(j) = static_cast<double>(allele(rng)) + static_cast<double>(allele(rng));
      return;
    }
    std::normal_distribution<double> normal(0, 1);
    for (Index j = 0; j < p; ++j) z_(j) = normal(rng);
    if (d_.sigma_mode == SigmaMode::AR1) {
      const double nu = d_.ar_nu;
      const double s = std::sqrt(1 - nu * nu);
      for (Index j = 1; j < p; ++j) z_(j) = nu * z_(j - 1) + s * z_(j);
    }
  }

  double index(const Vector<double>& z) const {
    if (!d_.epistasis) return c_.theta.dot(z);
    double v = 0;
    for (Index j = 0; j < d_.p; ++j) {
      if (z(j) == 1) v += c_.theta(j);
      if (z(j) == 2) v += c_.theta_d(j);
    }
    for (std::size_t k = 0; k < c_.pairs.size(); ++k) v += c_.delta[k] * z(c_.pairs[k].first) * z(c_.pairs[k].second);
    return v;
  }

  const SimDesign& d_;
  const Coefficients& c_;
  Vector<double> z_;
};

}  // namespace

SimData generate(const SimDesign& design, std::uint64_t seed) {
  validate(design);
  Rng rng(derive_seed(seed, 0));
  const Coefficients coef = draw_coefficients(design, rng);

  const Index n = design.n;
  const Index p = design.p;
  const Index n1 = n / 2;
  const Index n2 = n - n1;
  Matrix<double> Z(n, p);
  Vector<double> x(n), y(n);
  Vector<double> z(p);
  SimData out;
  RowSampler sampler(design, coef);
  for (Index i = 0; i < n; ++i) {
    const auto [xi, yi] = sampler.draw(rng, z, out.truth.retries);
    Z.row(i) = z.transpose();
    x(i) = xi;
    y(i) = yi;
  }

  BasicStageOneData<double> d1;
  d1.Z = Z.topRows(n1);
  d1.x = x.head(n1);
  d1.z_shift = Vector<double>::Zero(p);
  validate(d1);
  d1.mean_zero_assumed = !design.center;
  out.d1 = design.center ? center(d1) : d1;

  Matrix<double> Z2 = Z.bottomRows(n2);
  Vector<double> Y2 = y.tail(n2);
  if (design.center) {
    Z2.rowwise() -= Z2.colwise().mean();
    Y2.array() -= Y2.mean();
  }
  out.d2 = summarize(Z2, Y2);

  auto& t = out.truth;
  t.theta0 = coef.theta;
  t.alpha0 = coef.alpha;
  t.beta0 = design.beta;
  t.transform = design.transform;
  t.y_scale = std::sqrt(Y2.squaredNorm() / static_cast<double>(n2));
  const double index_sd = std::sqrt(coef.theta.dot(population_covariance(design) * coef.theta));
  t.beta_sir = design.beta * index_sd / t.y_scale;
  t.beta_linear = design.beta / t.y_scale;
  if (t.retries > 0 && design.transform != Transform::Quadratic && design.transform != Transform::Inverse)
    warn("simulation: " + std::to_string(t.retries) + " rows regenerated");
  return out;
}

}  // namespace nlcausal
