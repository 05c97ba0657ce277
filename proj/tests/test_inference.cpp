#include "doctest.h"
#include "oracles.hpp"

using namespace nlcausal;
using namespace testing;

namespace {

CausalFit plug_in_fit(double beta, Index p) {
  CausalFit fit;
  fit.beta_hat = beta;
  fit.theta_hat = Vec::Unit(p, 0);
  fit.sigma_e_hat = 1;
  fit.omega_x_hat = 1;
  fit.n_slices = 10;
  return fit;
}

SummaryStats unit_stats(Index p, Index n2) {
  SummaryStats s;
  s.S_zz = Mat::Identity(p, p);
  s.s_zy = Vec::Zero(p);
  s.n2 = n2;
  return s;
}

}  // namespace

TEST_CASE("plug-in statistic") {
  const Mat sigma = Mat::Identity(3, 3);
  const auto t = test_statistic(plug_in_fit(0.3, 3), unit_stats(3, 100), sigma);
  CHECK(t.statistic == doctest::Approx(3.0));
  CHECK(t.p_value == doctest::Approx(0.0026997960632601866).epsilon(1e-12));
  CHECK(t.rejects(0.05));

  const auto zero = test_statistic(plug_in_fit(0, 3), unit_stats(3, 100), sigma);
  CHECK(zero.statistic == 0);
  CHECK(zero.p_value == 1);
}

TEST_CASE("the two statistic forms agree when theta' Sigma theta = 1") {
  const Mat sigma = 4 * Mat::Identity(2, 2);
  auto fit = plug_in_fit(0.2, 2);
  fit.theta_hat *= 0.5;  // theta' Sigma theta = 1
  const auto a = test_statistic(fit, unit_stats(2, 400), sigma, StatisticForm::Verbatim);
  const auto b = test_statistic(fit, unit_stats(2, 400), sigma, StatisticForm::VarianceConsistent);
  CHECK(a.statistic == doctest::Approx(b.statistic));
  fit.theta_hat *= 2;
  const auto c = test_statistic(fit, unit_stats(2, 400), sigma, StatisticForm::Verbatim);
  const auto d = test_statistic(fit, unit_stats(2, 400), sigma, StatisticForm::VarianceConsistent);
  CHECK(c.statistic == doctest::Approx(2.0));  // 20 * 0.2 / 2
  CHECK(d.statistic == doctest::Approx(8.0));  // 20 * 0.2 * 2
}

TEST_CASE("normal helpers") {
  CHECK(normal_cdf(0.0) == doctest::Approx(0.5));
  CHECK(normal_quantile(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-13));
  CHECK(normal_quantile(0.5) == doctest::Approx(0).epsilon(1e-14));
  for (double p : {1e-10, 0.01, 0.3, 0.77, 0.999999})
    CHECK(normal_cdf(normal_quantile(p)) == doctest::Approx(p).epsilon(1e-12));
  CHECK(two_sided_p(40.0) >= 0);
  CHECK(two_sided_p(40.0) < 1e-300);
  CHECK(error_of([] { normal_quantile(1.0); }) == ErrorCode::DomainError);
}

TEST_CASE("Cauchy combination identities") {
  CHECK(cauchy_combine<double>({0.2}, {1.0}) == doctest::Approx(0.2).epsilon(1e-12));
  double t0 = 1;
  CHECK(cauchy_combine<double>({0.5, 0.5, 0.5}, {0.2, 0.3, 0.5}, &t0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(std::abs(t0) < 1e-15);
}

TEST_CASE("Cauchy combination matches scalar arithmetic") {
  const std::vector<double> p{0.01, 0.20, 0.50, 0.90};
  const std::vector<double> w(4, 0.25);
  CHECK(std::abs(cauchy_combine(p, w) - cauchy_scalar(p, w)) < 1e-12);

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(1e-6, 1 - 1e-6);
  for (int rep = 0; rep < 500; ++rep) {
    std::vector<double> ps(5), ws(5);
    double sum = 0;
    for (int i = 0; i < 5; ++i) ps[i] = u(rng), ws[i] = u(rng), sum += ws[i];
    for (double& x : ws) x /= sum;
    CHECK(std::abs(cauchy_combine(ps, ws) - cauchy_scalar(ps, ws)) < 1e-12);
  }
}

TEST_CASE("Cauchy combination clamps extreme p-values") {
  const double p = cauchy_combine<double>({0.0, 1.0}, {0.5, 0.5});
  CHECK(std::isfinite(p));
  CHECK(p >= 0);
  CHECK(p <= 1);
  CHECK(error_of([] { cauchy_combine<double>({1.5}, {1.0}); }) == ErrorCode::DomainError);
  CHECK(error_of([] { cauchy_combine<double>({}, {}); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("empirical quantile matches a full sort") {
  std::mt19937_64 rng(44);
  std::uniform_int_distribution<int> size(1, 3000);
  std::uniform_real_distribution<double> lv(0.01, 0.99);
  for (int rep = 0; rep < 300; ++rep) {
    std::vector<double> v(static_cast<std::size_t>(size(rng)));
    for (double& x : v) x = std::abs(std::normal_distribution<double>()(rng));
    for (double level : {0.95, 0.9, 0.5, lv(rng)}) CHECK(empirical_quantile(v, level) == full_sort_quantile(v, level));
  }
  std::vector<double> ten{10, 9, 8, 7, 6, 5, 4, 3, 2, 1};
  CHECK(empirical_quantile(ten, 0.9) == 9);  // 0.9 * 10 is an integer up to rounding
  CHECK(empirical_quantile(ten, 0.95) == 10);
}

TEST_CASE("combined test reports per-slice p-values") {
  const auto data = generate(example_design(1, Transform::Linear, 2000, 10, 0.1), 17);
  CombineConfig cfg;
  const auto r = combined_test(data.d1, data.d2, cfg);
  CHECK(r.method == Method::Comb2SIR);
  CHECK(r.slices_used == std::vector<Index>{2, 3, 5, 10});
  CHECK(r.slice_p_values.size() == 4);
  CHECK(r.p_value == doctest::Approx(cauchy_scalar(r.slice_p_values, std::vector<double>(4, 0.25))).epsilon(1e-12));

  for (std::size_t i = 0; i < cfg.slice_set.size(); ++i) {
    SirMoments<double> m;
    const auto dir = sir_fit(data.d1, cfg.slice_set[i], &m);
    const auto fit = fit_2sir_from_direction(dir.theta, m.Sigma_hat, data.d2, cfg.slice_set[i], Stage2Config{});
    CHECK(test_statistic(fit, data.d2, m.Sigma_hat).p_value == r.slice_p_values[i]);
  }

  cfg.weights = {0.5, 0.5};
  CHECK(error_of([&] { combined_test(data.d1, data.d2, cfg); }) == ErrorCode::InvalidConfig);
  cfg.weights = {};
  cfg.slice_set = {1, 10};
  CHECK(error_of([&] { combined_test(data.d1, data.d2, cfg); }) == ErrorCode::BadSliceCount);
}

TEST_CASE("bootstrap interval is deterministic and truncated at zero") {
  const auto data = generate(example_design(1, Transform::Linear, 2000, 10, 0.05), 23);
  const auto fit = fit_2sir(data.d1, data.d2, 10);
  BootstrapConfig cfg;
  cfg.seed = 7;
  const auto a = confidence_interval(data.d1, data.d2, fit, cfg);
  const auto b = confidence_interval(data.d1, data.d2, fit, cfg);
  CHECK(a.lower == b.lower);
  CHECK(a.upper == b.upper);
  CHECK(a.lower >= 0);
  CHECK(a.upper > fit.beta_hat);
  CHECK(a.upper - fit.beta_hat == doctest::Approx(a.quantile / std::sqrt(static_cast<double>(data.d2.n2))));
  cfg.seed = 8;
  CHECK(confidence_interval(data.d1, data.d2, fit, cfg).upper != a.upper);

  auto zero = fit;
  zero.beta_hat = 0;
  CHECK(confidence_interval(data.d1, data.d2, zero, cfg).lower == 0);

  cfg.M = 50;
  CHECK(error_of([&] { confidence_interval(data.d1, data.d2, fit, cfg); }) == ErrorCode::InvalidConfig);
}

TEST_CASE("bootstrap quantile follows a direct recomputation") {
  // Rebuild each replicate with explicit resampled rows and the generic SIR path.
  const auto data = generate(example_design(1, Transform::Log, 600, 5, 0.1), 29);
  const auto fit = fit_2sir(data.d1, data.d2, 5);
  BootstrapConfig cfg;
  cfg.M = 200;
  cfg.seed = 99;
  const auto ci = confidence_interval(data.d1, data.d2, fit, cfg);

  const auto& d1 = data.d1;
  const Index n = d1.n();
  const double root_n = std::sqrt(static_cast<double>(data.d2.n2));
  const Mat sigma_t = schur_complement(sample_covariance(d1), fit.invalid_set);
  const double base = fit.theta_hat.dot(sigma_t * fit.theta_hat);
  std::vector<double> dev;
  for (Index l = 0; l < cfg.M; ++l) {
    auto rng = make_rng(cfg.seed, static_cast<std::uint64_t>(l));
    std::uniform_int_distribution<Index> pick(0, n - 1);
    std::vector<Index> mult(n, 0);
    for (Index i = 0; i < n; ++i) ++mult[pick(rng)];
    const double zeta = std::sqrt(fit.omega_x_hat) * fit.sigma_e_hat * std::normal_distribution<double>(0, 1)(rng);
    Mat Zr(n, d1.p());
    Vec xr(n);
    Index r = 0;
    for (Index i = 0; i < n; ++i)
      for (Index c = 0; c < mult[i]; ++c) Zr.row(r) = d1.Z.row(i), xr(r++) = d1.x(i);
    Vec theta = sir_fit(center(make_stage_one(Zr, xr)), 5).theta;
    if (theta.dot(fit.theta_hat) < 0) theta = -theta;
    const double eta = 0.5 * root_n * fit.beta_hat * fit.omega_x_hat * (theta.dot(sigma_t * theta) - base);
    dev.push_back(std::abs(zeta - eta));
  }
  CHECK(ci.quantile == doctest::Approx(full_sort_quantile(dev, 0.95)).epsilon(1e-9));
}
