#include "doctest.h"
#include "oracles.hpp"

#include <map>

using namespace nlcausal;
using namespace testing;

TEST_CASE("KNN smoother matches brute force, ties included") {
  std::mt19937_64 rng(5);
  const Index n = 400;
  Vec x = random_vector(n, rng);
  for (Index i = 0; i < n; ++i) x(i) = std::round(x(i) * 8) / 8;  // heavy ties
  const Vec t = random_vector(n, rng);
  std::uniform_real_distribution<double> uq(x.minCoeff(), x.maxCoeff());
  for (Index k : {1, 7, 50, 100}) {
    const ConditionalMean<double> m(x, t, SmootherConfig{Smoother::KNN, k, 0});
    for (int q = 0; q < 100; ++q) {
      const double at = q % 4 == 0 ? x(q) : uq(rng);
      CHECK(std::abs(m(at) - brute_knn(x, t, at, k)) < 1e-12);
    }
  }
}

TEST_CASE("KNN with k = n is the global mean") {
  std::mt19937_64 rng(6);
  const Vec x = random_vector(50, rng);
  const Vec t = random_vector(50, rng);
  const ConditionalMean<double> m(x, t, SmootherConfig{Smoother::KNN, 50, 0});
  CHECK(m(0.3) == doctest::Approx(t.mean()).epsilon(1e-13));
  CHECK(m(-5.0) == doctest::Approx(t.mean()).epsilon(1e-13));
  CHECK(error_of([&] { ConditionalMean<double>(x, t, SmootherConfig{Smoother::KNN, 51, 0}); }) ==
        ErrorCode::TooFewSamples);
}

TEST_CASE("queries outside the data range are clamped") {
  Vec x(5), t(5);
  x << 0, 1, 2, 3, 4;
  t << 10, 11, 12, 13, 14;
  const ConditionalMean<double> m(x, t, SmootherConfig{Smoother::KNN, 1, 0});
  CHECK(m(-3.0) == 10);
  CHECK(m(9.0) == 14);
}

TEST_CASE("local linear smoother reproduces a line") {
  std::mt19937_64 rng(7);
  const Vec x = random_vector(300, rng);
  const Vec t = (2 * x.array() + 1).matrix();
  const ConditionalMean<double> m(x, t, SmootherConfig{Smoother::LocalLinear, 100, 0});
  for (double q : {-1.0, 0.0, 0.4, 1.2}) CHECK(m(q) == doctest::Approx(2 * q + 1).epsilon(1e-10));
}

TEST_CASE("noiseless index is recovered by the conditional mean") {
  std::mt19937_64 rng(8);
  const Mat Z = random_normal(5000, 10, rng);
  const Vec theta = random_vector(10, rng).normalized();
  const Vec x = Z * theta;
  const auto d = center(make_stage_one(Z, x));
  const auto m = fit_conditional_mean(d, theta);
  std::vector<double> v(x.data(), x.data() + x.size());
  const double lo = sample_quantile(v, 0.05), hi = sample_quantile(v, 0.95);
  double worst = 0;
  for (double q = lo; q <= hi; q += (hi - lo) / 200) worst = std::max(worst, std::abs((*m)(q) - (q - d.x_shift)));
  CHECK(worst < 0.1);
}

TEST_CASE("adjustment ratio identities") {
  std::mt19937_64 rng(9);
  const Mat Z = random_normal(300, 4, rng);
  const Vec x = random_vector(300, rng);
  const auto d = center(make_stage_one(Z, x));
  const Vec theta = random_vector(4, rng);
  const Vec t = d.Z * theta;
  const Vec raw = d.raw_x();
  std::map<double, double> lookup;
  for (Index i = 0; i < raw.size(); ++i) lookup[raw(i)] = t(i);
  auto exact = [&](double q) { return lookup.at(q); };
  CHECK(adjustment_ratio(d, theta, exact) == doctest::Approx(1).epsilon(1e-13));

  const auto m = fit_conditional_mean(d, theta);
  const double rho = adjustment_ratio(d, theta, *m);
  const double rho3 = adjustment_ratio(d, theta, [&](double q) { return 3 * (*m)(q); });
  CHECK(rho3 == doctest::Approx(rho / 3).epsilon(1e-13));

  CHECK(error_of([&] { adjustment_ratio(d, theta, [](double) { return 0.0; }); }) == ErrorCode::DegenerateRatio);
}

TEST_CASE("transform estimate is unchanged by a flipped stage-one direction") {
  const auto data = generate(transform_study_design(Transform::Log, 2000, 10), 4);
  SirMoments<double> m;
  const auto dir = sir_fit(data.d1, 10, &m);
  const auto a = fit_2sir_from_direction(dir.theta, m.Sigma_hat, data.d2, 10, Stage2Config{});
  const auto b = fit_2sir_from_direction((-dir.theta).eval(), m.Sigma_hat, data.d2, 10, Stage2Config{});
  const auto ea = estimate_transform(data.d1, a.theta_unit);
  const auto eb = estimate_transform(data.d1, b.theta_unit);
  CHECK((ea.values - eb.values).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("log transform is estimated accurately") {
  double mse = 0;
  const int reps = 10;
  for (int rep = 0; rep < reps; ++rep) {
    auto design = transform_study_design(Transform::Log, 2000, 10);
    design.center = false;
    const auto data = generate(design, 60 + rep);
    const auto fit = fit_2sir(data.d1, data.d2, 10);
    const auto est = estimate_transform(data.d1, fit.theta_unit);
    mse += transform_error(est, [&](double x) { return data.truth.phi(x); }).mse / reps;
  }
  CHECK(mse <= 0.2);
}

TEST_CASE("evaluation grid spans the 5% to 95% exposure quantiles") {
  const auto data = generate(transform_study_design(Transform::CubeRoot, 1000, 5), 5);
  const auto fit = fit_2sir(data.d1, data.d2, 10);
  const auto est = estimate_transform(data.d1, fit.theta_unit, {}, 37);
  const Vec raw = data.d1.raw_x();
  std::vector<double> v(raw.data(), raw.data() + raw.size());
  CHECK(est.grid.size() == 37);
  CHECK(est.grid(0) == doctest::Approx(sample_quantile(v, 0.05)));
  CHECK(est.grid(36) == doctest::Approx(sample_quantile(v, 0.95)));
  CHECK(est.values(3) == doctest::Approx(est.rho_hat * est.m_hat(est.grid(3))));
}

TEST_CASE("type 7 quantile") {
  CHECK(sample_quantile<double>({4, 1, 3, 2}, 0.5) == doctest::Approx(2.5));
  CHECK(sample_quantile<double>({4, 1, 3, 2}, 0.05) == doctest::Approx(1.15));
  CHECK(sample_quantile<double>({4, 1, 3, 2}, 1.0) == 4);
}

TEST_CASE("transform error") {
  TransformEstimate est;
  est.grid = Vec::LinSpaced(11, -1, 1);
  est.values = est.grid.array().square();
  auto phi = [](double x) { return x * x; };
  auto e = transform_error(est, phi);
  CHECK(e.mse == 0);
  CHECK(e.ue == 0);
  est.values.array() += 0.5;
  e = transform_error(est, phi);
  CHECK(e.mse == doctest::Approx(0.25));
  CHECK(e.ue == doctest::Approx(0.5));

  std::mt19937_64 rng(10);
  for (int rep = 0; rep < 50; ++rep) {
    est.grid = random_vector(100, rng);
    est.values = random_vector(100, rng);
    const Vec truth = random_vector(100, rng);
    double ss = 0, sup = 0;
    for (Index i = 0; i < 100; ++i) {
      const double d = est.values(i) - truth(i);
      ss += d * d;
      sup = std::max(sup, std::abs(d));
    }
    const auto r = transform_error(est, truth);
    CHECK(std::abs(r.mse - ss / 100) < 1e-14);
    CHECK(r.ue == sup);
  }
  CHECK(error_of([&] { transform_error(est, Vec::Zero(3).eval()); }) == ErrorCode::GridMismatch);
}
