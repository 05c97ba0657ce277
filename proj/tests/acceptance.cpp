// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include "oracles.hpp"

#include "nlcausal/bench.hpp"
#include "nlcausal/cli.hpp"
#include "nlcausal/io.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>

using namespace nlcausal;
using namespace testing;

namespace {

int failures = 0;

void report(int id, const std::string& name, bool ok, const std::string& detail) {
  std::cout << (ok ? "PASS" : "FAIL") << " criterion " << id << " (" << name << "): " << detail << std::endl;
  failures += !ok;
}

std::string fmt(double v, int digits = 4) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

const MethodSummary& pick(const BenchResult& r, BenchMethod m) {
  for (const auto& s : r.methods)
    if (s.method == m) return s;
  fail(ErrorCode::InvalidArgument, "method missing from result");
}

// Simulation designs use the raw second moments of the mean-zero draws.
SimDesign design(int example, Transform t, Index n, Index p, double beta) {
  auto d = example_design(example, t, n, p, beta);
  d.center = false;
  return d;
}

BenchResult bench(const SimDesign& d, std::vector<BenchMethod> methods, Index reps, bool intervals) {
  BenchSpec spec;
  spec.design = d;
  spec.methods = std::move(methods);
  spec.replications = reps;
  spec.intervals = intervals;
  spec.seed = 1;
  return run_bench(spec);
}

const Transform kAll[] = {Transform::Linear,  Transform::Log,          Transform::CubeRoot,
                          Transform::Inverse, Transform::PiecewiseLinear, Transform::Quadratic};

const double kSizeBound = 0.05 + 2 * std::sqrt(0.05 * 0.95 / 500);

void type_one_error() {
  bool ok = true;
  std::string detail;
  for (auto t : kAll) {
    const auto r = bench(design(1, t, 2000, 10, 0), {BenchMethod::TwoSIR, BenchMethod::Comb2SIR}, 500, false);
    const double a = pick(r, BenchMethod::TwoSIR).rejection_rate;
    const double b = pick(r, BenchMethod::Comb2SIR).rejection_rate;
    ok = ok && a <= kSizeBound && b <= kSizeBound;
    detail += std::string(to_string(t)) + " " + fmt(a, 3) + "/" + fmt(b, 3) + "; ";
  }
  report(1, "type I error, 2SIR/Comb-2SIR <= " + fmt(kSizeBound), ok, detail);
}

void coverage_and_length() {
  bool ok = true;
  std::string detail;
  const std::pair<Transform, std::pair<double, double>> targets[] = {{Transform::Linear, {0.967, 0.138}},
                                                                     {Transform::Quadratic, {0.951, 0.139}}};
  for (const auto& [t, target] : targets) {
    const auto r = bench(design(1, t, 2000, 10, 0.05), {BenchMethod::TwoSIR}, 500, true);
    const auto& s = pick(r, BenchMethod::TwoSIR);
    ok = ok && std::abs(s.coverage - target.first) <= 0.03 && std::abs(s.mean_length / target.second - 1) <= 0.15;
    detail += std::string(to_string(t)) + " coverage " + fmt(s.coverage, 3) + " (target " + fmt(target.first, 3) +
              "), length " + fmt(s.mean_length) + " (target " + fmt(target.second, 3) + "); ";
  }
  report(2, "coverage and length", ok, detail);
}

void invalid_instruments() {
  bool ok = true;
  std::string detail;
  const std::pair<Transform, double> targets[] = {{Transform::Linear, 0.948}, {Transform::Quadratic, 0.964}};
  for (const auto& [t, target] : targets) {
    auto d = design(2, t, 10000, 50, 0.05);
    d.ar_nu = 0;
    const auto r = bench(d, {BenchMethod::TwoSIR, BenchMethod::TwoSLS}, 500, true);
    const double c = pick(r, BenchMethod::TwoSIR).coverage;
    const double l = pick(r, BenchMethod::TwoSLS).coverage;
    ok = ok && std::abs(c - target) <= 0.03;
    if (t == Transform::Quadratic) ok = ok && l < 0.55;
    detail += std::string(to_string(t)) + " 2SIR " + fmt(c, 3) + " (target " + fmt(target, 3) + "), 2SLS " +
              fmt(l, 3) + "; ";
  }
  report(3, "coverage with invalid instruments", ok, detail);
}

void power() {
  bool ok = true;
  std::string detail;
  for (auto t : {Transform::Linear, Transform::CubeRoot, Transform::PiecewiseLinear, Transform::Inverse,
                 Transform::Quadratic}) {
    const auto r = bench(design(1, t, 5000, 50, 0.15), {BenchMethod::Comb2SIR, BenchMethod::TwoSLS}, 100, false);
    const double gap = pick(r, BenchMethod::Comb2SIR).rejection_rate - pick(r, BenchMethod::TwoSLS).rejection_rate;
    const bool dominant = t == Transform::Inverse || t == Transform::Quadratic;
    ok = ok && (dominant ? gap >= 0.2 : std::abs(gap) <= 0.1);
    detail += std::string(to_string(t)) + " " + fmt(gap, 2) + "; ";
  }
  report(4, "power of Comb-2SIR minus 2SLS", ok, detail);
}

void transform_accuracy() {
  bool ok = true;
  std::string detail;
  const std::pair<Transform, double> targets[] = {{Transform::Linear, 0.117},
                                                  {Transform::Log, 0.118},
                                                  {Transform::CubeRoot, 0.113},
                                                  {Transform::PiecewiseLinear, NAN},
                                                  {Transform::Quadratic, 0.123}};
  for (const auto& [t, target] : targets) {
    auto d = transform_study_design(t, 2000, 10);
    d.center = false;
    BenchSpec spec;
    spec.design = d;
    spec.methods = {BenchMethod::AIR, BenchMethod::PT2SLS};
    spec.replications = 100;
    spec.intervals = false;
    spec.transform_metrics = true;
    spec.example = "air";
    const auto r = run_bench(spec);
    const double air = pick(r, BenchMethod::AIR).mse;
    const double pt = pick(r, BenchMethod::PT2SLS).mse;
    if (!std::isnan(target)) ok = ok && std::abs(air / target - 1) <= 0.3;
    if (t != Transform::Linear) ok = ok && air < pt;
    detail += std::string(to_string(t)) + " " + fmt(air) + (std::isnan(target) ? "" : " (target " + fmt(target, 3) + ")") +
              " vs PT-2SLS " + fmt(pt) + "; ";
  }
  report(5, "transformation MSE", ok, detail);
}

void oracles() {
  std::mt19937_64 rng(2023);
  std::uniform_int_distribution<Index> dim(2, 8);
  double worst_sir = 0;
  for (int rep = 0; rep < 200; ++rep) {
    const Index p = dim(rng);
    const Mat sigma = random_spd(p, rng);
    const Mat gamma = random_psd_rank(p, std::max<Index>(1, p / 2), rng);
    const auto d = sir_direction(SirMoments<double>{sigma, gamma});
    const double objective = d.theta.dot(gamma * d.theta) / d.theta.dot(sigma * d.theta);
    worst_sir = std::max(worst_sir, std::abs(objective - generalized_eig_objective(sigma, gamma)));
  }

  Stage2Config scad;
  scad.K_max = 2;
  Stage2Config l0 = scad;
  l0.penalty = Penalty::ExhaustiveL0;
  int agree = 0;
  for (int rep = 0; rep < 200; ++rep) {
    const auto inst = planted_instance(8, 2, 2000, rng);
    agree += fit_stage2(inst.theta, inst.stats, scad).support == fit_stage2(inst.theta, inst.stats, l0).support;
  }

  double worst_cauchy = 0;
  std::uniform_real_distribution<double> u(1e-6, 1 - 1e-6);
  for (int rep = 0; rep < 1000; ++rep) {
    std::vector<double> ps(4), ws(4);
    double sum = 0;
    for (int i = 0; i < 4; ++i) ps[i] = u(rng), ws[i] = u(rng), sum += ws[i];
    for (double& w : ws) w /= sum;
    worst_cauchy = std::max(worst_cauchy, std::abs(cauchy_combine(ps, ws) - cauchy_scalar(ps, ws)));
  }

  int quantile_mismatch = 0;
  std::uniform_int_distribution<int> size(1, 2000);
  for (int rep = 0; rep < 300; ++rep) {
    std::vector<double> v(static_cast<std::size_t>(size(rng)));
    for (double& x : v) x = std::abs(std::normal_distribution<double>()(rng));
    for (double level : {0.5, 0.9, 0.95, u(rng)}) quantile_mismatch += empirical_quantile(v, level) != full_sort_quantile(v, level);
  }

  const bool ok = worst_sir <= 1e-6 && agree >= 190 && worst_cauchy <= 1e-12 && quantile_mismatch == 0;
  std::ostringstream detail;
  detail << "SIR objective gap " << worst_sir << "; SCAD/L0 agreement " << agree << "/200; Cauchy gap " << worst_cauchy
         << "; quantile mismatches " << quantile_mismatch;
  report(6, "oracle equivalences", ok, detail.str());
}

void misspecification() {
  bool ok = true;
  std::string detail;
  for (auto psi : {Misspec::Exp, Misspec::Abs}) {
    auto d = design(6, Transform::Linear, 2000, 10, 0);
    d.misspec = psi;
    const auto r = bench(d, {BenchMethod::TwoSIR, BenchMethod::Comb2SIR}, 500, false);
    const double a = pick(r, BenchMethod::TwoSIR).rejection_rate;
    const double b = pick(r, BenchMethod::Comb2SIR).rejection_rate;
    ok = ok && a <= kSizeBound && b <= kSizeBound;
    detail += std::string(to_string(psi)) + " " + fmt(a, 3) + "/" + fmt(b, 3) + "; ";
  }
  report(7, "size under a misspecified outcome, 2SIR/Comb-2SIR <= " + fmt(kSizeBound), ok, detail);
}

std::string run(std::vector<std::string> args) {
  args.insert(args.begin(), "nlcausal");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return std::to_string(code) + "\n" + out.str() + err.str();
}

std::string pipeline(const std::string& dir) {
  std::string log = run({"simulate", "--example", "2", "--transform", "quad", "--n", "2000", "--p", "10", "--beta",
                         "0.1", "--seed", "42", "--out", dir});
  for (const char* f : {"/d1.csv", "/d2.json", "/truth.json"}) log += read_text_file(dir + f);
  // The reported file paths differ between runs; drop the simulate output.
  log = log.substr(log.find('\n') + 1);
  log = log.substr(log.find("}\n") + 2);
  const std::vector<std::string> in{"--d1", dir + "/d1.csv", "--d2", dir + "/d2.json"};
  auto with = [&](std::vector<std::string> a) {
    a.insert(a.begin() + 1, in.begin(), in.end());
    return a;
  };
  log += run(with({"fit"}));
  log += run(with({"test"}));
  log += run(with({"test", "--combine"}));
  log += run(with({"ci", "--seed", "7"}));
  log += run(with({"transform"}));
  return log;
}

void determinism() {
  const auto root = std::filesystem::temp_directory_path() / "nlcausal_acceptance";
  const std::string a = pipeline((root / "a").string());
  const std::string b = pipeline((root / "b").string());
  report(8, "determinism", a == b && a.size() > 1000,
         "simulate, fit, test, combined test, ci and transform outputs " + std::string(a == b ? "identical" : "differ") +
             " across two runs (" + std::to_string(a.size()) + " bytes)");
}

}  // namespace

int main() {
  set_warning_handler([](std::string_view) {});
  const auto start = std::chrono::steady_clock::now();
  try {
    type_one_error();
    coverage_and_length();
    invalid_instruments();
    power();
    transform_accuracy();
    oracles();
    misspecification();
    determinism();
  } catch (const std::exception& e) {
    std::cout << "FAIL acceptance run aborted: " << e.what() << std::endl;
    return 1;
  }
  const double minutes = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() / 60;
  std::cout << failures << " criteria failed, " << fmt(minutes, 1) << " minutes" << std::endl;
  return failures == 0 ? 0 : 1;
}
