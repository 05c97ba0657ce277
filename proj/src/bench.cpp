#include "nlcausal/bench.hpp"

#include "nlcausal/baselines.hpp"
#include "nlcausal/io.hpp"

#include <chrono>
#include <filesystem>
#include <sstream>

namespace nlcausal {

const char* to_string(BenchMethod m) {
  switch (m) {
    case BenchMethod::TwoSIR: return "2SIR";
    case BenchMethod::Comb2SIR: return "Comb-2SIR";
    case BenchMethod::TwoSLS: return "2SLS";
    case BenchMethod::PT2SLS: return "PT-2SLS";
    case BenchMethod::AIR: return "2SIR+AIR";
  }
  return "?";
}

BenchMethod parse_bench_method(const std::string& name) {
  for (auto m : {BenchMethod::TwoSIR, BenchMethod::Comb2SIR, BenchMethod::TwoSLS, BenchMethod::PT2SLS,
                 BenchMethod::AIR})
    if (name == to_string(m)) return m;
  if (name == "2sir") return BenchMethod::TwoSIR;
  if (name == "comb" || name == "comb-2sir") return BenchMethod::Comb2SIR;
  if (name == "2sls") return BenchMethod::TwoSLS;
  if (name == "pt-2sls" || name == "pt2sls") return BenchMethod::PT2SLS;
  if (name == "air") return BenchMethod::AIR;
  fail(ErrorCode::InvalidArgument, "unknown method '" + name + "'");
}

void validate(const BenchSpec& spec) {
  validate(spec.design);
  require(spec.replications >= 50, ErrorCode::InvalidConfig, "at least 50 replications are required");
  require(spec.alpha > 0 && spec.alpha < 1, ErrorCode::InvalidConfig, "alpha must lie in (0, 1)");
  require(spec.ci_level > 0 && spec.ci_level < 1, ErrorCode::InvalidConfig, "ci level must lie in (0, 1)");
  require(spec.bootstrap_size >= 100, ErrorCode::InvalidConfig, "bootstrap size must be at least 100");
}

namespace {

struct Outcome {
  bool ok = false;
  bool reject = false;
  double covered = NAN;
  double length = NAN;
  double mse = NAN;
  double ue = NAN;
  double seconds = 0;
};

using Clock = std::chrono::steady_clock;

double elapsed(Clock::time_point since) { return std::chrono::duration<double>(Clock::now() - since).count(); }

struct Replicate {
  const BenchSpec& spec;
  const SimData& data;
  std::uint64_t boot_seed;

  // Shared by 2SIR and AIR within a replication.
  std::optional<CausalFit> fit;
  Matrix<double> sigma_hat;
  double fit_seconds = 0;
  Vector<double> grid;

  const CausalFit& two_sir() {
    if (!fit) {
      const auto t0 = Clock::now();
      SirMoments<double> moments;
      const auto dir = sir_fit(data.d1, spec.slices, &moments);
      fit = fit_2sir_from_direction(dir.theta, moments.Sigma_hat, data.d2, spec.slices, spec.stage2);
      sigma_hat = std::move(moments.Sigma_hat);
      fit_seconds = elapsed(t0);
    }
    return *fit;
  }

  // Evaluation grid on the raw exposure scale, shared by every transform estimate.
  const Vector<double>& eval_grid() {
    if (grid.size() == 0) {
      const Vector<double> raw = data.d1.raw_x();
      std::vector<double> v(raw.data(), raw.data() + raw.size());
      grid = Vector<double>::LinSpaced(spec.grid_size, sample_quantile(v, 0.05), sample_quantile(v, 0.95));
    }
    return grid;
  }

  void score_transform(Outcome& o, const Vector<double>& values) {
    TransformEstimate est;
    est.grid = eval_grid();
    est.values = values;
    Vector<double> truth(est.grid.size());
    for (Index i = 0; i < truth.size(); ++i) truth(i) = data.truth.phi(est.grid(i));
    const auto err = transform_error(est, truth);
    o.mse = err.mse;
    o.ue = err.ue;
  }

  Outcome run(BenchMethod method) {
    Outcome o;
    const auto t0 = Clock::now();
    const double y_scale = data.truth.y_scale;
    switch (method) {
      case BenchMethod::TwoSIR: {
        const auto& f = two_sir();
        o.reject = test_statistic(f, data.d2, sigma_hat, spec.form).rejects(spec.alpha);
        if (spec.intervals) {
          BootstrapConfig cfg;
          cfg.M = spec.bootstrap_size;
          cfg.level = spec.ci_level;
          cfg.seed = boot_seed;
          const auto ci = confidence_interval(data.d1, data.d2, f, cfg);
          o.covered = ci.contains(data.truth.beta_sir);
          o.length = ci.length() * y_scale;
        }
        break;
      }
      case BenchMethod::Comb2SIR: {
        auto cfg = spec.combine;
        cfg.form = spec.form;
        o.reject = combined_test(data.d1, data.d2, cfg, spec.stage2).rejects(spec.alpha);
        break;
      }
      case BenchMethod::TwoSLS:
      case BenchMethod::PT2SLS: {
        const bool pt = method == BenchMethod::PT2SLS;
        std::optional<PtTwoSlsFit<double>> ptfit;
        TwoSlsFit<double> f;
        if (pt) {
          ptfit = fit_pt2sls(data.d1, data.d2);
          f = ptfit->two_sls;
        } else {
          f = fit_2sls(data.d1, data.d2);
        }
        o.reject = wald_test(f).rejects(spec.alpha);
        if (spec.intervals) {
          const auto ci = wald_interval(f, spec.ci_level);
          o.covered = ci.contains(data.truth.beta_linear);
          o.length = ci.length() * y_scale;
        }
        if (spec.transform_metrics) score_transform(o, pt ? pt_transform_values(*ptfit, eval_grid()) : eval_grid());
        break;
      }
      case BenchMethod::AIR: {
        const auto& f = two_sir();
        auto est = estimate_transform(data.d1, f.theta_unit, spec.smoother, spec.grid_size);
        score_transform(o, est.values);
        o.seconds += fit_seconds;
        break;
      }
    }
    o.seconds += elapsed(t0);
    o.ok = true;
    return o;
  }
};

double mean_of(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return v.empty() ? NAN : s / static_cast<double>(v.size());
}

double se_of_mean(const std::vector<double>& v) {
  if (v.size() < 2) return NAN;
  const double m = mean_of(v);
  double ss = 0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
}

double binomial_se(double rate, std::size_t count) {
  return count == 0 ? NAN : std::sqrt(rate * (1 - rate) / static_cast<double>(count));
}

}  // namespace

BenchResult run_bench(const BenchSpec& spec) {
  validate(spec);
  const Index R = spec.replications;
  const std::size_t K = spec.methods.size();
  std::vector<std::vector<Outcome>> outcomes(static_cast<std::size_t>(R), std::vector<Outcome>(K));

#pragma omp parallel for schedule(dynamic)
  for (Index r = 0; r < R; ++r) {
    auto& row = outcomes[static_cast<std::size_t>(r)];
    try {
      const SimData data = generate(spec.design, derive_seed(spec.seed, static_cast<std::uint64_t>(2 * r)));
      Replicate rep{spec, data, derive_seed(spec.seed, static_cast<std::uint64_t>(2 * r + 1)), {}, {}, 0, {}};
      for (std::size_t k = 0; k < K; ++k) {
        try {
          row[k] = rep.run(spec.methods[k]);
        } catch (const Error&) {
          row[k].ok = false;
        }
      }
    } catch (const Error&) {
      // generation failure counts against every method
    }
  }

  BenchResult result;
  result.spec = spec;
  Index worst = 0;
  for (std::size_t k = 0; k < K; ++k) {
    MethodSummary s;
    s.method = spec.methods[k];
    std::vector<double> rej, cov, len, mse, ue, secs;
    for (Index r = 0; r < R; ++r) {
      const auto& o = outcomes[static_cast<std::size_t>(r)][k];
      if (!o.ok) {
        ++s.failures;
        continue;
      }
      rej.push_back(o.reject ? 1.0 : 0.0);
      if (!std::isnan(o.covered)) cov.push_back(o.covered);
      if (!std::isnan(o.length)) len.push_back(o.length);
      if (!std::isnan(o.mse)) mse.push_back(o.mse);
      if (!std::isnan(o.ue)) ue.push_back(o.ue);
      secs.push_back(o.seconds);
    }
    s.completed = static_cast<Index>(rej.size());
    worst = std::max(worst, s.failures);
    const bool has_test = s.method != BenchMethod::AIR;
    if (has_test && !rej.empty()) {
      s.rejection_rate = mean_of(rej);
      s.rejection_se = binomial_se(s.rejection_rate, rej.size());
    }
    if (!cov.empty()) {
      s.coverage = mean_of(cov);
      s.coverage_se = binomial_se(s.coverage, cov.size());
      s.mean_length = mean_of(len);
      s.length_se = se_of_mean(len);
    }
    if (!mse.empty()) {
      s.mse = mean_of(mse);
      s.mse_se = se_of_mean(mse);
      s.ue = mean_of(ue);
      s.ue_se = se_of_mean(ue);
    }
    s.seconds_per_rep = mean_of(secs);
    result.methods.push_back(s);
  }
  if (20 * worst > R) {
    std::ostringstream msg;
    msg << "replication failures above 5%:";
    for (const auto& s : result.methods) msg << ' ' << to_string(s.method) << '=' << s.failures;
    fail(ErrorCode::TooManyFailures, msg.str());
  }
  return result;
}

namespace {

void write_prefix(std::ostream& out, const BenchResult& r) {
  const auto& d = r.spec.design;
  out << r.spec.example << ',' << to_string(d.transform) << ',' << d.n << ',' << d.p << ',' << format17(d.beta);
}

}  // namespace

void write_results_csv(std::ostream& out, const std::vector<BenchResult>& results) {
  out << "example,transform,n,p,beta,method,metric,value,se,completed,failures\n";
  for (const auto& r : results) {
    for (const auto& s : r.methods) {
      const std::pair<double, double> cells[] = {{s.rejection_rate, s.rejection_se}, {s.coverage, s.coverage_se},
                                                 {s.mean_length, s.length_se},        {s.mse, s.mse_se},
                                                 {s.ue, s.ue_se},                     {s.seconds_per_rep, NAN}};
      for (std::size_t m = 0; m < std::size(kBenchMetrics); ++m) {
        write_prefix(out, r);
        out << ',' << to_string(s.method) << ',' << kBenchMetrics[m] << ',' << format17(cells[m].first) << ','
            << format17(cells[m].second) << ',' << s.completed << ',' << s.failures << '\n';
      }
    }
  }
}

void write_curves_csv(std::ostream& out, const std::vector<BenchResult>& results) {
  out << "example,transform,n,p,beta,method,power,se\n";
  for (const auto& r : results) {
    for (const auto& s : r.methods) {
      if (s.method == BenchMethod::AIR) continue;
      write_prefix(out, r);
      out << ',' << to_string(s.method) << ',' << format17(s.rejection_rate) << ',' << format17(s.rejection_se)
          << '\n';
    }
  }
}

void emit(const std::vector<BenchResult>& results, const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  require(!ec, ErrorCode::IoError, "cannot create '" + dir + "': " + ec.message());
  std::ostringstream res, curves;
  write_results_csv(res, results);
  write_text_file((std::filesystem::path(dir) / "results.csv").string(), res.str());
  if (results.size() > 1) {
    write_curves_csv(curves, results);
    write_text_file((std::filesystem::path(dir) / "curves.csv").string(), curves.str());
  }
}

}  // namespace nlcausal
