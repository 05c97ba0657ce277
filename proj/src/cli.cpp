#include "nlcausal/cli.hpp"

#include "nlcausal/bench.hpp"
#include "nlcausal/io.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <ostream>
#include <sstream>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace nlcausal {
namespace {

struct Stage2Options {
  std::string penalty = "scad";
  Index fixed_k = -1;
  Index k_max = -1;

  void attach(CLI::App* app) {
    app->add_option("--penalty", penalty, "Stage-two penalty")
        ->check(CLI::IsMember({"scad", "mcp", "tlp", "l0"}))
        ->capture_default_str();
    app->add_option("--k", fixed_k, "Select the best support of at most this size instead of BIC");
    app->add_option("--kmax", k_max, "Largest invalid-instrument set (default floor(p/2) - 1)");
  }

  Stage2Config config() const {
    Stage2Config c;
    if (penalty == "scad") c.penalty = Penalty::SCAD;
    if (penalty == "mcp") c.penalty = Penalty::MCP;
    if (penalty == "tlp") c.penalty = Penalty::TLP;
    if (penalty == "l0") c.penalty = Penalty::ExhaustiveL0;
    c.K_max = k_max;
    if (fixed_k >= 0) c.selection = FixedK{fixed_k};
    return c;
  }
};

struct Inputs {
  std::string d1;
  std::string d2;
  bool mean_zero = false;

  void attach(CLI::App* app) {
    app->add_option("--d1", d1, "Stage-one CSV (z1..zp,x)")->required();
    app->add_option("--d2", d2, "Summary statistics JSON")->required();
    app->add_flag("--mean-zero", mean_zero, "Treat the stage-one data as mean zero by design and skip centering");
  }

  StageOneData stage_one() const {
    auto data = load_stage_one(d1);
    data.mean_zero_assumed = mean_zero;
    return data;
  }
};

void print_json(std::ostream& out, const nlohmann::json& j) { out << dump17(j) << '\n'; }

SimDesign design_from(const std::string& example, Transform transform, Index n, Index p, double beta) {
  if (example == "air") return transform_study_design(transform, n, p);
  int number = 0;
  try {
    number = std::stoi(example);
  } catch (const std::exception&) {
    fail(ErrorCode::InvalidArgument, "example must be 1..6 or 'air'");
  }
  return example_design(number, transform, n, p, beta);
}

struct DesignOptions {
  std::string example = "1";
  std::string transform = "linear";
  Index n = 2000;
  Index p = 10;
  double nu = 0;
  double weak_pi = 0.1;
  double maf = 0.3;
  double lambda = 0.3;
  double pairs = 0.1;
  std::string misspec = "exp";
  bool no_center = false;

  void attach(CLI::App* app) {
    app->add_option("--example", example, "Design: 1..6, or 'air' for the transformation study")
        ->capture_default_str();
    app->add_option("--transform", transform, "linear, log, cube-root, inverse, pl or quad")->capture_default_str();
    app->add_option("--n", n, "Total sample size (half goes to each sample)")->capture_default_str();
    app->add_option("--p", p, "Number of instruments")->capture_default_str();
    app->add_option("--nu", nu, "AR(1) instrument correlation (example 2)")->capture_default_str();
    app->add_option("--pi", weak_pi, "Fraction of zeroed instrument effects (example 4)")->capture_default_str();
    app->add_option("--maf", maf, "Allele frequency for categorical instruments")->capture_default_str();
    app->add_option("--lambda", lambda, "Dominance scale (example 5)")->capture_default_str();
    app->add_option("--pairs", pairs, "Interacting pairs as a fraction of p (example 5)")->capture_default_str();
    app->add_option("--misspec", misspec, "Outcome function: identity, exp, abs, inverse, logabs (example 6)")
        ->capture_default_str();
    app->add_flag("--no-center", no_center, "Keep raw moments of the mean-zero draws instead of centering");
  }

  SimDesign design(double beta) const {
    SimDesign d = design_from(example, parse_transform(transform), n, p, beta);
    if (example == "2") d.ar_nu = nu;
    if (example == "4") d.weak_pi = weak_pi;
    if (example == "3" || example == "5") d.maf = maf;
    if (example == "5") d.epistasis = Epistasis{lambda, pairs};
    if (example == "6") d.misspec = parse_misspec(misspec);
    d.center = !no_center;
    return d;
  }
};

std::vector<Index> parse_slices(const std::string& text) {
  std::vector<Index> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const long v = std::stol(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
      out.push_back(v);
    } catch (const std::exception&) {
      fail(ErrorCode::InvalidArgument, "bad slice count '" + item + "'");
    }
  }
  require(!out.empty(), ErrorCode::InvalidArgument, "empty slice list");
  return out;
}

std::vector<double> parse_doubles(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      fail(ErrorCode::InvalidArgument, "bad number '" + item + "'");
    }
  }
  require(!out.empty(), ErrorCode::InvalidArgument, "empty list");
  return out;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Nonlinear causal inference with two-sample instrumental regression", "nlcausal"};
  app.set_version_flag("--version", NLCAUSAL_VERSION);
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, "Worker threads (default: all cores)");

  // simulate
  auto* simulate = app.add_subcommand("simulate", "Generate a simulated two-sample dataset");
  DesignOptions sim_design;
  sim_design.attach(simulate);
  double sim_beta = 0;
  std::uint64_t sim_seed = 1;
  std::string sim_out = ".";
  simulate->add_option("--beta", sim_beta, "Causal effect")->capture_default_str();
  simulate->add_option("--seed", sim_seed, "Random seed")->capture_default_str();
  simulate->add_option("--out", sim_out, "Output directory for d1.csv, d2.json and truth.json")
      ->capture_default_str();

  // fit
  auto* fit_cmd = app.add_subcommand("fit", "Two-stage fit of the marginal causal effect");
  Inputs fit_in;
  Stage2Options fit_s2;
  Index fit_slices = 10;
  fit_in.attach(fit_cmd);
  fit_s2.attach(fit_cmd);
  fit_cmd->add_option("--slices", fit_slices, "Number of SIR slices")->capture_default_str();

  // test
  auto* test_cmd = app.add_subcommand("test", "Test for a causal effect");
  Inputs test_in;
  Stage2Options test_s2;
  std::string test_slices;
  bool combine = false;
  bool variance_consistent = false;
  test_in.attach(test_cmd);
  test_s2.attach(test_cmd);
  test_cmd->add_option("--slices", test_slices, "Slice count, or a comma list with --combine (default 10 / 2,3,5,10)");
  test_cmd->add_flag("--combine", combine, "Cauchy-combine the tests over several slice counts");
  test_cmd->add_flag("--variance-consistent", variance_consistent,
                     "Scale the statistic by sqrt(q) instead of dividing by it");

  // ci
  auto* ci_cmd = app.add_subcommand("ci", "Resampling confidence interval for the causal effect");
  Inputs ci_in;
  Stage2Options ci_s2;
  Index ci_slices = 10;
  double ci_level = 0.95;
  Index ci_boot = 1000;
  std::uint64_t ci_seed = 1;
  ci_in.attach(ci_cmd);
  ci_s2.attach(ci_cmd);
  ci_cmd->add_option("--slices", ci_slices, "Number of SIR slices")->capture_default_str();
  ci_cmd->add_option("--level", ci_level, "Confidence level")->capture_default_str();
  ci_cmd->add_option("--boot", ci_boot, "Monte Carlo size")->capture_default_str();
  ci_cmd->add_option("--seed", ci_seed, "Random seed")->capture_default_str();

  // transform
  auto* tr_cmd = app.add_subcommand("transform", "Estimate the exposure transformation");
  Inputs tr_in;
  Stage2Options tr_s2;
  Index tr_slices = 10;
  Index tr_k = 100;
  Index tr_grid = 100;
  std::string tr_smoother = "knn";
  double tr_bandwidth = 0;
  std::string tr_out;
  tr_in.attach(tr_cmd);
  tr_s2.attach(tr_cmd);
  tr_cmd->add_option("--slices", tr_slices, "Number of SIR slices")->capture_default_str();
  tr_cmd->add_option("--knn", tr_k, "Neighbours for the KNN smoother")->capture_default_str();
  tr_cmd->add_option("--grid", tr_grid, "Grid points between the 5% and 95% exposure quantiles")
      ->capture_default_str();
  tr_cmd->add_option("--smoother", tr_smoother, "knn or local-linear")
      ->check(CLI::IsMember({"knn", "local-linear"}))
      ->capture_default_str();
  tr_cmd->add_option("--bandwidth", tr_bandwidth, "Local-linear bandwidth (default: Silverman)");
  tr_cmd->add_option("--out", tr_out, "Write the CSV here instead of stdout");

  // bench
  auto* bench_cmd = app.add_subcommand("bench", "Monte Carlo benchmark");
  DesignOptions bench_design;
  bench_design.attach(bench_cmd);
  std::string bench_beta = "0";
  Index bench_reps = 500;
  std::uint64_t bench_seed = 1;
  std::string bench_out;
  std::string bench_methods;
  Index bench_boot = 1000;
  Index bench_slices = 10;
  double bench_alpha = 0.05;
  double bench_level = 0.95;
  bool bench_no_ci = false;
  bool bench_vc = false;
  bench_cmd->add_option("--beta", bench_beta, "Causal effect, or a comma list for a power curve")
      ->capture_default_str();
  bench_cmd->add_option("--reps", bench_reps, "Replications")->capture_default_str();
  bench_cmd->add_option("--seed", bench_seed, "Random seed")->capture_default_str();
  bench_cmd->add_option("--out", bench_out, "Output directory for results.csv / curves.csv");
  bench_cmd->add_option("--methods", bench_methods, "Comma list of 2SIR, Comb-2SIR, 2SLS, PT-2SLS, air");
  bench_cmd->add_option("--boot", bench_boot, "Bootstrap size for 2SIR intervals")->capture_default_str();
  bench_cmd->add_option("--slices", bench_slices, "SIR slices for 2SIR")->capture_default_str();
  bench_cmd->add_option("--alpha", bench_alpha, "Test level")->capture_default_str();
  bench_cmd->add_option("--level", bench_level, "Confidence level")->capture_default_str();
  bench_cmd->add_flag("--no-ci", bench_no_ci, "Skip confidence intervals");
  bench_cmd->add_flag("--variance-consistent", bench_vc, "Use the variance-consistent statistic");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

#ifdef _OPENMP
  if (threads > 0) omp_set_num_threads(threads);
#endif

  try {
    if (*simulate) {
      const auto design = sim_design.design(sim_beta);
      const auto data = generate(design, sim_seed);
      std::filesystem::create_directories(sim_out);
      const std::filesystem::path dir(sim_out);
      save_stage_one((dir / "d1.csv").string(), uncentered(data.d1));
      save_summary((dir / "d2.json").string(), data.d2);
      const auto& t = data.truth;
      const nlohmann::json truth = {
          {"example", sim_design.example},
          {"transform", to_string(t.transform)},
          {"n", design.n},
          {"p", design.p},
          {"seed", sim_seed},
          {"beta0", t.beta0},
          {"theta0", std::vector<double>(t.theta0.data(), t.theta0.data() + t.theta0.size())},
          {"alpha0", std::vector<double>(t.alpha0.data(), t.alpha0.data() + t.alpha0.size())},
          {"y_scale", t.y_scale},
          {"beta_sir", t.beta_sir},
          {"beta_linear", t.beta_linear},
          {"retries", t.retries}};
      write_text_file((dir / "truth.json").string(), dump17(truth) + "\n");
      print_json(out, {{"d1", (dir / "d1.csv").string()},
                       {"d2", (dir / "d2.json").string()},
                       {"truth", (dir / "truth.json").string()}});
    } else if (*fit_cmd) {
      const auto d1 = fit_in.stage_one();
      const auto d2 = load_summary(fit_in.d2);
      print_json(out, to_json(fit_2sir(d1, d2, fit_slices, fit_s2.config())));
    } else if (*test_cmd) {
      const auto d1 = test_in.stage_one();
      const auto d2 = load_summary(test_in.d2);
      const auto form = variance_consistent ? StatisticForm::VarianceConsistent : StatisticForm::Verbatim;
      if (combine) {
        CombineConfig cfg;
        if (!test_slices.empty()) cfg.slice_set = parse_slices(test_slices);
        cfg.form = form;
        print_json(out, to_json(combined_test(d1, d2, cfg, test_s2.config())));
      } else {
        const auto slices = test_slices.empty() ? std::vector<Index>{10} : parse_slices(test_slices);
        require(slices.size() == 1, ErrorCode::InvalidArgument, "several slice counts need --combine");
        const auto centered = ensure_centered(d1);
        SirMoments<double> moments;
        const auto dir = sir_fit(centered, slices[0], &moments);
        const auto fit = fit_2sir_from_direction(dir.theta, moments.Sigma_hat, d2, slices[0], test_s2.config());
        print_json(out, to_json(test_statistic(fit, d2, moments.Sigma_hat, form)));
      }
    } else if (*ci_cmd) {
      const auto d1 = ci_in.stage_one();
      const auto d2 = load_summary(ci_in.d2);
      const auto fit = fit_2sir(d1, d2, ci_slices, ci_s2.config());
      BootstrapConfig cfg;
      cfg.M = ci_boot;
      cfg.level = ci_level;
      cfg.seed = ci_seed;
      auto j = to_json(confidence_interval(d1, d2, fit, cfg));
      j["beta_hat"] = fit.beta_hat;
      print_json(out, j);
    } else if (*tr_cmd) {
      const auto d1 = tr_in.stage_one();
      const auto d2 = load_summary(tr_in.d2);
      const auto fit = fit_2sir(d1, d2, tr_slices, tr_s2.config());
      SmootherConfig sc;
      sc.method = tr_smoother == "knn" ? Smoother::KNN : Smoother::LocalLinear;
      sc.k = tr_k;
      sc.bandwidth = tr_bandwidth;
      const auto est = estimate_transform(d1, fit.theta_unit, sc, tr_grid);
      std::ostringstream csv;
      write_transform_csv(csv, est);
      if (tr_out.empty())
        out << csv.str();
      else
        write_text_file(tr_out, csv.str());
    } else if (*bench_cmd) {
      std::vector<BenchResult> results;
      for (double beta : parse_doubles(bench_beta)) {
        BenchSpec spec;
        spec.design = bench_design.design(beta);
        spec.example = bench_design.example;
        spec.replications = bench_reps;
        spec.seed = bench_seed;
        spec.bootstrap_size = bench_boot;
        spec.slices = bench_slices;
        spec.alpha = bench_alpha;
        spec.ci_level = bench_level;
        spec.intervals = !bench_no_ci;
        spec.form = bench_vc ? StatisticForm::VarianceConsistent : StatisticForm::Verbatim;
        if (bench_design.example == "air") {
          spec.methods = {BenchMethod::AIR, BenchMethod::TwoSLS, BenchMethod::PT2SLS};
          spec.intervals = false;
        }
        if (!bench_methods.empty()) {
          spec.methods.clear();
          std::stringstream ss(bench_methods);
          std::string item;
          while (std::getline(ss, item, ',')) spec.methods.push_back(parse_bench_method(item));
        }
        for (auto m : spec.methods)
          if (m == BenchMethod::AIR) spec.transform_metrics = true;
        results.push_back(run_bench(spec));
      }
      if (bench_out.empty())
        write_results_csv(out, results);
      else
        emit(results, bench_out);
    }
  } catch (const Error& e) {
    err << dump17({{"error", to_string(e.code())}, {"message", e.what()}}, -1) << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << dump17({{"error", "InternalError"}, {"message", e.what()}}, -1) << '\n';
    return 2;
  }
  return 0;
}

}  // namespace nlcausal
