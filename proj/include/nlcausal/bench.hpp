#pragma once

// Monte Carlo harness over the simulation designs.

#include "nlcausal/air.hpp"
#include "nlcausal/inference.hpp"
#include "nlcausal/simgen.hpp"

#include <string>
#include <vector>

namespace nlcausal {

enum class BenchMethod { TwoSIR, Comb2SIR, TwoSLS, PT2SLS, AIR };

const char* to_string(BenchMethod m);
BenchMethod parse_bench_method(const std::string& name);

struct BenchSpec {
  SimDesign design;
  std::vector<BenchMethod> methods{BenchMethod::TwoSIR, BenchMethod::Comb2SIR, BenchMethod::TwoSLS,
                                   BenchMethod::PT2SLS};
  Index replications = 500;
  double alpha = 0.05;
  double ci_level = 0.95;
  std::uint64_t seed = 1;
  /// Confidence intervals for the 2SIR and 2SLS-type methods.
  bool intervals = true;
  /// Transformation-error metrics for AIR and the 2SLS-type methods.
  bool transform_metrics = false;
  Index slices = 10;
  Index bootstrap_size = 1000;
  CombineConfig combine;
  Stage2Config stage2;
  SmootherConfig smoother;
  Index grid_size = 100;
  StatisticForm form = StatisticForm::Verbatim;
  /// Labels carried into the output files.
  std::string example = "1";
};

void validate(const BenchSpec& spec);

struct MethodSummary {
  BenchMethod method = BenchMethod::TwoSIR;
  Index completed = 0;
  Index failures = 0;
  double rejection_rate = NAN;
  double rejection_se = NAN;
  double coverage = NAN;
  double coverage_se = NAN;
  double mean_length = NAN;  // on the raw outcome scale
  double length_se = NAN;
  double mse = NAN;
  double mse_se = NAN;
  double ue = NAN;
  double ue_se = NAN;
  double seconds_per_rep = NAN;
};

struct BenchResult {
  BenchSpec spec;
  std::vector<MethodSummary> methods;
};

BenchResult run_bench(const BenchSpec& spec);

/// Writes results.csv (one row per result x method x metric) and, when more
/// than one beta is present, curves.csv with rejection rate against beta.
void emit(const std::vector<BenchResult>& results, const std::string& dir);
void write_results_csv(std::ostream& out, const std::vector<BenchResult>& results);
void write_curves_csv(std::ostream& out, const std::vector<BenchResult>& results);

inline constexpr const char* kBenchMetrics[] = {"rejection_rate", "coverage",       "mean_length",
                                               "mse",            "ue",             "seconds_per_rep"};

}  // namespace nlcausal
