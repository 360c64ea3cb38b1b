#pragma once

// Experiment runner: reference oracles, metric evaluation, certificate
// checks against the penalty-method inequalities, flat JSON configuration,
// and CSV emission.

#include "qpen/problem_core.hpp"
#include "qpen/problems.hpp"
#include "qpen/run_record.hpp"
#include "qpen/schedules.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace qpen {

struct ReferenceSolution {
  double optimal_value = 0;    // F(x_ref), the F* estimate
  double penalty_optimum = 0;  // F_rho(x_ref) at rho_ref
  VectorXd x;
  double rho = 0;
  std::int64_t iterations = 0;
  bool converged = false;
  std::vector<std::string> warnings;
};

// Accelerated proximal gradient on F_rho_ref with `budget` iterations.
ReferenceSolution reference_solution(const FiniteSumProblem<double>& problem, double rho_ref,
                                     std::int64_t budget);
// Stochastic problems need a finite support (exact expectations).
ReferenceSolution reference_solution(const StochasticProblem<double>& problem, double rho_ref,
                                     std::int64_t budget);

struct Metrics {
  double objective = 0;
  double violation = 0;
};

Metrics evaluate_metrics(const FiniteSumProblem<double>& problem, const VectorXd& x);
Metrics evaluate_metrics(const StochasticProblem<double>& problem, const VectorXd& x,
                         std::span<const VectorXd> evaluation_set);

struct CertificateOracle {
  std::optional<double> optimal_value;               // F*
  std::function<double(double rho)> penalty_optimum; // F_rho*
  std::optional<double> multiplier_norm;             // Lambda
  double tolerance = 1e-8;
};

enum class Inequality { optimality_gap, feasibility, lower_bound };
std::string to_string(Inequality which);

struct CertificateCheck {
  std::int64_t k = 0;
  double rho = 0;
  Inequality inequality = Inequality::optimality_gap;
  double slack = 0;  // right side minus left side; >= -tolerance passes
  bool passed = false;
};

struct CertificateReport {
  std::vector<CertificateCheck> checks;

  bool all_passed() const;
  std::size_t failures() const;
  double min_slack(Inequality which) const;
};

// Per row, with F_rho(x) and rho taken from the row:
//   F(x) - F* <= F_rho(x) - F_rho*
//   ||[c]_+|| <= 2 Lambda / rho + sqrt(2 (F_rho(x) - F_rho*) / rho)   (Lambda given)
//   -Lambda ||[c]_+|| <= F(x) - F*                                      (Lambda given)
CertificateReport certify_run(const RunRecord<double>& record, const CertificateOracle& oracle);

enum class ProblemKind { synthetic, libsvm, toyqp1d, toyqp5d, instance };
enum class Algorithm { alg1, alg2 };

std::string to_string(ProblemKind kind);
std::string to_string(Algorithm algorithm);

// Flat configuration document. Every key is optional; see README for the
// schema. Defaults follow the synthetic stochastic experiment.
struct ExperimentConfig {
  ProblemKind problem = ProblemKind::synthetic;
  std::string libsvm_path;
  std::string instance_path;
  Algorithm algorithm = Algorithm::alg1;
  std::vector<ScheduleKind> schedules{ScheduleKind::constant};
  std::vector<Variant> variants{Variant::sfso};
  std::int64_t K = 100;
  std::vector<std::uint64_t> seeds{0};
  std::int64_t record_every = 1;
  std::string out_dir;  // empty: $QPEN_OUTPUT_DIR, else "qpen_out"

  // Problem construction.
  Eigen::Index n = 100;
  std::size_t m = 50;
  std::size_t pool = 10000;
  std::optional<double> lambda;  // default 0.1 synthetic, 0.03 libsvm
  std::optional<std::size_t> subset;
  std::optional<Eigen::Index> libsvm_dim;
  std::uint64_t instance_seed = 0;
  std::optional<double> noise;  // toy QP perturbation
  std::int64_t reference_budget = 2000;
  bool parallel = true;
};

// Parses a flat JSON object. Unknown keys and type errors are collected and
// reported together in one UsageError.
ExperimentConfig parse_config(const std::string& json_text);
// Canonical JSON text; parse_config(config_to_json(c)) round-trips.
std::string config_to_json(const ExperimentConfig& config);
// Every violated rule, empty when valid.
std::vector<std::string> validate(const ExperimentConfig& config);
// Throws UsageError listing every violated rule.
void check_config(const ExperimentConfig& config);
// FNV-1a 64 of the canonical JSON without output location, as 16 hex digits.
std::string config_hash(const ExperimentConfig& config);
std::string resolved_out_dir(const ExperimentConfig& config);

struct RunOutput {
  std::string label;  // e.g. "alg2-constant-sfso"
  ScheduleKind schedule = ScheduleKind::constant;
  std::optional<Variant> variant;
  std::uint64_t seed = 0;
  RunRecord<double> record;
  std::string csv_path;
};

struct ExperimentResult {
  std::vector<RunOutput> runs;
  std::vector<std::string> summary_paths;
  std::string config_hash;
};

// Builds the problem once, runs every (seed, schedule[, variant]) in
// parallel, then writes `<label>_seed<seed>.csv` plus a `.meta.json`
// sidecar per run and `summary_<label>.csv` with medians over seeds.
ExperimentResult run_experiment(const ExperimentConfig& config);

// Start point drawn uniformly in the box from stream 0 of `seed`.
VectorXd initial_point(const Regularizer<double>& reg, std::uint64_t seed);

inline constexpr const char* kCsvHeader = "k,grad_evals,objective,violation,rho";
std::string format_csv_row(const RunRow<double>& row);
void write_run_csv(std::ostream& out, const RunRecord<double>& record);

double median(std::vector<double> values);
// Row-wise medians over records sharing the same checkpoints.
std::vector<RunRow<double>> median_rows(std::span<const RunRecord<double>> records);

}  // namespace qpen
