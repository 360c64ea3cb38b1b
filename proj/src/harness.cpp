#include "qpen/harness.hpp"

#include "qpen/apg.hpp"
#include "qpen/spo_solver.hpp"
#include "qpen/vr_solver.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <thread>

namespace qpen {

using nlohmann::json;

namespace {

template <typename Problem, typename Value, typename Gradient>
ReferenceSolution solve_reference(const Problem& problem, double rho, std::int64_t budget,
                                  Value fvalue, Gradient fgrad, double lipschitz_f) {
  validate_problem(problem);
  if (!(rho >= 0)) throw UsageError("reference: rho must be >= 0");
  if (budget < 1) throw UsageError("reference: budget must be >= 1");
  const auto& c = problem.constraints;
  const double L = penalty_smoothness(lipschitz_f, constraint_curvature_constant(c), rho);
  auto smooth_value = [&](const VectorXd& x) {
    const double v = constraint_violation(c, x);
    return fvalue(x) + 0.5 * rho * v * v;
  };
  auto smooth_gradient = [&](const VectorXd& x) {
    VectorXd g = penalty_gradient_term(c, x, rho);
    g += fgrad(x);
    return g;
  };
  const auto apg = accelerated_prox_gradient<double>(
      smooth_value, smooth_gradient, problem.regularizer, std::max(L, 1e-12),
      problem.regularizer.project(VectorXd::Zero(problem.dim())), budget);

  ReferenceSolution out;
  out.x = apg.x;
  out.rho = rho;
  out.iterations = apg.iterations;
  out.converged = apg.converged;
  out.penalty_optimum = apg.value;
  out.optimal_value = fvalue(apg.x) + problem.regularizer.value(apg.x);
  if (!apg.converged) {
    std::ostringstream msg;
    msg << "reference: budget of " << budget << " iterations exhausted with relative change "
        << apg.last_relative_change << " > 1e-10";
    out.warnings.push_back(msg.str());
  }
  return out;
}

}  // namespace

ReferenceSolution reference_solution(const FiniteSumProblem<double>& problem, double rho_ref,
                                     std::int64_t budget) {
  const auto& obj = problem.objective;
  return solve_reference(
      problem, rho_ref, budget, [&](const VectorXd& x) { return obj.mean_value(x); },
      [&](const VectorXd& x) { return obj.mean_gradient(x); }, obj.mean_lipschitz());
}

ReferenceSolution reference_solution(const StochasticProblem<double>& problem, double rho_ref,
                                     std::int64_t budget) {
  const auto& obj = problem.objective;
  if (!obj.has_finite_support())
    throw UsageError("reference: stochastic problem needs a finite support");
  // Mean of the per-atom constants bounds the smoothness of the expectation.
  double lf = 0;
  for (const auto& a : obj.support()) lf += obj.family().lipschitz(a);
  lf /= static_cast<double>(obj.support().size());
  return solve_reference(
      problem, rho_ref, budget, [&](const VectorXd& x) { return obj.expected_value(x); },
      [&](const VectorXd& x) { return obj.expected_gradient(x); }, lf);
}

Metrics evaluate_metrics(const FiniteSumProblem<double>& problem, const VectorXd& x) {
  return {objective_value(problem, x), constraint_violation(problem.constraints, x)};
}

Metrics evaluate_metrics(const StochasticProblem<double>& problem, const VectorXd& x,
                         std::span<const VectorXd> evaluation_set) {
  return {objective_value(problem, x, evaluation_set),
          constraint_violation(problem.constraints, x)};
}

std::string to_string(Inequality which) {
  switch (which) {
    case Inequality::optimality_gap: return "optimality_gap";
    case Inequality::feasibility: return "feasibility";
    case Inequality::lower_bound: return "lower_bound";
  }
  return "?";
}

bool CertificateReport::all_passed() const { return failures() == 0; }

std::size_t CertificateReport::failures() const {
  return static_cast<std::size_t>(
      std::count_if(checks.begin(), checks.end(), [](const auto& c) { return !c.passed; }));
}

double CertificateReport::min_slack(Inequality which) const {
  double out = std::numeric_limits<double>::infinity();
  for (const auto& c : checks)
    if (c.inequality == which) out = std::min(out, c.slack);
  return out;
}

CertificateReport certify_run(const RunRecord<double>& record, const CertificateOracle& oracle) {
  if (!oracle.optimal_value) throw UsageError("certify: missing oracle F*");
  if (!oracle.penalty_optimum) throw UsageError("certify: missing oracle F_rho*");
  if (record.rows.empty()) throw UsageError("certify: empty record");
  const double fstar = *oracle.optimal_value;
  CertificateReport report;
  auto add = [&](const RunRow<double>& row, Inequality which, double slack) {
    report.checks.push_back({row.k, row.rho, which, slack, slack >= -oracle.tolerance});
  };
  for (const auto& row : record.rows) {
    if (!(row.rho > 0)) throw UsageError("certify: row has non-positive rho");
    const double gap = row.objective - fstar;
    const double penalty_gap = row.penalty_objective - oracle.penalty_optimum(row.rho);
    add(row, Inequality::optimality_gap, penalty_gap - gap);
    if (oracle.multiplier_norm) {
      const double lam = *oracle.multiplier_norm;
      const double bound =
          2.0 * lam / row.rho + std::sqrt(2.0 * std::max(0.0, penalty_gap) / row.rho);
      add(row, Inequality::feasibility, bound - row.violation);
      add(row, Inequality::lower_bound, gap + lam * row.violation);
    }
  }
  return report;
}

std::string to_string(ProblemKind kind) {
  switch (kind) {
    case ProblemKind::synthetic: return "synthetic";
    case ProblemKind::libsvm: return "libsvm";
    case ProblemKind::toyqp1d: return "toyqp1d";
    case ProblemKind::toyqp5d: return "toyqp5d";
    case ProblemKind::instance: return "instance";
  }
  return "?";
}

std::string to_string(Algorithm algorithm) {
  return algorithm == Algorithm::alg1 ? "alg1" : "alg2";
}

namespace {

const std::set<std::string> kConfigKeys = {
    "problem", "libsvm_path", "instance_path", "algorithm", "schedule", "variant",
    "K", "seed", "seeds", "out", "record_every", "n", "m", "pool", "lambda", "subset",
    "libsvm_dim", "instance_seed", "noise", "reference_budget", "parallel"};

std::optional<ProblemKind> problem_from(const std::string& s) {
  for (auto k : {ProblemKind::synthetic, ProblemKind::libsvm, ProblemKind::toyqp1d,
                 ProblemKind::toyqp5d, ProblemKind::instance})
    if (to_string(k) == s) return k;
  return std::nullopt;
}

template <typename T>
void read_into(const json& j, T& target) {
  target = j.get<T>();
}

template <typename T>
void read_into(const json& j, std::optional<T>& target) {
  target = j.get<T>();
}

std::string join(const std::vector<std::string>& parts, const std::string& sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) out += (i ? sep : "") + parts[i];
  return out;
}

}  // namespace

ExperimentConfig parse_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw UsageError(std::string("config: not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw UsageError("config: expected a flat JSON object");

  ExperimentConfig c;
  std::vector<std::string> errors;
  for (const auto& [key, value] : j.items())
    if (!kConfigKeys.count(key)) errors.push_back("unknown key '" + key + "'");

  auto field = [&](const char* key, auto& target) {
    if (!j.contains(key)) return;
    try {
      read_into(j.at(key), target);
    } catch (const json::exception&) {
      errors.push_back(std::string("key '") + key + "' has the wrong type");
    }
  };

  std::string problem, algorithm, schedule, variant;
  field("problem", problem);
  field("algorithm", algorithm);
  field("schedule", schedule);
  field("variant", variant);
  if (!problem.empty()) {
    if (auto k = problem_from(problem))
      c.problem = *k;
    else
      errors.push_back("problem must be one of synthetic|libsvm|toyqp1d|toyqp5d|instance");
  }
  if (!algorithm.empty()) {
    if (algorithm == "alg1")
      c.algorithm = Algorithm::alg1;
    else if (algorithm == "alg2")
      c.algorithm = Algorithm::alg2;
    else
      errors.push_back("algorithm must be alg1 or alg2");
  }
  if (!schedule.empty()) {
    if (schedule == "both")
      c.schedules = {ScheduleKind::constant, ScheduleKind::dynamic};
    else
      try {
        c.schedules = {parse_schedule_kind(schedule)};
      } catch (const UsageError&) {
        errors.push_back("schedule must be constant|dynamic|both");
      }
  }
  if (!variant.empty()) {
    if (variant == "both")
      c.variants = {Variant::sfso, Variant::efso};
    else
      try {
        c.variants = {parse_variant(variant)};
      } catch (const UsageError&) {
        errors.push_back("variant must be sfso|efso|both");
      }
  }
  if (j.contains("seed") && j.contains("seeds"))
    errors.push_back("give either 'seed' or 'seeds', not both");
  if (j.contains("seed")) {
    std::uint64_t s = 0;
    field("seed", s);
    c.seeds = {s};
  }
  field("seeds", c.seeds);
  field("libsvm_path", c.libsvm_path);
  field("instance_path", c.instance_path);
  field("K", c.K);
  field("out", c.out_dir);
  field("record_every", c.record_every);
  field("n", c.n);
  field("m", c.m);
  field("pool", c.pool);
  field("lambda", c.lambda);
  field("subset", c.subset);
  field("libsvm_dim", c.libsvm_dim);
  field("instance_seed", c.instance_seed);
  field("noise", c.noise);
  field("reference_budget", c.reference_budget);
  field("parallel", c.parallel);

  if (!errors.empty()) throw UsageError("config: " + join(errors, "; "));
  return c;
}

namespace {

json config_json(const ExperimentConfig& c, bool with_output) {
  json j;
  j["problem"] = to_string(c.problem);
  j["algorithm"] = to_string(c.algorithm);
  j["schedule"] = c.schedules.size() == 2 ? "both" : to_string(c.schedules.front());
  j["variant"] = c.variants.size() == 2 ? "both" : to_string(c.variants.front());
  j["K"] = c.K;
  j["seeds"] = c.seeds;
  j["record_every"] = c.record_every;
  j["n"] = c.n;
  j["m"] = c.m;
  j["pool"] = c.pool;
  j["instance_seed"] = c.instance_seed;
  j["reference_budget"] = c.reference_budget;
  if (!c.libsvm_path.empty()) j["libsvm_path"] = c.libsvm_path;
  if (!c.instance_path.empty()) j["instance_path"] = c.instance_path;
  if (c.lambda) j["lambda"] = *c.lambda;
  if (c.subset) j["subset"] = *c.subset;
  if (c.libsvm_dim) j["libsvm_dim"] = *c.libsvm_dim;
  if (c.noise) j["noise"] = *c.noise;
  if (with_output) {
    if (!c.out_dir.empty()) j["out"] = c.out_dir;
    j["parallel"] = c.parallel;
  }
  return j;
}

}  // namespace

std::string config_to_json(const ExperimentConfig& config) {
  return config_json(config, true).dump(2);
}

std::vector<std::string> validate(const ExperimentConfig& c) {
  std::vector<std::string> errors;
  const bool stochastic_only = c.problem == ProblemKind::synthetic;
  const bool finite_sum_only = c.problem == ProblemKind::libsvm;
  if (c.algorithm == Algorithm::alg1 && finite_sum_only)
    errors.push_back("alg1 requires a stochastic problem (synthetic, toy QP or a stochastic instance)");
  if (c.algorithm == Algorithm::alg2 && stochastic_only)
    errors.push_back("alg2 requires a finite-sum problem (libsvm, toy QP or a finite-sum instance)");
  if (c.problem == ProblemKind::libsvm && c.libsvm_path.empty())
    errors.push_back("problem libsvm requires libsvm_path");
  if (c.problem == ProblemKind::instance && c.instance_path.empty())
    errors.push_back("problem instance requires instance_path");
  if (c.algorithm == Algorithm::alg1 && c.K < 2) errors.push_back("alg1 requires K >= 2");
  if (c.algorithm == Algorithm::alg2 && c.K < 1) errors.push_back("alg2 requires K >= 1");
  if (c.record_every < 1) errors.push_back("record_every must be >= 1");
  if (c.seeds.empty()) errors.push_back("seeds must not be empty");
  if (std::set<std::uint64_t>(c.seeds.begin(), c.seeds.end()).size() != c.seeds.size())
    errors.push_back("seeds must be distinct");
  if (c.schedules.empty()) errors.push_back("schedule list must not be empty");
  if (c.variants.empty()) errors.push_back("variant list must not be empty");
  if (c.n < 1) errors.push_back("n must be >= 1");
  if (c.problem == ProblemKind::synthetic && c.m > c.pool) errors.push_back("m must not exceed pool");
  if (c.pool < 1) errors.push_back("pool must be >= 1");
  if (c.lambda && !(*c.lambda >= 0)) errors.push_back("lambda must be >= 0");
  if (c.noise && !(*c.noise >= 0)) errors.push_back("noise must be >= 0");
  if (c.subset && *c.subset < 1) errors.push_back("subset must be >= 1");
  if (c.subset && c.problem == ProblemKind::libsvm && c.m > *c.subset)
    errors.push_back("m must not exceed subset");
  if (c.reference_budget < 1) errors.push_back("reference_budget must be >= 1");
  return errors;
}

void check_config(const ExperimentConfig& config) {
  const auto errors = validate(config);
  if (!errors.empty()) throw UsageError("invalid config: " + join(errors, "; "));
}

std::string config_hash(const ExperimentConfig& config) {
  const std::string text = config_json(config, false).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string resolved_out_dir(const ExperimentConfig& config) {
  if (!config.out_dir.empty()) return config.out_dir;
  if (const char* env = std::getenv("QPEN_OUTPUT_DIR"); env && *env) return env;
  return "qpen_out";
}

VectorXd initial_point(const Regularizer<double>& reg, std::uint64_t seed) {
  Rng rng = make_stream(seed, 0);
  VectorXd x(reg.dim());
  for (Eigen::Index i = 0; i < reg.dim(); ++i) {
    const double lo = reg.lower()[i];
    const double hi = reg.upper()[i];
    const double u = uniform01(rng);
    if (std::isfinite(lo) && std::isfinite(hi))
      x[i] = lo + (hi - lo) * u;
    else if (std::isfinite(lo))
      x[i] = lo;
    else if (std::isfinite(hi))
      x[i] = hi;
    else
      x[i] = 0;
  }
  return reg.project(x);
}

std::string format_csv_row(const RunRow<double>& row) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%lld,%lld,%.17g,%.17g,%.17g", static_cast<long long>(row.k),
                static_cast<long long>(row.grad_evals), row.objective, row.violation, row.rho);
  return buf;
}

void write_run_csv(std::ostream& out, const RunRecord<double>& record) {
  out << kCsvHeader << '\n';
  for (const auto& row : record.rows) out << format_csv_row(row) << '\n';
}

double median(std::vector<double> values) {
  if (values.empty()) throw UsageError("median: empty input");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

std::vector<RunRow<double>> median_rows(std::span<const RunRecord<double>> records) {
  if (records.empty()) throw UsageError("median rows: no records");
  const std::size_t rows = records.front().rows.size();
  for (const auto& r : records) {
    if (r.rows.size() != rows) throw UsageError("median rows: checkpoint counts differ");
    for (std::size_t i = 0; i < rows; ++i)
      if (r.rows[i].k != records.front().rows[i].k)
        throw UsageError("median rows: checkpoints differ");
  }
  std::vector<RunRow<double>> out(rows);
  std::vector<double> buf(records.size());
  auto column = [&](std::size_t i, auto member) {
    for (std::size_t j = 0; j < records.size(); ++j) buf[j] = records[j].rows[i].*member;
    return median(buf);
  };
  for (std::size_t i = 0; i < rows; ++i) {
    out[i].k = records.front().rows[i].k;
    std::vector<double> evals(records.size());
    for (std::size_t j = 0; j < records.size(); ++j)
      evals[j] = static_cast<double>(records[j].rows[i].grad_evals);
    out[i].grad_evals = static_cast<std::int64_t>(std::llround(median(evals)));
    out[i].objective = column(i, &RunRow<double>::objective);
    out[i].violation = column(i, &RunRow<double>::violation);
    out[i].rho = column(i, &RunRow<double>::rho);
    out[i].penalty_objective = column(i, &RunRow<double>::penalty_objective);
  }
  return out;
}

namespace {

struct BuiltProblem {
  std::optional<StochasticProblem<double>> stochastic;
  std::vector<VectorXd> evaluation_set;
  std::optional<FiniteSumProblem<double>> finite_sum;
};

BuiltProblem build_problem(const ExperimentConfig& c) {
  BuiltProblem b;
  switch (c.problem) {
    case ProblemKind::synthetic: {
      SyntheticOptions o;
      o.n = c.n;
      o.m = c.m;
      o.pool = c.pool;
      o.lambda = c.lambda.value_or(0.1);
      auto inst = generate_synthetic_stochastic(o, c.instance_seed);
      b.stochastic = std::move(inst.problem);
      b.evaluation_set = std::move(inst.evaluation_set);
      break;
    }
    case ProblemKind::libsvm: {
      auto data = load_libsvm(c.libsvm_path, c.libsvm_dim);
      if (c.subset) data = data.head(std::min(*c.subset, data.count()));
      FiniteSumOptions o;
      o.lambda = c.lambda.value_or(0.03);
      o.m = c.m;
      o.reference_budget = c.reference_budget;
      b.finite_sum = build_finitesum_constrained(data, o).problem;
      break;
    }
    case ProblemKind::toyqp1d:
    case ProblemKind::toyqp5d: {
      auto qp = c.problem == ProblemKind::toyqp1d ? toy_qp_1d(c.noise.value_or(0.5))
                                                  : toy_qp_5d(c.noise.value_or(0.0));
      b.stochastic = std::move(qp.stochastic);
      b.finite_sum = std::move(qp.finite_sum);
      b.evaluation_set = std::move(qp.evaluation_set);
      break;
    }
    case ProblemKind::instance: {
      auto loaded = load_instance(c.instance_path);
      if (auto* s = std::get_if<SyntheticInstance>(&loaded)) {
        b.stochastic = std::move(s->problem);
        b.evaluation_set = std::move(s->evaluation_set);
      } else {
        b.finite_sum = std::move(std::get<FiniteSumInstance>(loaded).problem);
      }
      break;
    }
  }
  return b;
}

std::string run_label(Algorithm a, ScheduleKind s, std::optional<Variant> v) {
  std::string label = to_string(a) + "-" + to_string(s);
  if (v) label += "-" + to_string(*v);
  return label;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << text;
  out.flush();
  if (!out) throw std::runtime_error("write failed for '" + path.string() + "'");
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& config) {
  check_config(config);
  const BuiltProblem problem = build_problem(config);
  if (config.algorithm == Algorithm::alg1 && !problem.stochastic)
    throw UsageError("alg1 requires a stochastic problem");
  if (config.algorithm == Algorithm::alg2 && !problem.finite_sum)
    throw UsageError("alg2 requires a finite-sum problem");

  ExperimentResult result;
  result.config_hash = config_hash(config);
  for (auto s : config.schedules) {
    const std::vector<std::optional<Variant>> variants =
        config.algorithm == Algorithm::alg1
            ? std::vector<std::optional<Variant>>{std::nullopt}
            : std::vector<std::optional<Variant>>(config.variants.begin(), config.variants.end());
    for (const auto& v : variants)
      for (auto seed : config.seeds) {
        RunOutput run;
        run.label = run_label(config.algorithm, s, v);
        run.schedule = s;
        run.variant = v;
        run.seed = seed;
        result.runs.push_back(std::move(run));
      }
  }

  auto execute = [&](RunOutput& run) {
    if (config.algorithm == Algorithm::alg1) {
      const auto& p = *problem.stochastic;
      run.record = run_algorithm1(p, make_alg1_schedule(p, run.schedule, config.K),
                                  initial_point(p.regularizer, run.seed), config.K, run.seed,
                                  config.record_every,
                                  std::span<const VectorXd>(problem.evaluation_set));
    } else {
      const auto& p = *problem.finite_sum;
      std::vector<std::string> warnings;
      const auto schedule = make_alg2_schedule(p, run.schedule, *run.variant, config.K, &warnings);
      run.record = run_algorithm2(p, schedule, initial_point(p.regularizer, run.seed), config.K,
                                  run.seed, config.record_every);
      run.record.warnings = std::move(warnings);
    }
    run.record.config_hash = result.config_hash;
  };

  const std::size_t workers =
      config.parallel ? std::max(1u, std::min<unsigned>(std::thread::hardware_concurrency(),
                                                        static_cast<unsigned>(result.runs.size())))
                      : 1;
  std::vector<std::exception_ptr> failures(result.runs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < result.runs.size(); i = next++) {
      try {
        execute(result.runs[i]);
      } catch (...) {
        failures[i] = std::current_exception();
      }
    }
  };
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& f : failures)
    if (f) std::rethrow_exception(f);

  const std::filesystem::path dir = resolved_out_dir(config);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create output directory '" + dir.string() + "': " + ec.message());

  std::map<std::string, std::vector<RunRecord<double>>> by_label;
  for (auto& run : result.runs) {
    const auto stem = run.label + "_seed" + std::to_string(run.seed);
    const auto csv = dir / (stem + ".csv");
    std::ostringstream text;
    write_run_csv(text, run.record);
    write_text(csv, text.str());
    run.csv_path = csv.string();

    json meta = {{"label", run.label},
                 {"seed", run.seed},
                 {"config_hash", run.record.config_hash},
                 {"wall_seconds", run.record.wall_seconds},
                 {"grad_evals", run.record.grad_evals},
                 {"warnings", run.record.warnings},
                 {"final_point", std::vector<double>(run.record.final_point.data(),
                                                     run.record.final_point.data() +
                                                         run.record.final_point.size())}};
    write_text(dir / (stem + ".meta.json"), meta.dump(2) + "\n");
    by_label[run.label].push_back(run.record);
  }
  for (const auto& [label, records] : by_label) {
    RunRecord<double> summary;
    summary.rows = median_rows(records);
    std::ostringstream text;
    write_run_csv(text, summary);
    const auto path = dir / ("summary_" + label + ".csv");
    write_text(path, text.str());
    result.summary_paths.push_back(path.string());
  }
  return result;
}

}  // namespace qpen
