#pragma once

// Variance-reduced accelerated method over quadratic penalty problems for a
// finite sum fbar = (1/s) sum_i f_i. Outer iteration k:
//
//   x_0 = xt_k, z_0 = zt_k, gt_k = grad fbar(xt_k)
//   for t = 1..T_k:
//     i_t ~ q
//     y_t = (1 - alpha - p) x_{t-1} + alpha z_{t-1} + p xt_k
//     g_t = (grad f_i(y_t) - grad f_i(xt_k)) / (q_i s) + gt_k
//           + rho_k grad c(y_t) [c(y_t)]_+
//     z_t = argmin_{x in X} gamma (<g_t, x> + psi(x)) + ||x - z_{t-1}||^2 / 2
//     x_t = (1 - alpha - p) x_{t-1} + alpha z_t + p xt_k
//   zt_{k+1} = z_T, xt_{k+1} = sum theta_t x_t / sum theta_t
//
// Only fbar is sampled; the penalty gradient is exact.

#include "qpen/alias_table.hpp"
#include "qpen/problem_core.hpp"
#include "qpen/run_record.hpp"
#include "qpen/schedules.hpp"

#include <chrono>
#include <cstdint>
#include <type_traits>
#include <functional>
#include <span>
#include <vector>

namespace qpen {

template <typename Scalar>
struct Alg2State {
  Vector<Scalar> x_tilde;
  Vector<Scalar> z_tilde;
  Vector<Scalar> g_tilde;  // grad fbar(x_tilde), recomputed each outer iteration
  Vector<Scalar> x;
  Vector<Scalar> z;
  Vector<Scalar> y;
  std::int64_t k = 1;
  std::int64_t t = 0;
  std::int64_t grad_evals = 0;
  std::size_t last_index = 0;  // i_t of the last inner step
  Rng rng;
};

// q_i = L_i / sum_j L_j and its alias table.
class ComponentSampler {
 public:
  ComponentSampler() = default;

  explicit ComponentSampler(std::vector<double> q) : q_(std::move(q)), table_(q_) {}

  template <typename Scalar>
  static ComponentSampler for_objective(const FiniteSumObjective<Scalar>& objective) {
    const auto& L = objective.lipschitz_constants();
    std::vector<double> ld(static_cast<std::size_t>(L.size()));
    for (Eigen::Index i = 0; i < L.size(); ++i)
      ld[static_cast<std::size_t>(i)] = static_cast<double>(L[i]);
    return ComponentSampler(sampling_distribution(ld));
  }

  const std::vector<double>& q() const { return q_; }
  std::size_t sample(Rng& rng) const { return table_.sample(rng); }

 private:
  std::vector<double> q_;
  AliasTable table_;
};

// SVRG estimate of grad f_rho(y) using component `i`.
template <typename Scalar>
Vector<Scalar> svrg_gradient(const FiniteSumProblem<Scalar>& problem, const Vector<Scalar>& y,
                             const Vector<Scalar>& x_tilde, const Vector<Scalar>& g_tilde,
                             std::size_t i, std::span<const double> q, Scalar rho) {
  const std::size_t s = problem.objective.count();
  if (q.size() != s) throw UsageError("svrg: distribution length differs from component count");
  if (i >= s) throw UsageError("svrg: component index out of range");
  if (!(q[i] > 0)) throw UsageError("svrg: sampled component has zero probability");
  const Scalar w = Scalar(1) / (static_cast<Scalar>(q[i]) * static_cast<Scalar>(s));
  Vector<Scalar> g = g_tilde + penalty_gradient_term(problem.constraints, y, rho);
  problem.objective.add_component_gradient(i, y, w, g);
  problem.objective.add_component_gradient(i, x_tilde, -w, g);
  return g;
}

template <typename Scalar>
Alg2State<Scalar> alg2_init(const FiniteSumProblem<Scalar>& problem, std::type_identity_t<Vector<Scalar>> x0,
                            std::uint64_t seed) {
  validate_problem(problem);
  if (x0.size() != problem.dim()) throw UsageError("alg2: start point dimension mismatch");
  if (!x0.allFinite() || !problem.regularizer.contains(x0))
    throw DomainError("alg2: start point must lie in the domain");
  Alg2State<Scalar> s;
  s.x_tilde = x0;
  s.z_tilde = std::move(x0);
  s.rng = make_stream(seed, 1);
  return s;
}

// Line 3: reset the inner iterates and recompute the full gradient.
template <typename Scalar>
void alg2_begin_outer(Alg2State<Scalar>& s, const FiniteSumProblem<Scalar>& problem) {
  s.x = s.x_tilde;
  s.z = s.z_tilde;
  s.g_tilde = problem.objective.mean_gradient(s.x_tilde);
  s.grad_evals += static_cast<std::int64_t>(problem.objective.count());
  s.t = 0;
  if (!s.g_tilde.allFinite()) throw NumericalError("alg2: non-finite full gradient", s.k);
}

template <typename Scalar>
void alg2_inner_step(Alg2State<Scalar>& s, const FiniteSumProblem<Scalar>& problem,
                     const Alg2Params& params, const ComponentSampler& sampler) {
  const Scalar alpha = static_cast<Scalar>(params.alpha);
  const Scalar p = static_cast<Scalar>(params.p);
  const Scalar gamma = static_cast<Scalar>(params.gamma);
  if (!(alpha > 0 && p >= 0 && alpha + p <= Scalar(1) + Scalar(1e-15)))
    throw UsageError("alg2: requires alpha > 0, p >= 0, alpha + p <= 1");
  if (!(gamma > 0)) throw UsageError("alg2: gamma_k must be positive");
  const Scalar keep = std::max(Scalar(0), Scalar(1) - alpha - p);

  ++s.t;
  s.last_index = sampler.sample(s.rng);
  s.y = keep * s.x + alpha * s.z + p * s.x_tilde;
  const Vector<Scalar> g = svrg_gradient(problem, s.y, s.x_tilde, s.g_tilde, s.last_index,
                                         std::span<const double>(sampler.q()),
                                         static_cast<Scalar>(params.rho));
  s.grad_evals += 2;
  if (!g.allFinite()) throw NumericalError("alg2: non-finite gradient estimate", s.k, s.t);
  s.z = prox_linearized_step(problem.regularizer, g, s.z, gamma);
  s.x = keep * s.x + alpha * s.z + p * s.x_tilde;
  if (!s.x.allFinite()) throw NumericalError("alg2: non-finite inner iterate", s.k, s.t);
}

// One full outer iteration; `observer` (optional) sees the state after
// every inner step.
template <typename Scalar>
void alg2_outer_iteration(Alg2State<Scalar>& s, const FiniteSumProblem<Scalar>& problem,
                          const Alg2Params& params, const ComponentSampler& sampler,
                          const std::type_identity_t<std::function<void(const Alg2State<Scalar>&)>>& observer = {}) {
  if (params.T < 1 || params.theta.size() != static_cast<std::size_t>(params.T))
    throw UsageError("alg2: theta must hold T_k weights");
  alg2_begin_outer(s, problem);
  Vector<Scalar> weighted = Vector<Scalar>::Zero(problem.dim());
  Scalar weight_total = 0;
  for (std::int64_t t = 1; t <= params.T; ++t) {
    alg2_inner_step(s, problem, params, sampler);
    const Scalar theta = static_cast<Scalar>(params.theta[static_cast<std::size_t>(t - 1)]);
    weighted += theta * s.x;
    weight_total += theta;
    if (observer) observer(s);
  }
  s.z_tilde = s.z;
  s.x_tilde = weighted / weight_total;
  ++s.k;
}

// Builds the published fixed or dynamic schedule for `problem`. Horizons
// below the guarantee threshold are accepted and reported in `warnings`.
template <typename Scalar>
Alg2Schedule make_alg2_schedule(const FiniteSumProblem<Scalar>& problem, ScheduleKind kind,
                                Variant variant, std::int64_t K,
                                std::vector<std::string>* warnings = nullptr) {
  const std::uint64_t s = problem.objective.count();
  const double lf = static_cast<double>(problem.objective.mean_lipschitz());
  const double lc2 = static_cast<double>(constraint_curvature_constant(problem.constraints));
  if (kind == ScheduleKind::constant) {
    const std::int64_t threshold = alg2_fixed_min_horizon(s);
    if (K < threshold && warnings)
      warnings->push_back("fixed-penalty horizon K=" + std::to_string(K) +
                          " is below max{k0+1, 2(k0-3)}=" + std::to_string(threshold) +
                          "; guarantees do not apply");
    return [=](std::int64_t k) { return alg2_fixed_unchecked(k, K, s, lf, lc2, variant); };
  }
  const std::int64_t start = alg2_dynamic_guarantee_start(s, variant);
  if (K - 1 < start && warnings)
    warnings->push_back("dynamic-penalty guarantees start at k=" + std::to_string(start) +
                        "; the run stops before that");
  return [=](std::int64_t k) { return alg2_dynamic_from_mean(k, s, lf, lc2, variant); };
}

// Runs outer iterations k = 1..K-1 and records xt_1..xt_K with exact
// objective values. For K = 1 the start point is returned unchanged.
template <typename Scalar>
RunRecord<Scalar> run_algorithm2(const FiniteSumProblem<Scalar>& problem,
                                 const Alg2Schedule& schedule, std::type_identity_t<Vector<Scalar>> x0, std::int64_t K,
                                 std::uint64_t seed, std::int64_t record_every) {
  if (K < 1) throw UsageError("alg2: horizon K must be >= 1");
  if (!schedule) throw UsageError("alg2: empty schedule");
  const auto start = std::chrono::steady_clock::now();

  Alg2State<Scalar> s = alg2_init(problem, std::move(x0), seed);
  const ComponentSampler sampler = ComponentSampler::for_objective(problem.objective);
  RunRecord<Scalar> record;
  record.seed = seed;

  auto record_row = [&](Scalar rho) {
    RunRow<Scalar> row;
    row.k = s.k;
    row.grad_evals = s.grad_evals;
    row.objective = objective_value(problem, s.x_tilde);
    row.violation = constraint_violation(problem.constraints, s.x_tilde);
    row.rho = rho;
    row.penalty_objective = row.objective + Scalar(0.5) * rho * row.violation * row.violation;
    record.rows.push_back(row);
  };

  Alg2Params params = schedule(1);
  if (should_record(1, K, record_every)) record_row(static_cast<Scalar>(params.rho));
  for (std::int64_t k = 1; k < K; ++k) {
    if (k > 1) params = schedule(k);
    alg2_outer_iteration(s, problem, params, sampler);
    if (should_record(s.k, K, record_every)) record_row(static_cast<Scalar>(params.rho));
  }

  record.final_point = s.x_tilde;
  record.grad_evals = s.grad_evals;
  record.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return record;
}

}  // namespace qpen
