#pragma once

// Single-loop accelerated stochastic gradient method over a sequence of
// quadratic penalty problems (infinite sample space). Each iteration draws one
// realization xi_k:
//
//   y_k     = (1 - 1/beta_k) x_k + (1/beta_k) z_k
//   g_k     = grad f(y_k, xi_k) + rho_k grad c(y_k) [c(y_k)]_+
//   z_{k+1} = prox_{gamma_k psi}(z_k - gamma_k g_k)
//   x_{k+1} = (1 - 1/beta_k) x_k + (1/beta_k) z_{k+1}
//
// The output is the last iterate x_K.

#include "qpen/problem_core.hpp"
#include "qpen/run_record.hpp"
#include "qpen/schedules.hpp"

#include <chrono>
#include <cstdint>
#include <type_traits>
#include <span>

namespace qpen {

template <typename Scalar>
struct Alg1State {
  Vector<Scalar> x;
  Vector<Scalar> z;
  Vector<Scalar> y;  // last extrapolation point
  std::int64_t k = 1;
  std::int64_t grad_evals = 0;
  Rng rng;
};

// Stream 1 of the run seed drives the sampler.
template <typename Scalar>
Alg1State<Scalar> alg1_init(const StochasticProblem<Scalar>& problem, std::type_identity_t<Vector<Scalar>> x1,
                            std::uint64_t seed) {
  validate_problem(problem);
  if (x1.size() != problem.dim()) throw UsageError("alg1: start point dimension mismatch");
  if (!x1.allFinite() || !problem.regularizer.contains(x1))
    throw DomainError("alg1: start point must lie in the domain");
  Alg1State<Scalar> s;
  s.x = x1;
  s.z = std::move(x1);
  s.y = s.x;
  s.rng = make_stream(seed, 1);
  return s;
}

template <typename Scalar>
void alg1_step(Alg1State<Scalar>& s, const StochasticProblem<Scalar>& problem,
               const Alg1Params& params) {
  if (!(params.beta >= 1)) throw UsageError("alg1: beta_k must be >= 1");
  if (!(params.gamma > 0)) throw UsageError("alg1: gamma_k must be positive");
  const Scalar inv_beta = Scalar(1) / static_cast<Scalar>(params.beta);
  const Scalar keep = Scalar(1) - inv_beta;
  const Scalar gamma = static_cast<Scalar>(params.gamma);

  s.y = keep * s.x + inv_beta * s.z;
  const Vector<Scalar> xi = problem.objective.draw(s.rng);
  Vector<Scalar> g =
      penalty_gradient_term(problem.constraints, s.y, static_cast<Scalar>(params.rho));
  problem.objective.family().add_gradient(xi, s.y, Scalar(1), g);
  ++s.grad_evals;
  if (!g.allFinite()) throw NumericalError("alg1: non-finite stochastic gradient", s.k);

  s.z = prox_composite(problem.regularizer, Vector<Scalar>(s.z - gamma * g), gamma);
  s.x = keep * s.x + inv_beta * s.z;
  ++s.k;
}

template <typename Scalar>
Alg1Schedule make_alg1_schedule(const StochasticProblem<Scalar>& problem, ScheduleKind kind,
                                std::int64_t K) {
  const double lf = static_cast<double>(problem.objective.mean_lipschitz());
  const double lc2 = static_cast<double>(constraint_curvature_constant(problem.constraints));
  if (kind == ScheduleKind::constant) {
    if (K < 2) throw UsageError("alg1: constant schedule needs K >= 2");
    return [=](std::int64_t k) { return alg1_constant(k, K, lf, lc2); };
  }
  return [=](std::int64_t k) { return alg1_dynamic(k, lf, lc2); };
}

// Runs k = 1..K-1 and records x_1..x_K. Objective values are Monte-Carlo
// estimates over `evaluation_set`; they never feed back into the iterates.
template <typename Scalar>
RunRecord<Scalar> run_algorithm1(const StochasticProblem<Scalar>& problem,
                                 const Alg1Schedule& schedule, std::type_identity_t<Vector<Scalar>> x1, std::int64_t K,
                                 std::uint64_t seed, std::int64_t record_every,
                                 std::type_identity_t<std::span<const Vector<Scalar>>> evaluation_set) {
  if (K < 2) throw UsageError("alg1: horizon K must be >= 2");
  if (evaluation_set.empty()) throw UsageError("alg1: empty evaluation set");
  if (!schedule) throw UsageError("alg1: empty schedule");
  const auto start = std::chrono::steady_clock::now();

  Alg1State<Scalar> s = alg1_init(problem, std::move(x1), seed);
  RunRecord<Scalar> record;
  record.seed = seed;

  auto record_row = [&](Scalar rho) {
    RunRow<Scalar> row;
    row.k = s.k;
    row.grad_evals = s.grad_evals;
    row.objective = objective_value(problem, s.x, evaluation_set);
    row.violation = constraint_violation(problem.constraints, s.x);
    row.rho = rho;
    row.penalty_objective = row.objective + Scalar(0.5) * rho * row.violation * row.violation;
    record.rows.push_back(row);
  };

  Alg1Params params = schedule(1);
  if (should_record(1, K, record_every)) record_row(static_cast<Scalar>(params.rho));
  for (std::int64_t k = 1; k < K; ++k) {
    if (k > 1) params = schedule(k);
    alg1_step(s, problem, params);
    if (should_record(s.k, K, record_every)) record_row(static_cast<Scalar>(params.rho));
  }

  record.final_point = s.x;
  record.grad_evals = s.grad_evals;
  record.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return record;
}

}  // namespace qpen
