#pragma once

// Sample average approximation: replace E[f(x, xi)] by the mean over s
// i.i.d. draws, with s = ceil(8 pi V^2 / eps^2) so that the statistical error
// E|Fbar(x) - F(x)| <= V sqrt(pi / (2 s)) stays below eps / 4, then solve
// the finite-sum surrogate with the variance-reduced method.
//
// Two routes are supported. Approach 1 targets an eps/2 expectedly feasible
// solution (dynamic schedule, efso variant); approach 2 targets an eps/2
// surely feasible solution (dynamic schedule, sfso variant). Solving the
// surrogate with a deterministic full-gradient method is not offered.

#include "qpen/problem_core.hpp"
#include "qpen/vr_solver.hpp"

#include <cmath>
#include <cstdint>
#include <type_traits>
#include <limits>
#include <optional>

namespace qpen {

enum class SaaApproach { efso_approach1, sfso_approach2 };

inline std::uint64_t sample_size(double V, double epsilon) {
  if (!(V > 0) || !(epsilon > 0)) throw UsageError("sample_size: V and epsilon must be positive");
  const double raw = std::ceil(8.0 * M_PI * V * V / (epsilon * epsilon));
  if (!(raw < 9.0e15)) throw UsageError("sample_size: sample size overflows");
  return static_cast<std::uint64_t>(raw);
}

struct SaaPlan {
  double epsilon = 0;
  double V = 0;
  std::uint64_t s = 0;
  SaaApproach approach = SaaApproach::efso_approach1;

  static SaaPlan make(double epsilon, double V, SaaApproach approach) {
    return SaaPlan{epsilon, V, sample_size(V, epsilon), approach};
  }

  Variant variant() const {
    return approach == SaaApproach::efso_approach1 ? Variant::efso : Variant::sfso;
  }
};

// Draws s realizations from stream 2 of `seed` and wraps them as components.
template <typename Scalar>
FiniteSumProblem<Scalar> build_saa_instance(const StochasticProblem<Scalar>& stoch,
                                            std::uint64_t s, std::uint64_t seed) {
  if (s < 1) throw UsageError("saa: sample size must be >= 1");
  validate_problem(stoch);
  Rng rng = make_stream(seed, 2);
  std::vector<Vector<Scalar>> samples;
  samples.reserve(static_cast<std::size_t>(s));
  for (std::uint64_t i = 0; i < s; ++i) {
    Vector<Scalar> xi = stoch.objective.draw(rng);
    if (!xi.allFinite()) throw UsageError("saa: sampler produced a non-finite realization");
    samples.push_back(std::move(xi));
  }
  return FiniteSumProblem<Scalar>{
      FiniteSumObjective<Scalar>(stoch.objective.family_ptr(), std::move(samples)),
      stoch.regularizer, stoch.constraints};
}

template <typename Scalar>
struct SaaResult {
  Vector<Scalar> point;
  RunRecord<Scalar> record;
  FiniteSumProblem<Scalar> instance;
  // Deterministic ||[c(x)]_+|| of the returned point.
  Scalar violation = 0;
};

// Default start point is the projection of the origin onto the box.
template <typename Scalar>
SaaResult<Scalar> solve_saa(const StochasticProblem<Scalar>& stoch, const SaaPlan& plan,
                            std::int64_t K, std::uint64_t seed,
                            std::type_identity_t<std::optional<Vector<Scalar>>> x0 = std::nullopt,
                            std::int64_t record_every = 1) {
  if (plan.s != sample_size(plan.V, plan.epsilon))
    throw UsageError("saa: plan sample size does not match ceil(8 pi V^2 / eps^2)");
  SaaResult<Scalar> out;
  out.instance = build_saa_instance(stoch, plan.s, seed);
  Vector<Scalar> start =
      x0 ? *x0 : out.instance.regularizer.project(Vector<Scalar>::Zero(stoch.dim()));
  std::vector<std::string> warnings;
  const Alg2Schedule schedule =
      make_alg2_schedule(out.instance, ScheduleKind::dynamic, plan.variant(), K, &warnings);
  out.record = run_algorithm2(out.instance, schedule, std::move(start), K, seed, record_every);
  out.record.warnings.insert(out.record.warnings.end(), warnings.begin(), warnings.end());
  out.point = out.record.final_point;
  out.violation = constraint_violation(out.instance.constraints, out.point);
  return out;
}

}  // namespace qpen
