#pragma once

// Deterministic accelerated proximal gradient with function-value restart.
// Used as the reference oracle and for the unconstrained warm solve when
// building finite-sum experiments.

#include "qpen/problem_core.hpp"

#include <cmath>
#include <cstdint>
#include <functional>

namespace qpen {

template <typename Scalar>
struct ApgResult {
  Vector<Scalar> x;
  Scalar value = 0;  // smooth part + psi at x
  std::int64_t iterations = 0;
  Scalar last_relative_change = 0;
  bool converged = false;
};

// Minimizes smooth(x) + psi(x) where smooth has an L-Lipschitz gradient.
// Stops early once a non-restart step changes x by at most step_tol
// relative; `converged` means the last relative value change was <= 1e-10.
template <typename Scalar>
ApgResult<Scalar> accelerated_prox_gradient(
    const std::function<Scalar(const Vector<Scalar>&)>& smooth_value,
    const std::function<Vector<Scalar>(const Vector<Scalar>&)>& smooth_gradient,
    const Regularizer<Scalar>& reg, Scalar lipschitz, Vector<Scalar> x0, std::int64_t budget,
    Scalar step_tol = Scalar(1e-15)) {
  if (!(lipschitz > 0)) throw UsageError("apg: Lipschitz constant must be positive");
  if (budget < 1) throw UsageError("apg: budget must be >= 1");
  const Scalar step = Scalar(1) / lipschitz;
  auto total = [&](const Vector<Scalar>& x) { return smooth_value(x) + reg.value(x); };

  Vector<Scalar> x = reg.project(x0);
  Scalar fx = total(x);
  Vector<Scalar> y = x;
  Scalar t = 1;
  ApgResult<Scalar> out;
  out.last_relative_change = std::numeric_limits<Scalar>::infinity();

  for (std::int64_t it = 1; it <= budget; ++it) {
    out.iterations = it;
    Vector<Scalar> x_next = reg.prox(Vector<Scalar>(y - step * smooth_gradient(y)), step);
    const Scalar f_next = total(x_next);
    if (!std::isfinite(f_next)) throw NumericalError("apg: non-finite objective", it);
    if (f_next > fx) {
      if (t == Scalar(1)) {
        // A plain proximal step from x failed to descend: roundoff floor.
        out.last_relative_change = 0;
        break;
      }
      // Momentum overshoot: restart from the current point.
      t = 1;
      y = x;
      continue;
    }
    const Scalar t_next = (Scalar(1) + std::sqrt(Scalar(1) + Scalar(4) * t * t)) / Scalar(2);
    const Scalar dx = (x_next - x).norm();
    y = x_next + ((t - Scalar(1)) / t_next) * (x_next - x);
    out.last_relative_change = std::abs(fx - f_next) / std::max(Scalar(1), std::abs(f_next));
    x = std::move(x_next);
    fx = f_next;
    t = t_next;
    if (dx <= step_tol * (Scalar(1) + x.norm())) break;
  }
  out.x = std::move(x);
  out.value = fx;
  out.converged = out.last_relative_change <= Scalar(1e-10);
  return out;
}

}  // namespace qpen
