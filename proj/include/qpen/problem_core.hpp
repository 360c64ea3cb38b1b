#pragma once

// Problem instances for
//
//   min  F(x) = E[f(x, xi)] + psi(x)   s.t.  c(x) <= 0
//
// and the quadratic-penalty machinery shared by both solvers:
//
//   F_rho(x) = F(x) + (rho / 2) * ||[c(x)]_+||^2.
//
// psi is an l1 term plus the indicator of a box; c is a stack of affine rows
// or a user-supplied smooth convex map.

#include "qpen/errors.hpp"
#include "qpen/types.hpp"

#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace qpen {

template <typename Derived>
typename Derived::PlainObject positive_part(const Eigen::MatrixBase<Derived>& v) {
  using Scalar = typename Derived::Scalar;
  return v.cwiseMax(Scalar(0));
}

// Relative slack allowed when testing box membership of iterates built from
// convex combinations (roundoff can push them one ulp outside).
template <typename Scalar>
constexpr Scalar kBoxSlack = Scalar(1e-12);

template <typename Scalar>
class Regularizer {
 public:
  using VectorType = Vector<Scalar>;

  Regularizer() = default;

  // psi(x) = sum_i w_i |x_i| + indicator(lower <= x <= upper).
  Regularizer(VectorType l1_weights, VectorType lower, VectorType upper)
      : weights_(std::move(l1_weights)),
        lower_(std::move(lower)),
        upper_(std::move(upper)) {
    if (weights_.size() != lower_.size() || lower_.size() != upper_.size())
      throw UsageError("regularizer: weight and bound dimensions differ");
    if ((weights_.array() < 0).any())
      throw UsageError("regularizer: l1 weights must be nonnegative");
    if ((lower_.array() > upper_.array()).any())
      throw UsageError("regularizer: lower bound exceeds upper bound");
    if (lower_.hasNaN() || upper_.hasNaN() || !weights_.allFinite())
      throw UsageError("regularizer: NaN in bounds or weights");
  }

  static Regularizer box(VectorType lower, VectorType upper) {
    VectorType w = VectorType::Zero(lower.size());
    return Regularizer(std::move(w), std::move(lower), std::move(upper));
  }

  // lambda * ||x_head||_1 + indicator([lo, hi]^n); the trailing
  // `unpenalized_tail` coordinates (e.g. an intercept) carry no l1 weight.
  static Regularizer l1_box(Scalar lambda, Eigen::Index n, Scalar lo, Scalar hi,
                            Eigen::Index unpenalized_tail = 0) {
    if (unpenalized_tail < 0 || unpenalized_tail > n)
      throw UsageError("regularizer: bad unpenalized tail length");
    VectorType w = VectorType::Constant(n, lambda);
    w.tail(unpenalized_tail).setZero();
    return Regularizer(std::move(w), VectorType::Constant(n, lo),
                       VectorType::Constant(n, hi));
  }

  static Regularizer unbounded(Eigen::Index n) {
    const Scalar inf = std::numeric_limits<Scalar>::infinity();
    return box(VectorType::Constant(n, -inf), VectorType::Constant(n, inf));
  }

  Eigen::Index dim() const { return lower_.size(); }
  const VectorType& l1_weights() const { return weights_; }
  const VectorType& lower() const { return lower_; }
  const VectorType& upper() const { return upper_; }

  bool contains(const VectorType& x, Scalar slack = kBoxSlack<Scalar>) const {
    if (x.size() != dim()) return false;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      const Scalar tol_lo = slack * std::max(Scalar(1), std::abs(lower_[i]));
      const Scalar tol_hi = slack * std::max(Scalar(1), std::abs(upper_[i]));
      if (!(x[i] >= lower_[i] - tol_lo && x[i] <= upper_[i] + tol_hi)) return false;
    }
    return true;
  }

  // +inf outside the box.
  Scalar value(const VectorType& x) const {
    if (!contains(x)) return std::numeric_limits<Scalar>::infinity();
    return weights_.cwiseProduct(x.cwiseAbs()).sum();
  }

  VectorType project(const VectorType& v) const {
    return v.cwiseMax(lower_).cwiseMin(upper_);
  }

  // Largest distance between two points of the box.
  Scalar diameter() const { return (upper_ - lower_).norm(); }

  // argmin_x psi(x) + ||x - v||^2 / (2 gamma): soft-threshold, then clip.
  // Separable, and the clip of a 1-D soft-threshold is the exact minimizer
  // because the objective is convex in each coordinate.
  VectorType prox(const VectorType& v, Scalar gamma) const {
    if (v.size() != dim()) throw UsageError("prox: dimension mismatch");
    if (!(gamma > 0)) throw UsageError("prox: step size must be positive");
    VectorType out(v.size());
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      const Scalar t = gamma * weights_[i];
      Scalar u = v[i];
      if (u > t)
        u -= t;
      else if (u < -t)
        u += t;
      else
        u = Scalar(0);
      out[i] = std::min(std::max(u, lower_[i]), upper_[i]);
    }
    return out;
  }

 private:
  VectorType weights_;
  VectorType lower_;
  VectorType upper_;
};

template <typename Scalar>
Vector<Scalar> prox_composite(const Regularizer<Scalar>& reg, const Vector<Scalar>& v,
                              Scalar gamma) {
  return reg.prox(v, gamma);
}

// argmin_{x in X} gamma * (<g, x> + psi(x)) + ||x - z_prev||^2 / 2, which is
// prox_{gamma psi}(z_prev - gamma g).
template <typename Scalar>
Vector<Scalar> prox_linearized_step(const Regularizer<Scalar>& reg, const Vector<Scalar>& g,
                                    const Vector<Scalar>& z_prev, Scalar gamma) {
  if (g.size() != z_prev.size()) throw UsageError("prox step: dimension mismatch");
  return reg.prox(z_prev - gamma * g, gamma);
}

// Per-row smoothness data for c: L_{c_i}, L_{grad c_i}, and C_i >= sup_X |c_i|.
template <typename Scalar>
struct RowConstants {
  Vector<Scalar> lipschitz;
  Vector<Scalar> grad_lipschitz;
  Vector<Scalar> value_bound;
};

template <typename Scalar>
class ConstraintMap {
 public:
  using VectorType = Vector<Scalar>;
  using MatrixType = Matrix<Scalar>;
  using ValueFn = std::function<VectorType(const VectorType&)>;
  // Returns grad c(x) * w = sum_i w_i grad c_i(x).
  using JtApplyFn = std::function<VectorType(const VectorType&, const VectorType&)>;

  ConstraintMap() = default;

  static ConstraintMap none(Eigen::Index dim) {
    return affine(MatrixType(0, dim), VectorType(0), Regularizer<Scalar>::unbounded(dim));
  }

  // Rows c_i(x) = <a_i, x> + b_i. C_i is the exact supremum of |c_i| over the
  // box of `domain` (attained at a corner).
  static ConstraintMap affine(MatrixType A, VectorType b, const Regularizer<Scalar>& domain) {
    if (A.rows() != b.size()) throw UsageError("constraints: A and b row counts differ");
    if (A.cols() != domain.dim()) throw UsageError("constraints: A and domain dims differ");
    ConstraintMap c;
    c.affine_ = true;
    c.dim_ = A.cols();
    const Eigen::Index m = A.rows();
    c.constants_.lipschitz = A.rowwise().norm();
    c.constants_.grad_lipschitz = VectorType::Zero(m);
    c.constants_.value_bound.resize(m);
    const VectorType reach = domain.lower().cwiseAbs().cwiseMax(domain.upper().cwiseAbs());
    for (Eigen::Index i = 0; i < m; ++i) {
      Scalar bound = std::abs(b[i]);
      for (Eigen::Index j = 0; j < A.cols(); ++j)
        if (A(i, j) != Scalar(0)) bound += std::abs(A(i, j)) * reach[j];
      c.constants_.value_bound[i] = bound;
    }
    c.A_ = std::move(A);
    c.b_ = std::move(b);
    return c;
  }

  // Generic smooth convex rows. Constants may be left NaN, in which case
  // constraint_curvature_constant refuses to run.
  static ConstraintMap smooth(Eigen::Index dim, Eigen::Index rows, ValueFn value,
                              JtApplyFn jt_apply, RowConstants<Scalar> constants) {
    if (!value || !jt_apply) throw UsageError("constraints: missing value or Jacobian callback");
    ConstraintMap c;
    c.affine_ = false;
    c.dim_ = dim;
    c.rows_ = rows;
    c.value_fn_ = std::move(value);
    c.jt_fn_ = std::move(jt_apply);
    c.constants_ = std::move(constants);
    return c;
  }

  bool is_affine() const { return affine_; }
  Eigen::Index dim() const { return dim_; }
  Eigen::Index rows() const { return affine_ ? A_.rows() : rows_; }
  const MatrixType& A() const { return A_; }
  const VectorType& b() const { return b_; }
  const RowConstants<Scalar>& constants() const { return constants_; }

  VectorType value(const VectorType& x) const {
    check_dim(x);
    if (affine_) return A_ * x + b_;
    return value_fn_(x);
  }

  VectorType jt_apply(const VectorType& x, const VectorType& w) const {
    check_dim(x);
    if (w.size() != rows()) throw UsageError("constraints: multiplier length mismatch");
    if (affine_) return A_.transpose() * w;
    return jt_fn_(x, w);
  }

 private:
  void check_dim(const VectorType& x) const {
    if (x.size() != dim_)
      throw UsageError("constraints: point has dimension " + std::to_string(x.size()) +
                       ", expected " + std::to_string(dim_));
  }

  bool affine_ = true;
  Eigen::Index dim_ = 0;
  Eigen::Index rows_ = 0;
  MatrixType A_;
  VectorType b_;
  ValueFn value_fn_;
  JtApplyFn jt_fn_;
  RowConstants<Scalar> constants_;
};

template <typename Scalar>
Scalar constraint_violation(const ConstraintMap<Scalar>& c, const Vector<Scalar>& x) {
  if (c.rows() == 0) {
    if (x.size() != c.dim()) throw UsageError("constraints: dimension mismatch");
    return Scalar(0);
  }
  return positive_part(c.value(x)).norm();
}

// rho * grad c(x) [c(x)]_+, the gradient of (rho/2)||[c(x)]_+||^2.
template <typename Scalar>
Vector<Scalar> penalty_gradient_term(const ConstraintMap<Scalar>& c, const Vector<Scalar>& x,
                                     Scalar rho) {
  if (c.rows() == 0) return Vector<Scalar>::Zero(x.size());
  const Vector<Scalar> active = positive_part(c.value(x));
  return rho * c.jt_apply(x, active);
}

// L_{grad c^2} = sum_i (L_{c_i}^2 + C_i L_{grad c_i}).
template <typename Scalar>
Scalar constraint_curvature_constant(const ConstraintMap<Scalar>& c) {
  const auto& k = c.constants();
  const Eigen::Index m = c.rows();
  if (k.lipschitz.size() != m || k.grad_lipschitz.size() != m || k.value_bound.size() != m)
    throw UsageError("constraints: per-row constants not populated");
  Scalar total = 0;
  for (Eigen::Index i = 0; i < m; ++i) {
    const Scalar lc = k.lipschitz[i];
    const Scalar lgc = k.grad_lipschitz[i];
    if (std::isnan(lc) || std::isnan(lgc) || lc < 0 || lgc < 0)
      throw UsageError("constraints: row " + std::to_string(i) + " has missing constants");
    total += lc * lc;
    if (lgc != Scalar(0)) {
      if (std::isnan(k.value_bound[i]))
        throw UsageError("constraints: row " + std::to_string(i) + " has no value bound");
      total += k.value_bound[i] * lgc;
    }
  }
  return total;
}

// L_rho = L_{grad f} + rho L_{grad c^2}.
template <typename Scalar>
Scalar penalty_smoothness(Scalar lipschitz_f, Scalar lipschitz_c2, Scalar rho) {
  return lipschitz_f + rho * lipschitz_c2;
}

// A parametric family x -> f(x, xi) of smooth convex functions. The
// realization xi is carried as a small dense payload whose meaning belongs to
// the family (a feature/label pair, an atom index, a shift vector, ...).
template <typename Scalar>
class ComponentFamily {
 public:
  using VectorType = Vector<Scalar>;

  virtual ~ComponentFamily() = default;

  virtual Eigen::Index dim() const = 0;
  virtual Scalar value(const VectorType& xi, const VectorType& x) const = 0;
  // out += weight * grad_x f(x, xi)
  virtual void add_gradient(const VectorType& xi, const VectorType& x, Scalar weight,
                            VectorType& out) const = 0;
  // Smoothness constant of f(., xi) on the whole space.
  virtual Scalar lipschitz(const VectorType& xi) const = 0;

  VectorType gradient(const VectorType& xi, const VectorType& x) const {
    VectorType g = VectorType::Zero(dim());
    add_gradient(xi, x, Scalar(1), g);
    return g;
  }
};

// fbar(x) = (1/s) sum_i f(x, xi_i) over a stored list of realizations.
template <typename Scalar>
class FiniteSumObjective {
 public:
  using VectorType = Vector<Scalar>;
  using Family = ComponentFamily<Scalar>;

  FiniteSumObjective() = default;

  FiniteSumObjective(std::shared_ptr<const Family> family, std::vector<VectorType> samples)
      : family_(std::move(family)),
        samples_(std::make_shared<const std::vector<VectorType>>(std::move(samples))) {
    if (!family_) throw UsageError("finite sum: null component family");
    if (samples_->empty()) throw UsageError("finite sum: needs at least one component");
    lipschitz_.resize(static_cast<Eigen::Index>(samples_->size()));
    for (std::size_t i = 0; i < samples_->size(); ++i) {
      lipschitz_[static_cast<Eigen::Index>(i)] = family_->lipschitz((*samples_)[i]);
      if (!(lipschitz_[static_cast<Eigen::Index>(i)] >= 0))
        throw UsageError("finite sum: component Lipschitz constant must be >= 0");
    }
  }

  std::size_t count() const { return samples_->size(); }
  Eigen::Index dim() const { return family_->dim(); }
  const Family& family() const { return *family_; }
  std::shared_ptr<const Family> family_ptr() const { return family_; }
  const std::vector<VectorType>& samples() const { return *samples_; }
  const VectorType& sample(std::size_t i) const { return (*samples_)[i]; }

  const VectorType& lipschitz_constants() const { return lipschitz_; }
  Scalar lipschitz(std::size_t i) const { return lipschitz_[static_cast<Eigen::Index>(i)]; }
  // L_{grad fbar} = sum_i L_i / s.
  Scalar mean_lipschitz() const { return lipschitz_.mean(); }

  Scalar component_value(std::size_t i, const VectorType& x) const {
    return family_->value(sample(i), x);
  }
  VectorType component_gradient(std::size_t i, const VectorType& x) const {
    return family_->gradient(sample(i), x);
  }
  void add_component_gradient(std::size_t i, const VectorType& x, Scalar weight,
                              VectorType& out) const {
    family_->add_gradient(sample(i), x, weight, out);
  }

  Scalar mean_value(const VectorType& x) const {
    check_dim(x);
    Scalar total = 0;
    for (const auto& xi : *samples_) total += family_->value(xi, x);
    return total / static_cast<Scalar>(count());
  }

  VectorType mean_gradient(const VectorType& x) const {
    check_dim(x);
    VectorType g = VectorType::Zero(dim());
    const Scalar w = Scalar(1) / static_cast<Scalar>(count());
    for (const auto& xi : *samples_) family_->add_gradient(xi, x, w, g);
    return g;
  }

 private:
  void check_dim(const VectorType& x) const {
    if (x.size() != dim()) throw UsageError("finite sum: dimension mismatch");
  }

  std::shared_ptr<const Family> family_;
  std::shared_ptr<const std::vector<VectorType>> samples_;
  VectorType lipschitz_;
};

// Bounds that the analysis assumes; optional ones are unknown unless an
// oracle or a generator can certify them.
template <typename Scalar>
struct InstanceConstants {
  Scalar lipschitz_f = 0;   // L_{grad f} or L_{grad fbar}
  Scalar lipschitz_c2 = 0;  // L_{grad c^2}
  Scalar diameter = 0;      // D_X
  std::optional<Scalar> value_spread;    // D_F
  std::optional<Scalar> sigma;           // gradient noise standard deviation
  std::optional<Scalar> grad_bound;      // G
  std::optional<Scalar> value_bound;     // V
  std::optional<Scalar> multiplier_norm; // Lambda
};

// f(x) = E[f(x, xi)] accessible only through sampling; a finite support can
// be attached so that exact means are available for testing.
template <typename Scalar>
class StochasticObjective {
 public:
  using VectorType = Vector<Scalar>;
  using Family = ComponentFamily<Scalar>;
  using Sampler = std::function<VectorType(Rng&)>;

  StochasticObjective() = default;

  StochasticObjective(std::shared_ptr<const Family> family, Sampler sampler,
                      Scalar mean_lipschitz)
      : family_(std::move(family)), sampler_(std::move(sampler)), mean_lipschitz_(mean_lipschitz) {
    if (!family_ || !sampler_) throw UsageError("stochastic objective: null family or sampler");
    if (!(mean_lipschitz_ >= 0)) throw UsageError("stochastic objective: L must be >= 0");
  }

  // Uniform distribution over `atoms`; the sampler draws an atom index.
  static StochasticObjective finite_support(std::shared_ptr<const Family> family,
                                            std::vector<VectorType> atoms) {
    if (atoms.empty()) throw UsageError("stochastic objective: empty support");
    auto shared = std::make_shared<const std::vector<VectorType>>(std::move(atoms));
    Scalar lsum = 0;
    for (const auto& a : *shared) lsum += family->lipschitz(a);
    const Scalar lmean = lsum / static_cast<Scalar>(shared->size());
    Sampler sampler = [shared](Rng& rng) -> VectorType {
      const auto n = static_cast<std::uint64_t>(shared->size());
      return (*shared)[static_cast<std::size_t>(uniform_index(rng, n))];
    };
    StochasticObjective obj(std::move(family), std::move(sampler), lmean);
    obj.support_ = shared;
    return obj;
  }

  // Unbiased integer in [0, n) by rejection on 64-bit outputs.
  static std::uint64_t uniform_index(Rng& rng, std::uint64_t n) {
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t r;
    do r = rng();
    while (r >= limit);
    return r % n;
  }

  Eigen::Index dim() const { return family_->dim(); }
  const Family& family() const { return *family_; }
  std::shared_ptr<const Family> family_ptr() const { return family_; }
  VectorType draw(Rng& rng) const { return sampler_(rng); }

  Scalar mean_lipschitz() const { return mean_lipschitz_; }
  InstanceConstants<Scalar>& bounds() { return bounds_; }
  const InstanceConstants<Scalar>& bounds() const { return bounds_; }

  bool has_finite_support() const { return static_cast<bool>(support_); }
  const std::vector<VectorType>& support() const {
    if (!support_) throw UsageError("stochastic objective: no finite support attached");
    return *support_;
  }

  Scalar expected_value(const VectorType& x) const {
    const auto& atoms = support();
    Scalar total = 0;
    for (const auto& a : atoms) total += family_->value(a, x);
    return total / static_cast<Scalar>(atoms.size());
  }

  VectorType expected_gradient(const VectorType& x) const {
    const auto& atoms = support();
    VectorType g = VectorType::Zero(dim());
    const Scalar w = Scalar(1) / static_cast<Scalar>(atoms.size());
    for (const auto& a : atoms) family_->add_gradient(a, x, w, g);
    return g;
  }

  // Monte-Carlo estimate of f(x) over a fixed evaluation set.
  Scalar sample_mean_value(std::span<const VectorType> evaluation_set, const VectorType& x) const {
    if (evaluation_set.empty()) throw UsageError("stochastic objective: empty evaluation set");
    Scalar total = 0;
    for (const auto& xi : evaluation_set) total += family_->value(xi, x);
    return total / static_cast<Scalar>(evaluation_set.size());
  }

 private:
  std::shared_ptr<const Family> family_;
  Sampler sampler_;
  Scalar mean_lipschitz_ = 0;
  std::shared_ptr<const std::vector<VectorType>> support_;
  InstanceConstants<Scalar> bounds_;
};

template <typename Scalar>
struct FiniteSumProblem {
  FiniteSumObjective<Scalar> objective;
  Regularizer<Scalar> regularizer;
  ConstraintMap<Scalar> constraints;

  Eigen::Index dim() const { return objective.dim(); }
};

template <typename Scalar>
struct StochasticProblem {
  StochasticObjective<Scalar> objective;
  Regularizer<Scalar> regularizer;
  ConstraintMap<Scalar> constraints;

  Eigen::Index dim() const { return objective.dim(); }
};

template <typename Problem>
void validate_problem(const Problem& p) {
  const auto n = p.objective.dim();
  if (p.regularizer.dim() != n) throw UsageError("problem: regularizer dimension mismatch");
  if (p.constraints.dim() != n) throw UsageError("problem: constraint dimension mismatch");
}

template <typename Scalar>
InstanceConstants<Scalar> instance_constants(const FiniteSumProblem<Scalar>& p) {
  InstanceConstants<Scalar> k;
  k.lipschitz_f = p.objective.mean_lipschitz();
  k.lipschitz_c2 = constraint_curvature_constant(p.constraints);
  k.diameter = p.regularizer.diameter();
  return k;
}

template <typename Scalar>
InstanceConstants<Scalar> instance_constants(const StochasticProblem<Scalar>& p) {
  InstanceConstants<Scalar> k = p.objective.bounds();
  k.lipschitz_f = p.objective.mean_lipschitz();
  k.lipschitz_c2 = constraint_curvature_constant(p.constraints);
  k.diameter = p.regularizer.diameter();
  return k;
}

namespace detail {
template <typename Scalar>
Scalar regularizer_value_checked(const Regularizer<Scalar>& reg, const Vector<Scalar>& x) {
  if (x.size() != reg.dim()) throw UsageError("point dimension mismatch");
  if (!x.allFinite()) throw DomainError("point has non-finite entries");
  const Scalar v = reg.value(x);
  if (!std::isfinite(v)) throw DomainError("point lies outside the regularizer domain");
  return v;
}
}  // namespace detail

// F(x) = fbar(x) + psi(x), exact.
template <typename Scalar>
Scalar objective_value(const FiniteSumProblem<Scalar>& p, const Vector<Scalar>& x) {
  const Scalar psi = detail::regularizer_value_checked(p.regularizer, x);
  return p.objective.mean_value(x) + psi;
}

// F(x) estimated over the evaluation set.
template <typename Scalar>
Scalar objective_value(const StochasticProblem<Scalar>& p, const Vector<Scalar>& x,
                       std::span<const Vector<Scalar>> evaluation_set) {
  const Scalar psi = detail::regularizer_value_checked(p.regularizer, x);
  return p.objective.sample_mean_value(evaluation_set, x) + psi;
}

template <typename Scalar>
Scalar penalty_value(const FiniteSumProblem<Scalar>& p, const Vector<Scalar>& x, Scalar rho) {
  const Scalar v = constraint_violation(p.constraints, x);
  return objective_value(p, x) + Scalar(0.5) * rho * v * v;
}

template <typename Scalar>
Scalar penalty_value(const StochasticProblem<Scalar>& p, const Vector<Scalar>& x, Scalar rho,
                     std::span<const Vector<Scalar>> evaluation_set) {
  const Scalar v = constraint_violation(p.constraints, x);
  return objective_value(p, x, evaluation_set) + Scalar(0.5) * rho * v * v;
}

// grad fbar(x) + rho grad c(x) [c(x)]_+.
template <typename Scalar>
Vector<Scalar> penalty_gradient_full(const FiniteSumProblem<Scalar>& p, const Vector<Scalar>& x,
                                     Scalar rho) {
  return p.objective.mean_gradient(x) + penalty_gradient_term(p.constraints, x, rho);
}

// Exact only for samplers with an attached finite support.
template <typename Scalar>
Vector<Scalar> penalty_gradient_full(const StochasticProblem<Scalar>& p, const Vector<Scalar>& x,
                                     Scalar rho) {
  if (x.size() != p.dim()) throw UsageError("point dimension mismatch");
  return p.objective.expected_gradient(x) + penalty_gradient_term(p.constraints, x, rho);
}

}  // namespace qpen
