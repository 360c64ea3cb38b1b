#pragma once

// Experiment families: constrained logistic regression with core-sample
// margin constraints, in a stochastic (Gaussian generative model) and a
// finite-sum (LIBSVM dataset) flavor, plus small quadratic programs whose
// optimum, multiplier and penalty optimum are known in closed form.

#include "qpen/problem_core.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace qpen {

// Numerically stable log(1 + exp(-m)).
double logistic_loss(double margin);
// 1 / (1 + exp(-t)) without overflow.
double sigmoid(double t);

// One negative log-likelihood term l(w, b) = log(1 + exp(-y (w'x + b)))
// with decision variable (w; b).
class LogisticComponent {
 public:
  LogisticComponent(VectorXd features, int label);

  double value(const VectorXd& wb) const;
  VectorXd gradient(const VectorXd& wb) const;
  double lipschitz() const;
  double margin(const VectorXd& wb) const;

 private:
  VectorXd features_;
  double label_;
};

LogisticComponent logistic_component(const VectorXd& features, int label);

// L_i = ||(x_i; 1)||^2 / 4.
double component_lipschitz(const VectorXd& features);

// Payload layout: (features; label), so x has dimension n + 1 = payload size.
class LogisticFamily final : public ComponentFamily<double> {
 public:
  explicit LogisticFamily(Eigen::Index n_features) : n_(n_features) {}

  Eigen::Index dim() const override { return n_ + 1; }
  double value(const VectorXd& xi, const VectorXd& x) const override;
  void add_gradient(const VectorXd& xi, const VectorXd& x, double weight,
                    VectorXd& out) const override;
  double lipschitz(const VectorXd& xi) const override;

  static VectorXd payload(const VectorXd& features, int label);

 private:
  Eigen::Index n_;
};

// f(x, xi) = x' diag(h) x / 2 + (g + xi)' x + c0. Mean-zero payloads make
// the mean function the unperturbed quadratic.
class PerturbedQuadraticFamily final : public ComponentFamily<double> {
 public:
  PerturbedQuadraticFamily(VectorXd curvature, VectorXd linear, double offset);

  Eigen::Index dim() const override { return h_.size(); }
  double value(const VectorXd& xi, const VectorXd& x) const override;
  void add_gradient(const VectorXd& xi, const VectorXd& x, double weight,
                    VectorXd& out) const override;
  double lipschitz(const VectorXd& xi) const override;

 private:
  VectorXd h_;
  VectorXd g_;
  double c0_;
};

struct LabeledDataset {
  std::vector<VectorXd> features;
  std::vector<int> labels;
  Eigen::Index dim = 0;

  std::size_t count() const { return labels.size(); }
  // First `count` samples.
  LabeledDataset head(std::size_t count) const;
};

// LIBSVM sparse text: "label idx:val idx:val ..." with 1-based indices.
// `dim` overrides the inferred dimension (it must cover every index seen).
LabeledDataset parse_libsvm(std::istream& in, std::optional<Eigen::Index> dim = std::nullopt);
LabeledDataset load_libsvm(const std::string& path,
                           std::optional<Eigen::Index> dim = std::nullopt);
void write_libsvm(std::ostream& out, const LabeledDataset& data);

// Indices of the `m` samples with smallest |w'x + b| (ties by index).
std::vector<std::size_t> closest_to_boundary(const std::vector<VectorXd>& features,
                                             const VectorXd& w, double b, std::size_t m);

// sgn with sgn(0) = +1.
int sign_label(double t);

// Rows c_i(w, b) = -y_i (w'x_i + b) for the given core samples.
ConstraintMap<double> margin_constraints(const std::vector<VectorXd>& core_features,
                                         const std::vector<int>& core_labels,
                                         const Regularizer<double>& domain);

struct SyntheticOptions {
  Eigen::Index n = 100;
  std::size_t m = 50;
  std::size_t pool = 10000;
  double lambda = 0.1;
};

struct SyntheticInstance {
  StochasticProblem<double> problem;
  // The generated pool, used as the fixed Monte-Carlo evaluation set.
  std::vector<VectorXd> evaluation_set;
  VectorXd w_hat;
  double b_hat = 0;
  std::vector<std::size_t> core_indices;
  // A strictly-in-box point satisfying every constraint.
  VectorXd feasible_point;
  SyntheticOptions options;
  std::uint64_t seed = 0;
};

SyntheticInstance generate_synthetic_stochastic(const SyntheticOptions& options,
                                                std::uint64_t seed);

// Sampler of the logistic generative model: X ~ N(0, I_n),
// P(Y = 1 | X = x) = sigmoid(w_hat'x + b_hat).
StochasticObjective<double>::Sampler logistic_model_sampler(VectorXd w_hat, double b_hat);

struct FiniteSumOptions {
  double lambda = 0.03;
  std::size_t m = 50;
  // Iterations of the accelerated full-gradient warm solve.
  std::int64_t reference_budget = 2000;
};

struct FiniteSumInstance {
  FiniteSumProblem<double> problem;
  VectorXd reference;  // (w_hat; b_hat) of the unconstrained solve
  bool reference_converged = false;
  std::int64_t reference_iterations = 0;
  std::vector<std::size_t> core_indices;
  FiniteSumOptions options;
};

FiniteSumProblem<double> logistic_finite_sum(const LabeledDataset& data,
                                             const Regularizer<double>& reg,
                                             ConstraintMap<double> constraints);

FiniteSumInstance build_finitesum_constrained(const LabeledDataset& data,
                                              const FiniteSumOptions& options);

// Quadratic programs with closed-form optimum. The stochastic form samples
// uniformly over the listed perturbations; the finite-sum form has one
// component per perturbation (a single zero perturbation gives s = 1).
struct ToyQp {
  StochasticProblem<double> stochastic;
  FiniteSumProblem<double> finite_sum;
  std::vector<VectorXd> evaluation_set;  // the full support
  double optimal_value = 0;               // F*
  double multiplier_norm = 0;             // Lambda
  VectorXd solution;
  std::function<double(double)> penalty_optimum;  // rho -> F_rho*
  std::function<VectorXd(double)> penalty_minimizer;
};

// min x^2 s.t. 1 - x <= 0 over [-2, 2]; noise xi in {-sigma, +sigma}
// perturbs the linear term. F* = 1, Lambda = 2, F_rho* = rho / (rho + 2).
ToyQp toy_qp_1d(double noise = 0.5);

// min ||x - a||^2 / 2 over [-1, 1]^5 with two orthogonal affine rows, both
// active at the optimum; noise +-noise e_j on the linear term.
ToyQp toy_qp_5d(double noise = 0.0);

// Portable instance files (JSON: dense arrays plus metadata).
using LoadedInstance = std::variant<SyntheticInstance, FiniteSumInstance>;

void save_instance(const std::string& path, const SyntheticInstance& instance);
void save_instance(const std::string& path, const FiniteSumInstance& instance);
LoadedInstance load_instance(const std::string& path);

}  // namespace qpen
