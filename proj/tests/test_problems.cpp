#include "generators.hpp"
#include "qpen/problems.hpp"

#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace qpen;
using qpen::testing::Gen;

namespace {

VectorXd with_one(const VectorXd& x) {
  VectorXd d(x.size() + 1);
  d << x, 1.0;
  return d;
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("qpen_test_" + name)).string();
}

}  // namespace

TEST(Logistic, ZeroWeights) {
  const VectorXd x = (VectorXd(3) << 0.5, -1.0, 2.0).finished();
  for (int y : {-1, 1}) {
    const auto c = logistic_component(x, y);
    EXPECT_NEAR(c.value(VectorXd::Zero(4)), std::log(2.0), 1e-15);
    EXPECT_LT((c.gradient(VectorXd::Zero(4)) + 0.5 * y * with_one(x)).norm(), 1e-15);
  }
}

TEST(Logistic, SaturatesWithoutOverflow) {
  const VectorXd x = VectorXd::Constant(1, 1.0);
  for (double m : {700.0, 650.0, 40.0}) {
    const auto c = logistic_component(x, 1);
    const VectorXd wb = (VectorXd(2) << m / 2, m / 2).finished();
    EXPECT_GE(c.value(wb), 0.0);
    EXPECT_LT(c.value(wb), 1e-16);
    EXPECT_LT(c.gradient(wb).norm(), 1e-16);
    const auto neg = logistic_component(x, -1);
    EXPECT_NEAR(neg.value(wb), m, 1e-9);
    EXPECT_TRUE(neg.gradient(wb).allFinite());
    EXPECT_NEAR(neg.gradient(wb)[0], 1.0, 1e-12);
  }
  EXPECT_EQ(sigmoid(-800), 0.0);
  EXPECT_EQ(sigmoid(800), 1.0);
  EXPECT_NEAR(logistic_loss(-800), 800.0, 1e-9);
}

TEST(Logistic, GradientMatchesCentralDifferences) {
  Gen gen(1);
  for (int trial = 0; trial < 100; ++trial) {
    const auto n = gen.integer(1, 8);
    const VectorXd x = gen.gaussian(n);
    const auto c = logistic_component(x, gen.coin() ? 1 : -1);
    const VectorXd wb = gen.vector(n + 1, -1, 1);
    const VectorXd g = c.gradient(wb);
    VectorXd fd(n + 1);
    const double h = 1e-6;
    for (Eigen::Index j = 0; j <= n; ++j) {
      VectorXd a = wb, b = wb;
      a[j] += h;
      b[j] -= h;
      fd[j] = (c.value(a) - c.value(b)) / (2 * h);
    }
    EXPECT_LE((g - fd).norm(), 1e-6 * std::max(1.0, g.norm()));
  }
}

TEST(Logistic, RejectsNonBinaryLabel) {
  EXPECT_THROW(logistic_component(VectorXd::Zero(2), 0), UsageError);
  EXPECT_THROW(logistic_component(VectorXd::Zero(2), 2), UsageError);
}

TEST(Logistic, FamilyMatchesComponent) {
  Gen gen(2);
  const LogisticFamily fam(4);
  for (int trial = 0; trial < 20; ++trial) {
    const VectorXd x = gen.gaussian(4);
    const int y = gen.coin() ? 1 : -1;
    const VectorXd xi = LogisticFamily::payload(x, y);
    const VectorXd wb = gen.vector(5, -1, 1);
    const auto c = logistic_component(x, y);
    EXPECT_NEAR(fam.value(xi, wb), c.value(wb), 1e-14);
    EXPECT_LT((fam.gradient(xi, wb) - c.gradient(wb)).norm(), 1e-14);
    EXPECT_EQ(fam.lipschitz(xi), c.lipschitz());
  }
}

TEST(ComponentLipschitz, Examples) {
  EXPECT_EQ(component_lipschitz(VectorXd::Zero(3)), 0.25);
  EXPECT_EQ(component_lipschitz(VectorXd::Ones(2)), 0.75);
}

TEST(ComponentLipschitz, BoundsHessianNorm) {
  Gen gen(3);
  for (int trial = 0; trial < 100; ++trial) {
    const auto n = gen.integer(1, 6);
    const VectorXd x = gen.gaussian(n);
    const VectorXd wb = gen.vector(n + 1, -2, 2);
    const int y = gen.coin() ? 1 : -1;
    const double m = y * wb.dot(with_one(x));
    const double s = 1.0 / (1.0 + std::exp(-m));
    const MatrixXd H = s * (1 - s) * with_one(x) * with_one(x).transpose();
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(H);
    EXPECT_LE(eig.eigenvalues().cwiseAbs().maxCoeff(), component_lipschitz(x) * (1 + 1e-12));
  }
}

TEST(Synthetic, FeasibleByConstruction) {
  const auto inst = generate_synthetic_stochastic({8, 5, 300, 0.1}, 1);
  EXPECT_TRUE(inst.problem.regularizer.contains(inst.feasible_point));
  EXPECT_EQ(constraint_violation(inst.problem.constraints, inst.feasible_point), 0.0);
  EXPECT_EQ(inst.problem.constraints.rows(), 5);
  EXPECT_EQ(inst.evaluation_set.size(), 300u);
  EXPECT_EQ(inst.core_indices.size(), 5u);
}

TEST(Synthetic, DefaultOptions) {
  const SyntheticOptions o;
  EXPECT_EQ(o.n, 100);
  EXPECT_EQ(o.m, 50u);
  EXPECT_EQ(o.pool, 10000u);
  EXPECT_EQ(o.lambda, 0.1);
  const auto inst = generate_synthetic_stochastic(o, 0);
  EXPECT_EQ(inst.problem.dim(), 101);
  EXPECT_EQ(inst.problem.constraints.rows(), 50);
  EXPECT_EQ(inst.evaluation_set.size(), 10000u);
}

TEST(Synthetic, NoCoreSamplesMeansUnconstrained) {
  const auto inst = generate_synthetic_stochastic({4, 0, 50, 0.1}, 2);
  Gen gen(4);
  for (int i = 0; i < 50; ++i)
    EXPECT_EQ(constraint_violation(inst.problem.constraints, gen.point_in(inst.problem.regularizer)), 0.0);
}

TEST(Synthetic, RejectsBadOptions) {
  EXPECT_THROW(generate_synthetic_stochastic({4, 60, 50, 0.1}, 0), UsageError);
  EXPECT_THROW(generate_synthetic_stochastic({0, 1, 50, 0.1}, 0), UsageError);
  EXPECT_THROW(generate_synthetic_stochastic({4, 1, 50, -0.1}, 0), UsageError);
}

TEST(Synthetic, Deterministic) {
  const auto a = generate_synthetic_stochastic({5, 3, 100, 0.1}, 9);
  const auto b = generate_synthetic_stochastic({5, 3, 100, 0.1}, 9);
  const auto c = generate_synthetic_stochastic({5, 3, 100, 0.1}, 10);
  EXPECT_EQ(a.evaluation_set, b.evaluation_set);
  EXPECT_EQ(a.problem.constraints.A(), b.problem.constraints.A());
  EXPECT_EQ(a.w_hat, b.w_hat);
  EXPECT_NE(a.w_hat, c.w_hat);
  Rng ra = make_stream(5, 1), rb = make_stream(5, 1);
  EXPECT_EQ(a.problem.objective.draw(ra), b.problem.objective.draw(rb));
}

TEST(Synthetic, DomainAndConstraintConstants) {
  const auto inst = generate_synthetic_stochastic({6, 4, 200, 0.1}, 3);
  const auto& p = inst.problem;
  EXPECT_NEAR(p.regularizer.diameter(), 2 * std::sqrt(7.0), 1e-14);
  EXPECT_TRUE((p.regularizer.lower().array() == -1).all());
  EXPECT_TRUE((p.regularizer.upper().array() == 1).all());
  EXPECT_EQ(p.regularizer.l1_weights()[6], 0.0);
  EXPECT_EQ(p.regularizer.l1_weights()[0], 0.1);
  const auto& C = p.constraints.constants().value_bound;
  Gen gen(5);
  for (int trial = 0; trial < 1000; ++trial) {
    const VectorXd c = p.constraints.value(gen.point_in(p.regularizer));
    for (Eigen::Index i = 0; i < c.size(); ++i) ASSERT_LE(std::abs(c[i]), C[i] * (1 + 1e-12));
  }
  double lc2 = 0;
  for (std::size_t idx : inst.core_indices) lc2 += with_one(inst.evaluation_set[idx].head(6)).squaredNorm();
  EXPECT_NEAR(constraint_curvature_constant(p.constraints), lc2, 1e-10 * lc2);
}

TEST(Synthetic, CoreLabelsAgreeWithReferenceBoundary) {
  const auto inst = generate_synthetic_stochastic({5, 12, 400, 0.1}, 4);
  const auto& A = inst.problem.constraints.A();
  for (Eigen::Index i = 0; i < A.rows(); ++i) {
    // row = -y (x; 1), so y (w'x + b) = -row . (w; b)
    EXPECT_GE(-A.row(i).dot(inst.feasible_point), 0.0);
  }
  // the selected samples are the m closest to the boundary
  std::vector<double> dist;
  for (const auto& xi : inst.evaluation_set)
    dist.push_back(std::abs(inst.w_hat.dot(xi.head(5)) + inst.b_hat));
  double worst_core = 0;
  for (std::size_t idx : inst.core_indices) worst_core = std::max(worst_core, dist[idx]);
  std::size_t closer = 0;
  for (double d : dist) closer += d <= worst_core ? 1 : 0;
  EXPECT_EQ(closer, 12u);
}

TEST(Synthetic, ModelSamplerFrequencies) {
  VectorXd w = VectorXd::Zero(2);
  const auto sampler = logistic_model_sampler(w, 2.0);
  Rng rng = make_stream(0, 1);
  int positive = 0;
  const int N = 20000;
  for (int i = 0; i < N; ++i) positive += sampler(rng)[2] > 0 ? 1 : 0;
  EXPECT_NEAR(positive / double(N), sigmoid(2.0), 0.015);
}

TEST(SignLabel, ZeroIsPositive) {
  EXPECT_EQ(sign_label(0.0), 1);
  EXPECT_EQ(sign_label(-0.0), 1);
  EXPECT_EQ(sign_label(-1e-300), -1);
  EXPECT_EQ(sign_label(3.0), 1);
}

TEST(ClosestToBoundary, TiesBrokenByIndex) {
  std::vector<VectorXd> f{VectorXd::Constant(1, 1.0), VectorXd::Constant(1, -1.0),
                          VectorXd::Constant(1, 0.5), VectorXd::Constant(1, -0.5)};
  const auto idx = closest_to_boundary(f, VectorXd::Constant(1, 1.0), 0.0, 3);
  EXPECT_EQ(idx, (std::vector<std::size_t>{2, 3, 0}));
}

TEST(Libsvm, ParsesSparseLines) {
  std::istringstream in("+1 3:0.5 7:1\n-1\n\n-1 1:2\n");
  const auto d = parse_libsvm(in);
  ASSERT_EQ(d.count(), 3u);
  EXPECT_EQ(d.dim, 7);
  EXPECT_EQ(d.labels, (std::vector<int>{1, -1, -1}));
  VectorXd first = VectorXd::Zero(7);
  first[2] = 0.5;
  first[6] = 1.0;
  EXPECT_EQ(d.features[0], first);
  EXPECT_EQ(d.features[1], VectorXd::Zero(7));
  EXPECT_EQ(d.features[2][0], 2.0);
}

TEST(Libsvm, ErrorsCarryLineNumbers) {
  auto line_of = [](const std::string& text) -> std::size_t {
    std::istringstream in(text);
    try {
      parse_libsvm(in);
    } catch (const ParseError& e) {
      return e.line();
    }
    return 0;
  };
  EXPECT_EQ(line_of("+1 1:1\n-1 2:x\n"), 2u);
  EXPECT_EQ(line_of("+1 1:1\n+1 1:1\n0 1:1\n"), 3u);
  EXPECT_EQ(line_of("2 1:1\n"), 1u);
  EXPECT_EQ(line_of("+1 0:1\n"), 1u);
  EXPECT_EQ(line_of("+1 3\n"), 1u);
  EXPECT_EQ(line_of("abc 3:1\n"), 1u);
}

TEST(Libsvm, DimensionOverride) {
  std::istringstream in("+1 3:0.5\n");
  EXPECT_EQ(parse_libsvm(in, 123).dim, 123);
  std::istringstream small("+1 3:0.5\n");
  EXPECT_THROW(parse_libsvm(small, 2), UsageError);
}

TEST(Libsvm, WriteReadRoundTrip) {
  Gen gen(6);
  LabeledDataset d;
  d.dim = 9;
  for (int i = 0; i < 30; ++i) {
    VectorXd x = VectorXd::Zero(9);
    for (int j = 0; j < 3; ++j) x[gen.integer(0, 8)] = gen.normal();
    d.features.push_back(x);
    d.labels.push_back(gen.coin() ? 1 : -1);
  }
  std::stringstream ss;
  write_libsvm(ss, d);
  const auto back = parse_libsvm(ss, 9);
  EXPECT_EQ(back.labels, d.labels);
  EXPECT_EQ(back.features, d.features);
  EXPECT_EQ(d.head(4).count(), 4u);
  EXPECT_EQ(d.head(4).features[3], d.features[3]);
}

TEST(FiniteSum, DefaultOptions) {
  const FiniteSumOptions o;
  EXPECT_EQ(o.lambda, 0.03);
  EXPECT_EQ(o.m, 50u);
  EXPECT_EQ(o.reference_budget, 2000);
}

namespace {

LabeledDataset random_dataset(Gen& gen, std::size_t count, Eigen::Index dim) {
  LabeledDataset d;
  d.dim = dim;
  const VectorXd w = gen.gaussian(dim);
  for (std::size_t i = 0; i < count; ++i) {
    VectorXd x = gen.gaussian(dim);
    d.labels.push_back(uniform01(gen.rng()) < sigmoid(w.dot(x)) ? 1 : -1);
    d.features.push_back(std::move(x));
  }
  return d;
}

}  // namespace

TEST(FiniteSum, ReferencePairIsFeasible) {
  Gen gen(7);
  const auto data = random_dataset(gen, 300, 5);
  const auto inst = build_finitesum_constrained(data, {0.03, 20, 500});
  EXPECT_EQ(inst.problem.objective.count(), 300u);
  EXPECT_EQ(inst.problem.constraints.rows(), 20);
  EXPECT_TRUE(inst.problem.regularizer.contains(inst.reference));
  EXPECT_EQ(constraint_violation(inst.problem.constraints, inst.reference), 0.0);
  EXPECT_EQ(inst.problem.regularizer.l1_weights()[5], 0.0);
  EXPECT_EQ(inst.problem.regularizer.l1_weights()[0], 0.03);
  double lc2 = 0;
  for (std::size_t idx : inst.core_indices) lc2 += with_one(data.features[idx]).squaredNorm();
  EXPECT_NEAR(constraint_curvature_constant(inst.problem.constraints), lc2, 1e-10 * lc2);
}

TEST(FiniteSum, EverySampleAsConstraint) {
  Gen gen(8);
  const auto data = random_dataset(gen, 40, 3);
  const auto inst = build_finitesum_constrained(data, {0.03, 40, 200});
  EXPECT_EQ(inst.problem.constraints.rows(), 40);
  EXPECT_EQ(constraint_violation(inst.problem.constraints, inst.reference), 0.0);
  EXPECT_THROW(build_finitesum_constrained(data, {0.03, 41, 200}), UsageError);
}

TEST(FiniteSum, ComponentLipschitzConstants) {
  Gen gen(9);
  const auto data = random_dataset(gen, 25, 4);
  const auto p = logistic_finite_sum(data, Regularizer<double>::l1_box(0.0, 5, -1, 1, 1),
                                     ConstraintMap<double>::none(5));
  for (std::size_t i = 0; i < 25; ++i)
    EXPECT_DOUBLE_EQ(p.objective.lipschitz(i), (data.features[i].squaredNorm() + 1) / 4);
}

TEST(ToyQp, OneDimensionalClosedForms) {
  const auto qp = toy_qp_1d(0.5);
  EXPECT_EQ(qp.optimal_value, 1.0);
  EXPECT_EQ(qp.multiplier_norm, 2.0);
  for (double rho : {1.0, 10.0, 137.0}) {
    double best = INFINITY;
    for (int i = 0; i <= 400000; ++i) {
      const VectorXd x = VectorXd::Constant(1, -2.0 + 4.0 * i / 400000);
      best = std::min(best, penalty_value(qp.finite_sum, x, rho));
    }
    EXPECT_NEAR(qp.penalty_optimum(rho), best, 1e-9);
    EXPECT_NEAR(penalty_value(qp.finite_sum, qp.penalty_minimizer(rho), rho), best, 1e-9);
  }
}

TEST(ToyQp, FiveDimensionalClosedForms) {
  const auto qp = toy_qp_5d(0.3);
  const auto& p = qp.stochastic;
  EXPECT_NEAR(qp.optimal_value, 0.2225, 1e-15);
  EXPECT_EQ(constraint_violation(p.constraints, qp.solution), 0.0);
  EXPECT_TRUE(p.regularizer.contains(qp.solution));
  EXPECT_NEAR(p.objective.expected_value(qp.solution), qp.optimal_value, 1e-14);
  Gen gen(10);
  for (int trial = 0; trial < 20000; ++trial) {
    const VectorXd x = gen.point_in(p.regularizer);
    if (constraint_violation(p.constraints, x) == 0)
      ASSERT_GE(p.objective.expected_value(x), qp.optimal_value - 1e-12);
    for (double rho : {2.0, 50.0})
      ASSERT_GE(penalty_value(qp.finite_sum, x, rho), qp.penalty_optimum(rho) - 1e-12);
  }
  for (double rho : {2.0, 50.0, 1000.0}) {
    const VectorXd xr = qp.penalty_minimizer(rho);
    EXPECT_NEAR(penalty_value(qp.finite_sum, xr, rho), qp.penalty_optimum(rho), 1e-13);
    EXPECT_LT(penalty_gradient_full(p, xr, rho).norm(), 1e-12);
  }
  // Lambda is the norm of the multipliers: grad F(x*) + A' lambda = 0.
  const VectorXd g = p.objective.expected_gradient(qp.solution);
  const MatrixXd& A = p.constraints.A();
  const VectorXd lambda = A.transpose().colPivHouseholderQr().solve(-g);
  EXPECT_LT((A.transpose() * lambda + g).norm(), 1e-13);
  EXPECT_TRUE((lambda.array() >= 0).all());
  EXPECT_NEAR(lambda.norm(), qp.multiplier_norm, 1e-13);
}

TEST(ToyQp, FiniteSumMatchesStochasticMean) {
  for (double noise : {0.0, 0.4}) {
    const auto qp = toy_qp_5d(noise);
    Gen gen(11);
    const VectorXd x = gen.point_in(qp.finite_sum.regularizer);
    EXPECT_NEAR(qp.finite_sum.objective.mean_value(x), qp.stochastic.objective.expected_value(x), 1e-14);
  }
  EXPECT_EQ(toy_qp_5d(0.0).finite_sum.objective.count(), 1u);
  EXPECT_EQ(toy_qp_1d(0.0).finite_sum.objective.count(), 1u);
}

TEST(InstanceFiles, SyntheticRoundTrip) {
  const auto inst = generate_synthetic_stochastic({4, 3, 60, 0.1}, 12);
  const auto path = temp_path("synthetic.json");
  save_instance(path, inst);
  const auto loaded = std::get<SyntheticInstance>(load_instance(path));
  std::filesystem::remove(path);
  EXPECT_EQ(loaded.evaluation_set, inst.evaluation_set);
  EXPECT_EQ(loaded.problem.constraints.A(), inst.problem.constraints.A());
  EXPECT_EQ(loaded.problem.regularizer.l1_weights(), inst.problem.regularizer.l1_weights());
  EXPECT_EQ(loaded.w_hat, inst.w_hat);
  Gen gen(12);
  const VectorXd x = gen.point_in(inst.problem.regularizer);
  const std::span<const VectorXd> set(inst.evaluation_set);
  EXPECT_EQ(loaded.problem.objective.sample_mean_value(set, x),
            inst.problem.objective.sample_mean_value(set, x));
  Rng ra = make_stream(1, 1), rb = make_stream(1, 1);
  EXPECT_EQ(loaded.problem.objective.draw(ra), inst.problem.objective.draw(rb));
}

TEST(InstanceFiles, FiniteSumRoundTrip) {
  Gen gen(13);
  const auto data = random_dataset(gen, 50, 3);
  const auto inst = build_finitesum_constrained(data, {0.03, 5, 200});
  const auto path = temp_path("finitesum.json");
  save_instance(path, inst);
  const auto loaded = std::get<FiniteSumInstance>(load_instance(path));
  std::filesystem::remove(path);
  EXPECT_EQ(loaded.problem.objective.samples(), inst.problem.objective.samples());
  EXPECT_EQ(loaded.problem.constraints.A(), inst.problem.constraints.A());
  EXPECT_EQ(loaded.reference, inst.reference);
  const VectorXd x = gen.point_in(inst.problem.regularizer);
  EXPECT_EQ(objective_value(loaded.problem, x), objective_value(inst.problem, x));
}

TEST(InstanceFiles, BadFilesAreReported) {
  EXPECT_THROW(load_instance(temp_path("does_not_exist.json")), UsageError);
  const auto path = temp_path("bad.json");
  {
    std::ofstream out(path);
    out << "{\"kind\": \"nonsense\"}";
  }
  EXPECT_ANY_THROW(load_instance(path));
  std::filesystem::remove(path);
}
