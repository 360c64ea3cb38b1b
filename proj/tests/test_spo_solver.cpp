#include "generators.hpp"
#include "qpen/spo_solver.hpp"

#include <gtest/gtest.h>

using namespace qpen;
using qpen::testing::Gen;

namespace {

VectorXd scalar(double v) { return VectorXd::Constant(1, v); }

// f(x, xi) = h x^2 / 2 + xi x on [-1, 1] with c(x) = a x + b.
StochasticProblem<double> scalar_problem(double h, std::vector<VectorXd> atoms, double a,
                                         double b, double lambda = 0.0) {
  auto family = std::make_shared<const PerturbedQuadraticFamily>(scalar(h), scalar(0), 0.0);
  auto reg = Regularizer<double>::l1_box(lambda, 1, -1, 1);
  auto c = ConstraintMap<double>::affine(MatrixXd::Constant(1, 1, a), scalar(b), reg);
  return {StochasticObjective<double>::finite_support(family, std::move(atoms)), reg, c};
}

const std::vector<VectorXd> kSingleAtom{scalar(0)};

}  // namespace

TEST(Alg1Step, HandSimulatedStep) {
  const auto p = scalar_problem(0.0, kSingleAtom, 1.0, 0.0);
  auto s = alg1_init(p, scalar(0.5), 0);
  alg1_step(s, p, Alg1Params{1.0, 1.0, 0.25});
  EXPECT_DOUBLE_EQ(s.y[0], 0.5);
  EXPECT_DOUBLE_EQ(s.z[0], 0.375);
  EXPECT_DOUBLE_EQ(s.x[0], 0.375);
  EXPECT_EQ(s.k, 2);
  EXPECT_EQ(s.grad_evals, 1);
}

TEST(Alg1Step, UnitBetaDegenerates) {
  Gen gen(1);
  const auto p = scalar_problem(2.0, {scalar(-0.3), scalar(0.3)}, -1.0, 0.5, 0.1);
  auto s = alg1_init(p, scalar(0.2), 3);
  s.z = scalar(-0.6);
  const VectorXd z_before = s.z;
  alg1_step(s, p, Alg1Params{5.0, 1.0, 0.1});
  EXPECT_EQ(s.y, z_before);
  EXPECT_EQ(s.x, s.z);
}

TEST(Alg1Step, StaysAtUnconstrainedMinimizer) {
  const auto p = scalar_problem(2.0, kSingleAtom, 1.0, -0.5);
  auto s = alg1_init(p, scalar(0.0), 0);
  for (std::int64_t k = 1; k < 20; ++k) alg1_step(s, p, alg1_dynamic(k, 2.0, 1.0));
  EXPECT_EQ(s.x[0], 0.0);
  EXPECT_EQ(s.z[0], 0.0);
}

TEST(Alg1Step, RejectsBadParameters) {
  const auto p = scalar_problem(1.0, kSingleAtom, 1.0, 0.0);
  auto s = alg1_init(p, scalar(0.0), 0);
  EXPECT_THROW(alg1_step(s, p, Alg1Params{1.0, 0.5, 0.1}), UsageError);
  EXPECT_THROW(alg1_step(s, p, Alg1Params{1.0, 1.0, 0.0}), UsageError);
  EXPECT_THROW(alg1_init(p, scalar(1.5), 0), DomainError);
}

TEST(Alg1Step, NonFiniteGradientReportsIteration) {
  const auto p = scalar_problem(1.0, {scalar(NAN)}, 1.0, 0.0);
  auto s = alg1_init(p, scalar(0.0), 0);
  try {
    alg1_step(s, p, Alg1Params{1.0, 1.0, 0.1});
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    EXPECT_EQ(e.outer(), 1);
  }
}

TEST(Alg1Step, IteratesStayInBox) {
  Gen gen(2);
  for (int trial = 0; trial < 20; ++trial) {
    const auto fs = gen.finite_sum(4, 6, 2, trial % 2 == 0);
    StochasticProblem<double> p{
        StochasticObjective<double>::finite_support(fs.objective.family_ptr(), fs.objective.samples()),
        fs.regularizer, fs.constraints};
    auto s = alg1_init(p, gen.point_in(p.regularizer), static_cast<std::uint64_t>(trial));
    const auto sched = make_alg1_schedule(p, ScheduleKind::dynamic, 0);
    for (std::int64_t k = 1; k < 200; ++k) {
      alg1_step(s, p, sched(k));
      ASSERT_TRUE(p.regularizer.contains(s.x));
      ASSERT_TRUE(p.regularizer.contains(s.y));
      ASSERT_TRUE(p.regularizer.contains(s.z));
    }
  }
}

TEST(RunAlgorithm1, GradientCountIsKMinusOne) {
  const auto qp = toy_qp_1d(0.5);
  for (std::int64_t K : {2, 3, 17, 100}) {
    const auto sched = make_alg1_schedule(qp.stochastic, ScheduleKind::constant, K);
    const auto rec = run_algorithm1(qp.stochastic, sched, scalar(0.0), K, 1, 1,
                                    std::span<const VectorXd>(qp.evaluation_set));
    EXPECT_EQ(rec.grad_evals, K - 1);
    EXPECT_EQ(rec.rows.back().k, K);
    EXPECT_EQ(rec.rows.back().grad_evals, K - 1);
  }
}

TEST(RunAlgorithm1, SameSeedIsBitwiseIdentical) {
  const auto qp = toy_qp_5d(0.3);
  const auto sched = make_alg1_schedule(qp.stochastic, ScheduleKind::dynamic, 300);
  auto run = [&](std::uint64_t seed) {
    return run_algorithm1(qp.stochastic, sched, VectorXd::Zero(5), 300, seed, 10,
                          std::span<const VectorXd>(qp.evaluation_set));
  };
  const auto a = run(42);
  const auto b = run(42);
  const auto c = run(43);
  EXPECT_EQ(a.rows, b.rows);
  EXPECT_EQ(a.final_point, b.final_point);
  EXPECT_NE(a.final_point, c.final_point);
}

TEST(RunAlgorithm1, RecordingCadenceDoesNotChangeTrajectory) {
  const auto qp = toy_qp_5d(0.3);
  const auto sched = make_alg1_schedule(qp.stochastic, ScheduleKind::constant, 101);
  const auto set = std::span<const VectorXd>(qp.evaluation_set);
  const auto a = run_algorithm1(qp.stochastic, sched, VectorXd::Zero(5), 101, 7, 1, set);
  const auto b = run_algorithm1(qp.stochastic, sched, VectorXd::Zero(5), 101, 7, 25, set);
  EXPECT_EQ(a.final_point, b.final_point);
  ASSERT_EQ(b.rows.size(), 6u);  // 1, 25, 50, 75, 100, 101
  for (const auto& row : b.rows) EXPECT_EQ(row, a.rows[static_cast<std::size_t>(row.k - 1)]);
}

TEST(RunAlgorithm1, RowsCarryScheduleRho) {
  const auto qp = toy_qp_1d(0.5);
  const std::int64_t K = 40;
  const auto sched = make_alg1_schedule(qp.stochastic, ScheduleKind::dynamic, K);
  const auto rec = run_algorithm1(qp.stochastic, sched, scalar(0.0), K, 1, 1,
                                  std::span<const VectorXd>(qp.evaluation_set));
  EXPECT_EQ(rec.rows[0].rho, sched(1).rho);
  for (std::size_t i = 1; i < rec.rows.size(); ++i) {
    EXPECT_EQ(rec.rows[i].rho, sched(rec.rows[i].k - 1).rho);
    EXPECT_GT(rec.rows[i].grad_evals, rec.rows[i - 1].grad_evals);
    EXPECT_GE(rec.rows[i].rho, rec.rows[i - 1].rho);
  }
}

TEST(RunAlgorithm1, Preconditions) {
  const auto qp = toy_qp_1d(0.5);
  const auto sched = make_alg1_schedule(qp.stochastic, ScheduleKind::dynamic, 10);
  const std::vector<VectorXd> empty;
  EXPECT_THROW(run_algorithm1(qp.stochastic, sched, scalar(0.0), 10, 1, 1,
                              std::span<const VectorXd>(empty)),
               UsageError);
  EXPECT_THROW(run_algorithm1(qp.stochastic, sched, scalar(0.0), 1, 1, 1,
                              std::span<const VectorXd>(qp.evaluation_set)),
               UsageError);
  EXPECT_THROW(make_alg1_schedule(qp.stochastic, ScheduleKind::constant, 1), UsageError);
}

TEST(RunAlgorithm1, DeterministicPenaltyGapShrinksWithHorizon) {
  // Single atom and lambda = 0: a deterministic accelerated penalty method.
  const auto qp = toy_qp_5d(0.0);
  auto gap_at = [&](std::int64_t K) {
    const auto sched = make_alg1_schedule(qp.stochastic, ScheduleKind::constant, K);
    const auto rec = run_algorithm1(qp.stochastic, sched, VectorXd::Zero(5), K, 0, K,
                                    std::span<const VectorXd>(qp.evaluation_set));
    const auto& last = rec.rows.back();
    return last.penalty_objective - qp.penalty_optimum(last.rho);
  };
  const double g50 = gap_at(50);
  const double g200 = gap_at(200);
  const double g800 = gap_at(800);
  EXPECT_GE(g50, -1e-12);
  EXPECT_LT(g200, g50);
  EXPECT_LT(g800, g200);
}

TEST(RunAlgorithm1, ScaledSyntheticViolationDecays) {
  const auto inst = generate_synthetic_stochastic({20, 10, 2000, 0.1}, 11);
  const std::int64_t K = 2000;
  const auto sched = make_alg1_schedule(inst.problem, ScheduleKind::dynamic, K);
  const auto rec = run_algorithm1(inst.problem, sched, VectorXd::Zero(21), K, 3, K / 4,
                                  std::span<const VectorXd>(inst.evaluation_set));
  ASSERT_EQ(rec.rows.size(), 5u);
  EXPECT_EQ(rec.rows[1].k, K / 4);
  EXPECT_LT(rec.rows.back().violation, rec.rows[1].violation);
}
