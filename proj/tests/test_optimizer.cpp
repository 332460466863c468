#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "rtel/optimizer.hpp"
#include "rtel/problems/synthetic.hpp"

using namespace rtel;

namespace {

// L(theta) = 1/2 |theta - theta*|^2 with G_i exact at every level.
class ExactQuadratic final : public GradientSequence {
 public:
  ExactQuadratic(int horizon, bool reuse) : target_(Vector::Constant(3, 2.0)) {
    costs_.reuse = reuse;
    for (int i = 1; i <= horizon; ++i) costs_.costs.push_back(i);
  }
  std::string name() const override { return "exact_quadratic"; }
  int horizon() const override { return costs_.horizon(); }
  int dimension() const override { return 3; }
  const CostModel& cost_model() const override { return costs_; }
  Vector initial_parameters() const override { return Vector::Zero(3); }
  std::vector<Vector> gradients(const Vector& theta, std::span<const int> levels, Rng&) const override {
    return std::vector<Vector>(levels.size(), theta - target_);
  }
  double loss(const Vector& theta, int, Rng&) const override { return 0.5 * (theta - target_).squaredNorm(); }

 private:
  Vector target_;
  CostModel costs_;
};

SyntheticDecayProblem small_synthetic(bool reuse) {
  SyntheticSettings s;
  s.horizon = 8;
  s.dimension = 3;
  s.reuse = reuse;
  return SyntheticDecayProblem(s);
}

}  // namespace

TEST(EstimatorChoice, ParseAndLabel) {
  EXPECT_EQ(EstimatorChoice::parse("untruncated"), EstimatorChoice::untruncated());
  EXPECT_EQ(EstimatorChoice::parse("fixed:4"), EstimatorChoice::fixed(4));
  EXPECT_EQ(EstimatorChoice::parse("adaptive_rr").mode, EstimatorMode::AdaptiveRussianRoulette);
  EXPECT_EQ(EstimatorChoice::fixed(6).label(), "fixed:6");
  EXPECT_THROW(EstimatorChoice::parse("fixed:"), std::invalid_argument);
  EXPECT_THROW(EstimatorChoice::parse("fixed:0"), std::invalid_argument);
  EXPECT_THROW(EstimatorChoice::parse("fixed:3x"), std::invalid_argument);
  EXPECT_THROW(EstimatorChoice::parse("adaptive"), std::invalid_argument);
}

TEST(ChargeTuning, DoublingWithoutReuse) {
  CostModel costs;
  costs.reuse = false;
  for (int i = 1; i <= 5; ++i) costs.costs.push_back(std::ldexp(1.0, i));
  const auto ledger = charge_tuning(BudgetLedger{}, costs, 5);
  EXPECT_DOUBLE_EQ(ledger.spent, 62.0);
  EXPECT_LT(ledger.spent, 2 * costs.cost(5));
  EXPECT_DOUBLE_EQ(ledger.next_tune, 160.0);
}

TEST(ChargeTuning, ReuseChargesTopLevel) {
  const auto costs = CostModel::linear(7, true);
  BudgetLedger ledger;
  ledger.tuning_frequency = 3;
  ledger = charge_tuning(ledger, costs, 7);
  EXPECT_DOUBLE_EQ(ledger.spent, 7.0);
  EXPECT_DOUBLE_EQ(ledger.next_tune, 21.0);
}

TEST(Run, RejectsBudgetBelowOneTune) {
  const auto problem = small_synthetic(false);
  OptimizerConfig config;
  config.estimator = EstimatorChoice::adaptive(WeightKind::SingleSample);
  try {
    run(problem, config, 0.0);
    FAIL() << "expected an error";
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("budget smaller than one tune"), std::string::npos);
  }
}

TEST(Run, UntruncatedConvergesAndChargesTopLevel) {
  const ExactQuadratic problem(5, true);
  OptimizerConfig config;
  config.reference_rate = 0.5;
  const auto result = run(problem, config, 200.0);
  EXPECT_EQ(result.tunes, 0);
  for (double c : result.charges) EXPECT_DOUBLE_EQ(c, 5.0);
  EXPECT_LT((result.parameters - Vector::Constant(3, 2.0)).norm(), 1e-6);
  double previous = INFINITY;
  for (const auto& r : result.trace) {
    if (!r.is_evaluation()) continue;
    EXPECT_LE(r.evaluation_loss, previous);
    previous = r.evaluation_loss;
  }
}

TEST(Run, FixedTruncationNeverTunes) {
  const auto problem = small_synthetic(true);
  OptimizerConfig config;
  config.estimator = EstimatorChoice::fixed(3);
  const auto result = run(problem, config, 300.0);
  EXPECT_EQ(result.tunes, 0);
  for (double c : result.charges) EXPECT_DOUBLE_EQ(c, 3.0);
  for (const auto& r : result.trace) {
    if (!r.is_evaluation()) EXPECT_EQ(r.truncation_drawn, 3);
  }
}

TEST(Run, FirstActionIsATuneAndScheduleAdvances) {
  const auto problem = small_synthetic(false);
  OptimizerConfig config;
  config.estimator = EstimatorChoice::adaptive(WeightKind::RussianRoulette);
  config.tuning_frequency = 5;
  const auto result = run(problem, config, 2000.0);
  const double tune_charge = 36.0;  // 1 + 2 + ... + 8
  ASSERT_FALSE(result.charges.empty());
  EXPECT_DOUBLE_EQ(result.charges.front(), tune_charge);
  EXPECT_GE(result.tunes, static_cast<int>(2000.0 / (5 * 8.0)) - 1);
  EXPECT_DOUBLE_EQ(result.ledger.next_tune, result.tunes * 5 * 8.0);
}

TEST(Run, BudgetSoundness) {
  for (bool reuse : {true, false}) {
    const auto problem = small_synthetic(reuse);
    for (auto choice : {EstimatorChoice::untruncated(), EstimatorChoice::fixed(2),
                        EstimatorChoice::adaptive(WeightKind::SingleSample),
                        EstimatorChoice::adaptive(WeightKind::RussianRoulette)}) {
      OptimizerConfig config;
      config.estimator = choice;
      config.seed = 3;
      const auto result = run(problem, config, 1500.0);
      const double total = std::accumulate(result.charges.begin(), result.charges.end(), 0.0);
      EXPECT_DOUBLE_EQ(total, result.ledger.spent) << choice.label();
      EXPECT_GE(result.ledger.spent, 1500.0);
      double previous = 0.0;
      for (const auto& r : result.trace) {
        EXPECT_GE(r.budget_spent, previous);
        previous = r.budget_spent;
      }
    }
  }
}

TEST(Run, DeterministicTraces) {
  const auto problem = small_synthetic(false);
  OptimizerConfig config;
  config.estimator = EstimatorChoice::adaptive(WeightKind::SingleSample);
  config.seed = 12;
  const auto a = run(problem, config, 3000.0);
  const auto b = run(problem, config, 3000.0);
  ASSERT_EQ(a.trace.size(), b.trace.size());
  for (std::size_t i = 0; i < a.trace.size(); ++i) {
    EXPECT_EQ(a.trace[i].budget_spent, b.trace[i].budget_spent);
    EXPECT_EQ(a.trace[i].truncation_drawn, b.trace[i].truncation_drawn);
    EXPECT_EQ(a.trace[i].learning_rate, b.trace[i].learning_rate);
    EXPECT_TRUE(a.trace[i].evaluation_loss == b.trace[i].evaluation_loss ||
                (std::isnan(a.trace[i].evaluation_loss) && std::isnan(b.trace[i].evaluation_loss)));
  }
  EXPECT_EQ(a.parameters, b.parameters);
}

TEST(Run, EvaluationCadenceFollowsInterval) {
  const ExactQuadratic problem(4, true);
  OptimizerConfig config;
  config.eval_interval = 20.0;
  const auto result = run(problem, config, 100.0);
  int evaluations = 0;
  for (const auto& r : result.trace) evaluations += r.is_evaluation();
  EXPECT_EQ(evaluations, 5 + 1);
}

TEST(Run, EvalHookReceivesParameters) {
  const ExactQuadratic problem(2, true);
  OptimizerConfig config;
  int calls = 0;
  const auto result = run(problem, config, 10.0, [&](const Vector& theta) {
    ++calls;
    return theta.sum();
  });
  EXPECT_GT(calls, 0);
  EXPECT_DOUBLE_EQ(result.trace.back().evaluation_loss, result.parameters.sum());
}

TEST(Run, SingleStepEstimateIsUnbiased) {
  // A budget of one tune plus a sliver allows exactly one step, so the step
  // reveals the estimate: G = (theta_0 - theta_1) / rate.
  for (bool reuse : {true, false}) {
    const auto problem = small_synthetic(reuse);
    const Vector theta0 = Vector::Constant(3, 0.4);
    const Vector truth = problem.gradient_at(theta0, problem.horizon());
    for (auto kind : {WeightKind::SingleSample, WeightKind::RussianRoulette}) {
      OptimizerConfig config;
      config.estimator = EstimatorChoice::adaptive(kind);
      const double budget = charge_tuning(BudgetLedger{}, problem.cost_model(), problem.horizon()).spent + 1e-9;
      constexpr int kRuns = 10000;
      Vector sum = Vector::Zero(3);
      Vector sum_sq = Vector::Zero(3);
      for (int s = 0; s < kRuns; ++s) {
        config.seed = static_cast<std::uint64_t>(s);
        const auto result = run(problem, config, budget, [](const Vector&) { return 0.0; }, theta0);
        ASSERT_EQ(result.tunes, 1);
        const double rate = result.trace[result.trace.size() - 2].learning_rate;
        const Vector g = (theta0 - result.parameters) / rate;
        sum += g;
        sum_sq += g.cwiseProduct(g);
      }
      const Vector mean = sum / kRuns;
      const Vector var = sum_sq / kRuns - mean.cwiseProduct(mean);
      for (int k = 0; k < 3; ++k) {
        EXPECT_LE(std::abs(mean[k] - truth[k]), 5 * std::sqrt(var[k] / kRuns) + 1e-12)
            << to_string(kind) << " reuse=" << reuse << " coord " << k;
      }
    }
  }
}
