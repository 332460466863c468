#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "rtel/problems/synthetic.hpp"
#include "rtel/tuning.hpp"

using namespace rtel;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// E[C] * E|G|^2 for single-sample weights and perfectly correlated
// Delta_i = sigma_i z, z = +-1, by enumeration over N and z.
double ss_product_correlated(const std::vector<double>& sigma, const std::vector<double>& draw_costs,
                             const std::vector<double>& q) {
  double compute = 0.0;
  double second = 0.0;
  for (std::size_t n = 0; n < q.size(); ++n) {
    compute += q[n] * draw_costs[n];
    if (sigma[n] == 0.0) continue;
    if (q[n] == 0.0) return kInf;
    for (double z : {-1.0, 1.0}) {
      const double g = sigma[n] * z / q[n];
      second += 0.5 * q[n] * g * g;
    }
  }
  return compute * second;
}

// E[C] * E|G|^2 for roulette weights and independent Rademacher signs,
// enumerating N and all 2^H sign patterns.
double rr_product_independent(const std::vector<double>& sigma, const std::vector<double>& draw_costs,
                              const std::vector<double>& q) {
  const int h = static_cast<int>(q.size());
  std::vector<double> tail(h + 1, 0.0);
  for (int n = h - 1; n >= 0; --n) tail[n] = tail[n + 1] + q[n];
  double compute = 0.0;
  for (int n = 0; n < h; ++n) compute += q[n] * draw_costs[n];
  double second = 0.0;
  for (int N = 0; N < h; ++N) {
    if (q[N] == 0.0) continue;
    for (int pattern = 0; pattern < (1 << h); ++pattern) {
      double g = 0.0;
      for (int n = 0; n <= N; ++n) {
        if (sigma[n] == 0.0) continue;
        if (tail[n] <= 0.0) return kInf;
        const double sign = (pattern >> n) & 1 ? 1.0 : -1.0;
        g += sigma[n] * sign / tail[n];
      }
      second += q[N] * g * g / (1 << h);
    }
  }
  for (int n = 0; n < h; ++n) {
    if (sigma[n] > 0.0 && tail[n] <= 0.0) return kInf;
  }
  return compute * second;
}

template <typename F>
double simplex_grid_min(int h, F&& objective) {
  constexpr int kSteps = 100;
  double best = kInf;
  if (h == 2) {
    for (int a = 0; a <= kSteps; ++a) best = std::min(best, objective({a / 100.0, (kSteps - a) / 100.0}));
  } else {
    for (int a = 0; a <= kSteps; ++a) {
      for (int b = 0; a + b <= kSteps; ++b) {
        best = std::min(best, objective({a / 100.0, b / 100.0, (kSteps - a - b) / 100.0}));
      }
    }
  }
  return best;
}

std::vector<double> probs_of(const TruncationDistribution& q) { return {q.probs().begin(), q.probs().end()}; }

// Table of exact squared distances for a scalar sequence with independent
// differences: D[i][j] = sum_{i<m<=j} sigma_m^2.
Eigen::MatrixXd independent_table(const std::vector<double>& sigma) {
  const int h = static_cast<int>(sigma.size());
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(h + 1, h + 1);
  for (int i = 0; i <= h; ++i) {
    for (int j = i + 1; j <= h; ++j) {
      for (int m = i + 1; m <= j; ++m) d(i, j) += sigma[m - 1] * sigma[m - 1];
      d(j, i) = d(i, j);
    }
  }
  return d;
}

Eigen::MatrixXd distances_of(const std::vector<double>& partial_sums) {
  const int h = static_cast<int>(partial_sums.size());
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(h + 1, h + 1);
  for (int i = 0; i <= h; ++i) {
    for (int j = 0; j <= h; ++j) {
      const double gi = i == 0 ? 0.0 : partial_sums[i - 1];
      const double gj = j == 0 ? 0.0 : partial_sums[j - 1];
      d(i, j) = (gi - gj) * (gi - gj);
    }
  }
  return d;
}

}  // namespace

TEST(SquaredDistanceTable, FirstUpdateOverwrites) {
  SquaredDistanceTable table(1, 0.9);
  EXPECT_FALSE(table.initialized());
  Vector g(2);
  g << 3.0, 4.0;
  const std::vector<Vector> grads{g};
  table = update_distances(table, grads);
  EXPECT_DOUBLE_EQ(table(0, 1), 25.0);
  EXPECT_DOUBLE_EQ(table(1, 0), 25.0);
}

TEST(SquaredDistanceTable, EmaArithmetic) {
  SquaredDistanceTable table(1, 0.9);
  Vector g(2);
  g << 3.0, 4.0;
  table = update_distances(table, std::vector<Vector>{g});
  Vector h(2);
  h << 1.0, 2.0;
  table = update_distances(table, std::vector<Vector>{h});
  EXPECT_NEAR(table(0, 1), 23.0, 1e-12);
  EXPECT_EQ(table.update_count(), 2);
}

TEST(SquaredDistanceTable, IdenticalGradientsStayAtZero) {
  SquaredDistanceTable table(3, 0.9);
  Vector g(2);
  g << 1.0, -2.0;
  for (int i = 0; i < 5; ++i) table = update_distances(table, std::vector<Vector>{g, g, g});
  EXPECT_EQ(table(1, 2), 0.0);
  EXPECT_EQ(table(2, 3), 0.0);
  EXPECT_NEAR(table(0, 3), 5.0, 1e-12);
}

TEST(SquaredDistanceTable, RejectsDimensionMismatch) {
  SquaredDistanceTable table(2, 0.9);
  EXPECT_THROW(update_distances(table, std::vector<Vector>{Vector::Zero(2), Vector::Zero(3)}), std::invalid_argument);
  EXPECT_THROW(update_distances(table, std::vector<Vector>{Vector::Zero(2)}), std::invalid_argument);
}

TEST(SquaredDistanceTable, EmaConvergesGeometrically) {
  // Alternating observations 1 and 9 from a stationary source; the EMA error
  // against the fixed point shrinks by alpha per update.
  SquaredDistanceTable table(1, 0.9);
  Vector one(1);
  one << 1.0;
  Vector three(1);
  three << 3.0;
  table = update_distances(table, std::vector<Vector>{three});  // 9
  double previous_gap = std::abs(table(0, 1) - 1.0);
  for (int i = 0; i < 20; ++i) {
    table = update_distances(table, std::vector<Vector>{one});
    const double gap = std::abs(table(0, 1) - 1.0);
    EXPECT_NEAR(gap, 0.9 * previous_gap, 1e-12);
    previous_gap = gap;
  }
}

TEST(Subsequence, Validation) {
  EXPECT_THROW(Subsequence({}, 3), std::invalid_argument);
  EXPECT_THROW(Subsequence({1, 2}, 3), std::invalid_argument);
  EXPECT_THROW(Subsequence({2, 2, 3}, 3), std::invalid_argument);
  EXPECT_THROW(Subsequence({0, 3}, 3), std::invalid_argument);
  const Subsequence s({1, 3}, 3);
  EXPECT_EQ(s[0], 0);
  EXPECT_EQ(s[2], 3);
  EXPECT_TRUE(s.contains(1));
  EXPECT_FALSE(s.contains(2));
}

TEST(OptimalQ, SingleSampleExamples) {
  const double norms[] = {4.0, 1.0};
  const double costs[] = {1.0, 2.0};
  const auto q = optimal_q_ss(norms, costs);
  EXPECT_NEAR(q.prob(1), 0.73880, 5e-6);
  EXPECT_NEAR(q.prob(2), 0.26120, 5e-6);

  const double equal[] = {1.0, 1.0};
  const auto half = optimal_q_ss(equal, equal);
  EXPECT_DOUBLE_EQ(half.prob(1), 0.5);

  const double zero_tail[] = {1.0, 0.0};
  const auto floored = optimal_q_ss(zero_tail, equal);
  EXPECT_GT(floored.prob(2), 0.0);
  EXPECT_NEAR(floored.prob(2), 1e-6, 1e-9);

  const double none[] = {0.0, 0.0};
  EXPECT_THROW(optimal_q_ss(none, equal), std::invalid_argument);
}

TEST(OptimalQ, SingleSampleMatchesGridSearch) {
  // Oracle: brute-force enumeration of E[C] E|G|^2 over a 0.01 simplex grid.
  const std::vector<double> sigma{2.0, 1.0};
  const std::vector<double> costs{1.0, 2.0};
  const std::vector<double> norms{4.0, 1.0};
  const auto q = optimal_q_ss(norms, costs);
  const double closed = ss_product_correlated(sigma, costs, probs_of(q));
  const double grid = simplex_grid_min(2, [&](std::vector<double> p) { return ss_product_correlated(sigma, costs, p); });
  EXPECT_LE(closed, grid * (1 + 1e-12));
  EXPECT_GE(closed, grid * (1 - 1e-3));
}

TEST(OptimalQ, RouletteExamples) {
  const double costs[] = {1.0, 2.0};
  const double equal[] = {1.0, 1.0};
  const auto full = optimal_q_rr(equal, costs);
  EXPECT_NEAR(full.prob(1), 0.0, 1e-15);
  EXPECT_NEAR(full.prob(2), 1.0, 1e-15);

  const double norms[] = {4.0, 1.0};
  const auto half = optimal_q_rr(norms, costs);
  EXPECT_NEAR(half.prob(1), 0.5, 1e-15);
  EXPECT_NEAR(half.prob(2), 0.5, 1e-15);

  const double zero_tail[] = {1.0, 0.0};
  const auto floored = optimal_q_rr(zero_tail, costs);
  EXPECT_NEAR(floored.tail(2), 1e-6, 1e-12);

  const double flat_costs[] = {1.0, 1.0};
  EXPECT_THROW(optimal_q_rr(norms, flat_costs), std::invalid_argument);
}

TEST(OptimalQ, RoulettePoolsIncreasingTargets) {
  // Targets sqrt(1/1)=1, sqrt(9/1)=3 increase; the optimum pools them, Q=[1,1].
  const double norms[] = {1.0, 9.0};
  const double costs[] = {1.0, 2.0};
  const auto q = optimal_q_rr(norms, costs);
  EXPECT_NEAR(q.prob(2), 1.0, 1e-15);
  const std::vector<double> sigma{1.0, 3.0};
  const double closed = rr_product_independent(sigma, {1.0, 2.0}, probs_of(q));
  const double grid =
      simplex_grid_min(2, [&](std::vector<double> p) { return rr_product_independent(sigma, {1.0, 2.0}, p); });
  EXPECT_LE(closed, grid * (1 + 1e-12));
}

TEST(OptimalQ, RouletteMatchesGridSearchOnRandomInstances) {
  Rng rng(41);
  for (int trial = 0; trial < 20; ++trial) {
    const int h = 2 + trial % 2;
    std::vector<double> sigma(h), norms(h), costs(h);
    double c = 0.0;
    for (int n = 0; n < h; ++n) {
      sigma[n] = 0.1 + rng.uniform();
      norms[n] = sigma[n] * sigma[n];
      c += 0.2 + rng.uniform();
      costs[n] = c;
    }
    const auto q = optimal_q_rr(norms, costs);
    const double closed = rr_product_independent(sigma, costs, probs_of(q));
    const double grid = simplex_grid_min(h, [&](std::vector<double> p) { return rr_product_independent(sigma, costs, p); });
    EXPECT_LE(closed, grid * (1 + 1e-12)) << "trial " << trial;
  }
}

TEST(ComputeAndVariance, MatchesExactEnumeration) {
  // Independent-difference table from Delta = [1, 0.5, 0.25].
  const std::vector<double> sigma{1.0, 0.5, 0.25};
  const auto table = SquaredDistanceTable::from_values(independent_table(sigma), 0.9);
  const auto costs = CostModel::linear(3, true);
  const auto s = Subsequence::full(3);

  const auto ss = compute_and_variance(table, costs, s, WeightKind::SingleSample, TruncationDistribution::uniform(3));
  EXPECT_NEAR(ss.expected_squared_norm, 3.9375, 1e-12);
  EXPECT_NEAR(ss.expected_compute, 2.0, 1e-12);
  EXPECT_NEAR(ss.roe, 1.0 / (3.9375 * 2.0), 1e-12);

  const TruncationDistribution q({0.5, 0.25, 0.25});
  const auto rr = compute_and_variance(table, costs, s, WeightKind::RussianRoulette, q);
  EXPECT_NEAR(rr.expected_squared_norm, 1.75, 1e-12);
  EXPECT_NEAR(rr.expected_squared_norm, rr_product_independent(sigma, {1, 1, 1}, probs_of(q)), 1e-12);

  const auto last = compute_and_variance(table, costs, Subsequence::last_only(3), WeightKind::SingleSample,
                                         TruncationDistribution({1.0}));
  EXPECT_DOUBLE_EQ(last.expected_compute, 3.0);
  EXPECT_NEAR(last.expected_squared_norm, table(0, 3), 1e-15);
}

TEST(ComputeAndVariance, SingleSampleAgreesWithEnumerationUnderCorrelation) {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const int h = 2 + trial % 4;
    std::vector<double> sigma(h), sums(h);
    double running = 0.0;
    for (int n = 0; n < h; ++n) {
      sigma[n] = 0.1 + rng.uniform();
      running += sigma[n];
      sums[n] = running;
    }
    // Perfect correlation: G_i = (sum_{m<=i} sigma_m) z, so D[i][j] is the squared partial-sum gap.
    const auto table = SquaredDistanceTable::from_values(distances_of(sums), 0.9);
    const auto costs = CostModel::linear(h, true);
    std::vector<double> raw(h);
    for (auto& x : raw) x = 0.1 + rng.uniform();
    const auto q = TruncationDistribution::normalized(raw);
    const auto stats = compute_and_variance(table, costs, Subsequence::full(h), WeightKind::SingleSample, q);
    const auto w = make_weight_scheme(WeightKind::SingleSample, q);
    const auto exact = enumerate_exact_moments(DifferenceSequence::scalars(sigma), w, q, costs);
    EXPECT_NEAR(stats.expected_squared_norm, exact.expected_squared_norm, 1e-9);
    EXPECT_NEAR(stats.expected_compute, exact.expected_compute, 1e-9);
  }
}

TEST(ComputeAndVariance, RejectsZeroMassOnPositiveDistance) {
  const auto table = SquaredDistanceTable::from_values(independent_table({1.0, 1.0}), 0.9);
  EXPECT_THROW(compute_and_variance(table, CostModel::linear(2), Subsequence::full(2), WeightKind::SingleSample,
                                    TruncationDistribution({1.0, 0.0})),
               std::invalid_argument);
}

TEST(SequenceCost, SingleElementAndHandComputed) {
  const std::vector<double> sigma{1.0, 0.5, 0.25};
  const auto table = SquaredDistanceTable::from_values(independent_table(sigma), 0.9);
  const auto costs = CostModel::linear(3, true);
  EXPECT_NEAR(sequence_cost(table, costs, Subsequence::last_only(3), WeightKind::SingleSample), 3.0 * 1.3125, 1e-12);
  // Full sequence, SS: q proportional to sigma_n / sqrt(n), cost = (sum sigma_n sqrt(n))^2.
  const double root = 1.0 * 1.0 + 0.5 * std::sqrt(2.0) + 0.25 * std::sqrt(3.0);
  EXPECT_NEAR(sequence_cost(table, costs, Subsequence::full(3), WeightKind::SingleSample), root * root, 1e-9);
}

TEST(SequenceCost, ZeroMassIndexCostsAtMostTheFloor) {
  // Level 2 equals level 1, so adding it only pays for floor mass.
  const auto table = SquaredDistanceTable::from_values(independent_table({1.0, 0.0, 0.5}), 0.9);
  const auto costs = CostModel::linear(3, true);
  const double without = sequence_cost(table, costs, Subsequence({1, 3}, 3), WeightKind::SingleSample);
  const double with = sequence_cost(table, costs, Subsequence::full(3), WeightKind::SingleSample);
  EXPECT_LE(with, without * (1 + 1e-4));
}

TEST(GreedySelect, NeverWorseThanEndpointsAndNearExhaustive) {
  Rng rng(77);
  for (int trial = 0; trial < 30; ++trial) {
    const int h = 2 + trial % 5;
    std::vector<double> sigma(h);
    for (int n = 0; n < h; ++n) sigma[n] = std::pow(0.5, n) * (0.2 + rng.uniform());
    const auto table = SquaredDistanceTable::from_values(independent_table(sigma), 0.9);
    CostModel costs;
    costs.reuse = trial % 3 != 0;
    for (int n = 1; n <= h; ++n) costs.costs.push_back(std::ldexp(1.0, n));
    for (auto kind : {WeightKind::SingleSample, WeightKind::RussianRoulette}) {
      const auto chosen = greedy_subsequence_select(table, costs, kind);
      EXPECT_EQ(chosen[chosen.size()], h);
      const double cost = sequence_cost(table, costs, chosen, kind);
      EXPECT_LE(cost, sequence_cost(table, costs, Subsequence::last_only(h), kind) * (1 + 1e-12));
      EXPECT_LE(cost, sequence_cost(table, costs, Subsequence::full(h), kind) * (1 + 1e-12));
      double best = kInf;
      for (int mask = 0; mask < (1 << (h - 1)); ++mask) {
        std::vector<int> idx;
        for (int n = 1; n < h; ++n) {
          if (mask >> (n - 1) & 1) idx.push_back(n);
        }
        idx.push_back(h);
        best = std::min(best, sequence_cost(table, costs, Subsequence(idx, h), kind));
      }
      EXPECT_GE(cost, best * (1 - 1e-12));
    }
  }
}

TEST(GreedySelect, HorizonOne) {
  const auto table = SquaredDistanceTable::from_values(independent_table({1.0}), 0.9);
  EXPECT_EQ(greedy_subsequence_select(table, CostModel::linear(1), WeightKind::SingleSample), Subsequence::full(1));
}

TEST(GreedySelect, FallsBackToFullHorizon) {
  // Intermediate levels far from G_H, G_H itself small.
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(4, 4);
  for (int i = 0; i < 3; ++i) {
    d(i, 3) = d(3, i) = i == 0 ? 0.01 : 100.0;
    for (int j = 0; j < 3; ++j) d(i, j) = i == j ? 0.0 : 100.0;
  }
  const auto table = SquaredDistanceTable::from_values(d, 0.9);
  for (auto kind : {WeightKind::SingleSample, WeightKind::RussianRoulette}) {
    EXPECT_EQ(greedy_subsequence_select(table, CostModel::linear(3), kind), Subsequence::last_only(3));
  }
}

TEST(LearningRate, RatioRule) {
  EXPECT_DOUBLE_EQ(scale_learning_rate(0.01, 3.0, 3.0), 0.01);
  EXPECT_DOUBLE_EQ(scale_learning_rate(0.01, 1.0, 4.0), 0.0025);
  EXPECT_DOUBLE_EQ(scale_learning_rate(0.01, 2.0, 8.0), 0.0025);
  EXPECT_NEAR(scale_learning_rate(0.01, 2.0 * 7.3, 8.0 * 7.3), 0.0025, 1e-18);
  EXPECT_THROW(scale_learning_rate(0.0, 1.0, 1.0), std::invalid_argument);
  EXPECT_THROW(scale_learning_rate(0.01, -1.0, 1.0), std::invalid_argument);
}

TEST(Tune, HorizonOneIsUntruncated) {
  SyntheticSettings settings;
  settings.horizon = 1;
  const SyntheticDecayProblem problem(settings);
  Rng rng(0);
  const auto result = tune(problem, Vector::Ones(settings.dimension), SquaredDistanceTable(1, 0.9),
                           WeightKind::SingleSample, 0.05, rng);
  EXPECT_EQ(result.estimator.subsequence, Subsequence::full(1));
  EXPECT_DOUBLE_EQ(result.estimator.q.prob(1), 1.0);
  EXPECT_DOUBLE_EQ(result.estimator.learning_rate, 0.05);
}

TEST(Tune, ComposesSubOperations) {
  SyntheticSettings settings;
  settings.horizon = 6;
  const SyntheticDecayProblem problem(settings);
  Rng rng(0);
  const Vector theta = Vector::Constant(settings.dimension, 0.3);
  const auto result = tune(problem, theta, SquaredDistanceTable(6, 0.9), WeightKind::SingleSample, 0.1, rng);
  const auto& est = result.estimator;
  const auto expected_q = optimal_q(result.table, problem.cost_model(), est.subsequence, WeightKind::SingleSample);
  ASSERT_EQ(est.q.horizon(), expected_q.horizon());
  for (int n = 1; n <= est.q.horizon(); ++n) EXPECT_DOUBLE_EQ(est.q.prob(n), expected_q.prob(n));
  EXPECT_EQ(est.subsequence, greedy_subsequence_select(result.table, problem.cost_model(), WeightKind::SingleSample));
  EXPECT_NEAR(est.learning_rate, 0.1 * result.table(0, 6) / est.stats.expected_squared_norm, 1e-15);
  EXPECT_TRUE(validate_unbiasedness_constraint(est.weights, est.q).satisfied);
  const auto direct = problem.gradient_at(theta, 6);
  EXPECT_NEAR(result.table(0, 6), direct.squaredNorm(), 1e-12);
}
