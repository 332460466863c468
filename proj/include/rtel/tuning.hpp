#pragma once

// Online tuning of randomized telescope estimators.
//
// Squared distances E|G_i - G_j|^2 between base levels are tracked with an
// exponential moving average. From them a subsequence of levels, a sampling
// distribution and a learning rate are chosen to maximize the relative
// optimization efficiency 1 / (E[compute] * E|G|^2).

#include <Eigen/Dense>

#include <span>
#include <vector>

#include "rtel/problems/gradient_sequence.hpp"
#include "rtel/rng.hpp"
#include "rtel/telescope.hpp"

namespace rtel {

/// Floor applied to sampling probabilities (single sample) and tail
/// probabilities (Russian roulette) so every difference term stays reachable.
inline constexpr double kProbabilityFloor = 1e-6;

/// Symmetric (H+1)x(H+1) table of squared distances; index 0 is the zero gradient.
class SquaredDistanceTable {
 public:
  SquaredDistanceTable(int base_horizon, double decay);

  /// Wraps known values, e.g. exact squared distances. Marks the table initialized.
  static SquaredDistanceTable from_values(Eigen::MatrixXd values, double decay);

  int base_horizon() const { return static_cast<int>(values_.rows()) - 1; }
  double decay() const { return decay_; }
  int update_count() const { return updates_; }
  bool initialized() const { return updates_ > 0; }
  double operator()(int i, int j) const { return values_(i, j); }
  const Eigen::MatrixXd& values() const { return values_; }

 private:
  friend SquaredDistanceTable update_distances(const SquaredDistanceTable&, std::span<const Vector>);

  Eigen::MatrixXd values_;
  double decay_;
  int updates_ = 0;
};

/// EMA update with |G_i - G_j|^2 for 0 <= i < j <= H, G_0 = 0. The first
/// update stores the observed distances directly.
SquaredDistanceTable update_distances(const SquaredDistanceTable& table,
                                      std::span<const Vector> gradients);

/// Strictly increasing base levels ending at the base horizon.
class Subsequence {
 public:
  Subsequence(std::vector<int> indices, int base_horizon);

  static Subsequence full(int base_horizon);
  static Subsequence last_only(int base_horizon);

  int size() const { return static_cast<int>(indices_.size()); }
  int base_horizon() const { return base_horizon_; }
  /// S[i] for i = 1..size(); S[0] = 0 stands for the zero gradient.
  int operator[](int i) const { return i == 0 ? 0 : indices_[static_cast<std::size_t>(i - 1)]; }
  std::span<const int> indices() const { return indices_; }
  bool contains(int level) const;

  friend bool operator==(const Subsequence&, const Subsequence&) = default;

 private:
  std::vector<int> indices_;
  int base_horizon_;
};

struct EstimatorStats {
  double expected_compute = 0.0;
  double expected_squared_norm = 0.0;
  /// 1 / (expected_compute * expected_squared_norm); infinite when the
  /// squared norm is zero.
  double roe = 0.0;

  static EstimatorStats from(double expected_compute, double expected_squared_norm);
};

struct TunedEstimator {
  Subsequence subsequence;
  TruncationDistribution q;
  WeightScheme weights;
  EstimatorStats stats;
  double learning_rate;
};

/// q(n) proportional to sqrt(E|Delta_n|^2 / C(n)), floored and renormalized.
/// Optimal for single-sample weights under worst-case correlation.
TruncationDistribution optimal_q_ss(std::span<const double> delta_norms, std::span<const double> costs,
                                    double floor = kProbabilityFloor);

/// Tail probabilities Q(i) proportional to sqrt(E|Delta_i|^2 / (C(i) - C(i-1))),
/// optimal for Russian roulette weights under independent differences. When
/// those targets are not nonincreasing, adjacent violators are pooled (each
/// pool takes sqrt(sum E|Delta|^2 / sum cost increments)), which is the
/// exact optimum under the monotonicity constraint. Q(1) = 1, tails floored,
/// q(i) = Q(i) - Q(i+1). `costs` are cumulative draw costs and must increase.
TruncationDistribution optimal_q_rr(std::span<const double> delta_norms, std::span<const double> costs,
                                    double floor = kProbabilityFloor);

/// D[S[i-1]][S[i]] for i = 1..|S|.
std::vector<double> consecutive_distances(const SquaredDistanceTable& table, const Subsequence& subsequence);

/// Cost of one draw truncated at position N of the subsequence, for N = 1..|S|.
///
/// With reuse this is C(S[N]). Without reuse a single-sample draw evaluates
/// levels S[N-1] and S[N]; a Russian roulette draw evaluates S[1..N].
std::vector<double> subsequence_draw_costs(const CostModel& base_costs, const Subsequence& subsequence,
                                           WeightKind kind);

/// Expected compute and expected squared norm of the estimator on S with
/// sampling distribution q, from the distance table. Single sample:
/// sum_i D[S[i-1]][S[i]] / q(i). Russian roulette: sum_i D[S[i-1]][S[i]] / Q(i).
EstimatorStats compute_and_variance(const SquaredDistanceTable& table, const CostModel& base_costs,
                                    const Subsequence& subsequence, WeightKind kind,
                                    const TruncationDistribution& q);

/// The closed-form q for S and kind.
TruncationDistribution optimal_q(const SquaredDistanceTable& table, const CostModel& base_costs,
                                 const Subsequence& subsequence, WeightKind kind);

/// Inverse ROE of S with its optimal q. Lower is better. Zero when every
/// consecutive distance along S vanishes.
double sequence_cost(const SquaredDistanceTable& table, const CostModel& base_costs,
                     const Subsequence& subsequence, WeightKind kind);

/// Greedy add from [H] and greedy removal from [1..H], first improving move
/// accepted in increasing index order; returns the cheaper finalist.
Subsequence greedy_subsequence_select(const SquaredDistanceTable& table, const CostModel& base_costs,
                                      WeightKind kind);

/// reference_rate * reference_squared_norm / estimator_squared_norm.
double scale_learning_rate(double reference_rate, double reference_squared_norm,
                           double estimator_squared_norm);

struct TuneResult {
  SquaredDistanceTable table;
  TunedEstimator estimator;
};

/// Evaluates G_1..G_H at theta, updates the table and rebuilds the estimator.
/// Uses the first table.base_horizon() levels of the problem.
TuneResult tune(const GradientSequence& problem, const Vector& theta, const SquaredDistanceTable& table,
                WeightKind kind, double reference_rate, Rng& rng);

/// Builds the estimator for an already-updated table.
TunedEstimator build_estimator(const SquaredDistanceTable& table, const CostModel& base_costs,
                               WeightKind kind, double reference_rate);

}  // namespace rtel
