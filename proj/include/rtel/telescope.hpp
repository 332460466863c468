#pragma once

// Randomized telescope estimators.
//
// A quantity Y_H = sum_{n<=H} Delta_n is estimated by drawing a truncation
// index N ~ q and returning sum_{n<=N} Delta_n * W(n, N). The estimate is
// unbiased whenever sum_{N>=n} W(n, N) q(N) = 1 for every n.
//
// Indices n, N are 1-based throughout this header, matching the usual
// statement of the estimator; storage is 0-based internally.

#include <Eigen/Dense>

#include <initializer_list>
#include <span>
#include <vector>

#include "rtel/rng.hpp"

namespace rtel {

using Vector = Eigen::VectorXd;

/// Residual tolerance for the unbiasedness constraint.
inline constexpr double kConstraintTolerance = 1e-10;

/// Evaluation cost C(n) for n = 1..H plus the compute-reuse flag.
///
/// With reuse, evaluating level n subsumes every level below it (an unrolled
/// loop with fixed step size). Without reuse each level is evaluated
/// separately (an ODE solved at a different resolution per level).
struct CostModel {
  std::vector<double> costs;
  bool reuse = true;

  /// C(n) = n.
  static CostModel linear(int horizon, bool reuse = true);

  int horizon() const { return static_cast<int>(costs.size()); }
  double cost(int n) const { return costs.at(static_cast<std::size_t>(n - 1)); }
};

/// Probability vector q over truncation indices 1..H.
class TruncationDistribution {
 public:
  /// Throws std::invalid_argument unless the entries are finite, nonnegative
  /// and sum to one within 1e-12.
  explicit TruncationDistribution(std::vector<double> probs);

  /// Normalizes nonnegative weights.
  static TruncationDistribution normalized(std::span<const double> weights);
  static TruncationDistribution uniform(int horizon);
  static TruncationDistribution point_mass(int horizon, int index);
  /// q(n) proportional to ratio^n.
  static TruncationDistribution geometric(int horizon, double ratio);
  /// q(n) proportional to n^(-exponent).
  static TruncationDistribution polynomial(int horizon, double exponent);

  int horizon() const { return static_cast<int>(probs_.size()); }
  double prob(int n) const { return probs_[static_cast<std::size_t>(n - 1)]; }
  /// Q(n) = Pr(N >= n).
  double tail(int n) const { return tails_[static_cast<std::size_t>(n - 1)]; }
  std::span<const double> probs() const { return probs_; }

 private:
  std::vector<double> probs_;
  std::vector<double> tails_;
};

enum class WeightKind { SingleSample, RussianRoulette, Explicit };

const char* to_string(WeightKind kind);

/// The weight function W(n, N).
class WeightScheme {
 public:
  /// weights(n-1, N-1) holds W(n, N); entries with n > N are ignored.
  static WeightScheme explicit_matrix(Eigen::MatrixXd weights);

  WeightKind kind() const { return kind_; }
  int horizon() const { return horizon_; }
  double operator()(int n, int N) const;

 private:
  friend WeightScheme make_weight_scheme(WeightKind, const TruncationDistribution&);
  WeightScheme() = default;

  WeightKind kind_ = WeightKind::Explicit;
  int horizon_ = 0;
  Eigen::MatrixXd matrix_;
  // 1/q(n) for single-sample, 1/Q(n) for Russian roulette.
  std::vector<double> factors_;
};

/// Builds the single-sample (W = 1/q(N) on the diagonal) or Russian roulette
/// (W = 1/Pr(N >= n) for N >= n) scheme. Throws std::invalid_argument when q
/// leaves some difference term with zero sampling probability, since no
/// weighting can then be unbiased. Explicit is rejected here.
WeightScheme make_weight_scheme(WeightKind kind, const TruncationDistribution& q);

struct ConstraintCheck {
  bool satisfied = false;
  double max_residual = 0.0;
};

/// max_n |sum_{N>=n} W(n,N) q(N) - 1| against kConstraintTolerance.
ConstraintCheck validate_unbiasedness_constraint(const WeightScheme& weights,
                                                 const TruncationDistribution& q);

/// Inverse-CDF draw: the first N whose left-to-right cumulative probability
/// strictly exceeds a uniform variate.
int sample_truncation(const TruncationDistribution& q, Rng& rng);

/// Terms Delta_1..Delta_H of a telescoping series, Delta_1 = Y_1.
class DifferenceSequence {
 public:
  explicit DifferenceSequence(std::vector<Vector> terms);
  static DifferenceSequence from_partial_sums(std::span<const Vector> partial_sums);
  static DifferenceSequence scalars(std::span<const double> terms);
  static DifferenceSequence scalars(std::initializer_list<double> terms) {
    return scalars(std::span<const double>(terms.begin(), terms.size()));
  }

  int horizon() const { return static_cast<int>(terms_.size()); }
  int dimension() const { return static_cast<int>(terms_.front().size()); }
  const Vector& operator[](int n) const { return terms_[static_cast<std::size_t>(n - 1)]; }
  /// Y_N.
  Vector partial_sum(int N) const;
  Vector total() const { return partial_sum(horizon()); }

 private:
  std::vector<Vector> terms_;
};

struct RtSample {
  int truncation_index = 0;
  Vector estimate;
  double compute_charged = 0.0;
};

/// Compute spent on one draw with truncation N: C(N) under reuse, otherwise
/// the cost of every level whose value enters sum_{n<=N} Delta_n W(n,N), i.e.
/// levels n with W(n,N) != 0 or W(n+1,N) != 0.
double draw_cost(const WeightScheme& weights, const CostModel& costs, int N);

/// sum_{n<=N} Delta_n W(n, N).
Vector weighted_partial_sum(const DifferenceSequence& deltas, const WeightScheme& weights, int N);

RtSample rt_estimate(const DifferenceSequence& deltas, const WeightScheme& weights,
                     const TruncationDistribution& q, Rng& rng, const CostModel& costs);

/// Charges with C(n) = n and reuse.
RtSample rt_estimate(const DifferenceSequence& deltas, const WeightScheme& weights,
                     const TruncationDistribution& q, Rng& rng);

struct ExactMoments {
  Vector mean;
  double expected_squared_norm = 0.0;
  double expected_compute = 0.0;
};

/// Exact E[G], E|G|^2 and E[compute] by summing over every truncation index.
/// Throws std::invalid_argument when the horizon exceeds max_horizon.
ExactMoments enumerate_exact_moments(const DifferenceSequence& deltas, const WeightScheme& weights,
                                     const TruncationDistribution& q, const CostModel& costs,
                                     int max_horizon = 20);

}  // namespace rtel
