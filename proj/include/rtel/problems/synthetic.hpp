#pragma once

// Quadratic objective whose gradient is approached by a sequence with
// prescribed difference norms |Delta_n| = psi_n for n >= 2.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rtel/problems/gradient_sequence.hpp"

namespace rtel {

enum class DecayMode { Polynomial, Geometric };

enum class CostSchedule { Linear, Doubling };

struct SyntheticSettings {
  DecayMode mode = DecayMode::Geometric;
  /// p: the decay exponent (polynomial, psi_n = c n^-p) or ratio (geometric, psi_n = c p^n).
  double rate = 0.5;
  double scale = 1.0;
  int dimension = 4;
  int horizon = 30;
  std::uint64_t seed = 0;
  double curvature_min = 0.5;
  double curvature_max = 2.0;
  /// All tail directions equal (the first basis vector) instead of random.
  bool aligned_directions = false;
  CostSchedule costs = CostSchedule::Linear;
  bool reuse = true;
};

/// psi_n for the given decay.
double decay_bound(DecayMode mode, double rate, double scale, int n);

/// Generalized harmonic number sum_{n<=H} n^-order.
double generalized_harmonic(int horizon, double order);

/// zeta(order) for order > 1: 10^6 terms plus an Euler-Maclaurin tail.
double zeta_by_partial_sums(double order);

struct TheoremBounds {
  double compute = 0.0;
  double squared_norm = 0.0;
};

/// Bounds on expected compute and E|G|^2 for the single-sample estimator with
/// q proportional to n^-(p+1/2) (polynomial) or p^n (geometric). An empty
/// horizon means the infinite-horizon limit, finite for polynomial decay only
/// when p > 3/2.
TheoremBounds theorem_bounds(DecayMode mode, double rate, double scale, std::optional<int> horizon);

class SyntheticDecayProblem final : public GradientSequence {
 public:
  explicit SyntheticDecayProblem(SyntheticSettings settings);

  std::string name() const override { return "synthetic"; }
  int horizon() const override { return settings_.horizon; }
  int dimension() const override { return settings_.dimension; }
  const CostModel& cost_model() const override { return costs_; }
  Vector initial_parameters() const override { return Vector::Zero(settings_.dimension); }

  std::vector<Vector> gradients(const Vector& theta, std::span<const int> levels, Rng& rng) const override;
  /// 1/2 (theta - theta*)^T A (theta - theta*) - tail_i^T theta; level H is the objective itself.
  double loss(const Vector& theta, int level, Rng& rng) const override;

  /// G_i(theta) = A (theta - theta*) - sum_{m>i} psi_m u_m.
  Vector gradient_at(const Vector& theta, int level) const;
  /// sum_{m>i} psi_m: closed form for geometric decay, direct sum otherwise.
  double tail_mass(int level) const;
  double psi(int n) const { return decay_bound(settings_.mode, settings_.rate, settings_.scale, n); }

  const Eigen::MatrixXd& curvature() const { return curvature_; }
  const Vector& optimum() const { return optimum_; }
  const SyntheticSettings& settings() const { return settings_; }

 private:
  SyntheticSettings settings_;
  Eigen::MatrixXd curvature_;
  Vector optimum_;
  // tails_[i] = sum_{m>i} psi_m u_m for i = 0..H.
  std::vector<Vector> tails_;
  CostModel costs_;
};

}  // namespace rtel
