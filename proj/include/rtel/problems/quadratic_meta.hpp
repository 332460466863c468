#pragma once

// Learning-rate meta-optimization on a diagonal quadratic inner problem.
//
// The inner loop runs gradient descent on 1/2 sum_k a_k (w_k - b_k)^2 with
// step size eta_t = eta0 (1 + t / tau)^-decay. Level i runs 2^i + 1 inner
// steps and reports the validation loss 1/2 sum_k a_k (w_k - v_k)^2. The meta
// parameters are (eta0, decay).

#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "rtel/problems/gradient_sequence.hpp"

namespace rtel {

/// The inner step size left the stable range eta_t * a_k < 2.
class InnerDivergence : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct QuadraticMetaSettings {
  std::vector<double> curvatures{0.5, 1.0, 2.0, 4.0};
  std::vector<double> train_targets{1.0, -1.0, 0.5, 2.0};
  std::vector<double> validation_targets{1.2, -0.8, 0.3, 1.5};
  std::vector<double> start{0.0, 0.0, 0.0, 0.0};
  double decay_timescale = 10.0;
  int horizon = 8;
  double initial_rate = 0.05;
  double initial_decay = 0.5;
};

int meta_inner_steps(int level);

class QuadraticMetaProblem final : public GradientSequence {
 public:
  explicit QuadraticMetaProblem(QuadraticMetaSettings settings);

  std::string name() const override { return "quadratic_meta"; }
  int horizon() const override { return settings_.horizon; }
  int dimension() const override { return 2; }
  const CostModel& cost_model() const override { return costs_; }
  Vector initial_parameters() const override;

  /// One unroll to the deepest requested level; shallower levels are read off on the way.
  std::vector<Vector> gradients(const Vector& theta, std::span<const int> levels, Rng& rng) const override;
  double loss(const Vector& theta, int level, Rng& rng) const override;

  struct Evaluation {
    double loss = 0.0;
    Vector gradient;
  };

  /// Validation loss and its derivative in (eta0, decay) after `inner_steps`
  /// steps, by forward-mode differentiation of the unrolled loop. Throws
  /// InnerDivergence when a step is unstable.
  Evaluation unrolled(const Vector& theta, int inner_steps) const;
  Evaluation meta_grad(const Vector& theta, int level) const { return unrolled(theta, meta_inner_steps(level)); }

  const QuadraticMetaSettings& settings() const { return settings_; }

 private:
  std::vector<Evaluation> unroll_to(const Vector& theta, std::span<const int> checkpoints) const;

  QuadraticMetaSettings settings_;
  CostModel costs_;
};

}  // namespace rtel
