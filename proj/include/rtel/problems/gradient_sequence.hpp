#pragma once

#include <span>
#include <string>
#include <vector>

#include "rtel/rng.hpp"
#include "rtel/telescope.hpp"

namespace rtel {

/// A sequence of gradient approximations G_1(theta), ..., G_H(theta) of
/// increasing fidelity and cost, converging to the gradient of interest at H.
class GradientSequence {
 public:
  virtual ~GradientSequence() = default;

  virtual std::string name() const = 0;
  virtual int horizon() const = 0;
  virtual int dimension() const = 0;
  /// C(i) for i = 1..horizon() and whether level i reuses the work of lower levels.
  virtual const CostModel& cost_model() const = 0;
  virtual Vector initial_parameters() const = 0;

  /// G_i(theta) for every requested level. Stochastic problems draw their
  /// randomness once per call from rng and share it across the levels.
  virtual std::vector<Vector> gradients(const Vector& theta, std::span<const int> levels,
                                        Rng& rng) const = 0;

  /// Evaluation loss L_i(theta).
  virtual double loss(const Vector& theta, int level, Rng& rng) const = 0;

  Vector gradient(const Vector& theta, int level, Rng& rng) const {
    const int levels[] = {level};
    return std::move(gradients(theta, levels, rng).front());
  }
};

}  // namespace rtel
