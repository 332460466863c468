#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "rtel/problems/dual.hpp"

namespace rtel {

/// Thrown when an integrated state leaves the finite range.
class IntegrationBlowUp : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr double kBlowUpThreshold = 1e8;

/// Classical fourth-order Runge-Kutta on [t0, t1] over a uniform grid of
/// `steps` points (step size (t1 - t0) / (steps - 1)). Returns the state at
/// every grid point. rhs(t, u) returns du/dt. Works for double and Dual states.
template <typename T, std::size_t M, typename Rhs>
std::vector<std::array<T, M>> rk4_solve(Rhs&& rhs, const std::array<T, M>& u0, double t0, double t1,
                                        int steps, double blow_up = kBlowUpThreshold) {
  if (steps < 2) throw std::invalid_argument("rk4_solve: need at least 2 grid points");
  const double h = (t1 - t0) / (steps - 1);
  std::vector<std::array<T, M>> trajectory;
  trajectory.reserve(static_cast<std::size_t>(steps));
  trajectory.push_back(u0);

  std::array<T, M> stage;
  for (int s = 1; s < steps; ++s) {
    const auto& u = trajectory.back();
    const double t = t0 + (s - 1) * h;
    const auto k1 = rhs(t, u);
    for (std::size_t m = 0; m < M; ++m) stage[m] = u[m] + (0.5 * h) * k1[m];
    const auto k2 = rhs(t + 0.5 * h, stage);
    for (std::size_t m = 0; m < M; ++m) stage[m] = u[m] + (0.5 * h) * k2[m];
    const auto k3 = rhs(t + 0.5 * h, stage);
    for (std::size_t m = 0; m < M; ++m) stage[m] = u[m] + h * k3[m];
    const auto k4 = rhs(t + h, stage);

    std::array<T, M> next;
    for (std::size_t m = 0; m < M; ++m) {
      next[m] = u[m] + (h / 6.0) * (k1[m] + 2.0 * k2[m] + 2.0 * k3[m] + k4[m]);
      const double v = value_of(next[m]);
      if (!std::isfinite(v) || std::abs(v) > blow_up) {
        throw IntegrationBlowUp("rk4_solve: state left the finite range at step " + std::to_string(s));
      }
    }
    trajectory.push_back(next);
  }
  return trajectory;
}

/// Linear interpolation of a uniform-grid trajectory at time t in [t0, t1].
template <typename T, std::size_t M>
std::array<T, M> interpolate(const std::vector<std::array<T, M>>& trajectory, double t0, double t1, double t) {
  const int steps = static_cast<int>(trajectory.size());
  const double h = (t1 - t0) / (steps - 1);
  const double position = (t - t0) / h;
  int index = static_cast<int>(std::floor(position));
  if (index < 0) index = 0;
  if (index > steps - 2) index = steps - 2;
  const double w = position - index;
  std::array<T, M> out;
  for (std::size_t m = 0; m < M; ++m) {
    out[m] = (1.0 - w) * trajectory[static_cast<std::size_t>(index)][m] +
             w * trajectory[static_cast<std::size_t>(index + 1)][m];
  }
  return out;
}

}  // namespace rtel
