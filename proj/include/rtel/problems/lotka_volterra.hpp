#pragma once

// Variational inference for the parameters of a Lotka-Volterra system.
//
// Parameters lambda = (u1(0), u2(0), A, B, C, D). Level i of the gradient
// sequence solves the ODE with RK4 on 2^i + 1 grid points and interpolates
// linearly to the observation times.

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "rtel/problems/dual.hpp"
#include "rtel/problems/gradient_sequence.hpp"

namespace rtel {

inline constexpr std::size_t kLvParams = 6;
using LvParams = std::array<double, kLvParams>;

/// Bounds of the uniform distribution the true parameters are drawn from.
inline constexpr LvParams kLvParamLow{1.0, 0.4, 0.8, 0.4, 1.5, 0.4};
inline constexpr LvParams kLvParamHigh{1.5, 0.6, 1.2, 0.6, 2.0, 0.6};

/// (A u1 - B u1 u2, C u1 u2 - D u2).
template <typename T, typename P>
std::array<T, 2> lv_rhs(const std::array<T, 2>& u, const std::array<P, kLvParams>& lambda) {
  const T interaction = u[0] * u[1];
  return {lambda[2] * u[0] - lambda[3] * interaction, lambda[4] * interaction - lambda[5] * u[1]};
}

struct LotkaVolterraSettings {
  std::uint64_t seed = 0;
  int horizon = 8;
  int observation_count = 5;
  double t_end = 5.0;
  double observation_noise = 0.1;
  int ground_truth_steps = 10000;
  int batch_size = 64;
  int eval_batch_size = 512;
  double initial_std = 0.1;
};

struct LotkaVolterraDataset {
  LvParams true_params{};
  std::vector<double> times;
  std::vector<std::array<double, 2>> observations;
};

/// Draws the true parameters, solves the system on the ground-truth grid and
/// adds observation noise, all from settings.seed.
LotkaVolterraDataset generate_lv_dataset(const LotkaVolterraSettings& settings);

/// Plain-text record: true parameters, observation times and values.
std::string format_lv_dataset(const LotkaVolterraDataset& dataset, std::uint64_t seed);

/// Grid points used at level i: 2^i + 1.
int lv_grid_points(int level);

/// State trajectory with tangents with respect to the six parameters.
std::vector<std::array<Dual<kLvParams>, 2>> lv_solve_with_tangents(const LvParams& lambda, double t_end,
                                                                  int grid_points);

double softplus(double x);
double softplus_inverse(double y);

class LotkaVolterraVIProblem final : public GradientSequence {
 public:
  explicit LotkaVolterraVIProblem(LotkaVolterraSettings settings);
  LotkaVolterraVIProblem(LotkaVolterraSettings settings, LotkaVolterraDataset dataset);

  std::string name() const override { return "lotka_volterra"; }
  int horizon() const override { return settings_.horizon; }
  int dimension() const override { return 2 * static_cast<int>(kLvParams); }
  const CostModel& cost_model() const override { return costs_; }
  /// Mean at the prior mean, standard deviation settings.initial_std.
  Vector initial_parameters() const override;

  std::vector<Vector> gradients(const Vector& theta, std::span<const int> levels, Rng& rng) const override;
  /// Negative ELBO at the evaluation batch size.
  double loss(const Vector& theta, int level, Rng& rng) const override;

  struct Evaluation {
    double loss = 0.0;
    Vector gradient;
  };

  /// Negative ELBO and its gradient for fixed standard-normal draws, one
  /// LvParams per Monte-Carlo sample.
  Evaluation negative_elbo(const Vector& theta, int level, std::span<const LvParams> noise) const;
  /// Negative ELBO without derivatives.
  double negative_elbo_value(const Vector& theta, int level, std::span<const LvParams> noise) const;
  Evaluation negative_elbo(const Vector& theta, int level, int batch, Rng& rng) const;

  /// Closed-form KL(q || prior) between diagonal Gaussians and its gradient in theta.
  Evaluation kl_divergence(const Vector& theta) const;

  const LotkaVolterraDataset& dataset() const { return dataset_; }
  const LotkaVolterraSettings& settings() const { return settings_; }
  const LvParams& prior_mean() const { return prior_mean_; }
  const LvParams& prior_std() const { return prior_std_; }

  static std::vector<LvParams> draw_noise(int batch, Rng& rng);

 private:
  double log_likelihood(const std::vector<std::array<double, 2>>& trajectory) const;

  LotkaVolterraSettings settings_;
  LotkaVolterraDataset dataset_;
  LvParams prior_mean_{};
  LvParams prior_std_{};
  CostModel costs_;
};

}  // namespace rtel
