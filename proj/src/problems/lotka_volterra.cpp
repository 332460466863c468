#include "rtel/problems/lotka_volterra.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "rtel/problems/rk4.hpp"

namespace rtel {

namespace {

constexpr double kBlowUpLogLikelihood = -1e8;

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

std::vector<std::array<double, 2>> lv_solve(const LvParams& lambda, double t_end, int grid_points) {
  const auto rhs = [&](double, const std::array<double, 2>& u) { return lv_rhs(u, lambda); };
  return rk4_solve(rhs, std::array<double, 2>{lambda[0], lambda[1]}, 0.0, t_end, grid_points);
}

std::string format_row(const char* label, std::span<const double> values) {
  std::string out = label;
  char buf[40];
  for (double v : values) {
    std::snprintf(buf, sizeof buf, " %.17g", v);
    out += buf;
  }
  return out + "\n";
}

}  // namespace

double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }

double softplus_inverse(double y) {
  if (!(y > 0.0)) throw std::invalid_argument("softplus_inverse: argument must be positive");
  return y > 30.0 ? y : y + std::log(-std::expm1(-y));
}

int lv_grid_points(int level) { return (1 << level) + 1; }

std::vector<std::array<Dual<kLvParams>, 2>> lv_solve_with_tangents(const LvParams& lambda, double t_end,
                                                                  int grid_points) {
  using D = Dual<kLvParams>;
  std::array<D, kLvParams> params;
  for (std::size_t k = 0; k < kLvParams; ++k) params[k] = D::variable(lambda[k], k);
  const auto rhs = [&](double, const std::array<D, 2>& u) { return lv_rhs(u, params); };
  return rk4_solve(rhs, std::array<D, 2>{params[0], params[1]}, 0.0, t_end, grid_points);
}

LotkaVolterraDataset generate_lv_dataset(const LotkaVolterraSettings& settings) {
  Rng rng(settings.seed);
  LotkaVolterraDataset data;
  for (std::size_t k = 0; k < kLvParams; ++k) {
    data.true_params[k] = kLvParamLow[k] + (kLvParamHigh[k] - kLvParamLow[k]) * rng.uniform();
  }
  const auto truth = lv_solve(data.true_params, settings.t_end, settings.ground_truth_steps);
  const int count = settings.observation_count;
  for (int k = 0; k < count; ++k) {
    const double t = count == 1 ? settings.t_end : settings.t_end * k / (count - 1);
    data.times.push_back(t);
    const auto u = interpolate(truth, 0.0, settings.t_end, t);
    data.observations.push_back({u[0] + settings.observation_noise * rng.normal(),
                                 u[1] + settings.observation_noise * rng.normal()});
  }
  return data;
}

std::string format_lv_dataset(const LotkaVolterraDataset& dataset, std::uint64_t seed) {
  std::string out = "# lotka_volterra dataset seed " + std::to_string(seed) + "\n";
  out += format_row("true_params", dataset.true_params);
  out += format_row("times", dataset.times);
  std::vector<double> prey;
  std::vector<double> predator;
  for (const auto& y : dataset.observations) {
    prey.push_back(y[0]);
    predator.push_back(y[1]);
  }
  out += format_row("prey", prey);
  out += format_row("predator", predator);
  return out;
}

LotkaVolterraVIProblem::LotkaVolterraVIProblem(LotkaVolterraSettings settings)
    : LotkaVolterraVIProblem(settings, generate_lv_dataset(settings)) {}

LotkaVolterraVIProblem::LotkaVolterraVIProblem(LotkaVolterraSettings settings, LotkaVolterraDataset dataset)
    : settings_(settings), dataset_(std::move(dataset)) {
  if (settings_.horizon < 1 || settings_.horizon > 20) {
    throw std::invalid_argument("lotka_volterra: horizon must lie in [1, 20]");
  }
  if (settings_.batch_size < 1 || settings_.eval_batch_size < 1) {
    throw std::invalid_argument("lotka_volterra: batch sizes must be positive");
  }
  for (std::size_t k = 0; k < kLvParams; ++k) {
    prior_mean_[k] = 0.5 * (kLvParamLow[k] + kLvParamHigh[k]);
    prior_std_[k] = (kLvParamHigh[k] - kLvParamLow[k]) / std::sqrt(12.0);
  }
  costs_.reuse = false;
  for (int i = 1; i <= settings_.horizon; ++i) costs_.costs.push_back(lv_grid_points(i));
}

Vector LotkaVolterraVIProblem::initial_parameters() const {
  Vector theta(dimension());
  for (std::size_t k = 0; k < kLvParams; ++k) {
    theta[static_cast<Eigen::Index>(k)] = softplus_inverse(prior_mean_[k]);
    theta[static_cast<Eigen::Index>(k + kLvParams)] = softplus_inverse(settings_.initial_std);
  }
  return theta;
}

std::vector<LvParams> LotkaVolterraVIProblem::draw_noise(int batch, Rng& rng) {
  std::vector<LvParams> noise(static_cast<std::size_t>(batch));
  for (auto& eps : noise) {
    for (auto& e : eps) e = rng.normal();
  }
  return noise;
}

double LotkaVolterraVIProblem::log_likelihood(const std::vector<std::array<double, 2>>& trajectory) const {
  const double variance = settings_.observation_noise * settings_.observation_noise;
  const double normalizer = -0.5 * std::log(2.0 * std::numbers::pi * variance);
  double total = 0.0;
  for (std::size_t k = 0; k < dataset_.times.size(); ++k) {
    const auto u = interpolate(trajectory, 0.0, settings_.t_end, dataset_.times[k]);
    for (std::size_t c = 0; c < 2; ++c) {
      const double r = dataset_.observations[k][c] - u[c];
      total += normalizer - 0.5 * r * r / variance;
    }
  }
  return total;
}

LotkaVolterraVIProblem::Evaluation LotkaVolterraVIProblem::kl_divergence(const Vector& theta) const {
  Evaluation out;
  out.gradient = Vector::Zero(dimension());
  for (std::size_t k = 0; k < kLvParams; ++k) {
    const auto mi = static_cast<Eigen::Index>(k);
    const auto si = static_cast<Eigen::Index>(k + kLvParams);
    const double mu = softplus(theta[mi]);
    const double sigma = softplus(theta[si]);
    const double m = prior_mean_[k];
    const double s2 = prior_std_[k] * prior_std_[k];
    const double diff = mu - m;
    out.loss += std::log(prior_std_[k] / sigma) + (sigma * sigma + diff * diff) / (2.0 * s2) - 0.5;
    out.gradient[mi] = diff / s2 * sigmoid(theta[mi]);
    out.gradient[si] = (-1.0 / sigma + sigma / s2) * sigmoid(theta[si]);
  }
  return out;
}

LotkaVolterraVIProblem::Evaluation LotkaVolterraVIProblem::negative_elbo(const Vector& theta, int level,
                                                                          std::span<const LvParams> noise) const {
  if (level < 1 || level > settings_.horizon) throw std::out_of_range("lotka_volterra: level out of range");
  if (theta.size() != dimension()) throw std::invalid_argument("lotka_volterra: theta must have 12 entries");
  Evaluation out = kl_divergence(theta);
  if (dataset_.times.empty() || noise.empty()) return out;

  const int grid = lv_grid_points(level);
  const double variance = settings_.observation_noise * settings_.observation_noise;
  const double normalizer = -0.5 * std::log(2.0 * std::numbers::pi * variance);
  const double inv_batch = 1.0 / static_cast<double>(noise.size());

  LvParams mu;
  LvParams sigma;
  for (std::size_t k = 0; k < kLvParams; ++k) {
    mu[k] = softplus(theta[static_cast<Eigen::Index>(k)]);
    sigma[k] = softplus(theta[static_cast<Eigen::Index>(k + kLvParams)]);
  }

  for (const LvParams& eps : noise) {
    LvParams lambda;
    LvParams sign;
    for (std::size_t k = 0; k < kLvParams; ++k) {
      const double z = mu[k] + sigma[k] * eps[k];
      sign[k] = z < 0.0 ? -1.0 : 1.0;
      lambda[k] = std::abs(z);
    }

    double log_lik = 0.0;
    std::array<double, kLvParams> d_lambda{};
    try {
      const auto trajectory = lv_solve_with_tangents(lambda, settings_.t_end, grid);
      for (std::size_t k = 0; k < dataset_.times.size(); ++k) {
        const auto u = interpolate(trajectory, 0.0, settings_.t_end, dataset_.times[k]);
        for (std::size_t c = 0; c < 2; ++c) {
          const double r = dataset_.observations[k][c] - u[c].value;
          log_lik += normalizer - 0.5 * r * r / variance;
          for (std::size_t j = 0; j < kLvParams; ++j) d_lambda[j] += r / variance * u[c].tangent[j];
        }
      }
    } catch (const IntegrationBlowUp&) {
      log_lik = kBlowUpLogLikelihood;
      d_lambda.fill(0.0);
    }

    out.loss -= inv_batch * log_lik;
    for (std::size_t k = 0; k < kLvParams; ++k) {
      const auto mi = static_cast<Eigen::Index>(k);
      const auto si = static_cast<Eigen::Index>(k + kLvParams);
      const double g = d_lambda[k] * sign[k];
      out.gradient[mi] -= inv_batch * g * sigmoid(theta[mi]);
      out.gradient[si] -= inv_batch * g * eps[k] * sigmoid(theta[si]);
    }
  }
  return out;
}

double LotkaVolterraVIProblem::negative_elbo_value(const Vector& theta, int level,
                                                   std::span<const LvParams> noise) const {
  if (level < 1 || level > settings_.horizon) throw std::out_of_range("lotka_volterra: level out of range");
  double loss = kl_divergence(theta).loss;
  if (dataset_.times.empty() || noise.empty()) return loss;
  const int grid = lv_grid_points(level);
  const double inv_batch = 1.0 / static_cast<double>(noise.size());
  for (const LvParams& eps : noise) {
    LvParams lambda;
    for (std::size_t k = 0; k < kLvParams; ++k) {
      lambda[k] = std::abs(softplus(theta[static_cast<Eigen::Index>(k)]) +
                           softplus(theta[static_cast<Eigen::Index>(k + kLvParams)]) * eps[k]);
    }
    double log_lik = kBlowUpLogLikelihood;
    try {
      log_lik = log_likelihood(lv_solve(lambda, settings_.t_end, grid));
    } catch (const IntegrationBlowUp&) {
    }
    loss -= inv_batch * log_lik;
  }
  return loss;
}

LotkaVolterraVIProblem::Evaluation LotkaVolterraVIProblem::negative_elbo(const Vector& theta, int level,
                                                                          int batch, Rng& rng) const {
  const auto noise = draw_noise(batch, rng);
  return negative_elbo(theta, level, noise);
}

std::vector<Vector> LotkaVolterraVIProblem::gradients(const Vector& theta, std::span<const int> levels,
                                                      Rng& rng) const {
  const auto noise = draw_noise(settings_.batch_size, rng);
  std::vector<Vector> out;
  out.reserve(levels.size());
  for (int level : levels) out.push_back(negative_elbo(theta, level, noise).gradient);
  return out;
}

double LotkaVolterraVIProblem::loss(const Vector& theta, int level, Rng& rng) const {
  const auto noise = draw_noise(settings_.eval_batch_size, rng);
  return negative_elbo_value(theta, level, noise);
}

}  // namespace rtel
