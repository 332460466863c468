#include "rtel/problems/synthetic.hpp"

#include <cmath>
#include <stdexcept>

namespace rtel {

double decay_bound(DecayMode mode, double rate, double scale, int n) {
  return mode == DecayMode::Geometric ? scale * std::pow(rate, n) : scale * std::pow(n, -rate);
}

double generalized_harmonic(int horizon, double order) {
  double sum = 0.0;
  // Smallest terms first.
  for (int n = horizon; n >= 1; --n) sum += std::pow(n, -order);
  return sum;
}

double zeta_by_partial_sums(double order) {
  if (!(order > 1.0)) throw std::invalid_argument("zeta: order must exceed 1");
  constexpr int kTerms = 1'000'000;
  const double m = kTerms;
  const double tail = std::pow(m, 1.0 - order) / (order - 1.0) - 0.5 * std::pow(m, -order) +
                      order / 12.0 * std::pow(m, -order - 1.0);
  return generalized_harmonic(kTerms, order) + tail;
}

TheoremBounds theorem_bounds(DecayMode mode, double rate, double scale, std::optional<int> horizon) {
  if (!(scale > 0.0)) throw std::invalid_argument("theorem_bounds: scale must be positive");
  double root = 0.0;
  if (mode == DecayMode::Geometric) {
    if (!(rate > 0.0 && rate < 1.0)) throw std::invalid_argument("theorem_bounds: geometric ratio must lie in (0, 1)");
    root = 1.0 / (1.0 - rate);
  } else {
    if (!(rate > 0.0)) throw std::invalid_argument("theorem_bounds: polynomial exponent must be positive");
    const double order = rate - 0.5;
    if (horizon) {
      if (*horizon < 1) throw std::invalid_argument("theorem_bounds: horizon must be >= 1");
      root = generalized_harmonic(*horizon, order);
    } else {
      if (!(rate > 1.5)) {
        throw std::invalid_argument("theorem_bounds: infinite-horizon bound is finite only for exponent > 3/2");
      }
      root = zeta_by_partial_sums(order);
    }
  }
  return {root * root, scale * scale * root * root};
}

SyntheticDecayProblem::SyntheticDecayProblem(SyntheticSettings settings) : settings_(settings) {
  const int d = settings_.dimension;
  const int horizon = settings_.horizon;
  if (d < 1 || horizon < 1) throw std::invalid_argument("synthetic: dimension and horizon must be positive");
  if (settings_.mode == DecayMode::Geometric && !(settings_.rate > 0.0 && settings_.rate < 1.0)) {
    throw std::invalid_argument("synthetic: geometric ratio must lie in (0, 1)");
  }
  if (settings_.mode == DecayMode::Polynomial && !(settings_.rate > 0.0)) {
    throw std::invalid_argument("synthetic: polynomial exponent must be positive");
  }
  if (!(settings_.curvature_min > 0.0) || settings_.curvature_max < settings_.curvature_min) {
    throw std::invalid_argument("synthetic: curvature range must be positive and ordered");
  }

  Rng rng(settings_.seed);
  Eigen::MatrixXd gaussian(d, d);
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) gaussian(i, j) = rng.normal();
  }
  const Eigen::HouseholderQR<Eigen::MatrixXd> qr(gaussian);
  const Eigen::MatrixXd rotation = qr.householderQ();
  Vector eigenvalues(d);
  for (Eigen::Index i = 0; i < d; ++i) {
    eigenvalues[i] = settings_.curvature_min + (settings_.curvature_max - settings_.curvature_min) * rng.uniform();
  }
  curvature_ = rotation * eigenvalues.asDiagonal() * rotation.transpose();
  curvature_ = 0.5 * (curvature_ + curvature_.transpose()).eval();

  optimum_.resize(d);
  for (Eigen::Index i = 0; i < d; ++i) optimum_[i] = rng.normal();

  tails_.assign(static_cast<std::size_t>(horizon + 1), Vector::Zero(d));
  for (int m = horizon; m >= 2; --m) {
    Vector direction = Vector::Zero(d);
    if (settings_.aligned_directions) {
      direction[0] = 1.0;
    } else {
      for (Eigen::Index i = 0; i < d; ++i) direction[i] = rng.normal();
      direction.normalize();
    }
    tails_[static_cast<std::size_t>(m - 1)] = tails_[static_cast<std::size_t>(m)] + psi(m) * direction;
  }
  tails_[0] = tails_[1];

  costs_.reuse = settings_.reuse;
  for (int i = 1; i <= horizon; ++i) {
    costs_.costs.push_back(settings_.costs == CostSchedule::Linear ? static_cast<double>(i) : std::ldexp(1.0, i));
  }
}

double SyntheticDecayProblem::tail_mass(int level) const {
  if (level < 0 || level > settings_.horizon) throw std::out_of_range("synthetic: level out of range");
  const int horizon = settings_.horizon;
  if (settings_.mode == DecayMode::Geometric) {
    const double p = settings_.rate;
    return settings_.scale * std::pow(p, level + 1) * (1.0 - std::pow(p, horizon - level)) / (1.0 - p);
  }
  double sum = 0.0;
  for (int m = horizon; m > level; --m) sum += psi(m);
  return sum;
}

Vector SyntheticDecayProblem::gradient_at(const Vector& theta, int level) const {
  if (level < 1 || level > settings_.horizon) throw std::out_of_range("synthetic: level out of range");
  if (theta.size() != settings_.dimension) throw std::invalid_argument("synthetic: dimension mismatch");
  return curvature_ * (theta - optimum_) - tails_[static_cast<std::size_t>(level)];
}

std::vector<Vector> SyntheticDecayProblem::gradients(const Vector& theta, std::span<const int> levels, Rng&) const {
  std::vector<Vector> out;
  out.reserve(levels.size());
  for (int level : levels) out.push_back(gradient_at(theta, level));
  return out;
}

double SyntheticDecayProblem::loss(const Vector& theta, int level, Rng&) const {
  if (level < 1 || level > settings_.horizon) throw std::out_of_range("synthetic: level out of range");
  const Vector offset = theta - optimum_;
  return 0.5 * offset.dot(curvature_ * offset) - tails_[static_cast<std::size_t>(level)].dot(theta);
}

}  // namespace rtel
