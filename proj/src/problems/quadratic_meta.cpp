#include "rtel/problems/quadratic_meta.hpp"

#include <algorithm>
#include <cmath>

#include "rtel/problems/dual.hpp"

namespace rtel {

int meta_inner_steps(int level) { return (1 << level) + 1; }

QuadraticMetaProblem::QuadraticMetaProblem(QuadraticMetaSettings settings) : settings_(std::move(settings)) {
  const std::size_t d = settings_.curvatures.size();
  if (d == 0 || settings_.train_targets.size() != d || settings_.validation_targets.size() != d ||
      settings_.start.size() != d) {
    throw std::invalid_argument("quadratic_meta: curvatures, targets and start must share a nonzero length");
  }
  if (std::any_of(settings_.curvatures.begin(), settings_.curvatures.end(), [](double a) { return !(a > 0.0); })) {
    throw std::invalid_argument("quadratic_meta: curvatures must be positive");
  }
  if (settings_.horizon < 1 || settings_.horizon > 24) throw std::invalid_argument("quadratic_meta: horizon must lie in [1, 24]");
  if (!(settings_.decay_timescale > 0.0)) throw std::invalid_argument("quadratic_meta: decay timescale must be positive");
  costs_.reuse = true;
  for (int i = 1; i <= settings_.horizon; ++i) costs_.costs.push_back(meta_inner_steps(i));
}

Vector QuadraticMetaProblem::initial_parameters() const {
  Vector theta(2);
  theta << settings_.initial_rate, settings_.initial_decay;
  return theta;
}

std::vector<QuadraticMetaProblem::Evaluation> QuadraticMetaProblem::unroll_to(const Vector& theta,
                                                                              std::span<const int> checkpoints) const {
  using D = Dual<2>;
  if (theta.size() != 2) throw std::invalid_argument("quadratic_meta: theta is (rate, decay)");
  if (!(theta[0] > 0.0)) throw InnerDivergence("quadratic_meta: inner rate must be positive");

  const auto& a = settings_.curvatures;
  const auto& b = settings_.train_targets;
  const auto& v = settings_.validation_targets;
  const double a_max = *std::max_element(a.begin(), a.end());
  const D rate = D::variable(theta[0], 0);
  const D decay = D::variable(theta[1], 1);

  std::vector<D> w(settings_.start.begin(), settings_.start.end());
  const auto validation_loss = [&] {
    D total(0.0);
    for (std::size_t k = 0; k < w.size(); ++k) {
      const D r = w[k] - v[k];
      total += 0.5 * a[k] * (r * r);
    }
    return Evaluation{total.value, Vector::Map(total.tangent.data(), 2)};
  };

  const int deepest = *std::max_element(checkpoints.begin(), checkpoints.end());
  std::vector<Evaluation> at_step(static_cast<std::size_t>(deepest + 1));
  std::vector<bool> wanted(static_cast<std::size_t>(deepest + 1), false);
  for (int c : checkpoints) wanted[static_cast<std::size_t>(c)] = true;
  if (wanted[0]) at_step[0] = validation_loss();

  for (int t = 0; t < deepest; ++t) {
    // eta_t = eta0 * exp(-decay * log(1 + t / tau))
    const double log_base = std::log1p(t / settings_.decay_timescale);
    const D step = rate * exp(-1.0 * decay * log_base);
    if (!(step.value * a_max < 2.0)) {
      throw InnerDivergence("quadratic_meta: inner step " + std::to_string(t) + " has rate " +
                            std::to_string(step.value) + " above the stability bound " + std::to_string(2.0 / a_max));
    }
    for (std::size_t k = 0; k < w.size(); ++k) w[k] -= step * (a[k] * (w[k] - b[k]));
    if (wanted[static_cast<std::size_t>(t + 1)]) at_step[static_cast<std::size_t>(t + 1)] = validation_loss();
  }

  std::vector<Evaluation> out;
  out.reserve(checkpoints.size());
  for (int c : checkpoints) out.push_back(at_step[static_cast<std::size_t>(c)]);
  return out;
}

QuadraticMetaProblem::Evaluation QuadraticMetaProblem::unrolled(const Vector& theta, int inner_steps) const {
  if (inner_steps < 0) throw std::invalid_argument("quadratic_meta: negative step count");
  const int steps[] = {inner_steps};
  return unroll_to(theta, steps).front();
}

std::vector<Vector> QuadraticMetaProblem::gradients(const Vector& theta, std::span<const int> levels, Rng&) const {
  std::vector<int> steps;
  steps.reserve(levels.size());
  for (int level : levels) {
    if (level < 1 || level > settings_.horizon) throw std::out_of_range("quadratic_meta: level out of range");
    steps.push_back(meta_inner_steps(level));
  }
  auto evaluations = unroll_to(theta, steps);
  std::vector<Vector> out;
  out.reserve(evaluations.size());
  for (auto& e : evaluations) out.push_back(std::move(e.gradient));
  return out;
}

double QuadraticMetaProblem::loss(const Vector& theta, int level, Rng&) const {
  if (level < 1 || level > settings_.horizon) throw std::out_of_range("quadratic_meta: level out of range");
  return unrolled(theta, meta_inner_steps(level)).loss;
}

}  // namespace rtel
