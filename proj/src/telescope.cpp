#include "rtel/telescope.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace rtel {

namespace {

void require_same_horizon(int a, int b, const char* what) {
  if (a != b) {
    throw std::invalid_argument(std::string(what) + ": horizon mismatch (" + std::to_string(a) +
                                " vs " + std::to_string(b) + ")");
  }
}

}  // namespace

CostModel CostModel::linear(int horizon, bool reuse) {
  CostModel model;
  model.reuse = reuse;
  model.costs.resize(static_cast<std::size_t>(horizon));
  std::iota(model.costs.begin(), model.costs.end(), 1.0);
  return model;
}

TruncationDistribution::TruncationDistribution(std::vector<double> probs) : probs_(std::move(probs)) {
  if (probs_.empty()) throw std::invalid_argument("truncation distribution: empty");
  long double sum = 0.0L;
  for (double p : probs_) {
    if (!std::isfinite(p) || p < 0.0) {
      throw std::invalid_argument("truncation distribution: entries must be finite and nonnegative");
    }
    sum += p;
  }
  if (std::abs(static_cast<double>(sum) - 1.0) > 1e-12) {
    throw std::invalid_argument("truncation distribution: probabilities sum to " +
                                std::to_string(static_cast<double>(sum)));
  }
  tails_.resize(probs_.size());
  long double running = 0.0L;
  for (std::size_t i = probs_.size(); i-- > 0;) {
    running += probs_[i];
    tails_[i] = static_cast<double>(running);
  }
}

TruncationDistribution TruncationDistribution::normalized(std::span<const double> weights) {
  long double sum = 0.0L;
  for (double w : weights) {
    if (!std::isfinite(w) || w < 0.0) {
      throw std::invalid_argument("truncation distribution: weights must be finite and nonnegative");
    }
    sum += w;
  }
  if (!(sum > 0.0L)) throw std::invalid_argument("truncation distribution: weights sum to zero");
  std::vector<double> probs(weights.size());
  for (std::size_t i = 0; i < weights.size(); ++i) {
    probs[i] = static_cast<double>(weights[i] / sum);
  }
  return TruncationDistribution(std::move(probs));
}

TruncationDistribution TruncationDistribution::uniform(int horizon) {
  std::vector<double> w(static_cast<std::size_t>(horizon), 1.0);
  return normalized(w);
}

TruncationDistribution TruncationDistribution::point_mass(int horizon, int index) {
  if (index < 1 || index > horizon) throw std::invalid_argument("point mass: index out of range");
  std::vector<double> probs(static_cast<std::size_t>(horizon), 0.0);
  probs[static_cast<std::size_t>(index - 1)] = 1.0;
  return TruncationDistribution(std::move(probs));
}

TruncationDistribution TruncationDistribution::geometric(int horizon, double ratio) {
  if (!(ratio > 0.0)) throw std::invalid_argument("geometric distribution: ratio must be positive");
  std::vector<double> w(static_cast<std::size_t>(horizon));
  for (int n = 1; n <= horizon; ++n) w[static_cast<std::size_t>(n - 1)] = std::pow(ratio, n);
  return normalized(w);
}

TruncationDistribution TruncationDistribution::polynomial(int horizon, double exponent) {
  std::vector<double> w(static_cast<std::size_t>(horizon));
  for (int n = 1; n <= horizon; ++n) w[static_cast<std::size_t>(n - 1)] = std::pow(n, -exponent);
  return normalized(w);
}

const char* to_string(WeightKind kind) {
  switch (kind) {
    case WeightKind::SingleSample:
      return "single_sample";
    case WeightKind::RussianRoulette:
      return "russian_roulette";
    case WeightKind::Explicit:
      return "explicit";
  }
  return "unknown";
}

WeightScheme WeightScheme::explicit_matrix(Eigen::MatrixXd weights) {
  if (weights.rows() != weights.cols() || weights.rows() == 0) {
    throw std::invalid_argument("explicit weights must be a nonempty square matrix");
  }
  WeightScheme scheme;
  scheme.kind_ = WeightKind::Explicit;
  scheme.horizon_ = static_cast<int>(weights.rows());
  scheme.matrix_ = std::move(weights);
  return scheme;
}

double WeightScheme::operator()(int n, int N) const {
  if (n < 1 || n > N || N > horizon_) return 0.0;
  switch (kind_) {
    case WeightKind::SingleSample:
      return n == N ? factors_[static_cast<std::size_t>(N - 1)] : 0.0;
    case WeightKind::RussianRoulette:
      return factors_[static_cast<std::size_t>(n - 1)];
    case WeightKind::Explicit:
      return matrix_(n - 1, N - 1);
  }
  return 0.0;
}

WeightScheme make_weight_scheme(WeightKind kind, const TruncationDistribution& q) {
  const int horizon = q.horizon();
  WeightScheme scheme;
  scheme.kind_ = kind;
  scheme.horizon_ = horizon;
  scheme.factors_.resize(static_cast<std::size_t>(horizon));
  switch (kind) {
    case WeightKind::SingleSample:
      for (int n = 1; n <= horizon; ++n) {
        if (!(q.prob(n) > 0.0)) {
          throw std::invalid_argument("single-sample weights: q(" + std::to_string(n) +
                                      ") = 0, so Delta_" + std::to_string(n) +
                                      " is never sampled and no unbiased weighting exists");
        }
        scheme.factors_[static_cast<std::size_t>(n - 1)] = 1.0 / q.prob(n);
      }
      break;
    case WeightKind::RussianRoulette:
      for (int n = 1; n <= horizon; ++n) {
        if (!(q.tail(n) > 0.0)) {
          throw std::invalid_argument("russian roulette weights: zero tail from n = " +
                                      std::to_string(n) + ", no unbiased weighting exists");
        }
        scheme.factors_[static_cast<std::size_t>(n - 1)] = 1.0 / q.tail(n);
      }
      break;
    case WeightKind::Explicit:
      throw std::invalid_argument("explicit weights are built with WeightScheme::explicit_matrix");
  }
  return scheme;
}

ConstraintCheck validate_unbiasedness_constraint(const WeightScheme& weights,
                                                 const TruncationDistribution& q) {
  require_same_horizon(weights.horizon(), q.horizon(), "unbiasedness check");
  ConstraintCheck check;
  for (int n = 1; n <= q.horizon(); ++n) {
    long double total = 0.0L;
    for (int N = n; N <= q.horizon(); ++N) total += static_cast<long double>(weights(n, N)) * q.prob(N);
    check.max_residual = std::max(check.max_residual, std::abs(static_cast<double>(total) - 1.0));
  }
  check.satisfied = check.max_residual <= kConstraintTolerance;
  return check;
}

int sample_truncation(const TruncationDistribution& q, Rng& rng) {
  const double u = rng.uniform();
  double cumulative = 0.0;
  int last_supported = 1;
  for (int n = 1; n <= q.horizon(); ++n) {
    const double p = q.prob(n);
    if (p <= 0.0) continue;
    cumulative += p;
    last_supported = n;
    if (u < cumulative) return n;
  }
  // u landed above a cumulative sum that rounded below one.
  return last_supported;
}

DifferenceSequence::DifferenceSequence(std::vector<Vector> terms) : terms_(std::move(terms)) {
  if (terms_.empty()) throw std::invalid_argument("difference sequence: empty");
  for (const auto& t : terms_) {
    if (t.size() != terms_.front().size()) {
      throw std::invalid_argument("difference sequence: terms differ in dimension");
    }
  }
}

DifferenceSequence DifferenceSequence::from_partial_sums(std::span<const Vector> partial_sums) {
  std::vector<Vector> terms;
  terms.reserve(partial_sums.size());
  for (std::size_t i = 0; i < partial_sums.size(); ++i) {
    terms.push_back(i == 0 ? partial_sums[0] : Vector(partial_sums[i] - partial_sums[i - 1]));
  }
  return DifferenceSequence(std::move(terms));
}

DifferenceSequence DifferenceSequence::scalars(std::span<const double> terms) {
  std::vector<Vector> vecs;
  vecs.reserve(terms.size());
  for (double t : terms) vecs.push_back(Vector::Constant(1, t));
  return DifferenceSequence(std::move(vecs));
}

Vector DifferenceSequence::partial_sum(int N) const {
  Vector sum = Vector::Zero(dimension());
  for (int n = 1; n <= N; ++n) sum += (*this)[n];
  return sum;
}

double draw_cost(const WeightScheme& weights, const CostModel& costs, int N) {
  if (costs.reuse) return costs.cost(N);
  double total = 0.0;
  for (int n = 1; n <= N; ++n) {
    if (weights(n, N) != 0.0 || weights(n + 1, N) != 0.0) total += costs.cost(n);
  }
  return total;
}

Vector weighted_partial_sum(const DifferenceSequence& deltas, const WeightScheme& weights, int N) {
  Vector sum = Vector::Zero(deltas.dimension());
  for (int n = 1; n <= N; ++n) {
    const double w = weights(n, N);
    if (w != 0.0) sum += w * deltas[n];
  }
  return sum;
}

RtSample rt_estimate(const DifferenceSequence& deltas, const WeightScheme& weights,
                     const TruncationDistribution& q, Rng& rng, const CostModel& costs) {
  require_same_horizon(deltas.horizon(), q.horizon(), "rt_estimate");
  require_same_horizon(weights.horizon(), q.horizon(), "rt_estimate");
  require_same_horizon(costs.horizon(), q.horizon(), "rt_estimate");
  RtSample sample;
  sample.truncation_index = sample_truncation(q, rng);
  sample.estimate = weighted_partial_sum(deltas, weights, sample.truncation_index);
  sample.compute_charged = draw_cost(weights, costs, sample.truncation_index);
  return sample;
}

RtSample rt_estimate(const DifferenceSequence& deltas, const WeightScheme& weights,
                     const TruncationDistribution& q, Rng& rng) {
  return rt_estimate(deltas, weights, q, rng, CostModel::linear(q.horizon()));
}

ExactMoments enumerate_exact_moments(const DifferenceSequence& deltas, const WeightScheme& weights,
                                     const TruncationDistribution& q, const CostModel& costs,
                                     int max_horizon) {
  if (q.horizon() > max_horizon) {
    throw std::invalid_argument("enumerate_exact_moments: horizon " + std::to_string(q.horizon()) +
                                " exceeds enumeration limit " + std::to_string(max_horizon));
  }
  require_same_horizon(deltas.horizon(), q.horizon(), "enumerate_exact_moments");
  require_same_horizon(weights.horizon(), q.horizon(), "enumerate_exact_moments");
  require_same_horizon(costs.horizon(), q.horizon(), "enumerate_exact_moments");

  ExactMoments moments;
  moments.mean = Vector::Zero(deltas.dimension());
  for (int N = 1; N <= q.horizon(); ++N) {
    const double p = q.prob(N);
    if (p == 0.0) continue;
    const Vector estimate = weighted_partial_sum(deltas, weights, N);
    moments.mean += p * estimate;
    moments.expected_squared_norm += p * estimate.squaredNorm();
    moments.expected_compute += p * draw_cost(weights, costs, N);
  }
  return moments;
}

}  // namespace rtel
