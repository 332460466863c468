#include "rtel/tuning.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

namespace rtel {

namespace {

void check_norms_and_costs(std::span<const double> norms, std::span<const double> costs,
                           const char* what) {
  if (norms.empty() || norms.size() != costs.size()) {
    throw std::invalid_argument(std::string(what) + ": norms and costs must be nonempty and equal length");
  }
  bool any_positive = false;
  for (double v : norms) {
    if (!std::isfinite(v) || v < 0.0) {
      throw std::invalid_argument(std::string(what) + ": squared norms must be finite and nonnegative");
    }
    any_positive = any_positive || v > 0.0;
  }
  if (!any_positive) throw std::invalid_argument(std::string(what) + ": all squared norms are zero");
  for (double c : costs) {
    if (!(c > 0.0) || !std::isfinite(c)) {
      throw std::invalid_argument(std::string(what) + ": costs must be positive");
    }
  }
}

CostModel truncated(const CostModel& model, int horizon) {
  if (model.horizon() < horizon) {
    throw std::invalid_argument("cost model shorter than base horizon");
  }
  CostModel out;
  out.reuse = model.reuse;
  out.costs.assign(model.costs.begin(), model.costs.begin() + horizon);
  return out;
}

}  // namespace

SquaredDistanceTable::SquaredDistanceTable(int base_horizon, double decay)
    : values_(Eigen::MatrixXd::Zero(base_horizon + 1, base_horizon + 1)), decay_(decay) {
  if (base_horizon < 1) throw std::invalid_argument("distance table: base horizon must be >= 1");
  if (!(decay > 0.0 && decay < 1.0)) throw std::invalid_argument("distance table: decay must lie in (0, 1)");
}

SquaredDistanceTable SquaredDistanceTable::from_values(Eigen::MatrixXd values, double decay) {
  if (values.rows() != values.cols()) throw std::invalid_argument("distance table: values must be square");
  SquaredDistanceTable table(static_cast<int>(values.rows()) - 1, decay);
  for (Eigen::Index i = 0; i < values.rows(); ++i) {
    for (Eigen::Index j = 0; j < values.cols(); ++j) {
      if (values(i, j) < 0.0 || values(i, j) != values(j, i)) {
        throw std::invalid_argument("distance table: values must be symmetric and nonnegative");
      }
    }
    if (values(i, i) != 0.0) throw std::invalid_argument("distance table: diagonal must be zero");
  }
  table.values_ = std::move(values);
  table.updates_ = 1;
  return table;
}

SquaredDistanceTable update_distances(const SquaredDistanceTable& table,
                                      std::span<const Vector> gradients) {
  const int horizon = table.base_horizon();
  if (static_cast<int>(gradients.size()) != horizon) {
    throw std::invalid_argument("update_distances: expected " + std::to_string(horizon) + " gradients");
  }
  const Eigen::Index dim = gradients.front().size();
  for (const auto& g : gradients) {
    if (g.size() != dim) throw std::invalid_argument("update_distances: gradient dimension mismatch");
  }

  SquaredDistanceTable next = table;
  const double alpha = table.decay();
  const auto level = [&](int i) -> Vector { return i == 0 ? Vector::Zero(dim) : gradients[i - 1]; };
  for (int i = 0; i <= horizon; ++i) {
    const Vector gi = level(i);
    for (int j = i + 1; j <= horizon; ++j) {
      const double observed = (gi - gradients[j - 1]).squaredNorm();
      const double value =
          table.initialized() ? alpha * table.values_(i, j) + (1.0 - alpha) * observed : observed;
      next.values_(i, j) = value;
      next.values_(j, i) = value;
    }
  }
  ++next.updates_;
  return next;
}

Subsequence::Subsequence(std::vector<int> indices, int base_horizon)
    : indices_(std::move(indices)), base_horizon_(base_horizon) {
  if (indices_.empty()) throw std::invalid_argument("subsequence: empty");
  if (indices_.back() != base_horizon_) {
    throw std::invalid_argument("subsequence: must end at the base horizon " + std::to_string(base_horizon_));
  }
  if (indices_.front() < 1) throw std::invalid_argument("subsequence: indices start at 1");
  for (std::size_t i = 1; i < indices_.size(); ++i) {
    if (indices_[i] <= indices_[i - 1]) throw std::invalid_argument("subsequence: indices must increase");
  }
}

Subsequence Subsequence::full(int base_horizon) {
  std::vector<int> indices(static_cast<std::size_t>(base_horizon));
  std::iota(indices.begin(), indices.end(), 1);
  return Subsequence(std::move(indices), base_horizon);
}

Subsequence Subsequence::last_only(int base_horizon) { return Subsequence({base_horizon}, base_horizon); }

bool Subsequence::contains(int level) const {
  return std::binary_search(indices_.begin(), indices_.end(), level);
}

EstimatorStats EstimatorStats::from(double expected_compute, double expected_squared_norm) {
  EstimatorStats stats;
  stats.expected_compute = expected_compute;
  stats.expected_squared_norm = expected_squared_norm;
  const double product = expected_compute * expected_squared_norm;
  stats.roe = product > 0.0 ? 1.0 / product : std::numeric_limits<double>::infinity();
  return stats;
}

TruncationDistribution optimal_q_ss(std::span<const double> delta_norms, std::span<const double> costs,
                                    double floor) {
  check_norms_and_costs(delta_norms, costs, "optimal_q_ss");
  std::vector<double> weights(delta_norms.size());
  for (std::size_t i = 0; i < weights.size(); ++i) weights[i] = std::sqrt(delta_norms[i] / costs[i]);
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  for (double& w : weights) w = std::max(w / total, floor);
  return TruncationDistribution::normalized(weights);
}

TruncationDistribution optimal_q_rr(std::span<const double> delta_norms, std::span<const double> costs,
                                    double floor) {
  check_norms_and_costs(delta_norms, costs, "optimal_q_rr");
  for (std::size_t i = 1; i < costs.size(); ++i) {
    if (!(costs[i] > costs[i - 1])) {
      throw std::invalid_argument("optimal_q_rr: costs must be strictly increasing");
    }
  }

  // Pool adjacent violators of Q(1) >= Q(2) >= ... .
  struct Block {
    double norm_sum;
    double cost_sum;
    std::size_t count;
    double value() const { return std::sqrt(norm_sum / cost_sum); }
  };
  std::vector<Block> blocks;
  for (std::size_t i = 0; i < delta_norms.size(); ++i) {
    const double increment = costs[i] - (i == 0 ? 0.0 : costs[i - 1]);
    blocks.push_back({delta_norms[i], increment, 1});
    while (blocks.size() > 1 && blocks[blocks.size() - 2].value() < blocks.back().value()) {
      Block top = blocks.back();
      blocks.pop_back();
      blocks.back().norm_sum += top.norm_sum;
      blocks.back().cost_sum += top.cost_sum;
      blocks.back().count += top.count;
    }
  }

  const double head = blocks.front().value();
  std::vector<double> tails;
  tails.reserve(delta_norms.size());
  for (const Block& b : blocks) {
    const double value = std::max(b.value() / head, floor);
    tails.insert(tails.end(), b.count, value);
  }
  tails.front() = 1.0;

  std::vector<double> probs(tails.size());
  for (std::size_t i = 0; i < tails.size(); ++i) {
    probs[i] = tails[i] - (i + 1 < tails.size() ? tails[i + 1] : 0.0);
  }
  return TruncationDistribution::normalized(probs);
}

std::vector<double> consecutive_distances(const SquaredDistanceTable& table, const Subsequence& subsequence) {
  std::vector<double> out(static_cast<std::size_t>(subsequence.size()));
  for (int i = 1; i <= subsequence.size(); ++i) {
    out[static_cast<std::size_t>(i - 1)] = table(subsequence[i - 1], subsequence[i]);
  }
  return out;
}

std::vector<double> subsequence_draw_costs(const CostModel& base_costs, const Subsequence& subsequence,
                                           WeightKind kind) {
  if (kind == WeightKind::Explicit) throw std::invalid_argument("draw costs: explicit weights unsupported");
  std::vector<double> out(static_cast<std::size_t>(subsequence.size()));
  double running = 0.0;
  for (int N = 1; N <= subsequence.size(); ++N) {
    const double own = base_costs.cost(subsequence[N]);
    running += own;
    double cost = own;
    if (!base_costs.reuse) {
      if (kind == WeightKind::RussianRoulette) {
        cost = running;
      } else if (N > 1) {
        cost += base_costs.cost(subsequence[N - 1]);
      }
    }
    out[static_cast<std::size_t>(N - 1)] = cost;
  }
  return out;
}

EstimatorStats compute_and_variance(const SquaredDistanceTable& table, const CostModel& base_costs,
                                    const Subsequence& subsequence, WeightKind kind,
                                    const TruncationDistribution& q) {
  if (q.horizon() != subsequence.size()) {
    throw std::invalid_argument("compute_and_variance: q must cover the subsequence positions");
  }
  const auto costs = subsequence_draw_costs(base_costs, subsequence, kind);
  const auto norms = consecutive_distances(table, subsequence);

  double compute = 0.0;
  double squared_norm = 0.0;
  for (int i = 1; i <= q.horizon(); ++i) {
    const auto k = static_cast<std::size_t>(i - 1);
    compute += q.prob(i) * costs[k];
    const double mass = kind == WeightKind::SingleSample ? q.prob(i) : q.tail(i);
    if (norms[k] > 0.0) {
      if (!(mass > 0.0)) {
        throw std::invalid_argument("compute_and_variance: zero probability at position " +
                                    std::to_string(i) + " with positive squared distance");
      }
      squared_norm += norms[k] / mass;
    }
  }
  return EstimatorStats::from(compute, squared_norm);
}

TruncationDistribution optimal_q(const SquaredDistanceTable& table, const CostModel& base_costs,
                                 const Subsequence& subsequence, WeightKind kind) {
  const auto norms = consecutive_distances(table, subsequence);
  const auto costs = subsequence_draw_costs(base_costs, subsequence, kind);
  switch (kind) {
    case WeightKind::SingleSample:
      return optimal_q_ss(norms, costs);
    case WeightKind::RussianRoulette:
      return optimal_q_rr(norms, costs);
    case WeightKind::Explicit:
      break;
  }
  throw std::invalid_argument("optimal_q: explicit weights unsupported");
}

double sequence_cost(const SquaredDistanceTable& table, const CostModel& base_costs,
                     const Subsequence& subsequence, WeightKind kind) {
  const auto norms = consecutive_distances(table, subsequence);
  if (std::all_of(norms.begin(), norms.end(), [](double v) { return v == 0.0; })) return 0.0;
  const auto q = optimal_q(table, base_costs, subsequence, kind);
  const auto stats = compute_and_variance(table, base_costs, subsequence, kind, q);
  return stats.expected_compute * stats.expected_squared_norm;
}

Subsequence greedy_subsequence_select(const SquaredDistanceTable& table, const CostModel& base_costs,
                                      WeightKind kind) {
  const int horizon = table.base_horizon();
  const auto cost_of = [&](const std::vector<int>& indices) {
    return sequence_cost(table, base_costs, Subsequence(indices, horizon), kind);
  };

  std::vector<int> grown{horizon};
  double grown_cost = cost_of(grown);
  for (bool improved = true; improved;) {
    improved = false;
    for (int i = 1; i < horizon; ++i) {
      if (std::binary_search(grown.begin(), grown.end(), i)) continue;
      std::vector<int> trial = grown;
      trial.insert(std::lower_bound(trial.begin(), trial.end(), i), i);
      const double trial_cost = cost_of(trial);
      if (trial_cost < grown_cost) {
        grown = std::move(trial);
        grown_cost = trial_cost;
        improved = true;
        break;
      }
    }
  }

  std::vector<int> pruned(static_cast<std::size_t>(horizon));
  std::iota(pruned.begin(), pruned.end(), 1);
  double pruned_cost = cost_of(pruned);
  for (bool improved = true; improved;) {
    improved = false;
    for (std::size_t k = 0; k + 1 < pruned.size(); ++k) {
      std::vector<int> trial = pruned;
      trial.erase(trial.begin() + static_cast<std::ptrdiff_t>(k));
      const double trial_cost = cost_of(trial);
      if (trial_cost < pruned_cost) {
        pruned = std::move(trial);
        pruned_cost = trial_cost;
        improved = true;
        break;
      }
    }
  }

  return pruned_cost < grown_cost ? Subsequence(std::move(pruned), horizon)
                                  : Subsequence(std::move(grown), horizon);
}

double scale_learning_rate(double reference_rate, double reference_squared_norm,
                           double estimator_squared_norm) {
  if (!(reference_rate > 0.0) || !(reference_squared_norm > 0.0) || !(estimator_squared_norm > 0.0)) {
    throw std::invalid_argument("scale_learning_rate: inputs must be positive");
  }
  return reference_rate * (reference_squared_norm / estimator_squared_norm);
}

TunedEstimator build_estimator(const SquaredDistanceTable& table, const CostModel& base_costs,
                               WeightKind kind, double reference_rate) {
  const int horizon = table.base_horizon();
  const CostModel costs = truncated(base_costs, horizon);
  const double reference_norm = table(0, horizon);
  if (!(reference_norm > 0.0)) {
    // The full-horizon gradient vanished: nothing to trade off, use it directly.
    Subsequence full = Subsequence::last_only(horizon);
    auto q = TruncationDistribution::point_mass(1, 1);
    auto weights = make_weight_scheme(kind, q);
    auto stats = compute_and_variance(table, costs, full, kind, q);
    return TunedEstimator{std::move(full), std::move(q), std::move(weights), stats, reference_rate};
  }

  Subsequence subsequence = greedy_subsequence_select(table, costs, kind);
  auto q = optimal_q(table, costs, subsequence, kind);
  auto weights = make_weight_scheme(kind, q);
  auto stats = compute_and_variance(table, costs, subsequence, kind, q);
  const double rate = scale_learning_rate(reference_rate, reference_norm, stats.expected_squared_norm);
  return TunedEstimator{std::move(subsequence), std::move(q), std::move(weights), stats, rate};
}

TuneResult tune(const GradientSequence& problem, const Vector& theta, const SquaredDistanceTable& table,
                WeightKind kind, double reference_rate, Rng& rng) {
  const int horizon = table.base_horizon();
  if (problem.horizon() < horizon) {
    throw std::invalid_argument("tune: problem horizon " + std::to_string(problem.horizon()) +
                                " is below the base horizon " + std::to_string(horizon));
  }
  std::vector<int> levels(static_cast<std::size_t>(horizon));
  std::iota(levels.begin(), levels.end(), 1);
  const auto gradients = problem.gradients(theta, levels, rng);
  auto updated = update_distances(table, gradients);
  auto estimator = build_estimator(updated, problem.cost_model(), kind, reference_rate);
  return TuneResult{std::move(updated), std::move(estimator)};
}

}  // namespace rtel
