#include "rtel/optimizer.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace rtel {

namespace {

constexpr std::uint64_t kEvaluationSeedSalt = 0x5eed'e7a1'0000'0001ULL;

struct ActiveEstimator {
  std::vector<int> levels;
  TruncationDistribution q;
  WeightScheme weights;
  double rate;
};

ActiveEstimator single_level(int level, double rate) {
  auto q = TruncationDistribution::point_mass(1, 1);
  auto weights = make_weight_scheme(WeightKind::SingleSample, q);
  return ActiveEstimator{{level}, std::move(q), std::move(weights), rate};
}

ActiveEstimator from_tuned(const TunedEstimator& tuned) {
  const auto indices = tuned.subsequence.indices();
  return ActiveEstimator{{indices.begin(), indices.end()}, tuned.q, tuned.weights, tuned.learning_rate};
}

bool all_finite(const Vector& v) { return v.allFinite(); }

}  // namespace

EstimatorChoice EstimatorChoice::adaptive(WeightKind kind) {
  switch (kind) {
    case WeightKind::SingleSample:
      return {EstimatorMode::AdaptiveSingleSample, 0};
    case WeightKind::RussianRoulette:
      return {EstimatorMode::AdaptiveRussianRoulette, 0};
    case WeightKind::Explicit:
      break;
  }
  throw std::invalid_argument("adaptive estimators use single-sample or russian roulette weights");
}

EstimatorChoice EstimatorChoice::parse(const std::string& text) {
  if (text == "untruncated") return untruncated();
  if (text == "adaptive_ss") return adaptive(WeightKind::SingleSample);
  if (text == "adaptive_rr") return adaptive(WeightKind::RussianRoulette);
  if (text.rfind("fixed:", 0) == 0) {
    std::size_t used = 0;
    const std::string digits = text.substr(6);
    int level = 0;
    try {
      level = std::stoi(digits, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == digits.size() && level >= 1) return fixed(level);
  }
  throw std::invalid_argument("unknown estimator '" + text +
                              "' (expected untruncated, fixed:<n>, adaptive_ss or adaptive_rr)");
}

std::string EstimatorChoice::label() const {
  switch (mode) {
    case EstimatorMode::Untruncated:
      return "untruncated";
    case EstimatorMode::FixedTruncation:
      return "fixed:" + std::to_string(fixed_level);
    case EstimatorMode::AdaptiveSingleSample:
      return "adaptive_ss";
    case EstimatorMode::AdaptiveRussianRoulette:
      return "adaptive_rr";
  }
  return "unknown";
}

BudgetLedger charge_tuning(BudgetLedger ledger, const CostModel& costs, int horizon) {
  double charge = costs.cost(horizon);
  if (!costs.reuse) {
    charge = 0.0;
    for (int i = 1; i <= horizon; ++i) charge += costs.cost(i);
  }
  ledger.spent += charge;
  ledger.next_tune += ledger.tuning_frequency * costs.cost(horizon);
  ledger.gradient_evaluations += horizon;
  return ledger;
}

RunResult run(const GradientSequence& problem, const OptimizerConfig& config, double budget_limit,
              const EvalHook& eval_hook, std::optional<Vector> initial) {
  const int horizon = config.horizon > 0 ? config.horizon : problem.horizon();
  if (horizon > problem.horizon()) {
    throw std::invalid_argument("optimizer: horizon exceeds the problem's horizon");
  }
  if (!(config.reference_rate > 0.0)) throw std::invalid_argument("optimizer: reference rate must be positive");
  if (config.tuning_frequency < 1) throw std::invalid_argument("optimizer: tuning frequency must be >= 1");
  const CostModel& costs = problem.cost_model();

  BudgetLedger ledger;
  ledger.tuning_frequency = config.tuning_frequency;
  const double one_tune = charge_tuning(ledger, costs, horizon).spent;
  if (!(budget_limit >= one_tune)) {
    throw std::invalid_argument("budget smaller than one tune (" + std::to_string(budget_limit) + " < " +
                                std::to_string(one_tune) + ")");
  }

  const EstimatorChoice& choice = config.estimator;
  if (choice.mode == EstimatorMode::FixedTruncation &&
      (choice.fixed_level < 1 || choice.fixed_level > horizon)) {
    throw std::invalid_argument("optimizer: fixed truncation level out of range");
  }
  const WeightKind kind =
      choice.mode == EstimatorMode::AdaptiveRussianRoulette ? WeightKind::RussianRoulette : WeightKind::SingleSample;

  Rng rng(config.seed);
  const std::uint64_t eval_seed = config.seed ^ kEvaluationSeedSalt;
  const double eval_interval = config.eval_interval > 0.0 ? config.eval_interval : costs.cost(horizon);

  RunResult result;
  result.parameters = initial ? *initial : problem.initial_parameters();
  Vector& theta = result.parameters;

  const auto evaluate = [&](std::int64_t step) {
    double loss = 0.0;
    if (eval_hook) {
      loss = eval_hook(theta);
    } else {
      Rng eval_rng(eval_seed);
      loss = problem.loss(theta, horizon, eval_rng);
    }
    if (std::isnan(loss)) loss = std::numeric_limits<double>::infinity();
    TraceRecord record;
    record.budget_spent = ledger.spent;
    record.step_index = step;
    record.evaluation_loss = loss;
    record.learning_rate = 0.0;
    record.gradient_evaluations = ledger.gradient_evaluations;
    result.trace.push_back(record);
  };

  ActiveEstimator active = choice.mode == EstimatorMode::FixedTruncation
                               ? single_level(choice.fixed_level, config.reference_rate)
                               : single_level(horizon, config.reference_rate);
  SquaredDistanceTable table(horizon, config.ema_decay);

  double next_eval = 0.0;
  std::int64_t step = 0;
  while (ledger.spent < budget_limit) {
    if (ledger.spent >= next_eval) {
      evaluate(step);
      while (next_eval <= ledger.spent) next_eval += eval_interval;
    }

    if (choice.adaptive() && ledger.next_tune <= ledger.spent) {
      auto tuned = tune(problem, theta, table, kind, config.reference_rate, rng);
      table = std::move(tuned.table);
      active = from_tuned(tuned.estimator);
      const double before = ledger.spent;
      ledger = charge_tuning(ledger, costs, horizon);
      result.charges.push_back(ledger.spent - before);
      ++result.tunes;
      continue;
    }

    const int N = sample_truncation(active.q, rng);
    std::vector<int> positions;
    for (int n = 1; n <= N; ++n) {
      if (active.weights(n, N) != 0.0 || active.weights(n + 1, N) != 0.0) positions.push_back(n);
    }
    std::vector<int> levels;
    levels.reserve(positions.size());
    for (int n : positions) levels.push_back(active.levels[static_cast<std::size_t>(n - 1)]);
    const auto values = problem.gradients(theta, levels, rng);

    // Level values by position; position 0 is the zero gradient.
    std::vector<const Vector*> at(static_cast<std::size_t>(N + 1), nullptr);
    for (std::size_t k = 0; k < positions.size(); ++k) at[static_cast<std::size_t>(positions[k])] = &values[k];
    Vector estimate = Vector::Zero(theta.size());
    for (int n = 1; n <= N; ++n) {
      const double w = active.weights(n, N);
      if (w == 0.0) continue;
      estimate += w * *at[static_cast<std::size_t>(n)];
      if (n > 1) estimate -= w * *at[static_cast<std::size_t>(n - 1)];
    }

    double charge = 0.0;
    if (costs.reuse) {
      charge = costs.cost(active.levels[static_cast<std::size_t>(N - 1)]);
    } else {
      for (int level : levels) charge += costs.cost(level);
    }

    theta -= active.rate * estimate;
    ledger.spent += charge;
    ledger.gradient_evaluations += static_cast<std::int64_t>(levels.size());
    result.charges.push_back(charge);
    ++step;

    TraceRecord record;
    record.budget_spent = ledger.spent;
    record.step_index = step;
    record.evaluation_loss = std::numeric_limits<double>::quiet_NaN();
    record.truncation_drawn = active.levels[static_cast<std::size_t>(N - 1)];
    record.learning_rate = active.rate;
    record.gradient_evaluations = ledger.gradient_evaluations;
    result.trace.push_back(record);

    if (!all_finite(theta)) {
      result.diverged = true;
      break;
    }
  }
  evaluate(step);
  result.ledger = ledger;
  return result;
}

}  // namespace rtel
