#pragma once

// Budgeted SGD with randomized telescope gradient estimates.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "rtel/problems/gradient_sequence.hpp"
#include "rtel/telescope.hpp"
#include "rtel/tuning.hpp"

namespace rtel {

enum class EstimatorMode { Untruncated, FixedTruncation, AdaptiveSingleSample, AdaptiveRussianRoulette };

struct EstimatorChoice {
  EstimatorMode mode = EstimatorMode::Untruncated;
  /// Level used by FixedTruncation.
  int fixed_level = 0;

  static EstimatorChoice untruncated() { return {EstimatorMode::Untruncated, 0}; }
  static EstimatorChoice fixed(int level) { return {EstimatorMode::FixedTruncation, level}; }
  static EstimatorChoice adaptive(WeightKind kind);

  /// "untruncated", "fixed:<n>", "adaptive_ss" or "adaptive_rr".
  static EstimatorChoice parse(const std::string& text);
  std::string label() const;
  bool adaptive() const {
    return mode == EstimatorMode::AdaptiveSingleSample || mode == EstimatorMode::AdaptiveRussianRoulette;
  }

  friend bool operator==(const EstimatorChoice&, const EstimatorChoice&) = default;
};

struct OptimizerConfig {
  double reference_rate = 0.01;
  double ema_decay = 0.9;
  int tuning_frequency = 5;
  EstimatorChoice estimator;
  /// Base horizon; 0 uses the problem's horizon.
  int horizon = 0;
  std::uint64_t seed = 0;
  /// Budget units between evaluations; 0 uses C(H).
  double eval_interval = 0.0;
};

struct BudgetLedger {
  double spent = 0.0;
  double next_tune = 0.0;
  int tuning_frequency = 5;
  std::int64_t gradient_evaluations = 0;
};

/// Charges one tuning pass: C(H) when levels reuse computation, otherwise
/// sum_{i<=H} C(i). Schedules the next tune K * C(H) units later.
BudgetLedger charge_tuning(BudgetLedger ledger, const CostModel& costs, int horizon);

struct TraceRecord {
  double budget_spent = 0.0;
  std::int64_t step_index = 0;
  /// NaN on step records; set on evaluation records.
  double evaluation_loss = 0.0;
  /// Base level S[N] of the drawn truncation; 0 on evaluation records.
  int truncation_drawn = 0;
  double learning_rate = 0.0;
  std::int64_t gradient_evaluations = 0;

  bool is_evaluation() const { return evaluation_loss == evaluation_loss; }
};

using EvalHook = std::function<double(const Vector& theta)>;

struct RunResult {
  std::vector<TraceRecord> trace;
  Vector parameters;
  BudgetLedger ledger;
  /// Charges in the order they were made; sums to ledger.spent.
  std::vector<double> charges;
  int tunes = 0;
  bool diverged = false;
};

/// Runs until the spent budget reaches budget_limit. When no hook is given
/// the evaluation loss is problem.loss(theta, H) with a fixed evaluation
/// seed, so evaluations along a run and across runs share random draws.
/// Throws std::invalid_argument when budget_limit is below one tuning charge.
RunResult run(const GradientSequence& problem, const OptimizerConfig& config, double budget_limit,
              const EvalHook& eval_hook = {}, std::optional<Vector> initial = std::nullopt);

}  // namespace rtel
