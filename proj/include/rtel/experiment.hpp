#pragma once

// Experiment grids: (problem x estimator x seed) runs written as CSV traces
// plus a summary of evaluation loss at budget checkpoints.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "rtel/optimizer.hpp"
#include "rtel/problems/lotka_volterra.hpp"
#include "rtel/problems/quadratic_meta.hpp"
#include "rtel/problems/synthetic.hpp"

namespace rtel {

struct ExperimentConfig {
  std::string problem = "synthetic";
  std::vector<EstimatorChoice> estimators{EstimatorChoice::untruncated(), EstimatorChoice::fixed(4),
                                          EstimatorChoice::adaptive(WeightKind::SingleSample),
                                          EstimatorChoice::adaptive(WeightKind::RussianRoulette)};
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  double budget = 20000.0;
  double reference_rate = 0.01;
  int tuning_frequency = 5;
  double ema_decay = 0.9;
  /// Problem horizon; 0 keeps the problem's default.
  int horizon = 0;
  double eval_interval = 0.0;
  std::string output_dir = "results";
  int jobs = 1;
  /// Budget per candidate in grid search; 0 uses 50 C(H).
  double grid_budget = 0.0;

  SyntheticSettings synthetic;
  LotkaVolterraSettings lotka_volterra;
  /// Fixed dataset seed for lotka_volterra; negative uses the run seed.
  std::int64_t data_seed = -1;
  QuadraticMetaSettings quadratic_meta;
};

/// Applies one key=value setting. Throws std::invalid_argument naming the key
/// when it is unknown or its value does not parse.
void apply_setting(ExperimentConfig& config, const std::string& key, const std::string& value);

/// Parses "key = value" lines; '#' starts a comment.
ExperimentConfig parse_config(const std::string& text, ExperimentConfig base = {});
ExperimentConfig load_config(const std::filesystem::path& path);

std::unique_ptr<GradientSequence> make_problem(const ExperimentConfig& config, std::uint64_t seed);

OptimizerConfig optimizer_config(const ExperimentConfig& config, const EstimatorChoice& estimator,
                                 std::uint64_t seed);

/// Columns: step, budget_spent, gradient_evaluations, truncation_drawn,
/// learning_rate, eval_loss (blank on step rows). 17 significant digits.
std::string trace_csv(const RunResult& run);

std::string run_file_name(const std::string& problem, const EstimatorChoice& estimator, std::uint64_t seed);

/// budget * 2^-6, ..., budget.
std::vector<double> budget_checkpoints(double budget);

/// Last evaluation loss at or before the checkpoint; the first evaluation if none precedes it.
double loss_at_checkpoint(const std::vector<TraceRecord>& trace, double checkpoint);

struct SummaryRow {
  std::string estimator;
  double budget_checkpoint = 0.0;
  double mean_loss = 0.0;
  /// Sample standard deviation across seeds (0 for a single seed).
  double std_loss = 0.0;
};

struct RunRecord {
  EstimatorChoice estimator;
  std::uint64_t seed = 0;
  std::filesystem::path path;
  RunResult result;
};

struct ExperimentResult {
  std::vector<RunRecord> runs;
  std::vector<SummaryRow> summary;
  std::filesystem::path summary_path;
};

std::vector<SummaryRow> summarize(const ExperimentConfig& config, const std::vector<RunRecord>& runs);
std::string summary_csv(const std::vector<SummaryRow>& rows);

/// Runs every (estimator, seed) pair, writes one CSV per run and
/// <problem>__summary.csv into config.output_dir.
ExperimentResult run_experiment(const ExperimentConfig& config);

/// a x 10^-b for a in {1.0, 2.2, 5.5} and b in {0, 1, 2, 3, 5}, ascending.
std::vector<double> default_rate_grid();

struct GridSearchResult {
  double best_rate = 0.0;
  std::vector<double> rates;
  /// Final evaluation loss per rate; infinity when the run diverged.
  std::vector<double> final_losses;
};

/// Runs the untruncated estimator for config.grid_budget per candidate on the
/// first seed and returns the rate with the lowest final loss, ties going to
/// the smaller rate. Throws std::runtime_error when every candidate diverges.
GridSearchResult grid_search_reference_rate(const ExperimentConfig& config, std::vector<double> candidates);

/// Dataset record for export-dataset.
std::string export_dataset(const ExperimentConfig& config, std::uint64_t seed);

std::string format_number(double value);

}  // namespace rtel
