#include "rtel/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace rtel {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  std::stringstream stream(value);
  std::string item;
  while (std::getline(stream, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const std::string& why) {
  throw std::invalid_argument("config key '" + key + "': invalid value '" + value + "' (" + why + ")");
}

double to_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used == value.size()) return v;
  } catch (const std::exception&) {
  }
  bad_value(key, value, "expected a number");
}

long long to_integer(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(value, &used);
    if (used == value.size()) return v;
  } catch (const std::exception&) {
  }
  bad_value(key, value, "expected an integer");
}

bool to_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  bad_value(key, value, "expected true or false");
}

std::vector<double> to_doubles(const std::string& key, const std::string& value) {
  std::vector<double> out;
  for (const auto& item : split_list(value)) out.push_back(to_double(key, item));
  if (out.empty()) bad_value(key, value, "expected a nonempty list");
  return out;
}

using Setter = std::function<void(ExperimentConfig&, const std::string& key, const std::string& value)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"problem",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         if (v != "synthetic" && v != "lotka_volterra" && v != "quadratic_meta") {
           bad_value(k, v, "expected synthetic, lotka_volterra or quadratic_meta");
         }
         c.problem = v;
       }},
      {"estimators",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.estimators.clear();
         for (const auto& item : split_list(v)) {
           try {
             c.estimators.push_back(EstimatorChoice::parse(item));
           } catch (const std::invalid_argument& e) {
             bad_value(k, v, e.what());
           }
         }
         if (c.estimators.empty()) bad_value(k, v, "expected a nonempty list");
       }},
      {"seeds",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.seeds.clear();
         for (const auto& item : split_list(v)) {
           const long long s = to_integer(k, item);
           if (s < 0) bad_value(k, v, "seeds are nonnegative");
           c.seeds.push_back(static_cast<std::uint64_t>(s));
         }
         if (c.seeds.empty()) bad_value(k, v, "expected a nonempty list");
       }},
      {"budget", [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.budget = to_double(k, v); }},
      {"reference_rate",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.reference_rate = to_double(k, v);
         if (!(c.reference_rate > 0.0)) bad_value(k, v, "must be positive");
       }},
      {"tuning_frequency",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.tuning_frequency = static_cast<int>(to_integer(k, v));
         if (c.tuning_frequency < 1) bad_value(k, v, "must be >= 1");
       }},
      {"ema_decay",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.ema_decay = to_double(k, v);
         if (!(c.ema_decay > 0.0 && c.ema_decay < 1.0)) bad_value(k, v, "must lie in (0, 1)");
       }},
      {"horizon",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.horizon = static_cast<int>(to_integer(k, v));
         if (c.horizon < 0) bad_value(k, v, "must be >= 0");
       }},
      {"eval_interval",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.eval_interval = to_double(k, v); }},
      {"output_dir", [](ExperimentConfig& c, const std::string&, const std::string& v) { c.output_dir = v; }},
      {"jobs",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.jobs = static_cast<int>(to_integer(k, v));
         if (c.jobs < 1) bad_value(k, v, "must be >= 1");
       }},
      {"grid_budget",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.grid_budget = to_double(k, v); }},
      {"synthetic.mode",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         if (v == "geometric") {
           c.synthetic.mode = DecayMode::Geometric;
         } else if (v == "polynomial") {
           c.synthetic.mode = DecayMode::Polynomial;
         } else {
           bad_value(k, v, "expected geometric or polynomial");
         }
       }},
      {"synthetic.rate",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.synthetic.rate = to_double(k, v); }},
      {"synthetic.scale",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.synthetic.scale = to_double(k, v); }},
      {"synthetic.dimension",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.synthetic.dimension = static_cast<int>(to_integer(k, v));
       }},
      {"synthetic.curvature_min",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.synthetic.curvature_min = to_double(k, v);
       }},
      {"synthetic.curvature_max",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.synthetic.curvature_max = to_double(k, v);
       }},
      {"synthetic.aligned_directions",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.synthetic.aligned_directions = to_bool(k, v);
       }},
      {"synthetic.costs",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         if (v == "linear") {
           c.synthetic.costs = CostSchedule::Linear;
         } else if (v == "doubling") {
           c.synthetic.costs = CostSchedule::Doubling;
         } else {
           bad_value(k, v, "expected linear or doubling");
         }
       }},
      {"synthetic.reuse",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.synthetic.reuse = to_bool(k, v); }},
      {"lotka_volterra.batch_size",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.lotka_volterra.batch_size = static_cast<int>(to_integer(k, v));
       }},
      {"lotka_volterra.eval_batch_size",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.lotka_volterra.eval_batch_size = static_cast<int>(to_integer(k, v));
       }},
      {"lotka_volterra.observations",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.lotka_volterra.observation_count = static_cast<int>(to_integer(k, v));
         if (c.lotka_volterra.observation_count < 0) bad_value(k, v, "must be >= 0");
       }},
      {"lotka_volterra.noise",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.lotka_volterra.observation_noise = to_double(k, v);
       }},
      {"lotka_volterra.ground_truth_steps",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.lotka_volterra.ground_truth_steps = static_cast<int>(to_integer(k, v));
       }},
      {"lotka_volterra.initial_std",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.lotka_volterra.initial_std = to_double(k, v);
       }},
      {"lotka_volterra.data_seed",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.data_seed = to_integer(k, v); }},
      {"quadratic_meta.initial_rate",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.quadratic_meta.initial_rate = to_double(k, v);
       }},
      {"quadratic_meta.initial_decay",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.quadratic_meta.initial_decay = to_double(k, v);
       }},
      {"quadratic_meta.decay_timescale",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.quadratic_meta.decay_timescale = to_double(k, v);
       }},
      {"quadratic_meta.curvatures",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.quadratic_meta.curvatures = to_doubles(k, v);
       }},
      {"quadratic_meta.train_targets",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.quadratic_meta.train_targets = to_doubles(k, v);
       }},
      {"quadratic_meta.validation_targets",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.quadratic_meta.validation_targets = to_doubles(k, v);
       }},
      {"quadratic_meta.start",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.quadratic_meta.start = to_doubles(k, v);
       }},
  };
  return table;
}

std::string sanitize(std::string label) {
  std::replace(label.begin(), label.end(), ':', '-');
  return label;
}

void write_file(const std::filesystem::path& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << contents;
}

}  // namespace

std::string format_number(double value) {
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  if (std::isnan(value)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

void apply_setting(ExperimentConfig& config, const std::string& key, const std::string& value) {
  const auto& table = setters();
  const auto it = table.find(key);
  if (it == table.end()) throw std::invalid_argument("unknown config key '" + key + "'");
  it->second(config, key, trim(value));
}

ExperimentConfig parse_config(const std::string& text, ExperimentConfig base) {
  std::stringstream stream(text);
  std::string line;
  int number = 0;
  while (std::getline(stream, line)) {
    ++number;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config line " + std::to_string(number) + ": expected key = value");
    }
    apply_setting(base, trim(line.substr(0, eq)), line.substr(eq + 1));
  }
  return base;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read config " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config(buffer.str());
}

std::unique_ptr<GradientSequence> make_problem(const ExperimentConfig& config, std::uint64_t seed) {
  if (config.problem == "synthetic") {
    SyntheticSettings settings = config.synthetic;
    if (config.horizon > 0) settings.horizon = config.horizon;
    // The problem instance is shared across seeds; seeds vary the estimator draws.
    return std::make_unique<SyntheticDecayProblem>(settings);
  }
  if (config.problem == "lotka_volterra") {
    LotkaVolterraSettings settings = config.lotka_volterra;
    if (config.horizon > 0) settings.horizon = config.horizon;
    settings.seed = config.data_seed >= 0 ? static_cast<std::uint64_t>(config.data_seed) : seed;
    return std::make_unique<LotkaVolterraVIProblem>(settings);
  }
  if (config.problem == "quadratic_meta") {
    QuadraticMetaSettings settings = config.quadratic_meta;
    if (config.horizon > 0) settings.horizon = config.horizon;
    return std::make_unique<QuadraticMetaProblem>(settings);
  }
  throw std::invalid_argument("unknown problem '" + config.problem + "'");
}

OptimizerConfig optimizer_config(const ExperimentConfig& config, const EstimatorChoice& estimator,
                                 std::uint64_t seed) {
  OptimizerConfig out;
  out.reference_rate = config.reference_rate;
  out.ema_decay = config.ema_decay;
  out.tuning_frequency = config.tuning_frequency;
  out.estimator = estimator;
  out.seed = seed;
  out.eval_interval = config.eval_interval;
  return out;
}

std::string trace_csv(const RunResult& run) {
  std::string out = "step,budget_spent,gradient_evaluations,truncation_drawn,learning_rate,eval_loss\n";
  for (const auto& r : run.trace) {
    out += std::to_string(r.step_index);
    out += ',';
    out += format_number(r.budget_spent);
    out += ',';
    out += std::to_string(r.gradient_evaluations);
    out += ',';
    out += std::to_string(r.truncation_drawn);
    out += ',';
    out += format_number(r.learning_rate);
    out += ',';
    if (r.is_evaluation()) out += format_number(r.evaluation_loss);
    out += '\n';
  }
  return out;
}

std::string run_file_name(const std::string& problem, const EstimatorChoice& estimator, std::uint64_t seed) {
  return problem + "__" + sanitize(estimator.label()) + "__seed" + std::to_string(seed) + ".csv";
}

std::vector<double> budget_checkpoints(double budget) {
  std::vector<double> out;
  for (int k = 6; k >= 0; --k) out.push_back(std::ldexp(budget, -k));
  return out;
}

double loss_at_checkpoint(const std::vector<TraceRecord>& trace, double checkpoint) {
  double loss = std::numeric_limits<double>::quiet_NaN();
  for (const auto& r : trace) {
    if (!r.is_evaluation()) continue;
    if (std::isnan(loss) || r.budget_spent <= checkpoint) loss = r.evaluation_loss;
    if (r.budget_spent > checkpoint) break;
  }
  return loss;
}

std::vector<SummaryRow> summarize(const ExperimentConfig& config, const std::vector<RunRecord>& runs) {
  std::vector<SummaryRow> rows;
  for (const auto& estimator : config.estimators) {
    for (double checkpoint : budget_checkpoints(config.budget)) {
      std::vector<double> losses;
      for (const auto& run : runs) {
        if (run.estimator == estimator) losses.push_back(loss_at_checkpoint(run.result.trace, checkpoint));
      }
      SummaryRow row;
      row.estimator = estimator.label();
      row.budget_checkpoint = checkpoint;
      double sum = 0.0;
      for (double l : losses) sum += l;
      row.mean_loss = losses.empty() ? 0.0 : sum / static_cast<double>(losses.size());
      double squares = 0.0;
      for (double l : losses) squares += (l - row.mean_loss) * (l - row.mean_loss);
      row.std_loss = losses.size() > 1 ? std::sqrt(squares / static_cast<double>(losses.size() - 1)) : 0.0;
      rows.push_back(row);
    }
  }
  return rows;
}

std::string summary_csv(const std::vector<SummaryRow>& rows) {
  std::string out = "estimator,budget_checkpoint,mean_loss,std_loss\n";
  for (const auto& r : rows) {
    out += r.estimator + ',' + format_number(r.budget_checkpoint) + ',' + format_number(r.mean_loss) + ',' +
           format_number(r.std_loss) + '\n';
  }
  return out;
}

ExperimentResult run_experiment(const ExperimentConfig& config) {
  if (config.estimators.empty() || config.seeds.empty()) {
    throw std::invalid_argument("experiment needs at least one estimator and one seed");
  }
  const std::filesystem::path dir(config.output_dir);
  std::filesystem::create_directories(dir);

  ExperimentResult result;
  for (const auto& estimator : config.estimators) {
    for (std::uint64_t seed : config.seeds) {
      RunRecord record;
      record.estimator = estimator;
      record.seed = seed;
      record.path = dir / run_file_name(config.problem, estimator, seed);
      result.runs.push_back(std::move(record));
    }
  }

  // Fail fast on configuration errors before launching the grid.
  {
    const auto probe = make_problem(config, config.seeds.front());
    BudgetLedger ledger;
    const int horizon = probe->horizon();
    if (!(config.budget >= charge_tuning(ledger, probe->cost_model(), horizon).spent)) {
      throw std::invalid_argument("budget smaller than one tune");
    }
  }

  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(result.runs.size());
  const auto worker = [&] {
    for (std::size_t i = next++; i < result.runs.size(); i = next++) {
      RunRecord& record = result.runs[i];
      try {
        const auto problem = make_problem(config, record.seed);
        record.result = run(*problem, optimizer_config(config, record.estimator, record.seed), config.budget);
        write_file(record.path, trace_csv(record.result));
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const int jobs = std::max(1, std::min<int>(config.jobs, static_cast<int>(result.runs.size())));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    for (int j = 0; j < jobs; ++j) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  result.summary = summarize(config, result.runs);
  result.summary_path = dir / (config.problem + "__summary.csv");
  write_file(result.summary_path, summary_csv(result.summary));
  return result;
}

std::vector<double> default_rate_grid() {
  std::vector<double> grid;
  for (double a : {1.0, 2.2, 5.5}) {
    for (int b : {0, 1, 2, 3, 5}) grid.push_back(a * std::pow(10.0, -b));
  }
  std::sort(grid.begin(), grid.end());
  return grid;
}

GridSearchResult grid_search_reference_rate(const ExperimentConfig& config, std::vector<double> candidates) {
  if (candidates.empty()) throw std::invalid_argument("grid search: no candidate rates");
  std::sort(candidates.begin(), candidates.end());
  const std::uint64_t seed = config.seeds.empty() ? 0 : config.seeds.front();
  const auto problem = make_problem(config, seed);
  const double budget =
      config.grid_budget > 0.0 ? config.grid_budget : 50.0 * problem->cost_model().cost(problem->horizon());

  GridSearchResult result;
  double best_loss = std::numeric_limits<double>::infinity();
  for (double rate : candidates) {
    double final_loss = std::numeric_limits<double>::infinity();
    try {
      ExperimentConfig trial = config;
      trial.reference_rate = rate;
      const auto outcome = run(*problem, optimizer_config(trial, EstimatorChoice::untruncated(), seed), budget);
      const double last = outcome.trace.back().evaluation_loss;
      if (!outcome.diverged && std::isfinite(last)) final_loss = last;
    } catch (const InnerDivergence&) {
    } catch (const std::invalid_argument&) {
      throw;
    }
    result.rates.push_back(rate);
    result.final_losses.push_back(final_loss);
    if (final_loss < best_loss) {
      best_loss = final_loss;
      result.best_rate = rate;
    }
  }
  if (!std::isfinite(best_loss)) throw std::runtime_error("grid search: every candidate rate diverged");
  return result;
}

std::string export_dataset(const ExperimentConfig& config, std::uint64_t seed) {
  if (config.problem != "lotka_volterra") {
    throw std::invalid_argument("export-dataset supports only the lotka_volterra problem");
  }
  LotkaVolterraSettings settings = config.lotka_volterra;
  settings.seed = seed;
  return format_lv_dataset(generate_lv_dataset(settings), seed);
}

}  // namespace rtel
