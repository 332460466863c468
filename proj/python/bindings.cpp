#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <map>

#include "rtel/experiment.hpp"
#include "rtel/optimizer.hpp"
#include "rtel/telescope.hpp"
#include "rtel/tuning.hpp"

namespace py = pybind11;
using namespace rtel;

namespace {

ExperimentConfig config_from(const std::map<std::string, std::string>& settings) {
  ExperimentConfig config;
  for (const auto& [key, value] : settings) apply_setting(config, key, value);
  return config;
}

Eigen::MatrixXd trace_matrix(const RunResult& result) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(result.trace.size()), 6);
  for (std::size_t i = 0; i < result.trace.size(); ++i) {
    const auto& r = result.trace[i];
    m.row(static_cast<Eigen::Index>(i)) << static_cast<double>(r.step_index), r.budget_spent,
        static_cast<double>(r.gradient_evaluations), static_cast<double>(r.truncation_drawn), r.learning_rate,
        r.evaluation_loss;
  }
  return m;
}

}  // namespace

PYBIND11_MODULE(_rtel, m) {
  m.doc() = "Randomized telescope gradient estimators";

  py::enum_<WeightKind>(m, "WeightKind")
      .value("SingleSample", WeightKind::SingleSample)
      .value("RussianRoulette", WeightKind::RussianRoulette);

  py::class_<CostModel>(m, "CostModel")
      .def(py::init([](std::vector<double> costs, bool reuse) { return CostModel{std::move(costs), reuse}; }),
           py::arg("costs"), py::arg("reuse") = true)
      .def_static("linear", &CostModel::linear, py::arg("horizon"), py::arg("reuse") = true)
      .def_readonly("costs", &CostModel::costs)
      .def_readonly("reuse", &CostModel::reuse)
      .def("cost", &CostModel::cost);

  py::class_<TruncationDistribution>(m, "TruncationDistribution")
      .def(py::init<std::vector<double>>(), py::arg("probs"))
      .def_static("uniform", &TruncationDistribution::uniform)
      .def_static("geometric", &TruncationDistribution::geometric, py::arg("horizon"), py::arg("ratio"))
      .def_static("polynomial", &TruncationDistribution::polynomial, py::arg("horizon"), py::arg("exponent"))
      .def_property_readonly("horizon", &TruncationDistribution::horizon)
      .def_property_readonly("probs",
                             [](const TruncationDistribution& q) {
                               return std::vector<double>(q.probs().begin(), q.probs().end());
                             })
      .def("prob", &TruncationDistribution::prob)
      .def("tail", &TruncationDistribution::tail);

  py::class_<WeightScheme>(m, "WeightScheme")
      .def_property_readonly("kind", &WeightScheme::kind)
      .def("__call__", &WeightScheme::operator(), py::arg("n"), py::arg("N"));
  m.def("make_weight_scheme", &make_weight_scheme, py::arg("kind"), py::arg("q"));

  m.def(
      "rt_estimate",
      [](const std::vector<Vector>& deltas, const WeightScheme& w, const TruncationDistribution& q,
         const CostModel& costs, std::uint64_t seed) {
        Rng rng(seed);
        const auto s = rt_estimate(DifferenceSequence(deltas), w, q, rng, costs);
        return py::make_tuple(s.truncation_index, s.estimate, s.compute_charged);
      },
      py::arg("deltas"), py::arg("weights"), py::arg("q"), py::arg("costs"), py::arg("seed") = 0,
      "One draw; returns (N, estimate, compute charged).");
  m.def(
      "exact_moments",
      [](const std::vector<Vector>& deltas, const WeightScheme& w, const TruncationDistribution& q,
         const CostModel& costs, int max_horizon) {
        const auto e = enumerate_exact_moments(DifferenceSequence(deltas), w, q, costs, max_horizon);
        return py::make_tuple(e.mean, e.expected_squared_norm, e.expected_compute);
      },
      py::arg("deltas"), py::arg("weights"), py::arg("q"), py::arg("costs"), py::arg("max_horizon") = 20,
      "Returns (mean, expected squared norm, expected compute).");

  m.def(
      "optimal_q_ss",
      [](const std::vector<double>& norms, const std::vector<double>& costs) { return optimal_q_ss(norms, costs); },
      py::arg("delta_norms"), py::arg("costs"));
  m.def(
      "optimal_q_rr",
      [](const std::vector<double>& norms, const std::vector<double>& costs) { return optimal_q_rr(norms, costs); },
      py::arg("delta_norms"), py::arg("costs"));
  m.def(
      "greedy_subsequence_select",
      [](const Eigen::MatrixXd& distances, const CostModel& costs, WeightKind kind) {
        const auto table = SquaredDistanceTable::from_values(distances, 0.9);
        const auto s = greedy_subsequence_select(table, costs, kind);
        return std::vector<int>(s.indices().begin(), s.indices().end());
      },
      py::arg("distances"), py::arg("costs"), py::arg("kind"),
      "Selects base levels from an (H+1)x(H+1) squared distance table.");

  py::class_<GradientSequence>(m, "GradientSequence")
      .def_property_readonly("name", &GradientSequence::name)
      .def_property_readonly("horizon", &GradientSequence::horizon)
      .def_property_readonly("dimension", &GradientSequence::dimension)
      .def_property_readonly("cost_model", &GradientSequence::cost_model)
      .def("initial_parameters", &GradientSequence::initial_parameters)
      .def(
          "gradients",
          [](const GradientSequence& p, const Vector& theta, const std::vector<int>& levels, std::uint64_t seed) {
            Rng rng(seed);
            return p.gradients(theta, levels, rng);
          },
          py::arg("theta"), py::arg("levels"), py::arg("seed") = 0)
      .def(
          "loss",
          [](const GradientSequence& p, const Vector& theta, int level, std::uint64_t seed) {
            Rng rng(seed);
            return p.loss(theta, level, rng);
          },
          py::arg("theta"), py::arg("level"), py::arg("seed") = 0);

  m.def(
      "make_problem",
      [](const std::map<std::string, std::string>& settings, std::uint64_t seed) {
        return make_problem(config_from(settings), seed);
      },
      py::arg("settings") = std::map<std::string, std::string>{}, py::arg("seed") = 0,
      "Builds a problem from config settings, e.g. {'problem': 'quadratic_meta'}.");

  m.def(
      "run",
      [](const std::map<std::string, std::string>& settings, const std::string& estimator, std::uint64_t seed) {
        const auto config = config_from(settings);
        const auto problem = make_problem(config, seed);
        const auto result = run(*problem, optimizer_config(config, EstimatorChoice::parse(estimator), seed),
                                config.budget);
        return py::make_tuple(trace_matrix(result), result.parameters);
      },
      py::arg("settings"), py::arg("estimator") = "untruncated", py::arg("seed") = 0,
      "One optimization run. Returns (trace, parameters); trace columns are step, budget_spent, "
      "gradient_evaluations, truncation_drawn, learning_rate, eval_loss (NaN on step rows).");

  m.def(
      "run_experiment",
      [](const std::map<std::string, std::string>& settings) {
        const auto result = run_experiment(config_from(settings));
        py::list rows;
        for (const auto& r : result.summary) {
          rows.append(py::make_tuple(r.estimator, r.budget_checkpoint, r.mean_loss, r.std_loss));
        }
        return py::make_tuple(rows, result.summary_path);
      },
      py::arg("settings"),
      "Writes per-run CSVs and the summary. Returns (rows of (estimator, checkpoint, mean, std), summary path).");

  m.def("default_rate_grid", &default_rate_grid);
  m.def(
      "grid_search",
      [](const std::map<std::string, std::string>& settings, std::vector<double> rates) {
        const auto r = grid_search_reference_rate(config_from(settings), rates.empty() ? default_rate_grid() : rates);
        return py::make_tuple(r.best_rate, r.rates, r.final_losses);
      },
      py::arg("settings"), py::arg("rates") = std::vector<double>{});
  m.def(
      "export_dataset",
      [](const std::map<std::string, std::string>& settings, std::uint64_t seed) {
        return export_dataset(config_from(settings), seed);
      },
      py::arg("settings"), py::arg("seed"));
}
