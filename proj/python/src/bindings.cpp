#include <sstream>

#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "netnewton/analysis.hpp"
#include "netnewton/commands.hpp"
#include "netnewton/config.hpp"
#include "netnewton/engine.hpp"
#include "netnewton/errors.hpp"
#include "netnewton/newton_core.hpp"
#include "netnewton/objectives.hpp"
#include "netnewton/topology.hpp"

#define STRINGIFY(x) #x
#define MACRO_STRINGIFY(x) STRINGIFY(x)

namespace py = pybind11;
using namespace netnewton;

namespace {

template <typename F>
py::array_t<double> column(const Trace& tr, F get) {
  py::array_t<double> out(static_cast<py::ssize_t>(tr.records.size()));
  auto v = out.mutable_unchecked<1>();
  for (std::size_t k = 0; k < tr.records.size(); ++k) v(static_cast<py::ssize_t>(k)) = get(tr.records[k]);
  return out;
}

template <typename T>
std::string key_values(const T& value) {
  std::ostringstream os;
  write_key_values(os, value);
  return os.str();
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Asynchronous network Newton simulator and verification tools.";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<GenerationError>(m, "GenerationError", base.ptr());
  py::register_exception<DimensionError>(m, "DimensionError", base.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<ParseError>(m, "ParseError", base.ptr());
  py::register_exception<SolveError>(m, "SolveError", base.ptr());

  // topology
  py::enum_<GraphKind>(m, "GraphKind")
      .value("complete", GraphKind::complete)
      .value("ring", GraphKind::ring)
      .value("path", GraphKind::path)
      .value("cyclic_k_regular", GraphKind::cyclic_k_regular)
      .value("erdos_renyi", GraphKind::erdos_renyi)
      .value("custom", GraphKind::custom);

  py::class_<Graph>(m, "Graph")
      .def_static("from_edges", &Graph::from_edges, py::arg("n"), py::arg("edges"),
                  py::arg("kind") = GraphKind::custom)
      .def_property_readonly("n", &Graph::size)
      .def_property_readonly("kind", &Graph::kind)
      .def_property_readonly("edges", &Graph::edges)
      .def("neighbors", &Graph::neighbors)
      .def("degree", &Graph::degree)
      .def("connected", &Graph::connected)
      .def("laplacian", &Graph::laplacian);

  m.def(
      "build_graph",
      [](const std::string& kind, int n, std::uint64_t seed, int k, double edge_probability) {
        return build_graph({graph_kind_from_string(kind), k, edge_probability}, n, seed);
      },
      py::arg("kind"), py::arg("n"), py::arg("seed") = 0, py::arg("k") = 4, py::arg("edge_probability") = 0.5);
  m.def("algebraic_connectivity", &algebraic_connectivity);

  py::class_<ConsensusMatrix>(m, "ConsensusMatrix")
      .def_readonly("W", &ConsensusMatrix::W)
      .def_readonly("delta", &ConsensusMatrix::delta)
      .def_readonly("Delta", &ConsensusMatrix::Delta)
      .def_readonly("d_max", &ConsensusMatrix::d_max);
  m.def("build_consensus", &build_consensus);
  m.def(
      "validate_consensus",
      [](const ConsensusMatrix& W, const Graph* g) {
        py::dict out;
        for (const auto& c : validate_consensus(W, g).checks) {
          out[py::str(c.name)] = py::make_tuple(c.passed, c.measured, c.detail);
        }
        return out;
      },
      py::arg("W"), py::arg("graph") = nullptr);

  // objectives
  py::class_<LocalObjective>(m, "LocalObjective")
      .def_static("quadratic", &LocalObjective::quadratic, py::arg("c"), py::arg("b"))
      .def_static("logistic", &LocalObjective::logistic, py::arg("features"), py::arg("labels"),
                  py::arg("upsilon"), py::arg("total_samples"), py::arg("n_agents"))
      .def_property_readonly("dim", &LocalObjective::dim)
      .def_property_readonly("is_quadratic", &LocalObjective::is_quadratic)
      .def("value", [](const LocalObjective& f, const Eigen::VectorXd& x) { return f.value(x); })
      .def("gradient", [](const LocalObjective& f, const Eigen::VectorXd& x) { return f.gradient(x); })
      .def("hessian", [](const LocalObjective& f, const Eigen::VectorXd& x) { return f.hessian(x); });

  py::class_<CurvatureConstants>(m, "CurvatureConstants")
      .def_readonly("m", &CurvatureConstants::m)
      .def_readonly("M", &CurvatureConstants::M)
      .def_readonly("L", &CurvatureConstants::L);

  py::class_<ProblemSpec>(m, "ProblemSpec")
      .def_readonly("graph", &ProblemSpec::graph)
      .def_readonly("W", &ProblemSpec::W)
      .def_readonly("locals", &ProblemSpec::locals)
      .def_readonly("alpha", &ProblemSpec::alpha)
      .def_readonly("curvature", &ProblemSpec::curvature)
      .def_readonly("dim", &ProblemSpec::dim)
      .def_property_readonly("n", &ProblemSpec::n);
  m.def("make_problem",
        py::overload_cast<Graph, std::vector<LocalObjective>, double>(&make_problem), py::arg("graph"),
        py::arg("locals"), py::arg("alpha"));
  m.def("penalized_value", &penalized_value);
  m.def("penalized_gradient", &penalized_gradient);
  m.def("penalized_hessian", &penalized_hessian);
  m.def("consensus_value", &consensus_value);

  py::class_<Dataset>(m, "Dataset")
      .def_readonly("features", &Dataset::features)
      .def_readonly("labels", &Dataset::labels)
      .def_readonly("dim", &Dataset::dim)
      .def_property_readonly("size", &Dataset::size);
  m.def(
      "parse_libsvm_file",
      [](const std::string& path, bool zero_as_negative) { return parse_libsvm_file(path, {zero_as_negative}); },
      py::arg("path"), py::arg("zero_as_negative") = false);
  m.def(
      "parse_libsvm",
      [](const std::string& text, bool zero_as_negative) {
        std::istringstream in(text);
        return parse_libsvm(in, {zero_as_negative});
      },
      py::arg("text"), py::arg("zero_as_negative") = false);
  m.def("partition_uniform", &partition_uniform, py::arg("dataset"), py::arg("n"), py::arg("upsilon"),
        py::arg("seed"));

  // newton_core
  py::enum_<ScalingMode>(m, "ScalingMode")
      .value("uniform_unscaled", ScalingMode::uniform_unscaled)
      .value("scaled", ScalingMode::scaled);

  py::class_<DenseSplitting>(m, "DenseSplitting")
      .def_readonly("H", &DenseSplitting::H)
      .def_readonly("D", &DenseSplitting::D)
      .def_readonly("B", &DenseSplitting::B)
      .def_readonly("D_inv", &DenseSplitting::D_inv)
      .def("normalized_B", &DenseSplitting::normalized_B);
  m.def("dense_splitting", &dense_splitting);
  m.def("dense_hatH_inverse", &dense_hatH_inverse);
  m.def("series_inverse_K", &series_inverse_K, py::arg("spec"), py::arg("x"), py::arg("K"));
  m.def("nn_k_direction", &nn_k_direction, py::arg("spec"), py::arg("x"), py::arg("K"));

  py::class_<TheoryConstants>(m, "TheoryConstants")
      .def_readonly("rho", &TheoryConstants::rho)
      .def_readonly("lambda_", &TheoryConstants::lambda)
      .def_readonly("Lambda", &TheoryConstants::Lambda)
      .def_readonly("pi_min", &TheoryConstants::pi_min)
      .def_readonly("Pi_max", &TheoryConstants::Pi_max)
      .def_readonly("eps", &TheoryConstants::eps)
      .def_readonly("eps_as_max", &TheoryConstants::eps_as_max)
      .def_readonly("eps_lin_max", &TheoryConstants::eps_lin_max)
      .def_readonly("eps_valid_as", &TheoryConstants::eps_valid_as)
      .def_readonly("eps_valid_lin", &TheoryConstants::eps_valid_lin)
      .def_readonly("beta", &TheoryConstants::beta)
      .def_readonly("C1", &TheoryConstants::C1)
      .def_readonly("C2", &TheoryConstants::C2)
      .def_readonly("C3", &TheoryConstants::C3)
      .def_readonly("Gamma1", &TheoryConstants::Gamma1)
      .def_readonly("t_quad_onset", &TheoryConstants::t_quad_onset)
      .def("decrease_coefficient", &TheoryConstants::decrease_coefficient)
      .def("gamma_t", &TheoryConstants::gamma_t)
      .def("theta_upper", &TheoryConstants::theta_upper)
      .def("quadratic_band", &TheoryConstants::quadratic_band)
      .def("report", [](const TheoryConstants& c) { return key_values(c); });
  m.def("theory_constants",
        py::overload_cast<const ProblemSpec&, const std::vector<double>&, double, std::optional<double>>(
            &theory_constants),
        py::arg("spec"), py::arg("p"), py::arg("eps"), py::arg("initial_gap") = std::nullopt);
  m.def("eps_as_bound", &eps_as_bound);

  // async_engine
  py::class_<ActivationSchedule>(m, "ActivationSchedule")
      .def(py::init([](std::vector<double> p, ScalingMode mode, std::uint64_t seed) {
             return ActivationSchedule{std::move(p), mode, seed};
           }),
           py::arg("p"), py::arg("mode") = ScalingMode::scaled, py::arg("seed") = 0)
      .def_static("uniform", &ActivationSchedule::uniform)
      .def_readwrite("p", &ActivationSchedule::p)
      .def_readwrite("mode", &ActivationSchedule::mode)
      .def_readwrite("seed", &ActivationSchedule::seed);

  py::class_<TimeModel>(m, "TimeModel")
      .def(py::init<>())
      .def_readwrite("cost", &TimeModel::cost)
      .def_static("slow_agent", &TimeModel::slow_agent);

  py::class_<Reference>(m, "Reference")
      .def_readonly("x_star", &Reference::x_star)
      .def_readonly("F_star", &Reference::F_star)
      .def_readonly("solver_residual", &Reference::solver_residual);

  py::class_<RunConfig>(m, "RunConfig")
      .def(py::init<>())
      .def_readwrite("schedule", &RunConfig::schedule)
      .def_readwrite("eps", &RunConfig::eps)
      .def_readwrite("T", &RunConfig::T)
      .def_readwrite("record_every", &RunConfig::record_every)
      .def_readwrite("x0", &RunConfig::x0)
      .def_readwrite("time", &RunConfig::time)
      .def_readwrite("reference", &RunConfig::reference)
      .def_readwrite("stop_rel_err", &RunConfig::stop_rel_err);

  py::class_<Trace>(m, "Trace")
      .def_readonly("algorithm", &Trace::algorithm)
      .def_readonly("final_x", &Trace::final_x)
      .def_property_readonly("t", [](const Trace& tr) { return column(tr, [](const auto& r) { return double(r.t); }); })
      .def_property_readonly("active_agent",
                             [](const Trace& tr) { return column(tr, [](const auto& r) { return double(r.active_agent); }); })
      .def_property_readonly("F", [](const Trace& tr) { return column(tr, [](const auto& r) { return r.F; }); })
      .def_property_readonly("rel_err", [](const Trace& tr) { return column(tr, [](const auto& r) { return r.rel_err; }); })
      .def_property_readonly("weighted_err",
                             [](const Trace& tr) { return column(tr, [](const auto& r) { return r.weighted_err; }); })
      .def_property_readonly("elapsed", [](const Trace& tr) { return column(tr, [](const auto& r) { return r.elapsed; }); })
      .def("__len__", [](const Trace& tr) { return tr.records.size(); });

  py::class_<AsyncNewtonNetwork>(m, "AsyncNewtonNetwork")
      .def(py::init<const ProblemSpec&, const Eigen::VectorXd&>(), py::keep_alive<1, 2>())
      .def("activate", &AsyncNewtonNetwork::activate)
      .def("stacked_x", &AsyncNewtonNetwork::stacked_x)
      .def("stacked_directions", &AsyncNewtonNetwork::stacked_directions)
      .def("buffer_staleness", &AsyncNewtonNetwork::buffer_staleness)
      .def("objective", &AsyncNewtonNetwork::objective)
      .def("stacked_D", &AsyncNewtonNetwork::stacked_D);

  m.def("run_async_newton", &run_async_newton, py::call_guard<py::gil_scoped_release>());
  m.def("run_sync_newton", &run_sync_newton, py::arg("spec"), py::arg("cfg"), py::arg("K") = 1,
        py::call_guard<py::gil_scoped_release>());
  m.def("run_gossip", &run_gossip, py::call_guard<py::gil_scoped_release>());

  py::class_<OneStepExpectation>(m, "OneStepExpectation")
      .def_readonly("F", &OneStepExpectation::F)
      .def_readonly("expected_F", &OneStepExpectation::expected_F)
      .def_readonly("supermartingale_rhs", &OneStepExpectation::supermartingale_rhs)
      .def_readonly("weighted_error", &OneStepExpectation::weighted_error)
      .def_readonly("expected_weighted_error", &OneStepExpectation::expected_weighted_error)
      .def_readonly("recursion_rhs", &OneStepExpectation::recursion_rhs)
      .def_readonly("recursion_rhs_limit", &OneStepExpectation::recursion_rhs_limit)
      .def_readonly("constants", &OneStepExpectation::constants);
  m.def("enumerate_one_step_expectation", &enumerate_one_step_expectation);

  // analysis
  m.def("solve_reference", &solve_reference);
  m.def("solve_constrained_reference", &solve_constrained_reference);
  m.def("weighted_error", &weighted_error);
  m.def("steps_to_epsilon", &steps_to_epsilon);
  m.def("time_to_epsilon", &time_to_epsilon);

  py::class_<RateReport>(m, "RateReport")
      .def_readonly("empirical_rate", &RateReport::empirical_rate)
      .def_readonly("beta_bound", &RateReport::beta_bound)
      .def_readonly("bound_satisfied", &RateReport::bound_satisfied)
      .def_readonly("envelope_points", &RateReport::envelope_points)
      .def_readonly("envelope_violations", &RateReport::envelope_violations)
      .def_readonly("quad_window", &RateReport::quad_window)
      .def_readonly("warnings", &RateReport::warnings)
      .def("report", [](const RateReport& r) { return key_values(r); });
  m.def(
      "aggregate_rates",
      [](const std::vector<Trace>& traces, double F_star, const TheoryConstants& c, double envelope_floor) {
        RateOptions o;
        o.envelope_floor = envelope_floor;
        return aggregate_rates(traces, F_star, c, o);
      },
      py::arg("traces"), py::arg("F_star"), py::arg("constants"), py::arg("envelope_floor") = 0.0);

  // cli
  py::class_<ExperimentConfig>(m, "ExperimentConfig")
      .def_property_readonly("n", [](const ExperimentConfig& c) { return c.topology.n; })
      .def_property_readonly("topology", [](const ExperimentConfig& c) { return c.topology.kind; })
      .def_property_readonly("family", [](const ExperimentConfig& c) { return c.objective.family; })
      .def_property_readonly("algorithms", [](const ExperimentConfig& c) { return c.run.algorithms; })
      .def_property_readonly("T", [](const ExperimentConfig& c) { return c.run.T; })
      .def_property_readonly("seeds", [](const ExperimentConfig& c) { return c.run.seeds; });
  m.def("load_config", &load_config);
  m.def(
      "parse_config", [](const std::string& text) {
        std::istringstream in(text);
        return parse_config(in);
      });
  m.def("config_to_string", [](const ExperimentConfig& c) {
    std::ostringstream os;
    write_config(os, c);
    return os.str();
  });
  m.def("build_problem", &build_problem, py::arg("cfg"), py::arg("instance_seed") = std::nullopt);
  m.def("build_schedule", &build_schedule, py::arg("cfg"), py::arg("n"), py::arg("seed"));
  m.def("resolve_eps", &resolve_eps, py::arg("eps"), py::arg("spec"), py::arg("schedule"));

  auto command = [](auto fn) {
    return [fn](const std::filesystem::path& config, std::optional<std::filesystem::path> out,
                std::optional<std::uint64_t> seed_override, bool quiet) {
      CommandOptions o;
      o.out_dir = std::move(out);
      o.seed_override = seed_override;
      o.quiet = quiet;
      std::ostringstream sout, serr;
      const int code = fn(config, o, sout, serr);
      return py::make_tuple(code, sout.str(), serr.str());
    };
  };
  m.def("run", command(&cmd_run), py::arg("config"), py::arg("out") = std::nullopt,
        py::arg("seed_override") = std::nullopt, py::arg("quiet") = true);
  m.def("sweep", command(&cmd_sweep), py::arg("config"), py::arg("out") = std::nullopt,
        py::arg("seed_override") = std::nullopt, py::arg("quiet") = true);
  m.def("verify", command(&cmd_verify), py::arg("config"), py::arg("out") = std::nullopt,
        py::arg("seed_override") = std::nullopt, py::arg("quiet") = true);
  m.def(
      "parse_data",
      [](const std::filesystem::path& file, bool zero_as_negative) {
        std::ostringstream sout, serr;
        const int code = cmd_parse_data(file, zero_as_negative, sout, serr);
        return py::make_tuple(code, sout.str(), serr.str());
      },
      py::arg("file"), py::arg("zero_as_negative") = false);

#ifdef VERSION_INFO
  m.attr("__version__") = MACRO_STRINGIFY(VERSION_INFO);
#else
  m.attr("__version__") = "dev";
#endif
}
