#include "netnewton/commands.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <ostream>
#include <random>

#include <fmt/format.h>

#include "netnewton/analysis.hpp"
#include "netnewton/errors.hpp"

namespace netnewton {

namespace fs = std::filesystem;

namespace {

int guarded(std::ostream& err, const std::function<int()>& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const ParseError& e) {
    err << "parse error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const SolveError& e) {
    err << "solve error: " << e.what() << '\n';
    return kExitRuntime;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

std::ofstream open_out(const fs::path& path) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  return out;
}

struct AlgorithmResult {
  std::string name;
  std::vector<Trace> traces;
  double F_star = 0.0;
};

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? std::numeric_limits<double>::quiet_NaN() : s / static_cast<double>(v.size());
}

// Mean over traces of the first t reaching eps_rel; unreached traces count
// as their final t. Also returns how many reached.
std::pair<double, int> mean_steps(const std::vector<Trace>& traces, double eps_rel, bool elapsed) {
  std::vector<double> vals;
  int reached = 0;
  for (const auto& tr : traces) {
    if (elapsed) {
      const auto v = time_to_epsilon(tr, eps_rel);
      reached += v.has_value();
      vals.push_back(v.value_or(tr.records.back().elapsed));
    } else {
      const auto v = steps_to_epsilon(tr, eps_rel);
      reached += v.has_value();
      vals.push_back(static_cast<double>(v.value_or(tr.records.back().t)));
    }
  }
  return {mean_of(vals), reached};
}

void write_plot_files(const fs::path& dir, const std::vector<AlgorithmResult>& results,
                      const std::vector<GapSeries>& series) {
  auto data = open_out(dir / "plot_data.dat");
  data << "# blocks: one per algorithm; columns t elapsed_time_units mean_rel_err\n";
  for (std::size_t a = 0; a < results.size(); ++a) {
    data << "# " << results[a].name << '\n';
    const auto& s = series[a];
    for (std::size_t k = 0; k < s.t.size(); ++k) {
      data << fmt::format("{} {:.17g} {:.17g}\n", s.t[k], s.mean_elapsed[k], s.mean_rel_err[k]);
    }
    data << "\n\n";
  }
  auto gp = open_out(dir / "plot.gp");
  gp << "set terminal pngcairo size 900,600\n";
  gp << "set output 'relative_error.png'\n";
  gp << "set logscale y\n";
  gp << "set xlabel 'activations'\n";
  gp << "set ylabel 'mean relative error'\n";
  gp << "plot ";
  for (std::size_t a = 0; a < results.size(); ++a) {
    gp << (a ? ", \\\n     " : "") << fmt::format("'plot_data.dat' index {} using 1:3 with lines title '{}'", a,
                                                  results[a].name);
  }
  gp << '\n';
  gp << "set output 'relative_error_time.png'\n";
  gp << "set xlabel 'elapsed time units'\n";
  gp << "plot ";
  for (std::size_t a = 0; a < results.size(); ++a) {
    gp << (a ? ", \\\n     " : "") << fmt::format("'plot_data.dat' index {} using 2:3 with lines title '{}'", a,
                                                  results[a].name);
  }
  gp << '\n';
}

Eigen::VectorXd constant_x0(const ProblemSpec& spec, double v) {
  return Eigen::VectorXd::Constant(spec.stacked_size(), v);
}

}  // namespace

fs::path resolve_output_dir(const ExperimentConfig& cfg, const CommandOptions& opts) {
  if (opts.out_dir) return *opts.out_dir;
  if (!cfg.outputs.directory.empty()) return cfg.outputs.directory;
  if (const char* env = std::getenv(kOutputEnvVar); env != nullptr && *env != '\0') return env;
  return "netnewton_out";
}

int cmd_run(const fs::path& config, const CommandOptions& opts, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const ExperimentConfig cfg = load_config(config);
    if (cfg.objective.family == "logistic" && !cfg.objective.upsilon_given && !opts.quiet) {
      err << "note: objective.upsilon not set; using 1.0\n";
    }
    const std::uint64_t base_seed = opts.seed_override.value_or(cfg.run.seed);
    const ProblemSpec spec = build_problem(cfg);
    const int n = spec.n();
    const ActivationSchedule sched = build_schedule(cfg, n, base_seed);
    const TimeModel time = build_time_model(cfg, n);
    const Eigen::VectorXd x0 = constant_x0(spec, cfg.run.x0);
    const Reference ref = solve_reference(spec);
    const double eps = resolve_eps(cfg.run.eps, spec, sched);
    const double gap0 = penalized_value(spec, x0) - ref.F_star;
    const auto eps_theory = effective_scaled_eps(sched, eps);
    const TheoryConstants constants = theory_constants(spec, sched.p, eps_theory.value_or(eps), gap0);

    const fs::path dir = resolve_output_dir(cfg, opts);
    fs::create_directories(dir);

    std::vector<AlgorithmResult> results;
    std::optional<Reference> constrained;
    for (const auto& algo : cfg.run.algorithms) {
      AlgorithmResult res;
      res.name = algo;
      RunConfig rc;
      rc.x0 = x0;
      rc.T = cfg.run.T;
      rc.record_every = cfg.run.record_every;
      rc.time = time;
      rc.stop_rel_err = cfg.run.stop_rel_err;
      rc.schedule = sched;
      if (algo == "async_newton") {
        rc.eps = eps;
        rc.reference = ref;
        res.F_star = ref.F_star;
        for (int k = 0; k < cfg.run.seeds; ++k) {
          rc.schedule.seed = base_seed + static_cast<std::uint64_t>(k);
          res.traces.push_back(run_async_newton(spec, rc));
        }
      } else if (algo == "sync_newton") {
        rc.eps = std::stod(cfg.run.sync_eps);
        rc.reference = ref;
        res.F_star = ref.F_star;
        res.name = fmt::format("sync_nn{}", cfg.run.sync_K);
        res.traces.push_back(run_sync_newton(spec, rc, cfg.run.sync_K));
      } else {
        if (!constrained) constrained = solve_constrained_reference(spec);
        rc.eps = 1.0;
        rc.reference = *constrained;
        res.F_star = constrained->F_star;
        for (int k = 0; k < cfg.run.seeds; ++k) {
          rc.schedule.seed = base_seed + static_cast<std::uint64_t>(k);
          res.traces.push_back(run_gossip(spec, rc));
        }
      }
      results.push_back(std::move(res));
    }

    std::vector<GapSeries> series;
    for (const auto& res : results) {
      series.push_back(mean_gap_series(res.traces, res.F_star));
      if (cfg.outputs.traces) {
        for (std::size_t k = 0; k < res.traces.size(); ++k) {
          const auto seed = res.name.rfind("sync", 0) == 0 ? base_seed : base_seed + k;
          auto f = open_out(dir / "traces" / fmt::format("{}_seed{}.csv", res.name, seed));
          write_trace_csv(f, res.traces[k]);
        }
      }
      if (cfg.outputs.snapshots) {
        for (std::size_t k = 0; k < res.traces.size(); ++k) {
          for (const auto& snap : res.traces[k].snapshots) {
            auto f = open_out(dir / "snapshots" /
                              fmt::format("{}_seed{}_t{}.txt", res.name, base_seed + k, snap.t));
            write_snapshot(f, snap);
          }
        }
      }
    }

    {
      auto agg = open_out(dir / "aggregate.csv");
      agg << "algorithm,t,mean_gap,min_gap,max_gap,mean_rel_err,mean_elapsed_time_units\n";
      for (std::size_t a = 0; a < results.size(); ++a) {
        const auto& s = series[a];
        for (std::size_t k = 0; k < s.t.size(); ++k) {
          agg << fmt::format("{},{},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g}\n", results[a].name, s.t[k],
                             s.mean_gap[k], s.min_gap[k], s.max_gap[k], s.mean_rel_err[k],
                             s.mean_elapsed[k]);
        }
      }
    }

    {
      auto rep = open_out(dir / "constants.txt");
      rep << "[problem]\n";
      rep << fmt::format("n = {}\ndim = {}\nalpha = {:.17g}\nm = {:.17g}\nM = {:.17g}\nL = {:.17g}\n", n,
                         spec.dim, spec.alpha, spec.curvature.m, spec.curvature.M, spec.curvature.L);
      rep << fmt::format("delta = {:.17g}\nDelta = {:.17g}\nd_max = {}\n", spec.W.delta, spec.W.Delta,
                         spec.W.d_max);
      rep << fmt::format("schedule_mode = {}\nstep_eps = {:.17g}\n", to_string(sched.mode), eps);
      rep << "\n[reference]\n";
      rep << fmt::format("F_star = {:.17g}\nsolver_residual = {:.3g}\n", ref.F_star, ref.solver_residual);
      if (constrained) rep << fmt::format("constrained_F_star = {:.17g}\n", constrained->F_star);
      rep << "\n[theory]\n";
      if (!eps_theory) rep << "note = unscaled steps with nonuniform p; constants use the raw eps\n";
      write_key_values(rep, constants);
      for (std::size_t a = 0; a < results.size(); ++a) {
        rep << "\n[" << results[a].name << "]\n";
        const auto s2 = mean_steps(results[a].traces, 1e-2, false);
        const auto s3 = mean_steps(results[a].traces, 1e-3, false);
        const auto e3 = mean_steps(results[a].traces, 1e-3, true);
        rep << fmt::format("mean_steps_to_1e-2 = {:.17g}\nreached_1e-2 = {}\n", s2.first, s2.second);
        rep << fmt::format("mean_steps_to_1e-3 = {:.17g}\nreached_1e-3 = {}\n", s3.first, s3.second);
        rep << fmt::format("mean_time_to_1e-3 = {:.17g}\n", e3.first);
        if (results[a].name == "async_newton") {
          RateOptions ro;
          ro.envelope_floor = 1e-12 * std::abs(gap0);
          write_key_values(rep, aggregate_rates(series[a], constants, ro));
        }
      }
    }
    if (cfg.outputs.plot) write_plot_files(dir, results, series);

    if (!opts.quiet) {
      for (std::size_t a = 0; a < results.size(); ++a) {
        const auto& s = series[a];
        out << fmt::format("{}: runs={} final_mean_rel_err={:.3e} mean_steps_to_1e-3={:.2f}\n", results[a].name,
                           results[a].traces.size(), s.mean_rel_err.back(),
                           mean_steps(results[a].traces, 1e-3, false).first);
      }
      out << "artifacts written to " << dir.string() << '\n';
    }
    return static_cast<int>(kExitOk);
  });
}

int cmd_sweep(const fs::path& config, const CommandOptions& opts, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const ExperimentConfig cfg = load_config(config);
    const std::uint64_t base_seed = opts.seed_override.value_or(cfg.run.seed);
    const fs::path dir = resolve_output_dir(cfg, opts);
    auto table = open_out(dir / "sweep.csv");
    table << "topology,n,seeds,reached,mean_steps,min_steps,max_steps,mean_eps,mean_rho,status\n";
    for (const auto& topo : cfg.sweep.topologies) {
      for (int n : cfg.sweep.sizes) {
        ExperimentConfig cell = cfg;
        cell.topology.kind = topo;
        cell.topology.n = n;
        if (cell.objective.family == "quadratic") {
          cell.objective.c = fmt::format("random_int({},{})", cfg.sweep.c_lo, cfg.sweep.c_hi);
          cell.objective.b = fmt::format("random_int({},{})", cfg.sweep.b_lo, cfg.sweep.b_hi);
        }
        std::vector<double> steps, epss, rhos;
        int reached = 0;
        std::string status = "ok";
        try {
          for (int k = 0; k < cfg.sweep.seeds; ++k) {
            const std::uint64_t seed = base_seed + static_cast<std::uint64_t>(k);
            const ProblemSpec spec = build_problem(cell, seed);
            const ActivationSchedule sched = build_schedule(cell, n, seed);
            RunConfig rc;
            rc.schedule = sched;
            rc.eps = resolve_eps(cell.run.eps, spec, sched);
            rc.T = cfg.sweep.max_activations;
            rc.reference = solve_reference(spec);
            rc.stop_rel_err = cfg.sweep.target;
            rc.x0 = constant_x0(spec, cfg.run.x0);
            const Trace tr = run_async_newton(spec, rc);
            const auto s = steps_to_epsilon(tr, cfg.sweep.target);
            reached += s.has_value();
            steps.push_back(static_cast<double>(s.value_or(cfg.sweep.max_activations)));
            epss.push_back(rc.eps);
            rhos.push_back(theory_constants(spec, sched.p, rc.eps).rho);
          }
          if (reached < cfg.sweep.seeds) status = "budget_exhausted";
        } catch (const std::exception& e) {
          status = std::string("error: ") + e.what();
          for (auto& ch : status) {
            if (ch == ',' || ch == '\n') ch = ';';
          }
        }
        const double lo = steps.empty() ? NAN : *std::min_element(steps.begin(), steps.end());
        const double hi = steps.empty() ? NAN : *std::max_element(steps.begin(), steps.end());
        table << fmt::format("{},{},{},{},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{}\n", topo, n,
                             steps.size(), reached, mean_of(steps), lo, hi, mean_of(epss),
                             mean_of(rhos), status);
        table.flush();
        if (!opts.quiet) {
          out << fmt::format("{:>12} n={:<3} mean_steps={:.1f} reached={}/{} {}\n", topo, n, mean_of(steps),
                             reached, steps.size(), status);
        }
      }
    }
    return static_cast<int>(kExitOk);
  });
}

bool VerifyReport::ok() const {
  for (const auto& c : checks) {
    if (c.status == CheckStatus::fail) return false;
  }
  return true;
}

VerifyReport verify_instance(const ExperimentConfig& cfg, std::optional<std::uint64_t> seed_override) {
  VerifyReport rep;
  auto add = [&rep](std::string name, bool pass, double measured, std::string detail) {
    rep.checks.push_back({std::move(name), pass ? CheckStatus::pass : CheckStatus::fail, measured,
                          std::move(detail)});
  };
  auto na = [&rep](std::string name, std::string detail) {
    rep.checks.push_back({std::move(name), CheckStatus::not_applicable, 0.0, std::move(detail)});
  };

  ProblemSpec spec = build_problem(cfg);
  if (cfg.verify.tamper_row_sum != 0.0) {
    ConsensusMatrix W = spec.W;
    W.W(0, 0) += cfg.verify.tamper_row_sum;
    spec = make_problem(spec.graph, W, spec.locals, spec.alpha);
  }
  for (const auto& c : validate_consensus(spec.W, &spec.graph).checks) {
    add("consensus." + c.name, c.passed, c.measured, c.detail);
  }

  const int n = spec.n();
  const std::uint64_t seed = seed_override.value_or(cfg.verify.seed);
  const ActivationSchedule sched = build_schedule(cfg, n, seed);
  const double eps = cfg.verify.eps ? *cfg.verify.eps : resolve_eps(cfg.run.eps, spec, sched);
  const Reference ref = solve_reference(spec);
  add("reference.residual", ref.solver_residual <= 1e-9, ref.solver_residual, "||grad F(x*)||");

  const Eigen::VectorXd x0 = constant_x0(spec, cfg.run.x0);
  const auto eps_theory = effective_scaled_eps(sched, eps);
  const TheoryConstants tc =
      theory_constants(spec, sched.p, eps_theory.value_or(eps), penalized_value(spec, x0) - ref.F_star);

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> coord(-5.0, 5.0);
  double split = 0.0, lemma8 = 0.0, direction = 0.0;
  double nb_lo = std::numeric_limits<double>::infinity(), nb_hi = -nb_lo;
  double hinv_lo = std::numeric_limits<double>::infinity(), hinv_hi = 0.0;
  double thm1 = -std::numeric_limits<double>::infinity();
  double lem11 = -std::numeric_limits<double>::infinity();
  for (int s = 0; s < cfg.verify.states; ++s) {
    Eigen::VectorXd x(spec.stacked_size());
    for (Eigen::Index k = 0; k < x.size(); ++k) x(k) = coord(rng);
    const DenseSplitting ds = dense_splitting(spec, x);
    split = std::max(split, (ds.H - (ds.D - ds.B)).cwiseAbs().maxCoeff());
    const Eigen::MatrixXd nbm = ds.normalized_B();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es_nb(0.5 * (nbm + nbm.transpose()), Eigen::EigenvaluesOnly);
    nb_lo = std::min(nb_lo, es_nb.eigenvalues().minCoeff());
    nb_hi = std::max(nb_hi, es_nb.eigenvalues().maxCoeff());
    const Eigen::MatrixXd hinv = dense_hatH_inverse(spec, x);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es_h(0.5 * (hinv + hinv.transpose()), Eigen::EigenvaluesOnly);
    hinv_lo = std::min(hinv_lo, es_h.eigenvalues().minCoeff());
    hinv_hi = std::max(hinv_hi, es_h.eigenvalues().maxCoeff());
    const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(x.size(), x.size());
    lemma8 = std::max(lemma8, (ds.D_sqrt * (I - hinv * ds.H) - nbm * nbm * ds.D_sqrt).norm());
    const AsyncNewtonNetwork net(spec, x);
    direction = std::max(direction, (net.stacked_directions() + hinv * penalized_gradient(spec, x))
                                        .cwiseAbs()
                                        .maxCoeff());
    if (eps_theory && tc.eps_valid_as) {
      const auto e = enumerate_one_step_expectation(spec, sched, eps, x, ref);
      thm1 = std::max(thm1, e.expected_F - e.supermartingale_rhs);
      if (tc.eps_valid_lin) lem11 = std::max(lem11, e.expected_weighted_error - e.recursion_rhs);
    }
  }
  add("splitting.H_eq_D_minus_B", split <= 1e-12, split, "max |H - (D - B)|");
  add("spectral.normalized_B", nb_lo >= -1e-10 && nb_hi <= tc.rho + 1e-10, nb_hi,
      fmt::format("eigenvalues in [{:.3g}, {:.6g}], rho = {:.6g}", nb_lo, nb_hi, tc.rho));
  add("spectral.hatH_inverse", hinv_lo >= tc.lambda - 1e-10 && hinv_hi <= tc.Lambda + 1e-10, hinv_hi,
      fmt::format("eigenvalues in [{:.6g}, {:.6g}], bounds [{:.6g}, {:.6g}]", hinv_lo, hinv_hi, tc.lambda,
                  tc.Lambda));
  add("identity.error_recursion", lemma8 <= 1e-10, lemma8, "Frobenius residual");
  add("direction.fresh_buffers", direction <= 1e-10, direction, "max |d_dist + hatH^-1 g|");

  if (eps_theory && tc.eps_valid_as) {
    add("theory.supermartingale", thm1 <= 1e-10, thm1, "max E[F+] - bound");
  } else {
    na("theory.supermartingale", fmt::format("eps outside (0, {:.6g}]", tc.eps_as_max));
  }
  if (eps_theory && tc.eps_valid_lin) {
    add("theory.weighted_error_recursion", lem11 <= 1e-9, lem11, "max E[e+] - bound");
    std::vector<Trace> traces;
    RunConfig rc;
    rc.schedule = sched;
    rc.eps = eps;
    rc.T = cfg.verify.envelope_T;
    rc.x0 = x0;
    rc.reference = ref;
    for (int k = 0; k < cfg.verify.envelope_seeds; ++k) {
      rc.schedule.seed = seed + static_cast<std::uint64_t>(k);
      traces.push_back(run_async_newton(spec, rc));
    }
    RateOptions ro;
    ro.envelope_floor = 1e-12 * std::abs(penalized_value(spec, x0) - ref.F_star);
    const RateReport rr = aggregate_rates(traces, ref.F_star, tc, ro);
    add("theory.linear_envelope", rr.envelope_violations == 0 && rr.envelope_points > 0, rr.worst_ratio,
        fmt::format("{} points, {} violations, 1-beta = {:.9g}", rr.envelope_points, rr.envelope_violations,
                    rr.beta_bound));
  } else {
    na("theory.weighted_error_recursion", fmt::format("eps outside (0, {:.6g})", tc.eps_lin_max));
    na("theory.linear_envelope", fmt::format("eps outside (0, {:.6g})", tc.eps_lin_max));
  }
  return rep;
}

void write_verify_report(std::ostream& out, const VerifyReport& report) {
  for (const auto& c : report.checks) {
    const char* tag = c.status == CheckStatus::pass ? "PASS" : c.status == CheckStatus::fail ? "FAIL" : "N/A ";
    out << fmt::format("{} {:<36} measured={:<12.4g} {}\n", tag, c.name, c.measured, c.detail);
  }
  out << (report.ok() ? "verification passed\n" : "verification FAILED\n");
}

int cmd_verify(const fs::path& config, const CommandOptions& opts, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const ExperimentConfig cfg = load_config(config);
    const VerifyReport rep = verify_instance(cfg, opts.seed_override);
    if (!opts.quiet || !rep.ok()) write_verify_report(out, rep);
    return static_cast<int>(rep.ok() ? kExitOk : kExitVerify);
  });
}

int cmd_parse_data(const fs::path& file, bool zero_as_negative, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    if (!fs::exists(file)) throw ConfigError("dataset file not found: " + file.string());
    LibsvmOptions o;
    o.zero_as_negative = zero_as_negative;
    const Dataset ds = parse_libsvm_file(file.string(), o);
    long pos = 0;
    for (double v : ds.labels) pos += v > 0.0;
    out << fmt::format("samples = {}\ndim = {}\npositives = {}\nnegatives = {}\n", ds.size(), ds.dim, pos,
                       ds.size() - pos);
    return static_cast<int>(kExitOk);
  });
}

}  // namespace netnewton
