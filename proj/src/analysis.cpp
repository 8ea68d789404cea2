#include "netnewton/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <ostream>

#include <fmt/format.h>

#include "netnewton/errors.hpp"

namespace netnewton {

namespace {

struct NewtonResult {
  Eigen::VectorXd x;
  double residual = 0.0;
  int iterations = 0;
};

// Damped Newton with Armijo backtracking. A step that fails the Armijo test
// but reduces the gradient norm is accepted; near the optimum the objective
// difference is below rounding.
NewtonResult damped_newton(const std::function<double(const Eigen::VectorXd&)>& value,
                           const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& grad,
                           const std::function<Eigen::MatrixXd(const Eigen::VectorXd&)>& hess,
                           Eigen::VectorXd x, const std::string& what) {
  Eigen::VectorXd g = grad(x);
  const double tol = kReferenceTolerance * std::max(1.0, g.norm());
  int it = 0;
  while (g.norm() > tol) {
    if (it == kReferenceMaxIterations) {
      throw SolveError(fmt::format("{}: Newton did not converge in {} iterations", what, it),
                       g.norm());
    }
    ++it;
    const Eigen::MatrixXd H = hess(x);
    Eigen::LLT<Eigen::MatrixXd> llt(H);
    if (llt.info() != Eigen::Success) throw SolveError(what + ": Hessian not positive definite", g.norm());
    Eigen::VectorXd s = -llt.solve(g);
    s += llt.solve(-g - H * s);  // one refinement pass
    const double f = value(x);
    const double slope = g.dot(s);
    double step = 1.0;
    Eigen::VectorXd trial = x + s;
    Eigen::VectorXd g_trial = grad(trial);
    while (value(trial) > f + 1e-4 * step * slope && g_trial.norm() >= g.norm()) {
      step *= 0.5;
      if (step < 1e-12) {
        throw SolveError(what + ": line search stalled", g.norm());
      }
      trial = x + step * s;
      g_trial = grad(trial);
    }
    x = std::move(trial);
    g = std::move(g_trial);
  }
  return {std::move(x), g.norm(), it};
}

}  // namespace

Reference solve_reference(const ProblemSpec& spec) {
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(spec.stacked_size());
  Reference ref;
  if (spec.locals.front().is_quadratic()) {
    const Eigen::MatrixXd H = penalized_hessian(spec, zero);
    const Eigen::VectorXd rhs = -penalized_gradient(spec, zero);
    Eigen::LLT<Eigen::MatrixXd> llt(H);
    if (llt.info() != Eigen::Success) throw SolveError("penalized Hessian not positive definite", 0.0);
    Eigen::VectorXd x = llt.solve(rhs);
    x += llt.solve(rhs - H * x);
    ref.solver_residual = penalized_gradient(spec, x).norm();
    if (ref.solver_residual > kReferenceTolerance * std::max(1.0, rhs.norm())) {
      throw SolveError("quadratic reference solve inaccurate", ref.solver_residual);
    }
    ref.x_star = std::move(x);
    ref.iterations = 1;
  } else {
    auto r = damped_newton([&](const Eigen::VectorXd& x) { return penalized_value(spec, x); },
                           [&](const Eigen::VectorXd& x) { return penalized_gradient(spec, x); },
                           [&](const Eigen::VectorXd& x) { return penalized_hessian(spec, x); },
                           zero, "penalized reference");
    ref.x_star = std::move(r.x);
    ref.solver_residual = r.residual;
    ref.iterations = r.iterations;
  }
  ref.F_star = penalized_value(spec, ref.x_star);
  return ref;
}

Reference solve_constrained_reference(const ProblemSpec& spec) {
  const int d = spec.dim;
  Eigen::VectorXd z(d);
  Reference ref;
  if (spec.locals.front().is_quadratic()) {
    z.setZero();
    double csum = 0.0;
    for (const auto& f : spec.locals) {
      z += f.as_quadratic().c * f.as_quadratic().b;
      csum += f.as_quadratic().c;
    }
    z /= csum;
    ref.iterations = 1;
  } else {
    auto sum_value = [&](const Eigen::VectorXd& v) {
      double s = 0.0;
      for (const auto& f : spec.locals) s += f.value(v);
      return s;
    };
    auto sum_grad = [&](const Eigen::VectorXd& v) {
      Eigen::VectorXd s = Eigen::VectorXd::Zero(d);
      for (const auto& f : spec.locals) s += f.gradient(v);
      return s;
    };
    auto sum_hess = [&](const Eigen::VectorXd& v) {
      Eigen::MatrixXd s = Eigen::MatrixXd::Zero(d, d);
      for (const auto& f : spec.locals) s += f.hessian(v);
      return s;
    };
    auto r = damped_newton(sum_value, sum_grad, sum_hess, Eigen::VectorXd::Zero(d),
                           "constrained reference");
    z = std::move(r.x);
    ref.iterations = r.iterations;
  }
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(d);
  for (const auto& f : spec.locals) grad += f.gradient(z);
  ref.solver_residual = grad.norm();
  ref.x_star = z.replicate(spec.n(), 1);
  ref.F_star = consensus_value(spec, ref.x_star);
  return ref;
}

double weighted_error(const ProblemSpec& spec, const Eigen::VectorXd& x,
                      const Eigen::VectorXd& x_prev, const Eigen::VectorXd& x_star) {
  if (x.size() != spec.stacked_size() || x_prev.size() != spec.stacked_size() ||
      x_star.size() != spec.stacked_size()) {
    throw DimensionError("weighted_error arguments must be stacked vectors");
  }
  double acc = 0.0;
  for (int i = 0; i < spec.n(); ++i) {
    const Eigen::VectorXd e = spec.block(x, i) - spec.block(x_star, i);
    const Eigen::MatrixXd D = compute_D_ii(spec.locals[static_cast<std::size_t>(i)],
                                           spec.block(x_prev, i), spec.alpha, spec.W.W(i, i));
    acc += e.dot(D * e);
  }
  return std::sqrt(std::max(0.0, acc));
}

GapSeries mean_gap_series(const std::vector<Trace>& traces, double F_star) {
  if (traces.empty()) throw ConfigError("no traces to aggregate");
  std::size_t len = traces.front().records.size();
  for (const auto& tr : traces) len = std::min(len, tr.records.size());
  GapSeries s;
  s.seeds = static_cast<int>(traces.size());
  const double inv = 1.0 / static_cast<double>(traces.size());
  for (std::size_t k = 0; k < len; ++k) {
    const long t = traces.front().records[k].t;
    double sum = 0.0;
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    double rel = 0.0;
    double werr = 0.0;
    double elapsed = 0.0;
    for (const auto& tr : traces) {
      const auto& r = tr.records[k];
      if (r.t != t) throw ConfigError("traces are not aligned on activation index");
      const double gap = r.F - F_star;
      sum += gap;
      lo = std::min(lo, gap);
      hi = std::max(hi, gap);
      rel += r.rel_err;
      werr += r.weighted_err;
      elapsed += r.elapsed;
    }
    s.t.push_back(t);
    s.mean_gap.push_back(sum * inv);
    s.min_gap.push_back(lo);
    s.max_gap.push_back(hi);
    s.mean_rel_err.push_back(rel * inv);
    s.mean_weighted_err.push_back(werr * inv);
    s.mean_elapsed.push_back(elapsed * inv);
  }
  return s;
}

RateReport aggregate_rates(const GapSeries& series, const TheoryConstants& constants,
                           const RateOptions& opts) {
  RateReport rep;
  rep.seeds = series.seeds;
  if (series.seeds < kMinSeeds) {
    rep.warnings.push_back(
        fmt::format("only {} seeds (< {}); envelope statistics are indicative", series.seeds, kMinSeeds));
  }
  const std::size_t len = series.t.size();
  if (len == 0) {
    rep.warnings.push_back("empty series");
    return rep;
  }
  const double gap0 = series.mean_gap.front();
  rep.beta_bound = 1.0 - constants.beta;

  if (constants.beta > 0.0 && constants.beta < 1.0) {
    const double log_contraction = std::log1p(-constants.beta);
    long ok = 0;
    double worst = 0.0;
    for (std::size_t k = 0; k < len; ++k) {
      const double bound = std::exp(log_contraction * static_cast<double>(series.t[k])) * gap0;
      if (bound < opts.envelope_floor) continue;
      ++rep.envelope_points;
      if (bound > 0.0) worst = std::max(worst, series.mean_gap[k] / bound);
      if (series.mean_gap[k] <= opts.slack * bound) {
        ++ok;
      } else {
        ++rep.envelope_violations;
      }
    }
    if (rep.envelope_points > 0) {
      rep.bound_satisfied = static_cast<double>(ok) / static_cast<double>(rep.envelope_points);
      rep.worst_ratio = worst;
    }
  } else {
    rep.warnings.push_back("beta outside (0, 1); envelope not checked");
  }

  // Tail fit of log(mean gap) over points still resolvable in double precision.
  std::vector<std::size_t> usable;
  const double floor = std::max(opts.envelope_floor, 1e-13 * std::abs(gap0));
  for (std::size_t k = 0; k < len; ++k) {
    if (series.mean_gap[k] > floor) usable.push_back(k);
  }
  const auto tail = static_cast<std::size_t>(
      std::ceil(opts.tail_fraction * static_cast<double>(usable.size())));
  if (tail >= 2) {
    double st = 0.0, sy = 0.0, stt = 0.0, sty = 0.0;
    const auto first = usable.size() - tail;
    for (std::size_t u = first; u < usable.size(); ++u) {
      const double t = static_cast<double>(series.t[usable[u]]);
      const double y = std::log(series.mean_gap[usable[u]]);
      st += t;
      sy += y;
      stt += t * t;
      sty += t * y;
    }
    const double m = static_cast<double>(tail);
    const double denom = m * stt - st * st;
    if (denom > 0.0) rep.empirical_rate = std::exp((m * sty - st * sy) / denom);
  } else {
    rep.warnings.push_back("too few resolvable points for a rate fit");
  }

  // Longest run where log weighted error bends downward.
  long best_start = -1, best_end = -1, run_start = -1;
  auto logw = [&](std::size_t k) { return std::log(series.mean_weighted_err[k]); };
  for (std::size_t k = 1; k + 1 < len; ++k) {
    const double w0 = series.mean_weighted_err[k - 1];
    const double w2 = series.mean_weighted_err[k + 1];
    const bool valid = w0 > 0.0 && series.mean_weighted_err[k] > 0.0 && w2 > 0.0 &&
                       std::isfinite(w0) && std::isfinite(w2);
    const bool bends = valid && logw(k + 1) - 2.0 * logw(k) + logw(k - 1) < opts.quad_threshold;
    if (bends) {
      if (run_start < 0) run_start = static_cast<long>(k);
      if (best_start < 0 || static_cast<long>(k) - run_start > best_end - best_start) {
        best_start = run_start;
        best_end = static_cast<long>(k);
      }
    } else {
      run_start = -1;
    }
  }
  if (best_start >= 0) {
    rep.quad_window = std::make_pair(series.t[static_cast<std::size_t>(best_start)],
                                     series.t[static_cast<std::size_t>(best_end)]);
  }
  return rep;
}

RateReport aggregate_rates(const std::vector<Trace>& traces, double F_star,
                           const TheoryConstants& constants, const RateOptions& opts) {
  return aggregate_rates(mean_gap_series(traces, F_star), constants, opts);
}

void write_key_values(std::ostream& out, const RateReport& r) {
  out << fmt::format("seeds = {}\n", r.seeds);
  out << fmt::format("empirical_rate = {:.17g}\n", r.empirical_rate);
  out << fmt::format("beta_bound = {:.17g}\n", r.beta_bound);
  out << fmt::format("bound_satisfied = {:.17g}\n", r.bound_satisfied);
  out << fmt::format("envelope_points = {}\n", r.envelope_points);
  out << fmt::format("envelope_violations = {}\n", r.envelope_violations);
  out << fmt::format("worst_ratio = {:.17g}\n", r.worst_ratio);
  if (r.quad_window) {
    out << fmt::format("quad_window = {}..{}\n", r.quad_window->first, r.quad_window->second);
  } else {
    out << "quad_window = none\n";
  }
  for (const auto& w : r.warnings) out << "warning = " << w << '\n';
}

std::string rate_csv_header() {
  return "seeds,empirical_rate,beta_bound,bound_satisfied,envelope_points,envelope_violations,"
         "worst_ratio,quad_start,quad_end";
}

std::string rate_csv_row(const RateReport& r) {
  return fmt::format("{},{:.17g},{:.17g},{:.17g},{},{},{:.17g},{},{}", r.seeds, r.empirical_rate,
                     r.beta_bound, r.bound_satisfied, r.envelope_points, r.envelope_violations,
                     r.worst_ratio, r.quad_window ? std::to_string(r.quad_window->first) : "",
                     r.quad_window ? std::to_string(r.quad_window->second) : "");
}

std::optional<long> steps_to_epsilon(const Trace& trace, double eps_rel) {
  for (const auto& r : trace.records) {
    if (r.rel_err < eps_rel) return r.t;
  }
  return std::nullopt;
}

std::optional<double> time_to_epsilon(const Trace& trace, double eps_rel) {
  for (const auto& r : trace.records) {
    if (r.rel_err < eps_rel) return r.elapsed;
  }
  return std::nullopt;
}

}  // namespace netnewton
