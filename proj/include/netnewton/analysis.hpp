#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "netnewton/engine.hpp"
#include "netnewton/newton_core.hpp"
#include "netnewton/objectives.hpp"
#include "netnewton/reference.hpp"

namespace netnewton {

inline constexpr double kReferenceTolerance = 1e-11;
inline constexpr int kReferenceMaxIterations = 200;

// Minimizer of the penalized objective. Quadratic problems use a direct
// solve; logistic problems use damped Newton. Throws SolveError when the
// gradient norm stays above kReferenceTolerance * max(1, ||g(0)||).
Reference solve_reference(const ProblemSpec& spec);

// Minimizer of sum_i f_i(z) over a common z, stacked n times into x_star.
// F_star is the constrained optimum.
Reference solve_constrained_reference(const ProblemSpec& spec);

// ||D(x_prev)^{1/2} (x - x_star)||
double weighted_error(const ProblemSpec& spec, const Eigen::VectorXd& x,
                      const Eigen::VectorXd& x_prev, const Eigen::VectorXd& x_star);

inline constexpr double kEnvelopeSlack = 1.05;
inline constexpr double kQuadWindowThreshold = -0.05;
inline constexpr int kMinSeeds = 30;

struct RateOptions {
  double slack = kEnvelopeSlack;
  // Envelope points whose bound falls below this absolute gap are skipped
  // (double precision cannot resolve F - F* there).
  double envelope_floor = 0.0;
  double quad_threshold = kQuadWindowThreshold;
  // Fraction of the series used for the log-linear tail fit.
  double tail_fraction = 0.5;
};

// Seed-averaged series aligned on activation index.
struct GapSeries {
  std::vector<long> t;
  std::vector<double> mean_gap;
  std::vector<double> min_gap;
  std::vector<double> max_gap;
  std::vector<double> mean_rel_err;
  std::vector<double> mean_weighted_err;
  std::vector<double> mean_elapsed;
  int seeds = 0;
};

// Requires every trace to carry a reference; truncates to the shortest trace.
GapSeries mean_gap_series(const std::vector<Trace>& traces, double F_star);

struct RateReport {
  double empirical_rate = std::numeric_limits<double>::quiet_NaN();
  double beta_bound = std::numeric_limits<double>::quiet_NaN();  // 1 - beta
  double bound_satisfied = std::numeric_limits<double>::quiet_NaN();
  long envelope_points = 0;
  long envelope_violations = 0;
  // Worst mean_gap / ((1 - beta)^t gap0) over checked points.
  double worst_ratio = std::numeric_limits<double>::quiet_NaN();
  std::optional<std::pair<long, long>> quad_window;
  int seeds = 0;
  std::vector<std::string> warnings;
};

RateReport aggregate_rates(const GapSeries& series, const TheoryConstants& constants,
                           const RateOptions& opts = {});
RateReport aggregate_rates(const std::vector<Trace>& traces, double F_star,
                           const TheoryConstants& constants, const RateOptions& opts = {});

void write_key_values(std::ostream& out, const RateReport& r);
std::string rate_csv_header();
std::string rate_csv_row(const RateReport& r);

// First t with rel_err < eps_rel, or nullopt when never reached.
std::optional<long> steps_to_epsilon(const Trace& trace, double eps_rel);
// Same, on elapsed time units.
std::optional<double> time_to_epsilon(const Trace& trace, double eps_rel);

}  // namespace netnewton
