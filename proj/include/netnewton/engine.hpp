#pragma once

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "netnewton/newton_core.hpp"
#include "netnewton/objectives.hpp"
#include "netnewton/reference.hpp"

namespace netnewton {

struct ActivationSchedule {
  std::vector<double> p;
  ScalingMode mode = ScalingMode::scaled;
  std::uint64_t seed = 0;

  static ActivationSchedule uniform(int n, ScalingMode mode, std::uint64_t seed);
  // Throws ConfigError unless p has n entries in (0, 1) summing to 1 within 1e-9.
  // A single agent is allowed p = {1}.
  void validate(int n) const;
  bool is_uniform() const;
};

// Scaled-mode stepsize equivalent to `eps` under the schedule, if one exists.
// Unscaled steps have an equivalent only when p is uniform.
std::optional<double> effective_scaled_eps(const ActivationSchedule& schedule, double eps);

// Categorical draws over agents from a seeded mt19937_64.
class ActivationSampler {
 public:
  ActivationSampler(const std::vector<double>& p, std::uint64_t seed);
  int next();
  std::mt19937_64& engine() { return rng_; }

 private:
  std::mt19937_64 rng_;
  std::discrete_distribution<int> dist_;
};

// Per-activation cost in gradient-evaluation units. Empty means unit cost.
struct TimeModel {
  std::vector<double> cost;

  double cost_of(int i) const;
  double max_cost(int n) const;
  static TimeModel slow_agent(int n, int agent, double factor);
};

struct RunConfig {
  ActivationSchedule schedule;
  double eps = 0.0;
  long T = 0;
  // Full-state snapshot stride; 0 keeps only the initial and final states.
  long record_every = 0;
  std::optional<Eigen::VectorXd> x0;
  TimeModel time;
  // Enables rel_err and weighted_err columns.
  std::optional<Reference> reference;
  // Stop early once rel_err drops below this value.
  std::optional<double> stop_rel_err;
};

struct TraceRecord {
  long t = 0;
  int active_agent = -1;
  int partner = -1;
  double F = 0.0;
  double rel_err = std::numeric_limits<double>::quiet_NaN();
  double weighted_err = std::numeric_limits<double>::quiet_NaN();
  double elapsed = 0.0;
};

struct Snapshot {
  long t = 0;
  Eigen::VectorXd x;
};

struct Trace {
  std::string algorithm;
  std::vector<TraceRecord> records;
  std::vector<Snapshot> snapshots;
  Eigen::VectorXd final_x;
};

// Algorithm state for the randomized asynchronous method. Construction runs
// the initial synchronous exchange so every buffer holds fresh values.
class AsyncNewtonNetwork {
 public:
  AsyncNewtonNetwork(const ProblemSpec& spec, const Eigen::VectorXd& x0);

  // One activation of agent i with x_i += coeff * d_i, followed by the
  // neighbor recomputation and both broadcast rounds.
  void activate(int i, double coeff);

  const std::vector<AgentState>& agents() const { return agents_; }
  Eigen::VectorXd stacked_x() const;
  // Directions each agent would compute right now from its buffers.
  Eigen::VectorXd stacked_directions() const;
  // Max deviation between any buffered value and the owner's current value.
  double buffer_staleness() const;
  double objective() const { return penalized_value(*spec_, stacked_x()); }
  // D blocks at the current state, stacked as a (n*dim) x dim matrix.
  Eigen::MatrixXd stacked_D() const;

 private:
  void refresh_local(AgentState& s);

  const ProblemSpec* spec_;
  std::vector<AgentState> agents_;
};

Trace run_async_newton(const ProblemSpec& spec, const RunConfig& cfg);

// All agents step together with the K-hop series direction; T counts iterations.
Trace run_sync_newton(const ProblemSpec& spec, const RunConfig& cfg, int K);

// Pairwise averaging followed by local gradient steps with stepsize 1/t_i.
class GossipNetwork {
 public:
  GossipNetwork(const ProblemSpec& spec, const Eigen::VectorXd& x0);
  void exchange(int i, int j);

  const Eigen::VectorXd& x() const { return x_; }
  long updates(int i) const { return counts_[static_cast<std::size_t>(i)]; }
  // Stepsize that agent i used on its most recent update.
  double last_stepsize(int i) const;

 private:
  const ProblemSpec* spec_;
  Eigen::VectorXd x_;
  std::vector<long> counts_;
};

// F in the trace is the constrained objective sum_i f_i(x_i); the reference
// should come from solve_constrained_reference.
Trace run_gossip(const ProblemSpec& spec, const RunConfig& cfg);

struct OneStepExpectation {
  double F = 0.0;
  double expected_F = 0.0;
  double grad_norm_sq = 0.0;
  // F - (eps lambda - eps^2 Lambda^2 / (2 lambda pi)) ||g||^2
  double supermartingale_rhs = 0.0;
  // e = ||D(x)^{1/2} (x - x*)||
  double weighted_error = 0.0;
  double expected_weighted_error = 0.0;
  // Gamma1 e^2 + Gamma(t) e, with t = 2 and the gap measured at x.
  double recursion_rhs = 0.0;
  // Gamma1 e^2 + C1 e, the limiting form as t grows.
  double recursion_rhs_limit = 0.0;
  TheoryConstants constants;
};

// Exact conditional expectation over the n possible activations from a state
// with synchronized buffers.
OneStepExpectation enumerate_one_step_expectation(const ProblemSpec& spec,
                                                  const ActivationSchedule& schedule, double eps,
                                                  const Eigen::VectorXd& x,
                                                  const Reference& reference);

// Columns: t, active_agent, F, rel_err, weighted_err, elapsed_time_units.
void write_trace_csv(std::ostream& out, const Trace& trace);
// One value per line, full precision.
void write_snapshot(std::ostream& out, const Snapshot& snap);

}  // namespace netnewton
