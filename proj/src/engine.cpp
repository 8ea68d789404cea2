#include "netnewton/engine.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include <fmt/format.h>

#include "netnewton/errors.hpp"

namespace netnewton {

ActivationSchedule ActivationSchedule::uniform(int n, ScalingMode mode, std::uint64_t seed) {
  if (n < 1) throw ConfigError("schedule needs at least one agent");
  return {std::vector<double>(static_cast<std::size_t>(n), 1.0 / n), mode, seed};
}

void ActivationSchedule::validate(int n) const {
  if (static_cast<int>(p.size()) != n) {
    throw ConfigError(fmt::format("{} activation probabilities for {} agents", p.size(), n));
  }
  const double sum = std::accumulate(p.begin(), p.end(), 0.0);
  if (std::abs(sum - 1.0) > 1e-9) {
    throw ConfigError(fmt::format("activation probabilities sum to {:.17g}", sum));
  }
  if (n == 1) return;
  for (double pi : p) {
    if (!(pi > 0.0 && pi < 1.0)) {
      throw ConfigError(fmt::format("activation probability {} outside (0, 1)", pi));
    }
  }
}

bool ActivationSchedule::is_uniform() const {
  return std::all_of(p.begin(), p.end(), [this](double v) { return v == p.front(); });
}

std::optional<double> effective_scaled_eps(const ActivationSchedule& schedule, double eps) {
  if (schedule.mode == ScalingMode::scaled) return eps;
  if (!schedule.is_uniform()) return std::nullopt;
  return eps * schedule.p.front();
}

ActivationSampler::ActivationSampler(const std::vector<double>& p, std::uint64_t seed)
    : rng_(seed), dist_(p.begin(), p.end()) {}

int ActivationSampler::next() { return dist_(rng_); }

double TimeModel::cost_of(int i) const {
  return cost.empty() ? 1.0 : cost[static_cast<std::size_t>(i)];
}

double TimeModel::max_cost(int n) const {
  double c = 0.0;
  for (int i = 0; i < n; ++i) c = std::max(c, cost_of(i));
  return c;
}

TimeModel TimeModel::slow_agent(int n, int agent, double factor) {
  TimeModel t;
  t.cost.assign(static_cast<std::size_t>(n), 1.0);
  t.cost.at(static_cast<std::size_t>(agent)) = factor;
  return t;
}

AsyncNewtonNetwork::AsyncNewtonNetwork(const ProblemSpec& spec, const Eigen::VectorXd& x0)
    : spec_(&spec) {
  if (x0.size() != spec.stacked_size()) {
    throw DimensionError(fmt::format("x0 has {} entries, expected {}", x0.size(), spec.stacked_size()));
  }
  const auto& W = spec.W.W;
  agents_.resize(static_cast<std::size_t>(spec.n()));
  for (int i = 0; i < spec.n(); ++i) {
    auto& s = agents_[static_cast<std::size_t>(i)];
    s.id = i;
    s.x = spec.block(x0, i);
    s.neighbors = spec.graph.neighbors(i);
    for (int j : s.neighbors) s.buf_x.push_back(spec.block(x0, j));
    s.D = compute_D_ii(spec.locals[static_cast<std::size_t>(i)], s.x, spec.alpha, W(i, i));
    s.g = compute_g_i(s, spec.locals[static_cast<std::size_t>(i)], spec.alpha, W);
    s.d0 = compute_d0_i(s);
  }
  for (auto& s : agents_) {
    for (int j : s.neighbors) s.buf_d0.push_back(agents_[static_cast<std::size_t>(j)].d0);
  }
}

void AsyncNewtonNetwork::refresh_local(AgentState& s) {
  s.g = compute_g_i(s, spec_->locals[static_cast<std::size_t>(s.id)], spec_->alpha, spec_->W.W);
  s.d0 = compute_d0_i(s);
}

void AsyncNewtonNetwork::activate(int i, double coeff) {
  const auto& W = spec_->W.W;
  auto& s = agents_.at(static_cast<std::size_t>(i));

  refresh_local(s);
  const Eigen::VectorXd d = compute_newton_dir_i(s, W);
  s.x += coeff * d;
  s.D = compute_D_ii(spec_->locals[static_cast<std::size_t>(i)], s.x, spec_->alpha, W(i, i));
  refresh_local(s);

  for (int j : s.neighbors) {
    auto& nb = agents_[static_cast<std::size_t>(j)];
    const std::size_t k = nb.slot(i);
    nb.buf_x[k] = s.x;
    nb.buf_d0[k] = s.d0;
    refresh_local(nb);
    for (int l : nb.neighbors) {
      auto& listener = agents_[static_cast<std::size_t>(l)];
      listener.buf_d0[listener.slot(j)] = nb.d0;
    }
  }
}

Eigen::VectorXd AsyncNewtonNetwork::stacked_x() const {
  Eigen::VectorXd x(spec_->stacked_size());
  for (const auto& s : agents_) spec_->block(x, s.id) = s.x;
  return x;
}

Eigen::VectorXd AsyncNewtonNetwork::stacked_directions() const {
  Eigen::VectorXd d(spec_->stacked_size());
  for (const auto& s : agents_) spec_->block(d, s.id) = compute_newton_dir_i(s, spec_->W.W);
  return d;
}

double AsyncNewtonNetwork::buffer_staleness() const {
  double worst = 0.0;
  for (const auto& s : agents_) {
    for (std::size_t k = 0; k < s.neighbors.size(); ++k) {
      const auto& owner = agents_[static_cast<std::size_t>(s.neighbors[k])];
      worst = std::max(worst, (s.buf_x[k] - owner.x).cwiseAbs().maxCoeff());
      worst = std::max(worst, (s.buf_d0[k] - owner.d0).cwiseAbs().maxCoeff());
    }
  }
  return worst;
}

Eigen::MatrixXd AsyncNewtonNetwork::stacked_D() const {
  const int d = spec_->dim;
  Eigen::MatrixXd out(spec_->stacked_size(), d);
  for (const auto& s : agents_) out.block(s.id * d, 0, d, d) = s.D;
  return out;
}

namespace {

Eigen::MatrixXd stacked_D_at(const ProblemSpec& spec, const Eigen::VectorXd& x) {
  const int d = spec.dim;
  Eigen::MatrixXd out(spec.stacked_size(), d);
  for (int i = 0; i < spec.n(); ++i) {
    out.block(i * d, 0, d, d) = compute_D_ii(spec.locals[static_cast<std::size_t>(i)],
                                             spec.block(x, i), spec.alpha, spec.W.W(i, i));
  }
  return out;
}

double weighted_norm(const ProblemSpec& spec, const Eigen::MatrixXd& Dstack,
                     const Eigen::VectorXd& err) {
  const int d = spec.dim;
  double acc = 0.0;
  for (int i = 0; i < spec.n(); ++i) {
    const auto e = spec.block(err, i);
    acc += e.dot(Dstack.block(i * d, 0, d, d) * e);
  }
  return std::sqrt(std::max(0.0, acc));
}

// Shared bookkeeping for the three run loops.
class Recorder {
 public:
  Recorder(const ProblemSpec& spec, const RunConfig& cfg, std::string algorithm, double F0)
      : spec_(spec), cfg_(cfg), F0_(F0) {
    trace_.algorithm = std::move(algorithm);
  }

  // Returns true when the early-stop threshold has been reached.
  bool add(long t, int agent, int partner, double F, const Eigen::VectorXd& x,
           const Eigen::MatrixXd* D_prev) {
    TraceRecord r;
    r.t = t;
    r.active_agent = agent;
    r.partner = partner;
    r.F = F;
    r.elapsed = elapsed_;
    if (cfg_.reference) {
      const double denom = std::abs(F0_ - cfg_.reference->F_star);
      r.rel_err = denom > 0.0 ? std::abs(F - cfg_.reference->F_star) / denom : 0.0;
      if (D_prev != nullptr) r.weighted_err = weighted_norm(spec_, *D_prev, x - cfg_.reference->x_star);
    }
    trace_.records.push_back(r);
    if (t == 0 || (cfg_.record_every > 0 && t % cfg_.record_every == 0)) {
      trace_.snapshots.push_back({t, x});
    }
    return cfg_.stop_rel_err && cfg_.reference && r.rel_err < *cfg_.stop_rel_err;
  }

  void advance(double dt) { elapsed_ += dt; }

  Trace finish(const Eigen::VectorXd& x) {
    const long t = trace_.records.back().t;
    if (trace_.snapshots.back().t != t) trace_.snapshots.push_back({t, x});
    trace_.final_x = x;
    return std::move(trace_);
  }

 private:
  const ProblemSpec& spec_;
  const RunConfig& cfg_;
  double F0_;
  double elapsed_ = 0.0;
  Trace trace_;
};

Eigen::VectorXd initial_point(const ProblemSpec& spec, const RunConfig& cfg) {
  if (cfg.T < 0) throw ConfigError("T must be nonnegative");
  if (!(cfg.eps > 0.0)) throw ConfigError("eps must be positive");
  if (!cfg.time.cost.empty() && static_cast<int>(cfg.time.cost.size()) != spec.n()) {
    throw ConfigError("time model needs one cost per agent");
  }
  Eigen::VectorXd x0 = cfg.x0 ? *cfg.x0 : Eigen::VectorXd::Zero(spec.stacked_size());
  if (x0.size() != spec.stacked_size()) {
    throw DimensionError(fmt::format("x0 has {} entries, expected {}", x0.size(), spec.stacked_size()));
  }
  return x0;
}

}  // namespace

Trace run_async_newton(const ProblemSpec& spec, const RunConfig& cfg) {
  cfg.schedule.validate(spec.n());
  const Eigen::VectorXd x0 = initial_point(spec, cfg);
  AsyncNewtonNetwork net(spec, x0);
  ActivationSampler sampler(cfg.schedule.p, cfg.schedule.seed);

  Eigen::MatrixXd D_prev = net.stacked_D();
  const double F0 = penalized_value(spec, x0);
  Recorder rec(spec, cfg, "async_newton", F0);
  bool done = rec.add(0, -1, -1, F0, x0, &D_prev);
  const int d = spec.dim;
  for (long t = 1; t <= cfg.T && !done; ++t) {
    const int i = sampler.next();
    net.activate(i, step_coefficient(cfg.eps, cfg.schedule.p[static_cast<std::size_t>(i)],
                                     cfg.schedule.mode));
    rec.advance(cfg.time.cost_of(i));
    const Eigen::VectorXd x = net.stacked_x();
    done = rec.add(t, i, -1, penalized_value(spec, x), x, &D_prev);
    D_prev.block(i * d, 0, d, d) = net.agents()[static_cast<std::size_t>(i)].D;
  }
  return rec.finish(net.stacked_x());
}

Trace run_sync_newton(const ProblemSpec& spec, const RunConfig& cfg, int K) {
  if (K < 0) throw ConfigError("truncation order K must be >= 0");
  Eigen::VectorXd x = initial_point(spec, cfg);
  const double F0 = penalized_value(spec, x);
  Recorder rec(spec, cfg, fmt::format("sync_nn{}", K), F0);
  Eigen::MatrixXd D_prev = stacked_D_at(spec, x);
  bool done = rec.add(0, -1, -1, F0, x, &D_prev);
  const double iteration_cost = cfg.time.max_cost(spec.n());
  for (long t = 1; t <= cfg.T && !done; ++t) {
    x += cfg.eps * nn_k_direction(spec, x, K);
    rec.advance(iteration_cost);
    done = rec.add(t, -1, -1, penalized_value(spec, x), x, &D_prev);
    D_prev = stacked_D_at(spec, x);
  }
  return rec.finish(x);
}

GossipNetwork::GossipNetwork(const ProblemSpec& spec, const Eigen::VectorXd& x0)
    : spec_(&spec), x_(x0), counts_(static_cast<std::size_t>(spec.n()), 0) {
  if (x0.size() != spec.stacked_size()) throw DimensionError("gossip x0 has wrong size");
}

void GossipNetwork::exchange(int i, int j) {
  const Eigen::VectorXd avg = 0.5 * (spec_->block(x_, i) + spec_->block(x_, j));
  for (int a : {i, j}) {
    const long c = ++counts_[static_cast<std::size_t>(a)];
    spec_->block(x_, a) = avg - spec_->locals[static_cast<std::size_t>(a)].gradient(avg) / static_cast<double>(c);
  }
}

double GossipNetwork::last_stepsize(int i) const {
  const long c = counts_[static_cast<std::size_t>(i)];
  return c > 0 ? 1.0 / static_cast<double>(c) : 0.0;
}

Trace run_gossip(const ProblemSpec& spec, const RunConfig& cfg) {
  if (spec.n() < 2) throw ConfigError("gossip needs at least two agents");
  cfg.schedule.validate(spec.n());
  if (cfg.T < 0) throw ConfigError("T must be nonnegative");
  RunConfig relaxed = cfg;
  relaxed.eps = 1.0;  // gossip has its own stepsize rule
  const Eigen::VectorXd x0 = initial_point(spec, relaxed);
  GossipNetwork net(spec, x0);
  ActivationSampler sampler(cfg.schedule.p, cfg.schedule.seed);

  const double F0 = consensus_value(spec, x0);
  Recorder rec(spec, cfg, "gossip", F0);
  bool done = rec.add(0, -1, -1, F0, x0, nullptr);
  for (long t = 1; t <= cfg.T && !done; ++t) {
    const int i = sampler.next();
    const auto& nb = spec.graph.neighbors(i);
    std::uniform_int_distribution<std::size_t> pick(0, nb.size() - 1);
    const int j = nb[pick(sampler.engine())];
    net.exchange(i, j);
    rec.advance(std::max(cfg.time.cost_of(i), cfg.time.cost_of(j)));
    done = rec.add(t, i, j, consensus_value(spec, net.x()), net.x(), nullptr);
  }
  return rec.finish(net.x());
}

OneStepExpectation enumerate_one_step_expectation(const ProblemSpec& spec,
                                                  const ActivationSchedule& schedule, double eps,
                                                  const Eigen::VectorXd& x,
                                                  const Reference& reference) {
  schedule.validate(spec.n());
  const auto eps_scaled = effective_scaled_eps(schedule, eps);
  if (!eps_scaled) {
    throw ConfigError("unscaled steps with nonuniform probabilities have no theory stepsize");
  }
  OneStepExpectation out;
  const AsyncNewtonNetwork base(spec, x);
  out.F = penalized_value(spec, x);
  out.grad_norm_sq = penalized_gradient(spec, x).squaredNorm();
  out.constants = theory_constants(spec, schedule.p, *eps_scaled, out.F - reference.F_star);

  const Eigen::MatrixXd D = base.stacked_D();
  out.weighted_error = weighted_norm(spec, D, x - reference.x_star);
  for (int i = 0; i < spec.n(); ++i) {
    const double p_i = schedule.p[static_cast<std::size_t>(i)];
    AsyncNewtonNetwork branch = base;
    branch.activate(i, step_coefficient(eps, p_i, schedule.mode));
    const Eigen::VectorXd xp = branch.stacked_x();
    out.expected_F += p_i * penalized_value(spec, xp);
    out.expected_weighted_error += p_i * weighted_norm(spec, D, xp - reference.x_star);
  }
  const auto& c = out.constants;
  const double e = out.weighted_error;
  out.supermartingale_rhs = out.F - c.decrease_coefficient() * out.grad_norm_sq;
  out.recursion_rhs = c.Gamma1 * e * e + c.gamma_t(2.0) * e;
  out.recursion_rhs_limit = c.Gamma1 * e * e + c.C1 * e;
  return out;
}

void write_trace_csv(std::ostream& out, const Trace& trace) {
  out << "t,active_agent,F,rel_err,weighted_err,elapsed_time_units\n";
  for (const auto& r : trace.records) {
    out << fmt::format("{},{},{:.17g},{:.17g},{:.17g},{:.17g}\n", r.t, r.active_agent, r.F,
                       r.rel_err, r.weighted_err, r.elapsed);
  }
}

void write_snapshot(std::ostream& out, const Snapshot& snap) {
  out << "# t = " << snap.t << '\n';
  for (Eigen::Index k = 0; k < snap.x.size(); ++k) out << fmt::format("{:.17g}\n", snap.x(k));
}

}  // namespace netnewton
