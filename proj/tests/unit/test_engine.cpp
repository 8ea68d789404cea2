#include <cmath>
#include <map>
#include <random>
#include <sstream>

#include <boost/math/distributions/chi_squared.hpp>
#include <gtest/gtest.h>

#include "netnewton/analysis.hpp"
#include "netnewton/engine.hpp"
#include "netnewton/errors.hpp"
#include "oracles.hpp"

using namespace netnewton;

namespace {

Eigen::VectorXd v1(double a) { return Eigen::VectorXd::Constant(1, a); }

ProblemSpec k5_quadratic() {
  std::vector<LocalObjective> locals;
  for (int i = 0; i < 5; ++i) locals.push_back(LocalObjective::quadratic(1.0, v1(i + 1.0)));
  return make_problem(build_graph({GraphKind::complete}, 5, 0), std::move(locals), 1.0);
}

ProblemSpec logistic_ring(int n, int dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<LocalObjective> locals;
  for (int i = 0; i < n; ++i) {
    Eigen::MatrixXd U(5, dim);
    Eigen::VectorXd v(5);
    for (int r = 0; r < 5; ++r) {
      for (int c = 0; c < dim; ++c) U(r, c) = g(rng);
      v(r) = g(rng) > 0 ? 1.0 : -1.0;
    }
    locals.push_back(LocalObjective::logistic(U, v, 1.0, 5L * n, n));
  }
  return make_problem(build_graph({GraphKind::ring}, n, 0), std::move(locals), 1.0);
}

RunConfig uniform_config(int n, double eps, long T, std::uint64_t seed) {
  RunConfig cfg;
  cfg.schedule = ActivationSchedule::uniform(n, ScalingMode::scaled, seed);
  cfg.eps = eps;
  cfg.T = T;
  return cfg;
}

}  // namespace

TEST(ActivationSchedule, ValidationRules) {
  EXPECT_NO_THROW(ActivationSchedule::uniform(4, ScalingMode::scaled, 0).validate(4));
  ActivationSchedule s{{0.5, 0.6}, ScalingMode::scaled, 0};
  EXPECT_THROW(s.validate(2), ConfigError);
  s.p = {1.0, 0.0};
  EXPECT_THROW(s.validate(2), ConfigError);
  s.p = {0.5, 0.5};
  EXPECT_THROW(s.validate(3), ConfigError);
  s.p = {1.0};
  EXPECT_NO_THROW(s.validate(1));
}

TEST(ActivationSchedule, EffectiveScaledEps) {
  auto u = ActivationSchedule::uniform(5, ScalingMode::uniform_unscaled, 0);
  EXPECT_NEAR(*effective_scaled_eps(u, 0.9), 0.18, 1e-15);
  ActivationSchedule nu{{0.1, 0.9}, ScalingMode::uniform_unscaled, 0};
  EXPECT_FALSE(effective_scaled_eps(nu, 0.9).has_value());
  nu.mode = ScalingMode::scaled;
  EXPECT_EQ(*effective_scaled_eps(nu, 0.12), 0.12);
}

TEST(ActivationSampler, FrequenciesPassChiSquare) {
  const std::vector<double> p{2.0 / 15, 2.0 / 15, 3.0 / 15, 4.0 / 15, 4.0 / 15};
  ActivationSampler s(p, 123);
  const int draws = 100000;
  std::vector<long> counts(p.size(), 0);
  for (int k = 0; k < draws; ++k) ++counts[static_cast<std::size_t>(s.next())];
  double stat = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double e = draws * p[i];
    stat += (counts[i] - e) * (counts[i] - e) / e;
  }
  const boost::math::chi_squared dist(static_cast<double>(p.size() - 1));
  EXPECT_LT(stat, boost::math::quantile(boost::math::complement(dist, 0.001)));
}

TEST(TimeModel, SlowAgentCosts) {
  const TimeModel t = TimeModel::slow_agent(4, 2, 100.0);
  EXPECT_EQ(t.cost_of(0), 1.0);
  EXPECT_EQ(t.cost_of(2), 100.0);
  EXPECT_EQ(t.max_cost(4), 100.0);
  EXPECT_EQ(TimeModel{}.max_cost(3), 1.0);
}

TEST(AsyncNetwork, InitialBuffersAreFresh) {
  const ProblemSpec spec = logistic_ring(6, 2, 1);
  std::mt19937_64 rng(3);
  const AsyncNewtonNetwork net(spec, oracle::random_vector(rng, 12, -1, 1));
  EXPECT_EQ(net.buffer_staleness(), 0.0);
}

TEST(AsyncNetwork, DirectionsEqualDenseOracleWithFreshBuffers) {
  std::mt19937_64 rng(4);
  for (const auto& spec : {k5_quadratic(), logistic_ring(6, 3, 2)}) {
    for (int k = 0; k < 5; ++k) {
      const Eigen::VectorXd x = oracle::random_vector(rng, spec.stacked_size(), -2, 2);
      const AsyncNewtonNetwork net(spec, x);
      // Dense oracle: -(D^-1 + D^-1 B D^-1) g with H and D assembled here.
      const Eigen::MatrixXd H = penalized_hessian(spec, x);
      Eigen::MatrixXd D = Eigen::MatrixXd::Zero(H.rows(), H.cols());
      const int d = spec.dim;
      for (int i = 0; i < spec.n(); ++i)
        D.block(i * d, i * d, d, d) = spec.alpha * spec.locals[i].hessian(x.segment(i * d, d)) +
                                      2.0 * (1.0 - spec.W.W(i, i)) * Eigen::MatrixXd::Identity(d, d);
      const Eigen::MatrixXd Dinv = D.inverse();
      const Eigen::VectorXd want = -(Dinv + Dinv * (D - H) * Dinv) * penalized_gradient(spec, x);
      EXPECT_LT((net.stacked_directions() - want).cwiseAbs().maxCoeff(), 1e-10);
    }
  }
}

TEST(AsyncNetwork, BuffersStayFreshAndOneBlockMoves) {
  const ProblemSpec spec = logistic_ring(7, 2, 5);
  std::mt19937_64 rng(6);
  AsyncNewtonNetwork net(spec, oracle::random_vector(rng, 14, -1, 1));
  std::uniform_int_distribution<int> pick(0, 6);
  for (int k = 0; k < 200; ++k) {
    const Eigen::VectorXd before = net.stacked_x();
    const int i = pick(rng);
    net.activate(i, 0.3);
    const Eigen::VectorXd diff = net.stacked_x() - before;
    for (int j = 0; j < 7; ++j)
      if (j != i) EXPECT_EQ(diff.segment(2 * j, 2).norm(), 0.0);
    EXPECT_LT(net.buffer_staleness(), 1e-14);
  }
}

TEST(AsyncNetwork, JacobiSweepEqualsSyncIteration) {
  const ProblemSpec spec = logistic_ring(5, 2, 8);
  std::mt19937_64 rng(9);
  const Eigen::VectorXd x = oracle::random_vector(rng, 10, -1, 1);
  const double eps = 0.4;
  const AsyncNewtonNetwork frozen(spec, x);
  const Eigen::VectorXd jacobi = x + eps * frozen.stacked_directions();
  RunConfig cfg = uniform_config(5, eps, 1, 0);
  cfg.x0 = x;
  const Trace sync = run_sync_newton(spec, cfg, 1);
  EXPECT_LT((sync.final_x - jacobi).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(RunAsync, ZeroStepsKeepsInitialPoint) {
  const ProblemSpec spec = k5_quadratic();
  const Trace tr = run_async_newton(spec, uniform_config(5, 0.1, 0, 1));
  ASSERT_EQ(tr.records.size(), 1u);
  EXPECT_EQ(tr.records[0].t, 0);
  EXPECT_EQ(tr.final_x.norm(), 0.0);
}

TEST(RunAsync, RejectsBadConfig) {
  const ProblemSpec spec = k5_quadratic();
  EXPECT_THROW(run_async_newton(spec, uniform_config(5, 0.0, 10, 1)), ConfigError);
  RunConfig cfg = uniform_config(5, 0.1, 10, 1);
  cfg.x0 = Eigen::VectorXd::Zero(3);
  EXPECT_THROW(run_async_newton(spec, cfg), DimensionError);
}

TEST(RunAsync, SingleAgentDecreasesMonotonically) {
  std::vector<LocalObjective> locals{LocalObjective::quadratic(1.0, v1(5.0))};
  const ProblemSpec spec = make_problem(Graph::from_edges(1, {}), locals, 1.0);
  RunConfig cfg = uniform_config(1, 0.5, 30, 2);
  const Trace tr = run_async_newton(spec, cfg);
  // With n = 1: D = 2, g = 2(x - 5), d = -(x - 5), x <- x + 0.5 d.
  double x = 0.0;
  for (std::size_t k = 1; k < tr.records.size(); ++k) {
    EXPECT_LT(tr.records[k].F, tr.records[k - 1].F);
    x += 0.5 * (5.0 - x);
  }
  EXPECT_NEAR(tr.final_x(0), x, 1e-12);
}

TEST(RunAsync, IdenticalConfigsGiveIdenticalTraces) {
  const ProblemSpec spec = logistic_ring(5, 2, 3);
  const RunConfig cfg = uniform_config(5, 0.05, 300, 77);
  const Trace a = run_async_newton(spec, cfg);
  const Trace b = run_async_newton(spec, cfg);
  std::ostringstream sa, sb;
  write_trace_csv(sa, a);
  write_trace_csv(sb, b);
  EXPECT_EQ(sa.str(), sb.str());
  EXPECT_EQ(a.final_x, b.final_x);
}

TEST(RunAsync, K5MeanRelativeErrorBelowOneThousandth) {
  const ProblemSpec spec = k5_quadratic();
  const Reference ref = solve_reference(spec);
  const std::vector<double> p(5, 0.2);
  double sum = 0.0;
  const int seeds = 100;
  for (int s = 0; s < seeds; ++s) {
    RunConfig cfg = uniform_config(5, 0.9 * eps_as_bound(spec, p), 5000, 1000 + s);
    cfg.reference = ref;
    sum += run_async_newton(spec, cfg).records.back().rel_err;
  }
  EXPECT_LT(sum / seeds, 1e-3);
}

TEST(RunAsync, SnapshotsAtStride) {
  const ProblemSpec spec = k5_quadratic();
  RunConfig cfg = uniform_config(5, 0.1, 25, 1);
  cfg.record_every = 10;
  const Trace tr = run_async_newton(spec, cfg);
  ASSERT_EQ(tr.snapshots.size(), 4u);
  EXPECT_EQ(tr.snapshots[0].t, 0);
  EXPECT_EQ(tr.snapshots[1].t, 10);
  EXPECT_EQ(tr.snapshots[2].t, 20);
  EXPECT_EQ(tr.snapshots[3].t, 25);
  for (std::size_t k = 1; k < tr.records.size(); ++k) EXPECT_EQ(tr.records[k].t, tr.records[k - 1].t + 1);
}

TEST(RunAsync, ElapsedFollowsTimeModel) {
  const ProblemSpec spec = k5_quadratic();
  RunConfig cfg = uniform_config(5, 0.1, 50, 4);
  cfg.time = TimeModel::slow_agent(5, 0, 100.0);
  const Trace tr = run_async_newton(spec, cfg);
  double expect = 0.0;
  for (std::size_t k = 1; k < tr.records.size(); ++k) {
    expect += tr.records[k].active_agent == 0 ? 100.0 : 1.0;
    EXPECT_EQ(tr.records[k].elapsed, expect);
  }
}

TEST(RunAsync, EarlyStopAtThreshold) {
  const ProblemSpec spec = k5_quadratic();
  RunConfig cfg = uniform_config(5, 0.17, 10000, 4);
  cfg.reference = solve_reference(spec);
  cfg.stop_rel_err = 1e-2;
  const Trace tr = run_async_newton(spec, cfg);
  EXPECT_LT(tr.records.back().rel_err, 1e-2);
  EXPECT_LT(tr.records.back().t, 10000);
}

TEST(RunSync, ZeroOrderIsDiagonalScaling) {
  const ProblemSpec spec = logistic_ring(4, 2, 10);
  std::mt19937_64 rng(1);
  const Eigen::VectorXd x = oracle::random_vector(rng, 8, -1, 1);
  RunConfig cfg = uniform_config(4, 0.7, 1, 0);
  cfg.x0 = x;
  const DenseSplitting s = dense_splitting(spec, x);
  const Eigen::VectorXd want = x - 0.7 * s.D_inv * penalized_gradient(spec, x);
  EXPECT_LT((run_sync_newton(spec, cfg, 0).final_x - want).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(RunSync, IterationCostIsSlowestAgent) {
  const ProblemSpec spec = k5_quadratic();
  RunConfig cfg = uniform_config(5, 1.0, 3, 0);
  cfg.time = TimeModel::slow_agent(5, 1, 100.0);
  const Trace tr = run_sync_newton(spec, cfg, 1);
  EXPECT_EQ(tr.records.back().elapsed, 300.0);
}

TEST(Gossip, EqualStatesWithIdenticalObjectivesOnlyTakeGradientStep) {
  std::vector<LocalObjective> locals{LocalObjective::quadratic(1.0, v1(2.0)), LocalObjective::quadratic(1.0, v1(2.0))};
  const ProblemSpec spec = make_problem(build_graph({GraphKind::complete}, 2, 0), locals, 1.0);
  GossipNetwork net(spec, Eigen::VectorXd::Constant(2, 1.0));
  net.exchange(0, 1);
  // avg = 1, gradient 2(1 - 2) = -2, stepsize 1 -> 3.
  EXPECT_NEAR(net.x()(0), 3.0, 1e-15);
  EXPECT_NEAR(net.x()(1), 3.0, 1e-15);
  EXPECT_EQ(net.updates(0), 1);
  net.exchange(0, 1);
  EXPECT_EQ(net.last_stepsize(0), 0.5);
}

TEST(Gossip, RelativeErrorDecreasesButSlowerThanAsync) {
  const ProblemSpec spec = k5_quadratic();
  const Reference cref = solve_constrained_reference(spec);
  RunConfig cfg = uniform_config(5, 1.0, 10000, 3);
  cfg.reference = cref;
  const Trace g = run_gossip(spec, cfg);
  EXPECT_LT(g.records.back().rel_err, g.records[100].rel_err);
  EXPECT_GT(g.records.back().rel_err, 0.0);

  RunConfig acfg = uniform_config(5, 0.17, 10000, 3);
  acfg.reference = solve_reference(spec);
  const Trace a = run_async_newton(spec, acfg);
  EXPECT_LT(a.records[1000].rel_err, g.records[1000].rel_err);
}

TEST(Gossip, NeedsTwoAgents) {
  std::vector<LocalObjective> locals{LocalObjective::quadratic(1.0, v1(2.0))};
  const ProblemSpec spec = make_problem(Graph::from_edges(1, {}), locals, 1.0);
  RunConfig cfg = uniform_config(1, 1.0, 10, 0);
  EXPECT_THROW(run_gossip(spec, cfg), ConfigError);
}

TEST(OneStepExpectation, TightAtOptimum) {
  const ProblemSpec spec = k5_quadratic();
  const Reference ref = solve_reference(spec);
  const auto sched = ActivationSchedule::uniform(5, ScalingMode::scaled, 0);
  const auto r = enumerate_one_step_expectation(spec, sched, 0.1, ref.x_star, ref);
  EXPECT_NEAR(r.expected_F, ref.F_star, 1e-12);
  EXPECT_LT(r.grad_norm_sq, 1e-20);
  EXPECT_LT(r.weighted_error, 1e-10);
}

TEST(OneStepExpectation, SupermartingaleHoldsAtRandomStates) {
  const ProblemSpec spec = k5_quadratic();
  const Reference ref = solve_reference(spec);
  std::mt19937_64 rng(12);
  const std::vector<std::vector<double>> ps{std::vector<double>(5, 0.2),
                                            {2.0 / 15, 2.0 / 15, 3.0 / 15, 4.0 / 15, 4.0 / 15}};
  for (const auto& p : ps) {
    const ActivationSchedule sched{p, ScalingMode::scaled, 0};
    const double eps = 0.9 * eps_as_bound(spec, p);
    for (int k = 0; k < 20; ++k) {
      const auto r = enumerate_one_step_expectation(spec, sched, eps, oracle::random_vector(rng, 5, -5, 10), ref);
      EXPECT_TRUE(r.constants.eps_valid_as);
      EXPECT_LE(r.expected_F, r.supermartingale_rhs + 1e-10);
    }
  }
}

TEST(OneStepExpectation, UnscaledNonuniformRejected) {
  const ProblemSpec spec = k5_quadratic();
  const Reference ref = solve_reference(spec);
  const ActivationSchedule sched{{0.1, 0.2, 0.2, 0.2, 0.3}, ScalingMode::uniform_unscaled, 0};
  EXPECT_THROW(enumerate_one_step_expectation(spec, sched, 0.1, ref.x_star, ref), ConfigError);
}

TEST(TraceCsv, HeaderAndRowCount) {
  const ProblemSpec spec = k5_quadratic();
  const Trace tr = run_async_newton(spec, uniform_config(5, 0.1, 4, 1));
  std::ostringstream os;
  write_trace_csv(os, tr);
  std::istringstream in(os.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "t,active_agent,F,rel_err,weighted_err,elapsed_time_units");
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, 5);
}

TEST(Snapshot, OneValuePerLine) {
  Snapshot s{3, Eigen::Vector3d(1.0, -2.5, 0.125)};
  std::ostringstream os;
  write_snapshot(os, s);
  std::istringstream in(os.str());
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "# t = 3");
  double a, b, c;
  in >> a >> b >> c;
  EXPECT_EQ(a, 1.0);
  EXPECT_EQ(b, -2.5);
  EXPECT_EQ(c, 0.125);
}
