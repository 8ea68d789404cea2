#include <cmath>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "netnewton/errors.hpp"
#include "netnewton/newton_core.hpp"
#include "oracles.hpp"

using namespace netnewton;

namespace {

Eigen::VectorXd v1(double a) { return Eigen::VectorXd::Constant(1, a); }

ProblemSpec quad_problem(GraphKind kind, int n, double alpha = 1.0) {
  std::vector<LocalObjective> locals;
  for (int i = 0; i < n; ++i) locals.push_back(LocalObjective::quadratic(1.0 + 0.5 * (i % 3), v1(i + 1.0)));
  return make_problem(build_graph({kind}, n, 0), std::move(locals), alpha);
}

ProblemSpec k5_quadratic() {
  std::vector<LocalObjective> locals;
  for (int i = 0; i < 5; ++i) locals.push_back(LocalObjective::quadratic(1.0, v1(i + 1.0)));
  return make_problem(build_graph({GraphKind::complete}, 5, 0), std::move(locals), 1.0);
}

ProblemSpec logistic_problem(int n, int dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<LocalObjective> locals;
  for (int i = 0; i < n; ++i) {
    Eigen::MatrixXd U(6, dim);
    Eigen::VectorXd v(6);
    for (int r = 0; r < 6; ++r) {
      for (int c = 0; c < dim; ++c) U(r, c) = g(rng);
      v(r) = g(rng) > 0 ? 1.0 : -1.0;
    }
    locals.push_back(LocalObjective::logistic(U, v, 1.0, 6L * n, n));
  }
  return make_problem(build_graph({GraphKind::ring}, n, 0), std::move(locals), 1.0);
}

// H = (I - W) kron I + alpha blockdiag(hess f_i), assembled here from the definition.
Eigen::MatrixXd hessian_oracle(const ProblemSpec& spec, const Eigen::VectorXd& x) {
  const int n = spec.n(), d = spec.dim;
  Eigen::MatrixXd H = oracle::kron_identity(Eigen::MatrixXd::Identity(n, n) - spec.W.W, d);
  for (int i = 0; i < n; ++i)
    H.block(i * d, i * d, d, d) += spec.alpha * spec.locals[i].hessian(x.segment(i * d, d));
  return H;
}

}  // namespace

TEST(ComputeD, QuadraticK5Entry) {
  const auto f = LocalObjective::quadratic(1.0, v1(0.0));
  EXPECT_NEAR(compute_D_ii(f, v1(0.0), 1.0, 0.2)(0, 0), 3.6, 1e-15);
}

TEST(ComputeD, ZeroAlphaIsPenaltyOnly) {
  const auto f = LocalObjective::quadratic(5.0, Eigen::VectorXd::Zero(2));
  const Eigen::MatrixXd D = compute_D_ii(f, Eigen::VectorXd::Zero(2), 0.0, 0.3);
  EXPECT_TRUE(D.isApprox(1.4 * Eigen::MatrixXd::Identity(2, 2)));
}

TEST(ComputeG, TwoAgentPenaltyOnly) {
  AgentState s;
  s.id = 0;
  s.x = v1(0.0);
  s.neighbors = {1};
  s.buf_x = {v1(1.0)};
  Eigen::MatrixXd W(2, 2);
  W << 0.5, 0.5, 0.5, 0.5;
  const auto f = LocalObjective::quadratic(1.0, v1(0.0));
  EXPECT_NEAR(compute_g_i(s, f, 0.0, W)(0), -0.5, 1e-15);
}

TEST(ComputeG, ZeroAtConsensusOptimum) {
  AgentState s;
  s.id = 0;
  s.x = v1(2.0);
  s.neighbors = {1};
  s.buf_x = {v1(2.0)};
  Eigen::MatrixXd W(2, 2);
  W << 0.5, 0.5, 0.5, 0.5;
  const auto f = LocalObjective::quadratic(1.0, v1(2.0));
  EXPECT_EQ(compute_g_i(s, f, 1.0, W).norm(), 0.0);
}

TEST(ComputeG, MissingBufferIsInvariantViolation) {
  AgentState s;
  s.id = 0;
  s.x = v1(0.0);
  s.neighbors = {1};
  Eigen::MatrixXd W = Eigen::MatrixXd::Constant(2, 2, 0.5);
  EXPECT_THROW(compute_g_i(s, LocalObjective::quadratic(1.0, v1(0.0)), 1.0, W), std::logic_error);
}

TEST(ComputeD0, ScalarDivision) {
  AgentState s;
  s.D = Eigen::MatrixXd::Constant(1, 1, 3.6);
  s.g = v1(1.8);
  EXPECT_NEAR(compute_d0_i(s)(0), -0.5, 1e-15);
  s.g = v1(0.0);
  EXPECT_EQ(compute_d0_i(s)(0), 0.0);
}

TEST(ComputeD0, NonSpdBlockThrows) {
  AgentState s;
  s.D = Eigen::MatrixXd::Constant(1, 1, -1.0);
  s.g = v1(1.0);
  EXPECT_THROW(compute_d0_i(s), SolveError);
}

TEST(ComputeNewtonDir, ZeroInputsGiveZero) {
  AgentState s;
  s.id = 0;
  s.D = Eigen::MatrixXd::Constant(1, 1, 2.0);
  s.g = v1(0.0);
  s.d0 = v1(0.0);
  s.neighbors = {1};
  s.buf_d0 = {v1(0.0)};
  const Eigen::MatrixXd W = Eigen::MatrixXd::Constant(2, 2, 0.5);
  EXPECT_EQ(compute_newton_dir_i(s, W)(0), 0.0);
}

TEST(DenseSplitting, MatchesDefinitionEntrywise) {
  std::mt19937_64 rng(1);
  for (const auto& spec : {quad_problem(GraphKind::path, 6), logistic_problem(5, 3, 2)}) {
    const Eigen::VectorXd x = oracle::random_vector(rng, spec.stacked_size(), -1, 1);
    const DenseSplitting s = dense_splitting(spec, x);
    const Eigen::MatrixXd H = hessian_oracle(spec, x);
    EXPECT_LT((H - s.H).cwiseAbs().maxCoeff(), 1e-14);
    EXPECT_LT((H - (s.D - s.B)).cwiseAbs().maxCoeff(), 1e-14);
    EXPECT_LT((penalized_hessian(spec, x) - H).cwiseAbs().maxCoeff(), 1e-14);
  }
}

TEST(DenseSplitting, BudgetEnforced) {
  const ProblemSpec spec = quad_problem(GraphKind::ring, 501);
  EXPECT_THROW(dense_splitting(spec, Eigen::VectorXd::Zero(501)), DimensionError);
}

TEST(DenseHatHInverse, SingleAgentIsDInverse) {
  std::vector<LocalObjective> locals{LocalObjective::quadratic(2.0, v1(5.0))};
  const ProblemSpec spec = make_problem(Graph::from_edges(1, {}), locals, 1.0);
  const DenseSplitting s = dense_splitting(spec, v1(0.0));
  EXPECT_EQ(s.B.norm(), 0.0);
  EXPECT_EQ((dense_hatH_inverse(spec, v1(0.0)) - s.D_inv).norm(), 0.0);
}

TEST(DenseHatHInverse, EigenvaluesWithinLambdaBounds) {
  std::mt19937_64 rng(4);
  const ProblemSpec spec = k5_quadratic();
  const auto c = theory_constants(spec, std::vector<double>(5, 0.2), 0.1);
  const Eigen::VectorXd ev = oracle::sym_eigenvalues(dense_hatH_inverse(spec, oracle::random_vector(rng, 5, -1, 1)));
  EXPECT_GE(ev.minCoeff(), c.lambda - 1e-10);
  EXPECT_LE(ev.maxCoeff(), c.Lambda + 1e-10);
}

TEST(SeriesInverse, FirstOrderEqualsHatH) {
  std::mt19937_64 rng(2);
  const ProblemSpec spec = logistic_problem(4, 2, 3);
  const Eigen::VectorXd x = oracle::random_vector(rng, 8, -1, 1);
  EXPECT_LT((series_inverse_K(spec, x, 1) - dense_hatH_inverse(spec, x)).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(SeriesInverse, ZeroOrderIsDInverse) {
  const ProblemSpec spec = quad_problem(GraphKind::ring, 5);
  const Eigen::VectorXd x = Eigen::VectorXd::Zero(5);
  EXPECT_LT((series_inverse_K(spec, x, 0) - dense_splitting(spec, x).D_inv).norm(), 1e-15);
}

TEST(SeriesInverse, ConvergesGeometrically) {
  const ProblemSpec spec = quad_problem(GraphKind::path, 6);
  const Eigen::VectorXd x = Eigen::VectorXd::Zero(6);
  const Eigen::MatrixXd Hinv = hessian_oracle(spec, x).inverse();
  const double rho = theory_constants(spec, std::vector<double>(6, 1.0 / 6), 0.01).rho;
  for (int K : {5, 10, 20, 50}) {
    const double err = (series_inverse_K(spec, x, K) - Hinv).operatorNorm();
    // Rounding floor once the tail drops below machine precision.
    EXPECT_LE(err, (2.0 * std::pow(rho, K) + 1e-14) * Hinv.operatorNorm()) << "K=" << K;
  }
}

TEST(SeriesInverse, NegativeOrderRejected) {
  const ProblemSpec spec = quad_problem(GraphKind::ring, 4);
  EXPECT_THROW(series_inverse_K(spec, Eigen::VectorXd::Zero(4), -1), std::invalid_argument);
}

TEST(NnKDirection, MatchesDenseSeries) {
  std::mt19937_64 rng(12);
  const ProblemSpec spec = logistic_problem(6, 2, 4);
  const Eigen::VectorXd x = oracle::random_vector(rng, 12, -1, 1);
  const Eigen::VectorXd g = penalized_gradient(spec, x);
  for (int K : {0, 1, 3, 7}) {
    const Eigen::VectorXd want = -series_inverse_K(spec, x, K) * g;
    EXPECT_LT((nn_k_direction(spec, x, K) - want).cwiseAbs().maxCoeff(), 1e-12) << "K=" << K;
  }
}

TEST(NormalizedB, SpectrumWithinZeroAndRho) {
  std::mt19937_64 rng(7);
  const ProblemSpec spec = logistic_problem(5, 3, 9);
  const auto p = std::vector<double>(5, 0.2);
  for (int k = 0; k < 10; ++k) {
    const Eigen::VectorXd x = oracle::random_vector(rng, 15, -2, 2);
    const double rho = theory_constants(spec, p, 0.01).rho;
    const Eigen::VectorXd ev = oracle::sym_eigenvalues(dense_splitting(spec, x).normalized_B());
    EXPECT_GE(ev.minCoeff(), -1e-10);
    EXPECT_LE(ev.maxCoeff(), rho + 1e-10);
  }
}

TEST(TheoryConstants, K5QuadraticValues) {
  const ProblemSpec spec = k5_quadratic();
  const auto c = theory_constants(spec, std::vector<double>(5, 0.2), 0.1);
  EXPECT_NEAR(c.rho, 4.0 / 9.0, 1e-15);
  EXPECT_NEAR(c.lambda, 1.0 / 3.6, 1e-15);
  EXPECT_NEAR(c.Lambda, (13.0 / 9.0) / 3.6, 1e-15);
  EXPECT_NEAR(c.eps_as_max, 32.4 / 169.0, 1e-15);
  EXPECT_NEAR(c.pi_min, 0.2, 1e-15);
  EXPECT_TRUE(c.eps_valid_as);
  EXPECT_NEAR(eps_as_bound(spec, std::vector<double>(5, 0.2)), 32.4 / 169.0, 1e-15);
}

TEST(TheoryConstants, QuadraticHasNoLipschitzTerms) {
  const ProblemSpec spec = k5_quadratic();
  const auto c = theory_constants(spec, std::vector<double>(5, 0.2), 0.1, 3.0);
  EXPECT_EQ(c.C2, 0.0);
  EXPECT_EQ(c.Gamma1, 0.0);
  ASSERT_TRUE(c.C3.has_value());
  EXPECT_EQ(*c.C3, 0.0);
  EXPECT_EQ(c.gamma_t(2.0), c.C1);
  EXPECT_EQ(c.gamma_t(1000.0), c.C1);
  EXPECT_TRUE(std::isinf(c.theta_upper(5.0)));
}

TEST(TheoryConstants, OutOfRangeEpsFlagsInvalid) {
  const auto c = theory_constants(k5_quadratic(), std::vector<double>(5, 0.2), 0.5);
  EXPECT_FALSE(c.eps_valid_as);
  EXPECT_FALSE(c.eps_valid_lin);
  EXPECT_TRUE(std::isfinite(c.rho));
}

TEST(TheoryConstants, BadProbabilitiesRejected) {
  EXPECT_THROW(theory_constants(k5_quadratic(), {0.5, 0.5}, 0.1), ConfigError);
  EXPECT_THROW(theory_constants(k5_quadratic(), {0.3, 0.3, 0.3, 0.3, 0.3}, 0.1), ConfigError);
}

TEST(TheoryConstants, GammaMonotoneAndBelowOneOnValidRange) {
  const ProblemSpec spec = logistic_problem(5, 2, 1);
  const std::vector<double> p(5, 0.2);
  const double hi = theory_constants(spec, p, 0.01).eps_lin_max;
  for (double frac : {0.1, 0.5, 0.9, 0.99}) {
    const auto c = theory_constants(spec, p, frac * hi, 0.7);
    EXPECT_TRUE(c.eps_valid_lin);
    EXPECT_LT(c.C1, 1.0);
    EXPECT_GT(c.beta, 0.0);
    EXPECT_LT(c.beta, 1.0);
    double prev = c.gamma_t(2.0);
    for (double t = 3.0; t < 5000.0; t *= 1.7) {
      const double cur = c.gamma_t(t);
      EXPECT_LE(cur, prev + 1e-15);
      prev = cur;
    }
    EXPECT_NEAR(c.gamma_t(1e9), c.C1, 1e-9);
  }
}

TEST(TheoryConstants, QuadraticBandOrdering) {
  const ProblemSpec spec = logistic_problem(5, 2, 1);
  const std::vector<double> p(5, 0.2);
  const auto c = theory_constants(spec, p, 0.5 * eps_as_bound(spec, p), 0.1);
  const double t = 1e6;
  const double theta = 0.5 * std::min(c.theta_upper(t), 1e6);
  const auto band = c.quadratic_band(theta, t);
  ASSERT_TRUE(band.has_value());
  EXPECT_LT(band->first, band->second);
  EXPECT_FALSE(c.quadratic_band(2.0 * c.theta_upper(t), t).has_value());
}

TEST(TheoryConstants, KeyValueReportListsCoreConstants) {
  std::ostringstream os;
  write_key_values(os, theory_constants(k5_quadratic(), std::vector<double>(5, 0.2), 0.1));
  const std::string s = os.str();
  for (const char* key : {"rho", "lambda", "Lambda", "eps_as_max", "beta", "C1"})
    EXPECT_NE(s.find(std::string(key) + " = "), std::string::npos) << key;
}

TEST(StepActiveAgent, ScaledDividesByProbability) {
  EXPECT_NEAR(step_active_agent(v1(0.0), v1(1.0), 0.12, 0.2, ScalingMode::scaled)(0), 0.6, 1e-15);
  EXPECT_EQ(step_active_agent(v1(3.0), v1(0.0), 0.12, 0.2, ScalingMode::scaled)(0), 3.0);
  EXPECT_NEAR(step_active_agent(v1(0.0), v1(1.0), 0.12, 0.2, ScalingMode::uniform_unscaled)(0), 0.12, 1e-15);
}

TEST(StepActiveAgent, UniformScaledEqualsUnscaledTimesN) {
  for (int n : {2, 5, 9})
    for (double eps : {0.01, 0.1, 0.3})
      EXPECT_NEAR(step_coefficient(eps, 1.0 / n, ScalingMode::scaled),
                  step_coefficient(n * eps, 1.0 / n, ScalingMode::uniform_unscaled), 1e-14);
}

TEST(ScalingMode, StringRoundTrip) {
  for (auto m : {ScalingMode::scaled, ScalingMode::uniform_unscaled})
    EXPECT_EQ(scaling_mode_from_string(to_string(m)), m);
  EXPECT_THROW(scaling_mode_from_string("bogus"), std::invalid_argument);
}
