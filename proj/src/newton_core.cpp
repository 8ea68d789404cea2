#include "netnewton/newton_core.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include <fmt/format.h>

#include "netnewton/errors.hpp"

namespace netnewton {

std::size_t AgentState::slot(int j) const {
  const auto it = std::lower_bound(neighbors.begin(), neighbors.end(), j);
  if (it == neighbors.end() || *it != j) {
    throw std::logic_error(fmt::format("agent {} holds no buffer for {}", id, j));
  }
  return static_cast<std::size_t>(it - neighbors.begin());
}

Eigen::MatrixXd compute_D_ii(const LocalObjective& f, const Eigen::VectorXd& x_i, double alpha,
                             double W_ii) {
  Eigen::MatrixXd D = alpha * f.hessian(x_i);
  D.diagonal().array() += 2.0 * (1.0 - W_ii);
  return D;
}

Eigen::VectorXd compute_g_i(const AgentState& s, const LocalObjective& f, double alpha,
                            const Eigen::MatrixXd& W) {
  if (s.buf_x.size() != s.neighbors.size()) {
    throw std::logic_error(fmt::format("agent {} has unpopulated x buffers", s.id));
  }
  Eigen::VectorXd g = (1.0 - W(s.id, s.id)) * s.x + alpha * f.gradient(s.x);
  for (std::size_t k = 0; k < s.neighbors.size(); ++k) g -= W(s.id, s.neighbors[k]) * s.buf_x[k];
  return g;
}

namespace {

Eigen::LLT<Eigen::MatrixXd> factor_block(const Eigen::MatrixXd& D, int id) {
  Eigen::LLT<Eigen::MatrixXd> llt(D);
  if (llt.info() != Eigen::Success) {
    throw SolveError(fmt::format("D block of agent {} is not positive definite", id),
                     D.diagonal().minCoeff());
  }
  return llt;
}

}  // namespace

Eigen::VectorXd compute_d0_i(const AgentState& s) {
  return -factor_block(s.D, s.id).solve(s.g);
}

Eigen::VectorXd compute_newton_dir_i(const AgentState& s, const Eigen::MatrixXd& W) {
  if (s.buf_d0.size() != s.neighbors.size()) {
    throw std::logic_error(fmt::format("agent {} has unpopulated direction buffers", s.id));
  }
  Eigen::VectorXd rhs = (1.0 - W(s.id, s.id)) * s.d0 - s.g;
  for (std::size_t k = 0; k < s.neighbors.size(); ++k) rhs += W(s.id, s.neighbors[k]) * s.buf_d0[k];
  return factor_block(s.D, s.id).solve(rhs);
}

std::string to_string(ScalingMode mode) {
  return mode == ScalingMode::scaled ? "scaled" : "uniform_unscaled";
}

ScalingMode scaling_mode_from_string(const std::string& name) {
  if (name == "scaled") return ScalingMode::scaled;
  if (name == "uniform_unscaled" || name == "unscaled") return ScalingMode::uniform_unscaled;
  throw std::invalid_argument("unknown scaling mode '" + name + "'");
}

double step_coefficient(double eps, double p_i, ScalingMode mode) {
  return mode == ScalingMode::scaled ? eps / p_i : eps;
}

Eigen::VectorXd step_active_agent(const Eigen::VectorXd& x_i, const Eigen::VectorXd& d_i,
                                  double eps, double p_i, ScalingMode mode) {
  return x_i + step_coefficient(eps, p_i, mode) * d_i;
}

DenseSplitting dense_splitting(const ProblemSpec& spec, const Eigen::VectorXd& x) {
  const Eigen::Index N = spec.stacked_size();
  if (N > kDenseBudget) {
    throw DimensionError(fmt::format("dense operators limited to {} rows, got {}", kDenseBudget, N));
  }
  const int d = spec.dim;
  const auto& W = spec.W.W;
  DenseSplitting s;
  s.H = penalized_hessian(spec, x);
  s.D = Eigen::MatrixXd::Zero(N, N);
  s.B = Eigen::MatrixXd::Zero(N, N);
  s.D_inv = Eigen::MatrixXd::Zero(N, N);
  s.D_sqrt = Eigen::MatrixXd::Zero(N, N);
  s.D_inv_sqrt = Eigen::MatrixXd::Zero(N, N);
  for (int i = 0; i < spec.n(); ++i) {
    const Eigen::MatrixXd Dii =
        compute_D_ii(spec.locals[static_cast<std::size_t>(i)], spec.block(x, i), spec.alpha, W(i, i));
    s.D.block(i * d, i * d, d, d) = Dii;
    s.D_inv.block(i * d, i * d, d, d) =
        factor_block(Dii, i).solve(Eigen::MatrixXd::Identity(d, d));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Dii);
    s.D_sqrt.block(i * d, i * d, d, d) = es.operatorSqrt();
    s.D_inv_sqrt.block(i * d, i * d, d, d) = es.operatorInverseSqrt();
    s.B.block(i * d, i * d, d, d).diagonal().setConstant(1.0 - W(i, i));
    for (int j : spec.graph.neighbors(i)) s.B.block(i * d, j * d, d, d).diagonal().setConstant(W(i, j));
  }
  return s;
}

Eigen::MatrixXd dense_hatH_inverse(const ProblemSpec& spec, const Eigen::VectorXd& x) {
  return series_inverse_K(spec, x, 1);
}

Eigen::MatrixXd series_inverse_K(const ProblemSpec& spec, const Eigen::VectorXd& x, int K) {
  if (K < 0) throw std::invalid_argument("series truncation order must be >= 0");
  const DenseSplitting s = dense_splitting(spec, x);
  Eigen::MatrixXd term = s.D_inv;
  Eigen::MatrixXd sum = term;
  for (int k = 1; k <= K; ++k) {
    term = s.D_inv * (s.B * term);
    sum += term;
  }
  return sum;
}

Eigen::VectorXd nn_k_direction(const ProblemSpec& spec, const Eigen::VectorXd& x, int K) {
  if (K < 0) throw std::invalid_argument("series truncation order must be >= 0");
  const Eigen::VectorXd g = penalized_gradient(spec, x);
  const auto& W = spec.W.W;
  std::vector<Eigen::LLT<Eigen::MatrixXd>> factors;
  factors.reserve(static_cast<std::size_t>(spec.n()));
  for (int i = 0; i < spec.n(); ++i) {
    factors.push_back(factor_block(
        compute_D_ii(spec.locals[static_cast<std::size_t>(i)], spec.block(x, i), spec.alpha, W(i, i)),
        i));
  }
  Eigen::VectorXd dir(g.size());
  for (int i = 0; i < spec.n(); ++i) {
    spec.block(dir, i) = -factors[static_cast<std::size_t>(i)].solve(spec.block(g, i));
  }
  Eigen::VectorXd next(g.size());
  for (int k = 0; k < K; ++k) {
    for (int i = 0; i < spec.n(); ++i) {
      Eigen::VectorXd rhs = (1.0 - W(i, i)) * spec.block(dir, i) - spec.block(g, i);
      for (int j : spec.graph.neighbors(i)) rhs += W(i, j) * spec.block(dir, j);
      spec.block(next, i) = factors[static_cast<std::size_t>(i)].solve(rhs);
    }
    dir.swap(next);
  }
  return dir;
}

double TheoryConstants::decrease_coefficient() const {
  return eps * lambda - eps * eps * Lambda * Lambda / (2.0 * lambda * pi_min);
}

double TheoryConstants::gamma_t(double t) const {
  if (!C3) throw std::logic_error("Gamma(t) needs the initial optimality gap");
  if (*C3 == 0.0) return C1;
  return C1 * (1.0 + *C3 * std::pow(1.0 - beta, (t - 2.0) / 4.0));
}

double TheoryConstants::theta_upper(double t) const {
  const double G = gamma_t(t);
  if (G >= 1.0) return 0.0;
  if (Gamma1 == 0.0) return std::numeric_limits<double>::infinity();
  return (1.0 - G) / (Gamma1 * G);
}

std::optional<std::pair<double, double>> TheoryConstants::quadratic_band(double theta,
                                                                         double t) const {
  if (!(theta > 0.0) || !(theta < theta_upper(t))) return std::nullopt;
  const double lo = theta * gamma_t(t);
  const double hi = theta / (theta * Gamma1 + 1.0);
  if (!(lo < hi)) return std::nullopt;
  return std::make_pair(lo, hi);
}

TheoryConstants theory_constants(const TheoryInputs& in) {
  if (in.p.empty()) throw ConfigError("activation probabilities are empty");
  const double psum = std::accumulate(in.p.begin(), in.p.end(), 0.0);
  if (std::abs(psum - 1.0) > 1e-9) {
    throw ConfigError(fmt::format("activation probabilities sum to {}, not 1", psum));
  }
  TheoryConstants c;
  c.pi_min = *std::min_element(in.p.begin(), in.p.end());
  c.Pi_max = *std::max_element(in.p.begin(), in.p.end());
  if (!(c.pi_min > 0.0)) throw ConfigError("every activation probability must be positive");

  const double a = in.alpha;
  const double d_hi = 2.0 * (1.0 - in.delta) + a * in.M;  // upper eigenvalue bound of D
  const double d_lo = 2.0 * (1.0 - in.Delta) + a * in.m;  // lower eigenvalue bound of D
  c.rho = 2.0 * (1.0 - in.delta) / (2.0 * (1.0 - in.delta) + a * in.m);
  c.lambda = 1.0 / d_hi;
  c.Lambda = (1.0 + c.rho) / d_lo;
  c.eps = in.eps;
  const double ratio = c.lambda / c.Lambda;
  c.eps_as_max = 2.0 * c.pi_min * ratio * ratio;
  c.eps_lin_max = std::min(0.5, c.eps_as_max);
  c.eps_valid_as = in.eps > 0.0 && in.eps <= c.eps_as_max;
  c.eps_valid_lin = in.eps > 0.0 && in.eps < c.eps_lin_max;

  const double e = in.eps;
  const double pi = c.pi_min;
  c.beta = a * in.m * e * (2.0 * pi * c.lambda * c.lambda - e * c.Lambda * c.Lambda) /
           (c.lambda * pi);
  const double r2 = 1.0 - c.rho * c.rho;
  const double inner = 1.0 + e * std::max(e / pi - 2.0, e * r2 * r2 / pi - 2.0 * r2);
  c.C1 = inner >= 0.0 ? std::sqrt(inner) : std::numeric_limits<double>::quiet_NaN();
  c.C2 = std::sqrt(e * a * in.L * c.Lambda / (pi * d_lo));
  c.Gamma1 = std::sqrt(d_hi) * a * in.L * e * c.Lambda / (2.0 * pi * pi * d_lo);

  c.initial_gap = in.initial_gap;
  if (in.initial_gap) {
    const double gap = std::max(0.0, *in.initial_gap);
    c.C3 = c.C2 * std::pow(2.0 * gap / (c.lambda * pi * pi), 0.25);
    if (*c.C3 == 0.0) {
      c.t_quad_onset = 0.0;
    } else if (c.eps_valid_lin && c.beta > 0.0 && c.beta < 1.0 && c.C1 < 1.0) {
      const double t = 4.0 * std::log((1.0 - c.C1) / (*c.C3 * c.C1)) / std::log(1.0 - c.beta) + 2.0;
      c.t_quad_onset = std::max(0.0, t);
    }
  }
  return c;
}

TheoryConstants theory_constants(const ProblemSpec& spec, const std::vector<double>& p, double eps,
                                 std::optional<double> initial_gap) {
  if (static_cast<int>(p.size()) != spec.n()) {
    throw ConfigError(fmt::format("{} probabilities for {} agents", p.size(), spec.n()));
  }
  TheoryInputs in;
  in.m = spec.curvature.m;
  in.M = spec.curvature.M;
  in.L = spec.curvature.L;
  in.delta = spec.W.delta;
  in.Delta = spec.W.Delta;
  in.alpha = spec.alpha;
  in.p = p;
  in.eps = eps;
  in.initial_gap = initial_gap;
  return theory_constants(in);
}

double eps_as_bound(const ProblemSpec& spec, const std::vector<double>& p) {
  return theory_constants(spec, p, 0.0).eps_as_max;
}

void write_key_values(std::ostream& out, const TheoryConstants& c) {
  auto line = [&out](const char* key, double v) { out << fmt::format("{} = {:.17g}\n", key, v); };
  line("rho", c.rho);
  line("lambda", c.lambda);
  line("Lambda", c.Lambda);
  line("pi_min", c.pi_min);
  line("Pi_max", c.Pi_max);
  line("eps", c.eps);
  line("eps_as_max", c.eps_as_max);
  line("eps_lin_max", c.eps_lin_max);
  out << "eps_valid_as = " << (c.eps_valid_as ? "true" : "false") << '\n';
  out << "eps_valid_lin = " << (c.eps_valid_lin ? "true" : "false") << '\n';
  line("beta", c.beta);
  line("C1", c.C1);
  line("C2", c.C2);
  line("Gamma1", c.Gamma1);
  if (c.initial_gap) line("initial_gap", *c.initial_gap);
  if (c.C3) line("C3", *c.C3);
  if (c.t_quad_onset) {
    line("t_quad_onset", *c.t_quad_onset);
  } else {
    out << "t_quad_onset = undefined\n";
  }
}

}  // namespace netnewton
