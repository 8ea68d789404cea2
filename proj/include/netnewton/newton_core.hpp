#pragma once

#include <iosfwd>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "netnewton/objectives.hpp"

namespace netnewton {

// Local view of one agent. Buffers are aligned with `neighbors`: buf_x[k]
// holds the latest x received from neighbors[k].
struct AgentState {
  int id = 0;
  Eigen::VectorXd x;
  Eigen::MatrixXd D;
  Eigen::VectorXd g;
  Eigen::VectorXd d0;
  std::vector<int> neighbors;
  std::vector<Eigen::VectorXd> buf_x;
  std::vector<Eigen::VectorXd> buf_d0;

  // Position of `j` in `neighbors`; throws std::logic_error if absent.
  std::size_t slot(int j) const;
};

// alpha * hess f_i(x_i) + 2 (1 - W_ii) I
Eigen::MatrixXd compute_D_ii(const LocalObjective& f, const Eigen::VectorXd& x_i, double alpha,
                             double W_ii);

// (1 - W_ii) x_i + alpha grad f_i(x_i) - sum_j W_ij x_j, with x_j read from buffers.
Eigen::VectorXd compute_g_i(const AgentState& s, const LocalObjective& f, double alpha,
                            const Eigen::MatrixXd& W);

// -D_ii^{-1} g_i. Throws SolveError if D_ii is not positive definite.
Eigen::VectorXd compute_d0_i(const AgentState& s);

// D_ii^{-1} [(1 - W_ii) d0_i - g_i + sum_j W_ij d0_j], with d0_j read from buffers.
Eigen::VectorXd compute_newton_dir_i(const AgentState& s, const Eigen::MatrixXd& W);

enum class ScalingMode { uniform_unscaled, scaled };

std::string to_string(ScalingMode mode);
ScalingMode scaling_mode_from_string(const std::string& name);

// Multiplier applied to d_i: eps / p_i when scaled, eps otherwise.
double step_coefficient(double eps, double p_i, ScalingMode mode);

Eigen::VectorXd step_active_agent(const Eigen::VectorXd& x_i, const Eigen::VectorXd& d_i,
                                  double eps, double p_i, ScalingMode mode);

// Dense operators for verification; n * dim must not exceed kDenseBudget.
inline constexpr Eigen::Index kDenseBudget = 500;

struct DenseSplitting {
  Eigen::MatrixXd H;
  Eigen::MatrixXd D;
  Eigen::MatrixXd B;
  Eigen::MatrixXd D_inv;
  Eigen::MatrixXd D_sqrt;
  Eigen::MatrixXd D_inv_sqrt;

  // D^{-1/2} B D^{-1/2}
  Eigen::MatrixXd normalized_B() const { return D_inv_sqrt * B * D_inv_sqrt; }
};

DenseSplitting dense_splitting(const ProblemSpec& spec, const Eigen::VectorXd& x);

// D^{-1} + D^{-1} B D^{-1}
Eigen::MatrixXd dense_hatH_inverse(const ProblemSpec& spec, const Eigen::VectorXd& x);

// sum_{k=0..K} (D^{-1} B)^k D^{-1}
Eigen::MatrixXd series_inverse_K(const ProblemSpec& spec, const Eigen::VectorXd& x, int K);

// Synchronous NN-K direction by the one-hop recursion
// d <- D^{-1} (B d - g), starting from d = -D^{-1} g. Sparse; no size budget.
Eigen::VectorXd nn_k_direction(const ProblemSpec& spec, const Eigen::VectorXd& x, int K);

struct TheoryInputs {
  double m = 0.0;
  double M = 0.0;
  double L = 0.0;
  double delta = 0.0;
  double Delta = 0.0;
  double alpha = 1.0;
  std::vector<double> p;
  double eps = 0.0;
  // F(x0) - F*; C3, Gamma(t) and the onset need it.
  std::optional<double> initial_gap;
};

struct TheoryConstants {
  double rho = 0.0;
  double lambda = 0.0;
  double Lambda = 0.0;
  double pi_min = 0.0;
  double Pi_max = 0.0;
  double eps = 0.0;
  double eps_as_max = 0.0;
  double eps_lin_max = 0.0;
  bool eps_valid_as = false;
  bool eps_valid_lin = false;
  double beta = std::numeric_limits<double>::quiet_NaN();
  double C1 = std::numeric_limits<double>::quiet_NaN();
  double C2 = 0.0;
  double Gamma1 = 0.0;
  std::optional<double> initial_gap;
  std::optional<double> C3;
  // Activations after which the weighted error enters its quadratic phase.
  std::optional<double> t_quad_onset;

  // Coefficient of ||g||^2 in the one-step expected decrease.
  double decrease_coefficient() const;
  // C1 (1 + C3 (1 - beta)^{(t-2)/4}); needs C3.
  double gamma_t(double t) const;
  // Upper end of the admissible theta interval at t (0 when Gamma(t) >= 1).
  double theta_upper(double t) const;
  // (theta Gamma(t), theta / (theta Gamma1 + 1)); empty when the interval is void.
  std::optional<std::pair<double, double>> quadratic_band(double theta, double t) const;
};

TheoryConstants theory_constants(const TheoryInputs& in);

// Convenience: pulls m, M, L, delta, Delta, alpha from the problem.
TheoryConstants theory_constants(const ProblemSpec& spec, const std::vector<double>& p, double eps,
                                 std::optional<double> initial_gap = std::nullopt);

// 2 pi (lambda / Lambda)^2 for the given problem and probabilities.
double eps_as_bound(const ProblemSpec& spec, const std::vector<double>& p);

// Flat "key = value" lines.
void write_key_values(std::ostream& out, const TheoryConstants& c);

}  // namespace netnewton
