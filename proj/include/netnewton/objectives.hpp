#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "netnewton/topology.hpp"

namespace netnewton {

// c * ||x - b||^2
struct QuadraticTerm {
  double c = 1.0;
  Eigen::VectorXd b;
};

// (upsilon / 2n) ||x||^2 + (1/K) sum_j log(1 + exp(-v_j <u_j, x>))
// Rows of `features` are the u_j; K is the global sample count so that the
// local pieces add up to the centralized objective.
struct LogisticTerm {
  Eigen::MatrixXd features;
  Eigen::VectorXd labels;
  double upsilon = 1.0;
  long total_samples = 1;
  int n_agents = 1;
};

class LocalObjective {
 public:
  static LocalObjective quadratic(double c, Eigen::VectorXd b);
  static LocalObjective logistic(Eigen::MatrixXd features, Eigen::VectorXd labels, double upsilon,
                                 long total_samples, int n_agents);

  int dim() const { return dim_; }
  bool is_quadratic() const { return std::holds_alternative<QuadraticTerm>(term_); }
  bool is_logistic() const { return std::holds_alternative<LogisticTerm>(term_); }
  const QuadraticTerm& as_quadratic() const { return std::get<QuadraticTerm>(term_); }
  const LogisticTerm& as_logistic() const { return std::get<LogisticTerm>(term_); }

  double value(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  Eigen::VectorXd gradient(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  Eigen::MatrixXd hessian(const Eigen::Ref<const Eigen::VectorXd>& x) const;

 private:
  void check_dim(Eigen::Index got) const;

  std::variant<QuadraticTerm, LogisticTerm> term_;
  int dim_ = 0;
};

inline double local_value(const LocalObjective& f, const Eigen::Ref<const Eigen::VectorXd>& x) {
  return f.value(x);
}
inline Eigen::VectorXd local_gradient(const LocalObjective& f,
                                      const Eigen::Ref<const Eigen::VectorXd>& x) {
  return f.gradient(x);
}
inline Eigen::MatrixXd local_hessian(const LocalObjective& f,
                                     const Eigen::Ref<const Eigen::VectorXd>& x) {
  return f.hessian(x);
}

// Overflow-safe scalar helpers.
double softplus(double z);  // log(1 + e^z)
double sigmoid(double z);

struct CurvatureConstants {
  double m = 0.0;  // lower Hessian bound
  double M = 0.0;  // upper Hessian bound
  double L = 0.0;  // Hessian Lipschitz constant
};

// Closed-form global bounds; throws ConfigError when families are mixed.
CurvatureConstants curvature_constants(std::span<const LocalObjective> locals);

// Penalized consensus problem: 1/2 x'((I - W) kron I)x + alpha sum_i f_i(x_i).
struct ProblemSpec {
  Graph graph;
  ConsensusMatrix W;
  std::vector<LocalObjective> locals;
  double alpha = 1.0;
  CurvatureConstants curvature;
  int dim = 1;

  int n() const { return static_cast<int>(locals.size()); }
  Eigen::Index stacked_size() const { return static_cast<Eigen::Index>(n()) * dim; }
  auto block(Eigen::VectorXd& x, int i) const { return x.segment(static_cast<Eigen::Index>(i) * dim, dim); }
  auto block(const Eigen::VectorXd& x, int i) const {
    return x.segment(static_cast<Eigen::Index>(i) * dim, dim);
  }
};

// Validates shapes and computes curvature constants.
ProblemSpec make_problem(Graph graph, std::vector<LocalObjective> locals, double alpha);
// Same, with an explicit consensus matrix (used to inject tampered W in tests).
ProblemSpec make_problem(Graph graph, ConsensusMatrix W, std::vector<LocalObjective> locals,
                         double alpha);

double penalized_value(const ProblemSpec& spec, const Eigen::VectorXd& x);
Eigen::VectorXd penalized_gradient(const ProblemSpec& spec, const Eigen::VectorXd& x);
// Dense (I - W) kron I + alpha blockdiag(hess f_i).
Eigen::MatrixXd penalized_hessian(const ProblemSpec& spec, const Eigen::VectorXd& x);

// Objective of the constrained problem: sum_i f_i(x_i).
double consensus_value(const ProblemSpec& spec, const Eigen::VectorXd& x);

struct Dataset {
  std::vector<Eigen::VectorXd> features;
  std::vector<double> labels;
  int dim = 0;

  long size() const { return static_cast<long>(labels.size()); }
};

struct LibsvmOptions {
  // Accept label "0" as the negative class.
  bool zero_as_negative = false;
};

// Sparse "label idx:val ..." text with 1-based indices. dim is the largest
// index seen. Throws ParseError (with line number) on malformed input.
Dataset parse_libsvm(std::istream& in, const LibsvmOptions& opts = {});
Dataset parse_libsvm_file(const std::string& path, const LibsvmOptions& opts = {});

// Shuffles deterministically by seed and deals floor(K/n) samples to each
// agent; the remaining K mod n samples are dropped. K stays the global count.
std::vector<LocalObjective> partition_uniform(const Dataset& ds, int n, double upsilon,
                                              std::uint64_t seed);

// Centralized logistic objective over the whole dataset (oracle for partition checks).
double centralized_logistic_value(const Dataset& ds, double upsilon,
                                  const Eigen::VectorXd& x);

}  // namespace netnewton
