#include "netnewton/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include <fmt/format.h>

#include "netnewton/errors.hpp"

namespace netnewton {

double softplus(double z) {
  if (z > 35.0) return z + std::exp(-z);
  if (z < -35.0) return std::exp(z);
  return std::log1p(std::exp(z));
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

LocalObjective LocalObjective::quadratic(double c, Eigen::VectorXd b) {
  if (!(c > 0.0)) throw std::invalid_argument("quadratic curvature weight must be positive");
  if (b.size() == 0) throw std::invalid_argument("quadratic target must be nonempty");
  LocalObjective f;
  f.dim_ = static_cast<int>(b.size());
  f.term_ = QuadraticTerm{c, std::move(b)};
  return f;
}

LocalObjective LocalObjective::logistic(Eigen::MatrixXd features, Eigen::VectorXd labels,
                                        double upsilon, long total_samples, int n_agents) {
  if (!(upsilon > 0.0)) throw std::invalid_argument("logistic regularizer must be positive");
  if (features.rows() != labels.size()) {
    throw std::invalid_argument("feature rows and labels differ in count");
  }
  if (features.cols() == 0) throw std::invalid_argument("logistic features need dim >= 1");
  if (total_samples < 1 || n_agents < 1) {
    throw std::invalid_argument("sample and agent counts must be positive");
  }
  for (Eigen::Index j = 0; j < labels.size(); ++j) {
    if (labels(j) != 1.0 && labels(j) != -1.0) {
      throw std::invalid_argument("logistic labels must be +1 or -1");
    }
  }
  LocalObjective f;
  f.dim_ = static_cast<int>(features.cols());
  f.term_ = LogisticTerm{std::move(features), std::move(labels), upsilon, total_samples, n_agents};
  return f;
}

void LocalObjective::check_dim(Eigen::Index got) const {
  if (got != dim_) {
    throw DimensionError(fmt::format("expected block of dimension {}, got {}", dim_, got));
  }
}

double LocalObjective::value(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  check_dim(x.size());
  if (const auto* q = std::get_if<QuadraticTerm>(&term_)) {
    return q->c * (x - q->b).squaredNorm();
  }
  const auto& l = std::get<LogisticTerm>(term_);
  const Eigen::VectorXd margins = (l.features * x).cwiseProduct(l.labels);
  double loss = 0.0;
  for (Eigen::Index j = 0; j < margins.size(); ++j) loss += softplus(-margins(j));
  return l.upsilon / (2.0 * l.n_agents) * x.squaredNorm() + loss / static_cast<double>(l.total_samples);
}

Eigen::VectorXd LocalObjective::gradient(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  check_dim(x.size());
  if (const auto* q = std::get_if<QuadraticTerm>(&term_)) {
    return 2.0 * q->c * (x - q->b);
  }
  const auto& l = std::get<LogisticTerm>(term_);
  const Eigen::VectorXd margins = (l.features * x).cwiseProduct(l.labels);
  Eigen::VectorXd weights(margins.size());
  for (Eigen::Index j = 0; j < margins.size(); ++j) {
    weights(j) = l.labels(j) * sigmoid(-margins(j));
  }
  return (l.upsilon / l.n_agents) * x -
         (l.features.transpose() * weights) / static_cast<double>(l.total_samples);
}

Eigen::MatrixXd LocalObjective::hessian(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  check_dim(x.size());
  if (const auto* q = std::get_if<QuadraticTerm>(&term_)) {
    return 2.0 * q->c * Eigen::MatrixXd::Identity(dim_, dim_);
  }
  const auto& l = std::get<LogisticTerm>(term_);
  const Eigen::VectorXd scores = l.features * x;
  Eigen::VectorXd w(scores.size());
  for (Eigen::Index j = 0; j < scores.size(); ++j) {
    const double s = sigmoid(scores(j));
    w(j) = s * (1.0 - s);
  }
  Eigen::MatrixXd H = l.features.transpose() * w.asDiagonal() * l.features;
  H /= static_cast<double>(l.total_samples);
  H.diagonal().array() += l.upsilon / l.n_agents;
  return H;
}

CurvatureConstants curvature_constants(std::span<const LocalObjective> locals) {
  if (locals.empty()) throw ConfigError("curvature_constants needs at least one objective");
  const bool quad = locals.front().is_quadratic();
  for (const auto& f : locals) {
    if (f.is_quadratic() != quad) {
      throw ConfigError("mixed quadratic and logistic objectives are not supported");
    }
  }
  CurvatureConstants k;
  if (quad) {
    k.m = k.M = 2.0 * locals.front().as_quadratic().c;
    for (const auto& f : locals) {
      k.m = std::min(k.m, 2.0 * f.as_quadratic().c);
      k.M = std::max(k.M, 2.0 * f.as_quadratic().c);
    }
    k.L = 0.0;
    return k;
  }
  // sigma' <= 1/4 and |sigma''| <= 1/(6 sqrt 3).
  const double sup_second = 1.0 / (6.0 * std::sqrt(3.0));
  const auto& first = locals.front().as_logistic();
  k.m = first.upsilon / first.n_agents;
  double max_sq = 0.0;
  double max_cube = 0.0;
  for (const auto& f : locals) {
    const auto& l = f.as_logistic();
    k.m = std::min(k.m, l.upsilon / l.n_agents);
    const Eigen::VectorXd norms = l.features.rowwise().norm();
    const double K = static_cast<double>(l.total_samples);
    max_sq = std::max(max_sq, norms.squaredNorm() / (4.0 * K) + l.upsilon / l.n_agents);
    max_cube = std::max(max_cube, sup_second * norms.array().cube().sum() / K);
  }
  k.M = max_sq;
  k.L = max_cube;
  return k;
}

ProblemSpec make_problem(Graph graph, ConsensusMatrix W, std::vector<LocalObjective> locals,
                         double alpha) {
  if (locals.empty()) throw ConfigError("problem needs at least one agent");
  if (static_cast<int>(locals.size()) != graph.size()) {
    throw ConfigError(fmt::format("{} objectives for a graph with {} agents", locals.size(),
                                  graph.size()));
  }
  if (W.W.rows() != graph.size() || W.W.cols() != graph.size()) {
    throw ConfigError("consensus matrix size does not match graph");
  }
  if (!(alpha > 0.0)) throw ConfigError("penalty weight alpha must be positive");
  const int dim = locals.front().dim();
  for (const auto& f : locals) {
    if (f.dim() != dim) throw DimensionError("all local objectives must share one dimension");
  }
  ProblemSpec spec;
  spec.curvature = curvature_constants(locals);
  spec.graph = std::move(graph);
  spec.W = std::move(W);
  spec.locals = std::move(locals);
  spec.alpha = alpha;
  spec.dim = dim;
  return spec;
}

ProblemSpec make_problem(Graph graph, std::vector<LocalObjective> locals, double alpha) {
  ConsensusMatrix W = build_consensus(graph);
  return make_problem(std::move(graph), std::move(W), std::move(locals), alpha);
}

namespace {

void check_stacked(const ProblemSpec& spec, const Eigen::VectorXd& x) {
  if (x.size() != spec.stacked_size()) {
    throw DimensionError(
        fmt::format("stacked vector has {} entries, expected {}", x.size(), spec.stacked_size()));
  }
}

}  // namespace

double penalized_value(const ProblemSpec& spec, const Eigen::VectorXd& x) {
  check_stacked(spec, x);
  const auto& W = spec.W.W;
  double penalty = 0.0;
  double local = 0.0;
  for (int i = 0; i < spec.n(); ++i) {
    const auto xi = spec.block(x, i);
    penalty += (1.0 - W(i, i)) * xi.squaredNorm();
    local += spec.locals[static_cast<size_t>(i)].value(xi);
  }
  for (const auto& [i, j] : spec.graph.edges()) {
    penalty -= 2.0 * W(i, j) * spec.block(x, i).dot(spec.block(x, j));
  }
  return 0.5 * penalty + spec.alpha * local;
}

Eigen::VectorXd penalized_gradient(const ProblemSpec& spec, const Eigen::VectorXd& x) {
  check_stacked(spec, x);
  const auto& W = spec.W.W;
  Eigen::VectorXd g(x.size());
  for (int i = 0; i < spec.n(); ++i) {
    auto gi = spec.block(g, i);
    const auto xi = spec.block(x, i);
    gi = (1.0 - W(i, i)) * xi + spec.alpha * spec.locals[static_cast<size_t>(i)].gradient(xi);
    for (int j : spec.graph.neighbors(i)) gi -= W(i, j) * spec.block(x, j);
  }
  return g;
}

Eigen::MatrixXd penalized_hessian(const ProblemSpec& spec, const Eigen::VectorXd& x) {
  check_stacked(spec, x);
  const int d = spec.dim;
  const Eigen::Index N = spec.stacked_size();
  const auto& W = spec.W.W;
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(N, N);
  for (int i = 0; i < spec.n(); ++i) {
    H.block(i * d, i * d, d, d) = spec.alpha * spec.locals[static_cast<size_t>(i)].hessian(spec.block(x, i));
    H.block(i * d, i * d, d, d).diagonal().array() += 1.0 - W(i, i);
    for (int j : spec.graph.neighbors(i)) {
      H.block(i * d, j * d, d, d).diagonal().array() -= W(i, j);
    }
  }
  return H;
}

double consensus_value(const ProblemSpec& spec, const Eigen::VectorXd& x) {
  check_stacked(spec, x);
  double v = 0.0;
  for (int i = 0; i < spec.n(); ++i) v += spec.locals[static_cast<size_t>(i)].value(spec.block(x, i));
  return v;
}

Dataset parse_libsvm(std::istream& in, const LibsvmOptions& opts) {
  struct Row {
    double label;
    std::vector<std::pair<int, double>> entries;
  };
  std::vector<Row> rows;
  int dim = 0;
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string token;
    if (!(ls >> token)) continue;
    Row row;
    try {
      size_t used = 0;
      row.label = std::stod(token, &used);
      if (used != token.size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw ParseError("bad label '" + token + "'", lineno);
    }
    if (row.label == 0.0 && opts.zero_as_negative) row.label = -1.0;
    if (row.label != 1.0 && row.label != -1.0) {
      throw ParseError("label must be +1 or -1, got '" + token + "'", lineno);
    }
    while (ls >> token) {
      const auto colon = token.find(':');
      if (colon == std::string::npos || colon == 0 || colon + 1 == token.size()) {
        throw ParseError("expected idx:val, got '" + token + "'", lineno);
      }
      int idx = 0;
      double val = 0.0;
      try {
        size_t used = 0;
        idx = std::stoi(token.substr(0, colon), &used);
        if (used != colon) throw std::invalid_argument("index");
        const std::string vs = token.substr(colon + 1);
        val = std::stod(vs, &used);
        if (used != vs.size()) throw std::invalid_argument("value");
      } catch (const std::exception&) {
        throw ParseError("malformed feature '" + token + "'", lineno);
      }
      if (idx < 1) throw ParseError("feature indices are 1-based", lineno);
      dim = std::max(dim, idx);
      row.entries.emplace_back(idx, val);
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ParseError("no samples in input", lineno);

  Dataset ds;
  ds.dim = dim;
  for (const auto& r : rows) {
    Eigen::VectorXd u = Eigen::VectorXd::Zero(dim);
    for (const auto& [idx, val] : r.entries) u(idx - 1) = val;
    ds.features.push_back(std::move(u));
    ds.labels.push_back(r.label);
  }
  return ds;
}

Dataset parse_libsvm_file(const std::string& path, const LibsvmOptions& opts) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open dataset file '" + path + "'");
  return parse_libsvm(in, opts);
}

std::vector<LocalObjective> partition_uniform(const Dataset& ds, int n, double upsilon,
                                              std::uint64_t seed) {
  if (n < 1) throw ConfigError("partition needs at least one agent");
  if (n > ds.size()) {
    throw ConfigError(fmt::format("cannot split {} samples over {} agents", ds.size(), n));
  }
  const int dim = std::max(ds.dim, 1);
  std::vector<long> order(static_cast<size_t>(ds.size()));
  std::iota(order.begin(), order.end(), 0L);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  const long per_agent = ds.size() / n;
  std::vector<LocalObjective> out;
  out.reserve(static_cast<size_t>(n));
  for (int a = 0; a < n; ++a) {
    Eigen::MatrixXd U(per_agent, dim);
    Eigen::VectorXd v(per_agent);
    for (long r = 0; r < per_agent; ++r) {
      const long s = order[static_cast<size_t>(a * per_agent + r)];
      U.row(r) = ds.features[static_cast<size_t>(s)].transpose();
      v(r) = ds.labels[static_cast<size_t>(s)];
    }
    out.push_back(LocalObjective::logistic(std::move(U), std::move(v), upsilon, ds.size(), n));
  }
  return out;
}

double centralized_logistic_value(const Dataset& ds, double upsilon, const Eigen::VectorXd& x) {
  double loss = 0.0;
  for (long s = 0; s < ds.size(); ++s) {
    loss += softplus(-ds.labels[static_cast<size_t>(s)] * ds.features[static_cast<size_t>(s)].dot(x));
  }
  return 0.5 * upsilon * x.squaredNorm() + loss / static_cast<double>(ds.size());
}

}  // namespace netnewton
