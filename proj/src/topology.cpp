#include "netnewton/topology.hpp"

#include <algorithm>
#include <istream>
#include <numeric>
#include <ostream>
#include <queue>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

#include <fmt/format.h>

#include "netnewton/errors.hpp"

namespace netnewton {

std::string to_string(GraphKind kind) {
  switch (kind) {
    case GraphKind::complete: return "complete";
    case GraphKind::ring: return "ring";
    case GraphKind::path: return "path";
    case GraphKind::cyclic_k_regular: return "cyclic";
    case GraphKind::erdos_renyi: return "erdos_renyi";
    case GraphKind::custom: return "custom";
  }
  return "custom";
}

GraphKind graph_kind_from_string(const std::string& name) {
  if (name == "complete") return GraphKind::complete;
  if (name == "ring") return GraphKind::ring;
  if (name == "path") return GraphKind::path;
  if (name == "cyclic" || name == "cyclic_k_regular") return GraphKind::cyclic_k_regular;
  if (name == "erdos_renyi" || name == "random") return GraphKind::erdos_renyi;
  if (name == "custom") return GraphKind::custom;
  throw std::invalid_argument("unknown graph kind '" + name + "'");
}

Graph Graph::from_edges(int n, std::vector<Edge> edges, GraphKind kind) {
  if (n < 1) throw std::invalid_argument("graph needs at least one vertex");
  Graph g;
  g.n_ = n;
  g.kind_ = kind;
  for (auto& [a, b] : edges) {
    if (a < 0 || b < 0 || a >= n || b >= n) {
      throw std::invalid_argument(fmt::format("edge ({}, {}) out of range for n = {}", a, b, n));
    }
    if (a == b) throw std::invalid_argument(fmt::format("self-loop at vertex {}", a));
    if (a > b) std::swap(a, b);
  }
  std::sort(edges.begin(), edges.end());
  if (std::adjacent_find(edges.begin(), edges.end()) != edges.end()) {
    throw std::invalid_argument("duplicate edge");
  }
  g.edges_ = std::move(edges);
  g.adjacency_.assign(static_cast<size_t>(n), {});
  for (const auto& [a, b] : g.edges_) {
    g.adjacency_[static_cast<size_t>(a)].push_back(b);
    g.adjacency_[static_cast<size_t>(b)].push_back(a);
  }
  for (auto& nb : g.adjacency_) std::sort(nb.begin(), nb.end());
  return g;
}

int Graph::max_degree() const {
  int d = 0;
  for (int i = 0; i < n_; ++i) d = std::max(d, degree(i));
  return d;
}

bool Graph::connected() const {
  if (n_ == 0) return false;
  std::vector<char> seen(static_cast<size_t>(n_), 0);
  std::queue<int> frontier;
  frontier.push(0);
  seen[0] = 1;
  int visited = 1;
  while (!frontier.empty()) {
    const int u = frontier.front();
    frontier.pop();
    for (int v : neighbors(u)) {
      if (!seen[static_cast<size_t>(v)]) {
        seen[static_cast<size_t>(v)] = 1;
        ++visited;
        frontier.push(v);
      }
    }
  }
  return visited == n_;
}

bool Graph::has_edge(int i, int j) const {
  const auto& nb = neighbors(i);
  return std::binary_search(nb.begin(), nb.end(), j);
}

Eigen::MatrixXd Graph::laplacian() const {
  Eigen::MatrixXd L = Eigen::MatrixXd::Zero(n_, n_);
  for (const auto& [a, b] : edges_) {
    L(a, b) -= 1.0;
    L(b, a) -= 1.0;
    L(a, a) += 1.0;
    L(b, b) += 1.0;
  }
  return L;
}

namespace {

std::vector<Edge> circulant_edges(int n, int half_width) {
  std::set<Edge> out;
  for (int i = 0; i < n; ++i) {
    for (int s = 1; s <= half_width; ++s) {
      int j = (i + s) % n;
      if (i == j) continue;
      out.insert({std::min(i, j), std::max(i, j)});
    }
  }
  return {out.begin(), out.end()};
}

}  // namespace

Graph build_graph(const GraphSpec& spec, int n, std::uint64_t seed) {
  if (n < 2) throw std::invalid_argument("build_graph requires n >= 2");
  std::vector<Edge> edges;
  switch (spec.kind) {
    case GraphKind::complete:
      for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) edges.emplace_back(i, j);
      break;
    case GraphKind::ring:
      edges = circulant_edges(n, 1);
      break;
    case GraphKind::path:
      for (int i = 0; i + 1 < n; ++i) edges.emplace_back(i, i + 1);
      break;
    case GraphKind::cyclic_k_regular: {
      if (spec.k < 2 || spec.k % 2 != 0) {
        throw std::invalid_argument("cyclic graph degree k must be even and >= 2");
      }
      // For n <= k the circulant saturates to the complete graph.
      edges = circulant_edges(n, std::min(spec.k / 2, n / 2));
      break;
    }
    case GraphKind::erdos_renyi: {
      const double p = spec.edge_probability;
      if (!(p > 0.0 && p <= 1.0)) {
        throw std::invalid_argument("erdos_renyi edge probability must lie in (0, 1]");
      }
      std::mt19937_64 rng(seed);
      std::bernoulli_distribution coin(p);
      for (int attempt = 0; attempt < kErdosRenyiRetries; ++attempt) {
        edges.clear();
        for (int i = 0; i < n; ++i)
          for (int j = i + 1; j < n; ++j)
            if (coin(rng)) edges.emplace_back(i, j);
        Graph g = Graph::from_edges(n, edges, GraphKind::erdos_renyi);
        if (g.connected()) return g;
      }
      throw GenerationError(fmt::format(
          "erdos_renyi(n={}, p={}) not connected after {} attempts", n, p, kErdosRenyiRetries));
    }
    case GraphKind::custom:
      throw std::invalid_argument("custom graphs are built with Graph::from_edges");
  }
  return Graph::from_edges(n, std::move(edges), spec.kind);
}

double algebraic_connectivity(const Graph& g) {
  if (g.size() < 2) return 0.0;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(g.laplacian(), Eigen::EigenvaluesOnly);
  return es.eigenvalues()(1);
}

ConsensusMatrix build_consensus(const Graph& g) {
  const int n = g.size();
  ConsensusMatrix c;
  c.d_max = g.max_degree();
  const double scale = 1.0 / (c.d_max + 1.0);
  c.W = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    c.W(i, i) = 1.0 - g.degree(i) * scale;
    for (int j : g.neighbors(i)) c.W(i, j) = scale;
  }
  c.delta = c.W.diagonal().minCoeff();
  c.Delta = c.W.diagonal().maxCoeff();
  return c;
}

bool ValidationReport::ok() const {
  return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.passed; });
}

const CheckResult* ValidationReport::find(const std::string& name) const {
  for (const auto& c : checks)
    if (c.name == name) return &c;
  return nullptr;
}

ValidationReport validate_consensus(const ConsensusMatrix& cm, const Graph* g) {
  ValidationReport rep;
  const auto& W = cm.W;
  const Eigen::Index n = W.rows();
  if (W.cols() != n || n == 0) {
    rep.checks.push_back({"square", false, 0.0, "W is not a nonempty square matrix"});
    return rep;
  }

  const double sym = (W - W.transpose()).cwiseAbs().maxCoeff();
  rep.checks.push_back({"symmetry", sym == 0.0, sym, "max |W - W^T|"});

  const double rowsum = (W.rowwise().sum().array() - 1.0).abs().maxCoeff();
  rep.checks.push_back({"row_sums", rowsum <= kRowSumTolerance, rowsum, "max |W 1 - 1|"});

  const double lo = W.minCoeff();
  const double hi = W.maxCoeff();
  rep.checks.push_back({"entry_range", lo >= 0.0 && hi < 1.0, hi,
                        fmt::format("entries in [{}, {}]", lo, hi)});

  const double dmin = W.diagonal().minCoeff();
  const double dmax = W.diagonal().maxCoeff();
  const bool bounds = dmin > 0.0 && dmax < 1.0 && cm.delta <= dmin && dmax <= cm.Delta &&
                      cm.delta > 0.0 && cm.Delta < 1.0;
  rep.checks.push_back({"diagonal_bounds", bounds, dmax,
                        fmt::format("delta={} <= W_ii in [{}, {}] <= Delta={}", cm.delta, dmin,
                                    dmax, cm.Delta)});

  if (g != nullptr) {
    long mismatches = 0;
    if (g->size() != n) {
      mismatches = n * n;
    } else {
      for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) {
          const bool expect = i == j || g->has_edge(static_cast<int>(i), static_cast<int>(j));
          if ((W(i, j) > 0.0) != expect) ++mismatches;
        }
    }
    rep.checks.push_back({"sparsity", mismatches == 0, static_cast<double>(mismatches),
                          "entries whose support disagrees with adjacency + diagonal"});
  }

  const Eigen::MatrixXd IminusW = Eigen::MatrixXd::Identity(n, n) - 0.5 * (W + W.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(IminusW, Eigen::EigenvaluesOnly);
  const auto& ev = es.eigenvalues();
  int zero_count = 0;
  for (Eigen::Index k = 0; k < n; ++k)
    if (std::abs(ev(k)) <= kNullspaceTolerance) ++zero_count;
  const double gap = n > 1 ? ev(1) : 0.0;
  rep.checks.push_back({"nullspace", zero_count == 1, static_cast<double>(zero_count),
                        fmt::format("dim null(I - W) = {}, second eigenvalue {}", zero_count, gap)});
  return rep;
}

void write_edge_list(std::ostream& out, const Graph& g) {
  out << "n " << g.size() << '\n';
  for (const auto& [a, b] : g.edges()) out << a << ' ' << b << '\n';
}

Graph read_edge_list(std::istream& in) {
  std::string line;
  long lineno = 0;
  int n = -1;
  std::vector<Edge> edges;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string first;
    if (!(ls >> first)) continue;
    if (n < 0) {
      if (first != "n" || !(ls >> n) || n < 1) throw ParseError("expected header 'n <count>'", lineno);
      continue;
    }
    int a = 0;
    int b = 0;
    try {
      a = std::stoi(first);
    } catch (const std::exception&) {
      throw ParseError("expected vertex id", lineno);
    }
    if (!(ls >> b)) throw ParseError("expected two vertex ids", lineno);
    edges.emplace_back(a, b);
  }
  if (n < 0) throw ParseError("missing header", lineno);
  try {
    return Graph::from_edges(n, std::move(edges));
  } catch (const std::invalid_argument& e) {
    throw ParseError(e.what(), lineno);
  }
}

}  // namespace netnewton
