#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace netnewton {

enum class GraphKind { complete, ring, path, cyclic_k_regular, erdos_renyi, custom };

std::string to_string(GraphKind kind);
GraphKind graph_kind_from_string(const std::string& name);

// Parameters of a generated family. `k` is only read for cyclic_k_regular,
// `edge_probability` only for erdos_renyi.
struct GraphSpec {
  GraphKind kind = GraphKind::complete;
  int k = 4;
  double edge_probability = 0.5;
};

using Edge = std::pair<int, int>;

// Undirected simple graph on vertices 0..n-1. Edges are stored normalized
// (first < second) and sorted; neighbor lists are sorted ascending.
class Graph {
 public:
  Graph() = default;

  // Throws std::invalid_argument on self-loops, duplicates or out-of-range ids.
  static Graph from_edges(int n, std::vector<Edge> edges, GraphKind kind = GraphKind::custom);

  int size() const { return n_; }
  GraphKind kind() const { return kind_; }
  const std::vector<Edge>& edges() const { return edges_; }
  const std::vector<int>& neighbors(int i) const { return adjacency_[static_cast<size_t>(i)]; }
  int degree(int i) const { return static_cast<int>(neighbors(i).size()); }
  int max_degree() const;
  bool connected() const;
  bool has_edge(int i, int j) const;

  // Dense combinatorial Laplacian L = D - A.
  Eigen::MatrixXd laplacian() const;

 private:
  int n_ = 0;
  GraphKind kind_ = GraphKind::custom;
  std::vector<Edge> edges_;
  std::vector<std::vector<int>> adjacency_;
};

inline constexpr int kErdosRenyiRetries = 1000;

// Deterministic given (spec, n, seed). erdos_renyi resamples until connected
// and throws GenerationError after kErdosRenyiRetries failures.
Graph build_graph(const GraphSpec& spec, int n, std::uint64_t seed);

// Second-smallest Laplacian eigenvalue (dense eigensolve).
double algebraic_connectivity(const Graph& g);

struct ConsensusMatrix {
  Eigen::MatrixXd W;
  double delta = 0.0;  // min diagonal
  double Delta = 0.0;  // max diagonal
  int d_max = 0;
};

// W = I - L / (d_max + 1).
ConsensusMatrix build_consensus(const Graph& g);

struct CheckResult {
  std::string name;
  bool passed = false;
  double measured = 0.0;
  std::string detail;
};

struct ValidationReport {
  std::vector<CheckResult> checks;
  bool ok() const;
  const CheckResult* find(const std::string& name) const;
};

inline constexpr double kRowSumTolerance = 1e-12;
inline constexpr double kNullspaceTolerance = 1e-9;

// Checks every consensus-matrix property and reports residuals. Never throws.
// When `g` is given the sparsity pattern is compared against its adjacency.
ValidationReport validate_consensus(const ConsensusMatrix& W, const Graph* g = nullptr);

// Edge-list text: header "n <count>", then one "i j" pair per line, 0-indexed.
void write_edge_list(std::ostream& out, const Graph& g);
Graph read_edge_list(std::istream& in);

}  // namespace netnewton
