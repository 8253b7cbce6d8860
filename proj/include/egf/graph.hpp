#pragma once

#include <Eigen/Core>
#include <iosfwd>
#include <vector>

namespace egf {

// A graph signal is one real value per node, indexed like the adjacency.
using GraphSignal = Eigen::VectorXd;

struct InEdge {
  int src;
  double weight;
};

// Sparse in-edges of one incoming node: weights of the directed edges from
// existing nodes into the new one. Entries are kept sorted by source index.
class AttachmentVector {
 public:
  AttachmentVector(int dim, std::vector<InEdge> entries);

  int dim() const { return dim_; }
  const std::vector<InEdge>& entries() const { return entries_; }
  // An empty attachment is allowed (isolated node) but flagged here.
  bool connected() const { return !entries_.empty(); }
  double weight_sum() const;
  double dot(const GraphSignal& x) const;
  Eigen::VectorXd dense() const;

 private:
  int dim_;
  std::vector<InEdge> entries_;
};

struct SpectralRadiusEstimate {
  double value = 0.0;
  // True when power iteration on A failed to settle and the estimate is the
  // largest singular value instead (an upper bound on |lambda|_max).
  bool singular_fallback = false;
  int iterations = 0;
};

// Append-only adjacency. Row i stores the in-edges of node i, so attaching a
// node appends exactly one row and never touches existing ones. Rows appended
// after construction are strictly lower-triangular (sources precede the new
// node), which keeps matrix powers in block form as the graph grows.
class ExpandingGraph {
 public:
  ExpandingGraph() = default;  // empty graph
  explicit ExpandingGraph(const Eigen::MatrixXd& a0);

  // Appends a node with in-edges a; returns the new node's index.
  int attach(const AttachmentVector& a);

  // y = A x, cost proportional to the edge count.
  GraphSignal shift(const GraphSignal& x) const;
  // y = A^T x, same cost; scatters along in-edges.
  GraphSignal shift_transpose(const GraphSignal& x) const;

  SpectralRadiusEstimate spectral_radius(double tol = 1e-9, int max_iters = 5000,
                                         bool allow_fallback = true) const;

  // All weights divided by the spectral radius; throws on a zero radius.
  ExpandingGraph normalized() const;
  void scale_weights(double factor);

  int node_count() const { return n_; }
  int initial_node_count() const { return n0_; }
  long long edge_count() const { return m_; }
  const std::vector<InEdge>& in_edges(int node) const;

  // Dense copy, O(n^2); for small graphs, oracles, and serialization.
  Eigen::MatrixXd dense() const;

 private:
  int n0_ = 0;
  int n_ = 0;
  long long m_ = 0;
  std::vector<std::vector<InEdge>> rows_;

  friend ExpandingGraph read_edge_list(std::istream& in);
};

// Edge-list text format: header line `#nodes <n>`, then one line per edge
// `src<TAB>dst<TAB>weight` in deterministic (dst-major, src-minor) order.
void write_edge_list(const ExpandingGraph& g, std::ostream& out);
ExpandingGraph read_edge_list(std::istream& in);

}  // namespace egf
