#include "egf/graph.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "egf/flops.hpp"
#include "egf/rng.hpp"

namespace egf {

AttachmentVector::AttachmentVector(int dim, std::vector<InEdge> entries)
    : dim_(dim), entries_(std::move(entries)) {
  if (dim_ < 0) throw std::invalid_argument("attachment dimension must be nonnegative");
  std::sort(entries_.begin(), entries_.end(),
            [](const InEdge& a, const InEdge& b) { return a.src < b.src; });
  int prev = -1;
  for (const InEdge& e : entries_) {
    if (e.src < 0 || e.src >= dim_)
      throw std::invalid_argument("attachment index out of range");
    if (e.src == prev) throw std::invalid_argument("duplicate attachment index");
    if (!(e.weight > 0.0) || !std::isfinite(e.weight))
      throw std::invalid_argument("attachment weights must be positive and finite");
    prev = e.src;
  }
}

double AttachmentVector::weight_sum() const {
  double s = 0.0;
  for (const InEdge& e : entries_) s += e.weight;
  return s;
}

double AttachmentVector::dot(const GraphSignal& x) const {
  if (x.size() != dim_) throw std::invalid_argument("attachment/signal dimension mismatch");
  double s = 0.0;
  for (const InEdge& e : entries_) s += e.weight * x[e.src];
  return s;
}

Eigen::VectorXd AttachmentVector::dense() const {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(dim_);
  for (const InEdge& e : entries_) v[e.src] = e.weight;
  return v;
}

ExpandingGraph::ExpandingGraph(const Eigen::MatrixXd& a0) {
  if (a0.rows() != a0.cols()) throw std::invalid_argument("adjacency must be square");
  if (!a0.allFinite()) throw std::invalid_argument("adjacency entries must be finite");
  n0_ = n_ = static_cast<int>(a0.rows());
  rows_.resize(n_);
  for (int i = 0; i < n_; ++i) {
    for (int j = 0; j < n_; ++j) {
      if (a0(i, j) != 0.0) {
        rows_[i].push_back({j, a0(i, j)});
        ++m_;
      }
    }
  }
}

int ExpandingGraph::attach(const AttachmentVector& a) {
  if (a.dim() != n_) throw std::invalid_argument("attachment dimension does not match node count");
  rows_.push_back(a.entries());
  m_ += static_cast<long long>(a.entries().size());
  return n_++;
}

GraphSignal ExpandingGraph::shift(const GraphSignal& x) const {
  if (x.size() != n_) throw std::invalid_argument("signal length does not match node count");
  GraphSignal y = GraphSignal::Zero(n_);
  for (int i = 0; i < n_; ++i) {
    double s = 0.0;
    for (const InEdge& e : rows_[i]) s += e.weight * x[e.src];
    y[i] = s;
  }
  flops::add(static_cast<std::uint64_t>(m_));
  return y;
}

GraphSignal ExpandingGraph::shift_transpose(const GraphSignal& x) const {
  if (x.size() != n_) throw std::invalid_argument("signal length does not match node count");
  GraphSignal y = GraphSignal::Zero(n_);
  for (int i = 0; i < n_; ++i)
    for (const InEdge& e : rows_[i]) y[e.src] += e.weight * x[i];
  flops::add(static_cast<std::uint64_t>(m_));
  return y;
}

namespace {

// Deterministic pseudo-random unit start vector so radius estimates are
// reproducible for a given size.
Eigen::VectorXd start_vector(int n) {
  std::mt19937_64 rng = make_rng(0x5eedULL, static_cast<std::uint64_t>(n));
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v[i] = gauss(rng);
  double nrm = v.norm();
  if (nrm == 0.0) v[0] = 1.0; else v /= nrm;
  return v;
}

}  // namespace

SpectralRadiusEstimate ExpandingGraph::spectral_radius(double tol, int max_iters,
                                                       bool allow_fallback) const {
  if (n_ == 0) throw std::invalid_argument("spectral radius of an empty graph");
  if (m_ == 0) return {0.0, false, 0};

  // Power iteration tracking ||A v_k|| with v_k normalized each step. For
  // symmetric A this is power iteration on A^2 and converges even with a
  // +/- lambda pair; for nonnegative directed matrices it settles on the
  // Perron root.
  Eigen::VectorXd v = start_vector(n_);
  double prev = std::numeric_limits<double>::quiet_NaN();
  for (int it = 1; it <= max_iters; ++it) {
    Eigen::VectorXd w = shift(v);
    double est = w.norm();
    if (est == 0.0) return {0.0, false, it};  // nilpotent direction exhausted
    if (std::isfinite(prev) && std::abs(est - prev) <= tol * std::max(1.0, est))
      return {est, false, it};
    prev = est;
    v = w / est;
  }

  if (!allow_fallback)
    throw std::runtime_error("spectral radius power iteration did not converge");

  // Largest singular value via power iteration on A^T A; always converges and
  // upper-bounds |lambda|_max.
  v = start_vector(n_);
  prev = std::numeric_limits<double>::quiet_NaN();
  double est = 0.0;
  for (int it = 1; it <= max_iters; ++it) {
    Eigen::VectorXd u = shift_transpose(shift(v));
    double nrm = u.norm();
    if (nrm == 0.0) return {0.0, true, it};
    est = std::sqrt(nrm);
    if (std::isfinite(prev) && std::abs(est - prev) <= tol * std::max(1.0, est))
      return {est, true, it};
    prev = est;
    v = u / nrm;
  }
  return {est, true, max_iters};
}

ExpandingGraph ExpandingGraph::normalized() const {
  SpectralRadiusEstimate rho = spectral_radius();
  if (rho.value <= 0.0)
    throw std::runtime_error("cannot normalize a graph with zero spectral radius");
  ExpandingGraph g = *this;
  g.scale_weights(1.0 / rho.value);
  return g;
}

void ExpandingGraph::scale_weights(double factor) {
  if (!std::isfinite(factor)) throw std::invalid_argument("scale factor must be finite");
  for (auto& row : rows_)
    for (InEdge& e : row) e.weight *= factor;
}

const std::vector<InEdge>& ExpandingGraph::in_edges(int node) const {
  if (node < 0 || node >= n_) throw std::out_of_range("node index out of range");
  return rows_[node];
}

Eigen::MatrixXd ExpandingGraph::dense() const {
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n_, n_);
  for (int i = 0; i < n_; ++i)
    for (const InEdge& e : rows_[i]) a(i, e.src) = e.weight;
  return a;
}

void write_edge_list(const ExpandingGraph& g, std::ostream& out) {
  out << "#nodes " << g.node_count() << "\n";
  out.precision(17);
  for (int i = 0; i < g.node_count(); ++i)
    for (const InEdge& e : g.in_edges(i)) out << e.src << "\t" << i << "\t" << e.weight << "\n";
}

ExpandingGraph read_edge_list(std::istream& in) {
  std::string header;
  if (!std::getline(in, header)) throw std::runtime_error("empty edge list");
  std::istringstream hs(header);
  std::string tag;
  int n = -1;
  hs >> tag >> n;
  if (tag != "#nodes" || n < 0) throw std::runtime_error("bad edge list header");

  ExpandingGraph g;
  g.n0_ = g.n_ = n;
  g.rows_.resize(n);
  std::string line;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    int src = -1, dst = -1;
    double w = 0.0;
    if (!(ls >> src >> dst >> w) || src < 0 || src >= n || dst < 0 || dst >= n)
      throw std::runtime_error("bad edge list line " + std::to_string(lineno));
    g.rows_[dst].push_back({src, w});
    ++g.m_;
  }
  for (auto& row : g.rows_)
    std::sort(row.begin(), row.end(),
              [](const InEdge& a, const InEdge& b) { return a.src < b.src; });
  return g;
}

}  // namespace egf
