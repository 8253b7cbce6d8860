#include "egf/filter.hpp"

#include <ostream>
#include <stdexcept>

#include "egf/flops.hpp"

namespace egf {

ShiftedSignalMatrix::ShiftedSignalMatrix(const ExpandingGraph& g, const GraphSignal& x,
                                         int order) {
  if (order < 1) throw std::invalid_argument("filter order must be at least 1");
  if (x.size() != g.node_count())
    throw std::invalid_argument("signal length does not match node count");
  cols_.resize(x.size(), order + 1);
  cols_.col(0).setZero();
  cols_.col(1) = x;
  GraphSignal cur = x;
  for (int k = 2; k <= order; ++k) {
    cur = g.shift(cur);
    cols_.col(k) = cur;
  }
}

ShiftedSignalMatrix build_shifted_matrix(const ExpandingGraph& g, const GraphSignal& x,
                                         int order) {
  return ShiftedSignalMatrix(g, x, order);
}

GraphSignal filter_full(const ExpandingGraph& g, const GraphSignal& x,
                        const FilterCoefficients& h) {
  if (x.size() != g.node_count())
    throw std::invalid_argument("signal length does not match node count");
  if (h.order() < 0) throw std::invalid_argument("empty filter");
  GraphSignal y = h.taps[0] * x;
  GraphSignal cur = x;
  for (int k = 1; k <= h.order(); ++k) {
    cur = g.shift(cur);
    y += h.taps[k] * cur;
  }
  return y;
}

Eigen::RowVectorXd design_row(const AttachmentVector& a, const ShiftedSignalMatrix& ax) {
  if (a.dim() != ax.rows())
    throw std::invalid_argument("attachment dimension does not match shifted matrix");
  Eigen::RowVectorXd r = Eigen::RowVectorXd::Zero(ax.order() + 1);
  for (const InEdge& e : a.entries()) r += e.weight * ax.columns().row(e.src);
  flops::add(static_cast<std::uint64_t>(a.entries().size()) *
             static_cast<std::uint64_t>(ax.order() + 1));
  return r;
}

double predict_incoming(const AttachmentVector& a, const ShiftedSignalMatrix& ax,
                        const FilterCoefficients& h) {
  if (h.order() != ax.order())
    throw std::invalid_argument("filter order does not match shifted matrix");
  return design_row(a, ax).dot(h.taps);
}

FrequencyResponse frequency_response(const FilterCoefficients& h, int grid_size) {
  if (grid_size < 2) throw std::invalid_argument("frequency grid needs at least 2 points");
  FrequencyResponse fr;
  fr.grid = Eigen::VectorXd::LinSpaced(grid_size, -1.0, 1.0);
  fr.values.resize(grid_size);
  for (int i = 0; i < grid_size; ++i) {
    double lambda = fr.grid[i];
    double v = 0.0;  // Horner
    for (int k = h.order(); k >= 0; --k) v = v * lambda + h.taps[k];
    fr.values[i] = v;
  }
  return fr;
}

void append_frequency_csv(std::ostream& out, const FrequencyResponse& fr, long step,
                          bool with_header) {
  if (with_header) out << "lambda,response,step\n";
  out.precision(17);
  for (Eigen::Index i = 0; i < fr.grid.size(); ++i)
    out << fr.grid[i] << "," << fr.values[i] << "," << step << "\n";
}

}  // namespace egf
