#pragma once

#include <Eigen/Core>
#include <iosfwd>

#include "egf/graph.hpp"

namespace egf {

// FIR filter taps h_0..h_K; taps[k] weights the k-th shift A^k x.
struct FilterCoefficients {
  Eigen::VectorXd taps;

  FilterCoefficients() = default;
  explicit FilterCoefficients(Eigen::VectorXd t) : taps(std::move(t)) {}
  static FilterCoefficients zeros(int order) {
    return FilterCoefficients(Eigen::VectorXd::Zero(order + 1));
  }
  int order() const { return static_cast<int>(taps.size()) - 1; }
};

// The N x (K+1) regression design for one incoming node:
// columns [0 | x | Ax | ... | A^{K-1} x]. Column 0 is identically zero, so
// the incoming-node prediction a^T A_x h never sees h_0.
class ShiftedSignalMatrix {
 public:
  ShiftedSignalMatrix(const ExpandingGraph& g, const GraphSignal& x, int order);

  const Eigen::MatrixXd& columns() const { return cols_; }
  Eigen::Index rows() const { return cols_.rows(); }
  int order() const { return static_cast<int>(cols_.cols()) - 1; }

 private:
  Eigen::MatrixXd cols_;
};

ShiftedSignalMatrix build_shifted_matrix(const ExpandingGraph& g, const GraphSignal& x,
                                         int order);

// y = sum_k h_k A^k x over the whole graph, via a running shift.
GraphSignal filter_full(const ExpandingGraph& g, const GraphSignal& x,
                        const FilterCoefficients& h);

// a^T A_x as a (K+1)-row vector; the per-event regression row shared by the
// online learner, the batch solver, and the regret accounting.
Eigen::RowVectorXd design_row(const AttachmentVector& a, const ShiftedSignalMatrix& ax);

// Scalar prediction at the incoming node: a^T A_x h.
double predict_incoming(const AttachmentVector& a, const ShiftedSignalMatrix& ax,
                        const FilterCoefficients& h);

struct FrequencyResponse {
  Eigen::VectorXd grid;    // ascending, in [-1, 1]
  Eigen::VectorXd values;  // sum_k h_k lambda^k at each grid point
};

FrequencyResponse frequency_response(const FilterCoefficients& h, int grid_size = 201);

// CSV with columns lambda,response,step; header written when requested.
void append_frequency_csv(std::ostream& out, const FrequencyResponse& fr, long step,
                          bool with_header);

}  // namespace egf
