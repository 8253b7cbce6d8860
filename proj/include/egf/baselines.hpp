#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <span>
#include <vector>

#include "egf/filter.hpp"
#include "egf/graph.hpp"

namespace egf {

// Ridge least-squares over the stream's design rows: the offline filter
// argmin_h sum_t (row_t h - x_t)^2 + ridge ||h||^2.
struct BatchProblem {
  Eigen::MatrixXd designs;  // T x (K+1), row t = a_t^T A_{x,t-1}
  Eigen::VectorXd targets;  // T
  double ridge = 0.0;       // > 0
};

struct BatchSolveInfo {
  double gradient_norm = 0.0;       // objective gradient at the solution
  double condition_estimate = 0.0;  // of the regularized normal matrix
};

FilterCoefficients batch_filter(const BatchProblem& p, BatchSolveInfo* info = nullptr);

// Attachment-weighted mean of neighbor signals, weights normalized to unit
// sum. Throws std::domain_error on an empty attachment; callers substitute 0.
double wknn_predict(const AttachmentVector& a, const GraphSignal& x);

// Filter pretrained on the starting graph from a partially observed signal:
// the input is x0 zeroed outside the observed set, and the ridge fit asks
// the filtered masked signal [x_in | A x_in | ... | A^K x_in] h to
// reconstruct x0 on every node (interpolation of the unobserved part).
FilterCoefficients pretrain_transfer_filter(const ExpandingGraph& g0, const GraphSignal& x0,
                                            std::span<const int> observed, double mu,
                                            int order);

// Deploying the frozen pretrained filter at an incoming node; the same
// bilinear form as predict_incoming.
double transfer_predict(const AttachmentVector& a, const ShiftedSignalMatrix& ax,
                        const FilterCoefficients& pretrained);

// Random Fourier features for a Gaussian kernel of variance sigma2 on a fixed
// input dimension; attachment vectors are zero-padded into that dimension.
class RandomFeatureMap {
 public:
  RandomFeatureMap(int input_dim, int feature_count, double sigma2, std::uint64_t seed);

  Eigen::VectorXd features(const AttachmentVector& a) const;
  Eigen::VectorXd features(const Eigen::VectorXd& a) const;

  int input_dim() const { return static_cast<int>(omegas_.cols()); }
  int feature_count() const { return static_cast<int>(omegas_.rows()); }
  double sigma2() const { return sigma2_; }

 private:
  Eigen::MatrixXd omegas_;  // D x input_dim
  Eigen::VectorXd phases_;  // D, uniform on [0, 2pi)
  double sigma2_;
};

struct OklConfig {
  double eta = 0.0;
  double mu = 0.0;
};

// Online ridge regression in random-feature space; mirrors the filter
// learner's squared loss so the comparison is like for like.
class OklLearner {
 public:
  OklLearner(int feature_count, const OklConfig& cfg);

  double predict(const Eigen::VectorXd& z) const { return theta_.dot(z); }
  double step(const Eigen::VectorXd& z, double x_true);

  const Eigen::VectorXd& weights() const { return theta_; }
  int step_count() const { return steps_; }

 private:
  OklConfig cfg_;
  Eigen::VectorXd theta_;
  int steps_ = 0;
};

enum class KernelKind { Linear, Gaussian };

// Kernel-ridge smoothing over existing-node features: m = (K + lambda I)^{-1} k
// with K the node-feature kernel matrix and k the new node's similarities.
struct SmoothingContext {
  Eigen::MatrixXd features;  // one row per existing node
  KernelKind kernel = KernelKind::Linear;
  double sigma2 = 1.0;  // Gaussian kernel variance
  double lambda = 0.0;  // ridge weight, > 0
};

Eigen::VectorXd smoothing_vector(const SmoothingContext& ctx,
                                 const Eigen::VectorXd& new_features);

// m^T A_x h: the smoothing-vector analogue of predict_incoming.
double smoothing_predict(const Eigen::VectorXd& m, const ShiftedSignalMatrix& ax,
                         const FilterCoefficients& h);

// Eigendecomposition of the kernel matrix, reusable across ridge weights;
// the per-lambda solve is then two dense mat-vecs.
class SmoothingSolver {
 public:
  SmoothingSolver(const Eigen::MatrixXd& features, KernelKind kernel, double sigma2);

  Eigen::VectorXd solve(const Eigen::VectorXd& new_features, double lambda) const;
  Eigen::VectorXd solve_from_similarities(const Eigen::VectorXd& k, double lambda) const;
  double min_eigenvalue() const { return min_eig_; }

 private:
  Eigen::MatrixXd features_;
  KernelKind kernel_;
  double sigma2_;
  Eigen::MatrixXd vectors_;
  Eigen::VectorXd values_;
  double min_eig_ = 0.0;
};

// Kernel similarity row between one feature vector and a feature matrix.
Eigen::VectorXd kernel_similarities(const Eigen::MatrixXd& features,
                                    const Eigen::VectorXd& query, KernelKind kernel,
                                    double sigma2);

}  // namespace egf
