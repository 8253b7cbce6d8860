#include "egf/baselines.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "egf/flops.hpp"
#include "egf/online.hpp"
#include "egf/rng.hpp"

namespace egf {

FilterCoefficients batch_filter(const BatchProblem& p, BatchSolveInfo* info) {
  if (!(p.ridge > 0.0)) throw std::invalid_argument("batch ridge weight must be positive");
  if (p.designs.rows() != p.targets.size())
    throw std::invalid_argument("design/target row count mismatch");
  const Eigen::Index k = p.designs.cols();
  Eigen::MatrixXd gram = p.designs.transpose() * p.designs;
  gram.diagonal().array() += p.ridge;
  Eigen::VectorXd rhs = p.designs.transpose() * p.targets;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
  if (ldlt.info() != Eigen::Success)
    throw std::runtime_error("batch normal equations factorization failed");
  Eigen::VectorXd u = ldlt.solve(rhs);

  double grad_norm = 2.0 * (gram * u - rhs).norm();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram, Eigen::EigenvaluesOnly);
  double cond = eig.eigenvalues()[k - 1] / std::max(eig.eigenvalues()[0], 1e-300);
  if (info) {
    info->gradient_norm = grad_norm;
    info->condition_estimate = cond;
  }
  if (grad_norm > 1e-8 * std::max(1.0, rhs.norm()))
    throw std::runtime_error("batch solve residual gradient too large; condition estimate " +
                             std::to_string(cond));
  return FilterCoefficients(std::move(u));
}

double wknn_predict(const AttachmentVector& a, const GraphSignal& x) {
  if (!a.connected()) throw std::domain_error("weighted kNN needs at least one neighbor");
  return a.dot(x) / a.weight_sum();
}

FilterCoefficients pretrain_transfer_filter(const ExpandingGraph& g0, const GraphSignal& x0,
                                            std::span<const int> observed, double mu,
                                            int order) {
  if (observed.empty()) throw std::invalid_argument("observed node set is empty");
  if (x0.size() != g0.node_count())
    throw std::invalid_argument("signal length does not match node count");
  GraphSignal x_in = GraphSignal::Zero(x0.size());
  for (int idx : observed) {
    if (idx < 0 || idx >= x0.size()) throw std::invalid_argument("observed index out of range");
    x_in[idx] = x0[idx];
  }
  // Interpolation fit: the filter applied to the masked signal must
  // reproduce x0 on every node. The unobserved rows see a zero input in
  // column 0, so reconstructing them forces genuine shift usage.
  Eigen::MatrixXd design(x0.size(), order + 1);
  design.col(0) = x_in;
  GraphSignal cur = x_in;
  for (int k = 1; k <= order; ++k) {
    cur = g0.shift(cur);
    design.col(k) = cur;
  }
  if (mu < 0.0) throw std::invalid_argument("pretraining ridge must be nonnegative");
  Eigen::MatrixXd gram = design.transpose() * design;
  gram.diagonal().array() += mu;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
  if (ldlt.info() != Eigen::Success ||
      (mu == 0.0 &&
       ldlt.vectorD().minCoeff() <= 1e-12 * std::max(1.0, ldlt.vectorD().maxCoeff())))
    throw std::runtime_error("pretraining system is singular; observed set too small");
  return FilterCoefficients(ldlt.solve(design.transpose() * x0));
}

double transfer_predict(const AttachmentVector& a, const ShiftedSignalMatrix& ax,
                        const FilterCoefficients& pretrained) {
  return predict_incoming(a, ax, pretrained);
}

RandomFeatureMap::RandomFeatureMap(int input_dim, int feature_count, double sigma2,
                                   std::uint64_t seed)
    : sigma2_(sigma2) {
  if (input_dim < 1 || feature_count < 1)
    throw std::invalid_argument("feature map dimensions must be positive");
  if (!(sigma2 > 0.0)) throw std::invalid_argument("kernel variance must be positive");
  std::mt19937_64 rng = make_rng(seed, 0x0feaULL);
  std::normal_distribution<double> gauss(0.0, 1.0 / std::sqrt(sigma2));
  std::uniform_real_distribution<double> unif(0.0, 2.0 * std::numbers::pi);
  omegas_.resize(feature_count, input_dim);
  for (int i = 0; i < feature_count; ++i)
    for (int j = 0; j < input_dim; ++j) omegas_(i, j) = gauss(rng);
  phases_.resize(feature_count);
  for (int i = 0; i < feature_count; ++i) phases_[i] = unif(rng);
}

Eigen::VectorXd RandomFeatureMap::features(const AttachmentVector& a) const {
  if (a.dim() > input_dim())
    throw std::invalid_argument("attachment exceeds feature map input dimension");
  Eigen::VectorXd arg = phases_;
  for (const InEdge& e : a.entries()) arg += e.weight * omegas_.col(e.src);
  flops::add(static_cast<std::uint64_t>(a.entries().size()) *
             static_cast<std::uint64_t>(feature_count()));
  double scale = std::sqrt(2.0 / feature_count());
  return (arg.array().cos() * scale).matrix();
}

Eigen::VectorXd RandomFeatureMap::features(const Eigen::VectorXd& a) const {
  if (a.size() > input_dim())
    throw std::invalid_argument("input exceeds feature map input dimension");
  Eigen::VectorXd arg = phases_ + omegas_.leftCols(a.size()) * a;
  double scale = std::sqrt(2.0 / feature_count());
  return (arg.array().cos() * scale).matrix();
}

OklLearner::OklLearner(int feature_count, const OklConfig& cfg)
    : cfg_(cfg), theta_(Eigen::VectorXd::Zero(feature_count)) {
  if (cfg_.eta < 0.0 || cfg_.mu < 0.0)
    throw std::invalid_argument("learning rate and regularizer must be nonnegative");
}

double OklLearner::step(const Eigen::VectorXd& z, double x_true) {
  ++steps_;
  double prediction = predict(z);
  double resid = prediction - x_true;
  theta_ -= cfg_.eta * (resid * z + 2.0 * cfg_.mu * theta_);
  if (!theta_.allFinite() || theta_.cwiseAbs().maxCoeff() > 1e9)
    throw DivergenceError(steps_);
  flops::add(static_cast<std::uint64_t>(3 * theta_.size()));
  return prediction;
}

Eigen::VectorXd kernel_similarities(const Eigen::MatrixXd& features,
                                    const Eigen::VectorXd& query, KernelKind kernel,
                                    double sigma2) {
  if (features.cols() != query.size())
    throw std::invalid_argument("feature dimension mismatch");
  Eigen::VectorXd dots = features * query;
  if (kernel == KernelKind::Linear) return dots;
  Eigen::VectorXd sq = features.rowwise().squaredNorm();
  double qq = query.squaredNorm();
  return ((-(sq.array() - 2.0 * dots.array() + qq) / (2.0 * sigma2)).exp()).matrix();
}

namespace {

Eigen::MatrixXd kernel_matrix(const Eigen::MatrixXd& features, KernelKind kernel,
                              double sigma2) {
  Eigen::MatrixXd gram = features * features.transpose();
  if (kernel == KernelKind::Linear) return gram;
  Eigen::VectorXd sq = gram.diagonal();
  Eigen::MatrixXd k(gram.rows(), gram.cols());
  for (Eigen::Index i = 0; i < gram.rows(); ++i)
    for (Eigen::Index j = 0; j < gram.cols(); ++j)
      k(i, j) = std::exp(-(sq[i] - 2.0 * gram(i, j) + sq[j]) / (2.0 * sigma2));
  return k;
}

}  // namespace

Eigen::VectorXd smoothing_vector(const SmoothingContext& ctx,
                                 const Eigen::VectorXd& new_features) {
  if (!(ctx.lambda > 0.0)) throw std::invalid_argument("smoothing ridge must be positive");
  Eigen::MatrixXd k = kernel_matrix(ctx.features, ctx.kernel, ctx.sigma2);
  Eigen::VectorXd rhs = kernel_similarities(ctx.features, new_features, ctx.kernel, ctx.sigma2);
  k.diagonal().array() += ctx.lambda;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(k);
  double scale = std::max(1.0, k.diagonal().maxCoeff());
  if (ldlt.info() != Eigen::Success || ldlt.vectorD().minCoeff() < -1e-8 * scale)
    throw std::runtime_error("kernel matrix is not positive semidefinite within tolerance");
  return ldlt.solve(rhs);
}

double smoothing_predict(const Eigen::VectorXd& m, const ShiftedSignalMatrix& ax,
                         const FilterCoefficients& h) {
  if (m.size() != ax.rows())
    throw std::invalid_argument("smoothing vector does not match shifted matrix");
  if (h.order() != ax.order())
    throw std::invalid_argument("filter order does not match shifted matrix");
  return m.transpose() * (ax.columns() * h.taps);
}

SmoothingSolver::SmoothingSolver(const Eigen::MatrixXd& features, KernelKind kernel,
                                 double sigma2)
    : features_(features), kernel_(kernel), sigma2_(sigma2) {
  Eigen::MatrixXd k = kernel_matrix(features_, kernel_, sigma2_);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(k);
  if (eig.info() != Eigen::Success)
    throw std::runtime_error("kernel matrix eigendecomposition failed");
  vectors_ = eig.eigenvectors();
  values_ = eig.eigenvalues();
  min_eig_ = values_.minCoeff();
  double scale = std::max(1.0, values_.cwiseAbs().maxCoeff());
  if (min_eig_ < -1e-8 * scale)
    throw std::runtime_error("kernel matrix is not positive semidefinite within tolerance");
}

Eigen::VectorXd SmoothingSolver::solve(const Eigen::VectorXd& new_features,
                                       double lambda) const {
  return solve_from_similarities(
      kernel_similarities(features_, new_features, kernel_, sigma2_), lambda);
}

Eigen::VectorXd SmoothingSolver::solve_from_similarities(const Eigen::VectorXd& k,
                                                         double lambda) const {
  if (!(lambda > 0.0)) throw std::invalid_argument("smoothing ridge must be positive");
  Eigen::VectorXd proj = vectors_.transpose() * k;
  proj.array() /= (values_.array() + lambda);
  return vectors_ * proj;
}

}  // namespace egf
