#pragma once

#include <Eigen/Core>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string_view>
#include <utility>
#include <vector>

#include "egf/filter.hpp"
#include "egf/graph.hpp"

namespace egf {

// One incoming node: its in-edges and the signal value revealed after the
// prediction is made.
struct TrainingEvent {
  AttachmentVector attachment;
  double x_true;
};

struct OnlineLearnerConfig {
  double eta = 0.0;  // gradient step size, > 0 (0 permitted for tests)
  double mu = 0.0;   // ridge weight in the per-step loss
  int order = 5;
  // When set, iterates are projected back onto the ball ||h||_2 <= radius.
  std::optional<double> projection_radius;
  Eigen::VectorXd h_init;  // empty -> zero initialization
};

struct StepRecord {
  double prediction;
  double truth;
  double loss;  // l_t evaluated at the pre-update filter h_t
  double h_norm;
};

// Raised when an update produces non-finite or exploding coefficients;
// signals a divergent step size rather than silently emitting NaN metrics.
struct DivergenceError : std::runtime_error {
  explicit DivergenceError(int step)
      : std::runtime_error("online update diverged at step " + std::to_string(step)),
        step(step) {}
  int step;
};

// Per-step loss and gradient in design-row form (r = a^T A_x):
//   l(h) = 1/2 (r h - x)^2 + mu ||h||^2
//   grad = (r h - x) r^T + 2 mu h
double loss_on_design(const Eigen::RowVectorXd& r, const Eigen::VectorXd& h, double x_true,
                      double mu);
Eigen::VectorXd gradient_on_design(const Eigen::RowVectorXd& r, const Eigen::VectorXd& h,
                                   double x_true, double mu);

// Same quantities from the raw (a, A_x) pair.
double loss(const FilterCoefficients& h, const AttachmentVector& a,
            const ShiftedSignalMatrix& ax, double x_true, double mu);
Eigen::VectorXd gradient(const FilterCoefficients& h, const AttachmentVector& a,
                         const ShiftedSignalMatrix& ax, double x_true, double mu);

// Online gradient descent over filter taps. The prediction is recorded before
// the revealed value enters the update, preserving the online protocol.
class OnlineLearner {
 public:
  explicit OnlineLearner(const OnlineLearnerConfig& cfg);

  double predict(const Eigen::RowVectorXd& design) const { return design.dot(h_); }
  // Records the prediction, incurs the loss at the current taps, applies one
  // gradient step (plus optional projection). Returns the prediction.
  double step(const Eigen::RowVectorXd& design, double x_true);

  const Eigen::VectorXd& taps() const { return h_; }
  FilterCoefficients filter() const { return FilterCoefficients(h_); }
  int step_count() const { return static_cast<int>(history_.size()); }
  const std::vector<StepRecord>& history() const { return history_; }
  std::vector<double> losses() const;
  const OnlineLearnerConfig& config() const { return cfg_; }

 private:
  OnlineLearnerConfig cfg_;
  Eigen::VectorXd h_;
  std::vector<StepRecord> history_;
};

// Design rows and revealed targets for a whole stream; everything the batch
// solver and the regret accounting need to replay the sequence of losses.
struct Replay {
  Eigen::MatrixXd designs;  // T x (K+1)
  Eigen::VectorXd targets;  // T
  Eigen::Index size() const { return targets.size(); }
};

struct OnlineRunResult {
  OnlineLearner learner;
  ExpandingGraph graph;   // grown by the stream
  GraphSignal signal;     // with revealed values appended
  Replay replay;
  // (step, taps) snapshots every snapshot_interval steps plus the final step.
  std::vector<std::pair<long, FilterCoefficients>> snapshots;
  std::vector<std::uint64_t> step_madds;  // per-step multiply-add counts
};

// Full online protocol: per event build A_x from the current graph/signal,
// predict, reveal, update, then attach the node and append its value.
OnlineRunResult run_online(const ExpandingGraph& g0, const GraphSignal& x0,
                           std::span<const TrainingEvent> stream,
                           const OnlineLearnerConfig& cfg, long snapshot_interval = 0);

// Design rows only (method-independent); bit-identical to the rows run_online
// produces for the same inputs.
Replay build_replay(const ExpandingGraph& g0, const GraphSignal& x0,
                    std::span<const TrainingEvent> stream, int order);

// Replays precomputed rows through a fresh learner; the trajectory matches
// run_online exactly.
OnlineLearner run_on_replay(const Replay& replay, const OnlineLearnerConfig& cfg,
                            long snapshot_interval = 0,
                            std::vector<std::pair<long, FilterCoefficients>>* snapshots = nullptr);

// Cold-start variant: consecutive steps sharing a block id (one incoming
// node revealing several targets at once) are all predicted with the filter
// as of block arrival; the per-step gradient updates then run unchanged.
// With distinct block ids per step this is exactly run_on_replay.
struct BlockedRunResult {
  OnlineLearner learner;
  Eigen::VectorXd predictions;              // deployment predictions per step
  std::vector<FilterCoefficients> block_filters;  // filter at each block arrival
  std::vector<std::pair<long, FilterCoefficients>> snapshots;
};
BlockedRunResult run_on_replay_blocked(const Replay& replay, std::span<const int> step_block,
                                       const OnlineLearnerConfig& cfg,
                                       long snapshot_interval = 0);

struct RegretReport {
  double total_regret;
  double normalized_regret;
  double bound;               // Prop-style RHS at the provided eta and radius
  double lipschitz_estimate;  // L used in the bound
};

// R_T(u) = sum_t l_t(h_t) - l_t(u) with the per-step online losses replayed
// against the fixed comparator u under the same mu.
RegretReport static_regret(std::span<const double> online_losses, const FilterCoefficients& u,
                           const Replay& replay, double mu, double eta,
                           double projection_radius);

// ||u||^2 / (2 eta) + eta/2 L^2 T
double regret_bound(double u_norm, double eta, double lipschitz, long horizon);

// Empirical gradient-norm bound over a replay for filters in the ball
// ||h|| <= radius: max_t (||r_t|| radius + |x_t|) ||r_t|| + 2 mu radius.
double lipschitz_estimate(const Replay& replay, double projection_radius, double mu);

// CSV columns: method,step,prediction,truth,loss,h_norm
void write_trace_csv(std::ostream& out, std::string_view method,
                     const std::vector<StepRecord>& records, bool with_header);

}  // namespace egf
