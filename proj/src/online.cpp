#include "egf/online.hpp"

#include <cmath>
#include <ostream>

#include "egf/flops.hpp"

namespace egf {

double loss_on_design(const Eigen::RowVectorXd& r, const Eigen::VectorXd& h, double x_true,
                      double mu) {
  if (r.size() != h.size()) throw std::invalid_argument("design/filter size mismatch");
  double resid = r.dot(h) - x_true;
  return 0.5 * resid * resid + mu * h.squaredNorm();
}

Eigen::VectorXd gradient_on_design(const Eigen::RowVectorXd& r, const Eigen::VectorXd& h,
                                   double x_true, double mu) {
  if (r.size() != h.size()) throw std::invalid_argument("design/filter size mismatch");
  double resid = r.dot(h) - x_true;
  return resid * r.transpose() + 2.0 * mu * h;
}

double loss(const FilterCoefficients& h, const AttachmentVector& a,
            const ShiftedSignalMatrix& ax, double x_true, double mu) {
  return loss_on_design(design_row(a, ax), h.taps, x_true, mu);
}

Eigen::VectorXd gradient(const FilterCoefficients& h, const AttachmentVector& a,
                         const ShiftedSignalMatrix& ax, double x_true, double mu) {
  return gradient_on_design(design_row(a, ax), h.taps, x_true, mu);
}

OnlineLearner::OnlineLearner(const OnlineLearnerConfig& cfg) : cfg_(cfg) {
  if (cfg_.eta < 0.0) throw std::invalid_argument("step size must be nonnegative");
  if (cfg_.mu < 0.0) throw std::invalid_argument("regularizer weight must be nonnegative");
  if (cfg_.projection_radius && !(*cfg_.projection_radius > 0.0))
    throw std::invalid_argument("projection radius must be positive");
  if (cfg_.h_init.size() == 0) {
    h_ = Eigen::VectorXd::Zero(cfg_.order + 1);
  } else {
    if (cfg_.h_init.size() != cfg_.order + 1)
      throw std::invalid_argument("initial taps do not match filter order");
    h_ = cfg_.h_init;
  }
}

double OnlineLearner::step(const Eigen::RowVectorXd& design, double x_true) {
  const int t = step_count() + 1;
  double prediction = predict(design);
  double incurred = loss_on_design(design, h_, x_true, cfg_.mu);
  Eigen::VectorXd grad = gradient_on_design(design, h_, x_true, cfg_.mu);
  if (!grad.allFinite()) throw DivergenceError(t);
  h_ -= cfg_.eta * grad;
  if (cfg_.projection_radius) {
    double nrm = h_.norm();
    if (nrm > *cfg_.projection_radius) h_ *= *cfg_.projection_radius / nrm;
  }
  if (!h_.allFinite() || h_.cwiseAbs().maxCoeff() > 1e9) throw DivergenceError(t);
  flops::add(static_cast<std::uint64_t>(3 * h_.size()));  // predict + grad + update
  history_.push_back({prediction, x_true, incurred, h_.norm()});
  return prediction;
}

std::vector<double> OnlineLearner::losses() const {
  std::vector<double> out;
  out.reserve(history_.size());
  for (const StepRecord& s : history_) out.push_back(s.loss);
  return out;
}

namespace {

// Shared stream walk: builds per-event design rows on the growing graph and
// hands them to the sink before attaching the node and revealing its value.
// flops_before is the counter value just before the A_x build, so sinks can
// charge the whole step (row construction plus their own work) to step t.
template <typename Sink>
void walk_stream(ExpandingGraph& g, GraphSignal& x, std::span<const TrainingEvent> stream,
                 int order, Sink&& sink) {
  for (std::size_t t = 0; t < stream.size(); ++t) {
    const TrainingEvent& ev = stream[t];
    if (ev.attachment.dim() != g.node_count())
      throw std::invalid_argument("event " + std::to_string(t + 1) +
                                  " attachment does not match graph size");
    std::uint64_t flops_before = flops::count();
    ShiftedSignalMatrix ax(g, x, order);
    Eigen::RowVectorXd row = design_row(ev.attachment, ax);
    sink(t, row, ev.x_true, flops_before);
    g.attach(ev.attachment);
    x.conservativeResize(x.size() + 1);
    x[x.size() - 1] = ev.x_true;
  }
}

}  // namespace

OnlineRunResult run_online(const ExpandingGraph& g0, const GraphSignal& x0,
                           std::span<const TrainingEvent> stream,
                           const OnlineLearnerConfig& cfg, long snapshot_interval) {
  OnlineRunResult out{OnlineLearner(cfg), g0, x0, {}, {}, {}};
  const long T = static_cast<long>(stream.size());
  out.replay.designs.resize(T, cfg.order + 1);
  out.replay.targets.resize(T);
  out.step_madds.reserve(stream.size());
  walk_stream(out.graph, out.signal, stream, cfg.order,
              [&](std::size_t t, const Eigen::RowVectorXd& row, double x_true,
                  std::uint64_t flops_before) {
                out.learner.step(row, x_true);
                out.replay.designs.row(static_cast<Eigen::Index>(t)) = row;
                out.replay.targets[static_cast<Eigen::Index>(t)] = x_true;
                out.step_madds.push_back(flops::count() - flops_before);
                long step = static_cast<long>(t) + 1;
                if (snapshot_interval > 0 && step % snapshot_interval == 0)
                  out.snapshots.emplace_back(step, out.learner.filter());
              });
  if (snapshot_interval > 0 && (out.snapshots.empty() || out.snapshots.back().first != T))
    out.snapshots.emplace_back(T, out.learner.filter());
  return out;
}

Replay build_replay(const ExpandingGraph& g0, const GraphSignal& x0,
                    std::span<const TrainingEvent> stream, int order) {
  Replay replay;
  replay.designs.resize(static_cast<Eigen::Index>(stream.size()), order + 1);
  replay.targets.resize(static_cast<Eigen::Index>(stream.size()));
  ExpandingGraph g = g0;
  GraphSignal x = x0;
  walk_stream(g, x, stream, order,
              [&](std::size_t t, const Eigen::RowVectorXd& row, double x_true, std::uint64_t) {
                replay.designs.row(static_cast<Eigen::Index>(t)) = row;
                replay.targets[static_cast<Eigen::Index>(t)] = x_true;
              });
  return replay;
}

OnlineLearner run_on_replay(const Replay& replay, const OnlineLearnerConfig& cfg,
                            long snapshot_interval,
                            std::vector<std::pair<long, FilterCoefficients>>* snapshots) {
  OnlineLearner learner(cfg);
  for (Eigen::Index t = 0; t < replay.size(); ++t) {
    learner.step(replay.designs.row(t), replay.targets[t]);
    if (snapshots && snapshot_interval > 0 && (t + 1) % snapshot_interval == 0)
      snapshots->emplace_back(t + 1, learner.filter());
  }
  return learner;
}

BlockedRunResult run_on_replay_blocked(const Replay& replay, std::span<const int> step_block,
                                       const OnlineLearnerConfig& cfg,
                                       long snapshot_interval) {
  if (!step_block.empty() && static_cast<Eigen::Index>(step_block.size()) != replay.size())
    throw std::invalid_argument("block ids do not match replay length");
  BlockedRunResult out{OnlineLearner(cfg), Eigen::VectorXd(replay.size()), {}, {}};
  int current_block = -1;
  Eigen::VectorXd block_taps;
  for (Eigen::Index t = 0; t < replay.size(); ++t) {
    int block = step_block.empty() ? static_cast<int>(t) : step_block[static_cast<std::size_t>(t)];
    if (block != current_block) {
      current_block = block;
      block_taps = out.learner.taps();
      out.block_filters.emplace_back(block_taps);
    }
    Eigen::RowVectorXd row = replay.designs.row(t);  // contiguous, like step()
    out.predictions[t] = row.dot(block_taps);
    out.learner.step(row, replay.targets[t]);
    if (snapshot_interval > 0 && (t + 1) % snapshot_interval == 0)
      out.snapshots.emplace_back(t + 1, out.learner.filter());
  }
  return out;
}

RegretReport static_regret(std::span<const double> online_losses, const FilterCoefficients& u,
                           const Replay& replay, double mu, double eta,
                           double projection_radius) {
  if (static_cast<Eigen::Index>(online_losses.size()) != replay.size())
    throw std::invalid_argument("loss history and replay length mismatch");
  if (replay.size() == 0) throw std::invalid_argument("empty replay");
  double total = 0.0;
  for (Eigen::Index t = 0; t < replay.size(); ++t)
    total += online_losses[static_cast<std::size_t>(t)] -
             loss_on_design(replay.designs.row(t), u.taps, replay.targets[t], mu);
  RegretReport rep;
  rep.total_regret = total;
  rep.normalized_regret = total / static_cast<double>(replay.size());
  rep.lipschitz_estimate = lipschitz_estimate(replay, projection_radius, mu);
  rep.bound = regret_bound(u.taps.norm(), eta, rep.lipschitz_estimate,
                           static_cast<long>(replay.size()));
  return rep;
}

double regret_bound(double u_norm, double eta, double lipschitz, long horizon) {
  return u_norm * u_norm / (2.0 * eta) +
         0.5 * eta * lipschitz * lipschitz * static_cast<double>(horizon);
}

double lipschitz_estimate(const Replay& replay, double projection_radius, double mu) {
  if (replay.size() == 0) throw std::invalid_argument("empty replay");
  double c = 0.0;
  for (Eigen::Index t = 0; t < replay.size(); ++t) {
    double rn = replay.designs.row(t).norm();
    c = std::max(c, (rn * projection_radius + std::abs(replay.targets[t])) * rn);
  }
  return c + 2.0 * mu * projection_radius;
}

void write_trace_csv(std::ostream& out, std::string_view method,
                     const std::vector<StepRecord>& records, bool with_header) {
  if (with_header) out << "method,step,prediction,truth,loss,h_norm\n";
  out.precision(17);
  for (std::size_t t = 0; t < records.size(); ++t)
    out << method << "," << (t + 1) << "," << records[t].prediction << ","
        << records[t].truth << "," << records[t].loss << "," << records[t].h_norm << "\n";
}

}  // namespace egf
