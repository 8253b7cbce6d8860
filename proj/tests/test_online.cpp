#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <numeric>

#include "egf/online.hpp"
#include "egf/rng.hpp"
#include "test_util.hpp"

using namespace egf;

namespace {

struct Instance {
  ExpandingGraph g;
  Eigen::VectorXd x;
  AttachmentVector a;
  FilterCoefficients h;
  double x_true;
  double mu;
};

Instance random_instance(std::mt19937_64& rng, int order = 5) {
  int n = 5 + static_cast<int>(rng() % 12);
  Instance inst{ExpandingGraph(testutil::random_adjacency(rng, n, 0.4)),
                testutil::random_vector(rng, n),
                testutil::random_attachment(rng, n, std::min(4, n)),
                FilterCoefficients(testutil::random_vector(rng, order + 1)),
                testutil::random_vector(rng, 1)[0],
                std::abs(testutil::random_vector(rng, 1)[0]) * 0.1};
  return inst;
}

}  // namespace

TEST_CASE("loss matches an independent evaluation") {
  std::mt19937_64 rng = make_rng(61);
  Instance inst = random_instance(rng);
  ShiftedSignalMatrix ax(inst.g, inst.x, inst.h.order());

  // Perfect prediction, zero regularizer.
  Eigen::RowVectorXd r = design_row(inst.a, ax);
  double pred = r.dot(inst.h.taps);
  CHECK(loss(inst.h, inst.a, ax, pred, 0.0) == 0.0);

  // Zero filter: half the squared target.
  FilterCoefficients zero = FilterCoefficients::zeros(inst.h.order());
  CHECK(loss(zero, inst.a, ax, inst.x_true, 0.0) ==
        doctest::Approx(0.5 * inst.x_true * inst.x_true).epsilon(1e-12));

  // Independently coded formula.
  double resid = 0.0;
  for (int k = 0; k <= inst.h.order(); ++k) {
    double col = 0.0;
    for (const InEdge& e : inst.a.entries()) col += e.weight * ax.columns()(e.src, k);
    resid += col * inst.h.taps[k];
  }
  resid -= inst.x_true;
  double want = 0.5 * resid * resid + inst.mu * inst.h.taps.squaredNorm();
  CHECK(loss(inst.h, inst.a, ax, inst.x_true, inst.mu) ==
        doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("gradient special cases") {
  std::mt19937_64 rng = make_rng(62);
  Instance inst = random_instance(rng);
  ShiftedSignalMatrix ax(inst.g, inst.x, inst.h.order());
  Eigen::RowVectorXd r = design_row(inst.a, ax);

  FilterCoefficients zero = FilterCoefficients::zeros(inst.h.order());
  Eigen::VectorXd g0 = gradient(zero, inst.a, ax, inst.x_true, 0.0);
  CHECK((g0 + inst.x_true * r.transpose()).norm() <= 1e-12 * std::max(1.0, g0.norm()));

  double pred = r.dot(inst.h.taps);
  Eigen::VectorXd g1 = gradient(inst.h, inst.a, ax, pred, inst.mu);
  CHECK((g1 - 2.0 * inst.mu * inst.h.taps).norm() <= 1e-12);
}

TEST_CASE("gradient matches central finite differences on 100 instances") {
  std::mt19937_64 rng = make_rng(63);
  const double step = 1e-6;
  for (int rep = 0; rep < 100; ++rep) {
    Instance inst = random_instance(rng);
    ShiftedSignalMatrix ax(inst.g, inst.x, inst.h.order());
    Eigen::VectorXd analytic = gradient(inst.h, inst.a, ax, inst.x_true, inst.mu);
    Eigen::VectorXd fd(analytic.size());
    for (int k = 0; k < analytic.size(); ++k) {
      FilterCoefficients plus = inst.h, minus = inst.h;
      plus.taps[k] += step;
      minus.taps[k] -= step;
      fd[k] = (loss(plus, inst.a, ax, inst.x_true, inst.mu) -
               loss(minus, inst.a, ax, inst.x_true, inst.mu)) /
              (2.0 * step);
    }
    CHECK((analytic - fd).norm() <= 1e-6 * std::max(1.0, analytic.norm()));
  }
}

TEST_CASE("loss is convex in the filter") {
  std::mt19937_64 rng = make_rng(64);
  for (int rep = 0; rep < 50; ++rep) {
    Instance inst = random_instance(rng);
    ShiftedSignalMatrix ax(inst.g, inst.x, inst.h.order());
    Eigen::RowVectorXd r = design_row(inst.a, ax);
    Eigen::VectorXd h1 = testutil::random_vector(rng, inst.h.order() + 1);
    Eigen::VectorXd h2 = testutil::random_vector(rng, inst.h.order() + 1);
    double theta = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    Eigen::VectorXd mix = theta * h1 + (1.0 - theta) * h2;
    double lhs = loss_on_design(r, mix, inst.x_true, inst.mu);
    double rhs = theta * loss_on_design(r, h1, inst.x_true, inst.mu) +
                 (1.0 - theta) * loss_on_design(r, h2, inst.x_true, inst.mu);
    CHECK(lhs <= rhs + 1e-12);
  }
}

TEST_CASE("single OGD step from zero") {
  std::mt19937_64 rng = make_rng(65);
  Instance inst = random_instance(rng);
  ShiftedSignalMatrix ax(inst.g, inst.x, inst.h.order());
  Eigen::RowVectorXd r = design_row(inst.a, ax);

  OnlineLearnerConfig cfg;
  cfg.eta = 0.05;
  cfg.mu = 0.0;
  cfg.order = inst.h.order();
  OnlineLearner learner(cfg);
  double pred = learner.step(r, inst.x_true);
  CHECK(pred == 0.0);
  Eigen::VectorXd want = cfg.eta * inst.x_true * r.transpose();
  CHECK((learner.taps() - want).norm() <= 1e-14 * std::max(1.0, want.norm()));
}

TEST_CASE("OGD step edge cases") {
  Eigen::RowVectorXd r(3);
  r << 1.0, 0.5, -0.25;

  // eta = 0: taps unchanged, loss still recorded.
  OnlineLearnerConfig frozen;
  frozen.eta = 0.0;
  frozen.mu = 0.1;
  frozen.order = 2;
  OnlineLearner learner(frozen);
  learner.step(r, 2.0);
  CHECK(learner.taps().norm() == 0.0);
  REQUIRE(learner.history().size() == 1);
  CHECK(learner.history()[0].loss == doctest::Approx(0.5 * 4.0));

  // Zero gradient: prediction equals truth at mu = 0.
  OnlineLearnerConfig cfg;
  cfg.eta = 0.5;
  cfg.mu = 0.0;
  cfg.order = 2;
  cfg.h_init = (Eigen::VectorXd(3) << 1.0, 1.0, 1.0).finished();
  OnlineLearner l2(cfg);
  double truth = r.sum();
  l2.step(r, truth);
  CHECK((l2.taps() - cfg.h_init).norm() == 0.0);
}

TEST_CASE("projection keeps iterates inside the ball") {
  std::mt19937_64 rng = make_rng(66);
  OnlineLearnerConfig cfg;
  cfg.eta = 0.8;
  cfg.mu = 0.01;
  cfg.order = 5;
  cfg.projection_radius = 0.7;
  OnlineLearner learner(cfg);
  for (int t = 0; t < 200; ++t) {
    Eigen::RowVectorXd r = testutil::random_vector(rng, 6).transpose();
    learner.step(r, testutil::random_vector(rng, 1)[0]);
    CHECK(learner.taps().norm() <= 0.7 + 1e-12);
  }
  for (const StepRecord& rec : learner.history()) CHECK(rec.h_norm <= 0.7 + 1e-12);
}

TEST_CASE("divergent step size raises with the step index") {
  std::mt19937_64 rng = make_rng(67);
  OnlineLearnerConfig cfg;
  cfg.eta = 1e8;
  cfg.mu = 0.0;
  cfg.order = 5;
  OnlineLearner learner(cfg);
  bool thrown = false;
  for (int t = 0; t < 50 && !thrown; ++t) {
    Eigen::RowVectorXd r = (10.0 * testutil::random_vector(rng, 6)).transpose();
    try {
      learner.step(r, 5.0);
    } catch (const DivergenceError& e) {
      thrown = true;
      CHECK(e.step >= 1);
    }
  }
  CHECK(thrown);
}

TEST_CASE("run_online protocol") {
  std::mt19937_64 rng = make_rng(68);
  ExpandingGraph g(testutil::random_adjacency(rng, 10, 0.4));
  Eigen::VectorXd x0 = testutil::random_vector(rng, 10);

  OnlineLearnerConfig cfg;
  cfg.eta = 0.1;
  cfg.mu = 1e-3;
  cfg.order = 4;

  // Empty stream: nothing changes.
  OnlineRunResult empty = run_online(g, x0, {}, cfg);
  CHECK(empty.learner.step_count() == 0);
  CHECK(empty.graph.node_count() == 10);
  CHECK(empty.signal.size() == 10);

  // Zero targets with zero-initialized taps: predictions are exact, the
  // filter never moves when mu = 0.
  cfg.mu = 0.0;
  std::vector<TrainingEvent> zeros;
  {
    int dim = 10;
    std::mt19937_64 r2 = make_rng(69);
    for (int t = 0; t < 8; ++t) {
      zeros.push_back({testutil::random_attachment(r2, dim, 3), 0.0});
      ++dim;
    }
  }
  OnlineRunResult res = run_online(g, x0, zeros, cfg);
  CHECK(res.learner.taps().norm() == 0.0);
  CHECK(res.graph.node_count() == 18);
  CHECK(res.signal.size() == 18);

  // Dimension mismatch (attachment not matching the grown graph) propagates.
  std::vector<TrainingEvent> bad;
  bad.push_back({AttachmentVector(9, {{0, 1.0}}), 0.0});
  CHECK_THROWS_AS(run_online(g, x0, bad, cfg), std::invalid_argument);
}

TEST_CASE("replay path reproduces the full protocol bit for bit") {
  std::mt19937_64 rng = make_rng(70);
  ExpandingGraph g = ExpandingGraph(testutil::random_adjacency(rng, 12, 0.35)).normalized();
  Eigen::VectorXd x0 = testutil::random_vector(rng, 12);
  std::vector<TrainingEvent> stream;
  int dim = 12;
  for (int t = 0; t < 40; ++t) {
    stream.push_back({testutil::random_attachment(rng, dim, 4),
                      testutil::random_vector(rng, 1)[0]});
    ++dim;
  }
  OnlineLearnerConfig cfg;
  cfg.eta = 0.02;
  cfg.mu = 1e-4;
  cfg.order = 5;

  OnlineRunResult full = run_online(g, x0, stream, cfg);
  Replay replay = build_replay(g, x0, stream, cfg.order);
  CHECK((full.replay.designs - replay.designs).norm() == 0.0);
  CHECK((full.replay.targets - replay.targets).norm() == 0.0);

  OnlineLearner fast = run_on_replay(replay, cfg);
  CHECK((fast.taps() - full.learner.taps()).norm() == 0.0);
  REQUIRE(fast.history().size() == full.learner.history().size());
  for (std::size_t t = 0; t < fast.history().size(); ++t) {
    CHECK(fast.history()[t].prediction == full.learner.history()[t].prediction);
    CHECK(fast.history()[t].loss == full.learner.history()[t].loss);
  }
}

TEST_CASE("blocked replay semantics") {
  std::mt19937_64 rng = make_rng(73);
  Replay replay;
  replay.designs = Eigen::MatrixXd::Random(24, 4);
  replay.targets = Eigen::VectorXd::Random(24);
  OnlineLearnerConfig cfg;
  cfg.eta = 0.1;
  cfg.mu = 1e-3;
  cfg.order = 3;

  // Distinct block per step: identical to the plain replay run.
  std::vector<int> identity(24);
  std::iota(identity.begin(), identity.end(), 0);
  BlockedRunResult fine = run_on_replay_blocked(replay, identity, cfg);
  OnlineLearner plain = run_on_replay(replay, cfg);
  CHECK((fine.learner.taps() - plain.taps()).norm() == 0.0);
  for (Eigen::Index t = 0; t < 24; ++t)
    CHECK(fine.predictions[t] == plain.history()[static_cast<std::size_t>(t)].prediction);
  CHECK(fine.block_filters.size() == 24);

  // One block: every prediction uses the initial taps.
  std::vector<int> one(24, 0);
  cfg.h_init = testutil::random_vector(rng, 4);
  BlockedRunResult coarse = run_on_replay_blocked(replay, one, cfg);
  CHECK(coarse.block_filters.size() == 1);
  for (Eigen::Index t = 0; t < 24; ++t)
    CHECK(coarse.predictions[t] ==
          doctest::Approx(replay.designs.row(t).dot(cfg.h_init)).epsilon(1e-15));
  // Updates still ran per step.
  CHECK((coarse.learner.taps() - cfg.h_init).norm() > 0.0);

  std::vector<int> wrong(10, 0);
  CHECK_THROWS_AS(run_on_replay_blocked(replay, wrong, cfg), std::invalid_argument);
}

TEST_CASE("static regret of the online sequence against itself is zero") {
  std::mt19937_64 rng = make_rng(71);
  Replay replay;
  replay.designs = Eigen::MatrixXd::Random(30, 6);
  replay.targets = Eigen::VectorXd::Random(30);
  Eigen::VectorXd u = testutil::random_vector(rng, 6);

  OnlineLearnerConfig cfg;
  cfg.eta = 0.0;  // constant iterate equal to u
  cfg.mu = 0.05;
  cfg.order = 5;
  cfg.h_init = u;
  OnlineLearner learner = run_on_replay(replay, cfg);
  std::vector<double> losses = learner.losses();
  RegretReport rep = static_regret(losses, FilterCoefficients(u), replay, cfg.mu, 0.1, 1.0);
  CHECK(std::abs(rep.total_regret) <= 1e-12);
  CHECK(std::abs(rep.normalized_regret) <= 1e-14);

  std::vector<double> short_losses(losses.begin(), losses.end() - 1);
  CHECK_THROWS_AS(
      static_regret(short_losses, FilterCoefficients(u), replay, cfg.mu, 0.1, 1.0),
      std::invalid_argument);
}

TEST_CASE("regret bound algebra") {
  CHECK(regret_bound(1.0, 1.0, 1.0, 1) == doctest::Approx(1.0));

  double u = 2.3, lips = 1.7;
  long T = 400;
  double eta_star = u / (lips * std::sqrt(static_cast<double>(T)));
  CHECK(regret_bound(u, eta_star, lips, T) ==
        doctest::Approx(u * lips * std::sqrt(static_cast<double>(T))).epsilon(1e-12));

  double fixed_eta = 0.01;
  double b1 = regret_bound(u, fixed_eta, lips, 500);
  double b2 = regret_bound(u, fixed_eta, lips, 1000);
  double term1 = u * u / (2.0 * fixed_eta);
  CHECK(b2 - term1 == doctest::Approx(2.0 * (b1 - term1)).epsilon(1e-12));
}

TEST_CASE("lipschitz estimate") {
  Replay silent;
  silent.designs = Eigen::MatrixXd::Zero(5, 6);
  silent.targets = Eigen::VectorXd::Zero(5);
  CHECK(lipschitz_estimate(silent, 2.0, 0.25) == doctest::Approx(2.0 * 0.25 * 2.0));

  Replay one;
  one.designs = Eigen::MatrixXd::Zero(1, 6);
  one.designs(0, 1) = 3.0;
  one.designs(0, 2) = -4.0;  // row norm 5
  one.targets = Eigen::VectorXd::Constant(1, 2.0);
  CHECK(lipschitz_estimate(one, 0.0, 0.0) == doctest::Approx(2.0 * 5.0));

  Replay empty;
  empty.designs = Eigen::MatrixXd::Zero(0, 6);
  empty.targets = Eigen::VectorXd::Zero(0);
  CHECK_THROWS_AS(lipschitz_estimate(empty, 1.0, 0.1), std::invalid_argument);

  // Upper-bounds every observed gradient norm in a projected run.
  std::mt19937_64 rng = make_rng(72);
  Replay replay;
  replay.designs = Eigen::MatrixXd::Random(60, 6);
  replay.targets = Eigen::VectorXd::Random(60);
  double radius = 0.8, mu = 0.02;
  double lips = lipschitz_estimate(replay, radius, mu);
  OnlineLearnerConfig cfg;
  cfg.eta = 0.3;
  cfg.mu = mu;
  cfg.order = 5;
  cfg.projection_radius = radius;
  OnlineLearner learner(cfg);
  for (Eigen::Index t = 0; t < replay.size(); ++t) {
    Eigen::VectorXd grad =
        gradient_on_design(replay.designs.row(t), learner.taps(), replay.targets[t], mu);
    CHECK(grad.norm() <= lips + 1e-12);
    learner.step(replay.designs.row(t), replay.targets[t]);
  }
}
