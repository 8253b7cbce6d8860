#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "egf/experiments.hpp"
#include "egf/rng.hpp"
#include "test_util.hpp"

using namespace egf;

TEST_CASE("rnmse") {
  Eigen::VectorXd truth(3);
  truth << 1.0, -2.0, 2.0;
  CHECK(rnmse(truth, truth) == 0.0);
  CHECK(rnmse(Eigen::VectorXd::Zero(3), truth) == doctest::Approx(1.0));
  CHECK_THROWS_AS(rnmse(Eigen::VectorXd::Zero(2), truth), std::invalid_argument);
  CHECK_THROWS_AS(rnmse(Eigen::VectorXd::Zero(3), Eigen::VectorXd::Zero(3)),
                  std::domain_error);
}

TEST_CASE("log grids") {
  std::vector<double> online = log_grid(1e-6, 10.0, 7);
  CHECK(online.size() == 50);
  CHECK(online.front() == 1e-6);
  CHECK(online.back() == 10.0);
  for (std::size_t i = 1; i < online.size(); ++i) CHECK(online[i] > online[i - 1]);

  std::vector<double> ridge = log_grid(1e-4, 10.0, 7);
  CHECK(ridge.size() == 36);

  std::vector<double> single = log_grid(0.5, 0.5, 7);
  REQUIRE(single.size() == 1);
  CHECK(single[0] == 0.5);
}

TEST_CASE("sample standard deviation uses the n-1 denominator") {
  std::vector<double> xs{1.0, 2.0, 3.0};
  CHECK(sample_sdev(xs) == doctest::Approx(1.0));
  CHECK(sample_sdev(std::vector<double>{5.0}) == 0.0);
}

TEST_CASE("parallel_for covers the range and propagates errors") {
  std::vector<int> hits(64, 0);
  parallel_for(64, 3, [&](int i) { hits[static_cast<std::size_t>(i)] = 1; });
  for (int h : hits) CHECK(h == 1);
  CHECK_THROWS_AS(parallel_for(8, 2, [](int i) {
                    if (i == 5) throw std::runtime_error("boom");
                  }),
                  std::runtime_error);
}

namespace {

SyntheticConfig tiny_proto(SignalMode mode) {
  SyntheticConfig cfg;
  cfg.starting_nodes = 30;
  cfg.edge_probability = 0.3;
  cfg.edges_per_node = 4;
  cfg.horizon = 40;
  cfg.order = 3;
  cfg.mode = mode;
  return cfg;
}

}  // namespace

TEST_CASE("tuning: single-point grid returns that point") {
  SyntheticConfig proto = tiny_proto(SignalMode::Filter);
  proto.seed = 9;
  SyntheticRealization real = materialize_synthetic(proto);
  OnlineHyper h = tune_online(real.replay, GridSpec{0.3, 0.3, 7}, proto.order);
  CHECK(h.eta == 0.3);
  CHECK(h.mu == 0.3);
}

TEST_CASE("tuning: divergent step sizes are never selected") {
  SyntheticConfig proto = tiny_proto(SignalMode::Filter);
  proto.seed = 10;
  SyntheticRealization real = materialize_synthetic(proto);
  // Scale the rows up so the largest grid step sizes blow up.
  Replay scaled = real.replay;
  scaled.designs *= 50.0;
  scaled.targets *= 50.0;
  OnlineHyper h = tune_online(scaled, GridSpec{1e-6, 10.0, 2}, proto.order);
  CHECK(std::isfinite(h.score));
  OnlineLearnerConfig cfg;
  cfg.eta = h.eta;
  cfg.mu = h.mu;
  cfg.order = proto.order;
  CHECK_NOTHROW(run_on_replay(scaled, cfg));
}

TEST_CASE("tuning: exhaustive self-check, selected point is the grid minimum") {
  SyntheticConfig proto = tiny_proto(SignalMode::Filter);
  proto.seed = 13;
  SyntheticRealization real = materialize_synthetic(proto);
  GridSpec grid{1e-3, 1.0, 1};
  OnlineHyper best = tune_online(real.replay, grid, proto.order);
  double found_min = std::numeric_limits<double>::infinity();
  for (double eta : log_grid(grid.lo, grid.hi, grid.per_decade)) {
    for (double mu : log_grid(grid.lo, grid.hi, grid.per_decade)) {
      OnlineLearnerConfig cfg;
      cfg.eta = eta;
      cfg.mu = mu;
      cfg.order = proto.order;
      try {
        found_min = std::min(found_min,
                             rnmse(online_predictions(real.replay, cfg), real.replay.targets));
      } catch (const DivergenceError&) {
      }
    }
  }
  CHECK(best.score == doctest::Approx(found_min).epsilon(1e-15));
}

TEST_CASE("materialization is deterministic per seed") {
  SyntheticConfig proto = tiny_proto(SignalMode::WMean);
  proto.seed = 11;
  SyntheticRealization a = materialize_synthetic(proto);
  SyntheticRealization b = materialize_synthetic(proto);
  CHECK(a.stream_hash == b.stream_hash);
  CHECK((a.replay.designs - b.replay.designs).norm() == 0.0);
  CHECK((a.wknn - b.wknn).norm() == 0.0);
  proto.seed = 12;
  CHECK(materialize_synthetic(proto).stream_hash != a.stream_hash);
}

TEST_CASE("tiny synthetic scenario end to end") {
  SyntheticScenarioConfig cfg;
  cfg.proto = tiny_proto(SignalMode::Filter);
  cfg.methods = {"prop", "bs", "it1", "wknn"};
  cfg.realizations = 3;
  cfg.base_seed = 40;
  cfg.tuning_seed = 41;
  cfg.snapshot_interval = 10;
  cfg.online_grid = {1e-4, 1.0, 1};
  cfg.ridge_grid = {1e-4, 1.0, 1};
  cfg.it1_sets = 5;
  cfg.threads = 2;

  ScenarioResult r = run_synthetic_scenario(cfg);
  CHECK(r.excluded == 0);
  CHECK(r.rnmse.at("prop").per_realization.size() == 3);
  CHECK(r.rnmse.at("bs").mean < r.rnmse.at("prop").mean + 1.0);
  CHECK(r.normalized_regret.per_realization.size() == 3);
  CHECK(!r.stream_hash.empty());
  CHECK(r.frequency.size() == 4);  // steps 10, 20, 30, 40
  CHECK(r.batch_frequency.grid.size() == 201);
  CHECK(r.traces.count("prop") == 1);
  CHECK(r.traces.at("prop").size() == 40);

  // Reported sdev is the n-1 sample deviation of the per-seed values.
  const MethodScore& ms = r.rnmse.at("prop");
  CHECK(ms.sdev == doctest::Approx(sample_sdev(ms.per_realization)));

  // Identical configuration twice: identical streams (hash check).
  ScenarioResult r2 = run_synthetic_scenario(cfg);
  CHECK(r2.stream_hash == r.stream_hash);

  // Regret consistency: the scenario's normalized regret equals a direct
  // static_regret computation on the same replay.
  SyntheticConfig proto = cfg.proto;
  proto.seed = cfg.base_seed + 1;
  SyntheticRealization real = materialize_synthetic(proto);
  OnlineLearnerConfig ocfg;
  ocfg.eta = r.hypers.at("prop").eta;
  ocfg.mu = r.hypers.at("prop").mu;
  ocfg.order = proto.order;
  OnlineLearner learner = run_on_replay(real.replay, ocfg);
  FilterCoefficients u;
  batch_predictions(real.replay, r.hypers.at("bs").ridge, &u);
  RegretReport rep = static_regret(learner.losses(), u, real.replay, ocfg.mu, ocfg.eta,
                                   2.0 * u.taps.norm());
  CHECK(r.normalized_regret.per_realization[0] ==
        doctest::Approx(rep.normalized_regret).epsilon(1e-12));
}

TEST_CASE("scenario JSON round trip and emitted files") {
  SyntheticScenarioConfig cfg;
  cfg.proto = tiny_proto(SignalMode::WMean);
  cfg.methods = {"prop", "bs", "wknn"};
  cfg.realizations = 2;
  cfg.base_seed = 50;
  cfg.tuning_seed = 51;
  cfg.snapshot_interval = 20;
  cfg.online_grid = {1e-3, 1.0, 1};
  cfg.ridge_grid = {1e-3, 1.0, 1};
  cfg.threads = 1;
  ScenarioResult r = run_synthetic_scenario(cfg);

  nlohmann::json j = to_json(r);
  ScenarioResult back = scenario_result_from_json(j);
  CHECK(to_json(back) == j);

  std::string out = (std::filesystem::temp_directory_path() / "egf_emit_test").string();
  std::filesystem::remove_all(out);
  emit_results(r, out);
  CHECK(std::filesystem::exists(out + "/metrics.json"));
  CHECK(std::filesystem::exists(out + "/summary.csv"));
  CHECK(std::filesystem::exists(out + "/summary.txt"));
  CHECK(std::filesystem::exists(out + "/trace_prop.csv"));
  CHECK(std::filesystem::exists(out + "/frequency_online.csv"));
  CHECK(std::filesystem::exists(out + "/frequency_batch.csv"));

  // Emitted JSON re-parses to the same result.
  std::ifstream f(out + "/metrics.json");
  nlohmann::json parsed = nlohmann::json::parse(f);
  CHECK(to_json(scenario_result_from_json(parsed)) == j);

  // Frequency CSV rows: grid size x snapshot count (+ header).
  std::ifstream freq(out + "/frequency_online.csv");
  long lines = 0;
  std::string line;
  while (std::getline(freq, line))
    if (!line.empty()) ++lines;
  CHECK(lines == 1 + 201 * static_cast<long>(r.frequency.size()));

  // An empty method set still emits a well-formed summary, header only.
  ScenarioResult none;
  none.scenario = "filter";
  std::string out2 = (std::filesystem::temp_directory_path() / "egf_emit_empty").string();
  std::filesystem::remove_all(out2);
  emit_results(none, out2);
  std::ifstream s2(out2 + "/summary.csv");
  std::string header, extra;
  CHECK(std::getline(s2, header));
  CHECK(header == "method,rnmse_mean,rnmse_sdev");
  CHECK(!std::getline(s2, extra));
}

TEST_CASE("okl prediction table plumbing") {
  std::mt19937_64 rng = make_rng(140);
  RandomFeatureMap fmap(40, 64, 1.0, 7);
  std::vector<TrainingEvent> events;
  for (int t = 0; t < 12; ++t)
    events.push_back({testutil::random_attachment(rng, 15 + t, 3),
                      testutil::random_vector(rng, 1)[0]});
  Eigen::MatrixXd z = okl_feature_table(fmap, events);
  CHECK(z.rows() == 64);
  CHECK(z.cols() == 12);
  CHECK((z.col(3) - fmap.features(events[3].attachment)).norm() == 0.0);

  Eigen::VectorXd targets(12);
  for (int t = 0; t < 12; ++t) targets[t] = events[static_cast<std::size_t>(t)].x_true;
  Eigen::VectorXd preds = okl_predictions(z, {}, targets, {0.05, 1e-4});
  CHECK(preds.size() == 12);
  CHECK(preds[0] == 0.0);  // first prediction from zero weights
}
