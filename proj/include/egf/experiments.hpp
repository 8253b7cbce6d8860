#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "egf/baselines.hpp"
#include "egf/movielens.hpp"
#include "egf/online.hpp"
#include "egf/synthetic.hpp"

namespace egf {

// sqrt(sum (pred - truth)^2 / sum truth^2)
double rnmse(const Eigen::VectorXd& predictions, const Eigen::VectorXd& truths);

// Log-spaced grid, endpoints inclusive.
std::vector<double> log_grid(double lo, double hi, int points_per_decade);

// Sample standard deviation (n-1 denominator).
double sample_sdev(std::span<const double> xs);

void parallel_for(int n, int threads, const std::function<void(int)>& body);

std::uint64_t fnv1a(const void* data, std::size_t bytes, std::uint64_t h = 0xcbf29ce484222325ULL);

struct GridSpec {
  double lo = 1e-6;
  double hi = 10.0;
  int per_decade = 7;
};

// ---------------------------------------------------------------------------
// Materialized realizations: the method-independent design rows and side
// predictions for one seed, shared by every method so comparisons are paired.

struct SyntheticRealization {
  SyntheticStream stream;
  Replay replay;
  Eigen::VectorXd wknn;  // per-step weighted-kNN prediction
  std::uint64_t stream_hash = 0;
};

SyntheticRealization materialize_synthetic(const SyntheticConfig& cfg);

struct MovielensRealization {
  MovielensStream stream;
  Replay replay;
  std::vector<int> step_user;  // stream-user ordinal per step
  std::vector<int> step_item;
  Eigen::VectorXd wknn;
  std::vector<AttachmentVector> attachments;  // per streamed user
  std::uint64_t stream_hash = 0;
};

MovielensRealization materialize_movielens(const RatingsCorpus& corpus,
                                           const MovielensConfig& cfg, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Per-method scoring and hyperparameter search (exhaustive, NaN-ranked-last,
// ties to the smaller first coordinate then the smaller second).

struct OnlineHyper {
  double eta = 0, mu = 0, score = 0;
};
// step_block non-empty scores cold-start block predictions (see
// run_on_replay_blocked); empty means one block per step.
OnlineHyper tune_online(const Replay& replay, const GridSpec& grid, int order,
                        std::span<const int> step_block = {});

Eigen::VectorXd online_predictions(const Replay& replay, const OnlineLearnerConfig& cfg);

Eigen::VectorXd batch_predictions(const Replay& replay, double ridge,
                                  FilterCoefficients* coeffs = nullptr);
double tune_batch_ridge(const Replay& replay, const GridSpec& grid);

// D x T feature table for a whole event stream (one column per step). The
// kernel learner consumes the raw (un-normalized) attachment pattern, so
// weight_scale multiplies stored attachment weights back to that scale.
Eigen::MatrixXd okl_feature_table(const RandomFeatureMap& fmap,
                                  std::span<const TrainingEvent> events,
                                  double weight_scale = 1.0);
// One column per streamed user; steps look their column up through step_col.
Eigen::MatrixXd okl_user_features(const RandomFeatureMap& fmap,
                                  std::span<const AttachmentVector> users,
                                  double weight_scale = 1.0);
// step_col empty means the identity map (column t for step t). Consecutive
// steps sharing a column form one arrival block: they are all predicted with
// the weights held at block start (cold start), updates stay per step.
Eigen::VectorXd okl_predictions(const Eigen::MatrixXd& z_cols, std::span<const int> step_col,
                                const Eigen::VectorXd& targets, const OklConfig& cfg);
struct OklHyper {
  double eta = 0, mu = 0, sigma2 = 0, score = 0;
};
OklHyper tune_okl(const std::vector<std::pair<double, Eigen::MatrixXd>>& z_by_sigma2,
                  std::span<const int> step_col, const Eigen::VectorXd& targets,
                  const GridSpec& grid, int threads);

// Pretrained-filter transfer on synthetic streams: mean rNMSE over pretraining
// mask sets (each set fits its own filter from the realization's x0).
double it1_mean_rnmse(const SyntheticRealization& real, double ridge, int sets,
                      FilterCoefficients* first_filter = nullptr);
double tune_it1_ridge(const SyntheticRealization& real, const GridSpec& grid, int sets);

// Rating-domain transfer with kernel smoothing (IT2).
FilterCoefficients it2_filter(const RatingsCorpus& corpus, const MovielensRealization& real,
                              double ridge, std::uint64_t seed);
Eigen::VectorXd it2_predictions(const RatingsCorpus& corpus, const MovielensRealization& real,
                                KernelKind kernel, double sigma2, double lambda,
                                const FilterCoefficients& h);
struct It2Hyper {
  KernelKind kernel = KernelKind::Linear;
  double sigma2 = 0, lambda = 0, ridge = 0, score = 0;
};
// Joint (kernel, lambda, ridge) search on a prefix of the tuning stream; the
// kernel eigendecomposition is shared across the whole lambda grid.
It2Hyper tune_it2(const RatingsCorpus& corpus, const MovielensRealization& real,
                  const GridSpec& ridge_grid, std::span<const double> sigma2s,
                  int max_tuning_users, std::uint64_t seed);

// Aggregated diversity over the full catalog: per incoming user, the top-10
// predicted items among all items, for the online filter deployed at arrival
// and for the fixed batch filter. Returns {AD10(online), AD10(batch)}.
std::pair<double, double> movielens_full_catalog_ad10(
    const MovielensRealization& real, std::span<const FilterCoefficients> arrival_filters,
    const FilterCoefficients& batch_filter);

// ---------------------------------------------------------------------------
// Scenario orchestration.

struct MethodScore {
  double mean = 0;
  double sdev = 0;
  std::vector<double> per_realization;
};

struct HyperChoice {
  double eta = 0, mu = 0, ridge = 0, sigma2 = 0, lambda = 0;
  std::string kernel;
  double tuning_score = 0;
};

struct ScenarioResult {
  std::string scenario;  // kernel | filter | wmean | movielens
  std::vector<std::string> methods;
  std::map<std::string, MethodScore> rnmse;
  std::map<std::string, HyperChoice> hypers;
  MethodScore normalized_regret;  // online filter vs the batch comparator
  MethodScore ad10_prop;          // movielens only
  MethodScore ad10_bs;
  int realizations = 0;
  int excluded = 0;
  std::string stream_hash;  // first scored realization, hex
  double mean_step_seconds = 0.0;
  // First scored realization, for plots; not part of the JSON metrics.
  std::vector<std::pair<long, FrequencyResponse>> frequency;
  FrequencyResponse batch_frequency;
  std::map<std::string, std::vector<StepRecord>> traces;
  // MovieLens only: raw user/item ids per step of the first realization,
  // backing the per-method prediction CSVs.
  std::vector<int> step_user_ids;
  std::vector<int> step_item_ids;
};

struct SyntheticScenarioConfig {
  SyntheticConfig proto;  // per-realization seeds override proto.seed
  std::vector<std::string> methods = {"prop", "bs", "okl", "it1", "wknn"};
  int realizations = 20;
  std::uint64_t base_seed = 1000;
  std::uint64_t tuning_seed = 555;
  long snapshot_interval = 100;
  GridSpec online_grid{1e-6, 10.0, 7};
  GridSpec ridge_grid{1e-4, 10.0, 7};
  int it1_sets = 50;
  int okl_features = 2000;
  std::vector<double> okl_sigma2 = {1.0, 10.0};
  std::uint64_t okl_map_seed = 0xfea1ULL;
  int threads = 0;  // 0 = hardware concurrency
};

ScenarioResult run_synthetic_scenario(const SyntheticScenarioConfig& cfg);

struct MovielensScenarioConfig {
  std::string data_path = "data/ml-100k/u.data";
  MovielensConfig proto;
  // it2 is opt-in: it adds a dense kernel solve per incoming user.
  std::vector<std::string> methods = {"prop", "bs", "okl", "wknn"};
  int realizations = 20;
  std::uint64_t base_seed = 2000;
  std::uint64_t tuning_seed = 777;
  long snapshot_interval = 2000;
  GridSpec online_grid{1e-6, 10.0, 7};
  GridSpec ridge_grid{1e-4, 10.0, 7};
  int okl_features = 2000;
  std::vector<double> okl_sigma2 = {1.0, 10.0};
  std::uint64_t okl_map_seed = 0xfea2ULL;
  std::vector<double> it2_sigma2 = {1.0, 5.0, 10.0};
  int it2_tuning_users = 120;
  int threads = 0;
};

ScenarioResult run_movielens_scenario(const MovielensScenarioConfig& cfg);

nlohmann::json to_json(const ScenarioResult& r);
ScenarioResult scenario_result_from_json(const nlohmann::json& j);

// Writes metrics.json, summary.csv, summary.txt, per-method trace CSVs, and
// frequency-response CSVs into out_dir (created if needed).
void emit_results(const ScenarioResult& r, const std::string& out_dir);

}  // namespace egf
