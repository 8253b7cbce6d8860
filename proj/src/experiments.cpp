#include "egf/experiments.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <mutex>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "egf/rng.hpp"

namespace egf {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

double rnmse(const Eigen::VectorXd& predictions, const Eigen::VectorXd& truths) {
  if (predictions.size() != truths.size())
    throw std::invalid_argument("prediction/truth length mismatch");
  if (predictions.size() == 0) throw std::invalid_argument("empty prediction sequence");
  double energy = truths.squaredNorm();
  if (!(energy > 0.0)) throw std::domain_error("truth sequence has zero energy");
  return std::sqrt((predictions - truths).squaredNorm() / energy);
}

std::vector<double> log_grid(double lo, double hi, int points_per_decade) {
  if (!(lo > 0.0) || !(hi >= lo)) throw std::invalid_argument("bad grid bounds");
  if (points_per_decade < 1) throw std::invalid_argument("bad grid density");
  if (hi == lo) return {lo};
  double decades = std::log10(hi / lo);
  int count = static_cast<int>(std::lround(decades * points_per_decade)) + 1;
  std::vector<double> grid(count);
  for (int i = 0; i < count; ++i)
    grid[i] = lo * std::pow(10.0, decades * i / (count - 1));
  grid.front() = lo;
  grid.back() = hi;
  return grid;
}

double sample_sdev(std::span<const double> xs) {
  if (xs.size() < 2) return 0.0;
  double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / xs.size();
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / (xs.size() - 1));
}

void parallel_for(int n, int threads, const std::function<void(int)>& body) {
  if (threads <= 0) threads = static_cast<int>(std::thread::hardware_concurrency());
  threads = std::max(1, std::min(threads, n));
  if (threads == 1) {
    for (int i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&]() {
    for (;;) {
      int i = next.fetch_add(1);
      if (i >= n) return;
      try {
        body(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

std::uint64_t fnv1a(const void* data, std::size_t bytes, std::uint64_t h) {
  const unsigned char* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < bytes; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

// ---------------------------------------------------------------------------
// Realizations

SyntheticRealization materialize_synthetic(const SyntheticConfig& cfg) {
  SyntheticRealization real{make_stream(cfg), {}, {}, 0};
  const auto& events = real.stream.events;
  const Eigen::Index T = static_cast<Eigen::Index>(events.size());
  real.replay.designs.resize(T, cfg.order + 1);
  real.replay.targets.resize(T);
  real.wknn.resize(T);

  ExpandingGraph g = real.stream.graph0;
  GraphSignal x = real.stream.x0;
  for (Eigen::Index t = 0; t < T; ++t) {
    const TrainingEvent& ev = events[static_cast<std::size_t>(t)];
    ShiftedSignalMatrix ax(g, x, cfg.order);
    real.replay.designs.row(t) = design_row(ev.attachment, ax);
    real.replay.targets[t] = ev.x_true;
    real.wknn[t] = ev.attachment.connected() ? wknn_predict(ev.attachment, x) : 0.0;
    g.attach(ev.attachment);
    x.conservativeResize(x.size() + 1);
    x[x.size() - 1] = ev.x_true;
  }
  std::string text = serialize_stream(events);
  real.stream_hash = fnv1a(text.data(), text.size());
  return real;
}

MovielensRealization materialize_movielens(const RatingsCorpus& corpus,
                                           const MovielensConfig& cfg, std::uint64_t seed) {
  MovielensRealization real{MovielensStream(corpus, cfg, seed), {}, {}, {}, {}, {}, 0};
  const Eigen::Index T = static_cast<Eigen::Index>(real.stream.target_count());
  real.replay.designs.resize(T, cfg.order + 1);
  real.replay.targets.resize(T);
  real.wknn.resize(T);
  real.step_user.resize(static_cast<std::size_t>(T));
  real.step_item.resize(static_cast<std::size_t>(T));
  real.attachments.reserve(real.stream.plan().stream.size());

  real.stream.run(
      [&](const MovielensStream::UserContext& ctx) { real.attachments.push_back(ctx.attachment); },
      [&](const MovielensStream::StepContext& ctx) {
        Eigen::Index t = ctx.step - 1;
        real.replay.designs.row(t) = ctx.design;
        real.replay.targets[t] = ctx.truth;
        real.wknn[t] = ctx.wknn;
        real.step_user[static_cast<std::size_t>(t)] = ctx.user_ordinal;
        real.step_item[static_cast<std::size_t>(t)] = ctx.item;
      });

  std::uint64_t h = fnv1a(real.replay.designs.data(),
                          sizeof(double) * static_cast<std::size_t>(real.replay.designs.size()));
  real.stream_hash = fnv1a(real.replay.targets.data(),
                           sizeof(double) * static_cast<std::size_t>(real.replay.targets.size()), h);
  return real;
}

// ---------------------------------------------------------------------------
// Method scoring

Eigen::VectorXd online_predictions(const Replay& replay, const OnlineLearnerConfig& cfg) {
  OnlineLearner learner = run_on_replay(replay, cfg);
  Eigen::VectorXd preds(replay.size());
  const auto& hist = learner.history();
  for (Eigen::Index t = 0; t < replay.size(); ++t)
    preds[t] = hist[static_cast<std::size_t>(t)].prediction;
  return preds;
}

OnlineHyper tune_online(const Replay& replay, const GridSpec& grid, int order,
                        std::span<const int> step_block) {
  std::vector<double> etas = log_grid(grid.lo, grid.hi, grid.per_decade);
  std::vector<double> mus = etas;
  OnlineHyper best{0, 0, kInf};
  for (double eta : etas) {
    for (double mu : mus) {
      double score = kInf;
      try {
        OnlineLearnerConfig cfg;
        cfg.eta = eta;
        cfg.mu = mu;
        cfg.order = order;
        if (step_block.empty()) {
          score = rnmse(online_predictions(replay, cfg), replay.targets);
        } else {
          score = rnmse(run_on_replay_blocked(replay, step_block, cfg).predictions,
                        replay.targets);
        }
      } catch (const DivergenceError&) {
        score = kInf;
      }
      if (!std::isfinite(score)) score = kInf;
      if (score < best.score) best = {eta, mu, score};
    }
  }
  if (!std::isfinite(best.score))
    throw std::runtime_error("online grid search: every candidate diverged");
  return best;
}

Eigen::VectorXd batch_predictions(const Replay& replay, double ridge,
                                  FilterCoefficients* coeffs) {
  BatchProblem p{replay.designs, replay.targets, ridge};
  FilterCoefficients u = batch_filter(p);
  Eigen::VectorXd preds = replay.designs * u.taps;
  if (coeffs) *coeffs = std::move(u);
  return preds;
}

double tune_batch_ridge(const Replay& replay, const GridSpec& grid) {
  double best_ridge = grid.lo;
  double best_score = kInf;
  for (double ridge : log_grid(grid.lo, grid.hi, grid.per_decade)) {
    double score = rnmse(batch_predictions(replay, ridge), replay.targets);
    if (score < best_score) {
      best_score = score;
      best_ridge = ridge;
    }
  }
  return best_ridge;
}

namespace {

AttachmentVector scaled_attachment(const AttachmentVector& a, double weight_scale) {
  if (weight_scale == 1.0) return a;
  std::vector<InEdge> entries = a.entries();
  for (InEdge& e : entries) e.weight *= weight_scale;
  return AttachmentVector(a.dim(), std::move(entries));
}

}  // namespace

Eigen::MatrixXd okl_feature_table(const RandomFeatureMap& fmap,
                                  std::span<const TrainingEvent> events,
                                  double weight_scale) {
  Eigen::MatrixXd z(fmap.feature_count(), static_cast<Eigen::Index>(events.size()));
  for (std::size_t t = 0; t < events.size(); ++t)
    z.col(static_cast<Eigen::Index>(t)) =
        fmap.features(scaled_attachment(events[t].attachment, weight_scale));
  return z;
}

Eigen::MatrixXd okl_user_features(const RandomFeatureMap& fmap,
                                  std::span<const AttachmentVector> users,
                                  double weight_scale) {
  Eigen::MatrixXd z(fmap.feature_count(), static_cast<Eigen::Index>(users.size()));
  for (std::size_t u = 0; u < users.size(); ++u)
    z.col(static_cast<Eigen::Index>(u)) = fmap.features(scaled_attachment(users[u], weight_scale));
  return z;
}

Eigen::VectorXd okl_predictions(const Eigen::MatrixXd& z_cols, std::span<const int> step_col,
                                const Eigen::VectorXd& targets, const OklConfig& cfg) {
  OklLearner learner(static_cast<int>(z_cols.rows()), cfg);
  Eigen::VectorXd preds(targets.size());
  Eigen::Index current_col = -1;
  Eigen::VectorXd block_theta;
  for (Eigen::Index t = 0; t < targets.size(); ++t) {
    Eigen::Index col = step_col.empty() ? t : step_col[static_cast<std::size_t>(t)];
    if (col != current_col) {
      current_col = col;
      block_theta = learner.weights();
    }
    preds[t] = block_theta.dot(z_cols.col(col));
    learner.step(z_cols.col(col), targets[t]);
  }
  return preds;
}

OklHyper tune_okl(const std::vector<std::pair<double, Eigen::MatrixXd>>& z_by_sigma2,
                  std::span<const int> step_col, const Eigen::VectorXd& targets,
                  const GridSpec& grid, int threads) {
  std::vector<double> etas = log_grid(grid.lo, grid.hi, grid.per_decade);
  std::vector<double> mus = etas;
  struct Cell {
    double eta, mu, sigma2;
  };
  std::vector<Cell> cells;
  for (const auto& [sigma2, z] : z_by_sigma2)
    for (double eta : etas)
      for (double mu : mus) cells.push_back({eta, mu, sigma2});
  std::vector<double> scores(cells.size(), kInf);
  parallel_for(static_cast<int>(cells.size()), threads, [&](int i) {
    const Cell& c = cells[static_cast<std::size_t>(i)];
    const Eigen::MatrixXd* z = nullptr;
    for (const auto& [sigma2, table] : z_by_sigma2)
      if (sigma2 == c.sigma2) z = &table;
    try {
      double s = rnmse(okl_predictions(*z, step_col, targets, {c.eta, c.mu}), targets);
      if (std::isfinite(s)) scores[static_cast<std::size_t>(i)] = s;
    } catch (const DivergenceError&) {
    }
  });
  // Cells are ordered (sigma2 outer, eta, mu inner ascending); strict
  // improvement keeps the earliest, i.e. the smallest eta then mu.
  OklHyper best{0, 0, 0, kInf};
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (scores[i] < best.score)
      best = {cells[i].eta, cells[i].mu, cells[i].sigma2, scores[i]};
  }
  if (!std::isfinite(best.score))
    throw std::runtime_error("random-feature grid search: every candidate diverged");
  return best;
}

namespace {

std::vector<int> pretrain_mask(int n, double fraction, std::uint64_t seed, std::uint64_t salt) {
  int count = std::max(1, static_cast<int>(std::lround(fraction * n)));
  std::vector<int> all(n);
  std::iota(all.begin(), all.end(), 0);
  std::vector<int> mask;
  std::mt19937_64 rng = make_rng(seed, salt);
  std::sample(all.begin(), all.end(), std::back_inserter(mask), count, rng);
  return mask;
}

}  // namespace

double it1_mean_rnmse(const SyntheticRealization& real, double ridge, int sets,
                      FilterCoefficients* first_filter) {
  const SyntheticStream& s = real.stream;
  double total = 0.0;
  for (int j = 0; j < sets; ++j) {
    std::vector<int> mask = pretrain_mask(s.graph0.node_count(), 0.8, s.seed,
                                          0xA11000ULL + static_cast<std::uint64_t>(j));
    FilterCoefficients h = pretrain_transfer_filter(s.graph0, s.x0, mask, ridge,
                                                    static_cast<int>(real.replay.designs.cols()) - 1);
    if (j == 0 && first_filter) *first_filter = h;
    total += rnmse(real.replay.designs * h.taps, real.replay.targets);
  }
  return total / sets;
}

double tune_it1_ridge(const SyntheticRealization& real, const GridSpec& grid, int sets) {
  double best_ridge = grid.lo;
  double best_score = kInf;
  for (double ridge : log_grid(grid.lo, grid.hi, grid.per_decade)) {
    double score = it1_mean_rnmse(real, ridge, sets);
    if (score < best_score) {
      best_score = score;
      best_ridge = ridge;
    }
  }
  return best_ridge;
}

// ---------------------------------------------------------------------------
// IT2: kernel-smoothed transfer on the ratings task

namespace {

VisibleRatings starting_visible(const RatingsCorpus& corpus, const MovielensPlan& plan) {
  VisibleRatings v(corpus.n_items);
  for (int u : plan.starting_users) v.add_node(corpus.users[u]);
  return v;
}

struct KernelVariant {
  KernelKind kind;
  double sigma2;
};

// Kernel matrix over visible nodes from the incremental Gram block.
Eigen::MatrixXd kernel_from_gram(const Eigen::MatrixXd& gram, const Eigen::VectorXd& sq,
                                 const KernelVariant& kv) {
  if (kv.kind == KernelKind::Linear) return gram;
  Eigen::MatrixXd k(gram.rows(), gram.cols());
  for (Eigen::Index i = 0; i < gram.rows(); ++i)
    for (Eigen::Index j = 0; j < gram.cols(); ++j)
      k(i, j) = std::exp(-(sq[i] - 2.0 * gram(i, j) + sq[j]) / (2.0 * kv.sigma2));
  return k;
}

Eigen::VectorXd kernel_row(const VisibleRatings& visible, std::span<const Rating> query,
                           const KernelVariant& kv) {
  Eigen::VectorXd dots = visible.dots(query);
  if (kv.kind == KernelKind::Linear) return dots;
  double qq = 0.0;
  for (const Rating& r : query) qq += r.value * r.value;
  Eigen::VectorXd sq = visible.squared_norms();
  return ((-(sq.array() - 2.0 * dots.array() + qq) / (2.0 * kv.sigma2)).exp()).matrix();
}

}  // namespace

FilterCoefficients it2_filter(const RatingsCorpus& corpus, const MovielensRealization& real,
                              double ridge, std::uint64_t seed) {
  VisibleRatings initial = starting_visible(corpus, real.stream.plan());
  BatchProblem p = build_rating_pretrain_problem(initial, real.stream.graph0(),
                                                 real.stream.target_count(),
                                                 static_cast<int>(real.replay.designs.cols()) - 1,
                                                 seed);
  p.ridge = ridge;
  return batch_filter(p);
}

Eigen::VectorXd it2_predictions(const RatingsCorpus& corpus, const MovielensRealization& real,
                                KernelKind kernel, double sigma2, double lambda,
                                const FilterCoefficients& h) {
  Eigen::VectorXd preds = Eigen::VectorXd::Zero(real.replay.size());
  KernelVariant kv{kernel, sigma2};
  Eigen::VectorXd m;
  real.stream.run(
      [&](const MovielensStream::UserContext& ctx) {
        int n = ctx.visible.node_count();
        Eigen::MatrixXd k = kernel_from_gram(ctx.visible.gram().topLeftCorner(n, n),
                                             ctx.visible.squared_norms(), kv);
        k.diagonal().array() += lambda;
        Eigen::LDLT<Eigen::MatrixXd> ldlt(k);
        m = ldlt.solve(kernel_row(ctx.visible, ctx.known, kv));
      },
      [&](const MovielensStream::StepContext& ctx) {
        preds[ctx.step - 1] = m.dot(ctx.ax.columns() * h.taps);
      },
      /*with_gram=*/true);
  return preds;
}

It2Hyper tune_it2(const RatingsCorpus& corpus, const MovielensRealization& real,
                  const GridSpec& ridge_grid, std::span<const double> sigma2s,
                  int max_tuning_users, std::uint64_t seed) {
  std::vector<double> lambdas = log_grid(ridge_grid.lo, ridge_grid.hi, ridge_grid.per_decade);
  std::vector<double> ridges = lambdas;
  std::vector<KernelVariant> variants{{KernelKind::Linear, 1.0}};
  for (double s2 : sigma2s) variants.push_back({KernelKind::Gaussian, s2});

  // Pretrained filter per candidate ridge (shared across kernels/lambdas).
  VisibleRatings initial = starting_visible(corpus, real.stream.plan());
  BatchProblem pre = build_rating_pretrain_problem(initial, real.stream.graph0(),
                                                   real.stream.target_count(),
                                                   static_cast<int>(real.replay.designs.cols()) - 1,
                                                   seed);
  std::vector<FilterCoefficients> h_by_ridge;
  h_by_ridge.reserve(ridges.size());
  for (double r : ridges) {
    BatchProblem p = pre;
    p.ridge = r;
    h_by_ridge.push_back(batch_filter(p));
  }

  const std::size_t nv = variants.size(), nl = lambdas.size(), nr = ridges.size();
  std::vector<double> sse(nv * nl * nr, 0.0);
  double truth_energy = 0.0;
  std::vector<Eigen::MatrixXd> m_by_variant(nv);  // columns per lambda

  real.stream.run(
      [&](const MovielensStream::UserContext& ctx) {
        int n = ctx.visible.node_count();
        Eigen::VectorXd sq = ctx.visible.squared_norms();
        for (std::size_t v = 0; v < nv; ++v) {
          Eigen::MatrixXd k =
              kernel_from_gram(ctx.visible.gram().topLeftCorner(n, n), sq, variants[v]);
          Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(k);
          Eigen::VectorXd proj = eig.eigenvectors().transpose() *
                                 kernel_row(ctx.visible, ctx.known, variants[v]);
          m_by_variant[v].resize(n, static_cast<Eigen::Index>(nl));
          for (std::size_t l = 0; l < nl; ++l)
            m_by_variant[v].col(static_cast<Eigen::Index>(l)) =
                eig.eigenvectors() *
                (proj.array() / (eig.eigenvalues().array() + lambdas[l])).matrix();
        }
      },
      [&](const MovielensStream::StepContext& ctx) {
        truth_energy += ctx.truth * ctx.truth;
        for (std::size_t v = 0; v < nv; ++v) {
          // y = A_x^T m collapses each lambda's smoothing vector to tap space.
          Eigen::MatrixXd y = ctx.ax.columns().transpose() * m_by_variant[v];
          for (std::size_t l = 0; l < nl; ++l)
            for (std::size_t r = 0; r < nr; ++r) {
              double pred = y.col(static_cast<Eigen::Index>(l)).dot(h_by_ridge[r].taps);
              double e = pred - ctx.truth;
              sse[(v * nl + l) * nr + r] += e * e;
            }
        }
      },
      /*with_gram=*/true, max_tuning_users);

  It2Hyper best;
  best.score = kInf;
  for (std::size_t v = 0; v < nv; ++v)
    for (std::size_t l = 0; l < nl; ++l)
      for (std::size_t r = 0; r < nr; ++r) {
        double score = std::sqrt(sse[(v * nl + l) * nr + r] / truth_energy);
        if (score < best.score)
          best = {variants[v].kind, variants[v].sigma2, lambdas[l], ridges[r], score};
      }
  if (!std::isfinite(best.score)) throw std::runtime_error("IT2 grid search failed");
  return best;
}

std::pair<double, double> movielens_full_catalog_ad10(
    const MovielensRealization& real, std::span<const FilterCoefficients> arrival_filters,
    const FilterCoefficients& batch_filter) {
  if (arrival_filters.size() != real.stream.plan().stream.size())
    throw std::invalid_argument("one arrival filter per streamed user expected");
  const int n_items = real.stream.n_items();
  const int order = batch_filter.order();
  std::vector<std::vector<int>> online_lists, batch_lists;

  auto top10 = [&](const Eigen::VectorXd& scores) {
    std::vector<std::pair<double, int>> ranked(static_cast<std::size_t>(scores.size()));
    for (int i = 0; i < scores.size(); ++i) ranked[static_cast<std::size_t>(i)] = {scores[i], i};
    std::partial_sort(ranked.begin(), ranked.begin() + std::min<std::size_t>(10, ranked.size()),
                      ranked.end(), [](const auto& a, const auto& b) {
                        return a.first != b.first ? a.first > b.first : a.second < b.second;
                      });
    std::vector<int> list;
    for (std::size_t j = 0; j < ranked.size() && j < 10; ++j) list.push_back(ranked[j].second);
    return list;
  };

  real.stream.run(
      [&](const MovielensStream::UserContext& ctx) {
        // Score the whole catalog through the bilinear form: the tap-k
        // coefficient for item i is (A^T)^{k-1} a dotted with the item's
        // rating column, so K transpose shifts plus K posting sweeps cover
        // every item at once.
        Eigen::VectorXd u = ctx.attachment.dense();
        Eigen::MatrixXd coefs(n_items, order);
        for (int k = 1; k <= order; ++k) {
          coefs.col(k - 1) = ctx.visible.item_products(u);
          if (k < order) u = ctx.graph.shift_transpose(u);
        }
        const FilterCoefficients& h = arrival_filters[static_cast<std::size_t>(ctx.user_ordinal)];
        Eigen::VectorXd online_scores = coefs * h.taps.tail(order);
        Eigen::VectorXd batch_scores = coefs * batch_filter.taps.tail(order);
        online_lists.push_back(top10(online_scores));
        batch_lists.push_back(top10(batch_scores));
      },
      nullptr);
  return {ad_at_10(online_lists, n_items), ad_at_10(batch_lists, n_items)};
}

// ---------------------------------------------------------------------------
// Scenario drivers

namespace {

bool has_method(const std::vector<std::string>& methods, const std::string& m) {
  return std::find(methods.begin(), methods.end(), m) != methods.end();
}

MethodScore summarize(std::vector<double> values) {
  MethodScore s;
  s.per_realization = std::move(values);
  if (s.per_realization.empty()) return s;
  s.mean = std::accumulate(s.per_realization.begin(), s.per_realization.end(), 0.0) /
           s.per_realization.size();
  s.sdev = sample_sdev(s.per_realization);
  return s;
}

std::vector<StepRecord> records_from_predictions(const Eigen::VectorXd& preds,
                                                 const Eigen::VectorXd& truths) {
  std::vector<StepRecord> recs(static_cast<std::size_t>(preds.size()));
  for (Eigen::Index t = 0; t < preds.size(); ++t) {
    double e = preds[t] - truths[t];
    recs[static_cast<std::size_t>(t)] = {preds[t], truths[t], 0.5 * e * e, 0.0};
  }
  return recs;
}

std::string hash_hex(std::uint64_t h) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

}  // namespace

namespace {

std::vector<std::string> supported_methods(const std::vector<std::string>& requested,
                                           const std::vector<std::string>& supported) {
  std::vector<std::string> kept;
  for (const std::string& m : requested) {
    if (std::find(supported.begin(), supported.end(), m) != supported.end())
      kept.push_back(m);
    else
      std::fprintf(stderr, "warning: method '%s' is not available in this scenario\n",
                   m.c_str());
  }
  return kept;
}

}  // namespace

ScenarioResult run_synthetic_scenario(const SyntheticScenarioConfig& cfg) {
  ScenarioResult result;
  result.scenario = to_string(cfg.proto.mode);
  result.methods = supported_methods(cfg.methods, {"prop", "bs", "okl", "it1", "wknn"});
  result.realizations = cfg.realizations;
  const int order = cfg.proto.order;
  const int fmap_dim = cfg.proto.starting_nodes + cfg.proto.horizon;

  // Hyperparameter search on a held-out seed, frozen for the scored runs.
  SyntheticConfig tune_proto = cfg.proto;
  tune_proto.seed = cfg.tuning_seed;
  SyntheticRealization tuning = materialize_synthetic(tune_proto);

  OnlineHyper prop_h{0, 0, 0};
  if (has_method(result.methods, "prop")) {
    prop_h = tune_online(tuning.replay, cfg.online_grid, order);
    result.hypers["prop"] = {prop_h.eta, prop_h.mu, 0, 0, 0, "", prop_h.score};
  }
  double bs_ridge = tune_batch_ridge(tuning.replay, cfg.ridge_grid);
  if (has_method(result.methods, "bs"))
    result.hypers["bs"] = {0, 0, bs_ridge, 0, 0, "",
                           rnmse(batch_predictions(tuning.replay, bs_ridge), tuning.replay.targets)};

  OklHyper okl_h{0, 0, 0, 0};
  std::optional<RandomFeatureMap> okl_map;
  if (has_method(result.methods, "okl")) {
    std::vector<std::pair<double, Eigen::MatrixXd>> tables;
    for (std::size_t i = 0; i < cfg.okl_sigma2.size(); ++i) {
      RandomFeatureMap fmap(fmap_dim, cfg.okl_features, cfg.okl_sigma2[i],
                            mix_seed(cfg.okl_map_seed, i));
      tables.emplace_back(cfg.okl_sigma2[i],
                          okl_feature_table(fmap, tuning.stream.events,
                                            tuning.stream.raw_scale()));
    }
    okl_h = tune_okl(tables, {}, tuning.replay.targets, cfg.online_grid, cfg.threads);
    result.hypers["okl"] = {okl_h.eta, okl_h.mu, 0, okl_h.sigma2, 0, "", okl_h.score};
    for (std::size_t i = 0; i < cfg.okl_sigma2.size(); ++i)
      if (cfg.okl_sigma2[i] == okl_h.sigma2)
        okl_map.emplace(fmap_dim, cfg.okl_features, okl_h.sigma2, mix_seed(cfg.okl_map_seed, i));
  }

  double it1_ridge = 0.0;
  if (has_method(result.methods, "it1")) {
    it1_ridge = tune_it1_ridge(tuning, cfg.ridge_grid, cfg.it1_sets);
    result.hypers["it1"] = {0, 0, it1_ridge, 0, 0, "",
                            it1_mean_rnmse(tuning, it1_ridge, cfg.it1_sets)};
  }

  // Scored realizations, identical streams for every method.
  struct PerSeed {
    bool ok = false;
    std::string error;
    std::map<std::string, double> rnmse;
    double regret = 0.0;
    std::uint64_t hash = 0;
    double step_seconds = 0.0;
    std::vector<std::pair<long, FrequencyResponse>> freq;
    FrequencyResponse batch_freq;
    std::map<std::string, std::vector<StepRecord>> traces;
  };
  std::vector<PerSeed> seeds(cfg.realizations);

  parallel_for(cfg.realizations, cfg.threads, [&](int i) {
    PerSeed& out = seeds[static_cast<std::size_t>(i)];
    try {
      SyntheticConfig proto = cfg.proto;
      proto.seed = cfg.base_seed + static_cast<std::uint64_t>(i) + 1;
      SyntheticRealization real = materialize_synthetic(proto);
      out.hash = real.stream_hash;
      const bool first = (i == 0);

      FilterCoefficients u_bs;
      Eigen::VectorXd bs_preds = batch_predictions(real.replay, bs_ridge, &u_bs);
      if (has_method(result.methods, "bs")) {
        out.rnmse["bs"] = rnmse(bs_preds, real.replay.targets);
        if (first) out.traces["bs"] = records_from_predictions(bs_preds, real.replay.targets);
      }

      if (has_method(result.methods, "prop")) {
        OnlineLearnerConfig ocfg;
        ocfg.eta = prop_h.eta;
        ocfg.mu = prop_h.mu;
        ocfg.order = order;
        std::vector<std::pair<long, FilterCoefficients>> snaps;
        auto t0 = std::chrono::steady_clock::now();
        OnlineLearner learner = run_on_replay(real.replay, ocfg,
                                              first ? cfg.snapshot_interval : 0,
                                              first ? &snaps : nullptr);
        auto t1 = std::chrono::steady_clock::now();
        out.step_seconds = std::chrono::duration<double>(t1 - t0).count() /
                           std::max<Eigen::Index>(1, real.replay.size());
        Eigen::VectorXd preds(real.replay.size());
        for (Eigen::Index t = 0; t < real.replay.size(); ++t)
          preds[t] = learner.history()[static_cast<std::size_t>(t)].prediction;
        out.rnmse["prop"] = rnmse(preds, real.replay.targets);
        std::vector<double> losses = learner.losses();
        out.regret = static_regret(losses, u_bs, real.replay, prop_h.mu, prop_h.eta,
                                   2.0 * u_bs.taps.norm())
                         .normalized_regret;
        if (first) {
          out.traces["prop"] = learner.history();
          for (const auto& [step, taps] : snaps)
            out.freq.emplace_back(step, frequency_response(taps));
          out.batch_freq = frequency_response(u_bs);
        }
      }

      if (has_method(result.methods, "okl")) {
        Eigen::MatrixXd z =
            okl_feature_table(*okl_map, real.stream.events, real.stream.raw_scale());
        Eigen::VectorXd preds;
        try {
          preds = okl_predictions(z, {}, real.replay.targets, {okl_h.eta, okl_h.mu});
          out.rnmse["okl"] = rnmse(preds, real.replay.targets);
        } catch (const DivergenceError&) {
          out.rnmse["okl"] = std::numeric_limits<double>::quiet_NaN();
        }
        if (first && preds.size() > 0)
          out.traces["okl"] = records_from_predictions(preds, real.replay.targets);
      }

      if (has_method(result.methods, "it1")) {
        FilterCoefficients h1;
        out.rnmse["it1"] = it1_mean_rnmse(real, it1_ridge, cfg.it1_sets, &h1);
        if (first)
          out.traces["it1"] =
              records_from_predictions(real.replay.designs * h1.taps, real.replay.targets);
      }

      if (has_method(result.methods, "wknn")) {
        out.rnmse["wknn"] = rnmse(real.wknn, real.replay.targets);
        if (first) out.traces["wknn"] = records_from_predictions(real.wknn, real.replay.targets);
      }
      out.ok = true;
    } catch (const std::exception& e) {
      out.ok = false;
      out.error = e.what();
    }
  });

  int ok_count = 0;
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    if (seeds[i].ok)
      ++ok_count;
    else
      std::fprintf(stderr, "warning: realization %zu excluded: %s\n", i + 1,
                   seeds[i].error.c_str());
  }
  result.excluded = cfg.realizations - ok_count;
  if (result.excluded * 10 > cfg.realizations)
    throw std::runtime_error("more than 10% of realizations failed; first error: " +
                             [&] {
                               for (const PerSeed& s : seeds)
                                 if (!s.ok) return s.error;
                               return std::string();
                             }());

  for (const std::string& m : result.methods) {
    std::vector<double> vals;
    for (const PerSeed& s : seeds)
      if (s.ok && s.rnmse.count(m)) vals.push_back(s.rnmse.at(m));
    result.rnmse[m] = summarize(std::move(vals));
  }
  {
    std::vector<double> regrets;
    for (const PerSeed& s : seeds)
      if (s.ok && has_method(result.methods, "prop")) regrets.push_back(s.regret);
    result.normalized_regret = summarize(std::move(regrets));
  }
  if (!seeds.empty() && seeds.front().ok) {
    result.stream_hash = hash_hex(seeds.front().hash);
    result.frequency = seeds.front().freq;
    result.batch_frequency = seeds.front().batch_freq;
    result.traces = seeds.front().traces;
    result.mean_step_seconds = seeds.front().step_seconds;
  }
  return result;
}

ScenarioResult run_movielens_scenario(const MovielensScenarioConfig& cfg) {
  RatingsCorpus corpus = load_ratings(cfg.data_path);
  ScenarioResult result;
  result.scenario = "movielens";
  result.methods = supported_methods(cfg.methods, {"prop", "bs", "okl", "it2", "wknn"});
  result.realizations = cfg.realizations;
  const int order = cfg.proto.order;

  MovielensRealization tuning = materialize_movielens(corpus, cfg.proto, cfg.tuning_seed);

  OnlineHyper prop_h{0, 0, 0};
  if (has_method(result.methods, "prop")) {
    prop_h = tune_online(tuning.replay, cfg.online_grid, order, tuning.step_user);
    result.hypers["prop"] = {prop_h.eta, prop_h.mu, 0, 0, 0, "", prop_h.score};
  }
  double bs_ridge = tune_batch_ridge(tuning.replay, cfg.ridge_grid);
  if (has_method(result.methods, "bs"))
    result.hypers["bs"] = {0, 0, bs_ridge, 0, 0, "",
                           rnmse(batch_predictions(tuning.replay, bs_ridge), tuning.replay.targets)};

  OklHyper okl_h{0, 0, 0, 0};
  std::optional<RandomFeatureMap> okl_map;
  if (has_method(result.methods, "okl")) {
    // The kernel learner consumes the raw similarity profile of each user.
    const double raw_scale = tuning.stream.raw_radius();
    std::vector<std::pair<double, Eigen::MatrixXd>> tables;
    for (std::size_t i = 0; i < cfg.okl_sigma2.size(); ++i) {
      RandomFeatureMap fmap(corpus.n_users(), cfg.okl_features, cfg.okl_sigma2[i],
                            mix_seed(cfg.okl_map_seed, i));
      tables.emplace_back(cfg.okl_sigma2[i],
                          okl_user_features(fmap, tuning.attachments, raw_scale));
    }
    okl_h = tune_okl(tables, tuning.step_user, tuning.replay.targets, cfg.online_grid,
                     cfg.threads);
    result.hypers["okl"] = {okl_h.eta, okl_h.mu, 0, okl_h.sigma2, 0, "", okl_h.score};
    for (std::size_t i = 0; i < cfg.okl_sigma2.size(); ++i)
      if (cfg.okl_sigma2[i] == okl_h.sigma2)
        okl_map.emplace(corpus.n_users(), cfg.okl_features, okl_h.sigma2,
                        mix_seed(cfg.okl_map_seed, i));
  }

  It2Hyper it2_h;
  if (has_method(result.methods, "it2")) {
    it2_h = tune_it2(corpus, tuning, cfg.ridge_grid, cfg.it2_sigma2, cfg.it2_tuning_users,
                     cfg.tuning_seed);
    result.hypers["it2"] = {0,           0, it2_h.ridge, it2_h.sigma2, it2_h.lambda,
                            it2_h.kernel == KernelKind::Linear ? "linear" : "gaussian",
                            it2_h.score};
  }

  struct PerSeed {
    bool ok = false;
    std::string error;
    std::map<std::string, double> rnmse;
    double regret = 0.0;
    double ad10_prop = 0.0, ad10_bs = 0.0;
    std::uint64_t hash = 0;
    double step_seconds = 0.0;
    std::vector<std::pair<long, FrequencyResponse>> freq;
    FrequencyResponse batch_freq;
    std::map<std::string, std::vector<StepRecord>> traces;
  };
  std::vector<PerSeed> seeds(cfg.realizations);

  parallel_for(cfg.realizations, cfg.threads, [&](int i) {
    PerSeed& out = seeds[static_cast<std::size_t>(i)];
    try {
      std::uint64_t seed = cfg.base_seed + static_cast<std::uint64_t>(i) + 1;
      MovielensRealization real = materialize_movielens(corpus, cfg.proto, seed);
      out.hash = real.stream_hash;
      const bool first = (i == 0);

      FilterCoefficients u_bs;
      Eigen::VectorXd bs_preds = batch_predictions(real.replay, bs_ridge, &u_bs);
      if (has_method(result.methods, "bs")) {
        out.rnmse["bs"] = rnmse(bs_preds, real.replay.targets);
        if (first) out.traces["bs"] = records_from_predictions(bs_preds, real.replay.targets);
      }

      Eigen::VectorXd prop_preds;
      if (has_method(result.methods, "prop")) {
        OnlineLearnerConfig ocfg;
        ocfg.eta = prop_h.eta;
        ocfg.mu = prop_h.mu;
        ocfg.order = order;
        auto t0 = std::chrono::steady_clock::now();
        BlockedRunResult run = run_on_replay_blocked(real.replay, real.step_user, ocfg,
                                                     first ? cfg.snapshot_interval : 0);
        auto t1 = std::chrono::steady_clock::now();
        out.step_seconds = std::chrono::duration<double>(t1 - t0).count() /
                           std::max<Eigen::Index>(1, real.replay.size());
        prop_preds = run.predictions;
        out.rnmse["prop"] = rnmse(prop_preds, real.replay.targets);
        std::vector<double> losses = run.learner.losses();
        out.regret = static_regret(losses, u_bs, real.replay, prop_h.mu, prop_h.eta,
                                   2.0 * u_bs.taps.norm())
                         .normalized_regret;
        if (first) {
          out.traces["prop"] = run.learner.history();
          for (const auto& [step, taps] : run.snapshots)
            out.freq.emplace_back(step, frequency_response(taps));
          out.batch_freq = frequency_response(u_bs);
        }
        // Aggregated diversity of top-10 catalog recommendations, online
        // filter at each arrival vs the fixed batch filter.
        auto [ad_prop, ad_bs] = movielens_full_catalog_ad10(real, run.block_filters, u_bs);
        out.ad10_prop = ad_prop;
        out.ad10_bs = ad_bs;
      }

      if (has_method(result.methods, "okl")) {
        Eigen::MatrixXd z =
            okl_user_features(*okl_map, real.attachments, real.stream.raw_radius());
        try {
          Eigen::VectorXd preds =
              okl_predictions(z, real.step_user, real.replay.targets, {okl_h.eta, okl_h.mu});
          out.rnmse["okl"] = rnmse(preds, real.replay.targets);
          if (first) out.traces["okl"] = records_from_predictions(preds, real.replay.targets);
        } catch (const DivergenceError&) {
          out.rnmse["okl"] = std::numeric_limits<double>::quiet_NaN();
        }
      }

      if (has_method(result.methods, "it2")) {
        FilterCoefficients h2 = it2_filter(corpus, real, it2_h.ridge, seed);
        Eigen::VectorXd preds =
            it2_predictions(corpus, real, it2_h.kernel, it2_h.sigma2, it2_h.lambda, h2);
        out.rnmse["it2"] = rnmse(preds, real.replay.targets);
        if (first) out.traces["it2"] = records_from_predictions(preds, real.replay.targets);
      }

      if (has_method(result.methods, "wknn")) {
        out.rnmse["wknn"] = rnmse(real.wknn, real.replay.targets);
        if (first) out.traces["wknn"] = records_from_predictions(real.wknn, real.replay.targets);
      }
      out.ok = true;
    } catch (const std::exception& e) {
      out.ok = false;
      out.error = e.what();
    }
  });

  int ok_count = 0;
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    if (seeds[i].ok)
      ++ok_count;
    else
      std::fprintf(stderr, "warning: realization %zu excluded: %s\n", i + 1,
                   seeds[i].error.c_str());
  }
  result.excluded = cfg.realizations - ok_count;
  if (result.excluded * 10 > cfg.realizations)
    throw std::runtime_error("more than 10% of realizations failed; first error: " +
                             [&] {
                               for (const PerSeed& s : seeds)
                                 if (!s.ok) return s.error;
                               return std::string();
                             }());

  for (const std::string& m : result.methods) {
    std::vector<double> vals;
    for (const PerSeed& s : seeds)
      if (s.ok && s.rnmse.count(m)) vals.push_back(s.rnmse.at(m));
    result.rnmse[m] = summarize(std::move(vals));
  }
  {
    std::vector<double> regrets, adp, adb;
    for (const PerSeed& s : seeds) {
      if (!s.ok) continue;
      if (has_method(result.methods, "prop")) {
        regrets.push_back(s.regret);
        adp.push_back(s.ad10_prop);
        adb.push_back(s.ad10_bs);
      }
    }
    result.normalized_regret = summarize(std::move(regrets));
    result.ad10_prop = summarize(std::move(adp));
    result.ad10_bs = summarize(std::move(adb));
  }
  if (!seeds.empty() && seeds.front().ok) {
    result.stream_hash = hash_hex(seeds.front().hash);
    result.frequency = seeds.front().freq;
    result.batch_frequency = seeds.front().batch_freq;
    result.traces = seeds.front().traces;
    result.mean_step_seconds = seeds.front().step_seconds;
    // Raw ids backing the per-method prediction CSVs.
    MovielensRealization first =
        materialize_movielens(corpus, cfg.proto, cfg.base_seed + 1);
    const MovielensPlan& plan = first.stream.plan();
    result.step_user_ids.reserve(first.step_user.size());
    result.step_item_ids.reserve(first.step_item.size());
    for (std::size_t t = 0; t < first.step_user.size(); ++t) {
      int dense_user = plan.stream[static_cast<std::size_t>(first.step_user[t])].user;
      result.step_user_ids.push_back(corpus.user_ids[static_cast<std::size_t>(dense_user)]);
      result.step_item_ids.push_back(
          corpus.item_ids[static_cast<std::size_t>(first.step_item[t])]);
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

nlohmann::json score_to_json(const MethodScore& s) {
  return {{"mean", s.mean}, {"sdev", s.sdev}, {"per_realization", s.per_realization}};
}

MethodScore score_from_json(const nlohmann::json& j) {
  MethodScore s;
  s.mean = j.at("mean").get<double>();
  s.sdev = j.at("sdev").get<double>();
  s.per_realization = j.at("per_realization").get<std::vector<double>>();
  return s;
}

nlohmann::json hyper_to_json(const HyperChoice& h) {
  return {{"eta", h.eta},       {"mu", h.mu},         {"ridge", h.ridge},
          {"sigma2", h.sigma2}, {"lambda", h.lambda}, {"kernel", h.kernel},
          {"tuning_score", h.tuning_score}};
}

HyperChoice hyper_from_json(const nlohmann::json& j) {
  HyperChoice h;
  h.eta = j.at("eta").get<double>();
  h.mu = j.at("mu").get<double>();
  h.ridge = j.at("ridge").get<double>();
  h.sigma2 = j.at("sigma2").get<double>();
  h.lambda = j.at("lambda").get<double>();
  h.kernel = j.at("kernel").get<std::string>();
  h.tuning_score = j.at("tuning_score").get<double>();
  return h;
}

}  // namespace

nlohmann::json to_json(const ScenarioResult& r) {
  nlohmann::json j;
  j["scenario"] = r.scenario;
  j["methods"] = r.methods;
  for (const auto& [m, s] : r.rnmse) j["rnmse"][m] = score_to_json(s);
  for (const auto& [m, h] : r.hypers) j["hypers"][m] = hyper_to_json(h);
  j["normalized_regret"] = score_to_json(r.normalized_regret);
  j["ad_at_10"] = {{"prop", score_to_json(r.ad10_prop)}, {"bs", score_to_json(r.ad10_bs)}};
  j["realizations"] = r.realizations;
  j["excluded"] = r.excluded;
  j["stream_hash"] = r.stream_hash;
  j["mean_step_seconds"] = r.mean_step_seconds;
  return j;
}

ScenarioResult scenario_result_from_json(const nlohmann::json& j) {
  ScenarioResult r;
  r.scenario = j.at("scenario").get<std::string>();
  r.methods = j.at("methods").get<std::vector<std::string>>();
  if (j.contains("rnmse"))
    for (const auto& [m, s] : j.at("rnmse").items()) r.rnmse[m] = score_from_json(s);
  if (j.contains("hypers"))
    for (const auto& [m, h] : j.at("hypers").items()) r.hypers[m] = hyper_from_json(h);
  r.normalized_regret = score_from_json(j.at("normalized_regret"));
  r.ad10_prop = score_from_json(j.at("ad_at_10").at("prop"));
  r.ad10_bs = score_from_json(j.at("ad_at_10").at("bs"));
  r.realizations = j.at("realizations").get<int>();
  r.excluded = j.at("excluded").get<int>();
  r.stream_hash = j.at("stream_hash").get<std::string>();
  r.mean_step_seconds = j.at("mean_step_seconds").get<double>();
  return r;
}

void emit_results(const ScenarioResult& r, const std::string& out_dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw std::runtime_error("cannot create output directory: " + out_dir);

  {
    std::ofstream f(out_dir + "/metrics.json");
    if (!f) throw std::runtime_error("cannot write metrics.json");
    f << to_json(r).dump(2) << "\n";
  }
  {
    std::ofstream f(out_dir + "/summary.csv");
    f << "method,rnmse_mean,rnmse_sdev\n";
    f.precision(10);
    for (const std::string& m : r.methods) {
      auto it = r.rnmse.find(m);
      if (it == r.rnmse.end()) continue;
      f << m << "," << it->second.mean << "," << it->second.sdev << "\n";
    }
  }
  {
    std::ofstream f(out_dir + "/summary.txt");
    f << "scenario: " << r.scenario << "  (realizations: " << r.realizations
      << ", excluded: " << r.excluded << ")\n";
    f << std::left << std::setw(8) << "method" << std::right << std::setw(14) << "rnmse"
      << std::setw(14) << "sdev" << "\n";
    for (const std::string& m : r.methods) {
      auto it = r.rnmse.find(m);
      if (it == r.rnmse.end()) continue;
      f << std::left << std::setw(8) << m << std::right << std::setw(14) << std::setprecision(6)
        << std::fixed << it->second.mean << std::setw(14) << it->second.sdev << "\n";
    }
    f.unsetf(std::ios::fixed);
    if (!r.normalized_regret.per_realization.empty())
      f << "normalized regret (prop vs batch): " << r.normalized_regret.mean << "\n";
    if (!r.ad10_prop.per_realization.empty())
      f << "AD@10 prop: " << r.ad10_prop.mean << "  bs: " << r.ad10_bs.mean << "\n";
    f << "stream hash: " << r.stream_hash << "\n";
  }
  for (const auto& [method, records] : r.traces) {
    std::ofstream f(out_dir + "/trace_" + method + ".csv");
    write_trace_csv(f, method, records, true);
  }
  if (!r.step_user_ids.empty()) {
    for (const auto& [method, records] : r.traces) {
      if (records.size() != r.step_user_ids.size()) continue;
      std::ofstream f(out_dir + "/predictions_" + method + ".csv");
      f << "user,item,predicted,true\n";
      f.precision(17);
      for (std::size_t t = 0; t < records.size(); ++t)
        f << r.step_user_ids[t] << "," << r.step_item_ids[t] << "," << records[t].prediction
          << "," << records[t].truth << "\n";
    }
  }
  if (!r.frequency.empty()) {
    std::ofstream f(out_dir + "/frequency_online.csv");
    bool header = true;
    for (const auto& [step, fr] : r.frequency) {
      append_frequency_csv(f, fr, step, header);
      header = false;
    }
  }
  if (r.batch_frequency.grid.size() > 0) {
    std::ofstream f(out_dir + "/frequency_batch.csv");
    append_frequency_csv(f, r.batch_frequency, 0, true);
  }
}

}  // namespace egf
