#include "egf/movielens.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include "egf/rng.hpp"

namespace egf {

RatingsCorpus load_ratings(const std::string& path, int min_item_ratings) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open ratings file: " + path);

  struct RawRating {
    int user, item;
    double value;
  };
  std::vector<RawRating> raw;
  raw.reserve(100000);
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    long user = 0, item = 0, ts = 0;
    double value = 0.0;
    if (!(ls >> user >> item >> value >> ts))
      throw std::runtime_error(path + ": malformed rating at line " + std::to_string(lineno));
    raw.push_back({static_cast<int>(user), static_cast<int>(item), value});
  }
  if (raw.empty()) throw std::runtime_error(path + ": no ratings");

  std::map<int, long long> item_counts;
  for (const RawRating& r : raw) ++item_counts[r.item];

  RatingsCorpus corpus;
  corpus.raw_ratings = static_cast<long long>(raw.size());
  std::map<int, int> item_index;
  for (const auto& [item, count] : item_counts) {
    if (count >= min_item_ratings) {
      item_index[item] = static_cast<int>(corpus.item_ids.size());
      corpus.item_ids.push_back(item);
    }
  }
  corpus.n_items = static_cast<int>(corpus.item_ids.size());

  std::map<int, std::vector<Rating>> by_user;
  for (const RawRating& r : raw) {
    auto it = item_index.find(r.item);
    if (it == item_index.end()) continue;
    by_user[r.user].push_back({it->second, r.value});
  }
  for (auto& [user, ratings] : by_user) {
    std::sort(ratings.begin(), ratings.end(),
              [](const Rating& a, const Rating& b) { return a.item < b.item; });
    corpus.user_ids.push_back(user);
    corpus.n_ratings += static_cast<long long>(ratings.size());
    corpus.users.push_back(std::move(ratings));
  }
  return corpus;
}

double cosine_similarity(std::span<const Rating> u, std::span<const Rating> v) {
  double dot = 0.0, nu = 0.0, nv = 0.0;
  std::size_t i = 0, j = 0;
  while (i < u.size() && j < v.size()) {
    if (u[i].item < v[j].item) {
      nu += u[i].value * u[i].value;
      ++i;
    } else if (v[j].item < u[i].item) {
      nv += v[j].value * v[j].value;
      ++j;
    } else {
      dot += u[i].value * v[j].value;
      nu += u[i].value * u[i].value;
      nv += v[j].value * v[j].value;
      ++i;
      ++j;
    }
  }
  for (; i < u.size(); ++i) nu += u[i].value * u[i].value;
  for (; j < v.size(); ++j) nv += v[j].value * v[j].value;
  if (nu == 0.0 || nv == 0.0) return 0.0;
  return dot / (std::sqrt(nu) * std::sqrt(nv));
}

VisibleRatings::VisibleRatings(int n_items) : n_items_(n_items), postings_(n_items) {
  if (n_items < 0) throw std::invalid_argument("negative item count");
}

int VisibleRatings::add_node(std::vector<Rating> ratings) {
  int node = node_count();
  double sq = 0.0;
  for (const Rating& r : ratings) {
    if (r.item < 0 || r.item >= n_items_) throw std::invalid_argument("item index out of range");
    sq += r.value * r.value;
  }
  if (gram_enabled_) {
    if (gram_.rows() <= node) {
      Eigen::Index cap = std::max<Eigen::Index>(64, 2 * (gram_.rows() + 1));
      Eigen::MatrixXd bigger = Eigen::MatrixXd::Zero(cap, cap);
      bigger.topLeftCorner(gram_.rows(), gram_.cols()) = gram_;
      gram_.swap(bigger);
    }
    Eigen::VectorXd d = dots(ratings);  // against existing nodes only
    for (int j = 0; j < node; ++j) {
      gram_(node, j) = d[j];
      gram_(j, node) = d[j];
    }
    gram_(node, node) = sq;
  }
  for (const Rating& r : ratings) postings_[r.item].push_back({node, r.value});
  norms_.push_back(std::sqrt(sq));
  nodes_.push_back(std::move(ratings));
  return node;
}

GraphSignal VisibleRatings::item_signal(int item) const {
  if (item < 0 || item >= n_items_) throw std::invalid_argument("unknown item");
  GraphSignal x = GraphSignal::Zero(node_count());
  for (const auto& [node, value] : postings_[item]) x[node] = value;
  return x;
}

Eigen::VectorXd VisibleRatings::dots(std::span<const Rating> query) const {
  Eigen::VectorXd d = Eigen::VectorXd::Zero(node_count());
  for (const Rating& q : query) {
    if (q.item < 0 || q.item >= n_items_) throw std::invalid_argument("item index out of range");
    for (const auto& [node, value] : postings_[q.item]) d[node] += q.value * value;
  }
  return d;
}

Eigen::VectorXd VisibleRatings::item_products(const Eigen::VectorXd& node_weights) const {
  if (node_weights.size() != node_count())
    throw std::invalid_argument("weight vector does not match node count");
  Eigen::VectorXd out = Eigen::VectorXd::Zero(n_items_);
  for (int item = 0; item < n_items_; ++item)
    for (const auto& [node, value] : postings_[item]) out[item] += node_weights[node] * value;
  return out;
}

Eigen::VectorXd VisibleRatings::similarities(std::span<const Rating> query) const {
  Eigen::VectorXd d = dots(query);
  double qn = 0.0;
  for (const Rating& q : query) qn += q.value * q.value;
  qn = std::sqrt(qn);
  if (qn == 0.0) return Eigen::VectorXd::Zero(node_count());
  for (int i = 0; i < node_count(); ++i)
    d[i] = norms_[i] > 0.0 ? d[i] / (qn * norms_[i]) : 0.0;
  return d;
}

void VisibleRatings::enable_gram() {
  if (gram_enabled_) return;
  gram_enabled_ = true;
  gram_ = Eigen::MatrixXd::Zero(std::max(64, node_count()), std::max(64, node_count()));
  // Backfill for nodes added before enabling.
  for (int i = 0; i < node_count(); ++i) {
    Eigen::VectorXd d = dots(nodes_[i]);
    for (int j = 0; j <= i; ++j) {
      gram_(i, j) = d[j];
      gram_(j, i) = d[j];
    }
  }
}

Eigen::VectorXd VisibleRatings::squared_norms() const {
  Eigen::VectorXd sq(node_count());
  for (int i = 0; i < node_count(); ++i) sq[i] = norms_[i] * norms_[i];
  return sq;
}

KnnGraphResult build_knn_graph(const VisibleRatings& features, int k) {
  const int n = features.node_count();
  if (k < 1 || k >= n) throw std::invalid_argument("k out of range for kNN graph");
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
  std::vector<int> isolated;
  std::vector<std::pair<double, int>> order;
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd sims = features.similarities(features.node_ratings(i));
    order.clear();
    for (int j = 0; j < n; ++j)
      if (j != i && sims[j] > 0.0) order.push_back({sims[j], j});
    // Highest similarity first, ties to the lower index.
    std::sort(order.begin(), order.end(), [](const auto& x, const auto& y) {
      return x.first != y.first ? x.first > y.first : x.second < y.second;
    });
    if (order.empty()) isolated.push_back(i);
    int take = std::min<int>(k, static_cast<int>(order.size()));
    for (int t = 0; t < take; ++t) a(i, order[t].second) = order[t].first;
  }
  ExpandingGraph raw(a);
  SpectralRadiusEstimate rho = raw.spectral_radius();
  if (rho.value <= 0.0) throw std::runtime_error("kNN graph has zero spectral radius");
  ExpandingGraph g = raw;
  g.scale_weights(1.0 / rho.value);
  return {std::move(g), rho.value, std::move(isolated)};
}

MovielensPlan plan_stream(const RatingsCorpus& corpus, int starting_users,
                          std::uint64_t seed) {
  const int n = corpus.n_users();
  if (starting_users < 1 || starting_users >= n)
    throw std::invalid_argument("starting user count out of range");
  MovielensPlan plan;

  std::mt19937_64 rng = make_rng(seed, 0x3713ULL);
  std::vector<int> all(n);
  std::iota(all.begin(), all.end(), 0);
  std::sample(all.begin(), all.end(), std::back_inserter(plan.starting_users), starting_users,
              rng);
  std::set<int> starting(plan.starting_users.begin(), plan.starting_users.end());

  std::vector<int> online;
  for (int u = 0; u < n; ++u)
    if (!starting.count(u)) online.push_back(u);
  std::shuffle(online.begin(), online.end(), rng);

  for (int u : online) {
    const auto& ratings = corpus.users[u];
    if (ratings.size() < 2) {
      plan.excluded_users.push_back(u);
      continue;
    }
    std::vector<Rating> shuffled = ratings;
    std::mt19937_64 split_rng = make_rng(seed, 0x5917000ULL + static_cast<std::uint64_t>(u));
    std::shuffle(shuffled.begin(), shuffled.end(), split_rng);
    std::size_t known_count = (shuffled.size() + 1) / 2;
    UserSplit split;
    split.user = u;
    split.known.assign(shuffled.begin(), shuffled.begin() + known_count);
    split.targets.assign(shuffled.begin() + known_count, shuffled.end());
    auto by_item = [](const Rating& a, const Rating& b) { return a.item < b.item; };
    std::sort(split.known.begin(), split.known.end(), by_item);
    std::sort(split.targets.begin(), split.targets.end(), by_item);
    plan.target_count += static_cast<long long>(split.targets.size());
    plan.stream.push_back(std::move(split));
  }
  return plan;
}

MovielensStream::MovielensStream(const RatingsCorpus& corpus, const MovielensConfig& cfg,
                                 std::uint64_t seed)
    : corpus_(&corpus), cfg_(cfg), plan_(plan_stream(corpus, cfg.starting_users, seed)),
      seed_(seed) {
  VisibleRatings initial(corpus.n_items);
  for (int u : plan_.starting_users) initial.add_node(corpus.users[u]);
  KnnGraphResult knn = build_knn_graph(initial, cfg_.knn);
  graph0_ = std::move(knn.graph);
  raw_radius_ = knn.raw_radius;
}

void MovielensStream::run(const UserFn& on_user, const StepFn& on_step, bool with_gram,
                          int max_users) const {
  VisibleRatings visible(corpus_->n_items);
  if (with_gram) visible.enable_gram();
  for (int u : plan_.starting_users) visible.add_node(corpus_->users[u]);

  ExpandingGraph g = graph0_;
  long step = 0;
  std::size_t user_limit =
      max_users < 0 ? plan_.stream.size()
                    : std::min<std::size_t>(plan_.stream.size(), static_cast<std::size_t>(max_users));
  for (std::size_t ord = 0; ord < user_limit; ++ord) {
    const UserSplit& split = plan_.stream[ord];

    // Attachment: top-k cosine neighbors among current users, similarities
    // computed from the known half, weights on the normalized graph scale.
    Eigen::VectorXd sims = visible.similarities(split.known);
    std::vector<std::pair<double, int>> order;
    for (int j = 0; j < visible.node_count(); ++j)
      if (sims[j] > 0.0) order.push_back({sims[j], j});
    std::sort(order.begin(), order.end(), [](const auto& x, const auto& y) {
      return x.first != y.first ? x.first > y.first : x.second < y.second;
    });
    int take = std::min<int>(cfg_.knn, static_cast<int>(order.size()));
    std::vector<InEdge> entries;
    entries.reserve(take);
    for (int t = 0; t < take; ++t)
      entries.push_back({order[t].second, order[t].first / raw_radius_});
    AttachmentVector a(g.node_count(), std::move(entries));

    if (on_user) on_user({static_cast<int>(ord), a, split.known, visible, g, g.node_count()});

    for (const Rating& target : split.targets) {
      ++step;
      GraphSignal x_item = visible.item_signal(target.item);
      ShiftedSignalMatrix ax(g, x_item, cfg_.order);
      Eigen::RowVectorXd row = design_row(a, ax);
      double wknn = a.connected() ? wknn_predict(a, x_item) : 0.0;
      if (on_step)
        on_step({step, static_cast<int>(ord), target.item, target.value, a, ax, row, wknn});
    }

    g.attach(a);
    // Both halves become visible once the user is processed.
    std::vector<Rating> full = corpus_->users[split.user];
    visible.add_node(std::move(full));
  }
}

BatchProblem build_rating_pretrain_problem(const VisibleRatings& initial,
                                           const ExpandingGraph& g0, long long sample_count,
                                           int order, std::uint64_t seed) {
  struct Entry {
    int node, item;
    double value;
  };
  std::vector<Entry> entries;
  for (int node = 0; node < initial.node_count(); ++node)
    for (const Rating& r : initial.node_ratings(node)) entries.push_back({node, r.item, r.value});
  if (entries.empty()) throw std::invalid_argument("no ratings to pretrain on");

  std::mt19937_64 rng = make_rng(seed, 0x9127ULL);
  std::vector<Entry> chosen;
  if (sample_count >= static_cast<long long>(entries.size())) {
    chosen = std::move(entries);
  } else {
    std::sample(entries.begin(), entries.end(), std::back_inserter(chosen),
                static_cast<std::size_t>(sample_count), rng);
  }

  BatchProblem p;
  p.designs.resize(static_cast<Eigen::Index>(chosen.size()), order + 1);
  p.targets.resize(static_cast<Eigen::Index>(chosen.size()));
  for (std::size_t r = 0; r < chosen.size(); ++r) {
    GraphSignal x = initial.item_signal(chosen[r].item);
    x[chosen[r].node] = 0.0;  // the user's own rating must not enter the input
    ShiftedSignalMatrix ax(g0, x, order);
    AttachmentVector a(g0.node_count(), g0.in_edges(chosen[r].node));
    p.designs.row(static_cast<Eigen::Index>(r)) = design_row(a, ax);
    p.targets[static_cast<Eigen::Index>(r)] = chosen[r].value;
  }
  return p;
}

double ad_at_10(const std::vector<std::vector<int>>& top_lists, int n_items) {
  if (n_items < 1) throw std::invalid_argument("item count must be positive");
  std::set<int> seen;
  for (const auto& list : top_lists) {
    if (list.size() > 10) throw std::invalid_argument("top list longer than 10");
    seen.insert(list.begin(), list.end());
  }
  return static_cast<double>(seen.size()) / static_cast<double>(n_items);
}

}  // namespace egf
