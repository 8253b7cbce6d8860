#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "egf/baselines.hpp"
#include "egf/filter.hpp"
#include "egf/graph.hpp"

namespace egf {

struct Rating {
  int item;  // dense index after filtering
  double value;
};

struct RatingsCorpus {
  std::vector<std::vector<Rating>> users;  // per dense user id, sorted by item
  std::vector<int> user_ids;               // dense -> raw
  std::vector<int> item_ids;               // dense -> raw
  int n_items = 0;
  long long n_ratings = 0;   // after item filtering
  long long raw_ratings = 0; // as read
  int n_users() const { return static_cast<int>(users.size()); }
};

// Tab-separated `user item rating timestamp` lines; items with fewer than
// min_item_ratings ratings are dropped and indices densified.
RatingsCorpus load_ratings(const std::string& path, int min_item_ratings = 10);

// Cosine of two sparse rating vectors (sorted by item, zeros elsewhere);
// 0 when either norm is 0.
double cosine_similarity(std::span<const Rating> u, std::span<const Rating> v);

// Ratings visible to the online protocol: per-node full vectors plus
// per-item postings, appended as users are revealed.
class VisibleRatings {
 public:
  explicit VisibleRatings(int n_items);

  int add_node(std::vector<Rating> ratings);  // returns the node index
  int node_count() const { return static_cast<int>(nodes_.size()); }
  int n_items() const { return n_items_; }

  const std::vector<Rating>& node_ratings(int node) const { return nodes_.at(node); }
  double node_norm(int node) const { return norms_.at(node); }

  // Ratings of one item over current nodes; unrated entries are 0.
  GraphSignal item_signal(int item) const;

  // Cosine similarity of a query vector against every current node.
  Eigen::VectorXd similarities(std::span<const Rating> query) const;
  // Plain dot products (kernel building block).
  Eigen::VectorXd dots(std::span<const Rating> query) const;
  // Per-item weighted rating sums sum_node w[node] * rating(node, item);
  // the item-major dual of dots.
  Eigen::VectorXd item_products(const Eigen::VectorXd& node_weights) const;

  // Optional incremental Gram matrix of node rating vectors (IT2 kernels).
  void enable_gram();
  const Eigen::MatrixXd& gram() const { return gram_; }
  Eigen::VectorXd squared_norms() const;

 private:
  int n_items_;
  std::vector<std::vector<Rating>> nodes_;
  std::vector<double> norms_;
  std::vector<std::vector<std::pair<int, double>>> postings_;  // item -> (node, value)
  bool gram_enabled_ = false;
  Eigen::MatrixXd gram_;
};

struct KnnGraphResult {
  ExpandingGraph graph;        // normalized
  double raw_radius = 0.0;     // spectral radius before normalization
  std::vector<int> isolated;   // nodes with no positive-similarity neighbor
};

// Directed k-nearest-neighbor graph: row i holds the k most similar other
// nodes (cosine over rating vectors) as in-edges, ties broken by lower index.
KnnGraphResult build_knn_graph(const VisibleRatings& features, int k);

struct UserSplit {
  int user;                     // dense corpus id
  std::vector<Rating> known;    // builds the attachment
  std::vector<Rating> targets;  // predicted, revealed one step at a time
};

struct MovielensPlan {
  std::vector<int> starting_users;  // dense ids in graph-node order
  std::vector<UserSplit> stream;    // arrival order
  std::vector<int> excluded_users;  // fewer than 2 ratings, cannot split
  long long target_count = 0;
};

MovielensPlan plan_stream(const RatingsCorpus& corpus, int starting_users,
                          std::uint64_t seed);

struct MovielensConfig {
  int starting_users = 500;
  int knn = 15;
  int order = 5;
};

// One realization of the collaborative-filtering protocol: a seeded starting
// graph plus a deterministic walk over incoming users and their held-out
// ratings. Each walk rebuilds the same state, so method passes can be run
// independently and still see identical streams.
class MovielensStream {
 public:
  MovielensStream(const RatingsCorpus& corpus, const MovielensConfig& cfg,
                  std::uint64_t seed);

  const MovielensPlan& plan() const { return plan_; }
  const ExpandingGraph& graph0() const { return graph0_; }
  double raw_radius() const { return raw_radius_; }
  int n_items() const { return corpus_->n_items; }
  long long target_count() const { return plan_.target_count; }
  std::uint64_t seed() const { return seed_; }
  const RatingsCorpus& corpus() const { return *corpus_; }

  struct UserContext {
    int user_ordinal;  // 0-based arrival index
    const AttachmentVector& attachment;
    const std::vector<Rating>& known;
    const VisibleRatings& visible;   // state before this user joins
    const ExpandingGraph& graph;     // likewise
    int node_count;
  };
  struct StepContext {
    long step;  // 1-based over all target ratings
    int user_ordinal;
    int item;
    double truth;
    const AttachmentVector& attachment;
    const ShiftedSignalMatrix& ax;
    const Eigen::RowVectorXd& design;
    double wknn;
  };
  using UserFn = std::function<void(const UserContext&)>;
  using StepFn = std::function<void(const StepContext&)>;

  // on_user fires before the user's targets; with_gram maintains the Gram
  // matrix of visible rating vectors for kernel baselines. max_users > 0
  // truncates the walk (hyperparameter search on a stream prefix).
  void run(const UserFn& on_user, const StepFn& on_step, bool with_gram = false,
           int max_users = -1) const;

 private:
  const RatingsCorpus* corpus_;
  MovielensConfig cfg_;
  MovielensPlan plan_;
  ExpandingGraph graph0_;
  double raw_radius_ = 0.0;
  std::uint64_t seed_ = 0;
};

// Ridge problem for pretraining a filter on the starting graph's ratings:
// sampled (user, item) pairs in deployment geometry, with the target user's
// own rating zeroed out of the item signal. The ridge field is left 0 for the
// caller to set.
BatchProblem build_rating_pretrain_problem(const VisibleRatings& initial,
                                           const ExpandingGraph& g0, long long sample_count,
                                           int order, std::uint64_t seed);

// Aggregated diversity: |union of listed items| / n_items.
double ad_at_10(const std::vector<std::vector<int>>& top_lists, int n_items);

}  // namespace egf
