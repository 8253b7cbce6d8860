#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "egf/experiments.hpp"
#include "egf/movielens.hpp"
#include "egf/rng.hpp"

using namespace egf;

namespace {

std::string write_temp(const std::string& name, const std::string& content) {
  std::string path = (std::filesystem::temp_directory_path() / name).string();
  std::ofstream f(path);
  f << content;
  return path;
}

// Small synthetic corpus: `pattern[u]` lists (item, value) pairs.
RatingsCorpus toy_corpus(const std::vector<std::vector<Rating>>& pattern, int n_items) {
  RatingsCorpus c;
  c.users = pattern;
  c.n_items = n_items;
  for (int u = 0; u < static_cast<int>(pattern.size()); ++u) {
    c.user_ids.push_back(u + 1);
    c.n_ratings += static_cast<long long>(pattern[u].size());
  }
  for (int i = 0; i < n_items; ++i) c.item_ids.push_back(i + 1);
  c.raw_ratings = c.n_ratings;
  return c;
}

const char* kDataPath = EGF_SOURCE_DIR "/data/ml-100k/u.data";

bool have_real_data() { return std::ifstream(kDataPath).good(); }

}  // namespace

TEST_CASE("load_ratings parses and filters") {
  std::string path = write_temp("egf_toy_ratings.tsv",
                                "1\t10\t5\t100\n"
                                "2\t10\t4\t101\n"
                                "1\t20\t3\t102\n");
  RatingsCorpus c = load_ratings(path, 1);
  CHECK(c.n_users() == 2);
  CHECK(c.n_items == 2);
  CHECK(c.raw_ratings == 3);
  CHECK(c.users[0].size() == 2);  // user 1
  CHECK(c.users[0][0].value == 5.0);
  CHECK(c.users[1][0].value == 4.0);

  // Items below the threshold are dropped and indices densified.
  RatingsCorpus filtered = load_ratings(path, 2);
  CHECK(filtered.n_items == 1);
  CHECK(filtered.n_ratings == 2);
  CHECK(filtered.item_ids[0] == 10);

  std::string bad = write_temp("egf_bad_ratings.tsv", "1\t10\t5\t100\nnot a rating\n");
  CHECK_THROWS_WITH_AS(load_ratings(bad, 1), doctest::Contains("line 2"), std::runtime_error);

  std::string empty = write_temp("egf_empty_ratings.tsv", "");
  CHECK_THROWS_AS(load_ratings(empty, 1), std::runtime_error);
  CHECK_THROWS_AS(load_ratings("/nonexistent/u.data", 1), std::runtime_error);
}

TEST_CASE("cosine similarity on sparse rating vectors") {
  std::vector<Rating> u{{0, 2.0}, {3, 1.0}};
  std::vector<Rating> v{{1, 4.0}, {2, 5.0}};
  CHECK(cosine_similarity(u, u) == doctest::Approx(1.0));
  CHECK(cosine_similarity(u, v) == 0.0);
  CHECK(cosine_similarity(u, {}) == 0.0);

  std::mt19937_64 rng = make_rng(101);
  std::uniform_real_distribution<double> val(1.0, 5.0);
  for (int rep = 0; rep < 20; ++rep) {
    Eigen::VectorXd a = Eigen::VectorXd::Zero(30), b = Eigen::VectorXd::Zero(30);
    std::vector<Rating> ra, rb;
    for (int i = 0; i < 30; ++i) {
      if (rng() % 3 == 0) {
        a[i] = val(rng);
        ra.push_back({i, a[i]});
      }
      if (rng() % 3 == 0) {
        b[i] = val(rng);
        rb.push_back({i, b[i]});
      }
    }
    double want = (a.norm() == 0 || b.norm() == 0) ? 0.0 : a.dot(b) / (a.norm() * b.norm());
    CHECK(cosine_similarity(ra, rb) == doctest::Approx(want).epsilon(1e-12));
  }
}

TEST_CASE("visible ratings state") {
  VisibleRatings v(4);
  v.add_node({{0, 5.0}, {2, 3.0}});
  v.add_node({{2, 4.0}});
  v.add_node({});

  GraphSignal s2 = v.item_signal(2);
  CHECK(s2.size() == 3);
  CHECK(s2[0] == 3.0);
  CHECK(s2[1] == 4.0);
  CHECK(s2[2] == 0.0);
  CHECK(v.item_signal(1).norm() == 0.0);
  CHECK_THROWS_AS(v.item_signal(9), std::invalid_argument);

  Eigen::VectorXd sims = v.similarities(std::vector<Rating>{{2, 2.0}});
  CHECK(sims[1] == doctest::Approx(1.0));
  CHECK(sims[2] == 0.0);

  v.enable_gram();
  CHECK(v.gram()(0, 1) == doctest::Approx(12.0));  // 3*4 on the shared item
  v.add_node({{0, 1.0}});
  CHECK(v.gram()(3, 0) == doctest::Approx(5.0));
  CHECK(v.gram()(3, 3) == doctest::Approx(1.0));
}

TEST_CASE("knn graph on identical users") {
  VisibleRatings v(3);
  for (int i = 0; i < 3; ++i) v.add_node({{0, 4.0}, {1, 2.0}});
  KnnGraphResult res = build_knn_graph(v, 2);
  CHECK(res.isolated.empty());
  // All similarities are 1 before normalization; the raw radius is 2 (directed
  // complete graph on 3 nodes with unit weights).
  CHECK(res.raw_radius == doctest::Approx(2.0).epsilon(1e-9));
  for (int i = 0; i < 3; ++i) {
    REQUIRE(res.graph.in_edges(i).size() == 2);
    for (const InEdge& e : res.graph.in_edges(i))
      CHECK(e.weight == doctest::Approx(0.5).epsilon(1e-9));
  }
}

TEST_CASE("plan_stream splits ratings disjointly") {
  std::vector<std::vector<Rating>> pattern;
  for (int u = 0; u < 8; ++u) {
    std::vector<Rating> r;
    for (int i = 0; i < 6; ++i) r.push_back({i, static_cast<double>(1 + (u + i) % 5)});
    pattern.push_back(r);
  }
  pattern.push_back({{0, 3.0}});  // a single-rating user: cannot split
  RatingsCorpus corpus = toy_corpus(pattern, 6);

  MovielensPlan plan = plan_stream(corpus, 5, 11);
  CHECK(plan.starting_users.size() == 5);
  long long targets = 0;
  for (const UserSplit& s : plan.stream) {
    std::set<int> known, target;
    for (const Rating& r : s.known) known.insert(r.item);
    for (const Rating& r : s.targets) target.insert(r.item);
    for (int i : target) CHECK(!known.count(i));
    CHECK(s.known.size() >= s.targets.size());
    CHECK(s.known.size() + s.targets.size() == corpus.users[s.user].size());
    targets += static_cast<long long>(s.targets.size());
  }
  CHECK(plan.target_count == targets);
  // The lone-rating user is excluded whenever it is not a starting user.
  bool excluded_is_consistent = true;
  for (int u : plan.excluded_users)
    if (corpus.users[u].size() >= 2) excluded_is_consistent = false;
  CHECK(excluded_is_consistent);
}

TEST_CASE("an identical twin dominates the attachment") {
  // User 5 repeats user 0's ratings exactly; whenever user 5 streams in and
  // user 0 is a starting node, the twin must appear among the in-edges.
  std::vector<std::vector<Rating>> pattern = {
      {{0, 5.0}, {1, 3.0}, {2, 4.0}, {3, 1.0}},
      {{0, 1.0}, {1, 5.0}, {4, 2.0}, {5, 4.0}},
      {{2, 2.0}, {3, 5.0}, {4, 4.0}, {6, 1.0}},
      {{0, 4.0}, {5, 1.0}, {6, 5.0}, {7, 2.0}},
      {{1, 2.0}, {3, 3.0}, {5, 5.0}, {7, 4.0}},
      {{0, 5.0}, {1, 3.0}, {2, 4.0}, {3, 1.0}},
  };
  RatingsCorpus corpus = toy_corpus(pattern, 8);
  MovielensConfig cfg;
  cfg.starting_users = 5;
  cfg.knn = 2;
  cfg.order = 2;

  for (std::uint64_t seed = 1; seed < 50; ++seed) {
    MovielensPlan plan = plan_stream(corpus, 5, seed);
    if (plan.stream.size() != 1 || plan.stream[0].user != 5) continue;
    auto it = std::find(plan.starting_users.begin(), plan.starting_users.end(), 0);
    if (it == plan.starting_users.end()) continue;
    int node_of_zero = static_cast<int>(it - plan.starting_users.begin());

    MovielensStream stream(corpus, cfg, seed);
    bool found = false;
    stream.run(
        [&](const MovielensStream::UserContext& ctx) {
          for (const InEdge& e : ctx.attachment.entries())
            if (e.src == node_of_zero) found = true;
        },
        nullptr);
    CHECK(found);
    return;
  }
  FAIL("no seed produced the twin-as-online configuration");
}

TEST_CASE("stream honesty: a target value cannot influence its own prediction") {
  std::vector<std::vector<Rating>> pattern;
  std::mt19937_64 rng = make_rng(103);
  for (int u = 0; u < 10; ++u) {
    std::vector<Rating> r;
    for (int i = 0; i < 8; ++i)
      if ((rng() + u) % 3 != 0) r.push_back({i, static_cast<double>(1 + rng() % 5)});
    if (r.size() < 2) r.push_back({7, 3.0});
    pattern.push_back(r);
  }
  RatingsCorpus corpus_a = toy_corpus(pattern, 8);

  MovielensConfig cfg;
  cfg.starting_users = 7;
  cfg.knn = 3;
  cfg.order = 3;
  const std::uint64_t seed = 5;
  MovielensRealization ra = materialize_movielens(corpus_a, cfg, seed);
  REQUIRE(ra.replay.size() > 0);

  // Perturb the value of the first streamed user's first target rating.
  MovielensPlan plan = plan_stream(corpus_a, cfg.starting_users, seed);
  int victim = plan.stream[0].user;
  int victim_item = plan.stream[0].targets[0].item;
  RatingsCorpus corpus_b = corpus_a;
  for (Rating& r : corpus_b.users[victim])
    if (r.item == victim_item) r.value = (r.value == 5.0) ? 1.0 : r.value + 1.0;

  MovielensRealization rb = materialize_movielens(corpus_b, cfg, seed);
  // Same split plan, same first-step design row and therefore prediction
  // inputs; only the revealed truth differs.
  CHECK((ra.replay.designs.row(0) - rb.replay.designs.row(0)).norm() == 0.0);
  CHECK(ra.replay.targets[0] != rb.replay.targets[0]);
}

TEST_CASE("graph growth matches the protocol") {
  std::vector<std::vector<Rating>> pattern;
  for (int u = 0; u < 9; ++u) {
    std::vector<Rating> r;
    for (int i = 0; i < 5; ++i) r.push_back({(u + i) % 7, static_cast<double>(1 + i)});
    pattern.push_back(r);
  }
  RatingsCorpus corpus = toy_corpus(pattern, 7);
  MovielensConfig cfg;
  cfg.starting_users = 6;
  cfg.knn = 2;
  cfg.order = 2;
  MovielensStream stream(corpus, cfg, 3);
  int last_nodes = 0;
  int users_seen = 0;
  stream.run(
      [&](const MovielensStream::UserContext& ctx) {
        CHECK(ctx.node_count == 6 + users_seen);
        ++users_seen;
        last_nodes = ctx.node_count;
      },
      nullptr);
  CHECK(users_seen == static_cast<int>(stream.plan().stream.size()));
  CHECK(last_nodes == 6 + users_seen - 1);
}

TEST_CASE("pretraining rows zero out the target user's own rating") {
  VisibleRatings v(3);
  v.add_node({{0, 5.0}});
  v.add_node({{0, 4.0}, {1, 2.0}});
  v.add_node({{2, 1.0}});
  Eigen::MatrixXd adj(3, 3);
  adj << 0, 1, 0, 1, 0, 0, 0, 1, 0;
  ExpandingGraph g(adj);

  BatchProblem p = build_rating_pretrain_problem(v, g, 100, 2, 7);
  CHECK(p.designs.rows() == 4);  // every rating sampled
  // Row geometry: a_node^T [0 | x | A x] with x the self-zeroed item column.
  // Find the row for (node 0, item 0): its design must use x = (0,4,0).
  bool checked = false;
  for (Eigen::Index r = 0; r < p.designs.rows(); ++r) {
    if (p.targets[r] == 5.0) {  // node 0 rated item 0 with 5
      // a_0 = e_1 (edge from node 1), so the second column is x[1] = 4.
      CHECK(p.designs(r, 0) == 0.0);
      CHECK(p.designs(r, 1) == doctest::Approx(4.0));
      checked = true;
    }
  }
  CHECK(checked);
}

TEST_CASE("aggregated diversity") {
  CHECK(ad_at_10({{1, 2, 3}, {1, 2, 3}}, 30) == doctest::Approx(3.0 / 30.0));
  std::vector<std::vector<int>> shared(443, std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7, 8, 9});
  CHECK(ad_at_10(shared, 1152) == doctest::Approx(10.0 / 1152.0));
  CHECK(ad_at_10({}, 10) == 0.0);
  CHECK_THROWS_AS(ad_at_10({{0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10}}, 20), std::invalid_argument);
}

TEST_CASE("canonical dataset statistics" * doctest::skip(!have_real_data())) {
  RatingsCorpus corpus = load_ratings(kDataPath);
  CHECK(corpus.raw_ratings == 100000);
  CHECK(corpus.n_users() == 943);
  // About 1152 items carry at least ten ratings (asserted within 5%).
  CHECK(corpus.n_items >= 1094);
  CHECK(corpus.n_items <= 1210);

  MovielensConfig cfg;
  MovielensStream stream(corpus, cfg, 1);
  CHECK(stream.plan().stream.size() + stream.plan().excluded_users.size() == 443);
  // Roughly 23,000 held-out ratings drive the online updates.
  CHECK(stream.target_count() > 20000);
  CHECK(stream.target_count() < 26500);

  // Starting rows carry exactly 15 in-edges.
  for (int i = 0; i < stream.graph0().node_count(); ++i)
    CHECK(stream.graph0().in_edges(i).size() == 15);

  // Brute-force top-k oracle on a 30-user subsample.
  VisibleRatings sample(corpus.n_items);
  for (int u = 0; u < 30; ++u) sample.add_node(corpus.users[u]);
  KnnGraphResult knn = build_knn_graph(sample, 5);
  for (int i = 0; i < 5; ++i) {
    std::vector<std::pair<double, int>> sims;
    for (int j = 0; j < 30; ++j) {
      if (j == i) continue;
      double s = cosine_similarity(corpus.users[i], corpus.users[j]);
      if (s > 0.0) sims.push_back({s, j});
    }
    std::sort(sims.begin(), sims.end(), [](const auto& a, const auto& b) {
      return a.first != b.first ? a.first > b.first : a.second < b.second;
    });
    std::set<int> want;
    for (int t = 0; t < 5 && t < static_cast<int>(sims.size()); ++t)
      want.insert(sims[t].second);
    std::set<int> got;
    for (const InEdge& e : knn.graph.in_edges(i)) got.insert(e.src);
    CHECK(got == want);
  }
}

TEST_CASE("online attachments carry 15 edges on the real data" *
          doctest::skip(!have_real_data())) {
  RatingsCorpus corpus = load_ratings(kDataPath);
  MovielensConfig cfg;
  MovielensStream stream(corpus, cfg, 2);
  int users = 0;
  bool all15 = true;
  stream.run(
      [&](const MovielensStream::UserContext& ctx) {
        ++users;
        if (ctx.attachment.entries().size() != 15) all15 = false;
      },
      nullptr, false, 40);  // first 40 users suffice
  CHECK(users == 40);
  CHECK(all15);
}
