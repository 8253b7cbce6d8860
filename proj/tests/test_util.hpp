#pragma once

#include <Eigen/Dense>
#include <random>
#include <vector>

#include "egf/graph.hpp"

namespace egf::testutil {

// Dense random sparse-ish adjacency, no self loops.
inline Eigen::MatrixXd random_adjacency(std::mt19937_64& rng, int n, double density,
                                        bool symmetric = false) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = symmetric ? i + 1 : 0; j < n; ++j) {
      if (i == j) continue;
      if (unif(rng) < density) {
        double w = gauss(rng);
        a(i, j) = w;
        if (symmetric) a(j, i) = w;
      }
    }
  }
  return a;
}

inline AttachmentVector random_attachment(std::mt19937_64& rng, int dim, int degree) {
  std::vector<int> all(dim);
  for (int i = 0; i < dim; ++i) all[i] = i;
  std::shuffle(all.begin(), all.end(), rng);
  std::uniform_real_distribution<double> unif(0.1, 1.0);
  std::vector<InEdge> entries;
  for (int i = 0; i < degree; ++i) entries.push_back({all[i], unif(rng)});
  return AttachmentVector(dim, std::move(entries));
}

inline Eigen::VectorXd random_vector(std::mt19937_64& rng, int n) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v[i] = gauss(rng);
  return v;
}

inline Eigen::MatrixXd dense_power(const Eigen::MatrixXd& a, int k) {
  Eigen::MatrixXd p = Eigen::MatrixXd::Identity(a.rows(), a.cols());
  for (int i = 0; i < k; ++i) p = p * a;
  return p;
}

}  // namespace egf::testutil
