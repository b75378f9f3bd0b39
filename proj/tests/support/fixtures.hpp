#pragma once

// Shared generators for the unit and acceptance suites.

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <unistd.h>

#include "bup/dataset.hpp"
#include "bup/graph.hpp"
#include "bup/model.hpp"
#include "bup/synthetic.hpp"

namespace bup::testing {

/// Erdos-Renyi style graph with edge probability p (deliberately uses the
/// standard library engine, independent of bup::Rng).
inline Graph random_graph(Index n, double p, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<std::pair<Index, Index>> edges;
  for (Index i = 0; i < n; ++i)
    for (Index j = i + 1; j < n; ++j)
      if (u(gen) < p) edges.emplace_back(i, j);
  return build_graph(std::move(edges), n);
}

inline Matrix random_matrix(Index rows, Index cols, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = u(gen);
  return m;
}

/// D^-1/2 (A + I) D^-1/2 built densely from the edge list.
inline Matrix dense_kernel_oracle(const Graph& g) {
  const auto n = static_cast<Eigen::Index>(g.num_nodes());
  Matrix a_hat = Matrix::Identity(n, n);
  for (const auto& [u, v] : g.edges()) {
    a_hat(static_cast<Eigen::Index>(u), static_cast<Eigen::Index>(v)) = 1.0;
    a_hat(static_cast<Eigen::Index>(v), static_cast<Eigen::Index>(u)) = 1.0;
  }
  const Eigen::VectorXd d = a_hat.rowwise().sum();
  const Eigen::VectorXd inv_sqrt = d.cwiseSqrt().cwiseInverse();
  return inv_sqrt.asDiagonal() * a_hat * inv_sqrt.asDiagonal();
}

/// The five-node fixture used for end-to-end gradient checks:
///   0 - 1 - 2 - 3, 1 - 3, and node 4 isolated.
inline Graph five_node_graph() { return build_graph({{0, 1}, {1, 2}, {2, 3}, {1, 3}}, 5); }

/// Dataset with the exact per-class sizes given (labels only matter; a single
/// constant feature column and no edges).
inline Dataset labels_only_dataset(const std::vector<Index>& class_sizes) {
  Dataset ds;
  Index n = 0;
  for (Index c = 0; c < class_sizes.size(); ++c) {
    ds.class_names.push_back("c" + std::to_string(c));
    for (Index k = 0; k < class_sizes[c]; ++k) {
      ds.labels.push_back(c);
      ds.node_ids.push_back("v" + std::to_string(n++));
    }
  }
  ds.num_classes = class_sizes.size();
  ds.features = Matrix::Ones(static_cast<Eigen::Index>(n), 1);
  ds.graph = build_graph({}, n);
  return ds;
}

/// Class sizes of the cora and citeseer benchmarks (classes in sorted-name order).
inline const std::vector<Index> kCoraClassSizes{298, 418, 818, 426, 217, 180, 351};
inline const std::vector<Index> kCiteseerClassSizes{249, 596, 701, 508, 668, 590};

inline SyntheticSpec small_spec(std::uint64_t seed = 7) {
  SyntheticSpec s;
  s.num_classes = 3;
  s.nodes_per_class = 30;
  s.num_features = 48;
  s.avg_degree = 4.0;
  s.words_per_node = 8;
  s.topic_fraction = 0.5;
  s.seed = seed;
  return s;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() /
             ("bup_test_" + std::to_string(::getpid()) + "_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace bup::testing
