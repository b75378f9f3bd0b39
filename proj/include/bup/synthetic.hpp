#pragma once

// Citation-like synthetic datasets: a degree-corrected stochastic block model
// with class-topical binary bag-of-words features.  Used for fixtures and
// demos where the real benchmark files are not at hand.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "bup/dataset.hpp"
#include "bup/graph.hpp"
#include "bup/rng.hpp"

namespace bup {

struct SyntheticSpec {
  Index num_classes = 4;
  Index nodes_per_class = 100;
  Index num_features = 200;
  double avg_degree = 4.0;
  double homophily = 0.8;        // share of expected edges that stay within a class
  double degree_exponent = 2.5;  // Pareto tail of the per-node propensity
  Index words_per_node = 12;
  double topic_fraction = 0.35;  // share of words drawn from the node's class block
  std::uint64_t seed = 0;
};

inline Dataset make_synthetic_citation(const SyntheticSpec& spec) {
  Rng rng(spec.seed);
  const Index n = spec.num_classes * spec.nodes_per_class;
  Dataset ds;
  ds.num_classes = spec.num_classes;
  for (Index c = 0; c < spec.num_classes; ++c) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "class_%02zu", c);
    ds.class_names.emplace_back(buf);
  }
  for (Index i = 0; i < n; ++i) {
    ds.labels.push_back(i % spec.num_classes);
    ds.node_ids.push_back("n" + std::to_string(i));
  }

  std::vector<double> weight(n);
  for (auto& w : weight) w = std::min(20.0, std::pow(1.0 - rng.uniform(), -1.0 / (spec.degree_exponent - 1.0)));
  double same = 0.0, cross = 0.0;
  for (Index i = 0; i < n; ++i)
    for (Index j = i + 1; j < n; ++j) (ds.labels[i] == ds.labels[j] ? same : cross) += weight[i] * weight[j];
  const double target = spec.avg_degree * static_cast<double>(n) / 2.0;
  const double scale_same = spec.homophily * target / same;
  const double scale_cross = (1.0 - spec.homophily) * target / cross;

  std::vector<std::pair<Index, Index>> edges;
  for (Index i = 0; i < n; ++i)
    for (Index j = i + 1; j < n; ++j) {
      const double s = ds.labels[i] == ds.labels[j] ? scale_same : scale_cross;
      if (rng.uniform() < std::min(1.0, s * weight[i] * weight[j])) edges.emplace_back(i, j);
    }
  ds.graph = build_graph(std::move(edges), n);

  const Index block = std::max<Index>(1, spec.num_features / spec.num_classes);
  ds.features = Matrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(spec.num_features));
  for (Index i = 0; i < n; ++i) {
    const Index c = ds.labels[i];
    for (Index w = 0; w < spec.words_per_node; ++w) {
      Index word;
      if (rng.uniform() < spec.topic_fraction)
        word = std::min(spec.num_features - 1, c * block + static_cast<Index>(rng.index(block)));
      else
        word = static_cast<Index>(rng.index(spec.num_features));
      ds.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(word)) = 1.0;
    }
  }
  return ds;
}

}  // namespace bup
