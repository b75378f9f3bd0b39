#pragma once

// Undirected graph with implicit self-loops and the symmetric-normalized
// propagation kernel K = D^-1/2 (A + I) D^-1/2.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <sstream>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "bup/error.hpp"
#include "bup/log.hpp"

namespace bup {

using Index = std::size_t;
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

/// Immutable adjacency.  Edges are stored once per unordered pair; self-loops
/// are never stored and only show up through degree_hat (= |N(i)| + 1).
class Graph {
 public:
  Graph() = default;

  Index num_nodes() const noexcept { return neighbors_.size(); }
  Index num_edges() const noexcept { return edges_.size(); }

  /// Unordered pairs (u, v) with u < v, sorted lexicographically.
  const std::vector<std::pair<Index, Index>>& edges() const noexcept { return edges_; }
  const std::vector<Index>& neighbors(Index i) const { return neighbors_.at(i); }
  Index degree(Index i) const { return neighbors_.at(i).size(); }
  double degree_hat(Index i) const { return static_cast<double>(neighbors_.at(i).size() + 1); }

  Index max_degree() const noexcept {
    Index best = 0;
    for (const auto& n : neighbors_) best = std::max(best, n.size());
    return best;
  }

 private:
  std::vector<std::pair<Index, Index>> edges_;
  std::vector<std::vector<Index>> neighbors_;

  friend Graph build_graph(std::vector<std::pair<Index, Index>> edge_list, Index num_nodes);
};

/// Deduplicates, symmetrizes and drops self-pairs.  Throws InputError naming
/// the first pair with an out-of-range endpoint.
inline Graph build_graph(std::vector<std::pair<Index, Index>> edge_list, Index num_nodes) {
  if (num_nodes == 0) throw InputError("build_graph: num_nodes must be positive");
  Graph g;
  std::vector<std::pair<Index, Index>> canonical;
  canonical.reserve(edge_list.size());
  for (const auto& [u, v] : edge_list) {
    if (u >= num_nodes || v >= num_nodes) {
      std::ostringstream msg;
      msg << "build_graph: edge (" << u << ", " << v << ") out of range for " << num_nodes
          << " nodes";
      throw InputError(msg.str());
    }
    if (u == v) continue;
    canonical.emplace_back(std::min(u, v), std::max(u, v));
  }
  const Index before = canonical.size();
  std::sort(canonical.begin(), canonical.end());
  canonical.erase(std::unique(canonical.begin(), canonical.end()), canonical.end());
  if (before != canonical.size() || before != edge_list.size()) {
    std::ostringstream msg;
    msg << "build_graph: merged " << (before - canonical.size()) << " duplicate pairs, dropped "
        << (edge_list.size() - before) << " self pairs";
    log::debug(msg.str());
  }

  g.neighbors_.assign(num_nodes, {});
  for (const auto& [u, v] : canonical) {
    g.neighbors_[u].push_back(v);
    g.neighbors_[v].push_back(u);
  }
  for (auto& n : g.neighbors_) std::sort(n.begin(), n.end());
  g.edges_ = std::move(canonical);
  return g;
}

/// CSR matrix with sorted column indices; the pattern is that of A + I.
class PropagationKernel {
 public:
  PropagationKernel() = default;

  Index size() const noexcept { return row_ptr_.empty() ? 0 : row_ptr_.size() - 1; }
  Index nonzeros() const noexcept { return values_.size(); }

  const std::vector<Index>& row_ptr() const noexcept { return row_ptr_; }
  const std::vector<Index>& col_idx() const noexcept { return col_idx_; }
  const std::vector<double>& values() const noexcept { return values_; }

  /// Entry lookup by binary search; zero outside the pattern.
  double at(Index i, Index j) const {
    const auto first = col_idx_.begin() + static_cast<std::ptrdiff_t>(row_ptr_.at(i));
    const auto last = col_idx_.begin() + static_cast<std::ptrdiff_t>(row_ptr_.at(i + 1));
    const auto it = std::lower_bound(first, last, j);
    if (it == last || *it != j) return 0.0;
    return values_[static_cast<Index>(it - col_idx_.begin())];
  }

  Matrix to_dense() const {
    const Index n = size();
    Matrix dense = Matrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (Index i = 0; i < n; ++i)
      for (Index k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k)
        dense(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(col_idx_[k])) = values_[k];
    return dense;
  }

 private:
  std::vector<Index> row_ptr_;
  std::vector<Index> col_idx_;
  std::vector<double> values_;

  friend PropagationKernel build_kernel(const Graph& g);
};

inline PropagationKernel build_kernel(const Graph& g) {
  PropagationKernel k;
  const Index n = g.num_nodes();
  k.row_ptr_.reserve(n + 1);
  k.row_ptr_.push_back(0);
  for (Index i = 0; i < n; ++i) {
    const double di = g.degree_hat(i);
    const auto& nb = g.neighbors(i);
    // Merge the diagonal into the sorted neighbor list.
    bool diag_done = false;
    auto push = [&](Index j) {
      k.col_idx_.push_back(j);
      k.values_.push_back(1.0 / std::sqrt(di * g.degree_hat(j)));
    };
    for (Index j : nb) {
      if (!diag_done && i < j) {
        push(i);
        diag_done = true;
      }
      push(j);
    }
    if (!diag_done) push(i);
    k.row_ptr_.push_back(k.col_idx_.size());
  }
  return k;
}

/// Returns K * input.  Each output row depends only on input rows, accumulated
/// in column order, so the result is independent of any row-level parallelism.
inline Matrix propagate(const PropagationKernel& kernel, const Matrix& input) {
  if (static_cast<Index>(input.rows()) != kernel.size()) {
    std::ostringstream msg;
    msg << "propagate: input has " << input.rows() << " rows, kernel is " << kernel.size() << "x"
        << kernel.size();
    throw InputError(msg.str());
  }
  Matrix out = Matrix::Zero(input.rows(), input.cols());
  const auto& rp = kernel.row_ptr();
  const auto& ci = kernel.col_idx();
  const auto& val = kernel.values();
  for (Index i = 0; i < kernel.size(); ++i) {
    auto row = out.row(static_cast<Eigen::Index>(i));
    for (Index k = rp[i]; k < rp[i + 1]; ++k)
      row.noalias() += val[k] * input.row(static_cast<Eigen::Index>(ci[k]));
  }
  return out;
}

}  // namespace bup
