#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "bup/dataset.hpp"
#include "bup/error.hpp"
#include "bup/graph.hpp"
#include "bup/model.hpp"

namespace bup {

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

/// Predicted class of a probability row; ties go to the lowest index.
inline Index predicted_class(const Matrix& probs, Index node) {
  const auto r = static_cast<Eigen::Index>(node);
  Index best = 0;
  for (Eigen::Index c = 1; c < probs.cols(); ++c)
    if (probs(r, c) > probs(r, static_cast<Eigen::Index>(best))) best = static_cast<Index>(c);
  return best;
}

inline double accuracy(const Matrix& probs, const std::vector<Index>& labels, const std::vector<Index>& idx) {
  if (idx.empty()) throw InputError("accuracy: empty index set");
  Index correct = 0;
  for (Index i : idx)
    if (predicted_class(probs, i) == labels.at(i)) ++correct;
  return static_cast<double>(correct) / static_cast<double>(idx.size());
}

// ---------------------------------------------------------------- calibration

/// Running sums for one equal-width confidence bin.  Sums (not means) so that
/// bins from disjoint node sets merge exactly.
struct BinAccumulator {
  Index count = 0;
  double confidence_sum = 0.0;
  double correct_sum = 0.0;
};

struct CalibrationBin {
  Index count = 0;
  double mean_confidence = 0.0;
  double mean_accuracy = 0.0;
};

struct Calibration {
  double ece = 0.0;  // percent
  double ace = 0.0;  // percent
  std::vector<CalibrationBin> bins;
};

/// Bin b covers confidences in (b/B, (b+1)/B]; a confidence of exactly 0 joins bin 0.
inline Index confidence_bin(double confidence, Index num_bins) {
  const double scaled = std::ceil(confidence * static_cast<double>(num_bins)) - 1.0;
  if (!(scaled > 0.0)) return 0;
  return std::min(num_bins - 1, static_cast<Index>(scaled));
}

inline std::vector<BinAccumulator> accumulate_bins(const Matrix& probs, const std::vector<Index>& labels,
                                                   const std::vector<Index>& idx, Index num_bins) {
  if (idx.empty()) throw InputError("calibration: empty index set");
  if (num_bins < 1) throw InputError("calibration: num_bins must be >= 1");
  std::vector<BinAccumulator> acc(num_bins);
  for (Index i : idx) {
    const Index pred = predicted_class(probs, i);
    const double conf = probs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(pred));
    auto& b = acc[confidence_bin(conf, num_bins)];
    ++b.count;
    b.confidence_sum += conf;
    b.correct_sum += pred == labels.at(i) ? 1.0 : 0.0;
  }
  return acc;
}

inline std::vector<BinAccumulator> merge_bins(const std::vector<BinAccumulator>& a,
                                              const std::vector<BinAccumulator>& b) {
  if (a.size() != b.size()) throw InputError("merge_bins: bin counts differ");
  std::vector<BinAccumulator> out(a.size());
  for (Index k = 0; k < a.size(); ++k)
    out[k] = {a[k].count + b[k].count, a[k].confidence_sum + b[k].confidence_sum,
              a[k].correct_sum + b[k].correct_sum};
  return out;
}

/// ECE = 100 sum_b (n_b/N)|acc_b - conf_b|;  ACE = 100/B+ sum_{b nonempty}|acc_b - conf_b|.
inline Calibration calibration_from_bins(const std::vector<BinAccumulator>& acc) {
  Calibration cal;
  Index total = 0;
  Index nonempty = 0;
  for (const auto& b : acc) {
    total += b.count;
    if (b.count > 0) ++nonempty;
  }
  for (const auto& b : acc) {
    CalibrationBin out;
    out.count = b.count;
    if (b.count > 0) {
      const double n = static_cast<double>(b.count);
      out.mean_confidence = b.confidence_sum / n;
      out.mean_accuracy = b.correct_sum / n;
      const double gap = std::abs(out.mean_accuracy - out.mean_confidence);
      cal.ece += n / static_cast<double>(total) * gap;
      cal.ace += gap / static_cast<double>(nonempty);
    }
    cal.bins.push_back(out);
  }
  cal.ece *= 100.0;
  cal.ace *= 100.0;
  return cal;
}

inline Calibration calibration(const Matrix& probs, const std::vector<Index>& labels,
                               const std::vector<Index>& idx, Index num_bins = 10) {
  return calibration_from_bins(accumulate_bins(probs, labels, idx, num_bins));
}

// ----------------------------------------------------------------- dispersion

struct Dispersion {
  double p_max = 0.0;
  double std_dev = 0.0;  // population form, 1/D with D = row length
};

inline Dispersion row_dispersion(const Matrix& probs, Index node) {
  const auto row = probs.row(static_cast<Eigen::Index>(node)).array();
  const double d = static_cast<double>(row.size());
  const double mean = row.sum() / d;
  return {row.maxCoeff(), std::sqrt((row - mean).square().sum() / d)};
}

inline std::vector<Dispersion> prob_dispersion(const Matrix& probs, const std::vector<Index>& idx) {
  std::vector<Dispersion> out;
  out.reserve(idx.size());
  for (Index i : idx) out.push_back(row_dispersion(probs, i));
  return out;
}

// ------------------------------------------------------------------ statistics

/// Ranks starting at 1, ties share the average of their positions.
inline std::vector<double> average_ranks(const std::vector<double>& x) {
  std::vector<Index> order(x.size());
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return x[a] < x[b]; });
  std::vector<double> ranks(x.size());
  for (Index i = 0; i < order.size();) {
    Index j = i;
    while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (Index k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw InputError("correlation: length mismatch");
  const double n = static_cast<double>(x.size());
  if (x.size() < 2) return 0.0;
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (Index k = 0; k < x.size(); ++k) {
    sxy += (x[k] - mx) * (y[k] - my);
    sxx += (x[k] - mx) * (x[k] - mx);
    syy += (y[k] - my) * (y[k] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

/// Spearman rank correlation; returns 0 when either input is constant.
inline double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  return pearson(average_ranks(x), average_ranks(y));
}

/// Hop distances from `source`; -1 marks unreachable nodes.
inline std::vector<long> bfs_distances(const Graph& g, Index source) {
  std::vector<long> dist(g.num_nodes(), -1);
  std::deque<Index> queue{source};
  dist.at(source) = 0;
  while (!queue.empty()) {
    const Index u = queue.front();
    queue.pop_front();
    for (Index v : g.neighbors(u))
      if (dist[v] < 0) {
        dist[v] = dist[u] + 1;
        queue.push_back(v);
      }
  }
  return dist;
}

// ----------------------------------------------------------------- eval report

struct NodeRecord {
  Index node = 0;
  Index label = 0;      // dataset class
  Index pred = 0;       // dataset class
  double p_max = 0.0;
  double std_dev = 0.0;
  double avg_std = kNaN;  // NaN for models without a variance channel
  double entropy = kNaN;
  Index degree = 0;
  double dist_mean = kNaN;
  bool is_ood = false;
};

struct EvalReport {
  double acc = 0.0;
  double ece = 0.0;
  double ace = 0.0;
  Index num_bins = 10;
  std::vector<CalibrationBin> bins;
  std::vector<NodeRecord> per_node;
};

/// Scores the in-distribution test nodes (acc/ece/ace over `test`) and adds
/// per-node rows for `test` followed by `ood_test` (flagged is_ood).
inline EvalReport build_eval_report(const Matrix& probs, const UncertaintyScore* scores,
                                    const Dataset& ds, const LabelMap& map,
                                    const std::vector<Index>& test, const std::vector<Index>& ood_test,
                                    Index num_bins = 10) {
  std::vector<Index> model_labels(ds.num_nodes());
  for (Index i = 0; i < ds.num_nodes(); ++i) model_labels[i] = map.to_model[ds.labels[i]];
  EvalReport r;
  r.num_bins = num_bins;
  r.acc = accuracy(probs, model_labels, test);
  const Calibration cal = calibration(probs, model_labels, test, num_bins);
  r.ece = cal.ece;
  r.ace = cal.ace;
  r.bins = cal.bins;
  auto add = [&](Index i, bool ood) {
    NodeRecord rec;
    rec.node = i;
    rec.label = ds.labels[i];
    rec.pred = map.to_dataset.at(predicted_class(probs, i));
    const Dispersion d = row_dispersion(probs, i);
    rec.p_max = d.p_max;
    rec.std_dev = d.std_dev;
    if (scores != nullptr) {
      rec.avg_std = scores->avg_std(static_cast<Eigen::Index>(i));
      rec.entropy = scores->gaussian_entropy(static_cast<Eigen::Index>(i));
    }
    rec.degree = ds.graph.degree(i);
    rec.is_ood = ood;
    r.per_node.push_back(rec);
  };
  for (Index i : test) add(i, false);
  for (Index i : ood_test) add(i, true);
  return r;
}

// ------------------------------------------------------------------- topology

struct DegreeBucket {
  Index degree = 0;
  Index count = 0;
  double mean_avg_std = 0.0;
  double mean_entropy = 0.0;
};

struct TopologyAnalysis {
  std::vector<DegreeBucket> buckets;       // one per distinct degree, ascending
  double spearman_degree_avg_std = 0.0;
  double spearman_degree_entropy = 0.0;
  double spearman_dist_mean_avg_std = 0.0;     // mean hop distance to training nodes
  double spearman_dist_nearest_avg_std = 0.0;  // distance to the nearest training node
  std::vector<double> dist_mean;               // aligned with report.per_node, NaN if unreachable
  std::vector<double> dist_nearest;
  std::vector<Index> unreachable;              // nodes with no path to any training node
  Index num_nodes = 0;
};

/// Degree buckets and rank correlations over the report's non-OOD rows that
/// carry uncertainty scores.  Distances come from one BFS per training node.
inline TopologyAnalysis topology_analysis(const EvalReport& report, const Graph& g, const Split& split) {
  TopologyAnalysis t;
  std::vector<std::vector<long>> from_train;
  from_train.reserve(split.train.size());
  for (Index s : split.train) from_train.push_back(bfs_distances(g, s));

  std::map<Index, DegreeBucket> buckets;
  std::vector<double> deg, avg, ent, dmean_x, dmean_y, dnear_x, dnear_y;
  for (const auto& rec : report.per_node) {
    double sum = 0.0;
    Index reach = 0;
    long nearest = -1;
    for (const auto& dist : from_train) {
      const long d = dist[rec.node];
      if (d < 0) continue;
      sum += static_cast<double>(d);
      ++reach;
      if (nearest < 0 || d < nearest) nearest = d;
    }
    const double mean_d = reach > 0 ? sum / static_cast<double>(reach) : kNaN;
    const double near_d = nearest >= 0 ? static_cast<double>(nearest) : kNaN;
    t.dist_mean.push_back(mean_d);
    t.dist_nearest.push_back(near_d);
    if (reach == 0) t.unreachable.push_back(rec.node);
    if (rec.is_ood || std::isnan(rec.avg_std)) continue;

    ++t.num_nodes;
    auto& b = buckets[rec.degree];
    b.degree = rec.degree;
    ++b.count;
    b.mean_avg_std += rec.avg_std;
    b.mean_entropy += rec.entropy;
    deg.push_back(static_cast<double>(rec.degree));
    avg.push_back(rec.avg_std);
    ent.push_back(rec.entropy);
    if (reach > 0) {
      dmean_x.push_back(mean_d);
      dmean_y.push_back(rec.avg_std);
      dnear_x.push_back(near_d);
      dnear_y.push_back(rec.avg_std);
    }
  }
  for (auto& [d, b] : buckets) {
    b.mean_avg_std /= static_cast<double>(b.count);
    b.mean_entropy /= static_cast<double>(b.count);
    t.buckets.push_back(b);
  }
  t.spearman_degree_avg_std = spearman(deg, avg);
  t.spearman_degree_entropy = spearman(deg, ent);
  t.spearman_dist_mean_avg_std = spearman(dmean_x, dmean_y);
  t.spearman_dist_nearest_avg_std = spearman(dnear_x, dnear_y);
  return t;
}

}  // namespace bup
