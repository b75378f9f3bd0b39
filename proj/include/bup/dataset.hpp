#pragma once

// Planetoid-style citation datasets (`.content` / `.cites`), stratified splits
// and the withheld-class (OOD) split.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/SparseCore>
#include <nlohmann/json.hpp>

#include "bup/error.hpp"
#include "bup/graph.hpp"
#include "bup/log.hpp"
#include "bup/rng.hpp"

namespace bup {

using SparseFeatures = Eigen::SparseMatrix<double, Eigen::RowMajor>;

struct Dataset {
  Matrix features;                    // num_nodes x F
  std::vector<Index> labels;          // in [0, num_classes)
  std::vector<std::string> class_names;  // sorted; index = class id
  Index num_classes = 0;
  Graph graph;
  std::vector<std::string> node_ids;  // original ids, index order
  Index skipped_citations = 0;        // cites lines with an unknown endpoint

  Index num_nodes() const noexcept { return labels.size(); }
  Index num_features() const noexcept { return static_cast<Index>(features.cols()); }
};

struct Split {
  std::vector<Index> train;
  std::vector<Index> val;
  std::vector<Index> test;
  Index per_class = 0;
  std::uint64_t seed = 0;
  std::optional<Index> ood_class;
  std::vector<Index> ood_test;

  bool operator==(const Split&) const = default;
};

namespace detail {

inline std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    const std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

inline double parse_double(std::string_view tok, const std::string& where) {
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), value);
  if (ec != std::errc() || ptr != tok.data() + tok.size())
    throw InputError(where + ": cannot parse feature value '" + std::string(tok) + "'");
  if (!std::isfinite(value)) throw InputError(where + ": non-finite feature value");
  return value;
}

inline std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

}  // namespace detail

/// Parses `<id> <f_1..f_F> <label>` lines and `<id> <id>` citation lines.
/// Labels are numbered by sorted label string; node indices follow file order.
inline Dataset load_planetoid(const std::string& content_path, const std::string& cites_path) {
  std::ifstream content(content_path);
  if (!content) throw IoError("cannot open " + content_path);

  Dataset ds;
  std::vector<std::vector<double>> rows;
  std::vector<std::string> raw_labels;
  std::unordered_map<std::string, Index> id_to_index;
  std::string line;
  std::size_t line_no = 0;
  std::size_t width = 0;
  while (std::getline(content, line)) {
    ++line_no;
    const auto tok = detail::split_ws(line);
    if (tok.empty()) continue;
    const std::string where = content_path + ":" + std::to_string(line_no);
    if (tok.size() < 3) throw InputError(where + ": expected <id> <features...> <label>");
    if (width == 0) width = tok.size();
    if (tok.size() != width)
      throw InputError(where + ": expected " + std::to_string(width - 2) + " features, got " +
                       std::to_string(tok.size() - 2));
    std::string id(tok.front());
    if (!id_to_index.emplace(id, rows.size()).second)
      throw InputError(where + ": duplicate node id '" + id + "'");
    std::vector<double> row;
    row.reserve(width - 2);
    for (std::size_t k = 1; k + 1 < tok.size(); ++k) row.push_back(detail::parse_double(tok[k], where));
    rows.push_back(std::move(row));
    raw_labels.emplace_back(tok.back());
    ds.node_ids.push_back(std::move(id));
  }
  if (rows.empty()) throw InputError(content_path + ": no nodes");

  std::vector<std::string> names = raw_labels;
  std::sort(names.begin(), names.end());
  names.erase(std::unique(names.begin(), names.end()), names.end());
  std::map<std::string, Index> label_index;
  for (Index c = 0; c < names.size(); ++c) label_index[names[c]] = c;
  ds.class_names = names;
  ds.num_classes = names.size();

  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto f = static_cast<Eigen::Index>(width - 2);
  ds.features.resize(n, f);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < f; ++j)
      ds.features(i, j) = rows[static_cast<Index>(i)][static_cast<Index>(j)];
  ds.labels.reserve(rows.size());
  for (const auto& l : raw_labels) ds.labels.push_back(label_index.at(l));

  std::ifstream cites(cites_path);
  if (!cites) throw IoError("cannot open " + cites_path);
  std::vector<std::pair<Index, Index>> edges;
  line_no = 0;
  while (std::getline(cites, line)) {
    ++line_no;
    const auto tok = detail::split_ws(line);
    if (tok.empty()) continue;
    if (tok.size() != 2)
      throw InputError(cites_path + ":" + std::to_string(line_no) + ": expected <id> <id>");
    const auto a = id_to_index.find(std::string(tok[0]));
    const auto b = id_to_index.find(std::string(tok[1]));
    if (a == id_to_index.end() || b == id_to_index.end()) {
      ++ds.skipped_citations;
      continue;
    }
    edges.emplace_back(a->second, b->second);
  }
  if (ds.skipped_citations > 0)
    log::warn(cites_path + ": skipped " + std::to_string(ds.skipped_citations) +
              " citations with unknown endpoints");
  ds.graph = build_graph(std::move(edges), rows.size());
  return ds;
}

/// Writes the dataset back out in the same text format.  Values use the
/// shortest representation that parses back to the same double.
inline void write_planetoid(const Dataset& ds, const std::string& content_path,
                            const std::string& cites_path) {
  std::ofstream content(content_path);
  if (!content) throw IoError("cannot write " + content_path);
  for (Index i = 0; i < ds.num_nodes(); ++i) {
    content << ds.node_ids[i];
    for (Eigen::Index j = 0; j < ds.features.cols(); ++j)
      content << '\t' << detail::format_double(ds.features(static_cast<Eigen::Index>(i), j));
    content << '\t' << ds.class_names[ds.labels[i]] << '\n';
  }
  std::ofstream cites(cites_path);
  if (!cites) throw IoError("cannot write " + cites_path);
  for (const auto& [u, v] : ds.graph.edges()) cites << ds.node_ids[u] << '\t' << ds.node_ids[v] << '\n';
  if (!content || !cites) throw IoError("write failed for " + content_path);
}

/// Divides each row by its sum; all-zero rows stay zero.
inline Matrix row_normalize(const Matrix& features) {
  Matrix out = features;
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    const double s = out.row(i).sum();
    if (s != 0.0) out.row(i) /= s;
  }
  return out;
}

inline SparseFeatures to_sparse(const Matrix& dense) { return dense.sparseView(); }

namespace detail {

inline std::vector<std::vector<Index>> nodes_by_class(const Dataset& ds) {
  std::vector<std::vector<Index>> by_class(ds.num_classes);
  for (Index i = 0; i < ds.num_nodes(); ++i) by_class.at(ds.labels[i]).push_back(i);
  return by_class;
}

/// Shared sampling routine.  Classes are visited in index order; within a
/// class the ascending node list is shuffled and the first `per_class` kept.
/// The ascending remainder is shuffled once; val takes the first `val_size`,
/// test the next `test_size`.
inline Split sample_split(const Dataset& ds, Index per_class, Index val_size, Index test_size,
                          std::uint64_t seed, std::optional<Index> excluded_class) {
  Rng rng(seed);
  const auto by_class = nodes_by_class(ds);
  Split s;
  s.per_class = per_class;
  s.seed = seed;
  s.ood_class = excluded_class;

  std::vector<bool> taken(ds.num_nodes(), false);
  for (Index c = 0; c < ds.num_classes; ++c) {
    if (excluded_class && c == *excluded_class) continue;
    std::vector<Index> members = by_class[c];
    if (members.size() < per_class)
      throw InputError("make_split: class " + ds.class_names[c] + " (" + std::to_string(c) +
                       ") has " + std::to_string(members.size()) + " nodes, need " +
                       std::to_string(per_class));
    rng.shuffle(std::span<Index>(members));
    for (Index k = 0; k < per_class; ++k) {
      s.train.push_back(members[k]);
      taken[members[k]] = true;
    }
  }

  std::vector<Index> rest;
  for (Index i = 0; i < ds.num_nodes(); ++i)
    if (!taken[i] && !(excluded_class && ds.labels[i] == *excluded_class)) rest.push_back(i);
  if (val_size + test_size > rest.size())
    throw InputError("make_split: need " + std::to_string(val_size + test_size) +
                     " val+test nodes but only " + std::to_string(rest.size()) + " remain");
  rng.shuffle(std::span<Index>(rest));
  s.val.assign(rest.begin(), rest.begin() + static_cast<std::ptrdiff_t>(val_size));
  s.test.assign(rest.begin() + static_cast<std::ptrdiff_t>(val_size),
                rest.begin() + static_cast<std::ptrdiff_t>(val_size + test_size));

  if (excluded_class) {
    std::vector<Index> ood = by_class[*excluded_class];
    rng.shuffle(std::span<Index>(ood));
    if (ood.size() > test_size) ood.resize(test_size);
    s.ood_test = std::move(ood);
  }
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.val.begin(), s.val.end());
  std::sort(s.test.begin(), s.test.end());
  std::sort(s.ood_test.begin(), s.ood_test.end());
  return s;
}

}  // namespace detail

/// Stratified split: exactly `per_class` training nodes per class, then val
/// and test drawn uniformly without replacement from the remainder.
inline Split make_split(const Dataset& ds, Index per_class, Index val_size, Index test_size,
                        std::uint64_t seed) {
  return detail::sample_split(ds, per_class, val_size, test_size, seed, std::nullopt);
}

/// Withholds `ood_class` from train and val.  `test` holds in-distribution
/// nodes only; `ood_test` holds up to `test_size` nodes of the withheld class.
inline Split make_ood_split(const Dataset& ds, Index per_class, Index val_size, Index test_size,
                            std::uint64_t seed, Index ood_class) {
  if (ood_class >= ds.num_classes)
    throw InputError("make_ood_split: ood_class " + std::to_string(ood_class) +
                     " out of range for " + std::to_string(ds.num_classes) + " classes");
  return detail::sample_split(ds, per_class, val_size, test_size, seed, ood_class);
}

inline nlohmann::json split_to_json(const Split& s) {
  nlohmann::json j;
  j["seed"] = s.seed;
  j["per_class"] = s.per_class;
  j["train"] = s.train;
  j["val"] = s.val;
  j["test"] = s.test;
  if (s.ood_class) {
    j["ood_class"] = *s.ood_class;
    j["ood_test"] = s.ood_test;
  }
  return j;
}

inline Split split_from_json(const nlohmann::json& j) {
  Split s;
  try {
    s.seed = j.at("seed").get<std::uint64_t>();
    s.per_class = j.at("per_class").get<Index>();
    s.train = j.at("train").get<std::vector<Index>>();
    s.val = j.at("val").get<std::vector<Index>>();
    s.test = j.at("test").get<std::vector<Index>>();
    if (j.contains("ood_class")) {
      s.ood_class = j.at("ood_class").get<Index>();
      s.ood_test = j.at("ood_test").get<std::vector<Index>>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("split json: ") + e.what());
  }
  return s;
}

/// Maps dataset labels onto the classes a model actually sees.  In the OOD
/// setting the withheld class is removed and higher ids shift down by one;
/// withheld nodes map to `npos`.
struct LabelMap {
  static constexpr Index npos = static_cast<Index>(-1);
  std::vector<Index> to_model;   // dataset class -> model class or npos
  std::vector<Index> to_dataset; // model class -> dataset class
  Index num_model_classes() const noexcept { return to_dataset.size(); }
};

inline LabelMap make_label_map(Index num_classes, std::optional<Index> withheld) {
  LabelMap m;
  m.to_model.assign(num_classes, LabelMap::npos);
  for (Index c = 0; c < num_classes; ++c) {
    if (withheld && c == *withheld) continue;
    m.to_model[c] = m.to_dataset.size();
    m.to_dataset.push_back(c);
  }
  return m;
}

}  // namespace bup
