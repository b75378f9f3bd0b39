#pragma once

// Reproducible experiment runs: train / eval / ood / analyze.  Every artifact
// embeds the resolved configuration (JSON files under "provenance", CSV files
// as a leading "# provenance: {...}" line before the header row) and is written
// to a temporary file first, then renamed into place.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bup/checkpoint.hpp"
#include "bup/dataset.hpp"
#include "bup/error.hpp"
#include "bup/log.hpp"
#include "bup/metrics.hpp"
#include "bup/model.hpp"
#include "bup/trainer.hpp"

namespace bup {

enum class Mode { normal, ood };

struct ExperimentConfig {
  std::string dataset_dir = ".";
  std::string dataset_name = "cora";
  Index per_class = 20;
  Index val_size = 200;
  Index test_size = 2000;
  std::vector<std::uint64_t> seeds{0};
  Mode mode = Mode::normal;
  std::optional<Index> ood_class;  // default: last class
  std::string out_dir = "out";
  std::vector<Method> methods{Method::bup, Method::gcn};
  Index num_bins = 10;
  TrainConfig train;

  std::string content_path() const { return (std::filesystem::path(dataset_dir) / (dataset_name + ".content")).string(); }
  std::string cites_path() const { return (std::filesystem::path(dataset_dir) / (dataset_name + ".cites")).string(); }

  void validate() const {
    if (per_class < 1) throw InputError("config: per_class must be >= 1");
    if (seeds.empty()) throw InputError("config: at least one seed required");
    if (methods.empty()) throw InputError("config: at least one method required");
    if (num_bins < 1) throw InputError("config: num_bins must be >= 1");
    train.validate();
  }
};

inline nlohmann::json train_config_to_json(const TrainConfig& t) {
  return {{"learning_rate", t.learning_rate}, {"adam_beta1", t.adam_beta1},
          {"adam_beta2", t.adam_beta2},       {"adam_eps", t.adam_eps},
          {"weight_decay", t.weight_decay},   {"decay_variance_weights", t.decay_variance_weights},
          {"max_epochs", t.max_epochs},       {"patience", t.patience},
          {"seed", t.seed},                   {"lambda", t.lambda},
          {"hidden_width", t.hidden_width},   {"num_layers", t.num_layers},
          {"var_input_width", t.var_input_width}, {"mc_samples_eval", t.mc_samples_eval},
          {"normalize_features", t.normalize_features}};
}

inline void train_config_from_json(const nlohmann::json& j, TrainConfig& t) {
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  get("learning_rate", t.learning_rate);
  get("adam_beta1", t.adam_beta1);
  get("adam_beta2", t.adam_beta2);
  get("adam_eps", t.adam_eps);
  get("weight_decay", t.weight_decay);
  get("decay_variance_weights", t.decay_variance_weights);
  get("max_epochs", t.max_epochs);
  get("patience", t.patience);
  get("seed", t.seed);
  get("lambda", t.lambda);
  get("hidden_width", t.hidden_width);
  get("num_layers", t.num_layers);
  get("var_input_width", t.var_input_width);
  get("mc_samples_eval", t.mc_samples_eval);
  get("normalize_features", t.normalize_features);
}

inline nlohmann::json experiment_to_json(const ExperimentConfig& c) {
  nlohmann::json j;
  j["dataset"] = {{"dir", c.dataset_dir}, {"name", c.dataset_name}};
  j["split"] = {{"per_class", c.per_class}, {"val_size", c.val_size}, {"test_size", c.test_size}};
  j["seeds"] = c.seeds;
  j["mode"] = c.mode == Mode::normal ? "normal" : "ood";
  j["ood_class"] = c.ood_class ? nlohmann::json(*c.ood_class) : nlohmann::json(nullptr);
  j["out"] = c.out_dir;
  j["methods"] = nlohmann::json::array();
  for (Method m : c.methods) j["methods"].push_back(method_name(m));
  j["eval"] = {{"num_bins", c.num_bins}};
  j["train"] = train_config_to_json(c.train);
  return j;
}

/// Reads the nested config document; absent keys keep their defaults.
inline ExperimentConfig experiment_from_json(const nlohmann::json& j, ExperimentConfig c = {}) {
  try {
    if (j.contains("dataset")) {
      const auto& d = j.at("dataset");
      if (d.contains("dir")) c.dataset_dir = d.at("dir").get<std::string>();
      if (d.contains("name")) c.dataset_name = d.at("name").get<std::string>();
    }
    if (j.contains("split")) {
      const auto& s = j.at("split");
      if (s.contains("per_class")) c.per_class = s.at("per_class").get<Index>();
      if (s.contains("val_size")) c.val_size = s.at("val_size").get<Index>();
      if (s.contains("test_size")) c.test_size = s.at("test_size").get<Index>();
    }
    if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    if (j.contains("mode")) {
      const auto m = j.at("mode").get<std::string>();
      if (m != "normal" && m != "ood") throw InputError("config: mode must be normal or ood");
      c.mode = m == "normal" ? Mode::normal : Mode::ood;
    }
    if (j.contains("ood_class") && !j.at("ood_class").is_null()) c.ood_class = j.at("ood_class").get<Index>();
    if (j.contains("out")) c.out_dir = j.at("out").get<std::string>();
    if (j.contains("methods")) {
      c.methods.clear();
      for (const auto& m : j.at("methods")) c.methods.push_back(parse_method(m.get<std::string>()));
    }
    if (j.contains("eval") && j.at("eval").contains("num_bins")) c.num_bins = j.at("eval").at("num_bins").get<Index>();
    if (j.contains("train")) train_config_from_json(j.at("train"), c.train);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("config: ") + e.what());
  }
  return c;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw InputError("config " + path + ": " + e.what());
  }
  return experiment_from_json(j);
}

// --------------------------------------------------------------------- output

/// Writes `content` to `path` via a sibling temporary file and rename.
inline void write_atomic(const std::filesystem::path& path, const std::string& content) {
  std::error_code ec;
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create directory " + path.parent_path().string() + ": " + ec.message());
  }
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  write_atomic(path, j.dump(2) + "\n");
}

inline std::string provenance_line(const nlohmann::json& provenance) {
  return "# provenance: " + provenance.dump() + "\n";
}

/// Strips leading "# " comment lines from a CSV document.
inline std::string csv_body(const std::string& csv) {
  std::size_t pos = 0;
  while (pos < csv.size() && csv[pos] == '#') {
    const auto nl = csv.find('\n', pos);
    if (nl == std::string::npos) return {};
    pos = nl + 1;
  }
  return csv.substr(pos);
}

inline std::string fmt_fixed(double v, int digits = 4) {
  if (std::isnan(v)) return "";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

inline std::string fmt_value(double v) { return std::isnan(v) ? std::string() : detail::format_double(v); }

inline nlohmann::json to_json_or_null(double v) { return std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v); }

inline std::filesystem::path checkpoint_path(const ExperimentConfig& c, Method m, std::uint64_t seed) {
  const std::string prefix = c.mode == Mode::ood ? "ood_" : "";
  return std::filesystem::path(c.out_dir) / "checkpoints" /
         (prefix + method_name(m) + "_seed" + std::to_string(seed) + ".json");
}

// ------------------------------------------------------------------ pipeline

struct LoadedDataset {
  Dataset ds;
  Index ood_class = 0;
};

inline LoadedDataset load_dataset(const ExperimentConfig& c) {
  LoadedDataset out{load_planetoid(c.content_path(), c.cites_path()), 0};
  out.ood_class = c.ood_class.value_or(out.ds.num_classes - 1);
  return out;
}

inline Split split_for_seed(const ExperimentConfig& c, const LoadedDataset& d, std::uint64_t seed) {
  if (c.mode == Mode::ood) return make_ood_split(d.ds, c.per_class, c.val_size, c.test_size, seed, d.ood_class);
  return make_split(d.ds, c.per_class, c.val_size, c.test_size, seed);
}

inline nlohmann::json run_provenance(const ExperimentConfig& c, std::uint64_t seed, Method m) {
  return {{"config", experiment_to_json(c)}, {"seed", seed}, {"method", method_name(m)}};
}

struct TrainedRun {
  Method method = Method::bup;
  std::uint64_t seed = 0;
  Split split;
  TrainResult result;
};

/// Trains every configured method for one seed and writes checkpoint, trace and split.
inline std::vector<TrainedRun> train_seed(const ExperimentConfig& c, const LoadedDataset& d, std::uint64_t seed) {
  const Split split = split_for_seed(c, d, seed);
  const TrainingData data = prepare_training_data(d.ds, split, c.train.normalize_features);
  std::vector<TrainedRun> runs;
  write_json(std::filesystem::path(c.out_dir) / "splits" /
                 (std::string(c.mode == Mode::ood ? "ood_" : "") + "seed" + std::to_string(seed) + ".json"),
             {{"provenance", {{"config", experiment_to_json(c)}, {"seed", seed}}}, {"split", split_to_json(split)}});
  for (Method m : c.methods) {
    TrainConfig tc = c.train;
    tc.seed = seed;
    TrainedRun run{m, seed, split, train_model(m, tc, data)};
    nlohmann::json prov = run_provenance(c, seed, m);
    prov["split"] = split_to_json(split);
    prov["best_epoch"] = run.result.trace.best_epoch;
    prov["epochs_run"] = run.result.trace.epochs_run();
    Checkpoint ck{m, run.result.params, c.train.normalize_features, prov};
    write_json(checkpoint_path(c, m, seed), checkpoint_to_json(ck));
    const std::string stem = std::string(c.mode == Mode::ood ? "ood_" : "") + method_name(m) + "_seed" + std::to_string(seed);
    write_atomic(std::filesystem::path(c.out_dir) / "traces" / (stem + ".csv"),
                 provenance_line(run_provenance(c, seed, m)) + trace_to_csv(run.result.trace));
    runs.push_back(std::move(run));
  }
  return runs;
}

struct EvaluatedRun {
  Method method = Method::bup;
  std::uint64_t seed = 0;
  Split split;
  EvalReport report;
  std::optional<UncertaintyScore> scores;
};

/// Predictive probabilities: Monte Carlo over the message distribution for
/// BUP, softmax of the logits for the GCN.
inline Matrix model_probabilities(const Checkpoint& ck, const Dataset& ds, const PropagationKernel& kernel,
                                  const SparseFeatures& x, Index mc_samples, std::uint64_t seed,
                                  std::optional<UncertaintyScore>* scores) {
  if (ck.method == Method::gcn) return softmax_rows(forward_mean(ck.params, kernel, x).output());
  const BupForward fwd = forward(ck.params, ds.graph, kernel, x);
  const GaussianMessageField field = fwd.field();
  if (scores != nullptr) *scores = uncertainty_scores(field);
  return predict_probability(field, mc_samples, derive_seed(seed, 2));
}

inline void check_compatible(const Checkpoint& ck, const Dataset& ds, Index model_classes, const std::string& name) {
  if (ck.params.arch.input_dim != ds.num_features() || ck.params.arch.output_dim != model_classes) {
    std::ostringstream msg;
    msg << "checkpoint " << name << " expects " << ck.params.arch.input_dim << " features and "
        << ck.params.arch.output_dim << " classes; dataset provides " << ds.num_features()
        << " features and " << model_classes << " classes";
    throw InputError(msg.str());
  }
}

inline Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  try {
    return checkpoint_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw InputError("checkpoint " + path.string() + ": " + e.what());
  }
}

/// Evaluates one checkpoint on the split recorded in its provenance (falls
/// back to regenerating it from the config) and fills in distances.
inline EvaluatedRun evaluate_checkpoint(const ExperimentConfig& c, const LoadedDataset& d,
                                        const std::filesystem::path& path, std::uint64_t seed) {
  const Checkpoint ck = read_checkpoint(path);
  const Split split = ck.provenance.contains("split") ? split_from_json(ck.provenance.at("split"))
                                                      : split_for_seed(c, d, seed);
  const LabelMap map = make_label_map(d.ds.num_classes, split.ood_class);
  check_compatible(ck, d.ds, map.num_model_classes(), path.string());
  const SparseFeatures x = to_sparse(ck.normalize_features ? row_normalize(d.ds.features) : d.ds.features);
  const PropagationKernel kernel = build_kernel(d.ds.graph);
  EvaluatedRun run{ck.method, seed, split, {}, std::nullopt};
  const Matrix probs = model_probabilities(ck, d.ds, kernel, x, c.train.mc_samples_eval, seed, &run.scores);
  run.report = build_eval_report(probs, run.scores ? &*run.scores : nullptr, d.ds, map, split.test,
                                 split.ood_test, c.num_bins);
  const TopologyAnalysis topo = topology_analysis(run.report, d.ds.graph, split);
  for (Index k = 0; k < run.report.per_node.size(); ++k) run.report.per_node[k].dist_mean = topo.dist_mean[k];
  return run;
}

inline std::string per_node_csv(const EvalReport& r, const Dataset& ds, const nlohmann::json& provenance) {
  std::ostringstream out;
  out << provenance_line(provenance);
  out << "node_id,label,pred,p_max,std_dev,avg_std,entropy,degree,dist_mean,is_ood\n";
  for (const auto& n : r.per_node)
    out << ds.node_ids[n.node] << ',' << ds.class_names[n.label] << ',' << ds.class_names[n.pred] << ','
        << fmt_value(n.p_max) << ',' << fmt_value(n.std_dev) << ',' << fmt_value(n.avg_std) << ','
        << fmt_value(n.entropy) << ',' << n.degree << ',' << fmt_value(n.dist_mean) << ','
        << (n.is_ood ? 1 : 0) << '\n';
  return out.str();
}

inline nlohmann::json report_summary_json(const EvalReport& r, const nlohmann::json& provenance) {
  nlohmann::json j;
  j["provenance"] = provenance;
  j["acc"] = r.acc;
  j["ece"] = r.ece;
  j["ace"] = r.ace;
  j["num_bins"] = r.num_bins;
  j["num_nodes"] = r.per_node.size();
  j["bins"] = nlohmann::json::array();
  for (const auto& b : r.bins)
    j["bins"].push_back({{"count", b.count}, {"mean_confidence", b.mean_confidence}, {"mean_accuracy", b.mean_accuracy}});
  return j;
}

/// Population mean and standard deviation.
inline std::pair<double, double> mean_std(const std::vector<double>& v) {
  if (v.empty()) return {kNaN, kNaN};
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return {m, std::sqrt(s / static_cast<double>(v.size()))};
}

struct AggregateRow {
  std::string dataset;
  Index per_class = 0;
  std::string method;
  std::vector<double> acc;  // fractions
  std::vector<double> ace;  // percent
  std::vector<double> ece;  // percent
};

/// Table-style aggregate: ACC in percent, mean and population std over seeds.
inline std::string aggregate_csv(const std::vector<AggregateRow>& rows, const nlohmann::json& provenance) {
  std::ostringstream out;
  out << provenance_line(provenance);
  out << "# mean and population standard deviation over seeds; acc, ace, ece in percent\n";
  out << "dataset,per_class,method,num_seeds,acc_mean,acc_std,ace_mean,ace_std,ece_mean,ece_std\n";
  for (const auto& r : rows) {
    std::vector<double> acc_pct;
    for (double a : r.acc) acc_pct.push_back(100.0 * a);
    const auto [am, as] = mean_std(acc_pct);
    const auto [cm, cs] = mean_std(r.ace);
    const auto [em, es] = mean_std(r.ece);
    out << r.dataset << ',' << r.per_class << ',' << r.method << ',' << r.acc.size() << ',' << fmt_fixed(am, 2)
        << ',' << fmt_fixed(as, 2) << ',' << fmt_fixed(cm, 2) << ',' << fmt_fixed(cs, 2) << ','
        << fmt_fixed(em, 2) << ',' << fmt_fixed(es, 2) << '\n';
  }
  return out.str();
}

// ------------------------------------------------------------------ commands

struct TrainSummary {
  std::vector<std::filesystem::path> checkpoints;
  std::vector<TrainTrace> traces;
};

inline TrainSummary cmd_train(const ExperimentConfig& c) {
  c.validate();
  const LoadedDataset d = load_dataset(c);
  TrainSummary s;
  for (std::uint64_t seed : c.seeds)
    for (auto& run : train_seed(c, d, seed)) {
      s.checkpoints.push_back(checkpoint_path(c, run.method, seed));
      s.traces.push_back(run.result.trace);
    }
  return s;
}

struct EvalSummary {
  std::vector<EvaluatedRun> runs;
  std::vector<AggregateRow> aggregate;
};

/// Evaluates checkpoints found in `checkpoint_dir` (default: <out>/checkpoints)
/// and writes per-run reports plus <out>/aggregate.csv.
inline EvalSummary cmd_eval(const ExperimentConfig& c, std::optional<std::filesystem::path> checkpoint_dir = {}) {
  c.validate();
  const LoadedDataset d = load_dataset(c);
  EvalSummary s;
  const std::filesystem::path out(c.out_dir);
  for (Method m : c.methods) {
    AggregateRow row{c.dataset_name, c.per_class, method_name(m), {}, {}, {}};
    for (std::uint64_t seed : c.seeds) {
      std::filesystem::path path = checkpoint_path(c, m, seed);
      if (checkpoint_dir) path = *checkpoint_dir / path.filename();
      EvaluatedRun run = evaluate_checkpoint(c, d, path, seed);
      nlohmann::json prov = run_provenance(c, seed, m);
      prov["checkpoint"] = path.filename().string();
      prov["mc_seed"] = derive_seed(seed, 2);
      const std::string stem = std::string(c.mode == Mode::ood ? "ood_" : "") + method_name(m) + "_seed" + std::to_string(seed);
      write_json(out / "reports" / (stem + ".json"), report_summary_json(run.report, prov));
      write_atomic(out / "reports" / (stem + ".csv"), per_node_csv(run.report, d.ds, prov));
      row.acc.push_back(run.report.acc);
      row.ace.push_back(run.report.ace);
      row.ece.push_back(run.report.ece);
      s.runs.push_back(std::move(run));
    }
    s.aggregate.push_back(std::move(row));
  }
  write_atomic(out / "aggregate.csv", aggregate_csv(s.aggregate, {{"config", experiment_to_json(c)}}));
  return s;
}

struct OodRunSummary {
  Method method = Method::bup;
  std::uint64_t seed = 0;
  double pmax_indist = 0.0;
  double pmax_ood = 0.0;
  double std_indist = 0.0;
  double std_ood = 0.0;
  double acc_indist = 0.0;
};

struct OodSummary {
  std::vector<OodRunSummary> runs;
  std::vector<EvaluatedRun> evaluated;
};

namespace detail {
inline std::pair<double, double> mean_dispersion(const EvalReport& r, bool ood) {
  double p = 0.0, s = 0.0;
  Index n = 0;
  for (const auto& rec : r.per_node)
    if (rec.is_ood == ood) {
      p += rec.p_max;
      s += rec.std_dev;
      ++n;
    }
  if (n == 0) return {kNaN, kNaN};
  return {p / static_cast<double>(n), s / static_cast<double>(n)};
}
}  // namespace detail

/// Withheld-class experiment: trains on C-1 classes per seed, scores InDist
/// test nodes and withheld-class nodes with the same (C-1)-way head.
inline OodSummary cmd_ood(ExperimentConfig c) {
  c.mode = Mode::ood;
  c.validate();
  const LoadedDataset d = load_dataset(c);
  const std::filesystem::path out(c.out_dir);
  OodSummary s;
  constexpr Index hist_bins = 10;
  std::vector<std::vector<Index>> hist_in(c.methods.size(), std::vector<Index>(hist_bins, 0));
  std::vector<std::vector<Index>> hist_ood = hist_in;
  for (std::uint64_t seed : c.seeds) {
    train_seed(c, d, seed);
    for (Index mi = 0; mi < c.methods.size(); ++mi) {
      const Method m = c.methods[mi];
      EvaluatedRun run = evaluate_checkpoint(c, d, checkpoint_path(c, m, seed), seed);
      nlohmann::json prov = run_provenance(c, seed, m);
      prov["mc_seed"] = derive_seed(seed, 2);
      OodRunSummary r{m, seed};
      std::tie(r.pmax_indist, r.std_indist) = detail::mean_dispersion(run.report, false);
      std::tie(r.pmax_ood, r.std_ood) = detail::mean_dispersion(run.report, true);
      r.acc_indist = run.report.acc;
      for (const auto& rec : run.report.per_node)
        (rec.is_ood ? hist_ood : hist_in)[mi][confidence_bin(rec.p_max, hist_bins)]++;
      nlohmann::json j = report_summary_json(run.report, prov);
      j["ood"] = {{"pmax_indist", r.pmax_indist}, {"pmax_ood", to_json_or_null(r.pmax_ood)},
                  {"std_indist", r.std_indist},   {"std_ood", to_json_or_null(r.std_ood)},
                  {"ood_class", d.ds.class_names[d.ood_class]}};
      const std::string stem = std::string("ood_") + method_name(m) + "_seed" + std::to_string(seed);
      write_json(out / "ood" / (stem + ".json"), j);
      write_atomic(out / "ood" / (stem + ".csv"), per_node_csv(run.report, d.ds, prov));
      s.runs.push_back(r);
      s.evaluated.push_back(std::move(run));
    }
  }

  const nlohmann::json prov = {{"config", experiment_to_json(c)}};
  std::ostringstream table;
  table << provenance_line(prov);
  table << "# means over seeds of per-node averages; population std over seeds\n";
  table << "dataset,per_class,method,num_seeds,pmax_indist,pmax_ood,std_indist,std_ood,pmax_indist_sd,pmax_ood_sd\n";
  std::ostringstream hist;
  hist << provenance_line(prov);
  hist << "method,bin_lo,bin_hi,indist_count,ood_count\n";
  for (Index mi = 0; mi < c.methods.size(); ++mi) {
    std::vector<double> pi, po, si, so;
    for (const auto& r : s.runs)
      if (r.method == c.methods[mi]) {
        pi.push_back(r.pmax_indist);
        po.push_back(r.pmax_ood);
        si.push_back(r.std_indist);
        so.push_back(r.std_ood);
      }
    table << c.dataset_name << ',' << c.per_class << ',' << method_name(c.methods[mi]) << ',' << pi.size() << ','
          << fmt_fixed(mean_std(pi).first) << ',' << fmt_fixed(mean_std(po).first) << ','
          << fmt_fixed(mean_std(si).first) << ',' << fmt_fixed(mean_std(so).first) << ','
          << fmt_fixed(mean_std(pi).second) << ',' << fmt_fixed(mean_std(po).second) << '\n';
    for (Index b = 0; b < hist_bins; ++b)
      hist << method_name(c.methods[mi]) << ',' << fmt_fixed(static_cast<double>(b) / hist_bins, 1) << ','
           << fmt_fixed(static_cast<double>(b + 1) / hist_bins, 1) << ',' << hist_in[mi][b] << ','
           << hist_ood[mi][b] << '\n';
  }
  write_atomic(out / "ood" / "table.csv", table.str());
  write_atomic(out / "ood" / "pmax_histogram.csv", hist.str());
  return s;
}

struct AnalyzeSummary {
  std::vector<std::uint64_t> seeds;
  std::vector<TopologyAnalysis> analyses;
};

/// Degree/distance versus uncertainty for BUP checkpoints.
inline AnalyzeSummary cmd_analyze(const ExperimentConfig& c, std::optional<std::filesystem::path> checkpoint_dir = {}) {
  c.validate();
  const LoadedDataset d = load_dataset(c);
  const std::filesystem::path out(c.out_dir);
  AnalyzeSummary s;
  nlohmann::json corr = nlohmann::json::array();
  Index negative_avg = 0, negative_ent = 0;
  for (std::uint64_t seed : c.seeds) {
    std::filesystem::path path = checkpoint_path(c, Method::bup, seed);
    if (checkpoint_dir) path = *checkpoint_dir / path.filename();
    const EvaluatedRun run = evaluate_checkpoint(c, d, path, seed);
    if (!run.scores) throw InputError("analyze: checkpoint " + path.string() + " has no variance channel");
    TopologyAnalysis t = topology_analysis(run.report, d.ds.graph, run.split);
    const nlohmann::json prov = run_provenance(c, seed, Method::bup);
    std::ostringstream buckets;
    buckets << provenance_line(prov) << "degree,count,mean_avg_std,mean_entropy\n";
    for (const auto& b : t.buckets)
      buckets << b.degree << ',' << b.count << ',' << fmt_value(b.mean_avg_std) << ',' << fmt_value(b.mean_entropy) << '\n';
    write_atomic(out / "analysis" / ("degree_buckets_seed" + std::to_string(seed) + ".csv"), buckets.str());
    if (t.spearman_degree_avg_std < 0.0) ++negative_avg;
    if (t.spearman_degree_entropy < 0.0) ++negative_ent;
    corr.push_back({{"seed", seed},
                    {"num_nodes", t.num_nodes},
                    {"spearman_degree_avg_std", t.spearman_degree_avg_std},
                    {"spearman_degree_entropy", t.spearman_degree_entropy},
                    {"spearman_dist_mean_avg_std", t.spearman_dist_mean_avg_std},
                    {"spearman_dist_nearest_avg_std", t.spearman_dist_nearest_avg_std},
                    {"unreachable", t.unreachable.size()}});
    s.seeds.push_back(seed);
    s.analyses.push_back(std::move(t));
  }
  write_json(out / "analysis" / "correlations.json",
             {{"provenance", {{"config", experiment_to_json(c)}}},
              {"per_seed", corr},
              {"seeds_negative_avg_std", negative_avg},
              {"seeds_negative_entropy", negative_ent},
              {"num_seeds", c.seeds.size()}});
  return s;
}

}  // namespace bup
