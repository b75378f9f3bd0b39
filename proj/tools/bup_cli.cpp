// bup: train, evaluate and analyze uncertainty-propagating node classifiers.
//
//   bup train   --dataset-dir data --dataset cora --per-class 20 --seeds 0-9 --out runs/cora20
//   bup eval    ... same flags ...          (reads <out>/checkpoints)
//   bup ood     --ood-class 6 ...           (trains and evaluates with one class withheld)
//   bup analyze ...                         (degree / distance vs. uncertainty)
//
// Exit codes: 0 ok, 1 input error, 2 training/numerical error, 3 I/O error.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "bup/error.hpp"
#include "bup/experiment.hpp"

namespace {

std::vector<std::uint64_t> parse_seeds(const std::string& spec) {
  std::vector<std::uint64_t> seeds;
  std::size_t pos = 0;
  while (pos <= spec.size()) {
    const auto comma = spec.find(',', pos);
    const std::string item = spec.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
    if (item.empty()) throw bup::InputError("--seeds: empty item in '" + spec + "'");
    try {
      const auto dash = item.find('-');
      if (dash == std::string::npos) {
        seeds.push_back(std::stoull(item));
      } else {
        const auto lo = std::stoull(item.substr(0, dash));
        const auto hi = std::stoull(item.substr(dash + 1));
        if (hi < lo) throw bup::InputError("--seeds: descending range '" + item + "'");
        for (auto s = lo; s <= hi; ++s) seeds.push_back(s);
      }
    } catch (const std::logic_error&) {
      throw bup::InputError("--seeds: cannot parse '" + item + "'");
    }
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return seeds;
}

struct Flags {
  std::string config;
  std::string dataset_dir;
  std::string dataset;
  std::optional<std::size_t> per_class;
  std::string seeds;
  std::string mode;
  std::optional<std::size_t> ood_class;
  std::string out;
  std::string methods;
  std::string checkpoints;
  std::optional<std::size_t> max_epochs;
  std::optional<double> lambda;
};

void add_flags(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config, "JSON experiment config; flags override it");
  cmd->add_option("--dataset-dir", f.dataset_dir, "directory holding <name>.content and <name>.cites");
  cmd->add_option("--dataset", f.dataset, "dataset name (file stem), default cora");
  cmd->add_option("--per-class", f.per_class, "training nodes per class");
  cmd->add_option("--seeds", f.seeds, "seed list, e.g. 0-9 or 1,4,7");
  cmd->add_option("--mode", f.mode, "normal or ood")->check(CLI::IsMember({"normal", "ood"}));
  cmd->add_option("--ood-class", f.ood_class, "class index withheld in ood mode (default: last)");
  cmd->add_option("--out", f.out, "output directory");
  cmd->add_option("--methods", f.methods, "comma list of bup,gcn");
  cmd->add_option("--max-epochs", f.max_epochs, "override train.max_epochs");
  cmd->add_option("--lambda", f.lambda, "override train.lambda");
}

bup::ExperimentConfig resolve(const Flags& f) {
  bup::ExperimentConfig c = f.config.empty() ? bup::ExperimentConfig{} : bup::load_experiment_config(f.config);
  if (!f.dataset_dir.empty()) c.dataset_dir = f.dataset_dir;
  if (!f.dataset.empty()) c.dataset_name = f.dataset;
  if (f.per_class) c.per_class = *f.per_class;
  if (!f.seeds.empty()) c.seeds = parse_seeds(f.seeds);
  if (!f.mode.empty()) c.mode = f.mode == "ood" ? bup::Mode::ood : bup::Mode::normal;
  if (f.ood_class) c.ood_class = *f.ood_class;
  if (!f.out.empty()) c.out_dir = f.out;
  if (!f.methods.empty()) {
    c.methods.clear();
    std::size_t pos = 0;
    while (true) {
      const auto comma = f.methods.find(',', pos);
      c.methods.push_back(bup::parse_method(f.methods.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos)));
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
  }
  if (f.max_epochs) {
    c.train.max_epochs = *f.max_epochs;
    c.train.patience = std::min(c.train.patience, c.train.max_epochs);
  }
  if (f.lambda) c.train.lambda = *f.lambda;
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian uncertainty propagation for node classification"};
  app.require_subcommand(1);
  Flags f;
  auto* train = app.add_subcommand("train", "train one checkpoint per seed and method");
  auto* eval = app.add_subcommand("eval", "evaluate checkpoints; writes reports and aggregate.csv");
  auto* ood = app.add_subcommand("ood", "withheld-class experiment");
  auto* analyze = app.add_subcommand("analyze", "topology vs. uncertainty for BUP checkpoints");
  for (auto* cmd : {train, eval, ood, analyze}) add_flags(cmd, f);
  for (auto* cmd : {eval, analyze})
    cmd->add_option("--checkpoints", f.checkpoints, "checkpoint directory (default <out>/checkpoints)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    const bup::ExperimentConfig c = resolve(f);
    std::optional<std::filesystem::path> ckdir;
    if (!f.checkpoints.empty()) ckdir = f.checkpoints;
    if (train->parsed()) {
      const auto s = bup::cmd_train(c);
      for (const auto& p : s.checkpoints) std::cout << p.string() << '\n';
    } else if (eval->parsed()) {
      const auto s = bup::cmd_eval(c, ckdir);
      std::cout << bup::csv_body(bup::aggregate_csv(s.aggregate, {}));
    } else if (ood->parsed()) {
      const auto s = bup::cmd_ood(c);
      std::cout << "method,seed,pmax_indist,pmax_ood,std_indist,std_ood,acc_indist\n";
      for (const auto& r : s.runs)
        std::cout << bup::method_name(r.method) << ',' << r.seed << ',' << bup::fmt_fixed(r.pmax_indist) << ','
                  << bup::fmt_fixed(r.pmax_ood) << ',' << bup::fmt_fixed(r.std_indist) << ','
                  << bup::fmt_fixed(r.std_ood) << ',' << bup::fmt_fixed(r.acc_indist) << '\n';
    } else if (analyze->parsed()) {
      const auto s = bup::cmd_analyze(c, ckdir);
      std::cout << "seed,spearman_degree_avg_std,spearman_degree_entropy,spearman_dist_mean_avg_std\n";
      for (std::size_t k = 0; k < s.seeds.size(); ++k)
        std::cout << s.seeds[k] << ',' << bup::fmt_fixed(s.analyses[k].spearman_degree_avg_std) << ','
                  << bup::fmt_fixed(s.analyses[k].spearman_degree_entropy) << ','
                  << bup::fmt_fixed(s.analyses[k].spearman_dist_mean_avg_std) << '\n';
    }
  } catch (const bup::InputError& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return 1;
  } catch (const bup::TrainingError& e) {
    std::cerr << "training error: " << e.what() << '\n';
    return 2;
  } catch (const bup::InvariantError& e) {
    std::cerr << "numerical invariant violated: " << e.what() << '\n';
    return 2;
  } catch (const bup::IoError& e) {
    std::cerr << "io error: " << e.what() << '\n';
    return 3;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "io error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
