// Acceptance runner.  Prints one line per criterion:
//   AC<k> PASS|FAIL|NOT RUN  <summary>  [measured values]
// Exit status: 0 when every criterion that ran passed, 1 otherwise, 77 when
// the benchmark suite was requested but no dataset directory is available.

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <sys/wait.h>

#include <CLI11.hpp>

#include "bup/experiment.hpp"
#include "support/fixtures.hpp"

namespace {

using namespace bup;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

struct Outcome {
  bool ran = true;
  bool passed = false;
  std::string detail;
};

int failures = 0;

void report(const std::string& id, const std::string& what, const Outcome& o) {
  const char* status = !o.ran ? "NOT RUN" : (o.passed ? "PASS" : "FAIL");
  if (o.ran && !o.passed) ++failures;
  std::cout << id << ' ' << status << "  " << what << "  [" << o.detail << "]" << std::endl;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v, int prec = 4) {
  std::ostringstream s;
  s.precision(prec);
  s << v;
  return s.str();
}

// ---------------------------------------------------------------------- AC1

double bup_objective(const BupParameters& p, const Graph& g, const PropagationKernel& k, const Matrix& x,
                     const std::vector<Index>& labels, const std::vector<Index>& idx) {
  const BupForward f = forward(p, g, k, x);
  double total = 0.0;
  for (Index i : idx) {
    const auto r = static_cast<Eigen::Index>(i);
    total += loss_diag_approx(f.mean.output().row(r).transpose(), f.variance.output().row(r).transpose(),
                              labels[i]).nll;
  }
  return total / static_cast<double>(idx.size());
}

Outcome gradient_check() {
  const auto t0 = Clock::now();
  const Graph g = testing::five_node_graph();
  const PropagationKernel k = build_kernel(g);
  const std::vector<Index> labels{0, 2, 1, 2, 0};
  const std::vector<Index> train{0, 1, 2, 3, 4};
  double worst = 0.0;
  Index params = 0;
  bool ok = true;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const Matrix x = testing::random_matrix(5, 4, seed, 0.0, 1.0);
    const BupParameters p0 = init_parameters({4, 3, 2, 3, 3}, 1.0, seed);
    const Gradients gr = backward(p0, g, k, x, labels, train);
    const auto f = [&](const Eigen::VectorXd& theta) {
      BupParameters p = p0;
      unflatten(p, theta);
      return bup_objective(p, g, k, x, labels, train);
    };
    const GradientCheckReport r = finite_diff_check(f, flatten(gr.grad), flatten(p0), 1e-5, 1e-4);
    ok = ok && r.passed;
    worst = std::max(worst, r.max_rel_error);
    params = flatten(p0).size();
  }
  const double secs = seconds_since(t0);
  return {true, ok && secs < 10.0,
          "max rel err " + fmt(worst) + " (tol 1e-4) over " + std::to_string(params) +
              " weights x 3 seeds, " + fmt(secs, 3) + " s (limit 10)"};
}

// ---------------------------------------------------------------------- AC2

Outcome schur_equivalence() {
  const auto t0 = Clock::now();
  std::mt19937_64 gen(2024);
  const double lambdas[] = {1.0, 2.0, 10.0};
  double worst = 0.0;
  for (int inst = 0; inst < 100; ++inst) {
    const Index n = 1 + gen() % 50;
    const double p = std::uniform_real_distribution<double>(0.02, 0.6)(gen);
    const Graph g = testing::random_graph(n, p, gen());
    const Matrix v = testing::random_matrix(n, 4, gen(), 1e-3, 10.0);
    const double lambda = lambdas[inst % 3];
    const Matrix a = conditional_variance(v, g, lambda, ConditioningMethod::closed_form);
    const Matrix b = conditional_variance(v, g, lambda, ConditioningMethod::dense_schur);
    worst = std::max(worst, ((a - b).cwiseAbs().array() / b.cwiseAbs().array()).maxCoeff());
  }
  const double secs = seconds_since(t0);
  return {true, worst <= 1e-10 && secs < 30.0,
          "max rel err " + fmt(worst) + " (tol 1e-10) on 100 graphs, " + fmt(secs, 3) + " s (limit 30)"};
}

// ---------------------------------------------------------------------- AC3

Outcome covariance_validity() {
  std::mt19937_64 gen(77);
  int spd = 0;
  for (int inst = 0; inst < 1000; ++inst) {
    const Index n = 2 + gen() % 40;
    const Graph g = testing::random_graph(n, std::uniform_real_distribution<double>(0.05, 0.9)(gen), gen());
    const Vector v = testing::random_matrix(n, 1, gen(), 1e-4, 100.0).col(0);
    const double lambda = 1.0 + std::exponential_distribution<double>(0.5)(gen);
    // the busiest node has the largest block
    Index node = 0;
    for (Index i = 1; i < n; ++i)
      if (g.neighbors(i).size() > g.neighbors(node).size()) node = i;
    const Matrix m = neighborhood_covariance(g, node, v, lambda);
    if (Eigen::LLT<Matrix>(m).info() == Eigen::Success) ++spd;
  }
  return {true, spd == 1000, std::to_string(spd) + "/1000 Cholesky factorizations succeeded"};
}

// ---------------------------------------------------------------------- AC4

struct LossInstance {
  Eigen::VectorXd m, var;
  Index label;
};

LossInstance random_loss_instance(std::mt19937_64& gen, Index classes) {
  std::uniform_real_distribution<double> mu(-2.0, 2.0), sv(0.1, 2.0);
  LossInstance in{Eigen::VectorXd(classes), Eigen::VectorXd(classes), static_cast<Index>(gen() % classes)};
  for (Eigen::Index c = 0; c < static_cast<Eigen::Index>(classes); ++c) {
    in.m(c) = mu(gen);
    in.var(c) = sv(gen);
  }
  return in;
}

Outcome loss_oracle() {
  const auto t0 = Clock::now();
  constexpr Index samples = 1'000'000;
  std::mt19937_64 gen(4);
  bool ok = true;
  double worst_z = 0.0;
  for (int k = 0; k < 50; ++k) {
    const LossInstance in = random_loss_instance(gen, 2);
    const double approx = loss_diag_approx(in.m, in.var, in.label).likelihood;
    const OrthantEstimate e = mvn_orthant_mc(make_pairwise_diff(in.m, in.var, in.label), samples, gen());
    // a degenerate estimate (0 or 1 hits) still carries one sample of resolution
    const double se = std::max(e.std_error, 1.0 / static_cast<double>(samples));
    const double z = std::abs(approx - e.probability) / se;
    worst_z = std::max(worst_z, z);
    ok = ok && z <= 3.0;
  }
  std::ostringstream detail;
  detail << "C=2 worst |diag-mc|/se " << fmt(worst_z, 3) << " (limit 3)";
  for (Index classes : {3u, 7u}) {
    double mean_gap = 0.0, max_gap = 0.0;
    for (int k = 0; k < 20; ++k) {
      const LossInstance in = random_loss_instance(gen, classes);
      const double approx = loss_diag_approx(in.m, in.var, in.label).likelihood;
      const double mc = mvn_orthant_mc(make_pairwise_diff(in.m, in.var, in.label), samples, gen()).probability;
      mean_gap += (mc - approx) / 20.0;
      max_gap = std::max(max_gap, std::abs(mc - approx));
    }
    detail << "; C=" << classes << " gap mean " << fmt(mean_gap, 3) << " max " << fmt(max_gap, 3);
  }
  bool monotone = true;
  for (Index classes : {2u, 3u, 7u})
    for (int k = 0; k < 50; ++k) {
      LossInstance in = random_loss_instance(gen, classes);
      const auto star = static_cast<Eigen::Index>(in.label);
      double prev = loss_diag_approx(in.m, in.var, in.label).likelihood;
      for (int step = 0; step < 40; ++step) {
        in.m(star) += 0.1;
        const double next = loss_diag_approx(in.m, in.var, in.label).likelihood;
        monotone = monotone && next >= prev;
        prev = next;
      }
    }
  const double secs = seconds_since(t0);
  detail << "; monotone in m*: " << (monotone ? "yes" : "no") << "; " << fmt(secs, 3) << " s (limit 120)";
  return {true, ok && monotone && secs < 120.0, detail.str()};
}

// ---------------------------------------------------------------------- AC9

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) {
      std::ifstream in(e.path(), std::ios::binary);
      files[fs::relative(e.path(), dir).string()] = std::string(std::istreambuf_iterator<char>(in), {});
    }
  return files;
}

Outcome determinism() {
  const fs::path dir = testing::temp_dir("acceptance_determinism");
  SyntheticSpec spec = testing::small_spec(11);
  const Dataset ds = make_synthetic_citation(spec);
  write_planetoid(ds, (dir / "synthetic.content").string(), (dir / "synthetic.cites").string());
  ExperimentConfig c;
  c.dataset_dir = dir.string();
  c.dataset_name = "synthetic";
  c.per_class = 5;
  c.val_size = 15;
  c.test_size = 40;
  c.seeds = {0, 1};
  c.out_dir = (dir / "out").string();
  c.train.max_epochs = 60;
  c.train.patience = 20;
  const auto run = [&] {
    fs::remove_all(c.out_dir);
    cmd_train(c);
    cmd_eval(c);
    return snapshot(c.out_dir);
  };
  const auto a = run();
  const auto b = run();
  Index differing = 0;
  for (const auto& [name, bytes] : a)
    if (!b.count(name) || b.at(name) != bytes) ++differing;
  const bool same_set = a.size() == b.size();
  fs::remove_all(dir);
  return {true, same_set && differing == 0 && !a.empty(),
          std::to_string(a.size()) + " output files compared, " + std::to_string(differing) + " differ"};
}

// ---------------------------------------------------------------------- AC10

Outcome property_suite(const std::string& unit_binary) {
  const auto t0 = Clock::now();
  const std::string cmd = unit_binary + " --gtest_brief=1 > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  const double secs = seconds_since(t0);
  const bool exited_ok = WIFEXITED(status) && WEXITSTATUS(status) == 0;
  return {true, exited_ok && secs < 300.0,
          std::string("unit/property suite ") + (exited_ok ? "passed" : "failed") + " in " + fmt(secs, 3) +
              " s (limit 300)"};
}

// ------------------------------------------------------------------ AC5-AC8

ExperimentConfig benchmark_config(const fs::path& data_dir, const std::string& name, Index per_class,
                                  const fs::path& out) {
  ExperimentConfig c;
  c.dataset_dir = data_dir.string();
  c.dataset_name = name;
  c.per_class = per_class;
  c.seeds = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  c.out_dir = out.string();
  return c;
}

double mean_of(const std::vector<EvaluatedRun>& runs, Method m, double EvalReport::*field) {
  double s = 0.0;
  int n = 0;
  for (const auto& r : runs)
    if (r.method == m) {
      s += r.report.*field;
      ++n;
    }
  return s / n;
}

std::map<std::string, Outcome> benchmark_suite(const fs::path& data_dir, const fs::path& out) {
  std::map<std::string, Outcome> res;
  const ExperimentConfig cora = benchmark_config(data_dir, "cora", 20, out / "cora");
  const ExperimentConfig citeseer = benchmark_config(data_dir, "citeseer", 5, out / "citeseer");

  {
    cmd_train(cora);
    const EvalSummary s = cmd_eval(cora);
    const double acc_bup = 100.0 * mean_of(s.runs, Method::bup, &EvalReport::acc);
    const double acc_gcn = 100.0 * mean_of(s.runs, Method::gcn, &EvalReport::acc);
    const double ece_bup = mean_of(s.runs, Method::bup, &EvalReport::ece);
    const double ece_gcn = mean_of(s.runs, Method::gcn, &EvalReport::ece);
    const bool ok = std::abs(acc_bup - 78.64) <= 5.0 && std::abs(acc_gcn - 79.10) <= 5.0 && ece_bup < ece_gcn;
    res["AC5"] = {true, ok,
            "BUP acc " + fmt(acc_bup) + " (78.64+-5), GCN acc " + fmt(acc_gcn) + " (79.10+-5), ECE " +
                fmt(ece_bup) + " < " + fmt(ece_gcn) + "; soft target |BUP ECE - 6.80| <= 6: " +
                (std::abs(ece_bup - 6.80) <= 6.0 ? "met" : "not met")};

    const AnalyzeSummary a = cmd_analyze(cora);
    int neg_std = 0, neg_ent = 0;
    for (const auto& t : a.analyses) {
      neg_std += t.spearman_degree_avg_std < 0.0;
      neg_ent += t.spearman_degree_entropy < 0.0;
    }
    res["AC8"] = {true, neg_std >= 8 && neg_ent >= 8,
            "avg_std negative " + std::to_string(neg_std) + "/10, entropy negative " + std::to_string(neg_ent) + "/10"};
  }
  {
    cmd_train(citeseer);
    const EvalSummary s = cmd_eval(citeseer);
    const double acc_bup = 100.0 * mean_of(s.runs, Method::bup, &EvalReport::acc);
    const double acc_gcn = 100.0 * mean_of(s.runs, Method::gcn, &EvalReport::acc);
    res["AC6"] = {true, acc_bup > acc_gcn, "BUP " + fmt(acc_bup) + " vs GCN " + fmt(acc_gcn)};
  }
  {
    ExperimentConfig ood = cora;
    ood.mode = Mode::ood;
    ood.out_dir = (out / "cora_ood").string();
    ood.methods = {Method::bup};
    const OodSummary s = cmd_ood(ood);
    double pin = 0.0, pout = 0.0, sin = 0.0, sout = 0.0;
    for (const auto& r : s.runs) {
      pin += r.pmax_indist / s.runs.size();
      pout += r.pmax_ood / s.runs.size();
      sin += r.std_indist / s.runs.size();
      sout += r.std_ood / s.runs.size();
    }
    res["AC7"] = {true, pin - pout >= 0.05 && sin > sout,
            "p_max " + fmt(pin) + " - " + fmt(pout) + " = " + fmt(pin - pout) + " (>= 0.05), std_dev " + fmt(sin) +
                " > " + fmt(sout)};
  }
  return res;
}

const std::map<std::string, std::string> kBenchmarkNames{
    {"AC5", "cora per_class=20 accuracy and ECE ordering"},
    {"AC6", "citeseer per_class=5 BUP accuracy above GCN"},
    {"AC7", "OOD dispersion on cora"},
    {"AC8", "degree vs uncertainty Spearman negative in >= 8/10 seeds"}};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria runner"};
  std::string suite = "core";
  std::string unit_binary = BUP_UNIT_TESTS_PATH;
  std::string data_dir;
  if (const char* env = std::getenv("BUP_DATA_DIR")) data_dir = env;
  std::string out = (fs::temp_directory_path() / "bup_acceptance_benchmark").string();
  app.add_option("--suite", suite, "core or benchmark")->check(CLI::IsMember({"core", "benchmark"}));
  app.add_option("--unit-tests", unit_binary, "unit test binary for the property suite");
  app.add_option("--data-dir", data_dir, "directory with cora.* and citeseer.* (default $BUP_DATA_DIR)");
  app.add_option("--out", out, "output directory for benchmark runs");
  CLI11_PARSE(app, argc, argv);

  const Outcome skipped_core{false, false, "run with --suite core"};
  if (suite == "core") {
    report("AC1", "end-to-end gradient vs central differences", gradient_check());
    report("AC2", "closed-form vs Schur conditional variance", schur_equivalence());
    report("AC3", "neighborhood covariance block is SPD", covariance_validity());
    report("AC4", "diagonal likelihood vs orthant Monte Carlo", loss_oracle());
    const Outcome bench{false, false, "benchmark suite: --suite benchmark with cora/citeseer data"};
    for (const auto& [id, name] : kBenchmarkNames) report(id, name, bench);
    report("AC9", "byte-identical reruns", determinism());
    report("AC10", "property suites under 5 minutes", property_suite(unit_binary));
    return failures == 0 ? 0 : 1;
  }

  for (const char* id : {"AC1", "AC2", "AC3", "AC4"}) report(id, "core criterion", skipped_core);
  const bool have_data = !data_dir.empty() && fs::exists(fs::path(data_dir) / "cora.content") &&
                         fs::exists(fs::path(data_dir) / "citeseer.content");
  if (!have_data) {
    const Outcome missing{false, false,
                          "no cora.content/citeseer.content in '" + data_dir + "' (set BUP_DATA_DIR)"};
    for (const auto& [id, name] : kBenchmarkNames) report(id, name, missing);
  } else {
    std::map<std::string, Outcome> res;
    try {
      res = benchmark_suite(data_dir, out);
    } catch (const std::exception& e) {
      std::cout << "benchmark aborted: " << e.what() << std::endl;
    }
    for (const auto& [id, name] : kBenchmarkNames)
      report(id, name, res.count(id) ? res.at(id) : Outcome{true, false, "not reached"});
  }
  for (const char* id : {"AC9", "AC10"}) report(id, "core criterion", skipped_core);
  if (!have_data) return 77;
  return failures == 0 ? 0 : 1;
}
