// Writes a synthetic citation dataset as <out>/<name>.content and <out>/<name>.cites.

#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "bup/dataset.hpp"
#include "bup/synthetic.hpp"

int main(int argc, char** argv) {
  CLI::App app{"synthetic citation graph generator"};
  bup::SyntheticSpec spec;
  std::string out = ".";
  std::string name = "synth";
  app.add_option("--out", out, "output directory");
  app.add_option("--name", name, "file stem");
  app.add_option("--classes", spec.num_classes);
  app.add_option("--nodes-per-class", spec.nodes_per_class);
  app.add_option("--features", spec.num_features);
  app.add_option("--avg-degree", spec.avg_degree);
  app.add_option("--homophily", spec.homophily);
  app.add_option("--words", spec.words_per_node);
  app.add_option("--topic-fraction", spec.topic_fraction);
  app.add_option("--seed", spec.seed);
  CLI11_PARSE(app, argc, argv);

  try {
    std::filesystem::create_directories(out);
    const bup::Dataset ds = bup::make_synthetic_citation(spec);
    const auto stem = std::filesystem::path(out) / name;
    bup::write_planetoid(ds, stem.string() + ".content", stem.string() + ".cites");
    std::cout << ds.num_nodes() << " nodes, " << ds.graph.num_edges() << " edges, " << ds.num_classes
              << " classes -> " << stem.string() << ".{content,cites}\n";
  } catch (const std::exception& e) {
    std::cerr << e.what() << '\n';
    return 3;
  }
  return 0;
}
