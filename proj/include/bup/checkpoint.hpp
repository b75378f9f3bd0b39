#pragma once

// JSON checkpoint:
// {
//   "format": "bup-checkpoint", "version": 1, "method": "bup" | "gcn",
//   "architecture": {input_dim, hidden_width, num_layers, output_dim, var_input_width},
//   "lambda": ..., "normalize_features": bool,
//   "mean_weights": [{"rows": r, "cols": c, "data": [row-major]}...],
//   "var_input_weights": {...}, "var_input_bias": [...], "var_weights": [...],   (bup only)
//   "provenance": {...}
// }

#include <string>

#include <nlohmann/json.hpp>

#include "bup/error.hpp"
#include "bup/model.hpp"
#include "bup/trainer.hpp"

namespace bup {

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  Method method = Method::bup;
  BupParameters params;
  bool normalize_features = true;
  nlohmann::json provenance = nlohmann::json::object();
};

namespace detail {

inline nlohmann::json matrix_to_json(const Matrix& m) {
  nlohmann::json j;
  j["rows"] = m.rows();
  j["cols"] = m.cols();
  j["data"] = std::vector<double>(m.data(), m.data() + m.size());
  return j;
}

inline Matrix matrix_from_json(const nlohmann::json& j, const std::string& name) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (rows < 0 || cols < 0 || static_cast<Eigen::Index>(data.size()) != rows * cols)
    throw InputError("checkpoint: " + name + " declares " + std::to_string(rows) + "x" +
                     std::to_string(cols) + " but holds " + std::to_string(data.size()) + " values");
  Matrix m(rows, cols);
  std::copy(data.begin(), data.end(), m.data());
  return m;
}

}  // namespace detail

inline nlohmann::json checkpoint_to_json(const Checkpoint& ck) {
  const auto& p = ck.params;
  nlohmann::json j;
  j["format"] = "bup-checkpoint";
  j["version"] = kCheckpointVersion;
  j["method"] = method_name(ck.method);
  j["architecture"] = {{"input_dim", p.arch.input_dim},
                       {"hidden_width", p.arch.hidden_width},
                       {"num_layers", p.arch.num_layers},
                       {"output_dim", p.arch.output_dim},
                       {"var_input_width", p.arch.var_input_width}};
  j["lambda"] = p.lambda;
  j["normalize_features"] = ck.normalize_features;
  j["mean_weights"] = nlohmann::json::array();
  for (const auto& w : p.mean_weights) j["mean_weights"].push_back(detail::matrix_to_json(w));
  if (p.has_variance_channel()) {
    j["var_input_weights"] = detail::matrix_to_json(p.var_input_weights);
    j["var_input_bias"] =
        std::vector<double>(p.var_input_bias.data(), p.var_input_bias.data() + p.var_input_bias.size());
    j["var_weights"] = nlohmann::json::array();
    for (const auto& w : p.var_weights) j["var_weights"].push_back(detail::matrix_to_json(w));
  }
  j["provenance"] = ck.provenance;
  return j;
}

inline Checkpoint checkpoint_from_json(const nlohmann::json& j) {
  Checkpoint ck;
  try {
    if (j.at("format").get<std::string>() != "bup-checkpoint") throw InputError("checkpoint: wrong format tag");
    const int version = j.at("version").get<int>();
    if (version != kCheckpointVersion)
      throw InputError("checkpoint: unsupported version " + std::to_string(version));
    ck.method = parse_method(j.at("method").get<std::string>());
    auto& p = ck.params;
    const auto& a = j.at("architecture");
    p.arch.input_dim = a.at("input_dim").get<Index>();
    p.arch.hidden_width = a.at("hidden_width").get<Index>();
    p.arch.num_layers = a.at("num_layers").get<Index>();
    p.arch.output_dim = a.at("output_dim").get<Index>();
    p.arch.var_input_width = a.at("var_input_width").get<Index>();
    p.lambda = j.at("lambda").get<double>();
    ck.normalize_features = j.at("normalize_features").get<bool>();
    Index l = 0;
    for (const auto& w : j.at("mean_weights"))
      p.mean_weights.push_back(detail::matrix_from_json(w, "mean_weights[" + std::to_string(l++) + "]"));
    if (ck.method == Method::bup) {
      p.var_input_weights = detail::matrix_from_json(j.at("var_input_weights"), "var_input_weights");
      const auto bias = j.at("var_input_bias").get<std::vector<double>>();
      p.var_input_bias = Eigen::Map<const Eigen::RowVectorXd>(bias.data(), static_cast<Eigen::Index>(bias.size()));
      l = 0;
      for (const auto& w : j.at("var_weights"))
        p.var_weights.push_back(detail::matrix_from_json(w, "var_weights[" + std::to_string(l++) + "]"));
    }
    if (j.contains("provenance")) ck.provenance = j.at("provenance");
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("checkpoint: ") + e.what());
  }
  ck.params.validate();
  return ck;
}

}  // namespace bup
