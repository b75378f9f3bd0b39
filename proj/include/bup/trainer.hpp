#pragma once

// Full-batch training of the two-channel model (and the plain GCN baseline)
// with Adam, validation-NLL early stopping and a hand-written backward pass.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "bup/dataset.hpp"
#include "bup/error.hpp"
#include "bup/graph.hpp"
#include "bup/log.hpp"
#include "bup/loss.hpp"
#include "bup/model.hpp"

namespace bup {

struct TrainConfig {
  double learning_rate = 0.01;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double weight_decay = 5e-4;          // L2 coefficient; gradient term weight_decay * W
  bool decay_variance_weights = false; // mean weights only unless set
  Index max_epochs = 400;
  Index patience = 50;
  std::uint64_t seed = 0;
  double lambda = 1.0;
  Index hidden_width = 16;
  Index num_layers = 2;
  Index var_input_width = 0;           // 0 means "same as hidden_width"
  Index mc_samples_eval = 256;
  bool normalize_features = true;

  void validate() const {
    if (!(learning_rate > 0.0) || !(adam_eps > 0.0)) throw InputError("train config: rates must be positive");
    if (!(adam_beta1 > 0.0 && adam_beta1 < 1.0) || !(adam_beta2 > 0.0 && adam_beta2 < 1.0))
      throw InputError("train config: Adam betas must lie in (0, 1)");
    if (weight_decay < 0.0) throw InputError("train config: weight_decay must be >= 0");
    if (max_epochs < 1) throw InputError("train config: max_epochs must be >= 1");
    if (patience < 1 || patience > max_epochs) throw InputError("train config: need 1 <= patience <= max_epochs");
    if (!(lambda >= 1.0)) throw InputError("train config: lambda must be >= 1");
    if (hidden_width < 1 || num_layers < 1) throw InputError("train config: bad architecture");
    if (mc_samples_eval < 1) throw InputError("train config: mc_samples_eval must be >= 1");
  }

  Architecture architecture(Index input_dim, Index output_dim) const {
    return {input_dim, hidden_width, num_layers, output_dim,
            var_input_width == 0 ? hidden_width : var_input_width};
  }
};

struct TrainTrace {
  std::vector<double> train_nll;
  std::vector<double> val_nll;
  std::vector<double> val_acc;
  Index best_epoch = 0;  // 0-based index into the vectors
  double wall_seconds = 0.0;

  Index epochs_run() const noexcept { return train_nll.size(); }
};

enum class Method { bup, gcn };

inline const char* method_name(Method m) { return m == Method::bup ? "bup" : "gcn"; }
inline Method parse_method(const std::string& s) {
  if (s == "bup") return Method::bup;
  if (s == "gcn") return Method::gcn;
  throw InputError("unknown method '" + s + "' (expected bup or gcn)");
}

/// Everything the trainer needs from a dataset + split, with labels already
/// mapped into the model's class space.
struct TrainingData {
  SparseFeatures features;
  Graph graph;
  PropagationKernel kernel;
  std::vector<Index> labels;  // model class, LabelMap::npos for withheld nodes
  Index num_classes = 0;      // model classes
  std::vector<Index> train;
  std::vector<Index> val;
};

inline TrainingData prepare_training_data(const Dataset& ds, const Split& split, bool normalize) {
  TrainingData d;
  d.features = to_sparse(normalize ? row_normalize(ds.features) : ds.features);
  d.graph = ds.graph;
  d.kernel = build_kernel(ds.graph);
  const LabelMap map = make_label_map(ds.num_classes, split.ood_class);
  d.num_classes = map.num_model_classes();
  d.labels.reserve(ds.num_nodes());
  for (Index y : ds.labels) d.labels.push_back(map.to_model[y]);
  d.train = split.train;
  d.val = split.val;
  for (Index i : d.train)
    if (d.labels[i] == LabelMap::npos) throw InputError("training node " + std::to_string(i) + " has a withheld label");
  for (Index i : d.val)
    if (d.labels[i] == LabelMap::npos) throw InputError("validation node " + std::to_string(i) + " has a withheld label");
  return d;
}

// ------------------------------------------------------- parameter flattening

/// Visits every weight block in a fixed order: mean weights, then (if present)
/// var_input_weights, var_input_bias, var_weights.
template <typename P, typename Fn>
void for_each_block(P& params, Fn&& fn) {
  for (Index l = 0; l < params.mean_weights.size(); ++l)
    fn(params.mean_weights[l].data(), static_cast<Index>(params.mean_weights[l].size()),
       "mean_weights[" + std::to_string(l) + "]", true);
  if (!params.var_weights.empty()) {
    fn(params.var_input_weights.data(), static_cast<Index>(params.var_input_weights.size()),
       std::string("var_input_weights"), false);
    fn(params.var_input_bias.data(), static_cast<Index>(params.var_input_bias.size()),
       std::string("var_input_bias"), false);
    for (Index l = 0; l < params.var_weights.size(); ++l)
      fn(params.var_weights[l].data(), static_cast<Index>(params.var_weights[l].size()),
         "var_weights[" + std::to_string(l) + "]", false);
  }
}

inline Eigen::VectorXd flatten(const BupParameters& p) {
  Index total = 0;
  for_each_block(p, [&](const double*, Index n, const std::string&, bool) { total += n; });
  Eigen::VectorXd v(static_cast<Eigen::Index>(total));
  Index off = 0;
  for_each_block(p, [&](const double* data, Index n, const std::string&, bool) {
    for (Index k = 0; k < n; ++k) v(static_cast<Eigen::Index>(off + k)) = data[k];
    off += n;
  });
  return v;
}

inline void unflatten(BupParameters& p, const Eigen::VectorXd& v) {
  Index off = 0;
  for_each_block(p, [&](double* data, Index n, const std::string&, bool) {
    for (Index k = 0; k < n; ++k) data[k] = v(static_cast<Eigen::Index>(off + k));
    off += n;
  });
  if (off != static_cast<Index>(v.size())) throw InputError("unflatten: length mismatch");
}

// -------------------------------------------------------------------- backward

struct Gradients {
  double loss = 0.0;     // mean training loss (no weight decay)
  BupParameters grad;    // same shapes as the parameters
};

namespace detail {

inline BupParameters zeros_like(const BupParameters& p) {
  BupParameters g = p;
  for (auto& w : g.mean_weights) w.setZero();
  g.var_input_weights.setZero();
  g.var_input_bias.setZero();
  for (auto& w : g.var_weights) w.setZero();
  return g;
}

/// Back-propagates dL/dM through the GCN stack.
template <typename FeatureMatrix>
void backward_mean(const BupParameters& params, const PropagationKernel& kernel,
                   const FeatureMatrix& features, const MeanForward& fwd, Matrix d_out,
                   BupParameters& grad) {
  const Index layers = params.mean_weights.size();
  Matrix dz = std::move(d_out);
  for (Index l = layers; l-- > 0;) {
    const Matrix back = propagate(kernel, dz);  // K^T dZ, K symmetric
    if (l == 0) {
      grad.mean_weights[0] = features.transpose() * back;
    } else {
      grad.mean_weights[l] = fwd.post[l - 1].transpose() * back;
      Matrix da = back * params.mean_weights[l].transpose();
      dz = (fwd.pre[l - 1].array() > 0.0).select(da, 0.0);
    }
  }
}

/// Back-propagates dL/dS through softplus, the linear maps and the per-node
/// conditioning factors (a fixed diagonal scaling).
template <typename FeatureMatrix>
void backward_variance(const BupParameters& params, const FeatureMatrix& features,
                       const VarianceForward& fwd, Matrix d_out, BupParameters& grad) {
  const auto sig = [](const Matrix& u) { return Matrix(u.unaryExpr([](double x) { return sigmoid(x); })); };
  Matrix dv = std::move(d_out);
  for (Index l = params.var_weights.size(); l-- > 0;) {
    const Matrix du = dv.cwiseProduct(sig(fwd.pre[l]));
    grad.var_weights[l] = fwd.conditioned[l].transpose() * du;
    dv = fwd.factors.asDiagonal() * (du * params.var_weights[l].transpose());
  }
  const Matrix du0 = dv.cwiseProduct(sig(fwd.input_pre));
  grad.var_input_weights = features.transpose() * du0;
  grad.var_input_bias = du0.colwise().sum();
}

}  // namespace detail

/// Exact gradient of the mean training NLL (diagonal erf likelihood) with
/// respect to every weight, by manual reverse mode.  `graph` drives the
/// conditional variance, `kernel` the mean propagation.
template <typename FeatureMatrix>
Gradients backward(const BupParameters& params, const Graph& graph, const PropagationKernel& kernel,
                   const FeatureMatrix& features, const std::vector<Index>& labels,
                   const std::vector<Index>& train_idx) {
  Gradients out{0.0, detail::zeros_like(params)};
  if (train_idx.empty()) return out;
  const MeanForward mf = forward_mean(params, kernel, features);
  const VarianceForward vf = forward_variance(params, graph, features);
  const Matrix& m = mf.output();
  const Matrix& s = vf.output();
  Matrix dm = Matrix::Zero(m.rows(), m.cols());
  Matrix ds = Matrix::Zero(s.rows(), s.cols());
  const double scale = 1.0 / static_cast<double>(train_idx.size());
  for (Index i : train_idx) {
    const auto r = static_cast<Eigen::Index>(i);
    const LossGrad lg = loss_and_grad(m.row(r).transpose(), s.row(r).transpose(), labels.at(i));
    out.loss += lg.loss;
    dm.row(r) = scale * lg.grad_mean.transpose();
    ds.row(r) = scale * lg.grad_var.transpose();
  }
  out.loss *= scale;
  detail::backward_mean(params, kernel, features, mf, std::move(dm), out.grad);
  detail::backward_variance(params, features, vf, std::move(ds), out.grad);
  return out;
}

/// Gradient of the mean training cross entropy of the plain GCN.
template <typename FeatureMatrix>
Gradients backward_gcn(const BupParameters& params, const PropagationKernel& kernel,
                       const FeatureMatrix& features, const std::vector<Index>& labels,
                       const std::vector<Index>& train_idx) {
  Gradients out{0.0, detail::zeros_like(params)};
  if (train_idx.empty()) return out;
  const MeanForward mf = forward_mean(params, kernel, features);
  const Matrix& logits = mf.output();
  Matrix dm = Matrix::Zero(logits.rows(), logits.cols());
  const double scale = 1.0 / static_cast<double>(train_idx.size());
  for (Index i : train_idx) {
    const auto r = static_cast<Eigen::Index>(i);
    const CrossEntropy ce = cross_entropy_loss(logits.row(r).transpose(), labels.at(i));
    out.loss += ce.loss;
    dm.row(r) = scale * ce.grad.transpose();
  }
  out.loss *= scale;
  detail::backward_mean(params, kernel, features, mf, std::move(dm), out.grad);
  return out;
}

// ------------------------------------------------------------------------ Adam

class Adam {
 public:
  Adam(const TrainConfig& cfg, Index size)
      : cfg_(cfg), m_(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(size))), v_(m_) {}

  /// One bias-corrected step: theta -= lr * mhat / (sqrt(vhat) + eps).
  void step(Eigen::VectorXd& theta, const Eigen::VectorXd& grad) {
    ++t_;
    m_ = cfg_.adam_beta1 * m_ + (1.0 - cfg_.adam_beta1) * grad;
    v_ = cfg_.adam_beta2 * v_ + (1.0 - cfg_.adam_beta2) * grad.cwiseAbs2();
    const double c1 = 1.0 - std::pow(cfg_.adam_beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.adam_beta2, static_cast<double>(t_));
    theta.array() -= cfg_.learning_rate * (m_.array() / c1) / ((v_.array() / c2).sqrt() + cfg_.adam_eps);
  }

 private:
  TrainConfig cfg_;
  Eigen::VectorXd m_;
  Eigen::VectorXd v_;
  long t_ = 0;
};

/// 1 for entries that receive weight decay, 0 otherwise (flatten order).
inline Eigen::VectorXd weight_decay_mask(const BupParameters& p, bool include_variance) {
  std::vector<double> mask;
  for_each_block(p, [&](const double*, Index n, const std::string& name, bool is_mean) {
    const bool decayed = is_mean || (include_variance && name != "var_input_bias");
    mask.insert(mask.end(), n, decayed ? 1.0 : 0.0);
  });
  return Eigen::Map<Eigen::VectorXd>(mask.data(), static_cast<Eigen::Index>(mask.size()));
}

// ------------------------------------------------------------------- training

namespace detail {

inline Index argmax_row(const Matrix& m, Eigen::Index r) {
  Index best = 0;
  for (Eigen::Index c = 1; c < m.cols(); ++c)
    if (m(r, c) > m(r, static_cast<Eigen::Index>(best))) best = static_cast<Index>(c);
  return best;
}

struct Evaluation {
  double nll = 0.0;
  double acc = 0.0;
};

inline Evaluation evaluate_nodes(Method method, const Matrix& mean, const Matrix* var,
                                 const std::vector<Index>& labels, const std::vector<Index>& idx) {
  Evaluation e;
  if (idx.empty()) return e;
  for (Index i : idx) {
    const auto r = static_cast<Eigen::Index>(i);
    if (method == Method::bup)
      e.nll += loss_diag_approx(mean.row(r).transpose(), var->row(r).transpose(), labels[i]).nll;
    else
      e.nll += cross_entropy_loss(mean.row(r).transpose(), labels[i]).loss;
    if (argmax_row(mean, r) == labels[i]) e.acc += 1.0;
  }
  e.nll /= static_cast<double>(idx.size());
  e.acc /= static_cast<double>(idx.size());
  return e;
}

inline void check_finite_gradient(const BupParameters& g, Index epoch) {
  for_each_block(g, [&](const double* data, Index n, const std::string& name, bool) {
    for (Index k = 0; k < n; ++k)
      if (!std::isfinite(data[k])) {
        std::ostringstream msg;
        msg << "non-finite gradient at epoch " << epoch << " in " << name << " entry " << k;
        throw TrainingError(msg.str());
      }
  });
}

}  // namespace detail

struct TrainResult {
  BupParameters params;
  TrainTrace trace;
};

/// Adam on the mean training loss plus L2 weight decay.  The epoch with the
/// lowest validation NLL is restored at the end (ties keep the earlier epoch).
inline TrainResult train_model(Method method, const TrainConfig& cfg, const TrainingData& data) {
  cfg.validate();
  const auto start = std::chrono::steady_clock::now();
  const Architecture arch = cfg.architecture(static_cast<Index>(data.features.cols()), data.num_classes);
  BupParameters params = init_parameters(arch, cfg.lambda, derive_seed(cfg.seed, 1), method == Method::bup);

  Eigen::VectorXd theta = flatten(params);
  const Eigen::VectorXd decay = cfg.weight_decay * weight_decay_mask(params, cfg.decay_variance_weights);
  Adam adam(cfg, static_cast<Index>(theta.size()));

  TrainResult result{params, {}};
  double best_val = std::numeric_limits<double>::infinity();
  Eigen::VectorXd best_theta = theta;
  Index since_best = 0;

  for (Index epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    unflatten(params, theta);
    Gradients g;
    detail::Evaluation val;
    try {
      g = method == Method::bup
              ? backward(params, data.graph, data.kernel, data.features, data.labels, data.train)
              : backward_gcn(params, data.kernel, data.features, data.labels, data.train);
      if (!std::isfinite(g.loss))
        throw TrainingError("training loss is not finite at epoch " + std::to_string(epoch));
      detail::check_finite_gradient(g.grad, epoch);

      // Validation at the parameters the gradient was taken at.
      const MeanForward mf = forward_mean(params, data.kernel, data.features);
      if (method == Method::bup) {
        const VarianceForward vf = forward_variance(params, data.graph, data.features);
        val = detail::evaluate_nodes(method, mf.output(), &vf.output(), data.labels, data.val);
      } else {
        val = detail::evaluate_nodes(method, mf.output(), nullptr, data.labels, data.val);
      }
    } catch (const InvariantError& e) {
      throw TrainingError("diverged at epoch " + std::to_string(epoch) + ": " + e.what());
    }
    result.trace.train_nll.push_back(g.loss);
    result.trace.val_nll.push_back(val.nll);
    result.trace.val_acc.push_back(val.acc);
    if (val.nll < best_val) {
      best_val = val.nll;
      best_theta = theta;
      result.trace.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }

    const Eigen::VectorXd grad = flatten(g.grad) + decay.cwiseProduct(theta);
    adam.step(theta, grad);
  }

  unflatten(params, best_theta);
  result.params = std::move(params);
  result.trace.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::ostringstream msg;
  msg << method_name(method) << " seed " << cfg.seed << ": " << result.trace.epochs_run()
      << " epochs, best " << result.trace.best_epoch << " (val nll " << best_val << ")";
  log::info(msg.str());
  return result;
}

inline TrainResult train(const TrainConfig& cfg, const TrainingData& data) {
  return train_model(Method::bup, cfg, data);
}

inline TrainResult train_gcn_baseline(const TrainConfig& cfg, const TrainingData& data) {
  return train_model(Method::gcn, cfg, data);
}

/// TrainTrace as CSV: epoch,train_nll,val_nll,val_acc.
inline std::string trace_to_csv(const TrainTrace& t) {
  std::ostringstream out;
  out << "epoch,train_nll,val_nll,val_acc\n";
  for (Index e = 0; e < t.epochs_run(); ++e)
    out << e << ',' << detail::format_double(t.train_nll[e]) << ','
        << detail::format_double(t.val_nll[e]) << ',' << detail::format_double(t.val_acc[e]) << '\n';
  return out.str();
}

}  // namespace bup
