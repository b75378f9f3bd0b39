#pragma once

// Two-channel network.  The mean channel is a plain GCN stack
//   A_0 = X,  Z_l = K A_{l-1} W_l,  A_l = relu(Z_l)  (last layer linear),
// the variance channel conditions every node on its neighbors before each
// linear map:
//   V_0 = softplus(X W_in + b),  V_l = softplus(condvar(V_{l-1}) W_var_l).

#include <cmath>
#include <cstdint>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "bup/error.hpp"
#include "bup/graph.hpp"
#include "bup/rng.hpp"

namespace bup {

struct Architecture {
  Index input_dim = 0;
  Index hidden_width = 16;
  Index num_layers = 2;
  Index output_dim = 0;
  Index var_input_width = 16;

  /// Widths of the mean channel: input, hidden..., output.
  std::vector<Index> mean_widths() const {
    std::vector<Index> w{input_dim};
    for (Index l = 1; l < num_layers; ++l) w.push_back(hidden_width);
    w.push_back(output_dim);
    return w;
  }
  /// Widths of the variance channel after the input projection.
  std::vector<Index> var_widths() const {
    std::vector<Index> w{var_input_width};
    for (Index l = 1; l < num_layers; ++l) w.push_back(hidden_width);
    w.push_back(output_dim);
    return w;
  }
  bool operator==(const Architecture&) const = default;
};

struct BupParameters {
  Architecture arch;
  std::vector<Matrix> mean_weights;
  Matrix var_input_weights;               // F x F'
  Eigen::RowVectorXd var_input_bias;      // F'
  std::vector<Matrix> var_weights;
  double lambda = 1.0;

  /// Throws InputError if any matrix disagrees with `arch`.
  void validate() const {
    const auto mw = arch.mean_widths();
    const auto vw = arch.var_widths();
    auto check = [](const Matrix& m, Index r, Index c, const std::string& name) {
      if (static_cast<Index>(m.rows()) != r || static_cast<Index>(m.cols()) != c) {
        std::ostringstream msg;
        msg << name << " has shape " << m.rows() << "x" << m.cols() << ", expected " << r << "x"
            << c;
        throw InputError(msg.str());
      }
    };
    if (arch.num_layers < 1) throw InputError("architecture needs at least one layer");
    if (mean_weights.size() != arch.num_layers) throw InputError("mean weight count mismatch");
    if (!var_weights.empty() && var_weights.size() != arch.num_layers)
      throw InputError("variance weight count mismatch");
    for (Index l = 0; l < arch.num_layers; ++l)
      check(mean_weights[l], mw[l], mw[l + 1], "mean_weights[" + std::to_string(l) + "]");
    if (!var_weights.empty()) {
      check(var_input_weights, arch.input_dim, arch.var_input_width, "var_input_weights");
      if (static_cast<Index>(var_input_bias.size()) != arch.var_input_width)
        throw InputError("var_input_bias length mismatch");
      for (Index l = 0; l < arch.num_layers; ++l)
        check(var_weights[l], vw[l], vw[l + 1], "var_weights[" + std::to_string(l) + "]");
    }
    if (!(lambda >= 1.0)) throw InputError("lambda must be >= 1");
  }

  bool has_variance_channel() const noexcept { return !var_weights.empty(); }
};

inline double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }
inline double softplus_inverse(double y) { return y + std::log(-std::expm1(-y)); }
inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline Matrix glorot_uniform(Index rows, Index cols, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = rng.uniform(-limit, limit);
  return m;
}

/// Glorot-uniform weights; the variance bias starts at softplus^-1(1) so initial
/// variances sit near 1.  Pass with_variance = false for the plain GCN.
inline BupParameters init_parameters(const Architecture& arch, double lambda, std::uint64_t seed,
                                     bool with_variance = true) {
  Rng rng(seed);
  BupParameters p;
  p.arch = arch;
  p.lambda = lambda;
  const auto mw = arch.mean_widths();
  for (Index l = 0; l < arch.num_layers; ++l) p.mean_weights.push_back(glorot_uniform(mw[l], mw[l + 1], rng));
  if (with_variance) {
    const auto vw = arch.var_widths();
    p.var_input_weights = glorot_uniform(arch.input_dim, arch.var_input_width, rng);
    p.var_input_bias = Eigen::RowVectorXd::Constant(static_cast<Eigen::Index>(arch.var_input_width),
                                                    softplus_inverse(1.0));
    for (Index l = 0; l < arch.num_layers; ++l) p.var_weights.push_back(glorot_uniform(vw[l], vw[l + 1], rng));
  }
  p.validate();
  return p;
}

struct GaussianMessageField {
  Matrix mean;      // num_nodes x D
  Matrix variance;  // num_nodes x D, strictly positive

  void validate() const {
    if (mean.rows() != variance.rows() || mean.cols() != variance.cols())
      throw InputError("message field: mean and variance shapes differ");
    if (!mean.allFinite()) throw InvariantError("message field: non-finite mean");
    if (!(variance.array() > 0.0).all() || !variance.allFinite())
      throw InvariantError("message field: variance must be finite and > 0");
  }
};

// ---------------------------------------------------------------- mean channel

struct MeanForward {
  std::vector<Matrix> pre;   // Z_l
  std::vector<Matrix> post;  // A_l; post.back() is the final mean
  const Matrix& output() const { return post.back(); }
};

template <typename FeatureMatrix>
MeanForward forward_mean(const BupParameters& params, const PropagationKernel& kernel,
                         const FeatureMatrix& features) {
  if (static_cast<Index>(features.rows()) != kernel.size())
    throw InputError("forward_mean: feature rows do not match graph size");
  if (static_cast<Index>(features.cols()) != params.arch.input_dim)
    throw InputError("forward_mean: feature width " + std::to_string(features.cols()) +
                     " does not match input_dim " + std::to_string(params.arch.input_dim));
  MeanForward out;
  const Index layers = params.mean_weights.size();
  for (Index l = 0; l < layers; ++l) {
    Matrix projected = (l == 0) ? Matrix(features * params.mean_weights[0])
                                : Matrix(out.post.back() * params.mean_weights[l]);
    Matrix z = propagate(kernel, projected);
    Matrix a = (l + 1 < layers) ? Matrix(z.cwiseMax(0.0)) : z;
    out.pre.push_back(std::move(z));
    out.post.push_back(std::move(a));
  }
  return out;
}

// ------------------------------------------------------ conditional variance

enum class ConditioningMethod {
  closed_form,   // var_i * (1 - (1/(lambda d_i)) sum_j 1/d_j)
  dense_schur,   // build the neighborhood covariance block and take its Schur complement
};

/// Per-node factor 1 - (1/(lambda d_ii)) sum_{j in N(i)} 1/d_jj.  With
/// lambda >= 1 it is bounded below by 1 - |N(i)| / (lambda (|N(i)| + 1)) > 0.
inline Vector conditioning_factors(const Graph& g, double lambda) {
  if (!(lambda >= 1.0)) throw InputError("conditional variance: lambda must be >= 1");
  Vector f(static_cast<Eigen::Index>(g.num_nodes()));
  for (Index i = 0; i < g.num_nodes(); ++i) {
    double s = 0.0;
    for (Index j : g.neighbors(i)) s += 1.0 / g.degree_hat(j);
    f(static_cast<Eigen::Index>(i)) = 1.0 - s / (lambda * g.degree_hat(i));
  }
  return f;
}

/// Covariance between node i and its neighbors for one message dimension:
/// var(i) in the corner, cov(i,j) = var(i)^1/2 var(j)^1/2 / sqrt(lambda d_ii d_jj)
/// on the first row/column, neighbor variances on the diagonal, zeros elsewhere.
inline Matrix neighborhood_covariance(const Graph& g, Index i, const Eigen::Ref<const Vector>& var,
                                      double lambda) {
  const auto& nb = g.neighbors(i);
  const auto n = static_cast<Eigen::Index>(nb.size());
  Matrix m = Matrix::Zero(n + 1, n + 1);
  const double vi = var(static_cast<Eigen::Index>(i));
  m(0, 0) = vi;
  for (Eigen::Index k = 0; k < n; ++k) {
    const Index j = nb[static_cast<Index>(k)];
    const double vj = var(static_cast<Eigen::Index>(j));
    const double cor = 1.0 / std::sqrt(lambda * g.degree_hat(i) * g.degree_hat(j));
    const double cov = cor * std::sqrt(vi * vj);
    m(0, k + 1) = cov;
    m(k + 1, 0) = cov;
    m(k + 1, k + 1) = vj;
  }
  return m;
}

inline void require_positive(const Matrix& var, const char* where) {
  for (Eigen::Index i = 0; i < var.rows(); ++i)
    for (Eigen::Index c = 0; c < var.cols(); ++c)
      if (!(var(i, c) > 0.0)) {
        std::ostringstream msg;
        msg << where << ": variance at node " << i << ", dim " << c << " is " << var(i, c)
            << " (must be > 0)";
        throw InvariantError(msg.str());
      }
}

/// Conditional variance of every node given its neighbors, per dimension.
inline Matrix conditional_variance(const Matrix& var, const Graph& g, double lambda,
                                   ConditioningMethod method = ConditioningMethod::closed_form) {
  if (static_cast<Index>(var.rows()) != g.num_nodes())
    throw InputError("conditional_variance: row count does not match graph size");
  require_positive(var, "conditional_variance");
  if (method == ConditioningMethod::closed_form) {
    const Vector f = conditioning_factors(g, lambda);
    return f.asDiagonal() * var;
  }
  if (!(lambda >= 1.0)) throw InputError("conditional variance: lambda must be >= 1");
  Matrix out(var.rows(), var.cols());
  for (Eigen::Index c = 0; c < var.cols(); ++c) {
    const Vector column = var.col(c);
    for (Index i = 0; i < g.num_nodes(); ++i) {
      const Matrix block = neighborhood_covariance(g, i, column, lambda);
      const Eigen::Index n = block.rows() - 1;
      double reduction = 0.0;
      if (n > 0) {
        const Matrix b = block.bottomRightCorner(n, n);
        const Eigen::RowVectorXd cross = block.topRightCorner(1, n);
        reduction = (cross * b.ldlt().solve(cross.transpose()))(0, 0);
      }
      out(static_cast<Eigen::Index>(i), c) = block(0, 0) - reduction;
    }
  }
  return out;
}

// ------------------------------------------------------------ variance channel

struct VarianceForward {
  Matrix input_pre;                 // U_0 = X W_in + b
  std::vector<Matrix> inputs;       // V_{l-1}
  std::vector<Matrix> conditioned;  // condvar(V_{l-1})
  std::vector<Matrix> pre;          // U_l
  std::vector<Matrix> outputs;      // V_l; outputs.back() is the final variance
  Vector factors;                   // per-node conditioning factor
  const Matrix& output() const { return outputs.back(); }
};

inline Matrix softplus(const Matrix& u) { return u.unaryExpr([](double x) { return softplus(x); }); }

template <typename FeatureMatrix>
VarianceForward forward_variance(const BupParameters& params, const Graph& g,
                                 const FeatureMatrix& features,
                                 ConditioningMethod method = ConditioningMethod::closed_form) {
  if (!params.has_variance_channel()) throw InputError("forward_variance: parameters have no variance channel");
  if (static_cast<Index>(features.rows()) != g.num_nodes())
    throw InputError("forward_variance: feature rows do not match graph size");
  if (static_cast<Index>(features.cols()) != params.arch.input_dim)
    throw InputError("forward_variance: feature width does not match input_dim");
  VarianceForward out;
  out.factors = conditioning_factors(g, params.lambda);
  Matrix u0 = features * params.var_input_weights;
  u0.rowwise() += params.var_input_bias;
  Matrix v = softplus(u0);
  out.input_pre = std::move(u0);
  for (Index l = 0; l < params.var_weights.size(); ++l) {
    require_positive(v, "forward_variance");
    Matrix cond = (method == ConditioningMethod::closed_form)
                      ? Matrix(out.factors.asDiagonal() * v)
                      : conditional_variance(v, g, params.lambda, method);
    Matrix u = cond * params.var_weights[l];
    Matrix next = softplus(u);
    out.inputs.push_back(std::move(v));
    out.conditioned.push_back(std::move(cond));
    out.pre.push_back(std::move(u));
    v = std::move(next);
    out.outputs.push_back(v);
  }
  return out;
}

struct BupForward {
  MeanForward mean;
  VarianceForward variance;
  GaussianMessageField field() const { return {mean.output(), variance.output()}; }
};

template <typename FeatureMatrix>
BupForward forward(const BupParameters& params, const Graph& g, const PropagationKernel& kernel,
                   const FeatureMatrix& features) {
  return {forward_mean(params, kernel, features), forward_variance(params, g, features)};
}

// ------------------------------------------------------------------ prediction

/// Softmax of one row, max-shifted.
inline void softmax_inplace(Eigen::Ref<Eigen::RowVectorXd> row) {
  const double mx = row.maxCoeff();
  row = (row.array() - mx).exp().matrix();
  row /= row.sum();
}

inline Matrix softmax_rows(const Matrix& logits) {
  Matrix p = logits;
  for (Eigen::Index i = 0; i < p.rows(); ++i) softmax_inplace(p.row(i));
  return p;
}

/// Monte Carlo estimate of E[softmax(theta)], theta ~ N(m_i, diag(var_i)).
/// Nodes are processed in index order and each sample draws D normals in
/// dimension order from a single stream seeded with `seed`.
inline Matrix predict_probability(const GaussianMessageField& field, Index num_samples,
                                  std::uint64_t seed) {
  if (num_samples < 1) throw InputError("predict_probability: num_samples must be >= 1");
  field.validate();
  Rng rng(seed);
  const Eigen::Index n = field.mean.rows();
  const Eigen::Index d = field.mean.cols();
  Matrix probs = Matrix::Zero(n, d);
  Eigen::RowVectorXd theta(d);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::RowVectorXd sd = field.variance.row(i).cwiseSqrt();
    Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(d);
    for (Index s = 0; s < num_samples; ++s) {
      for (Eigen::Index c = 0; c < d; ++c) theta(c) = field.mean(i, c) + sd(c) * rng.normal();
      softmax_inplace(theta);
      acc += theta;
    }
    acc /= acc.sum();
    probs.row(i) = acc;
  }
  return probs;
}

struct UncertaintyScore {
  Vector avg_std;           // mean over dims of sqrt(var)
  Vector gaussian_entropy;  // 0.5 * sum_c log(2 pi e var_c)
};

inline UncertaintyScore uncertainty_scores(const GaussianMessageField& field) {
  field.validate();
  const Eigen::Index n = field.variance.rows();
  const double d = static_cast<double>(field.variance.cols());
  UncertaintyScore s{Vector(n), Vector(n)};
  const double log_2pie = std::log(2.0 * std::numbers::pi * std::numbers::e);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto row = field.variance.row(i).array();
    s.avg_std(i) = row.sqrt().sum() / d;
    s.gaussian_entropy(i) = 0.5 * (row.log() + log_2pie).sum();
  }
  return s;
}

}  // namespace bup
