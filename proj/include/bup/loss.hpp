#pragma once

// Uncertainty-penalized likelihood for a labelled node.
//
// With message theta_c ~ N(m_c, s_c) independent and label c*, the label is
// right when tau_c = theta_c - theta_c* < 0 for every c != c*.  tau is Gaussian
// with mean m_c - m_c* and covariance diag(s_c) + s_c* 11^T; the exact
// likelihood is its negative-orthant probability.  Training uses the product
// of the marginals obtained by dropping the off-diagonal s_c*:
//
//   L ~= prod_{c != c*} Phi(t_c),   t_c = (m_c* - m_c) / sqrt(s_c + s_c*)
//
// (Phi(t) = 0.5 [1 + erf(t / sqrt 2)]), accumulated as a sum of log Phi.

#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <sstream>
#include <string>
#include <utility>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "bup/error.hpp"
#include "bup/graph.hpp"
#include "bup/rng.hpp"

namespace bup {

/// log Phi(t) for the standard normal CDF, finite for any finite t.
inline double log_normal_cdf(double t) {
  constexpr double inv_sqrt2 = 0.70710678118654752440;
  if (t > 6.0) return std::log1p(-0.5 * std::erfc(t * inv_sqrt2));
  if (t > -20.0) return std::log(0.5 * std::erfc(-t * inv_sqrt2));
  // Asymptotic expansion: Phi(t) = phi(t)/(-t) * (1 - 1/t^2 + 3/t^4 - 15/t^6 + ...).
  const double t2 = t * t;
  double term = 1.0;
  double series = 1.0;
  for (int k = 1; k <= 8; ++k) {
    term *= -static_cast<double>(2 * k - 1) / t2;
    series += term;
  }
  return -0.5 * t2 - std::log(-t) - 0.5 * std::log(2.0 * std::numbers::pi) + std::log(series);
}

/// phi(t) / Phi(t), the derivative of log Phi.
inline double normal_hazard(double t) {
  if (t > -20.0) {
    const double log_pdf = -0.5 * t * t - 0.5 * std::log(2.0 * std::numbers::pi);
    return std::exp(log_pdf - log_normal_cdf(t));
  }
  const double t2 = t * t;
  double term = 1.0;
  double series = 1.0;
  for (int k = 1; k <= 8; ++k) {
    term *= -static_cast<double>(2 * k - 1) / t2;
    series += term;
  }
  return -t / series;
}

namespace detail {

inline void check_loss_inputs(const Eigen::Ref<const Eigen::VectorXd>& m,
                              const Eigen::Ref<const Eigen::VectorXd>& var, Index label,
                              const char* where) {
  if (m.size() != var.size()) throw InputError(std::string(where) + ": mean/variance length mismatch");
  if (label >= static_cast<Index>(m.size()))
    throw InputError(std::string(where) + ": label " + std::to_string(label) + " out of range");
  for (Eigen::Index c = 0; c < var.size(); ++c)
    if (!(var(c) > 0.0)) {
      std::ostringstream msg;
      msg << where << ": variance[" << c << "] = " << var(c) << " must be > 0";
      throw InvariantError(msg.str());
    }
}

}  // namespace detail

struct DiagLikelihood {
  double nll = 0.0;
  double likelihood = 1.0;  // exp(-nll); may underflow to 0 for hopeless predictions
};

/// Diagonal erf approximation of the label likelihood.  A single class gives
/// an empty product (likelihood 1).
inline DiagLikelihood loss_diag_approx(const Eigen::Ref<const Eigen::VectorXd>& m,
                                       const Eigen::Ref<const Eigen::VectorXd>& var, Index label) {
  detail::check_loss_inputs(m, var, label, "loss_diag_approx");
  const auto star = static_cast<Eigen::Index>(label);
  double log_l = 0.0;
  for (Eigen::Index c = 0; c < m.size(); ++c) {
    if (c == star) continue;
    log_l += log_normal_cdf((m(star) - m(c)) / std::sqrt(var(c) + var(star)));
  }
  return {-log_l, std::exp(log_l)};
}

struct LossGrad {
  double loss = 0.0;
  Eigen::VectorXd grad_mean;
  Eigen::VectorXd grad_var;
};

/// nll = -sum_{c != c*} log Phi(t_c) and its gradient.  With r_c = phi(t_c)/Phi(t_c)
/// and S_c = s_c + s_c*:
///   d/dm_c  =  r_c / sqrt(S_c)          d/dm_c* = -sum_c r_c / sqrt(S_c)
///   d/ds_c  =  r_c t_c / (2 S_c)        d/ds_c* =  sum_c r_c t_c / (2 S_c)
inline LossGrad loss_and_grad(const Eigen::Ref<const Eigen::VectorXd>& m,
                              const Eigen::Ref<const Eigen::VectorXd>& var, Index label) {
  detail::check_loss_inputs(m, var, label, "loss_and_grad");
  const auto star = static_cast<Eigen::Index>(label);
  LossGrad out{0.0, Eigen::VectorXd::Zero(m.size()), Eigen::VectorXd::Zero(m.size())};
  double gm_star = 0.0;
  double gv_star = 0.0;
  for (Eigen::Index c = 0; c < m.size(); ++c) {
    if (c == star) continue;
    const double total = var(c) + var(star);
    const double root = std::sqrt(total);
    const double t = (m(star) - m(c)) / root;
    out.loss -= log_normal_cdf(t);
    const double r = normal_hazard(t);
    const double gm = r / root;
    const double gv = 0.5 * r * t / total;
    out.grad_mean(c) = gm;
    out.grad_var(c) = gv;
    gm_star -= gm;
    gv_star += gv;
  }
  out.grad_mean(star) = gm_star;
  out.grad_var(star) = gv_star;
  return out;
}

/// tau = theta_c - theta_c* over c != c* (in class order).
struct PairwiseGaussianDiff {
  Eigen::VectorXd mu;
  Eigen::MatrixXd lambda;  // diag(s_c) + s_c* * ones
};

inline PairwiseGaussianDiff make_pairwise_diff(const Eigen::Ref<const Eigen::VectorXd>& m,
                                               const Eigen::Ref<const Eigen::VectorXd>& var,
                                               Index label) {
  detail::check_loss_inputs(m, var, label, "make_pairwise_diff");
  const auto star = static_cast<Eigen::Index>(label);
  const Eigen::Index k = m.size() - 1;
  PairwiseGaussianDiff d{Eigen::VectorXd(k), Eigen::MatrixXd::Constant(k, k, var(star))};
  Eigen::Index r = 0;
  for (Eigen::Index c = 0; c < m.size(); ++c) {
    if (c == star) continue;
    d.mu(r) = m(c) - m(star);
    d.lambda(r, r) += var(c);
    ++r;
  }
  return d;
}

struct OrthantEstimate {
  double probability = 0.0;
  double std_error = 0.0;
};

/// Plain Monte Carlo estimate of P(tau < 0 componentwise): tau = L xi + mu with
/// L the Cholesky factor of Lambda and xi standard normal.
inline OrthantEstimate mvn_orthant_mc(const PairwiseGaussianDiff& diff, Index num_samples,
                                      std::uint64_t seed) {
  if (num_samples < 1000) throw InputError("mvn_orthant_mc: num_samples must be >= 1000");
  const Eigen::LLT<Eigen::MatrixXd> llt(diff.lambda);
  if (llt.info() != Eigen::Success) throw InvariantError("mvn_orthant_mc: Lambda is not SPD");
  const Eigen::MatrixXd l = llt.matrixL();
  const Eigen::Index k = diff.mu.size();
  Rng rng(seed);
  Eigen::VectorXd xi(k);
  Index hits = 0;
  for (Index s = 0; s < num_samples; ++s) {
    for (Eigen::Index c = 0; c < k; ++c) xi(c) = rng.normal();
    bool inside = true;
    for (Eigen::Index r = 0; r < k && inside; ++r) {
      double tau = diff.mu(r);
      for (Eigen::Index c = 0; c <= r; ++c) tau += l(r, c) * xi(c);
      inside = tau < 0.0;
    }
    if (inside) ++hits;
  }
  const double n = static_cast<double>(num_samples);
  const double p = static_cast<double>(hits) / n;
  return {p, std::sqrt(p * (1.0 - p) / n)};
}

struct CrossEntropy {
  double loss = 0.0;
  Eigen::VectorXd grad;  // softmax(logits) - onehot(label)
};

inline CrossEntropy cross_entropy_loss(const Eigen::Ref<const Eigen::VectorXd>& logits, Index label) {
  if (label >= static_cast<Index>(logits.size()))
    throw InputError("cross_entropy_loss: label out of range");
  const double mx = logits.maxCoeff();
  const Eigen::VectorXd e = (logits.array() - mx).exp().matrix();
  const double z = e.sum();
  CrossEntropy out;
  out.loss = std::log(z) + mx - logits(static_cast<Eigen::Index>(label));
  out.grad = e / z;
  out.grad(static_cast<Eigen::Index>(label)) -= 1.0;
  return out;
}

struct GradientCheckReport {
  double max_rel_error = 0.0;
  Index worst_index = 0;
  bool passed = true;
};

/// Central differences per coordinate against an analytic gradient.  The
/// relative error of coordinate k is |a_k - n_k| / max(1, |a_k|, |n_k|).
inline GradientCheckReport finite_diff_check(const std::function<double(const Eigen::VectorXd&)>& f,
                                             const Eigen::VectorXd& analytic,
                                             const Eigen::VectorXd& point, double h, double tol) {
  if (analytic.size() != point.size()) throw InputError("finite_diff_check: gradient length mismatch");
  if (!(h > 0.0)) throw InputError("finite_diff_check: h must be > 0");
  GradientCheckReport report;
  Eigen::VectorXd x = point;
  for (Eigen::Index k = 0; k < point.size(); ++k) {
    const double orig = x(k);
    x(k) = orig + h;
    const double up = f(x);
    x(k) = orig - h;
    const double down = f(x);
    x(k) = orig;
    const double numeric = (up - down) / (2.0 * h);
    const double a = analytic(k);
    const double denom = std::max({1.0, std::abs(a), std::abs(numeric)});
    const double err = std::abs(a - numeric) / denom;
    if (!(err <= report.max_rel_error)) {
      report.max_rel_error = err;
      report.worst_index = static_cast<Index>(k);
    }
  }
  report.passed = report.max_rel_error <= tol;
  return report;
}

}  // namespace bup
