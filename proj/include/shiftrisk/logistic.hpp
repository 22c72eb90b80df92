#pragma once

// Weighted (optionally ridge-penalized) logistic regression by iteratively
// reweighted least squares, plus weighted ridge least squares.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "shiftrisk/core.hpp"

namespace shiftrisk {

struct IrlsOptions {
  double score_tolerance = 1e-8;  // per unit of mean observation weight
  int max_iterations = 100;
  int max_halvings = 30;
  double step_tolerance = 1e-7;   // Newton step, relative to 1 + |beta|_inf
  double coefficient_cap = 1e4;   // separation guard when unpenalized
  double linear_predictor_cap = 50.0;
};

struct LogisticFit {
  Eigen::VectorXd coefficients;
  bool converged = false;
  int iterations = 0;
  double max_abs_score = std::numeric_limits<double>::infinity();
  double score_tolerance = 0.0;          // effective (weight-scaled) tolerance
  double ridge = 0.0;
  std::vector<double> objective_trace;   // penalized log-likelihood per accepted iterate
};

inline double predict_prob(const LogisticFit& fit, std::span<const double> row) {
  if (row.size() != static_cast<std::size_t>(fit.coefficients.size())) {
    throw Error(ErrorKind::invalid_argument, "design row width does not match the fit");
  }
  double z = 0.0;
  for (std::size_t j = 0; j < row.size(); ++j) z += fit.coefficients(static_cast<Eigen::Index>(j)) * row[j];
  return expit(z);
}

inline Eigen::VectorXd predict_prob(const LogisticFit& fit, const Eigen::MatrixXd& design) {
  if (design.cols() != fit.coefficients.size()) {
    throw Error(ErrorKind::invalid_argument, "design width does not match the fit");
  }
  Eigen::VectorXd eta = design * fit.coefficients;
  return eta.unaryExpr([](double z) { return expit(z); });
}

namespace detail {

// log(1 + e^z) without overflow.
inline double log1p_exp(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

inline double penalized_loglik(const Eigen::VectorXd& eta, const Eigen::VectorXd& y, const Eigen::VectorXd& w,
                               const Eigen::VectorXd& beta, const Eigen::VectorXd& mask, double ridge) {
  double ll = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) ll += w(i) * (y(i) * eta(i) - log1p_exp(eta(i)));
  if (ridge > 0.0) ll -= 0.5 * ridge * (mask.array() * beta.array().square()).sum();
  return ll;
}

}  // namespace detail

// Maximizes sum_i w_i [y_i eta_i - log(1+e^eta_i)] - (ridge/2) |beta_-0|^2.
// Column 0 of the design is treated as the unpenalized intercept.
inline LogisticFit fit_logistic_irls(const Eigen::MatrixXd& x, std::span<const double> labels,
                                     std::span<const double> obs_weights, double ridge = 0.0,
                                     const IrlsOptions& opt = {}) {
  const Eigen::Index n = x.rows();
  const Eigen::Index m = x.cols();
  if (static_cast<std::size_t>(n) != labels.size() || labels.size() != obs_weights.size()) {
    throw Error(ErrorKind::invalid_argument, "design, labels and weights must have equal length");
  }
  if (!(ridge >= 0.0)) throw Error(ErrorKind::invalid_argument, "ridge penalty must be >= 0");
  if (n == 0 || m == 0) throw Error(ErrorKind::invalid_argument, "empty logistic design");
  if (n < m && ridge == 0.0) {
    throw Error(ErrorKind::singular_design, "fewer rows than design columns; use a ridge penalty");
  }

  Eigen::Map<const Eigen::VectorXd> y(labels.data(), n);
  Eigen::Map<const Eigen::VectorXd> w(obs_weights.data(), n);
  double w_pos = 0.0;
  double w_sum = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (labels[static_cast<std::size_t>(i)] != 0.0 && labels[static_cast<std::size_t>(i)] != 1.0) {
      throw Error(ErrorKind::invalid_argument, "logistic labels must be 0 or 1");
    }
    if (!(w(i) > 0.0) || !std::isfinite(w(i))) throw Error(ErrorKind::invalid_argument, "observation weights must be positive");
    w_sum += w(i);
    w_pos += w(i) * y(i);
  }
  if (w_pos == 0.0 || w_pos == w_sum) {
    throw Error(ErrorKind::separation, "labels take a single value; the intercept diverges");
  }

  Eigen::VectorXd mask = Eigen::VectorXd::Ones(m);
  mask(0) = 0.0;

  LogisticFit fit;
  fit.ridge = ridge;
  fit.score_tolerance = opt.score_tolerance * std::max(1.0, w_sum / static_cast<double>(n));
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(m);
  Eigen::VectorXd eta = Eigen::VectorXd::Zero(n);
  double obj = detail::penalized_loglik(eta, y, w, beta, mask, ridge);
  fit.objective_trace.push_back(obj);

  Eigen::VectorXd mu(n);
  Eigen::VectorXd score(m);
  Eigen::MatrixXd hess(m, m);
  for (int iter = 0;; ++iter) {
    for (Eigen::Index i = 0; i < n; ++i) mu(i) = expit(eta(i));
    score.noalias() = x.transpose() * (w.array() * (y - mu).array()).matrix();
    if (ridge > 0.0) score.array() -= ridge * mask.array() * beta.array();
    fit.max_abs_score = score.lpNorm<Eigen::Infinity>();
    fit.iterations = iter;

    const Eigen::VectorXd info = (w.array() * mu.array() * (1.0 - mu.array())).matrix();
    hess.setZero();
    hess.selfadjointView<Eigen::Lower>().rankUpdate(x.transpose() * info.cwiseSqrt().asDiagonal());
    if (ridge > 0.0) hess.diagonal() += ridge * mask;
    Eigen::LLT<Eigen::MatrixXd> llt(hess.selfadjointView<Eigen::Lower>());
    if (llt.info() != Eigen::Success || (ridge == 0.0 && llt.rcond() < 1e-13)) {
      // At the start every row carries information, so a singular matrix there
      // is a design problem; later it means fitted probabilities saturated.
      if (iter > 0 && ridge == 0.0) {
        throw Error(ErrorKind::separation, "fitted probabilities saturate (separation); add a ridge penalty");
      }
      throw Error(ErrorKind::singular_design,
                  ridge == 0.0 ? "weighted normal equations are singular; add a ridge penalty"
                               : "weighted normal equations are singular");
    }
    const Eigen::VectorXd step = llt.solve(score);
    if (!step.allFinite()) throw Error(ErrorKind::singular_design, "non-finite Newton step");

    // A tiny score alone is not enough: under separation it decays while the
    // Newton step stays large.
    if (fit.max_abs_score <= fit.score_tolerance &&
        step.lpNorm<Eigen::Infinity>() <= opt.step_tolerance * (1.0 + beta.lpNorm<Eigen::Infinity>())) {
      fit.converged = true;
      break;
    }
    if (iter >= opt.max_iterations) break;

    // Step halving until the penalized log-likelihood does not decrease. Near
    // the optimum the gain drops below rounding; full steps are then taken
    // without an objective check and not recorded in the trace.
    const double predicted_gain = score.dot(step);
    const bool polishing =
        predicted_gain <= 64.0 * std::numeric_limits<double>::epsilon() * (std::fabs(obj) + w_sum);
    double t = 1.0;
    bool accepted = false;
    bool improved = false;
    Eigen::VectorXd trial;
    Eigen::VectorXd trial_eta;
    for (int h = 0; h <= opt.max_halvings; ++h, t *= 0.5) {
      trial = beta + t * step;
      trial_eta.noalias() = x * trial;
      const double trial_obj = detail::penalized_loglik(trial_eta, y, w, trial, mask, ridge);
      if (!std::isfinite(trial_obj)) continue;
      if (trial_obj >= obj || polishing) {
        beta = trial;
        eta = trial_eta;
        improved = trial_obj >= obj;
        if (improved) obj = trial_obj;
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
    if (improved) fit.objective_trace.push_back(obj);

    if (ridge == 0.0 && (beta.lpNorm<Eigen::Infinity>() > opt.coefficient_cap ||
                         eta.lpNorm<Eigen::Infinity>() > opt.linear_predictor_cap)) {
      throw Error(ErrorKind::separation,
                  "coefficients diverge (quasi-complete separation); add a ridge penalty");
    }
  }
  fit.coefficients = beta;
  return fit;
}

// Weighted ridge least squares; column 0 unpenalized.
inline Eigen::VectorXd fit_least_squares(const Eigen::MatrixXd& x, std::span<const double> response,
                                         std::span<const double> obs_weights, double ridge = 0.0) {
  const Eigen::Index n = x.rows();
  const Eigen::Index m = x.cols();
  if (static_cast<std::size_t>(n) != response.size() || response.size() != obs_weights.size()) {
    throw Error(ErrorKind::invalid_argument, "design, response and weights must have equal length");
  }
  if (n == 0) throw Error(ErrorKind::invalid_argument, "empty regression design");
  Eigen::Map<const Eigen::VectorXd> y(response.data(), n);
  Eigen::Map<const Eigen::VectorXd> w(obs_weights.data(), n);
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(m, m);
  gram.selfadjointView<Eigen::Lower>().rankUpdate(x.transpose() * w.cwiseSqrt().asDiagonal());
  if (ridge > 0.0) gram.diagonal().tail(m - 1).array() += ridge;
  const Eigen::VectorXd rhs = x.transpose() * (w.array() * y.array()).matrix();
  Eigen::LLT<Eigen::MatrixXd> llt(gram.selfadjointView<Eigen::Lower>());
  if (llt.info() != Eigen::Success || (ridge == 0.0 && llt.rcond() < 1e-13)) {
    throw Error(ErrorKind::singular_design, "least-squares normal equations are singular; add a ridge penalty");
  }
  Eigen::VectorXd beta = llt.solve(rhs);
  if (!beta.allFinite()) throw Error(ErrorKind::singular_design, "non-finite least-squares solution");
  return beta;
}

}  // namespace shiftrisk
