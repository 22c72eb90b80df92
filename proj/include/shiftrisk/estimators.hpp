#pragma once

// Target-population risk estimators. Each is written once in survey-weighted
// form; unit weights give the unweighted estimators.
//
//   naive   mean source loss
//   cl      weighted mean of h over target rows
//   iw      inverse-odds weighted source losses
//   dr      cl plus inverse-odds weighted residuals L - h
//   oracle  weighted mean of target losses (needs target outcomes)

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "shiftrisk/core.hpp"
#include "shiftrisk/nuisance.hpp"

namespace shiftrisk {

// Non-owning view of everything the estimators read. losses hold
// L(Y_i, g(X*_i)) (kMissing where unknown); p_hat / h_hat may be empty when an
// estimator does not need them.
struct EstimatorInput {
  std::span<const std::uint8_t> source;
  std::span<const double> losses;
  std::span<const double> p_hat;
  std::span<const double> h_hat;
  std::span<const double> weights;

  std::size_t rows() const { return source.size(); }
};

inline EstimatorInput make_input(const Dataset& data, std::span<const double> losses,
                                 const NuisanceEstimates& nuisance) {
  return {data.source, losses, nuisance.p_hat, nuisance.h_hat, data.weight};
}

namespace detail {

inline void check_lengths(const EstimatorInput& in, bool need_p, bool need_h) {
  const auto n = in.rows();
  if (in.losses.size() != n || in.weights.size() != n) {
    throw Error(ErrorKind::invalid_argument, "estimator input columns have different lengths");
  }
  if (need_p && in.p_hat.size() != n) throw Error(ErrorKind::nuisance_missing, "p_hat not available for every row");
  if (need_h && in.h_hat.size() != n) throw Error(ErrorKind::nuisance_missing, "h_hat not available for every row");
}

inline double target_weight(const EstimatorInput& in) {
  double s = 0.0;
  for (std::size_t i = 0; i < in.rows(); ++i) {
    if (in.source[i] == 0) s += in.weights[i];
  }
  if (!(s > 0.0)) throw Error(ErrorKind::empty_target, "sum of target weights must be positive");
  return s;
}

inline double source_loss(const EstimatorInput& in, std::size_t i) {
  const double l = in.losses[i];
  if (!std::isfinite(l) || l < 0.0) throw Error(ErrorKind::validation, "source loss missing or invalid");
  return l;
}

inline double inverse_odds(double p) {
  if (!(p > 0.0) || !(p <= 1.0)) throw Error(ErrorKind::positivity, "p_hat must lie in (0, 1] on source rows");
  return (1.0 - p) / p;
}

}  // namespace detail

inline double estimate_naive(const EstimatorInput& in) {
  detail::check_lengths(in, false, false);
  double s = 0.0;
  std::size_t n1 = 0;
  for (std::size_t i = 0; i < in.rows(); ++i) {
    if (in.source[i] != 1) continue;
    s += detail::source_loss(in, i);
    ++n1;
  }
  if (n1 == 0) throw Error(ErrorKind::empty_source, "no D=1 rows");
  return s / static_cast<double>(n1);
}

inline double estimate_cl(const EstimatorInput& in) {
  detail::check_lengths(in, false, true);
  const double denom = detail::target_weight(in);
  double s = 0.0;
  for (std::size_t i = 0; i < in.rows(); ++i) {
    if (in.source[i] == 0) s += in.weights[i] * in.h_hat[i];
  }
  return s / denom;
}

// Source losses enter unweighted; source rows carry weight 1 by design.
inline double estimate_iw(const EstimatorInput& in) {
  detail::check_lengths(in, true, false);
  const double denom = detail::target_weight(in);
  double s = 0.0;
  for (std::size_t i = 0; i < in.rows(); ++i) {
    if (in.source[i] == 1) s += detail::inverse_odds(in.p_hat[i]) * detail::source_loss(in, i);
  }
  return s / denom;
}

inline double estimate_dr(const EstimatorInput& in) {
  detail::check_lengths(in, true, true);
  const double denom = detail::target_weight(in);
  double s = 0.0;
  for (std::size_t i = 0; i < in.rows(); ++i) {
    if (in.source[i] == 0) {
      s += in.weights[i] * in.h_hat[i];
    } else {
      s += detail::inverse_odds(in.p_hat[i]) * (detail::source_loss(in, i) - in.h_hat[i]);
    }
  }
  return s / denom;
}

inline double estimate_oracle(const EstimatorInput& in) {
  detail::check_lengths(in, false, false);
  const double denom = detail::target_weight(in);
  double s = 0.0;
  for (std::size_t i = 0; i < in.rows(); ++i) {
    if (in.source[i] != 0) continue;
    if (!std::isfinite(in.losses[i])) throw Error(ErrorKind::oracle_unavailable, "target outcomes are required");
    s += in.weights[i] * in.losses[i];
  }
  return s / denom;
}

inline double estimate(Method m, const EstimatorInput& in) {
  switch (m) {
    case Method::naive: return estimate_naive(in);
    case Method::cl: return estimate_cl(in);
    case Method::iw: return estimate_iw(in);
    case Method::dr: return estimate_dr(in);
    case Method::oracle: return estimate_oracle(in);
  }
  throw Error(ErrorKind::invalid_argument, "unknown method");
}

inline Method parse_method(const std::string& s) {
  if (s == "naive") return Method::naive;
  if (s == "cl") return Method::cl;
  if (s == "iw") return Method::iw;
  if (s == "dr") return Method::dr;
  if (s == "oracle") return Method::oracle;
  throw Error(ErrorKind::invalid_argument, "unknown estimator '" + s + "'");
}

}  // namespace shiftrisk
