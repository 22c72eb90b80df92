#pragma once

// Clamped B-spline basis on a closed interval, evaluated with the
// triangular de Boor-Cox recurrence.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "shiftrisk/core.hpp"

namespace shiftrisk {

// Type-7 sample quantile (linear interpolation between order statistics).
inline double quantile_sorted(const std::vector<double>& sorted, double prob) {
  if (sorted.empty()) throw Error(ErrorKind::invalid_argument, "quantile of an empty sample");
  const double h = prob * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

class BSplineBasis {
 public:
  BSplineBasis() = default;

  // Boundary knots lo < hi are repeated degree+1 times. Interior knots must be
  // strictly inside (lo, hi) and non-decreasing.
  BSplineBasis(double lo, double hi, std::vector<double> interior, int degree) : lo_(lo), hi_(hi), degree_(degree) {
    if (!(lo < hi)) throw Error(ErrorKind::invalid_argument, "spline range must have lo < hi");
    if (degree < 0) throw Error(ErrorKind::invalid_argument, "spline degree must be non-negative");
    knots_.assign(static_cast<std::size_t>(degree + 1), lo);
    for (double k : interior) {
      if (!(k > lo && k < hi)) throw Error(ErrorKind::invalid_argument, "interior knot outside the open range");
      knots_.push_back(k);
    }
    knots_.insert(knots_.end(), static_cast<std::size_t>(degree + 1), hi);
    if (!std::is_sorted(knots_.begin(), knots_.end())) {
      throw Error(ErrorKind::invalid_argument, "knots must be non-decreasing");
    }
  }

  // Interior knots at the (j/(k+1)) sample quantiles, j=1..k; duplicates and
  // values on the boundary are dropped, so heavily tied covariates get a
  // smaller basis. Returns an empty basis when the sample has no spread.
  static BSplineBasis from_sample(std::vector<double> values, int interior_knots, int degree) {
    std::sort(values.begin(), values.end());
    const double lo = values.front();
    const double hi = values.back();
    if (!(lo < hi)) return BSplineBasis();
    std::vector<double> interior;
    for (int j = 1; j <= interior_knots; ++j) {
      const double q = quantile_sorted(values, static_cast<double>(j) / (interior_knots + 1));
      if (q > lo && q < hi && (interior.empty() || q > interior.back())) interior.push_back(q);
    }
    return BSplineBasis(lo, hi, std::move(interior), degree);
  }

  bool empty() const { return knots_.empty(); }
  std::size_t size() const { return empty() ? 0 : knots_.size() - static_cast<std::size_t>(degree_) - 1; }
  int degree() const { return degree_; }
  double lower() const { return lo_; }
  double upper() const { return hi_; }
  const std::vector<double>& knots() const { return knots_; }

  // Writes size() basis values at x into out. x is clamped into [lo, hi]
  // first, so values stay bounded for out-of-range inputs.
  void evaluate(double x, double* out) const {
    const std::size_t nb = size();
    if (nb == 0) return;
    std::fill(out, out + nb, 0.0);
    x = std::clamp(x, lo_, hi_);
    const auto p = static_cast<std::size_t>(degree_);
    const std::size_t span = find_span(x);

    // N[0..p] holds the non-zero functions N_{span-p..span, p}(x).
    double n_buf[16];
    double left[16];
    double right[16];
    std::vector<double> heap;
    double* N = n_buf;
    double* L = left;
    double* R = right;
    if (p + 1 > 16) {
      heap.resize(3 * (p + 1));
      N = heap.data();
      L = N + p + 1;
      R = L + p + 1;
    }
    N[0] = 1.0;
    for (std::size_t j = 1; j <= p; ++j) {
      L[j] = x - knots_[span + 1 - j];
      R[j] = knots_[span + j] - x;
      double saved = 0.0;
      for (std::size_t r = 0; r < j; ++r) {
        const double denom = R[r + 1] + L[j - r];
        const double temp = denom > 0.0 ? N[r] / denom : 0.0;
        N[r] = saved + R[r + 1] * temp;
        saved = L[j - r] * temp;
      }
      N[j] = saved;
    }
    for (std::size_t r = 0; r <= p; ++r) out[span - p + r] = N[r];
  }

  std::vector<double> evaluate(double x) const {
    std::vector<double> out(size());
    evaluate(x, out.data());
    return out;
  }

 private:
  // Index i of the knot span [t_i, t_{i+1}) containing x, with the right
  // boundary assigned to the last non-empty span.
  std::size_t find_span(double x) const {
    const std::size_t nb = size();
    const auto p = static_cast<std::size_t>(degree_);
    if (x >= hi_) {
      std::size_t i = nb - 1;
      while (i > p && knots_[i] >= hi_) --i;
      return std::max(i, p);
    }
    auto it = std::upper_bound(knots_.begin() + static_cast<std::ptrdiff_t>(p),
                               knots_.begin() + static_cast<std::ptrdiff_t>(nb) + 1, x);
    return static_cast<std::size_t>(it - knots_.begin()) - 1;
  }

  double lo_ = 0.0;
  double hi_ = 0.0;
  int degree_ = 3;
  std::vector<double> knots_;
};

}  // namespace shiftrisk
