#pragma once

// Feature maps turning covariates into logistic / least-squares design
// matrices: linear, linear+quadratic, and additive cubic B-splines.

#include <Eigen/Dense>

#include <cmath>
#include <string>
#include <vector>

#include "shiftrisk/bspline.hpp"
#include "shiftrisk/core.hpp"

namespace shiftrisk {

enum class FeatureKind { linear, quadratic, spline };

inline const char* to_string(FeatureKind k) {
  switch (k) {
    case FeatureKind::linear: return "linear";
    case FeatureKind::quadratic: return "quadratic";
    case FeatureKind::spline: return "spline";
  }
  return "unknown";
}

inline FeatureKind parse_feature_kind(const std::string& s) {
  if (s == "linear") return FeatureKind::linear;
  if (s == "quadratic" || s == "linear+quadratic") return FeatureKind::quadratic;
  if (s == "spline" || s == "additive-spline") return FeatureKind::spline;
  throw Error(ErrorKind::invalid_argument, "unknown feature map '" + s + "'");
}

struct FeatureMap {
  FeatureKind kind = FeatureKind::linear;
  // Spline settings; ignored by the parametric maps.
  int interior_knots = 5;
  int degree = 3;
  std::vector<double> lambda_grid{1e-4, 1e-2, 1.0};

  static FeatureMap linear() { return {FeatureKind::linear}; }
  static FeatureMap quadratic() { return {FeatureKind::quadratic}; }
  static FeatureMap spline() { return {FeatureKind::spline}; }

  void validate() const {
    if (kind != FeatureKind::spline) return;
    if (interior_knots < 0 || degree < 1) throw Error(ErrorKind::invalid_argument, "bad spline configuration");
    if (lambda_grid.empty()) throw Error(ErrorKind::invalid_argument, "spline map needs a ridge grid");
    for (double l : lambda_grid) {
      if (!(l >= 0.0) || !std::isfinite(l)) throw Error(ErrorKind::invalid_argument, "ridge penalty must be >= 0");
    }
  }

  std::string describe() const {
    if (kind != FeatureKind::spline) return to_string(kind);
    return "spline(knots=" + std::to_string(interior_knots) + ",degree=" + std::to_string(degree) + ")";
  }
};

// A feature map bound to the rows it was fit on (knots and ranges for the
// spline map). Column layout: intercept, covariates in dataset order, then
// one quadratic or spline block per covariate.
class Design {
 public:
  static Design fit(const FeatureMap& map, const Eigen::MatrixXd& rows) {
    map.validate();
    Design d;
    d.map_ = map;
    d.dim_ = rows.cols();
    if (map.kind == FeatureKind::spline) {
      if (rows.rows() == 0) throw Error(ErrorKind::invalid_argument, "spline knots need at least one row");
      for (Eigen::Index j = 0; j < rows.cols(); ++j) {
        std::vector<double> col(rows.col(j).data(), rows.col(j).data() + rows.rows());
        for (double v : col) {
          if (!std::isfinite(v)) throw Error(ErrorKind::invalid_argument, "non-finite covariate in design");
        }
        d.bases_.push_back(BSplineBasis::from_sample(std::move(col), map.interior_knots, map.degree));
      }
    }
    return d;
  }

  const FeatureMap& map() const { return map_; }
  const std::vector<BSplineBasis>& bases() const { return bases_; }

  Eigen::Index width() const {
    switch (map_.kind) {
      case FeatureKind::linear: return 1 + dim_;
      case FeatureKind::quadratic: return 1 + 2 * dim_;
      case FeatureKind::spline: {
        Eigen::Index w = 1;
        for (const auto& b : bases_) w += static_cast<Eigen::Index>(b.size());
        return w;
      }
    }
    return 0;
  }

  // Columns that carry a ridge penalty (everything but the intercept).
  Eigen::VectorXd penalty_mask() const {
    Eigen::VectorXd m = Eigen::VectorXd::Ones(width());
    m(0) = 0.0;
    return m;
  }

  Eigen::MatrixXd transform(const Eigen::MatrixXd& x) const {
    if (x.cols() != dim_) throw Error(ErrorKind::invalid_argument, "design: covariate count mismatch");
    const Eigen::Index n = x.rows();
    Eigen::MatrixXd out(n, width());
    out.col(0).setOnes();
    for (Eigen::Index j = 0; j < dim_; ++j) {
      for (Eigen::Index i = 0; i < n; ++i) {
        if (!std::isfinite(x(i, j))) throw Error(ErrorKind::invalid_argument, "non-finite covariate in design");
      }
    }
    if (map_.kind == FeatureKind::spline) {
      Eigen::Index col = 1;
      std::vector<double> buf;
      for (Eigen::Index j = 0; j < dim_; ++j) {
        const auto& basis = bases_[static_cast<std::size_t>(j)];
        const auto nb = static_cast<Eigen::Index>(basis.size());
        buf.resize(basis.size());
        for (Eigen::Index i = 0; i < n; ++i) {
          basis.evaluate(x(i, j), buf.data());
          for (Eigen::Index b = 0; b < nb; ++b) out(i, col + b) = buf[static_cast<std::size_t>(b)];
        }
        col += nb;
      }
      return out;
    }
    out.middleCols(1, dim_) = x;
    if (map_.kind == FeatureKind::quadratic) out.rightCols(dim_) = x.array().square().matrix();
    return out;
  }

 private:
  FeatureMap map_;
  Eigen::Index dim_ = 0;
  std::vector<BSplineBasis> bases_;
};

// Design for a dataset with knots taken from the same rows.
inline Eigen::MatrixXd build_design(const Dataset& data, const FeatureMap& map) {
  return Design::fit(map, data.covariates).transform(data.covariates);
}

}  // namespace shiftrisk
