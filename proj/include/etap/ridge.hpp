#ifndef ETAP_RIDGE_HPP_
#define ETAP_RIDGE_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

#include <json.hpp>

#include "etap/common.hpp"

namespace etap {

/// Ridge regression with an unpenalised intercept.
///
/// The solve happens on centred (and, when `standardized`, unit-variance)
/// columns; `coefficients` and `intercept` are mapped back to the caller's
/// feature scale so that predict(X) = X * coefficients + intercept.
template <typename Scalar>
struct RidgeModel {
  Vector<Scalar> coefficients;
  Scalar intercept = 0;
  Scalar lambda = 0;
  bool standardized = false;
  Vector<Scalar> feature_mean;
  /// Column scale used by the solve. Zero marks a constant column that was
  /// dropped (its coefficient is fixed at 0).
  Vector<Scalar> feature_scale;

  Eigen::Index feature_dim() const { return coefficients.size(); }

  /// Coefficients in the space the normal equations were solved in.
  Vector<Scalar> solve_coefficients() const {
    return coefficients.cwiseProduct(feature_scale);
  }

  /// Centred/scaled design matrix; dropped columns become zero.
  template <typename Derived>
  Matrix<Scalar> design(const Eigen::MatrixBase<Derived>& x) const {
    Matrix<Scalar> out = x.rowwise() - feature_mean.transpose();
    for (Eigen::Index c = 0; c < out.cols(); ++c) {
      out.col(c) *= feature_scale[c] > 0 ? Scalar(1) / feature_scale[c]
                                         : Scalar(0);
    }
    return out;
  }
};

struct RidgeOptions {
  bool standardize = false;
};

template <typename Scalar, typename DerivedX, typename DerivedY>
RidgeModel<Scalar> ridge_fit(const Eigen::MatrixBase<DerivedX>& x,
                             const Eigen::MatrixBase<DerivedY>& y,
                             Scalar lambda, RidgeOptions options = {}) {
  const Eigen::Index n = x.rows();
  const Eigen::Index p = x.cols();
  if (n < 1 || y.size() != n) {
    throw Error("ridge fit: need rows(X) == len(y) >= 1");
  }
  if (!(lambda >= 0) || !std::isfinite(static_cast<double>(lambda))) {
    throw Error("ridge fit: lambda must be finite and non-negative");
  }
  if (!x.allFinite() || !y.allFinite()) {
    throw Error("ridge fit: non-finite input");
  }

  RidgeModel<Scalar> model;
  model.lambda = lambda;
  model.standardized = options.standardize;
  model.feature_mean = x.colwise().mean().transpose();
  model.feature_scale = Vector<Scalar>::Ones(p);
  if (options.standardize) {
    for (Eigen::Index c = 0; c < p; ++c) {
      const Scalar var =
          (x.col(c).array() - model.feature_mean[c]).square().mean();
      model.feature_scale[c] = var > Scalar(0) ? std::sqrt(var) : Scalar(0);
    }
  }

  std::vector<Eigen::Index> active;
  for (Eigen::Index c = 0; c < p; ++c) {
    if (model.feature_scale[c] > 0) active.push_back(c);
  }
  const Matrix<Scalar> full = model.design(x);
  Matrix<Scalar> xc(n, static_cast<Eigen::Index>(active.size()));
  for (std::size_t k = 0; k < active.size(); ++k) xc.col(k) = full.col(active[k]);
  const Scalar y_mean = y.mean();
  const Vector<Scalar> yc = y.array() - y_mean;

  Vector<Scalar> beta = Vector<Scalar>::Zero(p);
  if (!active.empty()) {
    if (lambda == Scalar(0)) {
      Eigen::ColPivHouseholderQR<Matrix<Scalar>> qr(xc);
      if (qr.rank() < xc.cols()) {
        throw Error("ridge fit: rank-deficient design at lambda = 0; use "
                    "lambda > 0");
      }
    }
    Matrix<Scalar> gram = xc.transpose() * xc;
    gram.diagonal().array() += lambda;
    Eigen::LDLT<Matrix<Scalar>> ldlt(gram);
    if (ldlt.info() != Eigen::Success) {
      throw Error("ridge fit: factorisation failed");
    }
    const Vector<Scalar> solved = ldlt.solve(xc.transpose() * yc);
    for (std::size_t k = 0; k < active.size(); ++k) beta[active[k]] = solved[k];
  }

  model.coefficients.resize(p);
  for (Eigen::Index c = 0; c < p; ++c) {
    model.coefficients[c] =
        model.feature_scale[c] > 0 ? beta[c] / model.feature_scale[c] : 0;
  }
  model.intercept = y_mean - model.feature_mean.dot(model.coefficients);
  if (!model.coefficients.allFinite() || !std::isfinite(model.intercept)) {
    throw Error("ridge fit: non-finite solution");
  }
  return model;
}

template <typename Scalar, typename Derived>
Vector<Scalar> ridge_predict(const RidgeModel<Scalar>& model,
                             const Eigen::MatrixBase<Derived>& x) {
  if (x.cols() != model.feature_dim()) {
    throw Error("ridge predict: expected " +
                std::to_string(model.feature_dim()) + " columns, got " +
                std::to_string(x.cols()));
  }
  return (x * model.coefficients).array() + model.intercept;
}

/// (X'X + lambda I) w - X'y in the model's solve space; the quantity the
/// normal-equation check bounds.
template <typename Scalar, typename DerivedX, typename DerivedY>
Vector<Scalar> normal_equation_residual(const RidgeModel<Scalar>& model,
                                        const Eigen::MatrixBase<DerivedX>& x,
                                        const Eigen::MatrixBase<DerivedY>& y) {
  const Matrix<Scalar> xc = model.design(x);
  const Vector<Scalar> yc = y.array() - y.mean();
  const Vector<Scalar> w = model.solve_coefficients();
  Vector<Scalar> r = xc.transpose() * (xc * w) + model.lambda * w -
                     xc.transpose() * yc;
  // Dropped columns are not part of the solved system.
  for (Eigen::Index c = 0; c < r.size(); ++c) {
    if (!(model.feature_scale[c] > 0)) r[c] = 0;
  }
  return r;
}

/// Log-spaced grid over [lo, hi] inclusive.
inline std::vector<double> log_grid(double lo, double hi, int count) {
  if (count < 1 || !(lo > 0) || !(hi >= lo)) throw Error("invalid log grid");
  std::vector<double> out;
  if (count == 1) return {lo};
  const double a = std::log10(lo);
  const double b = std::log10(hi);
  for (int i = 0; i < count; ++i) {
    out.push_back(std::pow(10.0, a + (b - a) * i / (count - 1)));
  }
  return out;
}

struct CvConfig {
  std::vector<double> lambda_grid = log_grid(0.001, 1.0, 7);
  /// 0 selects min(5, sample count).
  int folds = 0;
  std::uint64_t seed = 0;
  RidgeOptions ridge;
};

/// Fold index per sample: a seeded permutation dealt round-robin.
inline std::vector<int> assign_folds(Eigen::Index n, int folds,
                                     std::uint64_t seed) {
  std::vector<int> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<int> fold(static_cast<std::size_t>(n));
  for (std::size_t k = 0; k < perm.size(); ++k) {
    fold[perm[k]] = static_cast<int>(k % folds);
  }
  return fold;
}

inline int resolve_folds(const CvConfig& cv, Eigen::Index n) {
  const int folds =
      cv.folds > 0 ? cv.folds : static_cast<int>(std::min<Eigen::Index>(5, n));
  if (folds < 2 || folds > n) {
    throw Error("cross-validation: " + std::to_string(n) +
                " samples cannot fill " + std::to_string(folds) + " folds");
  }
  return folds;
}

template <typename Scalar>
struct CvResult {
  RidgeModel<Scalar> model;
  Scalar lambda = 0;
  std::vector<Scalar> cv_mse;  // parallel to the lambda grid
};

/// Mean over folds of the validation MSE of ridge at one lambda.
template <typename Scalar, typename DerivedX, typename DerivedY>
Scalar cv_error(const Eigen::MatrixBase<DerivedX>& x,
                const Eigen::MatrixBase<DerivedY>& y, Scalar lambda,
                const std::vector<int>& fold, int folds, RidgeOptions options) {
  Scalar total = 0;
  for (int f = 0; f < folds; ++f) {
    std::vector<Eigen::Index> tr, va;
    for (std::size_t i = 0; i < fold.size(); ++i) {
      (fold[i] == f ? va : tr).push_back(static_cast<Eigen::Index>(i));
    }
    Matrix<Scalar> xt(static_cast<Eigen::Index>(tr.size()), x.cols());
    Vector<Scalar> yt(static_cast<Eigen::Index>(tr.size()));
    for (std::size_t k = 0; k < tr.size(); ++k) {
      xt.row(k) = x.row(tr[k]);
      yt[k] = y[tr[k]];
    }
    const auto model = ridge_fit(xt, yt, lambda, options);
    Scalar sq = 0;
    for (Eigen::Index i : va) {
      const Scalar pred = x.row(i).dot(model.coefficients) + model.intercept;
      sq += (pred - y[i]) * (pred - y[i]);
    }
    total += sq / static_cast<Scalar>(va.size());
  }
  return total / static_cast<Scalar>(folds);
}

/// Picks lambda by k-fold CV (ties go to the larger lambda), then refits on
/// all data.
template <typename DerivedX, typename DerivedY>
CvResult<typename DerivedX::Scalar> ridge_fit_cv(
    const Eigen::MatrixBase<DerivedX>& x, const Eigen::MatrixBase<DerivedY>& y,
    const CvConfig& cv) {
  using Scalar = typename DerivedX::Scalar;
  if (cv.lambda_grid.empty()) throw Error("cross-validation: empty grid");
  if (y.size() != x.rows()) throw Error("cross-validation: shape mismatch");
  const int folds = resolve_folds(cv, x.rows());
  const auto fold = assign_folds(x.rows(), folds, cv.seed);

  std::vector<double> grid = cv.lambda_grid;
  std::sort(grid.begin(), grid.end());
  CvResult<Scalar> out;
  Scalar best = std::numeric_limits<Scalar>::infinity();
  std::vector<Scalar> mse_sorted;
  for (double lam : grid) {
    const Scalar e =
        cv_error(x, y, static_cast<Scalar>(lam), fold, folds, cv.ridge);
    mse_sorted.push_back(e);
    const Scalar tol = Scalar(1e-12) * std::abs(best) + Scalar(1e-300);
    if (e <= best + (std::isfinite(best) ? tol : Scalar(0))) {
      best = std::min(best, e);
      out.lambda = static_cast<Scalar>(lam);
    }
  }
  // Report in the caller's grid order.
  for (double lam : cv.lambda_grid) {
    const auto it = std::find(grid.begin(), grid.end(), lam);
    out.cv_mse.push_back(mse_sorted[it - grid.begin()]);
  }
  out.model = ridge_fit(x, y, out.lambda, cv.ridge);
  return out;
}

template <typename Scalar>
void to_json(nlohmann::json& j, const RidgeModel<Scalar>& m) {
  auto vec = [](const Vector<Scalar>& v) {
    return std::vector<Scalar>(v.data(), v.data() + v.size());
  };
  j = nlohmann::json{{"schema", "etap.ridge/1"},
                     {"coefficients", vec(m.coefficients)},
                     {"intercept", m.intercept},
                     {"lambda", m.lambda},
                     {"standardized", m.standardized},
                     {"feature_mean", vec(m.feature_mean)},
                     {"feature_scale", vec(m.feature_scale)}};
}

template <typename Scalar>
void from_json(const nlohmann::json& j, RidgeModel<Scalar>& m) {
  auto vec = [](const nlohmann::json& a) {
    const auto v = a.get<std::vector<Scalar>>();
    return Vector<Scalar>(Eigen::Map<const Vector<Scalar>>(
        v.data(), static_cast<Eigen::Index>(v.size())));
  };
  m.coefficients = vec(j.at("coefficients"));
  m.intercept = j.at("intercept").get<Scalar>();
  m.lambda = j.at("lambda").get<Scalar>();
  m.standardized = j.at("standardized").get<bool>();
  m.feature_mean = vec(j.at("feature_mean"));
  m.feature_scale = vec(j.at("feature_scale"));
  if (m.feature_mean.size() != m.coefficients.size() ||
      m.feature_scale.size() != m.coefficients.size()) {
    throw Error("ridge JSON: inconsistent vector lengths");
  }
}

}  // namespace etap

#endif  // ETAP_RIDGE_HPP_
