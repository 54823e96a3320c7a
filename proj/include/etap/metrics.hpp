#ifndef ETAP_METRICS_HPP_
#define ETAP_METRICS_HPP_

#include <algorithm>
#include <cmath>
#include <span>

#include <json.hpp>

#include "etap/common.hpp"

namespace etap {

struct EvalReport {
  double r2 = 0.0;
  double pearson = 0.0;
  double mse = 0.0;
  int n_points = 0;
};

namespace detail {

template <typename DerivedA, typename DerivedB>
void check_pair(const Eigen::MatrixBase<DerivedA>& a,
                const Eigen::MatrixBase<DerivedB>& b, const char* what) {
  if (a.size() != b.size() || a.size() < 2) {
    throw Error(std::string(what) + ": need equal lengths >= 2");
  }
}

}  // namespace detail

template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar mean_squared_error(
    const Eigen::MatrixBase<DerivedA>& actual,
    const Eigen::MatrixBase<DerivedB>& predicted) {
  if (actual.size() != predicted.size() || actual.size() == 0) {
    throw Error("mse: need equal non-empty lengths");
  }
  return (actual - predicted).squaredNorm() /
         static_cast<typename DerivedA::Scalar>(actual.size());
}

/// 1 - SS_res / SS_tot. Negative when worse than the mean predictor.
template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar r_squared(const Eigen::MatrixBase<DerivedA>& actual,
                                    const Eigen::MatrixBase<DerivedB>& predicted) {
  detail::check_pair(actual, predicted, "r_squared");
  const auto mean = actual.mean();
  const auto ss_tot = (actual.array() - mean).square().sum();
  if (!(ss_tot > 0)) throw Error("r_squared: actual values have zero variance");
  return 1 - (actual - predicted).squaredNorm() / ss_tot;
}

/// Sample correlation coefficient.
template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar pearson(const Eigen::MatrixBase<DerivedA>& a,
                                  const Eigen::MatrixBase<DerivedB>& b) {
  using Scalar = typename DerivedA::Scalar;
  detail::check_pair(a, b, "pearson");
  const Scalar n1 = static_cast<Scalar>(a.size() - 1);
  const Vector<Scalar> da = (a.array() - a.mean()).matrix();
  const Vector<Scalar> db = (b.array() - b.mean()).matrix();
  const Scalar var_a = da.squaredNorm() / n1;
  const Scalar var_b = db.squaredNorm() / n1;
  if (!(var_a > 0) || !(var_b > 0)) {
    throw Error("pearson: zero variance input");
  }
  const Scalar r = (da.dot(db) / n1) / std::sqrt(var_a * var_b);
  return std::clamp(r, Scalar(-1), Scalar(1));
}

inline EvalReport evaluate(std::span<const double> actual,
                           std::span<const double> predicted) {
  Eigen::Map<const VectorXd> a(actual.data(),
                               static_cast<Eigen::Index>(actual.size()));
  Eigen::Map<const VectorXd> p(predicted.data(),
                               static_cast<Eigen::Index>(predicted.size()));
  return EvalReport{r_squared(a, p), pearson(a, p), mean_squared_error(a, p),
                    static_cast<int>(actual.size())};
}

inline void to_json(nlohmann::json& j, const EvalReport& r) {
  j = nlohmann::json{{"r2", r.r2},
                     {"pearson", r.pearson},
                     {"mse", r.mse},
                     {"n_points", r.n_points}};
}

inline void from_json(const nlohmann::json& j, EvalReport& r) {
  r.r2 = j.at("r2").get<double>();
  r.pearson = j.at("pearson").get<double>();
  r.mse = j.at("mse").get<double>();
  r.n_points = j.at("n_points").get<int>();
}

}  // namespace etap

#endif  // ETAP_METRICS_HPP_
