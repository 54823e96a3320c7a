#ifndef ETAP_SPLINE_MAP_HPP_
#define ETAP_SPLINE_MAP_HPP_

#include <algorithm>
#include <cmath>
#include <vector>

#include <json.hpp>

#include "etap/common.hpp"

namespace etap {

/// Clamped B-spline basis: boundary knots repeated degree+1 times, interior
/// knots strictly inside and strictly increasing.
template <typename Scalar>
struct SplineSpec {
  int degree = 3;
  std::vector<Scalar> knots;

  int basis_count() const {
    return static_cast<int>(knots.size()) - degree - 1;
  }
  int interior_count() const {
    return static_cast<int>(knots.size()) - 2 * (degree + 1);
  }
  Scalar lower() const { return knots.front(); }
  Scalar upper() const { return knots.back(); }

  void validate() const {
    if (degree < 1 || degree > 6) throw Error("spline degree must be in [1, 6]");
    if (interior_count() < 0) throw Error("knot vector too short for degree");
    const auto d = static_cast<std::size_t>(degree);
    for (std::size_t i = 1; i <= d; ++i) {
      if (knots[i] != knots[0] || knots[knots.size() - 1 - i] != knots.back()) {
        throw Error("boundary knots must have multiplicity degree + 1");
      }
    }
    if (!(knots.front() < knots.back())) {
      throw Error("spline domain is empty");
    }
    for (std::size_t i = d; i + d + 1 < knots.size(); ++i) {
      if (!(knots[i] < knots[i + 1])) {
        throw Error("interior knots must be strictly increasing and inside "
                    "the boundary");
      }
    }
  }
};

/// Linear-interpolation quantile of sorted data (the "type 7" rule).
template <typename Scalar>
Scalar sorted_quantile(const std::vector<Scalar>& sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const Scalar frac = static_cast<Scalar>(pos - static_cast<double>(lo));
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

/// Boundary knots at the score range, interior knots at evenly spaced
/// empirical quantiles. Coincident quantiles are merged.
template <typename Scalar>
SplineSpec<Scalar> fit_knots(std::vector<Scalar> scores, int degree,
                             int interior_count) {
  if (scores.size() < 2) throw Error("fit_knots: need at least two scores");
  if (interior_count < 0) throw Error("fit_knots: negative interior count");
  for (Scalar s : scores) {
    if (!std::isfinite(static_cast<double>(s))) {
      throw Error("fit_knots: non-finite score");
    }
  }
  std::sort(scores.begin(), scores.end());
  const Scalar lo = scores.front();
  const Scalar hi = scores.back();
  if (!(lo < hi)) throw Error("fit_knots: all scores identical");

  std::vector<Scalar> interior;
  for (int i = 1; i <= interior_count; ++i) {
    const Scalar q = sorted_quantile(
        scores, static_cast<double>(i) / static_cast<double>(interior_count + 1));
    if (q > lo && q < hi && (interior.empty() || q > interior.back())) {
      interior.push_back(q);
    }
  }

  SplineSpec<Scalar> spec;
  spec.degree = degree;
  spec.knots.assign(static_cast<std::size_t>(degree) + 1, lo);
  spec.knots.insert(spec.knots.end(), interior.begin(), interior.end());
  spec.knots.insert(spec.knots.end(), static_cast<std::size_t>(degree) + 1, hi);
  spec.validate();
  return spec;
}

/// All basis values N_0..N_{M-1} at z, clamped to the knot range first.
template <typename Scalar>
Vector<Scalar> basis_expand(Scalar z, const SplineSpec<Scalar>& spec) {
  const int d = spec.degree;
  const int m = spec.basis_count();
  const auto& t = spec.knots;
  z = std::clamp(z, spec.lower(), spec.upper());

  // Knot span s with t[s] <= z < t[s+1]; the right end uses the last span.
  int s = m - 1;
  if (z < spec.upper()) {
    const auto it = std::upper_bound(t.begin() + d, t.begin() + m + 1, z);
    s = static_cast<int>(it - t.begin()) - 1;
  }

  // Cox-de Boor triangle for the d+1 functions that are nonzero on span s.
  std::vector<Scalar> n(d + 1, Scalar(0)), left(d + 1), right(d + 1);
  n[0] = 1;
  for (int j = 1; j <= d; ++j) {
    left[j] = z - t[s + 1 - j];
    right[j] = t[s + j] - z;
    Scalar saved = 0;
    for (int r = 0; r < j; ++r) {
      const Scalar tmp = n[r] / (right[r + 1] + left[j - r]);
      n[r] = saved + right[r + 1] * tmp;
      saved = left[j - r] * tmp;
    }
    n[j] = saved;
  }

  Vector<Scalar> out = Vector<Scalar>::Zero(m);
  for (int r = 0; r <= d; ++r) out[s - d + r] = n[r];
  return out;
}

template <typename Scalar>
Vector<Scalar> affine_expand(Scalar z) {
  Vector<Scalar> out(2);
  out << Scalar(1), z;
  return out;
}

template <typename Scalar>
void to_json(nlohmann::json& j, const SplineSpec<Scalar>& s) {
  j = nlohmann::json{{"degree", s.degree}, {"knots", s.knots}};
}

template <typename Scalar>
void from_json(const nlohmann::json& j, SplineSpec<Scalar>& s) {
  s.degree = j.at("degree").get<int>();
  s.knots = j.at("knots").get<std::vector<Scalar>>();
  s.validate();
}

}  // namespace etap

#endif  // ETAP_SPLINE_MAP_HPP_
