#pragma once

#include "orbitdeg/polysys.hpp"
#include "orbitdeg/rng.hpp"

#include <algorithm>
#include <cmath>

namespace orbitdeg::testing {

inline HomogeneousForm random_form(int n, int d, Rng& rng) {
  return HomogeneousForm(n, d, rng.complex_normal_vector(monomial_count(n, d)));
}

inline CMatrix random_matrix(std::size_t r, std::size_t c, Rng& rng) {
  return CMatrix(r, c, rng.complex_normal_vector(r * c));
}

inline double rel_err(cdouble a, cdouble b) {
  return std::abs(a - b) / std::max(1.0, std::max(std::abs(a), std::abs(b)));
}

inline double max_rel_err(const CVector& a, const CVector& b) {
  double scale = 1.0;
  for (const auto& v : a) scale = std::max(scale, std::abs(v));
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]) / scale);
  return m;
}

inline CVector matvec(const CMatrix& a, std::span<const cdouble> x) {
  CVector y(a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) y[i] += a(i, j) * x[j];
  return y;
}

}  // namespace orbitdeg::testing
