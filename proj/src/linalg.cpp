#include "orbitdeg/linalg.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <limits>

namespace orbitdeg {

namespace {

Eigen::MatrixXcd to_eigen(const CMatrix& a) {
  Eigen::MatrixXcd m(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) m(i, j) = a(i, j);
  return m;
}

}  // namespace

std::vector<double> singular_values(const CMatrix& a) {
  if (a.rows() == 0 || a.cols() == 0) return {};
  Eigen::JacobiSVD<Eigen::MatrixXcd> svd(to_eigen(a));
  const auto& s = svd.singularValues();
  return {s.data(), s.data() + s.size()};
}

std::size_t numerical_rank(const CMatrix& a, double rel_tol) {
  auto s = singular_values(a);
  if (s.empty() || s.front() == 0.0) return 0;
  return static_cast<std::size_t>(
      std::count_if(s.begin(), s.end(), [&](double v) { return v > rel_tol * s.front(); }));
}

double condition_number(const CMatrix& a) {
  auto s = singular_values(a);
  if (s.empty() || s.back() == 0.0) return std::numeric_limits<double>::infinity();
  return s.front() / s.back();
}

CMatrix random_unitary(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  Eigen::MatrixXcd g(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) g(i, j) = cdouble(normal(rng), normal(rng));
  Eigen::HouseholderQR<Eigen::MatrixXcd> qr(g);
  Eigen::MatrixXcd q = qr.householderQ();
  CMatrix u(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) u(i, j) = q(i, j);
  return u;
}

CVector polynomial_roots(std::span<const cdouble> coeffs) {
  std::size_t deg = coeffs.size();
  while (deg > 0 && coeffs[deg - 1] == cdouble(0)) --deg;
  if (deg == 0) throw NumericalError("polynomial_roots: zero polynomial");
  --deg;
  if (deg == 0) return {};
  const cdouble lead = coeffs[deg];
  Eigen::MatrixXcd companion = Eigen::MatrixXcd::Zero(deg, deg);
  for (std::size_t i = 1; i < deg; ++i) companion(i, i - 1) = 1.0;
  for (std::size_t i = 0; i < deg; ++i) companion(i, deg - 1) = -coeffs[i] / lead;
  Eigen::ComplexEigenSolver<Eigen::MatrixXcd> es(companion, false);
  if (es.info() != Eigen::Success) throw NumericalError("polynomial_roots: eigensolver failed");
  CVector roots(es.eigenvalues().data(), es.eigenvalues().data() + deg);
  for (auto& r : roots) {
    for (int it = 0; it < 4; ++it) {
      cdouble p = coeffs[deg], dp = 0;
      for (std::size_t k = deg; k-- > 0;) {
        dp = dp * r + p;
        p = p * r + coeffs[k];
      }
      if (dp == cdouble(0)) break;
      const cdouble step = p / dp;
      r -= step;
      if (std::abs(step) <= 1e-16 * std::max(1.0, std::abs(r))) break;
    }
  }
  return roots;
}

}  // namespace orbitdeg
