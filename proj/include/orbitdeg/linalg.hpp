#pragma once

#include "orbitdeg/types.hpp"

#include <limits>
#include <optional>
#include <random>
#include <vector>

namespace orbitdeg {

/// In-place LU factorization with partial pivoting, templated so the same code
/// serves binary64 tracking and MPFR refinement.
template <class S>
class LU {
 public:
  LU() = default;
  explicit LU(Matrix<S> a) { factor(std::move(a)); }

  /// Returns false if a pivot is exactly zero.
  bool factor(Matrix<S> a) {
    using std::abs;
    lu_ = std::move(a);
    const std::size_t n = lu_.rows();
    if (lu_.cols() != n) throw DimensionError("LU of non-square matrix");
    perm_.resize(n);
    singular_ = false;
    max_pivot_ = real_t<S>(0);
    min_pivot_ = real_t<S>(0);
    for (std::size_t k = 0; k < n; ++k) {
      std::size_t p = k;
      real_t<S> best = abs2(lu_(k, k));
      for (std::size_t i = k + 1; i < n; ++i) {
        real_t<S> v = abs2(lu_(i, k));
        if (v > best) {
          best = v;
          p = i;
        }
      }
      perm_[k] = p;
      if (p != k)
        for (std::size_t j = 0; j < n; ++j) std::swap(lu_(k, j), lu_(p, j));
      if (best == 0) {
        singular_ = true;
        min_pivot_ = real_t<S>(0);
        continue;
      }
      using std::sqrt;
      real_t<S> piv = sqrt(best);
      if (k == 0 || piv > max_pivot_) max_pivot_ = piv;
      if (k == 0 || piv < min_pivot_) min_pivot_ = piv;
      const S inv = S(1) / lu_(k, k);
      for (std::size_t i = k + 1; i < n; ++i) {
        S& l = lu_(i, k);
        if (l == S(0)) continue;
        l *= inv;
        const S lik = l;
        auto ri = lu_.row(i);
        auto rk = lu_.row(k);
        for (std::size_t j = k + 1; j < n; ++j) ri[j] -= lik * rk[j];
      }
    }
    return !singular_;
  }

  bool singular() const { return singular_; }

  /// Ratio of largest to smallest pivot; a cheap lower estimate of the
  /// condition number used to flag near-singular systems.
  real_t<S> pivot_ratio() const {
    if (singular_ || min_pivot_ == 0) return real_t<S>(std::numeric_limits<double>::infinity());
    return max_pivot_ / min_pivot_;
  }

  void solve_in_place(std::span<S> b) const {
    const std::size_t n = lu_.rows();
    if (b.size() != n) throw DimensionError("LU solve dimension mismatch");
    for (std::size_t k = 0; k < n; ++k)
      if (perm_[k] != k) std::swap(b[k], b[perm_[k]]);
    for (std::size_t i = 1; i < n; ++i) {
      S s = b[i];
      for (std::size_t j = 0; j < i; ++j) s -= lu_(i, j) * b[j];
      b[i] = s;
    }
    for (std::size_t ii = n; ii-- > 0;) {
      S s = b[ii];
      for (std::size_t j = ii + 1; j < n; ++j) s -= lu_(ii, j) * b[j];
      b[ii] = s / lu_(ii, ii);
    }
  }

  std::vector<S> solve(std::span<const S> b) const {
    std::vector<S> x(b.begin(), b.end());
    solve_in_place(x);
    return x;
  }

  /// Columnwise solve A X = B.
  Matrix<S> solve(const Matrix<S>& b) const {
    const std::size_t n = lu_.rows();
    Matrix<S> x(n, b.cols());
    std::vector<S> col(n);
    for (std::size_t j = 0; j < b.cols(); ++j) {
      for (std::size_t i = 0; i < n; ++i) col[i] = b(i, j);
      solve_in_place(col);
      for (std::size_t i = 0; i < n; ++i) x(i, j) = col[i];
    }
    return x;
  }

  S determinant() const {
    const std::size_t n = lu_.rows();
    S d(1);
    for (std::size_t k = 0; k < n; ++k) {
      d *= lu_(k, k);
      if (perm_[k] != k) d = -d;
    }
    return d;
  }

 private:
  Matrix<S> lu_;
  std::vector<std::size_t> perm_;
  bool singular_ = false;
  real_t<S> max_pivot_{0};
  real_t<S> min_pivot_{0};
};

template <class S>
S determinant(const Matrix<S>& a) {
  LU<S> lu(a);
  return lu.determinant();
}

/// Singular values in decreasing order (Eigen JacobiSVD).
std::vector<double> singular_values(const CMatrix& a);

/// Numerical rank: number of singular values above rel_tol * sigma_max.
std::size_t numerical_rank(const CMatrix& a, double rel_tol = 1e-10);

/// 2-norm condition number; infinity for rank-deficient input.
double condition_number(const CMatrix& a);

/// Unitary matrix from the QR factorization of a complex Gaussian matrix.
CMatrix random_unitary(std::size_t n, std::mt19937_64& rng);

/// All complex roots of sum_k coeffs[k] t^k (companion-matrix eigenvalues,
/// Newton-polished). Leading coefficient must be nonzero.
CVector polynomial_roots(std::span<const cdouble> coeffs);

}  // namespace orbitdeg
