#pragma once

#include <boost/multiprecision/mpfr.hpp>

#include <cmath>
#include <complex>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace orbitdeg {

using cdouble = std::complex<double>;
using CVector = std::vector<cdouble>;

// Variable-precision MPFR real. Precision of freshly created values follows the
// process-wide default, set through PrecisionScope.
using mpreal = boost::multiprecision::number<boost::multiprecision::mpfr_float_backend<0>,
                                             boost::multiprecision::et_off>;
using mpcomplex = std::complex<mpreal>;
using MPVector = std::vector<mpcomplex>;

/// Error raised on shape or dimension mismatches between operands.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Numerical failure (singular matrix, non-convergence, ...).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <class S>
struct real_type;
template <>
struct real_type<cdouble> {
  using type = double;
};
template <>
struct real_type<mpcomplex> {
  using type = mpreal;
};
template <class S>
using real_t = typename real_type<S>::type;

/// Dense row-major matrix over a complex scalar type.
template <class S>
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<S> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) throw DimensionError("matrix data size mismatch");
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = S(1);
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  S& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  const S& operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }
  std::span<S> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
  std::span<const S> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }
  std::vector<S>& data() { return data_; }
  const std::vector<S>& data() const { return data_; }

  void resize(std::size_t rows, std::size_t cols) {
    rows_ = rows;
    cols_ = cols;
    data_.assign(rows * cols, S(0));
  }

  Matrix operator*(const Matrix& o) const {
    if (cols_ != o.rows_) throw DimensionError("matrix product shape mismatch");
    Matrix r(rows_, o.cols_);
    for (std::size_t i = 0; i < rows_; ++i)
      for (std::size_t k = 0; k < cols_; ++k) {
        const S a = (*this)(i, k);
        for (std::size_t j = 0; j < o.cols_; ++j) r(i, j) += a * o(k, j);
      }
    return r;
  }

  Matrix operator*(const S& c) const {
    Matrix r = *this;
    for (auto& v : r.data_) v *= c;
    return r;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<S> data_;
};

using CMatrix = Matrix<cdouble>;
using MPMatrix = Matrix<mpcomplex>;

inline double abs2(const cdouble& z) { return std::norm(z); }
inline mpreal abs2(const mpcomplex& z) { return z.real() * z.real() + z.imag() * z.imag(); }

template <class S>
real_t<S> norm2(std::span<const S> v) {
  using std::sqrt;
  real_t<S> s(0);
  for (const auto& z : v) s += abs2(z);
  return sqrt(s);
}
inline double norm2(const CVector& v) { return norm2(std::span<const cdouble>(v)); }
inline mpreal norm2(const MPVector& v) { return norm2(std::span<const mpcomplex>(v)); }

template <class S>
real_t<S> max_abs(std::span<const S> v) {
  using std::sqrt;
  real_t<S> m(0);
  for (const auto& z : v) {
    real_t<S> a = sqrt(abs2(z));
    if (a > m) m = a;
  }
  return m;
}

inline mpcomplex to_mp(const cdouble& z) { return {mpreal(z.real()), mpreal(z.imag())}; }
inline cdouble to_double(const mpcomplex& z) {
  return {z.real().convert_to<double>(), z.imag().convert_to<double>()};
}
inline cdouble to_double(const cdouble& z) { return z; }

inline MPVector to_mp(std::span<const cdouble> v) {
  MPVector r;
  r.reserve(v.size());
  for (const auto& z : v) r.push_back(to_mp(z));
  return r;
}
inline CVector to_double(std::span<const mpcomplex> v) {
  CVector r;
  r.reserve(v.size());
  for (const auto& z : v) r.push_back(to_double(z));
  return r;
}

/// Converts a complex scalar between precisions.
template <class S>
S convert(const cdouble& z);
template <>
inline cdouble convert<cdouble>(const cdouble& z) {
  return z;
}
template <>
inline mpcomplex convert<mpcomplex>(const cdouble& z) {
  return to_mp(z);
}

/// Mantissa bits needed to carry `digits` decimal digits with the margin used
/// throughout (3.4 bits per digit, never below binary64).
inline unsigned bits_for_digits(int digits) {
  const auto bits = static_cast<unsigned>(std::ceil(3.4 * digits)) + 8;
  return bits < 53 ? 53 : bits;
}

/// Sets the default MPFR precision (in bits) for the lifetime of the scope.
/// The default is process-wide; set it before fanning out to workers.
class PrecisionScope {
 public:
  explicit PrecisionScope(unsigned bits) : saved_(mpreal::default_precision()) {
    mpreal::default_precision(digits10_for_bits(bits));
  }
  ~PrecisionScope() { mpreal::default_precision(saved_); }
  PrecisionScope(const PrecisionScope&) = delete;
  PrecisionScope& operator=(const PrecisionScope&) = delete;

  static unsigned digits10_for_bits(unsigned bits) {
    return static_cast<unsigned>(std::ceil(bits * 0.30102999566398120)) + 1;
  }

 private:
  unsigned saved_;
};

/// Copy of z carried at the current default precision (assignment alone keeps
/// the source's precision).
inline mpcomplex at_current_precision(const mpcomplex& z) {
  const unsigned d10 = mpreal::default_precision();
  return {mpreal(z.real(), d10), mpreal(z.imag(), d10)};
}

inline unsigned current_precision_bits() {
  return static_cast<unsigned>(
      boost::multiprecision::detail::digits10_2_2(mpreal::default_precision()));
}

}  // namespace orbitdeg
