#pragma once

// Test-side oracle: one-variable polynomial system with exact gamma.

#include "orbitdeg/alpha.hpp"
#include "orbitdeg/polysys.hpp"

#include <cmath>

namespace support {

using namespace orbitdeg;

// p(x) = sum a_k x^k as a one-variable affine system.
class Univariate final : public SystemEvaluator {
 public:
  explicit Univariate(CVector a) : a_(std::move(a)) {}
  std::size_t num_equations() const override { return 1; }
  std::size_t num_vars() const override { return 1; }
  void evaluate(std::span<const cdouble> x, std::span<cdouble> v, CMatrix* j) const override {
    impl<cdouble>(x, v, j);
  }
  void evaluate(std::span<const mpcomplex> x, std::span<mpcomplex> v, MPMatrix* j) const override {
    impl<mpcomplex>(x, v, j);
  }
  std::vector<int> degrees() const override { return {degree()}; }
  double weyl_norm() const override {
    double s = 0.0;
    for (std::size_t k = 0; k < a_.size(); ++k)
      s += std::norm(a_[k]) / static_cast<double>(binomial(a_.size() - 1, k));
    return std::sqrt(s);
  }
  using SystemEvaluator::evaluate;

  int degree() const { return static_cast<int>(a_.size()) - 1; }

  // Exact gamma = max_{k >= 2} |p^(k)(x) / (k! p'(x))|^{1/(k-1)}.
  double exact_gamma(cdouble x) const {
    const int d = degree();
    std::vector<cdouble> taylor(static_cast<std::size_t>(d) + 1);  // p^(k)(x)/k!
    for (int k = 0; k <= d; ++k) {
      cdouble s = 0.0;
      for (int m = k; m <= d; ++m)
        s += a_[static_cast<std::size_t>(m)] * static_cast<double>(binomial(m, k)) *
             std::pow(x, m - k);
      taylor[static_cast<std::size_t>(k)] = s;
    }
    double g = 0.0;
    for (int k = 2; k <= d; ++k)
      g = std::max(g, std::pow(std::abs(taylor[static_cast<std::size_t>(k)] / taylor[1]),
                               1.0 / (k - 1)));
    return g;
  }

 private:
  template <class S>
  void impl(std::span<const S> x, std::span<S> v, Matrix<S>* j) const {
    S p(0), dp(0);
    for (std::size_t k = a_.size(); k-- > 0;) {
      dp = dp * x[0] + p;
      p = p * x[0] + convert<S>(a_[k]);
    }
    v[0] = p;
    if (j) {
      j->resize(1, 1);
      (*j)(0, 0) = dp;
    }
  }
  CVector a_;
};

inline SquareInstance univariate(CVector a) {
  return SquareInstance(std::make_shared<Univariate>(std::move(a)));
}

}  // namespace support
