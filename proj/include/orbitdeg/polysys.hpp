#pragma once

#include "orbitdeg/types.hpp"

#include <json.hpp>

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

namespace orbitdeg {

using ExponentVector = std::vector<int>;

std::uint64_t binomial(std::uint64_t n, std::uint64_t k);

/// Number of degree-d monomials in n variables, C(n+d-1, d).
std::size_t monomial_count(int n, int d);

/// All degree-d exponent vectors in n variables in graded-lex order
/// (lexicographically decreasing: x^2, xy, y^2 for n = d = 2). Every module
/// and file format uses this order.
std::vector<ExponentVector> monomial_basis(int n, int d);

/// Position of `exponents` in monomial_basis(n, sum(exponents)).
std::size_t monomial_index(std::span<const int> exponents);

/// Degree-d homogeneous polynomial in n variables with dense coefficients in
/// monomial_basis order.
class HomogeneousForm {
 public:
  HomogeneousForm() = default;
  HomogeneousForm(int num_vars, int degree);
  HomogeneousForm(int num_vars, int degree, CVector coeffs);

  int num_vars() const { return num_vars_; }
  int degree() const { return degree_; }
  std::size_t size() const { return coeffs_.size(); }
  const CVector& coeffs() const { return coeffs_; }
  cdouble& operator[](std::size_t i) { return coeffs_[i]; }
  const cdouble& operator[](std::size_t i) const { return coeffs_[i]; }
  cdouble& coeff(std::span<const int> exponents);

  bool is_zero() const;

  /// Direct monomial-by-monomial evaluation (reference path, not fast).
  template <class S>
  S operator()(std::span<const S> x) const;

  HomogeneousForm& operator+=(const HomogeneousForm& o);
  HomogeneousForm operator*(cdouble c) const;

 private:
  int num_vars_ = 0;
  int degree_ = 0;
  CVector coeffs_;
};

/// Bombieri-Weyl norm: sqrt(sum |c_a|^2 / multinomial(d; a)).
double weyl_norm(const HomogeneousForm& f);

/// Expansion of f(A x) for an n x m matrix A via the multinomial theorem:
/// each monomial prod_j (A_j . x)^{a_j} is expanded with exact integer
/// multinomial weights. Built once per (n, m, d) and shared.
class CompositionPlan {
 public:
  struct Term {
    std::uint32_t source;  // monomial of f (n vars)
    std::uint32_t target;  // monomial of the result (m vars)
    double weight;         // product of multinomial coefficients
    std::uint32_t first;   // offset into factors
  };

  CompositionPlan(int n, int m, int d);

  /// Shared plan instance (thread-safe cache).
  static std::shared_ptr<const CompositionPlan> get(int n, int m, int d);

  int rows() const { return n_; }
  int cols() const { return m_; }
  int degree() const { return d_; }
  const std::vector<Term>& terms() const { return terms_; }
  /// Each term owns `degree()` consecutive flattened (row * m + col) entries.
  const std::vector<std::uint32_t>& factors() const { return factors_; }

 private:
  int n_, m_, d_;
  std::vector<Term> terms_;
  std::vector<std::uint32_t> factors_;
};

/// Coefficients of x -> f(A x) for an n x m matrix A, at the precision of A.
template <class S>
std::vector<S> compose_coefficients(const HomogeneousForm& f, const Matrix<S>& a);

/// g(x) = f(A x). A must have f.num_vars() rows; the result has A.cols()
/// variables.
HomogeneousForm compose_linear(const HomogeneousForm& f, const CMatrix& a);

/// Inhomogeneous linear equation coeffs . x = rhs, used as an affine patch.
struct AffinePatch {
  CVector coeffs;
  cdouble rhs{1.0, 0.0};
};

/// Homogeneous forms sharing num_vars, optionally squared up by a patch row.
class PolySystem {
 public:
  PolySystem() = default;
  PolySystem(int num_vars, std::vector<HomogeneousForm> polys,
             std::optional<AffinePatch> patch = std::nullopt);

  int num_vars() const { return num_vars_; }
  const std::vector<HomogeneousForm>& polys() const { return polys_; }
  const std::optional<AffinePatch>& patch() const { return patch_; }
  std::size_t num_equations() const { return polys_.size() + (patch_ ? 1 : 0); }
  bool is_square() const { return num_equations() == static_cast<std::size_t>(num_vars_); }
  void set_patch(AffinePatch patch);

  /// Degrees of every equation, patch counted as 1.
  std::vector<int> degrees() const;

  /// Reference evaluation straight from the coefficient lists.
  CVector evaluate_direct(std::span<const cdouble> x) const;

 private:
  int num_vars_ = 0;
  std::vector<HomogeneousForm> polys_;
  std::optional<AffinePatch> patch_;
};

/// Abstract evaluator F: C^num_vars -> C^num_equations with Jacobian, at
/// binary64 or MPFR precision. Implementations are immutable and reentrant.
class SystemEvaluator {
 public:
  virtual ~SystemEvaluator() = default;
  virtual std::size_t num_equations() const = 0;
  virtual std::size_t num_vars() const = 0;
  virtual void evaluate(std::span<const cdouble> x, std::span<cdouble> values,
                        CMatrix* jacobian) const = 0;
  virtual void evaluate(std::span<const mpcomplex> x, std::span<mpcomplex> values,
                        MPMatrix* jacobian) const = 0;
  /// Equation degrees after homogenization.
  virtual std::vector<int> degrees() const = 0;
  /// Weyl norm of the system homogenized with one extra variable: the
  /// root-sum-square of the equations' Weyl norms.
  virtual double weyl_norm() const = 0;

  CVector evaluate(std::span<const cdouble> x) const {
    CVector v(num_equations());
    evaluate(x, v, nullptr);
    return v;
  }
  CMatrix jacobian(std::span<const cdouble> x) const {
    CVector v(num_equations());
    CMatrix j(num_equations(), num_vars());
    evaluate(x, v, &j);
    return j;
  }
};

/// Straight-line evaluation program for one dense form: value and gradient in
/// a single pass using per-variable power tables.
class CompiledForm {
 public:
  CompiledForm() = default;
  explicit CompiledForm(const HomogeneousForm& f);

  int num_vars() const { return num_vars_; }
  int degree() const { return degree_; }

  /// Value at x; fills grad (size num_vars) when non-empty. `scratch` is
  /// resized as needed and may be reused across calls.
  template <class S>
  S evaluate(std::span<const S> x, std::span<S> grad, std::vector<S>& scratch) const;

 private:
  struct Factor {
    std::uint16_t var;
    std::uint16_t exp;
  };
  struct Term {
    cdouble coeff;
    std::uint32_t first;
    std::uint32_t count;
  };
  int num_vars_ = 0;
  int degree_ = 0;
  std::vector<Term> terms_;
  std::vector<Factor> factors_;
};

/// Joint value + Jacobian program for a PolySystem, generated once.
class CompiledSystem final : public SystemEvaluator {
 public:
  explicit CompiledSystem(PolySystem system);

  const PolySystem& source() const { return system_; }

  std::size_t num_equations() const override { return system_.num_equations(); }
  std::size_t num_vars() const override { return static_cast<std::size_t>(system_.num_vars()); }
  void evaluate(std::span<const cdouble> x, std::span<cdouble> values,
                CMatrix* jacobian) const override;
  void evaluate(std::span<const mpcomplex> x, std::span<mpcomplex> values,
                MPMatrix* jacobian) const override;
  std::vector<int> degrees() const override { return system_.degrees(); }
  double weyl_norm() const override;
  using SystemEvaluator::evaluate;

 private:
  template <class S>
  void evaluate_impl(std::span<const S> x, std::span<S> values, Matrix<S>* jacobian) const;

  PolySystem system_;
  std::vector<CompiledForm> forms_;
};

// Canonical serialization {"n", "d", "coeffs": [[re, im], ...]}.
nlohmann::json form_to_json(const HomogeneousForm& f);
HomogeneousForm form_from_json(const nlohmann::json& j);

nlohmann::json complex_to_json(cdouble z);
cdouble complex_from_json(const nlohmann::json& j);
/// High-precision complex as a pair of decimal strings.
nlohmann::json complex_to_json(const mpcomplex& z);
mpcomplex mp_complex_from_json(const nlohmann::json& j);

// ---------------------------------------------------------------------------

template <class S>
S HomogeneousForm::operator()(std::span<const S> x) const {
  if (x.size() != static_cast<std::size_t>(num_vars_))
    throw DimensionError("form evaluation: dimension mismatch");
  const auto basis = monomial_basis(num_vars_, degree_);
  S total(0);
  for (std::size_t k = 0; k < basis.size(); ++k) {
    if (coeffs_[k] == cdouble(0)) continue;
    S m = convert<S>(coeffs_[k]);
    for (int v = 0; v < num_vars_; ++v)
      for (int e = 0; e < basis[k][v]; ++e) m *= x[v];
    total += m;
  }
  return total;
}

template <class S>
S CompiledForm::evaluate(std::span<const S> x, std::span<S> grad,
                         std::vector<S>& scratch) const {
  const std::size_t stride = static_cast<std::size_t>(degree_) + 1;
  const std::size_t nv = static_cast<std::size_t>(num_vars_);
  // power table: scratch[v * stride + e] = x_v^e, then prefix/suffix buffers
  const std::size_t need = nv * stride + 2 * (stride + 1);
  if (scratch.size() < need) scratch.resize(need);
  for (std::size_t v = 0; v < nv; ++v) {
    S* p = scratch.data() + v * stride;
    p[0] = S(1);
    for (std::size_t e = 1; e < stride; ++e) p[e] = p[e - 1] * x[v];
  }
  const bool want_grad = !grad.empty();
  if (want_grad)
    for (auto& g : grad) g = S(0);
  S* prefix = scratch.data() + nv * stride;
  S* suffix = prefix + stride + 1;
  S value(0);
  for (const Term& t : terms_) {
    const S c = convert<S>(t.coeff);
    const Factor* fs = factors_.data() + t.first;
    if (t.count == 0) {
      value += c;
      continue;
    }
    prefix[0] = S(1);
    for (std::uint32_t i = 0; i < t.count; ++i)
      prefix[i + 1] = prefix[i] * scratch[fs[i].var * stride + fs[i].exp];
    value += c * prefix[t.count];
    if (!want_grad) continue;
    suffix[t.count] = S(1);
    for (std::uint32_t i = t.count; i-- > 0;)
      suffix[i] = suffix[i + 1] * scratch[fs[i].var * stride + fs[i].exp];
    for (std::uint32_t i = 0; i < t.count; ++i) {
      const S dpow = scratch[fs[i].var * stride + fs[i].exp - 1] * real_t<S>(fs[i].exp);
      grad[fs[i].var] += c * prefix[i] * dpow * suffix[i + 1];
    }
  }
  return value;
}

template <class S>
std::vector<S> compose_coefficients(const HomogeneousForm& f, const Matrix<S>& a) {
  if (a.rows() != static_cast<std::size_t>(f.num_vars()))
    throw DimensionError("compose_linear: matrix rows must equal the number of variables");
  const auto plan =
      CompositionPlan::get(f.num_vars(), static_cast<int>(a.cols()), f.degree());
  std::vector<S> out(monomial_count(static_cast<int>(a.cols()), f.degree()), S(0));
  const auto& factors = plan->factors();
  const auto& data = a.data();
  const std::size_t d = static_cast<std::size_t>(f.degree());
  for (const auto& t : plan->terms()) {
    const cdouble c = f[t.source];
    if (c == cdouble(0)) continue;
    S prod = convert<S>(c) * real_t<S>(t.weight);
    for (std::size_t k = 0; k < d; ++k) prod *= data[factors[t.first + k]];
    out[t.target] += prod;
  }
  return out;
}

}  // namespace orbitdeg
