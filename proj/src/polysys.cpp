#include "orbitdeg/polysys.hpp"

#include <map>
#include <mutex>
#include <tuple>

namespace orbitdeg {

std::uint64_t binomial(std::uint64_t n, std::uint64_t k) {
  if (k > n) return 0;
  if (k > n - k) k = n - k;
  std::uint64_t r = 1;
  for (std::uint64_t i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

std::size_t monomial_count(int n, int d) {
  if (n < 1 || d < 0) throw DimensionError("monomial_count: need n >= 1, d >= 0");
  return static_cast<std::size_t>(binomial(static_cast<std::uint64_t>(n + d - 1),
                                           static_cast<std::uint64_t>(d)));
}

namespace {

void basis_rec(int n, int d, ExponentVector& cur, std::size_t pos,
               std::vector<ExponentVector>& out) {
  if (pos + 1 == static_cast<std::size_t>(n)) {
    cur[pos] = d;
    out.push_back(cur);
    return;
  }
  for (int e = d; e >= 0; --e) {
    cur[pos] = e;
    basis_rec(n, d - e, cur, pos + 1, out);
  }
}

double factorial(int k) {
  double r = 1.0;
  for (int i = 2; i <= k; ++i) r *= i;
  return r;
}

double multinomial(std::span<const int> a) {
  int d = 0;
  double denom = 1.0;
  for (int e : a) {
    d += e;
    denom *= factorial(e);
  }
  return factorial(d) / denom;
}

}  // namespace

std::vector<ExponentVector> monomial_basis(int n, int d) {
  if (n < 1 || d < 0) throw DimensionError("monomial_basis: need n >= 1, d >= 0");
  std::vector<ExponentVector> out;
  out.reserve(monomial_count(n, d));
  ExponentVector cur(static_cast<std::size_t>(n), 0);
  basis_rec(n, d, cur, 0, out);
  return out;
}

std::size_t monomial_index(std::span<const int> exponents) {
  const std::size_t n = exponents.size();
  int r = 0;
  for (int e : exponents) r += e;
  std::size_t rank = 0;
  for (std::size_t j = 0; j + 1 < n; ++j) {
    const std::uint64_t rest = n - j - 1;  // variables after position j
    for (int e = exponents[j] + 1; e <= r; ++e)
      rank += binomial(static_cast<std::uint64_t>(r - e) + rest - 1, rest - 1);
    r -= exponents[j];
  }
  return rank;
}

// --- HomogeneousForm --------------------------------------------------------

HomogeneousForm::HomogeneousForm(int num_vars, int degree)
    : num_vars_(num_vars), degree_(degree), coeffs_(monomial_count(num_vars, degree)) {}

HomogeneousForm::HomogeneousForm(int num_vars, int degree, CVector coeffs)
    : num_vars_(num_vars), degree_(degree), coeffs_(std::move(coeffs)) {
  if (coeffs_.size() != monomial_count(num_vars, degree))
    throw DimensionError("HomogeneousForm: coefficient count must be C(n+d-1, d)");
}

cdouble& HomogeneousForm::coeff(std::span<const int> exponents) {
  if (exponents.size() != static_cast<std::size_t>(num_vars_))
    throw DimensionError("HomogeneousForm::coeff: exponent length mismatch");
  int s = 0;
  for (int e : exponents) s += e;
  if (s != degree_) throw DimensionError("HomogeneousForm::coeff: exponent degree mismatch");
  return coeffs_[monomial_index(exponents)];
}

bool HomogeneousForm::is_zero() const {
  for (const auto& c : coeffs_)
    if (c != cdouble(0)) return false;
  return true;
}

HomogeneousForm& HomogeneousForm::operator+=(const HomogeneousForm& o) {
  if (o.num_vars_ != num_vars_ || o.degree_ != degree_)
    throw DimensionError("HomogeneousForm addition: shape mismatch");
  for (std::size_t i = 0; i < coeffs_.size(); ++i) coeffs_[i] += o.coeffs_[i];
  return *this;
}

HomogeneousForm HomogeneousForm::operator*(cdouble c) const {
  HomogeneousForm r = *this;
  for (auto& v : r.coeffs_) v *= c;
  return r;
}

double weyl_norm(const HomogeneousForm& f) {
  const auto basis = monomial_basis(f.num_vars(), f.degree());
  double s = 0.0;
  for (std::size_t k = 0; k < basis.size(); ++k) s += std::norm(f[k]) / multinomial(basis[k]);
  return std::sqrt(s);
}

// --- composition ------------------------------------------------------------

CompositionPlan::CompositionPlan(int n, int m, int d) : n_(n), m_(m), d_(d) {
  const auto src_basis = monomial_basis(n, d);
  // Per-row expansions of (A_j . x)^e for e <= d: exponent vectors over m
  // variables with their multinomial weights.
  std::vector<std::vector<ExponentVector>> row_basis(static_cast<std::size_t>(d) + 1);
  for (int e = 0; e <= d; ++e) row_basis[static_cast<std::size_t>(e)] = monomial_basis(m, e);

  ExponentVector target(static_cast<std::size_t>(m), 0);
  std::vector<std::uint32_t> fac;
  for (std::size_t s = 0; s < src_basis.size(); ++s) {
    const auto& a = src_basis[s];
    // depth-first over rows j, choosing beta_j in row_basis[a_j]
    auto rec = [&](auto&& self, int j, double weight) -> void {
      if (j == n) {
        terms_.push_back({static_cast<std::uint32_t>(s),
                          static_cast<std::uint32_t>(monomial_index(target)), weight,
                          static_cast<std::uint32_t>(factors_.size())});
        factors_.insert(factors_.end(), fac.begin(), fac.end());
        return;
      }
      const int e = a[static_cast<std::size_t>(j)];
      if (e == 0) {
        self(self, j + 1, weight);
        return;
      }
      for (const auto& beta : row_basis[static_cast<std::size_t>(e)]) {
        const std::size_t mark = fac.size();
        for (int l = 0; l < m; ++l) {
          target[static_cast<std::size_t>(l)] += beta[static_cast<std::size_t>(l)];
          for (int r = 0; r < beta[static_cast<std::size_t>(l)]; ++r)
            fac.push_back(static_cast<std::uint32_t>(j * m + l));
        }
        self(self, j + 1, weight * multinomial(beta));
        for (int l = 0; l < m; ++l) target[static_cast<std::size_t>(l)] -= beta[static_cast<std::size_t>(l)];
        fac.resize(mark);
      }
    };
    rec(rec, 0, 1.0);
  }
}

std::shared_ptr<const CompositionPlan> CompositionPlan::get(int n, int m, int d) {
  static std::mutex mutex;
  static std::map<std::tuple<int, int, int>, std::shared_ptr<const CompositionPlan>> cache;
  std::lock_guard<std::mutex> lock(mutex);
  auto& slot = cache[{n, m, d}];
  if (!slot) slot = std::make_shared<const CompositionPlan>(n, m, d);
  return slot;
}

HomogeneousForm compose_linear(const HomogeneousForm& f, const CMatrix& a) {
  return HomogeneousForm(static_cast<int>(a.cols()), f.degree(), compose_coefficients(f, a));
}

// --- PolySystem -------------------------------------------------------------

PolySystem::PolySystem(int num_vars, std::vector<HomogeneousForm> polys,
                       std::optional<AffinePatch> patch)
    : num_vars_(num_vars), polys_(std::move(polys)) {
  for (const auto& p : polys_)
    if (p.num_vars() != num_vars_) throw DimensionError("PolySystem: forms must share num_vars");
  if (patch) set_patch(std::move(*patch));
}

void PolySystem::set_patch(AffinePatch patch) {
  if (patch.coeffs.size() != static_cast<std::size_t>(num_vars_))
    throw DimensionError("PolySystem: patch length must equal num_vars");
  patch_ = std::move(patch);
}

std::vector<int> PolySystem::degrees() const {
  std::vector<int> d;
  for (const auto& p : polys_) d.push_back(p.degree());
  if (patch_) d.push_back(1);
  return d;
}

CVector PolySystem::evaluate_direct(std::span<const cdouble> x) const {
  if (x.size() != static_cast<std::size_t>(num_vars_))
    throw DimensionError("PolySystem::evaluate_direct: dimension mismatch");
  CVector out;
  for (const auto& p : polys_) out.push_back(p(x));
  if (patch_) {
    cdouble s = -patch_->rhs;
    for (std::size_t k = 0; k < x.size(); ++k) s += patch_->coeffs[k] * x[k];
    out.push_back(s);
  }
  return out;
}

// --- compiled evaluation ----------------------------------------------------

CompiledForm::CompiledForm(const HomogeneousForm& f)
    : num_vars_(f.num_vars()), degree_(f.degree()) {
  const auto basis = monomial_basis(f.num_vars(), f.degree());
  for (std::size_t k = 0; k < basis.size(); ++k) {
    if (f[k] == cdouble(0)) continue;
    Term t{f[k], static_cast<std::uint32_t>(factors_.size()), 0};
    for (int v = 0; v < num_vars_; ++v)
      if (basis[k][static_cast<std::size_t>(v)] > 0) {
        factors_.push_back({static_cast<std::uint16_t>(v),
                            static_cast<std::uint16_t>(basis[k][static_cast<std::size_t>(v)])});
        ++t.count;
      }
    terms_.push_back(t);
  }
}

CompiledSystem::CompiledSystem(PolySystem system) : system_(std::move(system)) {
  for (const auto& p : system_.polys()) forms_.emplace_back(p);
}

template <class S>
void CompiledSystem::evaluate_impl(std::span<const S> x, std::span<S> values,
                                   Matrix<S>* jacobian) const {
  const std::size_t nv = num_vars();
  if (x.size() != nv || values.size() != num_equations())
    throw DimensionError("CompiledSystem::evaluate: dimension mismatch");
  if (jacobian && (jacobian->rows() != num_equations() || jacobian->cols() != nv))
    jacobian->resize(num_equations(), nv);
  std::vector<S> scratch;
  for (std::size_t i = 0; i < forms_.size(); ++i) {
    std::span<S> grad = jacobian ? jacobian->row(i) : std::span<S>();
    values[i] = forms_[i].evaluate<S>(x, grad, scratch);
  }
  if (const auto& patch = system_.patch()) {
    const std::size_t r = forms_.size();
    S s = -convert<S>(patch->rhs);
    for (std::size_t k = 0; k < nv; ++k) {
      const S c = convert<S>(patch->coeffs[k]);
      s += c * x[k];
      if (jacobian) (*jacobian)(r, k) = c;
    }
    values[r] = s;
  }
}

void CompiledSystem::evaluate(std::span<const cdouble> x, std::span<cdouble> values,
                              CMatrix* jacobian) const {
  evaluate_impl<cdouble>(x, values, jacobian);
}

void CompiledSystem::evaluate(std::span<const mpcomplex> x, std::span<mpcomplex> values,
                              MPMatrix* jacobian) const {
  evaluate_impl<mpcomplex>(x, values, jacobian);
}

double CompiledSystem::weyl_norm() const {
  double s = 0.0;
  for (const auto& p : system_.polys()) {
    const double w = orbitdeg::weyl_norm(p);
    s += w * w;
  }
  if (const auto& patch = system_.patch()) {
    for (const auto& c : patch->coeffs) s += std::norm(c);
    s += std::norm(patch->rhs);
  }
  return std::sqrt(s);
}

// --- serialization ----------------------------------------------------------

nlohmann::json complex_to_json(cdouble z) { return nlohmann::json::array({z.real(), z.imag()}); }

cdouble complex_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 2) throw std::invalid_argument("complex must be [re, im]");
  auto part = [](const nlohmann::json& v) -> double {
    if (v.is_string()) return std::stod(v.get<std::string>());
    return v.get<double>();
  };
  return {part(j[0]), part(j[1])};
}

nlohmann::json complex_to_json(const mpcomplex& z) {
  return nlohmann::json::array({z.real().str(0, std::ios_base::scientific),
                                z.imag().str(0, std::ios_base::scientific)});
}

mpcomplex mp_complex_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 2) throw std::invalid_argument("complex must be [re, im]");
  auto part = [](const nlohmann::json& v) -> mpreal {
    if (v.is_string()) return mpreal(v.get<std::string>());
    return mpreal(v.get<double>());
  };
  return {part(j[0]), part(j[1])};
}

nlohmann::json form_to_json(const HomogeneousForm& f) {
  nlohmann::json coeffs = nlohmann::json::array();
  for (const auto& c : f.coeffs()) coeffs.push_back(complex_to_json(c));
  return {{"n", f.num_vars()}, {"d", f.degree()}, {"coeffs", coeffs}};
}

HomogeneousForm form_from_json(const nlohmann::json& j) {
  const int n = j.at("n").get<int>();
  const int d = j.at("d").get<int>();
  if (n < 1 || d < 0) throw std::invalid_argument("form: need n >= 1 and d >= 0");
  CVector coeffs;
  for (const auto& c : j.at("coeffs")) coeffs.push_back(complex_from_json(c));
  if (coeffs.size() != monomial_count(n, d))
    throw std::invalid_argument("form: coefficient count must be C(n+d-1, d)");
  return HomogeneousForm(n, d, std::move(coeffs));
}

}  // namespace orbitdeg
