#include "orbitdeg/orbit.hpp"

#include "orbitdeg/linalg.hpp"
#include "orbitdeg/rng.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace orbitdeg {

// --- problems ---------------------------------------------------------------

Hypersurface sample_hypersurface(int n, int d, std::uint64_t seed) {
  if (n < 2 || d < 1) throw std::invalid_argument("sample_hypersurface: need n >= 2, d >= 1");
  Rng rng(seed);
  Hypersurface h;
  h.form = HomogeneousForm(n, d, rng.complex_normal_vector(monomial_count(n, d)));
  h.provenance = "sampled";
  h.seed = seed;
  return h;
}

Hypersurface cayley_cubic() {
  HomogeneousForm f(4, 3);
  for (const auto& e : std::vector<ExponentVector>{{0, 1, 1, 1}, {1, 0, 1, 1}, {1, 1, 0, 1},
                                                   {1, 1, 1, 0}})
    f[monomial_index(e)] = 1.0;
  Hypersurface h;
  h.form = std::move(f);
  h.provenance = "cayley";
  h.stabilizer_order = 24;
  return h;
}

Hypersurface hypersurface_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("form"))
    throw std::invalid_argument("problem: expected an object with a \"form\" field");
  const auto& form = j.at("form");
  Hypersurface h;
  if (form.contains("seed")) {
    h = sample_hypersurface(j.at("n").get<int>(), j.at("d").get<int>(),
                            form.at("seed").get<std::uint64_t>());
  } else if (form.contains("named")) {
    if (form.at("named").get<std::string>() != "cayley")
      throw std::invalid_argument("problem: unknown named form");
    h = cayley_cubic();
  } else {
    h.form = form_from_json(form);
  }
  if (j.contains("n") && j.at("n").get<int>() != h.n())
    throw std::invalid_argument("problem: n does not match the form");
  if (j.contains("d") && j.at("d").get<int>() != h.d())
    throw std::invalid_argument("problem: d does not match the form");
  if (j.contains("stabilizer_order")) h.stabilizer_order = j.at("stabilizer_order").get<int>();
  if (h.stabilizer_order < 1) throw std::invalid_argument("problem: stabilizer_order must be >= 1");
  return h;
}

nlohmann::json hypersurface_to_json(const Hypersurface& h) {
  nlohmann::json form;
  if (h.seed) form = {{"seed", *h.seed}};
  else if (h.provenance == "cayley") form = {{"named", "cayley"}};
  else form = form_to_json(h.form);
  return {{"n", h.n()}, {"d", h.d()}, {"form", form}, {"stabilizer_order", h.stabilizer_order}};
}

CVector PointConfig::flatten() const {
  CVector q;
  q.reserve(points.size() * static_cast<std::size_t>(n));
  for (const auto& p : points) q.insert(q.end(), p.begin(), p.end());
  return q;
}

PointConfig PointConfig::unflatten(int n, std::span<const cdouble> q) {
  const auto nn = static_cast<std::size_t>(n);
  if (n < 1 || q.size() % nn != 0) throw DimensionError("point config: bad parameter length");
  PointConfig c;
  c.n = n;
  for (std::size_t i = 0; i < q.size(); i += nn) c.points.emplace_back(q.begin() + i, q.begin() + i + nn);
  return c;
}

nlohmann::json config_to_json(const PointConfig& c) {
  nlohmann::json pts = nlohmann::json::array();
  for (const auto& p : c.points) {
    nlohmann::json row = nlohmann::json::array();
    for (const auto& z : p) row.push_back(complex_to_json(z));
    pts.push_back(row);
  }
  return {{"n", c.n}, {"points", pts}};
}

PointConfig config_from_json(const nlohmann::json& j) {
  PointConfig c;
  c.n = j.at("n").get<int>();
  for (const auto& row : j.at("points")) {
    CVector p;
    for (const auto& z : row) p.push_back(complex_from_json(z));
    if (p.size() != static_cast<std::size_t>(c.n)) throw DimensionError("point config: bad point");
    c.points.push_back(std::move(p));
  }
  return c;
}

PointConfig random_config(int n, std::size_t count, Rng& rng) {
  PointConfig c;
  c.n = n;
  for (std::size_t i = 0; i < count; ++i)
    c.points.push_back(rng.complex_normal_vector(static_cast<std::size_t>(n)));
  return c;
}

// --- matrices ---------------------------------------------------------------

CMatrix as_matrix(std::span<const cdouble> phi, int n) {
  const auto nn = static_cast<std::size_t>(n);
  if (phi.size() != nn * nn) throw DimensionError("as_matrix: expected n^2 entries");
  return CMatrix(nn, nn, CVector(phi.begin(), phi.end()));
}

CVector normalize_max_abs(std::span<const cdouble> v) {
  CVector out(v.begin(), v.end());
  std::size_t best = 0;
  for (std::size_t i = 1; i < out.size(); ++i)
    if (std::abs(out[i]) > std::abs(out[best])) best = i;
  if (out.empty() || out[best] == 0.0) return out;
  const cdouble s = out[best];
  for (auto& z : out) z /= s;
  return out;
}

double normalized_abs_det(std::span<const cdouble> phi, int n) {
  const CVector v = normalize_max_abs(phi);
  return std::abs(determinant(as_matrix(v, n)));
}

HomogeneousForm theta(const Hypersurface& f, std::span<const cdouble> phi) {
  HomogeneousForm g = compose_linear(f.form, as_matrix(phi, f.n()));
  if (g.is_zero()) throw NumericalError("theta: degenerate image (phi . f vanishes)");
  return g;
}

std::vector<HomogeneousForm> theta_forms(const HomogeneousForm& f) {
  const int n = f.num_vars(), d = f.degree();
  const auto plan = CompositionPlan::get(n, n, d);
  std::vector<HomogeneousForm> out(monomial_count(n, d), HomogeneousForm(n * n, d));
  ExponentVector e(static_cast<std::size_t>(n * n), 0);
  for (const auto& t : plan->terms()) {
    const cdouble c = f[t.source];
    if (c == 0.0) continue;
    std::fill(e.begin(), e.end(), 0);
    for (int k = 0; k < d; ++k) ++e[plan->factors()[t.first + static_cast<std::size_t>(k)]];
    out[t.target][monomial_index(e)] += t.weight * c;
  }
  return out;
}

HomogeneousForm point_equation(const HomogeneousForm& f, std::span<const cdouble> q) {
  const auto n = static_cast<std::size_t>(f.num_vars());
  if (q.size() != n) throw DimensionError("point_equation: point has wrong dimension");
  CMatrix b(n, n * n);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t l = 0; l < n; ++l) b(j, j * n + l) = q[l];
  return compose_linear(f, b);
}

PolySystem build_point_system(const Hypersurface& f, const PointConfig& config,
                              std::optional<AffinePatch> patch) {
  if (config.n != f.n()) throw DimensionError("point system: config and form disagree on n");
  std::vector<HomogeneousForm> eqs;
  for (const auto& p : config.points) {
    if (norm2(p) == 0.0) throw std::invalid_argument("point system: zero point");
    eqs.push_back(point_equation(f.form, p));
  }
  return PolySystem(f.n() * f.n(), std::move(eqs), std::move(patch));
}

AffinePatch random_patch(int n, Rng& rng) {
  return AffinePatch{rng.complex_normal_vector(static_cast<std::size_t>(n * n)), 1.0};
}

CVector veronese(std::span<const cdouble> q, int d) {
  const int n = static_cast<int>(q.size());
  const auto basis = monomial_basis(n, d);
  CVector v(basis.size());
  for (std::size_t m = 0; m < basis.size(); ++m) {
    cdouble p = 1.0;
    for (int j = 0; j < n; ++j)
      for (int e = 0; e < basis[m][static_cast<std::size_t>(j)]; ++e) p *= q[static_cast<std::size_t>(j)];
    v[m] = p;
  }
  return v;
}

LinearSlice veronese_slice(const PointConfig& config, int d) {
  const std::size_t m = monomial_count(config.n, d);
  LinearSlice s{CMatrix(config.size(), m)};
  for (std::size_t i = 0; i < config.size(); ++i) {
    const CVector v = veronese(config.points[i], d);
    for (std::size_t k = 0; k < m; ++k) s.matrix(i, k) = v[k];
  }
  if (numerical_rank(s.matrix) < config.size())
    throw NumericalError("veronese slice: points are not in general position");
  return s;
}

PolySystem build_slice_system(const Hypersurface& f, const LinearSlice& slice,
                              const AffinePatch& patch) {
  const auto forms = theta_forms(f.form);
  if (slice.matrix.cols() != forms.size())
    throw DimensionError("slice system: slice width does not match the coefficient space");
  if (numerical_rank(slice.matrix) < slice.matrix.rows())
    throw NumericalError("slice system: slice is rank deficient");
  std::vector<HomogeneousForm> eqs;
  for (std::size_t r = 0; r < slice.matrix.rows(); ++r) {
    HomogeneousForm row(f.n() * f.n(), f.d());
    for (std::size_t m = 0; m < forms.size(); ++m)
      if (slice.matrix(r, m) != 0.0) row += forms[m] * slice.matrix(r, m);
    eqs.push_back(std::move(row));
  }
  return PolySystem(f.n() * f.n(), std::move(eqs), patch);
}

namespace {

// ||u - e^{i theta} v|| for unit representatives at the optimal phase.
double projective_distance(std::span<const cdouble> a, std::span<const cdouble> b) {
  const double na = norm2(a), nb = norm2(b);
  cdouble inner = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) inner += std::conj(b[i]) * a[i];
  const double c = std::min(1.0, std::abs(inner) / (na * nb));
  return std::sqrt(std::max(0.0, 2.0 - 2.0 * c));
}

}  // namespace

StartPair start_pair(const Hypersurface& f, std::uint64_t seed) {
  const int n = f.n(), d = f.d();
  const std::size_t count = static_cast<std::size_t>(n * n - 1);
  Rng rng(seed);
  const auto basis = monomial_basis(n, d);
  std::string last_error;
  for (int attempt = 0; attempt < 5; ++attempt) {
    StartPair sp;
    sp.phi0 = normalize_max_abs(rng.complex_normal_vector(static_cast<std::size_t>(n * n)));
    const HomogeneousForm g = compose_linear(f.form, as_matrix(sp.phi0, n));
    sp.config.n = n;
    bool ok = true;
    for (std::size_t i = 0; i < count && ok; ++i) {
      CVector a = rng.complex_normal_vector(static_cast<std::size_t>(n - 1));
      // g(a, z) = sum_e c_e z^e
      CVector c(static_cast<std::size_t>(d) + 1);
      for (std::size_t m = 0; m < basis.size(); ++m) {
        cdouble p = g[m];
        for (int j = 0; j + 1 < n; ++j)
          for (int e = 0; e < basis[m][static_cast<std::size_t>(j)]; ++e) p *= a[static_cast<std::size_t>(j)];
        c[static_cast<std::size_t>(basis[m][static_cast<std::size_t>(n - 1)])] += p;
      }
      if (std::abs(c.back()) < 1e-8 * norm2(c)) {
        ok = false;
        last_error = "leading coefficient vanishes";
        break;
      }
      // roots in random order; the first one projectively distinct from the
      // points so far (binary forms have only d points to choose from)
      CVector roots = polynomial_roots(c);
      std::shuffle(roots.begin(), roots.end(), rng.engine());
      bool placed = false;
      for (const auto& z : roots) {
        CVector p = a;
        p.push_back(z);
        bool distinct = true;
        for (const auto& o : sp.config.points)
          if (projective_distance(p, o) < 1e-6) distinct = false;
        if (distinct) {
          // unit norm keeps the rows of the point system comparably scaled
          const double s = norm2(p);
          for (auto& v : p) v /= s;
          sp.config.points.push_back(std::move(p));
          placed = true;
          break;
        }
      }
      if (!placed) {
        ok = false;
        last_error = "coincident points";
      }
    }
    if (!ok) continue;
    const PolySystem ps = build_point_system(f, sp.config);
    sp.residual_norm = norm2(ps.evaluate_direct(sp.phi0));
    if (sp.residual_norm > 1e-10) {
      last_error = "residual " + std::to_string(sp.residual_norm);
      continue;
    }
    try {
      veronese_slice(sp.config, d);
    } catch (const NumericalError& e) {
      last_error = e.what();
      continue;
    }
    return sp;
  }
  throw NumericalError("start_pair: failed after 5 attempts (" + last_error + ")");
}

long long degree_report(long long count, int stabilizer_order) {
  if (count < 0 || stabilizer_order < 1)
    throw std::invalid_argument("degree_report: need count >= 0 and stabilizer_order >= 1");
  if (count % stabilizer_order != 0)
    throw std::domain_error("degree_report: " + std::to_string(count) +
                            " solutions are not divisible by the stabilizer order " +
                            std::to_string(stabilizer_order));
  return count / stabilizer_order;
}

// --- structured evaluation --------------------------------------------------

OrbitStructure::OrbitStructure(HomogeneousForm f, std::size_t num_points,
                               std::vector<std::vector<SparseWeight>> w,
                               std::vector<std::vector<SparseWeight>> dw)
    : form_(std::move(f)), compiled_(form_), num_points_(num_points), w_(std::move(w)),
      dw_(std::move(dw)) {
  if (dw_.empty()) dw_.resize(w_.size());
  if (dw_.size() != w_.size()) throw DimensionError("orbit structure: direction rows mismatch");
  for (const auto* rows : {&w_, &dw_})
    for (const auto& row : *rows)
      for (const auto& e : row)
        if (e.point >= num_points_) throw DimensionError("orbit structure: point index out of range");
}

std::shared_ptr<const OrbitStructure> OrbitStructure::identity(const HomogeneousForm& f,
                                                               std::size_t num_points) {
  std::vector<std::vector<SparseWeight>> w(num_points);
  for (std::size_t k = 0; k < num_points; ++k)
    w[k].push_back({static_cast<std::uint32_t>(k), 1.0});
  return std::make_shared<const OrbitStructure>(f, num_points, std::move(w));
}

template <class S>
void OrbitStructure::evaluate(std::span<const S> phi, std::span<const S> points, const S& t,
                              std::span<S> values, Matrix<S>* jac, const S* dpoints,
                              const S* dt, S* hs) const {
  const auto n = static_cast<std::size_t>(this->n());
  const std::size_t nn = n * n, kp = num_points_, rows = w_.size();
  if (phi.size() != nn || points.size() != kp * n || values.size() < rows)
    throw DimensionError("orbit system: dimension mismatch");

  struct Buffers {
    std::vector<S> g, grad, dg, y, scratch;
  };
  Buffers local;
  Buffers* buf = &local;
  if constexpr (std::is_same_v<S, cdouble>) {
    thread_local Buffers reused;
    buf = &reused;
  }
  auto& [g, grad, dg, y, scratch] = *buf;
  g.assign(kp, S(0));
  grad.assign(kp * n, S(0));
  y.assign(n, S(0));
  if (hs) dg.assign(kp, S(0));
  for (std::size_t k = 0; k < kp; ++k) {
    const S* q = points.data() + k * n;
    for (std::size_t j = 0; j < n; ++j) {
      S s(0);
      for (std::size_t l = 0; l < n; ++l) s += phi[j * n + l] * q[l];
      y[j] = s;
    }
    g[k] = compiled_.evaluate<S>(std::span<const S>(y), std::span<S>(grad.data() + k * n, n), scratch);
    if (hs) {
      const S* dq = dpoints + k * n;
      S s(0);
      for (std::size_t j = 0; j < n; ++j) {
        S dy(0);
        for (std::size_t l = 0; l < n; ++l) dy += phi[j * n + l] * dq[l];
        s += grad[k * n + j] * dy;
      }
      dg[k] = s;
    }
  }

  if (jac) jac->resize(values.size(), nn);
  auto add_jac = [&](std::size_t r, std::size_t k, const S& c) {
    const S* q = points.data() + k * n;
    auto row = jac->row(r);
    for (std::size_t j = 0; j < n; ++j) {
      const S cg = c * grad[k * n + j];
      for (std::size_t l = 0; l < n; ++l) row[j * n + l] += cg * q[l];
    }
  };
  for (std::size_t r = 0; r < rows; ++r) {
    S v(0), h(0);
    for (const auto& e : w_[r]) {
      const S c = convert<S>(e.weight);
      v += c * g[e.point];
      if (jac) add_jac(r, e.point, c);
      if (hs) h += c * dg[e.point];
    }
    for (const auto& e : dw_[r]) {
      const S c = convert<S>(e.weight);
      const S tc = t * c;
      v += tc * g[e.point];
      if (jac) add_jac(r, e.point, tc);
      if (hs) h += tc * dg[e.point] + *dt * c * g[e.point];
    }
    values[r] = v;
    if (hs) hs[r] = h;
  }
}

template void OrbitStructure::evaluate<cdouble>(std::span<const cdouble>, std::span<const cdouble>,
                                                const cdouble&, std::span<cdouble>, CMatrix*,
                                                const cdouble*, const cdouble*, cdouble*) const;
template void OrbitStructure::evaluate<mpcomplex>(std::span<const mpcomplex>,
                                                  std::span<const mpcomplex>, const mpcomplex&,
                                                  std::span<mpcomplex>, MPMatrix*,
                                                  const mpcomplex*, const mpcomplex*,
                                                  mpcomplex*) const;

HomogeneousForm OrbitStructure::expand_row(std::size_t r, std::span<const cdouble> points,
                                           cdouble t) const {
  const auto n = static_cast<std::size_t>(this->n());
  HomogeneousForm row(static_cast<int>(n * n), d());
  auto add = [&](std::size_t k, cdouble c) {
    row += point_equation(form_, points.subspan(k * n, n)) * c;
  };
  for (const auto& e : w_.at(r)) add(e.point, e.weight);
  if (t != 0.0)
    for (const auto& e : dw_.at(r)) add(e.point, t * e.weight);
  return row;
}

OrbitSystem::OrbitSystem(std::shared_ptr<const OrbitStructure> s, CVector points, cdouble t,
                         std::optional<AffinePatch> patch)
    : s_(std::move(s)), points_(std::move(points)), t_(t), patch_(std::move(patch)) {
  if (points_.size() != s_->num_points() * static_cast<std::size_t>(s_->n()))
    throw DimensionError("orbit system: wrong number of point coordinates");
  if (patch_ && patch_->coeffs.size() != num_vars())
    throw DimensionError("orbit system: patch length must be n^2");
}

template <class S>
void OrbitSystem::evaluate_impl(std::span<const S> x, std::span<S> values,
                                Matrix<S>* jacobian) const {
  if (x.size() != num_vars() || values.size() != num_equations())
    throw DimensionError("orbit system: dimension mismatch");
  if constexpr (std::is_same_v<S, cdouble>) {
    s_->evaluate<S>(x, points_, t_, values, jacobian);
  } else {
    const MPVector pts = to_mp(points_);
    s_->evaluate<S>(x, pts, to_mp(t_), values, jacobian);
  }
  if (patch_) {
    const std::size_t r = s_->num_rows();
    S v(0);
    for (std::size_t j = 0; j < x.size(); ++j) {
      const S c = convert<S>(patch_->coeffs[j]);
      v += c * x[j];
      if (jacobian) (*jacobian)(r, j) = c;
    }
    values[r] = v - convert<S>(patch_->rhs);
  }
}

void OrbitSystem::evaluate(std::span<const cdouble> x, std::span<cdouble> values,
                           CMatrix* jacobian) const {
  evaluate_impl(x, values, jacobian);
}

void OrbitSystem::evaluate(std::span<const mpcomplex> x, std::span<mpcomplex> values,
                           MPMatrix* jacobian) const {
  evaluate_impl(x, values, jacobian);
}

std::vector<int> OrbitSystem::degrees() const {
  std::vector<int> d(s_->num_rows(), s_->d());
  if (patch_) d.push_back(1);
  return d;
}

PolySystem OrbitSystem::expand() const {
  std::vector<HomogeneousForm> rows;
  for (std::size_t r = 0; r < s_->num_rows(); ++r) rows.push_back(s_->expand_row(r, points_, t_));
  return PolySystem(static_cast<int>(num_vars()), std::move(rows), patch_);
}

double OrbitSystem::weyl_norm() const {
  std::call_once(norm_once_, [&] {
    double s = 0.0;
    for (std::size_t r = 0; r < s_->num_rows(); ++r) {
      const double w = orbitdeg::weyl_norm(s_->expand_row(r, points_, t_));
      s += w * w;
    }
    if (patch_) {
      for (const auto& c : patch_->coeffs) s += std::norm(c);
      s += std::norm(patch_->rhs);
    }
    norm_ = std::sqrt(s);
  });
  return norm_;
}

OrbitHomotopy::OrbitHomotopy(std::shared_ptr<const OrbitStructure> s, CVector qa, CVector qb,
                             cdouble ta, cdouble tb)
    : s_(std::move(s)), qa_(std::move(qa)), dq_(std::move(qb)), ta_(ta), dt_(tb - ta) {
  const std::size_t len = s_->num_points() * static_cast<std::size_t>(s_->n());
  if (qa_.size() != len || dq_.size() != len)
    throw DimensionError("orbit homotopy: wrong number of point coordinates");
  for (std::size_t i = 0; i < len; ++i) dq_[i] -= qa_[i];
}

void OrbitHomotopy::evaluate(std::span<const cdouble> x, double s, std::span<cdouble> h,
                             CMatrix* hx, std::span<cdouble> hs) const {
  thread_local CVector q;
  q.resize(qa_.size());
  for (std::size_t i = 0; i < q.size(); ++i) q[i] = qa_[i] + s * dq_[i];
  const cdouble t = ta_ + s * dt_;
  if (hs.empty()) {
    s_->evaluate<cdouble>(x, q, t, h, hx);
  } else {
    s_->evaluate<cdouble>(x, q, t, h, hx, dq_.data(), &dt_, hs.data());
  }
}

SliceRepresentation represent_slice(const HomogeneousForm& f, const LinearSlice& slice,
                                    std::uint64_t seed) {
  const int n = f.num_vars(), d = f.degree();
  const std::size_t m = monomial_count(n, d);
  if (slice.matrix.cols() != m) throw DimensionError("represent_slice: slice width mismatch");
  Rng rng(seed);
  for (int attempt = 0; attempt < 5; ++attempt) {
    PointConfig pts = random_config(n, m, rng);
    CMatrix vt(m, m);  // V^T
    for (std::size_t k = 0; k < m; ++k) {
      const CVector v = veronese(pts.points[k], d);
      for (std::size_t i = 0; i < m; ++i) vt(i, k) = v[i];
    }
    if (condition_number(vt) > 1e10) continue;
    LU<cdouble> lu(vt);
    std::vector<std::vector<SparseWeight>> w(slice.matrix.rows());
    for (std::size_t r = 0; r < slice.matrix.rows(); ++r) {
      CVector rhs(slice.matrix.row(r).begin(), slice.matrix.row(r).end());
      lu.solve_in_place(rhs);
      for (std::size_t k = 0; k < m; ++k) w[r].push_back({static_cast<std::uint32_t>(k), rhs[k]});
    }
    return {std::make_shared<const OrbitStructure>(f, m, std::move(w)), pts.flatten()};
  }
  throw NumericalError("represent_slice: interpolation points are ill-conditioned");
}

}  // namespace orbitdeg
