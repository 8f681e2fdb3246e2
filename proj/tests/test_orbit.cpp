#include "orbitdeg/linalg.hpp"
#include "orbitdeg/orbit.hpp"
#include "test_helpers.hpp"

#include <doctest.h>

using namespace orbitdeg;
using namespace orbitdeg::testing;

namespace {

// Converged, nonsingular, off the determinant locus.
std::vector<CVector> oracle_solutions(const PolySystem& ps, int n, std::uint64_t seed) {
  TotalDegreeOptions opts;
  opts.seed = seed;
  auto res = solve_total_degree(ps, opts);
  std::vector<CVector> out;
  for (const auto& s : res.solutions.entries())
    if (normalized_abs_det(s.coords, n) > kDetThreshold) out.push_back(s.coords);
  return out;
}

double max_residual(const SystemEvaluator& sys, std::span<const cdouble> x) {
  return norm2(sys.evaluate(x));
}

}  // namespace

TEST_CASE("sampling is deterministic with unit complex normal coefficients") {
  auto a = sample_hypersurface(4, 3, 7), b = sample_hypersurface(4, 3, 7);
  CHECK(a.form.coeffs() == b.form.coeffs());
  CHECK(a.form.size() == 20);
  CHECK(sample_hypersurface(4, 3, 8).form.coeffs() != a.form.coeffs());
  double s_re = 0, s_im = 0, q_re = 0, q_im = 0;
  std::size_t count = 0;
  for (std::uint64_t seed = 0; seed < 500; ++seed) {
    const auto h = sample_hypersurface(4, 3, seed);
    for (const auto& c : h.form.coeffs()) {
      s_re += c.real();
      s_im += c.imag();
      q_re += c.real() * c.real();
      q_im += c.imag() * c.imag();
      ++count;
    }
  }
  REQUIRE(count == 10000);
  CHECK(std::abs(s_re / count) < 0.05);
  CHECK(std::abs(s_im / count) < 0.05);
  CHECK(std::abs(q_re / count - 1.0) < 0.05);
  CHECK(std::abs(q_im / count - 1.0) < 0.05);
}

TEST_CASE("problem JSON") {
  auto h = hypersurface_from_json(nlohmann::json::parse(
      R"({"n": 3, "d": 4, "form": {"seed": 5}, "stabilizer_order": 1})"));
  CHECK(h.form.coeffs() == sample_hypersurface(3, 4, 5).form.coeffs());
  auto c = hypersurface_from_json(hypersurface_to_json(cayley_cubic()));
  CHECK(c.stabilizer_order == 24);
  CHECK(c.form.coeffs() == cayley_cubic().form.coeffs());
  Rng rng(1);
  Hypersurface u;
  u.form = random_form(3, 3, rng);
  auto u2 = hypersurface_from_json(nlohmann::json::parse(hypersurface_to_json(u).dump()));
  CHECK(u2.form.coeffs() == u.form.coeffs());
  CHECK_THROWS(hypersurface_from_json(nlohmann::json::parse(R"({"n": 3})")));
  CHECK_THROWS(hypersurface_from_json(
      nlohmann::json::parse(R"({"n": 3, "d": 4, "form": {"seed": 5}, "stabilizer_order": 0})")));
}

TEST_CASE("cayley cubic") {
  auto c = cayley_cubic();
  CVector x{1.0, 2.0, 3.0, 4.0};
  CHECK(c.form(std::span<const cdouble>(x)) == cdouble(24.0 + 12.0 + 8.0 + 6.0));
  // invariant under permuting coordinates
  CMatrix p(4, 4);
  p(0, 2) = p(1, 0) = p(2, 3) = p(3, 1) = 1.0;
  CHECK(compose_linear(c.form, p).coeffs() == c.form.coeffs());
}

TEST_CASE("theta") {
  Rng rng(41);
  auto f = sample_hypersurface(3, 3, 2);
  CVector id{1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0};
  CHECK(theta(f, id).coeffs() == f.form.coeffs());
  const cdouble lambda(0.3, 1.1);
  CVector scaled = id;
  for (auto& z : scaled) z *= lambda;
  CHECK(max_rel_err(theta(f, scaled).coeffs(), (f.form * std::pow(lambda, 3)).coeffs()) <= 1e-14);

  // symbolic theta agrees with composition at random phi
  auto forms = theta_forms(f.form);
  REQUIRE(forms.size() == 10);
  for (int trial = 0; trial < 10; ++trial) {
    CVector phi = rng.complex_normal_vector(9);
    auto img = theta(f, phi);
    CVector sym(forms.size());
    for (std::size_t m = 0; m < forms.size(); ++m) sym[m] = forms[m](std::span<const cdouble>(phi));
    CHECK(max_rel_err(img.coeffs(), sym) <= 1e-12);
    // homogeneous of degree d
    CVector lphi = phi;
    for (auto& z : lphi) z *= lambda;
    CHECK(max_rel_err(theta(f, lphi).coeffs(), (img * std::pow(lambda, 3)).coeffs()) <= 1e-12);
  }
  CHECK_THROWS_AS(theta(f, CVector(9, 0.0)), NumericalError);
}

TEST_CASE("point system shapes and trivial solutions") {
  auto f = sample_hypersurface(4, 3, 3);
  Rng rng(42);
  auto cfg = random_config(4, 15, rng);
  auto ps = build_point_system(f, cfg);
  CHECK(ps.polys().size() == 15);
  CHECK(ps.num_vars() == 16);
  for (const auto& p : ps.polys()) CHECK(p.degree() == 3);

  // put p_0 on f: then the identity satisfies equation 0
  auto sp = start_pair(f, 5);
  cfg.points[0] = sp.config.points[0];
  const CMatrix phi0 = as_matrix(sp.phi0, 4);
  CVector p = matvec(phi0, cfg.points[0]);
  cfg.points[0] = p;
  auto ps2 = build_point_system(f, cfg);
  CVector id(16);
  for (int i = 0; i < 4; ++i) id[static_cast<std::size_t>(i * 5)] = 1.0;
  CHECK(std::abs(ps2.evaluate_direct(id)[0]) <= 1e-12);

  cfg.points[1] = CVector(4, 0.0);
  CHECK_THROWS(build_point_system(f, cfg));
}

TEST_CASE("start pairs") {
  for (auto [n, d] : {std::pair{2, 3}, {3, 3}, {3, 4}, {4, 3}}) {
    auto f = sample_hypersurface(n, d, 10 + n + d);
    auto sp = start_pair(f, 99);
    CHECK(sp.config.size() == static_cast<std::size_t>(n * n - 1));
    CHECK(sp.residual_norm <= 1e-10);
    auto ps = build_point_system(f, sp.config);
    CHECK(norm2(ps.evaluate_direct(sp.phi0)) <= 1e-10);
    CHECK(normalized_abs_det(sp.phi0, n) > kDetThreshold);
    // equation i depends only on the last coordinate of p_i once phi0 and the
    // other coordinates are fixed, and has d roots in it
    const auto g = compose_linear(f.form, as_matrix(sp.phi0, n));
    CVector pt = sp.config.points[0];
    pt.back() += 0.1;
    CHECK(std::abs(g(std::span<const cdouble>(pt))) > 1e-6);
  }
  auto cay = start_pair(cayley_cubic(), 3);
  CHECK(cay.residual_norm <= 1e-10);
  auto f = sample_hypersurface(3, 3, 1);
  CHECK(start_pair(f, 4).phi0 == start_pair(f, 4).phi0);
}

TEST_CASE("veronese slice") {
  PointConfig c{2, {{1.0, cdouble(0.5, 2.0)}}};
  auto s = veronese_slice(c, 2);
  const cdouble t(0.5, 2.0);
  CHECK(s.matrix(0, 0) == 1.0);
  CHECK(s.matrix(0, 1) == t);
  CHECK(s.matrix(0, 2) == t * t);

  Rng rng(43);
  int full = 0;
  for (int trial = 0; trial < 100; ++trial) {
    auto cfg = random_config(4, 15, rng);
    if (numerical_rank(veronese_slice(cfg, 3).matrix) == 15) ++full;
  }
  CHECK(full == 100);
  PointConfig dup{3, {{1.0, 2.0, 3.0}, {1.0, 2.0, 3.0}}};
  CHECK_THROWS_AS(veronese_slice(dup, 2), NumericalError);
}

TEST_CASE("slice system vanishes at point-system solutions") {
  auto f = sample_hypersurface(3, 4, 21);
  auto sp = start_pair(f, 22);
  Rng rng(44);
  auto patch = random_patch(3, rng);
  auto slice = veronese_slice(sp.config, 4);
  auto ps = build_slice_system(f, slice, patch);
  CHECK(ps.num_equations() == 9);
  CHECK(ps.is_square());
  CompiledSystem sys(ps);
  // scale phi0 onto the patch
  cdouble lx = 0.0;
  for (std::size_t j = 0; j < 9; ++j) lx += patch.coeffs[j] * sp.phi0[j];
  CVector phi = sp.phi0;
  for (auto& z : phi) z /= lx;
  auto v = sys.evaluate(phi);
  for (std::size_t i = 0; i < 8; ++i) CHECK(std::abs(v[i]) <= 1e-9 * std::max(1.0, std::pow(norm2(phi), 4)));
  CHECK(std::abs(v[8]) <= 1e-12);

  int nonzero = 0;
  for (int trial = 0; trial < 20; ++trial) {
    CVector r = rng.unit_vector(9);
    CVector w = sys.evaluate(r);
    w.pop_back();
    if (norm2(w) > 0.1 * norm2(slice.matrix.data()) / std::sqrt(8.0) * 0.0 + 1e-3) ++nonzero;
  }
  CHECK(nonzero == 20);
}

TEST_CASE("structured evaluation matches the expanded systems") {
  Rng rng(45);
  auto f = sample_hypersurface(3, 3, 23);
  auto cfg = random_config(3, 8, rng);
  auto patch = random_patch(3, rng);

  auto point = OrbitSystem(OrbitStructure::identity(f.form, 8), cfg.flatten(), 0.0, patch);
  CompiledSystem expanded(build_point_system(f, cfg, patch));
  auto slice = veronese_slice(cfg, 3);
  auto rep = represent_slice(f.form, slice, 7);
  OrbitSystem sliced(rep.structure, rep.points, 0.0, patch);
  CompiledSystem sliced_expanded(build_slice_system(f, slice, patch));

  for (int trial = 0; trial < 20; ++trial) {
    CVector x = rng.unit_vector(9);
    CHECK(max_rel_err(expanded.evaluate(x), point.evaluate(x)) <= 1e-12);
    CHECK(max_rel_err(expanded.jacobian(x).data(), point.jacobian(x).data()) <= 1e-12);
    CHECK(max_rel_err(sliced_expanded.evaluate(x), sliced.evaluate(x)) <= 1e-9);
    CHECK(max_rel_err(sliced_expanded.jacobian(x).data(), sliced.jacobian(x).data()) <= 1e-9);
  }
  CHECK(point.weyl_norm() == doctest::Approx(expanded.weyl_norm()).epsilon(1e-12));
  CHECK(point.expand().polys()[3].coeffs() == expanded.source().polys()[3].coeffs());

  // MPFR path agrees with binary64
  PrecisionScope scope(160);
  CVector x = rng.unit_vector(9);
  MPVector xm = to_mp(x);
  MPVector v(9);
  MPMatrix j;
  point.evaluate(std::span<const mpcomplex>(xm), v, &j);
  CHECK(max_rel_err(to_double(std::span<const mpcomplex>(v)), point.evaluate(x)) <= 1e-14);
}

TEST_CASE("pencil rows and orbit homotopy derivative") {
  Rng rng(46);
  auto f = sample_hypersurface(3, 3, 24);
  auto cfg = random_config(3, 8, rng);
  // last row moves along sum_k w_k nu(q'_k)
  const std::size_t m = 10;
  auto extra = random_config(3, m, rng);
  std::vector<std::vector<SparseWeight>> w(8), dw(8);
  for (std::uint32_t k = 0; k < 8; ++k) w[k].push_back({k, 1.0});
  CVector wp = rng.complex_normal_vector(m);
  CVector dir(m);
  for (std::uint32_t k = 0; k < m; ++k) {
    dw[7].push_back({8 + k, wp[k]});
    const CVector v = veronese(extra.points[k], 3);
    for (std::size_t i = 0; i < m; ++i) dir[i] += wp[k] * v[i];
  }
  auto s = std::make_shared<const OrbitStructure>(f.form, 8 + m, w, dw);
  CVector pts = cfg.flatten();
  const CVector ep = extra.flatten();
  pts.insert(pts.end(), ep.begin(), ep.end());

  // explicit slice at t
  const cdouble t(0.4, -0.7);
  LinearSlice sl = veronese_slice(cfg, 3);
  for (std::size_t i = 0; i < m; ++i) sl.matrix(7, i) += t * dir[i];
  auto patch = random_patch(3, rng);
  CompiledSystem ref(build_slice_system(f, sl, patch));
  OrbitSystem sys(s, pts, t, patch);
  for (int trial = 0; trial < 10; ++trial) {
    CVector x = rng.unit_vector(9);
    CHECK(max_rel_err(ref.evaluate(x), sys.evaluate(x)) <= 1e-11);
  }

  // dH/ds against central differences
  CVector qb = pts;
  for (auto& z : qb) z += 0.3 * rng.complex_normal();
  OrbitHomotopy h(s, pts, qb, 0.2, cdouble(-0.5, 0.9));
  CVector x = rng.unit_vector(9);
  CVector val(8), hs(8), vp(8), vm(8);
  CMatrix hx;
  h.evaluate(x, 0.4, val, &hx, hs);
  const double e = 1e-6;
  h.evaluate(x, 0.4 + e, vp, nullptr, {});
  h.evaluate(x, 0.4 - e, vm, nullptr, {});
  for (std::size_t r = 0; r < 8; ++r) {
    const cdouble fd = (vp[r] - vm[r]) / (2 * e);
    CHECK(std::abs(fd - hs[r]) <= 1e-6 * std::max(1.0, std::abs(hs[r])));
  }
}

TEST_CASE("degree report") {
  CHECK(degree_report(96120, 1) == 96120);
  CHECK(degree_report(7320, 24) == 305);
  CHECK_THROWS_AS(degree_report(7321, 24), std::domain_error);
  CHECK_THROWS_AS(degree_report(5, 0), std::invalid_argument);
}

TEST_CASE("both formulations have the same solutions (binary forms)") {
  for (auto [d, expected] : {std::pair{3, 6}, {4, 24}}) {
    auto f = sample_hypersurface(2, d, 30 + d);
    auto sp = start_pair(f, 31);
    Rng rng(47);
    auto patch = random_patch(2, rng);
    auto a = oracle_solutions(build_point_system(f, sp.config, patch), 2, 1);
    auto b = oracle_solutions(build_slice_system(f, veronese_slice(sp.config, d), patch), 2, 2);
    CHECK(a.size() == static_cast<std::size_t>(expected));
    CHECK(b.size() == a.size());
    SolutionRegistry reg(4, 1e-6);
    for (const auto& x : a) reg.insert(x);
    for (const auto& x : b) CHECK(reg.find(x).has_value());
    // phi0 is among them
    CHECK(reg.find(sp.phi0).has_value());
  }
}
