#include "orbitdeg/alpha.hpp"

#include "orbitdeg/linalg.hpp"
#include "orbitdeg/parallel.hpp"
#include "orbitdeg/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace orbitdeg {

namespace {

// Digits carried beyond the target so ill-conditioned points still converge.
constexpr int kGuardDigits = 16;
constexpr int kMaxNewton = 64;

double to_d(double v) { return v; }
double to_d(const mpreal& v) { return v.convert_to<double>(); }

template <class S>
double unit_roundoff() {
  if constexpr (std::is_same_v<S, cdouble>)
    return std::numeric_limits<double>::epsilon();
  else
    return std::ldexp(1.0, -static_cast<int>(current_precision_bits()));
}

template <class S>
struct Local {
  std::vector<S> step;  // J^{-1} F
  Matrix<S> jinv;
  double condition = 0.0;
};

// Newton step and inverse Jacobian at x; throws SingularJacobian when J is
// singular to working precision.
template <class S>
Local<S> local_data(const SquareInstance& f, std::span<const S> x) {
  const std::size_t n = f.dim();
  if (x.size() != n) throw DimensionError("alpha: point has wrong dimension");
  std::vector<S> val(n);
  Matrix<S> jac(n, n);
  f.system->evaluate(x, val, &jac);
  real_t<S> jnorm(0);
  for (const auto& z : jac.data()) jnorm += abs2(z);
  LU<S> lu;
  if (!lu.factor(jac))
    throw SingularJacobian("alpha: singular Jacobian", std::numeric_limits<double>::infinity());
  Local<S> out;
  out.jinv = lu.solve(Matrix<S>::identity(n));
  real_t<S> inorm(0);
  for (const auto& z : out.jinv.data()) inorm += abs2(z);
  using std::sqrt;
  out.condition = to_d(sqrt(jnorm)) * to_d(sqrt(inorm));
  if (!std::isfinite(out.condition) || out.condition * unit_roundoff<S>() > 1.0)
    throw SingularJacobian("alpha: Jacobian singular to working precision (condition " +
                               std::to_string(out.condition) + ")",
                           out.condition);
  out.step = lu.solve(std::span<const S>(val));
  return out;
}

template <class S>
double gamma_from(const SquareInstance& f, std::span<const S> x, const Local<S>& loc) {
  const std::size_t n = f.dim();
  using std::sqrt;
  const double xh = std::sqrt(1.0 + to_d(norm2(x)) * to_d(norm2(x)));
  int dmax = 1;
  for (int d : f.degrees) dmax = std::max(dmax, d);
  // |J^{-1} diag(c_i)|_F with c_i = sqrt(d_i) |x^|^{d_i - 1}
  double frob = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double c = std::sqrt(static_cast<double>(f.degrees[j])) *
                       std::pow(xh, static_cast<double>(f.degrees[j] - 1));
      frob += to_d(abs2(loc.jinv(i, j))) * c * c;
    }
  const double mu = std::max(1.0, f.weyl_norm * std::sqrt(frob));
  return mu * std::pow(static_cast<double>(dmax), 1.5) / (2.0 * xh);
}

template <class S>
AlphaCertificate certify_impl(const SquareInstance& f, std::span<const S> x) {
  AlphaCertificate c;
  if constexpr (std::is_same_v<S, cdouble>) {
    c.point = to_mp(x);
    c.precision_bits = 53;
  } else {
    c.point.assign(x.begin(), x.end());
    c.precision_bits = current_precision_bits();
  }
  try {
    const auto loc = local_data<S>(f, x);
    c.beta = to_d(norm2(std::span<const S>(loc.step)));
    c.gamma_bound = gamma_from<S>(f, x, loc);
    c.alpha = c.beta * c.gamma_bound;
    c.certified = c.alpha < kAlphaThreshold;
    if (!c.certified) c.reason = "alpha above threshold";
  } catch (const SingularJacobian& e) {
    c.certified = false;
    c.alpha = c.beta = c.gamma_bound = std::numeric_limits<double>::infinity();
    c.reason = e.what();
  }
  return c;
}

unsigned refine_bits(int digits) { return bits_for_digits(digits + kGuardDigits); }

// Newton at the current precision.
RefineResult refine_here(const SquareInstance& f, MPVector x, int digits) {
  RefineResult r;
  r.precision_bits = current_precision_bits();
  // re-round the input to the working precision
  for (auto& z : x) z = at_current_precision(z);
  const double tol = std::pow(10.0, -digits);
  for (;;) {
    const auto loc = local_data<mpcomplex>(f, std::span<const mpcomplex>(x));
    r.beta = to_d(norm2(std::span<const mpcomplex>(loc.step)));
    r.history.push_back(r.beta);
    if (r.beta <= tol) break;
    if (r.iterations >= kMaxNewton)
      throw NumericalError("refine: no convergence in " + std::to_string(kMaxNewton) +
                           " Newton steps (beta " + std::to_string(r.beta) + ")");
    for (std::size_t j = 0; j < x.size(); ++j) x[j] -= loc.step[j];
    ++r.iterations;
  }
  r.point = std::move(x);
  return r;
}

}  // namespace

SquareInstance::SquareInstance(std::shared_ptr<const SystemEvaluator> sys)
    : system(std::move(sys)) {
  if (!system) throw std::invalid_argument("square instance: null system");
  if (system->num_equations() != system->num_vars())
    throw DimensionError("square instance: " + std::to_string(system->num_equations()) +
                         " equations in " + std::to_string(system->num_vars()) + " unknowns");
  degrees = system->degrees();
  weyl_norm = system->weyl_norm();
}

double beta(const SquareInstance& f, std::span<const cdouble> x) {
  return norm2(std::span<const cdouble>(local_data<cdouble>(f, x).step));
}
double beta(const SquareInstance& f, std::span<const mpcomplex> x) {
  return to_d(norm2(std::span<const mpcomplex>(local_data<mpcomplex>(f, x).step)));
}

double gamma_bound(const SquareInstance& f, std::span<const cdouble> x) {
  return gamma_from<cdouble>(f, x, local_data<cdouble>(f, x));
}
double gamma_bound(const SquareInstance& f, std::span<const mpcomplex> x) {
  return gamma_from<mpcomplex>(f, x, local_data<mpcomplex>(f, x));
}

AlphaCertificate certify_zero(const SquareInstance& f, std::span<const cdouble> x) {
  return certify_impl<cdouble>(f, x);
}
AlphaCertificate certify_zero(const SquareInstance& f, std::span<const mpcomplex> x) {
  return certify_impl<mpcomplex>(f, x);
}

nlohmann::json AlphaCertificate::to_json() const {
  nlohmann::json coords = nlohmann::json::array();
  for (const auto& z : point)
    coords.push_back(precision_bits > 53 ? complex_to_json(z) : complex_to_json(to_double(z)));
  return {{"coords", coords},
          {"beta", beta},
          {"gamma_bound", gamma_bound},
          {"alpha", alpha},
          {"precision_bits", precision_bits},
          {"verdict", certified ? "certified" : "uncertified"},
          {"soft", soft}};
}

RefineResult refine(const SquareInstance& f, std::span<const cdouble> x, int digits) {
  PrecisionScope scope(refine_bits(digits));
  return refine_here(f, to_mp(x), digits);
}

RefineResult refine(const SquareInstance& f, std::span<const mpcomplex> x, int digits) {
  PrecisionScope scope(refine_bits(digits));
  return refine_here(f, MPVector(x.begin(), x.end()), digits);
}

std::vector<RefineResult> refine_all(const SquareInstance& f, const std::vector<MPVector>& points,
                                     int digits, unsigned workers) {
  PrecisionScope scope(refine_bits(digits));
  std::vector<RefineResult> out(points.size());
  parallel_for(points.size(), workers,
               [&](std::size_t i) { out[i] = refine_here(f, points[i], digits); });
  return out;
}

std::string to_string(PairVerdict v) {
  switch (v) {
    case PairVerdict::distinct: return "distinct";
    case PairVerdict::same_zero: return "same_zero";
    case PairVerdict::undecided: return "undecided";
  }
  return "unknown";
}

nlohmann::json DistinctnessReport::to_json() const {
  nlohmann::json flagged_j = nlohmann::json::array();
  for (const auto& p : flagged)
    flagged_j.push_back({{"i", p.i}, {"j", p.j}, {"verdict", to_string(p.verdict)},
                         {"distance", p.distance}});
  return {{"n_points", n_points},       {"pairs_tested", pairs_tested},
          {"same_zero", same_zero},     {"undecided", undecided},
          {"rounds", refinement_rounds}, {"all_distinct", all_distinct},
          {"flagged", flagged_j}};
}

DistinctnessReport certify_distinct(const SquareInstance& f, std::vector<AlphaCertificate>& certs,
                                    std::uint64_t seed) {
  DistinctnessReport rep;
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < certs.size(); ++i)
    if (certs[i].certified) idx.push_back(i);
  rep.n_points = idx.size();
  if (idx.empty()) {
    rep.all_distinct = true;
    return rep;
  }
  const std::size_t n = f.dim();
  Rng rng(seed);
  const CVector w = rng.unit_vector(n);

  std::vector<CVector> pts(certs.size());
  for (std::size_t i : idx) pts[i] = certs[i].point_double();
  auto key = [&](std::size_t i) {
    cdouble s = 0.0;
    for (std::size_t k = 0; k < n; ++k) s += w[k] * pts[i][k];
    return s.real();
  };
  auto test = [&](std::size_t i, std::size_t j, double& dist) {
    double d2 = 0.0;
    for (std::size_t k = 0; k < n; ++k) d2 += std::norm(pts[i][k] - pts[j][k]);
    dist = std::sqrt(d2);
    if (dist > 2.0 * (certs[i].beta + certs[j].beta)) return PairVerdict::distinct;
    if (dist * kSameZeroFactor * certs[i].gamma_bound < 1.0 ||
        dist * kSameZeroFactor * certs[j].gamma_bound < 1.0)
      return PairVerdict::same_zero;
    return PairVerdict::undecided;
  };

  // |key(x) - key(y)| <= |x - y|, so a key gap above 2(beta_i + beta_max)
  // already separates the pair.
  std::vector<std::pair<double, std::size_t>> order;
  double beta_max = 0.0;
  for (std::size_t i : idx) {
    order.emplace_back(key(i), i);
    beta_max = std::max(beta_max, certs[i].beta);
  }
  std::sort(order.begin(), order.end());
  std::vector<PairRecord> open;
  for (std::size_t a = 0; a < order.size(); ++a) {
    const std::size_t i = order[a].second;
    const double reach = 2.0 * (certs[i].beta + beta_max);
    for (std::size_t b = a + 1; b < order.size() && order[b].first - order[a].first <= reach;
         ++b) {
      const std::size_t j = order[b].second;
      ++rep.pairs_tested;
      double dist = 0.0;
      const auto v = test(std::min(i, j), std::max(i, j), dist);
      if (v != PairVerdict::distinct) open.push_back({std::min(i, j), std::max(i, j), v, dist});
    }
  }

  // refine undecided pairs at doubled digits
  for (int round = 0; round < 3; ++round) {
    const bool any = std::any_of(open.begin(), open.end(),
                                 [](const PairRecord& p) { return p.verdict == PairVerdict::undecided; });
    if (!any) break;
    ++rep.refinement_rounds;
    for (auto& p : open) {
      if (p.verdict != PairVerdict::undecided) continue;
      for (std::size_t k : {p.i, p.j}) {
        const int digits =
            2 * std::max(16, static_cast<int>(certs[k].precision_bits / 3.4));
        try {
          PrecisionScope scope(refine_bits(digits));
          auto r = refine_here(f, certs[k].point, digits);
          certs[k] = certify_zero(f, std::span<const mpcomplex>(r.point));
          pts[k] = certs[k].point_double();
        } catch (const NumericalError&) {
        }
      }
      p.verdict = test(p.i, p.j, p.distance);
    }
  }
  for (const auto& p : open) {
    if (p.verdict == PairVerdict::distinct) continue;
    if (p.verdict == PairVerdict::same_zero) ++rep.same_zero;
    if (p.verdict == PairVerdict::undecided) ++rep.undecided;
    rep.flagged.push_back(p);
  }
  rep.all_distinct = rep.flagged.empty();
  return rep;
}

nlohmann::json CertifySummary::to_json() const {
  return {{"points", certificates.size()},
          {"certified", certified},
          {"refine_failures", refine_failures},
          {"max_alpha", max_alpha},
          {"all_certified", all_certified()},
          {"distinctness", distinctness.to_json()}};
}

CertifySummary certify_set(const SquareInstance& f, const std::vector<CVector>& points,
                           const CertifyOptions& opts) {
  CertifySummary out;
  out.certificates.resize(points.size());
  std::vector<char> refine_failed(points.size(), 0);
  if (opts.digits <= 0) {
    parallel_for(points.size(), opts.workers, [&](std::size_t i) {
      out.certificates[i] = certify_zero(f, std::span<const cdouble>(points[i]));
    });
  } else {
    PrecisionScope scope(refine_bits(opts.digits));
    parallel_for(points.size(), opts.workers, [&](std::size_t i) {
      try {
        const auto r = refine_here(f, to_mp(points[i]), opts.digits);
        out.certificates[i] = certify_zero(f, std::span<const mpcomplex>(r.point));
      } catch (const NumericalError& e) {
        refine_failed[i] = 1;
        out.certificates[i] = certify_zero(f, std::span<const cdouble>(points[i]));
        out.certificates[i].certified = false;
        out.certificates[i].reason = std::string("refinement failed: ") + e.what();
      }
    });
  }
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto& c = out.certificates[i];
    if (c.certified) ++out.certified;
    if (refine_failed[i]) ++out.refine_failures;
    if (std::isfinite(c.alpha)) out.max_alpha = std::max(out.max_alpha, c.alpha);
    else out.max_alpha = std::numeric_limits<double>::infinity();
  }
  out.distinctness = certify_distinct(f, out.certificates, opts.seed);
  return out;
}

}  // namespace orbitdeg
