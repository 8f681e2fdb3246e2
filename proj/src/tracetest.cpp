#include "orbitdeg/tracetest.hpp"

#include "orbitdeg/alpha.hpp"
#include "orbitdeg/linalg.hpp"
#include "orbitdeg/parallel.hpp"
#include "orbitdeg/registry.hpp"

#include <cmath>

namespace orbitdeg {

namespace {

constexpr int kGuardDigits = 16;
constexpr double kEndpointResidual = 1e-8;
constexpr double kChartGuard = 1e-8;
constexpr int kMaxDraws = 10;

CVector unit(std::span<const cdouble> x) {
  CVector u(x.begin(), x.end());
  const double s = norm2(u);
  if (s > 0)
    for (auto& z : u) z /= s;
  return u;
}

CVector onto_patch(std::span<const cdouble> x, const AffinePatch& patch) {
  cdouble lx = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) lx += patch.coeffs[j] * x[j];
  if (std::abs(lx) < 1e-12 * norm2(CVector(x.begin(), x.end())))
    throw TraceAbort("trace: solution lies on the hyperplane at infinity of the patch");
  CVector y(x.begin(), x.end());
  for (auto& z : y) z *= patch.rhs / lx;
  return y;
}

TrackOptions cautious(TrackOptions t) {
  t.max_step = std::max(t.min_step, t.max_step / 4);
  t.initial_step = std::clamp(t.initial_step / 4, t.min_step, t.max_step);
  t.max_steps *= 4;
  return t;
}

// Random direction points and weights, scaled so |l'| matches the moving row.
void draw_direction(const HomogeneousForm& f, const CVector& row, Rng& rng, PointConfig& pts,
                    CVector& weights, CVector& dir) {
  const int n = f.num_vars(), d = f.degree();
  const std::size_t m = monomial_count(n, d);
  pts = random_config(n, m, rng);
  weights = rng.complex_normal_vector(m);
  dir.assign(m, 0.0);
  for (std::size_t k = 0; k < m; ++k) {
    const CVector v = veronese(pts.points[k], d);
    for (std::size_t i = 0; i < m; ++i) dir[i] += weights[k] * v[i];
  }
  const double s = norm2(row) / norm2(dir);
  for (auto& w : weights) w *= s;
  for (auto& z : dir) z *= s;
}

Pencil assemble(const HomogeneousForm& f, LinearSlice base, std::vector<std::vector<SparseWeight>> w,
                CVector base_points, std::uint64_t seed, cdouble t1) {
  const std::size_t rows = base.matrix.rows();
  if (rows == 0) throw DimensionError("pencil: empty slice");
  const std::size_t nb = base_points.size() / static_cast<std::size_t>(f.num_vars());
  Pencil p;
  p.base = std::move(base);
  p.row = rows - 1;
  const auto last = p.base.matrix.row(p.row);
  const CVector row(last.begin(), last.end());
  Rng rng(seed);
  for (int draw = 0; draw < kMaxDraws; ++draw) {
    PointConfig extra;
    CVector weights;
    draw_direction(f, row, rng, extra, weights, p.direction);
    bool full = true;
    for (cdouble t : {cdouble(0.0), t1, -t1})
      if (numerical_rank(p.at(t).matrix) < rows) full = false;
    if (!full) continue;
    std::vector<std::vector<SparseWeight>> dw(rows);
    for (std::size_t k = 0; k < weights.size(); ++k)
      dw[p.row].push_back({static_cast<std::uint32_t>(nb + k), weights[k]});
    p.points = base_points;
    const CVector flat = extra.flatten();
    p.points.insert(p.points.end(), flat.begin(), flat.end());
    p.structure = std::make_shared<const OrbitStructure>(f, nb + weights.size(), w, std::move(dw));
    return p;
  }
  throw NumericalError("pencil: no full-rank direction found");
}

struct FiberTrack {
  std::vector<CVector> points;
  std::size_t failures = 0;
};

// Endpoints at t = tb, index-aligned with the start points. Failed or
// colliding paths are retracked once with smaller steps.
FiberTrack track_to(const Pencil& pencil, const std::vector<CVector>& start, cdouble tb,
                    const CVector& track_patch, const TraceOptions& opts) {
  const OrbitHomotopy h(pencil.structure, pencil.points, pencil.points, 0.0, tb);
  const OrbitSystem target(pencil.structure, pencil.points, tb);
  const std::size_t count = start.size();
  FiberTrack out;
  out.points.resize(count);
  std::vector<char> good(count, 0);

  auto attempt = [&](std::size_t i, const TrackOptions& topts) {
    const auto r = track(h, start[i], topts, track_patch);
    if (!r.ok()) return;
    CVector u = unit(r.endpoint);
    const double res = norm2(target.evaluate(u));
    if (!std::isfinite(res) || res > kEndpointResidual) return;
    out.points[i] = std::move(u);
    good[i] = 1;
  };
  parallel_for(count, opts.workers, [&](std::size_t i) { attempt(i, opts.track); });

  // Collisions: a later duplicate of an earlier endpoint is retracked.
  auto collisions = [&] {
    std::vector<std::size_t> bad;
    SolutionRegistry reg(start.empty() ? 1 : start.front().size(), 1e-6);
    std::vector<std::size_t> owner;
    for (std::size_t i = 0; i < count; ++i) {
      if (!good[i]) continue;
      if (const auto idx = reg.find(out.points[i])) {
        bad.push_back(i);
        bad.push_back(owner[*idx]);
        continue;
      }
      reg.insert(out.points[i]);
      owner.push_back(i);
    }
    return bad;
  };

  std::vector<std::size_t> redo;
  for (std::size_t i = 0; i < count; ++i)
    if (!good[i]) redo.push_back(i);
  for (std::size_t i : collisions()) {
    good[i] = 0;
    redo.push_back(i);
  }
  std::sort(redo.begin(), redo.end());
  redo.erase(std::unique(redo.begin(), redo.end()), redo.end());
  const TrackOptions slow = cautious(opts.track);
  parallel_for(redo.size(), opts.workers, [&](std::size_t k) { attempt(redo[k], slow); });
  for (std::size_t i = 0; i < count; ++i)
    if (!good[i]) ++out.failures;
  out.failures += collisions().size();
  return out;
}

std::vector<MPVector> images(const Hypersurface& f, const std::vector<RefineResult>& refined) {
  const auto n = static_cast<std::size_t>(f.n());
  std::vector<MPVector> out(refined.size());
  for (std::size_t i = 0; i < refined.size(); ++i) {
    MPMatrix a(n, n);
    for (std::size_t k = 0; k < n * n; ++k) a.data()[k] = at_current_precision(refined[i].point[k]);
    out[i] = compose_coefficients<mpcomplex>(f.form, a);
  }
  return out;
}

bool chart_ok(const std::vector<std::vector<MPVector>*>& sets, const MPVector& c) {
  const mpreal nc = norm2(c);
  for (const auto* set : sets)
    for (const auto& th : *set) {
      mpcomplex den(0);
      for (std::size_t k = 0; k < c.size(); ++k) den += c[k] * th[k];
      if (sqrt(abs2(den)) < kChartGuard * nc * norm2(th)) return false;
    }
  return true;
}

void dehomogenize(std::vector<MPVector>& set, const MPVector& c) {
  for (auto& th : set) {
    mpcomplex den(0);
    for (std::size_t k = 0; k < c.size(); ++k) den += c[k] * th[k];
    for (auto& z : th) z /= den;
  }
}

MPVector sum(const std::vector<MPVector>& w, std::size_t m) {
  MPVector s(m, mpcomplex(0));
  for (const auto& v : w)
    for (std::size_t k = 0; k < m; ++k) s[k] += v[k];
  return s;
}

// l' = sum_k w'_k nu(q'_k) at the current precision, from the same data the
// evaluator uses (the binary64 copy in Pencil::direction is rounded).
MPVector exact_direction(const Hypersurface& f, const Pencil& pencil) {
  const auto n = static_cast<std::size_t>(f.n());
  const auto basis = monomial_basis(f.n(), f.d());
  MPVector dir(basis.size(), mpcomplex(0));
  for (const auto& e : pencil.structure->direction()[pencil.row]) {
    const cdouble* q = pencil.points.data() + e.point * n;
    const mpcomplex w = to_mp(e.weight);
    for (std::size_t m = 0; m < basis.size(); ++m) {
      mpcomplex v = w;
      for (std::size_t j = 0; j < n; ++j)
        for (int k = 0; k < basis[m][j]; ++k) v *= to_mp(q[j]);
      dir[m] += v;
    }
  }
  return dir;
}

nlohmann::json mp_vector_json(const MPVector& v) {
  auto a = nlohmann::json::array();
  for (const auto& z : v) a.push_back(complex_to_json(z));
  return a;
}

}  // namespace

LinearSlice Pencil::at(cdouble t) const {
  LinearSlice s = base;
  for (std::size_t k = 0; k < direction.size(); ++k) s.matrix(row, k) += t * direction[k];
  return s;
}

Pencil Pencil::redraw(const Hypersurface& f, std::uint64_t seed, cdouble t1) const {
  const std::size_t nb = structure->num_points() - direction.size();
  CVector base_points(points.begin(),
                      points.begin() + static_cast<std::ptrdiff_t>(nb * static_cast<std::size_t>(f.n())));
  return assemble(f.form, base, structure->weights(), std::move(base_points), seed, t1);
}

OrbitSystem Pencil::system(cdouble t, std::optional<AffinePatch> patch) const {
  return OrbitSystem(structure, points, t, std::move(patch));
}

Pencil build_pencil(const Hypersurface& f, const PointConfig& config, std::uint64_t seed,
                    cdouble t1) {
  if (config.n != f.n()) throw DimensionError("pencil: configuration dimension mismatch");
  LinearSlice base = veronese_slice(config, f.d());
  std::vector<std::vector<SparseWeight>> w(config.size());
  for (std::size_t i = 0; i < config.size(); ++i)
    w[i].push_back({static_cast<std::uint32_t>(i), 1.0});
  return assemble(f.form, std::move(base), std::move(w), config.flatten(), seed, t1);
}

Pencil build_pencil(const Hypersurface& f, const LinearSlice& slice, std::uint64_t seed,
                    cdouble t1) {
  if (numerical_rank(slice.matrix) < slice.matrix.rows())
    throw NumericalError("pencil: slice is rank deficient");
  Rng rng(seed);
  const auto rep = represent_slice(f.form, slice, rng.next_seed());
  return assemble(f.form, slice, rep.structure->weights(), rep.points, rng.next_seed(), t1);
}

double trace_threshold(int digits, double scale) {
  if (digits < 10) throw std::invalid_argument("trace: digits must be at least 10");
  return scale * std::pow(10.0, 6 - digits);
}

PencilFibers PencilFibers::without(std::size_t k) const {
  if (k >= size()) throw std::out_of_range("fibers: index out of range");
  PencilFibers r = *this;
  for (auto* v : {&r.at0, &r.plus, &r.minus, &r.at2})
    if (k < v->size()) v->erase(v->begin() + static_cast<std::ptrdiff_t>(k));
  return r;
}

PencilFibers track_fibers(const Hypersurface& f, const std::vector<CVector>& solutions,
                          const Pencil& pencil, const TraceOptions& opts) {
  opts.track.validate();
  if (solutions.empty()) throw std::invalid_argument("trace: no solutions");
  const std::size_t nv = static_cast<std::size_t>(f.n() * f.n());
  for (const auto& s : solutions)
    if (s.size() != nv) throw DimensionError("trace: solution dimension mismatch");

  Rng rng(opts.seed);
  PencilFibers fib;
  fib.patch = random_patch(f.n(), rng);
  fib.t2 = opts.t2;
  const CVector track_patch = rng.unit_vector(nv);
  std::vector<CVector> start;
  start.reserve(solutions.size());
  for (const auto& s : solutions) start.push_back(unit(s));

  for (int attempt = 0; attempt < 2; ++attempt) {
    fib.t1 = attempt == 0 ? opts.t1 : opts.retry_t1;
    fib.t1_retries = attempt;
    auto plus = track_to(pencil, start, fib.t1, track_patch, opts);
    if (plus.failures) continue;
    auto minus = track_to(pencil, start, -fib.t1, track_patch, opts);
    if (minus.failures) continue;
    FiberTrack at2;
    if (opts.t2) {
      at2 = track_to(pencil, start, *opts.t2, track_patch, opts);
      if (at2.failures) continue;
    }
    fib.at0.clear();
    fib.plus.clear();
    fib.minus.clear();
    fib.at2.clear();
    for (std::size_t i = 0; i < start.size(); ++i) {
      fib.at0.push_back(onto_patch(start[i], fib.patch));
      fib.plus.push_back(onto_patch(plus.points[i], fib.patch));
      fib.minus.push_back(onto_patch(minus.points[i], fib.patch));
      if (opts.t2) fib.at2.push_back(onto_patch(at2.points[i], fib.patch));
    }
    return fib;
  }
  throw TraceAbort("trace: path failures at both values of t1");
}

TraceReport assemble_trace(const std::vector<MPVector>& w0, const std::vector<MPVector>& plus,
                           const std::vector<MPVector>& minus, cdouble t1, int digits) {
  if (w0.size() != plus.size() || w0.size() != minus.size())
    throw DimensionError("trace: fiber sizes differ");
  if (w0.empty()) throw std::invalid_argument("trace: empty fibers");
  const std::size_t m = w0.front().size();
  PrecisionScope scope(bits_for_digits(digits + kGuardDigits));
  TraceReport r;
  r.t1 = t1;
  r.points = w0.size();
  r.solution_digits = digits;
  r.w0 = sum(w0, m);
  r.w_plus = sum(plus, m);
  r.w_minus = sum(minus, m);
  r.trace.resize(m);
  for (std::size_t k = 0; k < m; ++k)
    r.trace[k] = (r.w_plus[k] - r.w0[k]) - (r.w0[k] - r.w_minus[k]);
  r.trace_norm = norm2(r.trace).convert_to<double>();
  double scale = 0.0;
  for (const auto& v : w0) scale += norm2(v).convert_to<double>();
  r.scale = scale;
  r.threshold = trace_threshold(digits, scale);
  r.pass = r.trace_norm <= r.threshold;
  return r;
}

TraceReport trace_from_fibers(const Hypersurface& f, const PencilFibers& fibers,
                              const Pencil& pencil, int digits, const TraceOptions& opts) {
  trace_threshold(digits, 1.0);
  if (fibers.size() == 0) throw std::invalid_argument("trace: empty fibers");

  auto refine_fiber = [&](const std::vector<CVector>& pts, cdouble t) {
    const SquareInstance inst(std::make_shared<OrbitSystem>(pencil.structure, pencil.points, t,
                                                            fibers.patch));
    std::vector<MPVector> mp;
    mp.reserve(pts.size());
    for (const auto& p : pts) mp.push_back(to_mp(p));
    try {
      return refine_all(inst, mp, digits, opts.workers);
    } catch (const NumericalError& e) {
      throw TraceAbort(std::string("trace: refinement failed: ") + e.what());
    }
  };
  const auto r0 = refine_fiber(fibers.at0, 0.0);
  const auto rp = refine_fiber(fibers.plus, fibers.t1);
  const auto rm = refine_fiber(fibers.minus, -fibers.t1);
  std::vector<RefineResult> r2;
  if (!fibers.at2.empty()) r2 = refine_fiber(fibers.at2, *fibers.t2);

  PrecisionScope scope(bits_for_digits(digits + kGuardDigits));
  auto w0 = images(f, r0), wp = images(f, rp), wm = images(f, rm), w2 = images(f, r2);

  // The chart is the direction row: there the moving hyperplane reads
  // L_last . theta = -t, a parallel translation.
  const std::size_t m = w0.front().size();
  const MPVector chart = exact_direction(f, pencil);
  if (!chart_ok({&w0, &wp, &wm, &w2}, chart))
    throw DegenerateChart("trace: an image point is too close to the chart's hyperplane at infinity");
  for (auto* set : {&w0, &wp, &wm, &w2}) dehomogenize(*set, chart);

  TraceReport rep = assemble_trace(w0, wp, wm, fibers.t1, digits);
  rep.t1_retries = fibers.t1_retries;
  if (!w2.empty()) {
    const MPVector s2 = sum(w2, m);
    const mpcomplex ratio = to_mp(*fibers.t2 / fibers.t1);
    MPVector d(m);
    for (std::size_t k = 0; k < m; ++k)
      d[k] = s2[k] - rep.w0[k] - ratio * (rep.w_plus[k] - rep.w0[k]);
    rep.affine_residual = norm2(d).convert_to<double>();
  }
  return rep;
}

TraceReport trace_test(const Hypersurface& f, const std::vector<CVector>& solutions,
                       const Pencil& pencil, const TraceOptions& opts) {
  Pencil p = pencil;
  Rng rng(opts.seed ^ 0x7ace7e57ULL);
  for (int redraw = 0;; ++redraw) {
    try {
      const auto fib = track_fibers(f, solutions, p, opts);
      auto rep = trace_from_fibers(f, fib, p, opts.digits, opts);
      rep.chart_retries = redraw;
      return rep;
    } catch (const DegenerateChart&) {
      if (redraw + 1 == kMaxDraws) throw;
      p = p.redraw(f, rng.next_seed(), opts.t1);
    }
  }
}

nlohmann::json TraceReport::to_json() const {
  nlohmann::json j = {{"t1", complex_to_json(t1)},
                      {"points", points},
                      {"solution_digits", solution_digits},
                      {"trace_norm", trace_norm},
                      {"scale", scale},
                      {"threshold", threshold},
                      {"verdict", pass ? "pass" : "fail"},
                      {"chart_retries", chart_retries},
                      {"t1_retries", t1_retries},
                      {"w0", mp_vector_json(w0)},
                      {"w_plus", mp_vector_json(w_plus)},
                      {"w_minus", mp_vector_json(w_minus)},
                      {"trace", mp_vector_json(trace)}};
  if (affine_residual) j["affine_residual"] = *affine_residual;
  return j;
}

}  // namespace orbitdeg
