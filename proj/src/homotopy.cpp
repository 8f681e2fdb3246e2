#include "orbitdeg/homotopy.hpp"

#include "orbitdeg/linalg.hpp"
#include "orbitdeg/parallel.hpp"
#include "orbitdeg/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace orbitdeg {

namespace {
constexpr double kNoiseFloor = 100.0;
// Largest relative correction ever accepted from a stalled corrector.
constexpr double kStallCap = 1e-6;
}  // namespace

StraightLineHomotopy::StraightLineHomotopy(std::shared_ptr<const SystemEvaluator> start,
                                           std::shared_ptr<const SystemEvaluator> target,
                                           cdouble gamma)
    : start_(std::move(start)), target_(std::move(target)), gamma_(gamma) {
  if (!start_ || !target_) throw std::invalid_argument("homotopy: null system");
  if (start_->num_vars() != target_->num_vars() ||
      start_->num_equations() != target_->num_equations())
    throw DimensionError("homotopy: start and target shapes differ");
}

void StraightLineHomotopy::evaluate(std::span<const cdouble> x, double s, std::span<cdouble> h,
                                    CMatrix* hx, std::span<cdouble> hs) const {
  const std::size_t m = num_equations(), n = num_vars();
  CVector g(m), f(m);
  CMatrix jg, jf;
  if (hx) {
    jg.resize(m, n);
    jf.resize(m, n);
  }
  start_->evaluate(x, g, hx ? &jg : nullptr);
  target_->evaluate(x, f, hx ? &jf : nullptr);
  const cdouble a = (1.0 - s) * gamma_;
  for (std::size_t i = 0; i < m; ++i) h[i] = a * g[i] + s * f[i];
  if (hx) {
    hx->resize(m, n);
    auto& out = hx->data();
    for (std::size_t k = 0; k < m * n; ++k) out[k] = a * jg.data()[k] + s * jf.data()[k];
  }
  if (!hs.empty())
    for (std::size_t i = 0; i < m; ++i) hs[i] = f[i] - gamma_ * g[i];
}

void TrackOptions::validate() const {
  if (!(min_step > 0 && min_step <= initial_step && initial_step <= max_step && max_step <= 1))
    throw std::invalid_argument("track options: need 0 < min_step <= initial_step <= max_step <= 1");
  if (!(corrector_tolerance > 0)) throw std::invalid_argument("track options: corrector tolerance");
  if (max_corrector_iters < 1 || max_steps < 1)
    throw std::invalid_argument("track options: iteration limits must be positive");
}

std::string to_string(PathStatus s) {
  switch (s) {
    case PathStatus::converged: return "converged";
    case PathStatus::diverged: return "diverged";
    case PathStatus::step_limit: return "step_limit";
    case PathStatus::corrector_failure: return "corrector_failure";
    case PathStatus::singular: return "singular";
  }
  return "unknown";
}

nlohmann::json PathResult::diagnostics() const {
  return {{"status", to_string(status)},     {"t", t_reached},
          {"steps", steps_taken},            {"newton_residual", final_residual},
          {"residual", function_residual},   {"condition", condition}};
}

namespace {

// Square tracking system: H plus, for projective homotopies, the chart row
// patch . x = 1.
class Tracker {
 public:
  Tracker(const Homotopy& h, CVector patch)
      : h_(h), proj_(h.projective()), patch_(std::move(patch)), m_(h.num_equations()),
        n_(h.num_vars()), val_(m_), hs_(m_) {}

  bool projective() const { return proj_; }
  CVector& patch() { return patch_; }

  // Tangent dx/ds at (x, s); false if the Jacobian is singular.
  bool tangent(std::span<const cdouble> x, double s, CVector& v) {
    h_.evaluate(x, s, val_, &hx_, hs_);
    assemble();
    if (!lu_.factor(a_)) return false;
    v.assign(n_, 0.0);
    for (std::size_t i = 0; i < m_; ++i) v[i] = -hs_[i];
    lu_.solve_in_place(v);
    return finite(v);
  }

  // One Newton step in place; returns the correction norm (inf on failure).
  double newton(CVector& x, double s) {
    h_.evaluate(x, s, val_, &hx_, {});
    assemble();
    if (!lu_.factor(a_)) return std::numeric_limits<double>::infinity();
    CVector r(n_);
    for (std::size_t i = 0; i < m_; ++i) r[i] = -val_[i];
    if (proj_) {
      cdouble lx = 0.0;
      for (std::size_t j = 0; j < n_; ++j) lx += patch_[j] * x[j];
      r[m_] = 1.0 - lx;
    }
    lu_.solve_in_place(r);
    if (!finite(r)) return std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n_; ++j) x[j] += r[j];
    return norm2(r);
  }

  double residual(std::span<const cdouble> x, double s) {
    h_.evaluate(x, s, val_, nullptr, {});
    return norm2(val_);
  }

  // Condition number of the square Jacobian at (x, s); projective points use
  // the chart conj(x)/|x| so the value does not depend on the tracking chart.
  double condition(std::span<const cdouble> x, double s) {
    h_.evaluate(x, s, val_, &hx_, {});
    if (proj_) {
      CVector saved = patch_;
      const double nx = norm2(x);
      for (std::size_t j = 0; j < n_; ++j) patch_[j] = std::conj(x[j]) / nx;
      assemble();
      patch_ = std::move(saved);
    } else {
      assemble();
    }
    return condition_number(a_);
  }

  static bool finite(const CVector& v) {
    for (const auto& z : v)
      if (!std::isfinite(z.real()) || !std::isfinite(z.imag())) return false;
    return true;
  }

 private:
  void assemble() {
    a_.resize(n_, n_);
    for (std::size_t i = 0; i < m_; ++i)
      for (std::size_t j = 0; j < n_; ++j) a_(i, j) = hx_(i, j);
    if (proj_)
      for (std::size_t j = 0; j < n_; ++j) a_(m_, j) = patch_[j];
  }

  const Homotopy& h_;
  bool proj_;
  CVector patch_;
  std::size_t m_, n_;
  CVector val_, hs_;
  CMatrix hx_, a_;
  LU<cdouble> lu_;
};

void axpy(CVector& out, const CVector& x, double a, const CVector& v) {
  for (std::size_t j = 0; j < x.size(); ++j) out[j] = x[j] + a * v[j];
}

}  // namespace

PathResult track(const Homotopy& h, std::span<const cdouble> x0, const TrackOptions& opts,
                 std::span<const cdouble> patch) {
  opts.validate();
  const std::size_t n = h.num_vars();
  if (x0.size() != n) throw DimensionError("track: start point has wrong dimension");
  if (h.num_equations() != n && !h.projective())
    throw DimensionError("track: homotopy is neither square nor projective");

  CVector x(x0.begin(), x0.end());
  CVector chart;
  if (h.projective()) {
    if (!patch.empty()) {
      if (patch.size() != n) throw DimensionError("track: patch has wrong dimension");
      chart.assign(patch.begin(), patch.end());
    } else {
      chart.resize(n);
      for (std::size_t j = 0; j < n; ++j) chart[j] = std::conj(x[j]);
    }
    cdouble lx = 0.0;
    for (std::size_t j = 0; j < n; ++j) lx += chart[j] * x[j];
    if (std::abs(lx) == 0.0) throw NumericalError("track: start point lies off the patch");
    for (auto& z : x) z /= lx;
  }
  Tracker tr(h, std::move(chart));

  PathResult res;
  double s = 0.0;
  double step = opts.initial_step;
  int successes = 0;
  CVector k1, k2, k3, k4, tmp(n), xp(n);
  const auto fail = [&](PathStatus st) {
    res.status = st;
    res.t_reached = s;
    res.endpoint = x;
    return res;
  };

  while (s < 1.0) {
    if (res.steps_taken >= opts.max_steps) return fail(PathStatus::step_limit);
    ++res.steps_taken;
    const double hstep = std::min(step, 1.0 - s);
    const double s1 = (hstep == 1.0 - s) ? 1.0 : s + hstep;

    bool ok = tr.tangent(x, s, k1);
    if (ok) {
      axpy(tmp, x, 0.5 * hstep, k1);
      ok = tr.tangent(tmp, s + 0.5 * hstep, k2);
    }
    if (ok) {
      axpy(tmp, x, 0.5 * hstep, k2);
      ok = tr.tangent(tmp, s + 0.5 * hstep, k3);
    }
    if (ok) {
      axpy(tmp, x, hstep, k3);
      ok = tr.tangent(tmp, s1, k4);
    }
    bool converged = false;
    if (ok) {
      for (std::size_t j = 0; j < n; ++j)
        xp[j] = x[j] + (hstep / 6.0) * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
      double prev = std::numeric_limits<double>::infinity();
      for (int it = 0; it < opts.max_corrector_iters; ++it) {
        const double dx = tr.newton(xp, s1);
        if (!std::isfinite(dx)) break;
        const double scale = std::max(1.0, norm2(xp));
        if (it > 0 && dx > 0.5 * prev) {
          // Stalling at roundoff level is accepted, where the level grows with
          // the condition number; above it a non-contracting corrector
          // signals a path jump.
          double floor = kNoiseFloor * opts.corrector_tolerance;
          if (dx > floor * scale && dx <= kStallCap * scale) {
            const double kappa = tr.condition(xp, s1);
            floor = std::max(floor, kNoiseFloor * kappa * std::numeric_limits<double>::epsilon());
          }
          if (dx <= std::min(floor, kStallCap) * scale) {
            res.final_residual = dx / scale;
            converged = true;
          }
          if (converged || dx > opts.corrector_tolerance * scale) break;
        }
        prev = dx;
        res.final_residual = dx / scale;
        if (dx <= opts.corrector_tolerance * scale) {
          converged = true;
          break;
        }
      }
    }

    if (!converged) {
      successes = 0;
      step *= 0.5;
      if (step < opts.min_step) {
        res.condition = tr.condition(x, s);
        return fail(s > 0.9 && res.condition > opts.singular_condition
                        ? PathStatus::singular
                        : PathStatus::corrector_failure);
      }
      continue;
    }

    x = xp;
    s = s1;
    if (++successes >= 3) {
      step = std::min(step * 1.5, opts.max_step);
      successes = 0;
    }

    if (tr.projective()) {
      const double nx = norm2(x);
      if (nx > opts.repatch_norm) {
        for (auto& z : x) z /= nx;
        for (std::size_t j = 0; j < n; ++j) tr.patch()[j] = std::conj(x[j]);
      }
    } else if (max_abs(std::span<const cdouble>(x)) > opts.divergence_norm) {
      return fail(PathStatus::diverged);
    }
  }

  // polish at s = 1
  for (int it = 0; it < 5; ++it) {
    const double dx = tr.newton(x, 1.0);
    if (!std::isfinite(dx)) break;
    res.final_residual = dx / std::max(1.0, norm2(x));
    if (res.final_residual < 1e-15) break;
  }
  res.t_reached = 1.0;
  if (tr.projective()) {
    const double nx = norm2(x);
    for (auto& z : x) z /= nx;
  }
  res.endpoint = x;
  res.function_residual = tr.residual(x, 1.0);
  res.condition = tr.condition(x, 1.0);
  res.status = res.condition > opts.singular_condition ? PathStatus::singular
               : Tracker::finite(x)                    ? PathStatus::converged
                                                       : PathStatus::diverged;
  if (!tr.projective() && res.status == PathStatus::converged &&
      max_abs(std::span<const cdouble>(x)) > opts.divergence_norm)
    res.status = PathStatus::diverged;
  return res;
}

TotalDegreeStart::TotalDegreeStart(std::vector<int> degrees, CVector constants)
    : degrees_(std::move(degrees)), constants_(std::move(constants)) {
  if (degrees_.size() != constants_.size())
    throw DimensionError("total degree start: degrees and constants differ in length");
  roots_.resize(degrees_.size());
  for (std::size_t i = 0; i < degrees_.size(); ++i) {
    const int d = degrees_[i];
    if (d < 1) throw std::invalid_argument("total degree start: degrees must be positive");
    if (constants_[i] == 0.0) throw std::invalid_argument("total degree start: zero constant");
    if (count_ > std::numeric_limits<std::uint64_t>::max() / static_cast<std::uint64_t>(d))
      throw std::overflow_error("total degree start: Bezout number overflows");
    count_ *= static_cast<std::uint64_t>(d);
    const double r = std::pow(std::abs(constants_[i]), 1.0 / d);
    const double a = std::arg(constants_[i]) / d;
    for (int k = 0; k < d; ++k) roots_[i].push_back(std::polar(r, a + 2.0 * M_PI * k / d));
  }
}

CVector TotalDegreeStart::start(std::uint64_t index) const {
  if (index >= count_) throw std::out_of_range("total degree start: index out of range");
  CVector x(degrees_.size());
  for (std::size_t i = 0; i < degrees_.size(); ++i) {
    const auto d = static_cast<std::uint64_t>(degrees_[i]);
    x[i] = roots_[i][index % d];
    index /= d;
  }
  return x;
}

template <class S>
void TotalDegreeStart::evaluate_impl(std::span<const S> x, std::span<S> values,
                                     Matrix<S>* jacobian) const {
  const std::size_t n = degrees_.size();
  if (x.size() != n || values.size() != n) throw DimensionError("total degree start: dimension");
  if (jacobian) jacobian->resize(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    S p(1);
    for (int k = 1; k < degrees_[i]; ++k) p *= x[i];
    values[i] = p * x[i] - convert<S>(constants_[i]);
    if (jacobian) (*jacobian)(i, i) = p * real_t<S>(degrees_[i]);
  }
}

void TotalDegreeStart::evaluate(std::span<const cdouble> x, std::span<cdouble> values,
                                CMatrix* jacobian) const {
  evaluate_impl(x, values, jacobian);
}

void TotalDegreeStart::evaluate(std::span<const mpcomplex> x, std::span<mpcomplex> values,
                                MPMatrix* jacobian) const {
  evaluate_impl(x, values, jacobian);
}

double TotalDegreeStart::weyl_norm() const {
  double s = 0.0;
  for (const auto& c : constants_) s += 1.0 + std::norm(c);
  return std::sqrt(s);
}

TotalDegreeStart total_degree_start(const PolySystem& f, std::uint64_t seed) {
  if (!f.is_square()) throw DimensionError("total degree start: system is not square");
  return total_degree_start(CompiledSystem(f), seed);
}

TotalDegreeStart total_degree_start(const SystemEvaluator& f, std::uint64_t seed) {
  if (f.num_equations() != f.num_vars())
    throw DimensionError("total degree start: system is not square");
  Rng rng(seed);
  CVector c(f.num_equations());
  for (auto& z : c) z = rng.unit_complex();
  return TotalDegreeStart(f.degrees(), std::move(c));
}

TotalDegreeResult solve_total_degree(const PolySystem& f, const TotalDegreeOptions& opts) {
  if (!f.is_square()) throw DimensionError("total degree start: system is not square");
  return solve_total_degree(std::make_shared<CompiledSystem>(f), opts);
}

TotalDegreeResult solve_total_degree(std::shared_ptr<const SystemEvaluator> target,
                                     const TotalDegreeOptions& opts) {
  opts.track.validate();
  const SystemEvaluator& f = *target;
  Rng rng(opts.seed);
  auto start = std::make_shared<TotalDegreeStart>(total_degree_start(f, rng.next_seed()));
  if (start->count() > opts.budget)
    throw BudgetExceeded("total degree: " + std::to_string(start->count()) +
                         " paths exceed the budget of " + std::to_string(opts.budget));
  const cdouble gamma = rng.unit_complex();
  StraightLineHomotopy h(start, target, gamma);

  TotalDegreeResult out{SolutionRegistry(f.num_equations(), opts.dedup_tolerance,
                                         RegistryMode::affine, rng.next_seed()),
                        0, 0, 0, 0, 0, gamma};
  constexpr std::uint64_t kBlock = 4096;
  std::vector<PathResult> block;
  for (std::uint64_t first = 0; first < start->count(); first += kBlock) {
    const std::uint64_t len = std::min(kBlock, start->count() - first);
    block.assign(len, PathResult{});
    parallel_for(len, opts.workers, [&](std::size_t i) {
      CVector x0 = start->start(first + i);
      block[i] = track(h, x0, opts.track);
    });
    for (const auto& r : block) {
      ++out.paths;
      switch (r.status) {
        case PathStatus::converged: {
          ++out.converged;
          const CMatrix j = target->jacobian(r.endpoint);
          out.solutions.insert(r.endpoint, r.function_residual, std::abs(determinant(j)));
          break;
        }
        case PathStatus::diverged: ++out.diverged; break;
        case PathStatus::singular: ++out.singular; break;
        default: ++out.failed; break;
      }
    }
  }
  return out;
}

}  // namespace orbitdeg
