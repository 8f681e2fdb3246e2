#include "orbitdeg/registry.hpp"

#include "orbitdeg/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace orbitdeg {

SolutionRegistry::SolutionRegistry(std::size_t dim, double tolerance, RegistryMode mode,
                                   std::uint64_t seed)
    : dim_(dim), tolerance_(tolerance), mode_(mode) {
  Rng rng(seed);
  key_weights_re_.resize(dim);
  key_weights_im_.resize(dim);
  double s = 0.0;
  for (std::size_t k = 0; k < dim; ++k) {
    key_weights_re_[k] = rng.normal();
    key_weights_im_[k] = rng.normal();
    s += key_weights_re_[k] * key_weights_re_[k] + key_weights_im_[k] * key_weights_im_[k];
  }
  s = std::sqrt(s);
  for (std::size_t k = 0; k < dim; ++k) {
    key_weights_re_[k] /= s;
    key_weights_im_[k] /= s;
  }
}

CVector SolutionRegistry::canonicalize(std::span<const cdouble> point) {
  CVector v(point.begin(), point.end());
  double m = 0.0;
  for (const auto& z : v) m = std::max(m, std::abs(z));
  if (m == 0.0) return v;
  for (auto& z : v) z /= m;
  for (const auto& z : v) {
    if (std::abs(z) >= 0.5) {
      const cdouble phase = std::conj(z) / std::abs(z);
      for (auto& w : v) w *= phase;
      break;
    }
  }
  return v;
}

CVector SolutionRegistry::comparison_form(std::span<const cdouble> point) const {
  CVector v(point.begin(), point.end());
  if (mode_ == RegistryMode::projective) {
    const double n = norm2(v);
    for (auto& z : v) z /= n;
  }
  return v;
}

// Projective keys use |u_k|^2 so they are phase invariant; for unit vectors
// at chordal distance r the key moves by at most 2 sqrt(dim) r.
double SolutionRegistry::key(std::span<const cdouble> cmp) const {
  double k = 0.0;
  if (mode_ == RegistryMode::projective) {
    for (std::size_t i = 0; i < dim_; ++i) k += key_weights_re_[i] * std::norm(cmp[i]);
  } else {
    for (std::size_t i = 0; i < dim_; ++i)
      k += key_weights_re_[i] * cmp[i].real() - key_weights_im_[i] * cmp[i].imag();
  }
  return k;
}

double SolutionRegistry::window(double radius) const {
  if (mode_ == RegistryMode::projective) return 2.0 * std::sqrt(static_cast<double>(dim_)) * radius;
  return radius;
}

double SolutionRegistry::compare(std::span<const cdouble> a, std::span<const cdouble> b) const {
  double s = 0.0;
  if (mode_ == RegistryMode::projective) {
    // ||a - e^{i theta} b|| at the optimal phase
    cdouble inner = 0.0;
    for (std::size_t i = 0; i < dim_; ++i) inner += std::conj(b[i]) * a[i];
    const double m = std::abs(inner);
    const cdouble phase = m > 0 ? inner / m : cdouble(1.0);
    for (std::size_t i = 0; i < dim_; ++i) s += std::norm(a[i] - phase * b[i]);
  } else {
    for (std::size_t i = 0; i < dim_; ++i) s += std::norm(a[i] - b[i]);
  }
  return std::sqrt(s);
}

double SolutionRegistry::distance(std::span<const cdouble> a, std::span<const cdouble> b) const {
  if (a.size() != dim_ || b.size() != dim_) throw DimensionError("registry: dimension mismatch");
  return compare(comparison_form(a), comparison_form(b));
}

std::optional<SolutionRegistry::Candidate> SolutionRegistry::nearest(std::span<const cdouble> cmp,
                                                                     double radius) const {
  const double k = key(cmp);
  const double w = window(radius);
  std::optional<Candidate> best;
  for (auto it = index_.lower_bound(k - w); it != index_.end() && it->first <= k + w; ++it) {
    const double d = compare(cmp_[it->second], cmp);
    if (d <= radius && (!best || d < best->dist)) best = Candidate{it->second, d};
  }
  return best;
}

std::optional<std::size_t> SolutionRegistry::find(std::span<const cdouble> point) const {
  if (point.size() != dim_) throw DimensionError("registry: dimension mismatch");
  auto c = nearest(comparison_form(point), tolerance_);
  if (c) return c->index;
  return std::nullopt;
}

InsertOutcome SolutionRegistry::insert(std::span<const cdouble> point, double residual,
                                       double abs_det, int loop) {
  if (point.size() != dim_) throw DimensionError("registry: dimension mismatch");
  for (const auto& z : point)
    if (!std::isfinite(z.real()) || !std::isfinite(z.imag()))
      throw std::invalid_argument("registry: non-finite coordinates");

  CVector pt(point.begin(), point.end());
  if (mode_ == RegistryMode::projective && norm2(pt) == 0.0)
    throw std::invalid_argument("registry: zero vector is not a projective point");
  CVector cmp = comparison_form(pt);

  constexpr double kTieLow = 1e-8, kTieHigh = 1e-4;
  auto best = nearest(cmp, refiner_ ? std::max(tolerance_, kTieHigh) : tolerance_);
  if (best) {
    if (refiner_ && best->dist >= kTieLow) {
      CVector a = refiner_(pt);
      CVector b = refiner_(entries_[best->index].coords);
      if (compare(comparison_form(a), comparison_form(b)) <= tolerance_)
        return InsertOutcome::duplicate;
      pt = std::move(a);
      cmp = comparison_form(pt);
      if (nearest(cmp, tolerance_)) return InsertOutcome::duplicate;
    } else if (best->dist <= tolerance_) {
      return InsertOutcome::duplicate;
    }
  }

  RegisteredSolution sol;
  sol.coords = mode_ == RegistryMode::projective ? canonicalize(pt) : pt;
  sol.residual = residual;
  sol.abs_det = abs_det;
  sol.loop = loop;
  index_.emplace(key(cmp), entries_.size());
  entries_.push_back(std::move(sol));
  cmp_.push_back(std::move(cmp));
  return InsertOutcome::inserted;
}

double SolutionRegistry::min_pairwise_distance(double radius) const {
  double best = radius;
  const double w = window(radius);
  for (auto it = index_.begin(); it != index_.end(); ++it) {
    for (auto jt = std::next(it); jt != index_.end() && jt->first - it->first <= w; ++jt)
      best = std::min(best, compare(cmp_[it->second], cmp_[jt->second]));
  }
  return best;
}

}  // namespace orbitdeg
