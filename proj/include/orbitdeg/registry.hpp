#pragma once

#include "orbitdeg/types.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <vector>

namespace orbitdeg {

enum class RegistryMode {
  projective,  // points are rays; compared up to nonzero scaling
  affine,      // points compared in plain Euclidean distance
};

struct RegisteredSolution {
  CVector coords;  // canonical representative
  double residual = 0.0;
  double abs_det = 0.0;
  int loop = 0;  // monodromy loop of discovery (0 = start)
};

enum class InsertOutcome { inserted, duplicate };

/// Deduplicated solution set. Lookup goes through a sorted scalar key with a
/// conservative window, so queries never miss a stored point within the
/// tolerance.
class SolutionRegistry {
 public:
  using Refiner = std::function<CVector(std::span<const cdouble>)>;

  SolutionRegistry(std::size_t dim, double tolerance = 1e-6,
                   RegistryMode mode = RegistryMode::projective, std::uint64_t seed = 0x5eedULL);

  std::size_t dim() const { return dim_; }
  double tolerance() const { return tolerance_; }
  RegistryMode mode() const { return mode_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const RegisteredSolution& operator[](std::size_t i) const { return entries_[i]; }
  const std::vector<RegisteredSolution>& entries() const { return entries_; }

  /// Optional Newton refiner applied to both candidates of a near tie
  /// (distance within [1e-8, 1e-4]) before deciding.
  void set_refiner(Refiner refiner) { refiner_ = std::move(refiner); }

  InsertOutcome insert(std::span<const cdouble> point, double residual = 0.0, double abs_det = 0.0,
                       int loop = 0);
  std::optional<std::size_t> find(std::span<const cdouble> point) const;

  /// Distance used for deduplication: chordal distance between unit
  /// representatives minimized over phase (projective), or Euclidean (affine).
  double distance(std::span<const cdouble> a, std::span<const cdouble> b) const;

  /// Smallest pairwise distance among stored points, searched up to `radius`;
  /// returns `radius` when no pair is closer.
  double min_pairwise_distance(double radius) const;

  /// Max-abs entry rescaled to modulus 1, then the first entry of modulus
  /// >= 0.5 rotated to the positive real axis.
  static CVector canonicalize(std::span<const cdouble> point);

 private:
  struct Candidate {
    std::size_t index;
    double dist;
  };
  CVector comparison_form(std::span<const cdouble> point) const;
  double key(std::span<const cdouble> cmp) const;
  double window(double radius) const;
  std::optional<Candidate> nearest(std::span<const cdouble> cmp, double radius) const;
  double compare(std::span<const cdouble> a, std::span<const cdouble> b) const;

  std::size_t dim_;
  double tolerance_;
  RegistryMode mode_;
  std::vector<double> key_weights_re_;
  std::vector<double> key_weights_im_;
  std::vector<RegisteredSolution> entries_;
  std::vector<CVector> cmp_;  // unit-norm (projective) or raw (affine) copies
  std::multimap<double, std::size_t> index_;
  Refiner refiner_;
};

}  // namespace orbitdeg
