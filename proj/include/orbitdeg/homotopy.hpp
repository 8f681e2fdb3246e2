#pragma once

#include "orbitdeg/polysys.hpp"
#include "orbitdeg/registry.hpp"

#include <json.hpp>

#include <cstdint>
#include <iterator>
#include <memory>
#include <string>

namespace orbitdeg {

/// H(x, s) for s in [0, 1] with H(., 0) the start and H(., 1) the target
/// system. Projective homotopies have one equation fewer than unknowns and are
/// tracked in an affine patch owned by the tracker.
class Homotopy {
 public:
  virtual ~Homotopy() = default;
  virtual std::size_t num_vars() const = 0;
  virtual std::size_t num_equations() const = 0;
  bool projective() const { return num_equations() + 1 == num_vars(); }

  /// Fills H(x, s), dH/dx (when hx is non-null) and dH/ds (when hs is
  /// non-empty).
  virtual void evaluate(std::span<const cdouble> x, double s, std::span<cdouble> h, CMatrix* hx,
                        std::span<cdouble> hs) const = 0;
};

/// (1 - s) gamma G + s F.
class StraightLineHomotopy final : public Homotopy {
 public:
  StraightLineHomotopy(std::shared_ptr<const SystemEvaluator> start,
                       std::shared_ptr<const SystemEvaluator> target, cdouble gamma);

  std::size_t num_vars() const override { return target_->num_vars(); }
  std::size_t num_equations() const override { return target_->num_equations(); }
  void evaluate(std::span<const cdouble> x, double s, std::span<cdouble> h, CMatrix* hx,
                std::span<cdouble> hs) const override;
  cdouble gamma() const { return gamma_; }

 private:
  std::shared_ptr<const SystemEvaluator> start_;
  std::shared_ptr<const SystemEvaluator> target_;
  cdouble gamma_;
};

struct TrackOptions {
  double initial_step = 0.05;
  double min_step = 1e-9;
  double max_step = 0.1;
  double corrector_tolerance = 1e-10;
  int max_corrector_iters = 3;
  int max_steps = 20000;
  /// Affine tracking declares divergence past this coordinate magnitude.
  double divergence_norm = 1e14;
  /// Projective tracking re-patches once the representative exceeds this norm.
  double repatch_norm = 1e4;
  /// Endpoints whose Jacobian condition number exceeds this are singular.
  double singular_condition = 1e10;

  /// Throws std::invalid_argument unless 0 < min <= initial <= max <= 1.
  void validate() const;
};

enum class PathStatus { converged, diverged, step_limit, corrector_failure, singular };

std::string to_string(PathStatus s);

struct PathResult {
  PathStatus status = PathStatus::corrector_failure;
  CVector endpoint;
  double t_reached = 0.0;
  /// Norm of the last Newton correction, relative to max(1, |x|).
  double final_residual = 0.0;
  /// |H(x, 1)| at the returned representative (unit norm when projective).
  double function_residual = 0.0;
  double condition = 0.0;
  int steps_taken = 0;

  bool ok() const { return status == PathStatus::converged; }
  nlohmann::json diagnostics() const;
};

/// Follows the solution path of H from x0 at s = 0 to s = 1: RK4 predictor on
/// dx/ds = -(dH/dx)^{-1} dH/ds, Newton corrector, step halved on corrector
/// failure and grown by 1.5 after three consecutive successes. `patch` fixes
/// the affine chart for projective homotopies (defaults to conj(x0)).
PathResult track(const Homotopy& h, std::span<const cdouble> x0, const TrackOptions& opts,
                 std::span<const cdouble> patch = {});

/// G_i(x) = x_i^{d_i} - r_i with its prod d_i solutions enumerated lazily.
class TotalDegreeStart final : public SystemEvaluator {
 public:
  TotalDegreeStart(std::vector<int> degrees, CVector constants);

  std::size_t num_equations() const override { return degrees_.size(); }
  std::size_t num_vars() const override { return degrees_.size(); }
  void evaluate(std::span<const cdouble> x, std::span<cdouble> values,
                CMatrix* jacobian) const override;
  void evaluate(std::span<const mpcomplex> x, std::span<mpcomplex> values,
                MPMatrix* jacobian) const override;
  std::vector<int> degrees() const override { return degrees_; }
  double weyl_norm() const override;
  using SystemEvaluator::evaluate;

  const CVector& constants() const { return constants_; }

  /// Bezout number prod d_i.
  std::uint64_t count() const { return count_; }
  /// The index-th start solution (mixed-radix digits pick the roots).
  CVector start(std::uint64_t index) const;

  class iterator {
   public:
    using iterator_category = std::input_iterator_tag;
    using value_type = CVector;
    using difference_type = std::ptrdiff_t;
    using pointer = void;
    using reference = CVector;
    iterator(const TotalDegreeStart* owner, std::uint64_t index) : owner_(owner), index_(index) {}
    CVector operator*() const { return owner_->start(index_); }
    iterator& operator++() {
      ++index_;
      return *this;
    }
    bool operator==(const iterator& o) const { return index_ == o.index_; }
    std::uint64_t index() const { return index_; }

   private:
    const TotalDegreeStart* owner_;
    std::uint64_t index_;
  };
  iterator begin() const { return {this, 0}; }
  iterator end() const { return {this, count_}; }

 private:
  template <class S>
  void evaluate_impl(std::span<const S> x, std::span<S> values, Matrix<S>* jacobian) const;

  std::vector<int> degrees_;
  CVector constants_;
  std::vector<CVector> roots_;  // d_i-th roots of r_i
  std::uint64_t count_ = 1;
};

/// Start system for a square system F with random unit-modulus constants.
TotalDegreeStart total_degree_start(const PolySystem& f, std::uint64_t seed);
TotalDegreeStart total_degree_start(const SystemEvaluator& f, std::uint64_t seed);

class BudgetExceeded : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TotalDegreeOptions {
  TrackOptions track;
  std::uint64_t budget = 1000000;
  std::uint64_t seed = 1;
  unsigned workers = 1;
  double dedup_tolerance = 1e-6;
};

struct TotalDegreeResult {
  SolutionRegistry solutions;
  std::uint64_t paths = 0;
  std::uint64_t converged = 0;
  std::uint64_t diverged = 0;
  std::uint64_t singular = 0;
  std::uint64_t failed = 0;
  cdouble gamma;
};

/// Tracks all Bezout paths of the gamma-weighted straight-line homotopy from
/// the total-degree start system; keeps converged, nonsingular endpoints with
/// residual within tolerance, deduplicated in affine coordinates.
TotalDegreeResult solve_total_degree(const PolySystem& f, const TotalDegreeOptions& opts);
/// Same for any square evaluator, e.g. a structured orbit system with patch.
TotalDegreeResult solve_total_degree(std::shared_ptr<const SystemEvaluator> target,
                                     const TotalDegreeOptions& opts);

}  // namespace orbitdeg
