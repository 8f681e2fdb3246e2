#pragma once

#include "orbitdeg/homotopy.hpp"
#include "orbitdeg/orbit.hpp"

#include <json.hpp>

#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

namespace orbitdeg {

/// Slices L + t e_row l' of the coefficient space. The base rows are carried
/// structurally (weights on points), the direction l' = sum_k w'_k nu(q'_k)
/// through extra random points.
struct Pencil {
  LinearSlice base;
  std::size_t row = 0;
  CVector direction;  // l', width C(n+d-1, d)
  std::shared_ptr<const OrbitStructure> structure;
  CVector points;  // base points followed by the direction points

  /// Explicit slice matrix at t.
  LinearSlice at(cdouble t) const;
  /// Same base, fresh direction.
  Pencil redraw(const Hypersurface& f, std::uint64_t seed, cdouble t1 = 1.0) const;
  /// Square system at t with the given patch.
  OrbitSystem system(cdouble t, std::optional<AffinePatch> patch = std::nullopt) const;
};

/// Pencil through the Veronese slice of config: at t = 0 its system is the
/// point system of config, so monodromy solutions are its fiber. The moving
/// row is the last one. Redraws the direction until the slice has full rank
/// at t in {0, t1, -t1}.
Pencil build_pencil(const Hypersurface& f, const PointConfig& config, std::uint64_t seed,
                    cdouble t1 = 1.0);

/// Same for an arbitrary full-rank slice (represented by interpolation).
Pencil build_pencil(const Hypersurface& f, const LinearSlice& slice, std::uint64_t seed,
                    cdouble t1 = 1.0);

/// scale * 10^(6 - digits); throws for digits < 10.
double trace_threshold(int digits, double scale);

struct TraceOptions {
  cdouble t1 = 1.0;
  /// Used once if a path fails at t1.
  cdouble retry_t1{0.37, 0.41};
  int digits = 30;
  unsigned workers = 1;
  std::uint64_t seed = 1;
  TrackOptions track;
  /// Also track to t2 and compare w(t2) with the affine interpolation of
  /// w(0), w(t1).
  std::optional<cdouble> t2;
};

/// Fibers of the pencil at t = 0, +t1, -t1 (and t2), index-aligned, on one
/// affine patch.
struct PencilFibers {
  cdouble t1;
  std::optional<cdouble> t2;
  AffinePatch patch;
  std::vector<CVector> at0, plus, minus, at2;
  int t1_retries = 0;

  std::size_t size() const { return at0.size(); }
  /// Copy without solution k.
  PencilFibers without(std::size_t k) const;
};

class TraceAbort : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// Some image point is (nearly) on the chart's hyperplane at infinity.
class DegenerateChart : public TraceAbort {
 public:
  using TraceAbort::TraceAbort;
};

/// Tracks every solution from t = 0 to +t1 and -t1 (binary64). Throws
/// TraceAbort when a path still fails at the retry value of t1.
PencilFibers track_fibers(const Hypersurface& f, const std::vector<CVector>& solutions,
                          const Pencil& pencil, const TraceOptions& opts);

struct TraceReport {
  cdouble t1;
  MPVector w0, w_plus, w_minus;
  MPVector trace;
  double trace_norm = 0.0;
  double scale = 0.0;
  int solution_digits = 0;
  double threshold = 0.0;
  bool pass = false;
  std::size_t points = 0;
  /// Pencil redraws forced by a degenerate chart.
  int chart_retries = 0;
  int t1_retries = 0;
  /// |w(t2) - w(0) - (t2/t1)(w(t1) - w(0))| when t2 was tracked.
  std::optional<double> affine_residual;

  nlohmann::json to_json() const;
};

/// Refines all fiber points to `digits`, maps them through theta, sums them
/// in the chart l' . theta = 1 of the coefficient space (where the pencil is a
/// parallel translation, so the full trace is affine in t) and forms
/// tr = (w+ - w0) - (w0 - w-). Pass iff |tr| <= trace_threshold(digits, scale)
/// with scale the sum of the chart images' norms at t = 0.
TraceReport trace_from_fibers(const Hypersurface& f, const PencilFibers& fibers,
                              const Pencil& pencil, int digits, const TraceOptions& opts);

/// track_fibers followed by trace_from_fibers at opts.digits. A degenerate
/// chart redraws the pencil direction and starts over.
TraceReport trace_test(const Hypersurface& f, const std::vector<CVector>& solutions,
                       const Pencil& pencil, const TraceOptions& opts);

/// Sums and trace from per-point chart images (already dehomogenized).
TraceReport assemble_trace(const std::vector<MPVector>& w0, const std::vector<MPVector>& plus,
                           const std::vector<MPVector>& minus, cdouble t1, int digits);

}  // namespace orbitdeg
