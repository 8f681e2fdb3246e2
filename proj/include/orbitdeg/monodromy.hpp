#pragma once

#include "orbitdeg/homotopy.hpp"
#include "orbitdeg/orbit.hpp"
#include "orbitdeg/registry.hpp"

#include <json.hpp>

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>

namespace orbitdeg {

/// The point system f(phi p_i) = 0, i < n^2 - 1, with every coordinate of
/// every point treated as a parameter.
class ParameterFamily {
 public:
  explicit ParameterFamily(Hypersurface f);

  const Hypersurface& hypersurface() const { return f_; }
  const std::shared_ptr<const OrbitStructure>& structure() const { return s_; }
  int n() const { return f_.n(); }
  std::size_t num_vars() const { return static_cast<std::size_t>(n() * n()); }
  std::size_t num_parameters() const { return s_->num_points() * static_cast<std::size_t>(n()); }

  OrbitSystem instantiate(const CVector& q, std::optional<AffinePatch> patch = std::nullopt) const;

  /// Fresh parameter point with i.i.d. complex normal coordinates.
  CVector random_parameters(Rng& rng) const;

 private:
  Hypersurface f_;
  std::shared_ptr<const OrbitStructure> s_;
};

/// One triangle q0 -> q1 -> q2 -> q0.
struct Loop {
  int index = 0;
  CVector q1, q2;
  /// Affine chart for the tracker on this loop.
  CVector patch;
};

/// Draws the loops of a run from a single seed.
class LoopSchedule {
 public:
  LoopSchedule(const ParameterFamily& family, CVector base, std::uint64_t seed);

  const CVector& base() const { return base_; }
  Loop next();
  int loops_drawn() const { return counter_; }

 private:
  const ParameterFamily* family_;
  CVector base_;
  Rng rng_;
  int counter_ = 0;
};

struct StoppingRule {
  int stall_loops = 5;
  int max_loops = 200;
  std::optional<std::size_t> target_count;

  void validate() const;
};

struct LoopStats {
  int loop = 0;
  std::size_t tracked = 0;
  std::size_t failures = 0;
  std::size_t collisions = 0;
  std::size_t new_solutions = 0;
  std::size_t registry_size = 0;
  double seconds = 0.0;
};

struct MonodromyOptions {
  TrackOptions track;
  StoppingRule rule;
  std::uint64_t seed = 1;
  unsigned workers = 1;
  double dedup_tolerance = 1e-6;
  /// Endpoints must satisfy the base system to this residual (unit norm).
  double residual_tolerance = 1e-8;
  /// A loop aborts the run once more than this fraction of its paths fail,
  /// provided at least min_paths_for_abort were tracked.
  double failure_abort = 0.01;
  std::size_t min_paths_for_abort = 100;
  /// Called after every loop.
  std::function<void(const LoopStats&)> on_loop;
};

class MonodromyAbort : public NumericalError {
 public:
  MonodromyAbort(const std::string& what, LoopStats stats)
      : NumericalError(what), stats_(stats) {}
  const LoopStats& stats() const { return stats_; }

 private:
  LoopStats stats_;
};

/// Registry for solutions of a family: projective in n^2 coordinates with a
/// Newton refiner at the base parameters.
SolutionRegistry make_registry(const ParameterFamily& family, const CVector& base,
                               double tolerance);

/// Tracks each registered solution around the loop, then the new ones, until
/// the loop adds nothing. Path failures are skipped. Two sources landing on the
/// same endpoint are retracked with smaller steps and dropped if they still
/// collide. Returns the number of new solutions; throws MonodromyAbort when the
/// failure rate exceeds the configured bound.
std::size_t run_loop(SolutionRegistry& registry, const ParameterFamily& family, const CVector& base,
                     const Loop& loop, const MonodromyOptions& opts, LoopStats* stats = nullptr);

/// Endpoint of one solution tracked around a loop (all three segments).
PathResult track_loop(const ParameterFamily& family, const CVector& base, const Loop& loop,
                      std::span<const cdouble> x0, const TrackOptions& opts);

struct MonodromyReport {
  SolutionRegistry registry;
  int loops = 0;
  std::string stop_reason;  // target_reached, stalled, max_loops, path_failures
  bool complete = false;    // false when a target was given and not reached, or on abort
  std::size_t path_failures = 0;
  std::uint64_t seed = 0;
  std::vector<LoopStats> history;
  std::string diagnostics;

  nlohmann::json to_json() const;
};

/// Runs loops from the start pair until the stopping rule fires. A stall
/// without reaching a supplied target gives complete = false; a failure-rate
/// abort is reported with stop_reason "path_failures".
MonodromyReport monodromy_solve(const ParameterFamily& family, const StartPair& start,
                                const MonodromyOptions& opts);

/// One JSON object per line: {"coords", "residual", "abs_det"}.
void write_solutions_jsonl(std::ostream& out, const SolutionRegistry& registry);
std::vector<RegisteredSolution> read_solutions_jsonl(std::istream& in);

}  // namespace orbitdeg
