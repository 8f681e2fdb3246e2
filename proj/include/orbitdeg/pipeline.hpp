#pragma once

#include "orbitdeg/alpha.hpp"
#include "orbitdeg/monodromy.hpp"
#include "orbitdeg/tracetest.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>

namespace orbitdeg {

enum ExitCode : int {
  kExitOk = 0,
  kExitIncomplete = 2,
  kExitCertification = 3,
  kExitConfig = 4,
  kExitNumerical = 5,
};

/// Malformed or inconsistent configuration.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Per-stage seeds. Unset ones are derived from the master seed.
struct StageSeeds {
  std::uint64_t start = 0, monodromy = 0, certify = 0, pencil = 0, trace = 0, oracle = 0;
  nlohmann::json to_json() const;
};

struct RunConfig {
  /// Problem object as accepted by hypersurface_from_json.
  nlohmann::json problem;
  std::uint64_t seed = 1;
  StageSeeds seeds;
  StoppingRule rule;
  double dedup_tolerance = 1e-6;
  double failure_abort = 0.01;
  TrackOptions track;
  /// Refinement digits for certification and the trace test.
  int digits = 30;
  cdouble t1 = 1.0;
  std::optional<unsigned> workers;
  std::uint64_t budget = 10'000'000;
  std::filesystem::path out = "out";
  /// Explicit system for the oracle verb instead of the orbit point system:
  /// {"polys": [form, ...], "patch": {"coeffs", "rhs"}} (patch optional).
  std::optional<nlohmann::json> system;
  /// Progress lines (not serialized).
  std::function<void(const std::string&)> progress;

  /// Reads a config object. Relative paths ("problem" given as a file name)
  /// resolve against base_dir. Explicit "seeds" entries override derived ones.
  static RunConfig from_json(const nlohmann::json& j,
                             const std::filesystem::path& base_dir = ".");
  /// Resolved config (seeds, workers, tracker settings all explicit).
  nlohmann::json to_json() const;
  /// Recomputes the derived stage seeds from `seed`, keeping explicit ones.
  void derive_seeds();
  unsigned resolved_workers() const;

 private:
  nlohmann::json explicit_seeds_ = nlohmann::json::object();
};

/// Artifacts of a run in one output directory.
struct RunPaths {
  std::filesystem::path dir;
  std::filesystem::path problem() const { return dir / "problem.json"; }
  std::filesystem::path start() const { return dir / "start.json"; }
  std::filesystem::path solutions() const { return dir / "solutions.jsonl"; }
  std::filesystem::path certificates() const { return dir / "certificates.jsonl"; }
  std::filesystem::path trace() const { return dir / "trace.json"; }
  std::filesystem::path report() const { return dir / "report.json"; }
};

/// Report of one verb. Timings are kept apart so that reports of identical
/// runs compare equal once "timings" is dropped.
struct RunReport {
  std::string verb;
  nlohmann::json config;
  nlohmann::json stages = nlohmann::json::object();
  nlohmann::json timings = nlohmann::json::object();
  std::optional<std::size_t> count;
  int stabilizer_order = 1;
  std::optional<long long> degree;
  std::string status = "ok";
  int exit_code = kExitOk;
  std::string error;

  nlohmann::json to_json() const;
  /// to_json() without the timings.
  nlohmann::json deterministic_json() const;
};

/// The pipeline verbs. Each writes its artifacts under config.out and returns
/// the report (also written as report.json). Numerical and config errors
/// propagate; run_verb maps them to exit codes.
RunReport cmd_sample(const RunConfig& config);
RunReport cmd_solve(const RunConfig& config);
RunReport cmd_certify(const RunConfig& config);
RunReport cmd_trace(const RunConfig& config);
RunReport cmd_degree(const RunConfig& config);
RunReport cmd_oracle(const RunConfig& config);

/// Dispatches by name and converts exceptions into a report with the stage
/// tag and exit code (4 for config errors, 5 for numerical failures).
RunReport run_verb(const std::string& verb, const RunConfig& config);

/// Start pair as stored in start.json.
nlohmann::json start_pair_to_json(const StartPair& sp);
StartPair start_pair_from_json(const nlohmann::json& j);

nlohmann::json track_options_to_json(const TrackOptions& t);
TrackOptions track_options_from_json(const nlohmann::json& j, TrackOptions base = {});

}  // namespace orbitdeg
