// orbitdeg: degree of the PGL(n)-orbit closure of a hypersurface.
//
//   orbitdeg <verb> --config run.json [--seed S] [--workers W] [--digits D]
//                   [--out DIR] [--budget B]
//
// verbs: sample, solve, certify, trace, degree, oracle.
// exit: 0 ok, 2 incomplete, 3 certification failure, 4 config error,
// 5 numerical failure.

#include "orbitdeg/pipeline.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

using namespace orbitdeg;
namespace fs = std::filesystem;

int main(int argc, char** argv) {
  CLI::App app{"Degrees of orbit closures of hypersurfaces by monodromy"};
  app.require_subcommand(1, 1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers, digits;
  std::optional<std::string> out;
  std::optional<std::uint64_t> budget;
  bool quiet = false;

  app.add_option("--config", config_path, "run configuration (JSON)")->required();
  app.add_option("--seed", seed, "master seed; stage seeds derive from it");
  app.add_option("--workers", workers, "worker threads (default: ORBITDEG_WORKERS or all cores)");
  app.add_option("--digits", digits, "refinement digits for certify and trace (>= 10)");
  app.add_option("--out", out, "output directory");
  app.add_option("--budget", budget, "maximum Bezout paths for the oracle");
  app.add_flag("-q,--quiet", quiet, "no progress output");

  const char* verbs[][2] = {
      {"sample", "draw the problem and start pair, report the Bezout count"},
      {"solve", "monodromy solve; writes solutions.jsonl"},
      {"certify", "alpha-certify and check distinctness of solutions.jsonl"},
      {"trace", "trace test on solutions.jsonl"},
      {"degree", "solve, certify, trace and report the degree"},
      {"oracle", "total-degree homotopy for cross-checking small instances"},
  };
  for (const auto& v : verbs) app.add_subcommand(v[0], v[1])->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }
  const std::string verb = app.get_subcommands().front()->get_name();

  RunConfig config;
  try {
    std::ifstream in(config_path);
    if (!in) throw ConfigError("cannot open " + config_path);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(config_path + ": " + e.what());
    }
    config = RunConfig::from_json(j, fs::path(config_path).parent_path());
    if (seed) {
      config.seed = *seed;
      config.derive_seeds();
    }
    if (workers) {
      if (*workers < 1) throw ConfigError("--workers must be positive");
      config.workers = static_cast<unsigned>(*workers);
    }
    if (digits) {
      if (*digits < 10) throw ConfigError("--digits must be at least 10");
      config.digits = *digits;
    }
    if (out) config.out = *out;
    if (budget) config.budget = *budget;
  } catch (const std::exception& e) {
    std::cerr << "orbitdeg: " << e.what() << "\n";
    return kExitConfig;
  }
  if (!quiet) config.progress = [](const std::string& line) { std::cerr << line << "\n"; };

  const RunReport rep = run_verb(verb, config);
  nlohmann::json summary = {{"verb", rep.verb}, {"status", rep.status}, {"exit_code", rep.exit_code}};
  if (rep.count) summary["count"] = *rep.count;
  if (rep.degree) summary["degree"] = *rep.degree;
  if (!rep.error.empty()) summary["error"] = rep.error;
  summary["report"] = RunPaths{config.out}.report().string();
  std::cout << summary.dump() << "\n";
  return rep.exit_code;
}
