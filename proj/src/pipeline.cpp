#include "orbitdeg/pipeline.hpp"

#include "orbitdeg/parallel.hpp"

#include <chrono>
#include <fstream>
#include <sstream>

namespace orbitdeg {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Stage currently running, for error tags.
thread_local std::string g_stage;

const char* const kSeedNames[] = {"start", "monodromy", "certify", "pencil", "trace", "oracle"};

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t& seed_slot(StageSeeds& s, int k) {
  switch (k) {
    case 0: return s.start;
    case 1: return s.monodromy;
    case 2: return s.certify;
    case 3: return s.pencil;
    case 4: return s.trace;
    default: return s.oracle;
  }
}

void check_keys(const json& j, std::initializer_list<const char*> allowed, const char* what) {
  if (!j.is_object()) throw ConfigError(std::string(what) + ": expected an object");
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw ConfigError(std::string(what) + ": unknown key \"" + key + "\"");
  }
}

json read_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw ConfigError("cannot open " + p.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(p.string() + ": " + e.what());
  }
}

void write_json(const fs::path& p, const json& j) {
  std::ofstream out(p);
  if (!out) throw ConfigError("cannot write " + p.string());
  out << j.dump(2) << "\n";
}

template <class Fn>
auto stage(RunReport& rep, const char* name, Fn&& fn) {
  g_stage = name;
  const auto t0 = std::chrono::steady_clock::now();
  auto finish = [&] {
    rep.timings[name] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };
  if constexpr (std::is_void_v<decltype(fn())>) {
    fn();
    finish();
  } else {
    auto r = fn();
    finish();
    return r;
  }
}

void say(const RunConfig& c, const std::string& line) {
  if (c.progress) c.progress(line);
}

RunReport new_report(const char* verb, const RunConfig& c) {
  RunReport r;
  r.verb = verb;
  r.config = c.to_json();
  fs::create_directories(c.out);
  return r;
}

Hypersurface load_problem(const RunConfig& c, RunReport& rep) {
  Hypersurface f = stage(rep, "problem", [&] {
    try {
      return hypersurface_from_json(c.problem);
    } catch (const json::exception& e) {
      throw ConfigError(std::string("problem: ") + e.what());
    }
  });
  rep.stabilizer_order = f.stabilizer_order;
  if (f.n() < 3)
    throw ConfigError("problem: n must be at least 3 (binary forms have no monodromy)");
  return f;
}

StartPair load_or_make_start(const RunConfig& c, const Hypersurface& f, RunReport& rep) {
  const RunPaths paths{c.out};
  return stage(rep, "start", [&] {
    if (fs::exists(paths.start())) {
      StartPair sp = start_pair_from_json(read_json(paths.start()));
      if (sp.config.n != f.n() || sp.phi0.size() != static_cast<std::size_t>(f.n() * f.n()))
        throw ConfigError("start.json does not match the problem");
      return sp;
    }
    StartPair sp = start_pair(f, c.seeds.start);
    write_json(paths.start(), start_pair_to_json(sp));
    return sp;
  });
}

std::vector<CVector> load_solutions(const RunConfig& c, const Hypersurface& f, RunReport& rep) {
  return stage(rep, "load", [&] {
    const RunPaths paths{c.out};
    std::ifstream in(paths.solutions());
    if (!in) throw ConfigError("cannot open " + paths.solutions().string());
    std::vector<CVector> out;
    try {
      for (auto& s : read_solutions_jsonl(in)) {
        if (s.coords.size() != static_cast<std::size_t>(f.n() * f.n()))
          throw ConfigError("solutions.jsonl: wrong coordinate count");
        out.push_back(std::move(s.coords));
      }
    } catch (const json::exception& e) {
      throw ConfigError(std::string("solutions.jsonl: ") + e.what());
    }
    if (out.empty()) throw ConfigError("solutions.jsonl: no solutions");
    return out;
  });
}

std::vector<CVector> solve_stage(const RunConfig& c, const Hypersurface& f, const StartPair& sp,
                                 RunReport& rep) {
  const ParameterFamily fam(f);
  MonodromyOptions o;
  o.track = c.track;
  o.rule = c.rule;
  o.seed = c.seeds.monodromy;
  o.workers = c.resolved_workers();
  o.dedup_tolerance = c.dedup_tolerance;
  o.failure_abort = c.failure_abort;
  o.on_loop = [&](const LoopStats& s) {
    std::ostringstream line;
    line << "loop " << s.loop << ": " << s.registry_size << " solutions (+" << s.new_solutions
         << "), " << s.failures << " failures, " << s.seconds << " s";
    say(c, line.str());
  };
  const MonodromyReport mr = stage(rep, "monodromy", [&] { return monodromy_solve(fam, sp, o); });
  rep.stages["monodromy"] = mr.to_json();
  rep.count = mr.registry.size();
  {
    std::ofstream out(RunPaths{c.out}.solutions());
    write_solutions_jsonl(out, mr.registry);
  }
  if (mr.stop_reason == "path_failures") {
    rep.status = "numerical_failure";
    rep.exit_code = kExitNumerical;
    rep.error = "monodromy: " + mr.diagnostics;
  } else if (!mr.complete) {
    rep.status = "incomplete";
    rep.exit_code = kExitIncomplete;
  }
  std::vector<CVector> sols;
  for (const auto& s : mr.registry.entries()) sols.push_back(s.coords);
  return sols;
}

bool certify_stage(const RunConfig& c, const Hypersurface& f, const StartPair& sp,
                   const std::vector<CVector>& sols, RunReport& rep) {
  return stage(rep, "certify", [&] {
    Rng rng(c.seeds.certify);
    const AffinePatch patch = random_patch(f.n(), rng);
    const ParameterFamily fam(f);
    auto sys = std::make_shared<OrbitSystem>(fam.structure(), sp.config.flatten(), 0.0, patch);
    const SquareInstance inst(sys);
    std::vector<CVector> pts;
    pts.reserve(sols.size());
    for (const auto& s : sols) {
      cdouble lx = 0.0;
      for (std::size_t j = 0; j < s.size(); ++j) lx += patch.coeffs[j] * s[j];
      CVector y = s;
      for (auto& z : y) z *= patch.rhs / lx;
      pts.push_back(std::move(y));
    }
    CertifyOptions co;
    co.digits = c.digits;
    co.workers = c.resolved_workers();
    co.seed = c.seeds.certify;
    const CertifySummary sum = certify_set(inst, pts, co);
    {
      std::ofstream out(RunPaths{c.out}.certificates());
      for (const auto& cert : sum.certificates) out << cert.to_json().dump() << "\n";
    }
    rep.stages["certify"] = sum.to_json();
    const bool ok = sum.all_certified() && sum.distinctness.all_distinct;
    std::ostringstream line;
    line << "certified " << sum.certified << "/" << sum.certificates.size()
         << (sum.distinctness.all_distinct ? ", all distinct" : ", NOT all distinct");
    say(c, line.str());
    return ok;
  });
}

bool trace_stage(const RunConfig& c, const Hypersurface& f, const StartPair& sp,
                 const std::vector<CVector>& sols, RunReport& rep) {
  return stage(rep, "trace", [&] {
    const Pencil pencil = build_pencil(f, sp.config, c.seeds.pencil, c.t1);
    TraceOptions o;
    o.t1 = c.t1;
    o.digits = c.digits;
    o.workers = c.resolved_workers();
    o.seed = c.seeds.trace;
    o.track = c.track;
    const TraceReport tr = trace_test(f, sols, pencil, o);
    write_json(RunPaths{c.out}.trace(), tr.to_json());
    rep.stages["trace"] = {{"verdict", tr.pass ? "pass" : "fail"},
                           {"trace_norm", tr.trace_norm},
                           {"threshold", tr.threshold},
                           {"scale", tr.scale},
                           {"points", tr.points},
                           {"solution_digits", tr.solution_digits},
                           {"t1", complex_to_json(tr.t1)},
                           {"t1_retries", tr.t1_retries},
                           {"chart_retries", tr.chart_retries}};
    std::ostringstream line;
    line << "trace norm " << tr.trace_norm << " (threshold " << tr.threshold << "): "
         << (tr.pass ? "pass" : "fail");
    say(c, line.str());
    return tr.pass;
  });
}

void write_report(const RunConfig& c, const RunReport& r) {
  write_json(RunPaths{c.out}.report(), r.to_json());
}

PolySystem system_from_json(const json& j, Rng& rng) {
  check_keys(j, {"polys", "patch"}, "system");
  std::vector<HomogeneousForm> polys;
  for (const auto& p : j.at("polys")) polys.push_back(form_from_json(p));
  if (polys.empty()) throw ConfigError("system: no polynomials");
  const int nv = polys.front().num_vars();
  std::optional<AffinePatch> patch;
  if (j.contains("patch")) {
    AffinePatch ap;
    for (const auto& z : j.at("patch").at("coeffs")) ap.coeffs.push_back(complex_from_json(z));
    if (j.at("patch").contains("rhs")) ap.rhs = complex_from_json(j.at("patch").at("rhs"));
    patch = std::move(ap);
  } else if (polys.size() + 1 == static_cast<std::size_t>(nv)) {
    patch = AffinePatch{rng.complex_normal_vector(static_cast<std::size_t>(nv)), 1.0};
  }
  PolySystem sys(nv, std::move(polys), std::move(patch));
  if (!sys.is_square()) throw ConfigError("system: not square after the patch");
  return sys;
}

}  // namespace

json StageSeeds::to_json() const {
  return {{"start", start}, {"monodromy", monodromy}, {"certify", certify},
          {"pencil", pencil}, {"trace", trace},         {"oracle", oracle}};
}

void RunConfig::derive_seeds() {
  for (int k = 0; k < 6; ++k) {
    const char* name = kSeedNames[k];
    seed_slot(seeds, k) = explicit_seeds_.contains(name)
                              ? explicit_seeds_.at(name).get<std::uint64_t>()
                              : splitmix(seed * 8 + static_cast<std::uint64_t>(k));
  }
}

unsigned RunConfig::resolved_workers() const {
  return resolve_workers(workers ? std::optional<int>(static_cast<int>(*workers)) : std::nullopt);
}

RunConfig RunConfig::from_json(const json& j, const fs::path& base_dir) {
  check_keys(j,
             {"problem", "seed", "seeds", "monodromy", "tracker", "digits", "t1", "workers",
              "budget", "out", "system"},
             "config");
  RunConfig c;
  try {
    if (!j.contains("problem")) throw ConfigError("config: missing \"problem\"");
    const auto& p = j.at("problem");
    if (p.is_string()) {
      fs::path path = p.get<std::string>();
      if (path.is_relative()) path = base_dir / path;
      c.problem = read_json(path);
    } else {
      c.problem = p;
    }
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("seeds")) {
      const auto& s = j.at("seeds");
      check_keys(s, {"start", "monodromy", "certify", "pencil", "trace", "oracle"}, "seeds");
      c.explicit_seeds_ = s;
    }
    if (j.contains("monodromy")) {
      const auto& m = j.at("monodromy");
      check_keys(m,
                 {"stall_loops", "max_loops", "target_count", "dedup_tolerance", "failure_abort"},
                 "monodromy");
      if (m.contains("stall_loops")) c.rule.stall_loops = m.at("stall_loops").get<int>();
      if (m.contains("max_loops")) c.rule.max_loops = m.at("max_loops").get<int>();
      if (m.contains("target_count") && !m.at("target_count").is_null())
        c.rule.target_count = m.at("target_count").get<std::size_t>();
      if (m.contains("dedup_tolerance")) c.dedup_tolerance = m.at("dedup_tolerance").get<double>();
      if (m.contains("failure_abort")) c.failure_abort = m.at("failure_abort").get<double>();
    }
    if (j.contains("tracker")) c.track = track_options_from_json(j.at("tracker"));
    if (j.contains("digits")) c.digits = j.at("digits").get<int>();
    if (j.contains("t1")) {
      const auto& t = j.at("t1");
      c.t1 = t.is_number() ? cdouble(t.get<double>(), 0.0) : complex_from_json(t);
    }
    if (j.contains("workers") && !j.at("workers").is_null()) {
      const int w = j.at("workers").get<int>();
      if (w < 1) throw ConfigError("config: workers must be positive");
      c.workers = static_cast<unsigned>(w);
    }
    if (j.contains("budget")) c.budget = j.at("budget").get<std::uint64_t>();
    if (j.contains("out")) {
      fs::path out = j.at("out").get<std::string>();
      c.out = out.is_relative() ? base_dir / out : out;
    }
    if (j.contains("system")) c.system = j.at("system");
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  try {
    c.rule.validate();
    c.track.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (c.digits < 10) throw ConfigError("config: digits must be at least 10");
  if (!(c.dedup_tolerance > 0)) throw ConfigError("config: dedup_tolerance must be positive");
  if (!(c.failure_abort > 0 && c.failure_abort <= 1))
    throw ConfigError("config: failure_abort must be in (0, 1]");
  if (std::abs(c.t1) == 0.0) throw ConfigError("config: t1 must be nonzero");
  c.derive_seeds();
  return c;
}

json RunConfig::to_json() const {
  json mono = {{"stall_loops", rule.stall_loops},
               {"max_loops", rule.max_loops},
               {"target_count", rule.target_count ? json(*rule.target_count) : json(nullptr)},
               {"dedup_tolerance", dedup_tolerance},
               {"failure_abort", failure_abort}};
  json j = {{"problem", problem},
            {"seed", seed},
            {"seeds", seeds.to_json()},
            {"monodromy", mono},
            {"tracker", track_options_to_json(track)},
            {"digits", digits},
            {"t1", complex_to_json(t1)},
            {"workers", resolved_workers()},
            {"budget", budget},
            {"out", out.string()}};
  if (system) j["system"] = *system;
  return j;
}

json RunReport::to_json() const {
  json j = deterministic_json();
  j["config"]["out"] = config.value("out", "");
  j["timings"] = timings;
  return j;
}

json RunReport::deterministic_json() const {
  json cfg = config;
  cfg.erase("out");
  json j = {{"verb", verb},
            {"config", cfg},
            {"stages", stages},
            {"count", count ? json(*count) : json(nullptr)},
            {"stabilizer_order", stabilizer_order},
            {"degree", degree ? json(*degree) : json(nullptr)},
            {"status", status},
            {"exit_code", exit_code}};
  if (!error.empty()) j["error"] = error;
  return j;
}

json start_pair_to_json(const StartPair& sp) {
  json phi = json::array();
  for (const auto& z : sp.phi0) phi.push_back(complex_to_json(z));
  return {{"config", config_to_json(sp.config)}, {"phi0", phi}, {"residual_norm", sp.residual_norm}};
}

StartPair start_pair_from_json(const json& j) {
  try {
    StartPair sp;
    sp.config = config_from_json(j.at("config"));
    for (const auto& z : j.at("phi0")) sp.phi0.push_back(complex_from_json(z));
    sp.residual_norm = j.value("residual_norm", 0.0);
    return sp;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("start pair: ") + e.what());
  }
}

json track_options_to_json(const TrackOptions& t) {
  return {{"initial_step", t.initial_step},
          {"min_step", t.min_step},
          {"max_step", t.max_step},
          {"corrector_tolerance", t.corrector_tolerance},
          {"max_corrector_iters", t.max_corrector_iters},
          {"max_steps", t.max_steps},
          {"divergence_norm", t.divergence_norm},
          {"repatch_norm", t.repatch_norm},
          {"singular_condition", t.singular_condition}};
}

TrackOptions track_options_from_json(const json& j, TrackOptions t) {
  check_keys(j,
             {"initial_step", "min_step", "max_step", "corrector_tolerance", "max_corrector_iters",
              "max_steps", "divergence_norm", "repatch_norm", "singular_condition"},
             "tracker");
  t.initial_step = j.value("initial_step", t.initial_step);
  t.min_step = j.value("min_step", t.min_step);
  t.max_step = j.value("max_step", t.max_step);
  t.corrector_tolerance = j.value("corrector_tolerance", t.corrector_tolerance);
  t.max_corrector_iters = j.value("max_corrector_iters", t.max_corrector_iters);
  t.max_steps = j.value("max_steps", t.max_steps);
  t.divergence_norm = j.value("divergence_norm", t.divergence_norm);
  t.repatch_norm = j.value("repatch_norm", t.repatch_norm);
  t.singular_condition = j.value("singular_condition", t.singular_condition);
  return t;
}

RunReport cmd_sample(const RunConfig& c) {
  RunReport rep = new_report("sample", c);
  const Hypersurface f = load_problem(c, rep);
  write_json(RunPaths{c.out}.problem(), hypersurface_to_json(f));
  const StartPair sp = stage(rep, "start", [&] {
    StartPair s = start_pair(f, c.seeds.start);
    write_json(RunPaths{c.out}.start(), start_pair_to_json(s));
    return s;
  });
  const ParameterFamily fam(f);
  Rng rng(c.seeds.oracle);
  const OrbitSystem sys(fam.structure(), sp.config.flatten(), 0.0, random_patch(f.n(), rng));
  const TotalDegreeStart tds = total_degree_start(sys, c.seeds.oracle);
  rep.stages["sample"] = {{"n", f.n()},
                          {"d", f.d()},
                          {"unknowns", fam.num_vars()},
                          {"equations", fam.num_vars() - 1},
                          {"points", sp.config.size()},
                          {"bezout", tds.count()},
                          {"start_residual", sp.residual_norm}};
  write_report(c, rep);
  return rep;
}

RunReport cmd_solve(const RunConfig& c) {
  RunReport rep = new_report("solve", c);
  const Hypersurface f = load_problem(c, rep);
  const StartPair sp = stage(rep, "start", [&] {
    StartPair s = start_pair(f, c.seeds.start);
    write_json(RunPaths{c.out}.start(), start_pair_to_json(s));
    return s;
  });
  solve_stage(c, f, sp, rep);
  write_report(c, rep);
  return rep;
}

RunReport cmd_certify(const RunConfig& c) {
  RunReport rep = new_report("certify", c);
  const Hypersurface f = load_problem(c, rep);
  const StartPair sp = load_or_make_start(c, f, rep);
  const auto sols = load_solutions(c, f, rep);
  rep.count = sols.size();
  if (!certify_stage(c, f, sp, sols, rep)) {
    rep.status = "certification_failed";
    rep.exit_code = kExitCertification;
  }
  write_report(c, rep);
  return rep;
}

RunReport cmd_trace(const RunConfig& c) {
  RunReport rep = new_report("trace", c);
  const Hypersurface f = load_problem(c, rep);
  const StartPair sp = load_or_make_start(c, f, rep);
  const auto sols = load_solutions(c, f, rep);
  rep.count = sols.size();
  if (!trace_stage(c, f, sp, sols, rep)) {
    rep.status = "incomplete";
    rep.exit_code = kExitIncomplete;
  }
  write_report(c, rep);
  return rep;
}

RunReport cmd_degree(const RunConfig& c) {
  RunReport rep = new_report("degree", c);
  const Hypersurface f = load_problem(c, rep);
  write_json(RunPaths{c.out}.problem(), hypersurface_to_json(f));
  const StartPair sp = stage(rep, "start", [&] {
    StartPair s = start_pair(f, c.seeds.start);
    write_json(RunPaths{c.out}.start(), start_pair_to_json(s));
    return s;
  });
  const auto sols = solve_stage(c, f, sp, rep);
  if (rep.exit_code != kExitOk) {
    write_report(c, rep);
    return rep;
  }
  const bool certified = certify_stage(c, f, sp, sols, rep);
  const bool traced = trace_stage(c, f, sp, sols, rep);
  const auto count = static_cast<long long>(sols.size());
  const bool divisible = count % f.stabilizer_order == 0;
  if (divisible) rep.degree = degree_report(count, f.stabilizer_order);
  if (!certified) {
    rep.status = "certification_failed";
    rep.exit_code = kExitCertification;
  } else if (!traced) {
    rep.status = "incomplete";
    rep.exit_code = kExitIncomplete;
  } else if (!divisible) {
    rep.status = "not_divisible";
    rep.exit_code = kExitIncomplete;
    rep.error = "count " + std::to_string(count) + " is not divisible by the stabilizer order";
  } else {
    rep.status = "complete";
  }
  write_report(c, rep);
  return rep;
}

RunReport cmd_oracle(const RunConfig& c) {
  RunReport rep = new_report("oracle", c);
  TotalDegreeOptions o;
  o.track = c.track;
  o.budget = c.budget;
  o.seed = c.seeds.oracle;
  o.workers = c.resolved_workers();
  o.dedup_tolerance = c.dedup_tolerance;
  Rng rng(c.seeds.oracle);
  auto summarize = [&](const TotalDegreeResult& res, std::size_t count) {
    rep.count = count;
    rep.stages["oracle"] = {{"paths", res.paths},
                            {"converged", res.converged},
                            {"diverged", res.diverged},
                            {"singular", res.singular},
                            {"failed", res.failed},
                            {"distinct", res.solutions.size()},
                            {"count", count}};
  };
  if (c.system) {
    const PolySystem ps = stage(rep, "problem", [&] { return system_from_json(*c.system, rng); });
    const auto res = stage(rep, "oracle", [&] { return solve_total_degree(ps, o); });
    std::ofstream out(c.out / "oracle.jsonl");
    write_solutions_jsonl(out, res.solutions);
    summarize(res, res.solutions.size());
  } else {
    const Hypersurface f = load_problem(c, rep);
    const StartPair sp = load_or_make_start(c, f, rep);
    const ParameterFamily fam(f);
    auto sys = std::make_shared<OrbitSystem>(fam.structure(), sp.config.flatten(), 0.0,
                                             random_patch(f.n(), rng));
    const auto res = stage(rep, "oracle", [&] { return solve_total_degree(sys, o); });
    // Endpoints with singular phi are not translates.
    SolutionRegistry kept(fam.num_vars(), c.dedup_tolerance);
    for (const auto& s : res.solutions.entries())
      if (const double det = normalized_abs_det(s.coords, f.n()); det > kDetThreshold)
        kept.insert(s.coords, s.residual, det);
    std::ofstream out(c.out / "oracle.jsonl");
    write_solutions_jsonl(out, kept);
    summarize(res, kept.size());
  }
  write_report(c, rep);
  return rep;
}

RunReport run_verb(const std::string& verb, const RunConfig& c) {
  auto failed = [&](int code, const std::string& status, const std::string& what) {
    RunReport r;
    r.verb = verb;
    r.config = c.to_json();
    r.status = status;
    r.exit_code = code;
    r.error = (g_stage.empty() ? std::string("config") : g_stage) + ": " + what;
    try {
      fs::create_directories(c.out);
      write_report(c, r);
    } catch (const std::exception&) {
    }
    return r;
  };
  g_stage.clear();
  try {
    if (verb == "sample") return cmd_sample(c);
    if (verb == "solve") return cmd_solve(c);
    if (verb == "certify") return cmd_certify(c);
    if (verb == "trace") return cmd_trace(c);
    if (verb == "degree") return cmd_degree(c);
    if (verb == "oracle") return cmd_oracle(c);
    throw ConfigError("unknown verb \"" + verb + "\"");
  } catch (const NumericalError& e) {
    return failed(kExitNumerical, "numerical_failure", e.what());
  } catch (const BudgetExceeded& e) {
    return failed(kExitConfig, "config_error", e.what());
  } catch (const std::invalid_argument& e) {
    return failed(kExitConfig, "config_error", e.what());
  } catch (const json::exception& e) {
    return failed(kExitConfig, "config_error", e.what());
  } catch (const std::domain_error& e) {
    return failed(kExitConfig, "config_error", e.what());
  } catch (const fs::filesystem_error& e) {
    return failed(kExitConfig, "config_error", e.what());
  } catch (const std::exception& e) {
    return failed(kExitNumerical, "numerical_failure", e.what());
  }
}

}  // namespace orbitdeg
