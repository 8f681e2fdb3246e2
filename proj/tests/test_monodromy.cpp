#include "orbitdeg/monodromy.hpp"

#include <doctest.h>

#include <sstream>

using namespace orbitdeg;

namespace {

MonodromyOptions quick(std::uint64_t seed = 3) {
  MonodromyOptions o;
  o.seed = seed;
  o.rule.stall_loops = 3;
  o.rule.max_loops = 40;
  return o;
}

std::vector<CVector> oracle(const Hypersurface& f, const StartPair& sp, std::uint64_t seed) {
  Rng rng(seed);
  TotalDegreeOptions opts;
  opts.seed = seed;
  const ParameterFamily fam(f);
  auto sys = std::make_shared<OrbitSystem>(fam.structure(), sp.config.flatten(), 0.0,
                                           random_patch(f.n(), rng));
  auto res = solve_total_degree(sys, opts);
  std::vector<CVector> out;
  for (const auto& s : res.solutions.entries())
    if (normalized_abs_det(s.coords, f.n()) > kDetThreshold) out.push_back(s.coords);
  return out;
}

bool same_set(const SolutionRegistry& reg, const std::vector<CVector>& pts) {
  if (reg.size() != pts.size()) return false;
  for (const auto& p : pts)
    if (!reg.find(p)) return false;
  return true;
}

struct CubicRun {
  Hypersurface f = sample_hypersurface(3, 3, 2024);
  StartPair sp = start_pair(f, 7);
  ParameterFamily fam{f};
  MonodromyReport rep = monodromy_solve(fam, sp, quick(5));
};

const CubicRun& cubic() {
  static const CubicRun run;
  return run;
}

}  // namespace

TEST_CASE("parameter family reproduces the start pair") {
  const auto& c = cubic();
  CHECK(c.fam.num_parameters() == 24);
  const auto sys = c.fam.instantiate(c.sp.config.flatten());
  CHECK(sys.num_equations() == 8);
  CHECK(norm2(sys.evaluate(c.sp.phi0)) <= 1e-10);
  StoppingRule bad;
  bad.stall_loops = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  LoopSchedule a(c.fam, c.sp.config.flatten(), 4), b(c.fam, c.sp.config.flatten(), 4);
  const Loop la = a.next(), lb = b.next();
  CHECK(la.q1 == lb.q1);
  CHECK(la.q2 == lb.q2);
  CHECK(a.next().index == 2);
}

TEST_CASE("degenerate triangle adds nothing") {
  const auto& c = cubic();
  const CVector base = c.sp.config.flatten();
  auto reg = make_registry(c.fam, base, 1e-6);
  reg.insert(c.sp.phi0);
  Loop loop;
  loop.index = 1;
  loop.q1 = loop.q2 = base;
  Rng rng(9);
  loop.patch = rng.unit_vector(9);
  LoopStats st;
  CHECK(run_loop(reg, c.fam, base, loop, quick(), &st) == 0);
  CHECK(reg.size() == 1);
  CHECK(st.tracked == 1);
  CHECK(st.failures == 0);
  CHECK(reg.find(c.sp.phi0).has_value());
}

TEST_CASE("binary forms: every solution is its own component") {
  // V(f) is d points, so each p_i stays attached to one root and loops act
  // trivially; the oracle still sees all d(d-1)(d-2) solutions.
  const auto f = sample_hypersurface(2, 4, 44);
  const auto sp = start_pair(f, 2);
  ParameterFamily fam(f);
  auto o = quick();
  o.rule.stall_loops = 4;
  const auto rep = monodromy_solve(fam, sp, o);
  CHECK(rep.registry.size() == 1);
  CHECK(rep.path_failures == 0);
  CHECK(oracle(f, sp, 8).size() == 24);
}

TEST_CASE("plane cubic: terminal count") {
  const auto& rep = cubic().rep;
  CHECK(rep.stop_reason == "stalled");
  CHECK(rep.complete);
  CHECK(rep.registry.size() == 216);
  CHECK(rep.registry.size() % 18 == 0);
  CHECK(degree_report(static_cast<long long>(rep.registry.size()), 18) == 12);
  for (const auto& s : rep.registry.entries()) {
    CHECK(s.residual <= 1e-8);
    CHECK(s.abs_det > kDetThreshold);
  }
  std::size_t prev = 0;
  for (const auto& h : rep.history) {
    CHECK(h.registry_size >= prev);
    prev = h.registry_size;
  }
  CHECK(rep.registry.min_pairwise_distance(1e-3) >= 1e-3);
}

TEST_CASE("plane cubic: monodromy matches the 6561-path oracle") {
  const auto& c = cubic();
  CHECK(same_set(c.rep.registry, oracle(c.f, c.sp, 13)));
}

TEST_CASE("loops permute a complete fiber") {
  const auto& c = cubic();
  REQUIRE(c.rep.registry.size() == 216);
  const CVector base = c.sp.config.flatten();
  LoopSchedule sched(c.fam, base, 777);
  const Loop loop = sched.next();
  auto images = make_registry(c.fam, base, 1e-6);
  std::size_t ok = 0;
  for (const auto& s : c.rep.registry.entries()) {
    const auto r = track_loop(c.fam, base, loop, s.coords, TrackOptions{});
    if (!r.ok()) continue;
    ++ok;
    CHECK(c.rep.registry.find(r.endpoint).has_value());
    CHECK(images.insert(r.endpoint) == InsertOutcome::inserted);
  }
  CHECK(ok >= 214);
  CHECK(images.size() == ok);

  // rerunning a loop on a complete registry leaves it unchanged
  auto reg = c.rep.registry;
  LoopStats st;
  CHECK(run_loop(reg, c.fam, base, sched.next(), quick(), &st) == 0);
  CHECK(reg.size() == 216);
  CHECK(st.collisions == 0);
}

TEST_CASE("stopping rule outcomes") {
  const auto& c = cubic();
  auto o = quick(5);
  o.rule.max_loops = 1;
  auto rep = monodromy_solve(c.fam, c.sp, o);
  CHECK(rep.stop_reason == "max_loops");
  CHECK_FALSE(rep.complete);
  CHECK(rep.loops == 1);
  const auto j = rep.to_json();
  for (const char* k : {"count", "loops", "stop_reason", "path_failures", "seed"})
    CHECK(j.contains(k));

  o.rule.max_loops = 40;
  o.rule.target_count = 20;
  rep = monodromy_solve(c.fam, c.sp, o);
  CHECK(rep.stop_reason == "target_reached");
  CHECK(rep.complete);
  CHECK(rep.registry.size() >= 20);
}

TEST_CASE("worker count does not change the result") {
  const auto& c = cubic();
  auto o = quick(21);
  o.rule.max_loops = 2;
  o.workers = 1;
  const auto a = monodromy_solve(c.fam, c.sp, o);
  o.workers = 3;
  const auto b = monodromy_solve(c.fam, c.sp, o);
  REQUIRE(a.registry.size() == b.registry.size());
  for (std::size_t i = 0; i < a.registry.size(); ++i)
    CHECK(a.registry[i].coords == b.registry[i].coords);
  CHECK(a.to_json() == b.to_json());
}

TEST_CASE("solutions JSONL round trip") {
  const auto& rep = cubic().rep;
  std::stringstream ss;
  write_solutions_jsonl(ss, rep.registry);
  const auto back = read_solutions_jsonl(ss);
  REQUIRE(back.size() == rep.registry.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].coords == rep.registry[i].coords);
    CHECK(back[i].residual == rep.registry[i].residual);
    CHECK(back[i].abs_det == rep.registry[i].abs_det);
  }
  std::stringstream bad("{\"coords\": 3}\n");
  CHECK_THROWS_AS(read_solutions_jsonl(bad), std::invalid_argument);
}
