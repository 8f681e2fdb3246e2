#include "orbitdeg/monodromy.hpp"

#include "orbitdeg/linalg.hpp"
#include "orbitdeg/parallel.hpp"

#include <chrono>
#include <cmath>
#include <istream>
#include <ostream>
#include <unordered_map>

namespace orbitdeg {

namespace {

CVector unit(std::span<const cdouble> x) {
  CVector u(x.begin(), x.end());
  const double s = norm2(u);
  if (s > 0)
    for (auto& z : u) z /= s;
  return u;
}

// A few Newton steps on the square system obtained by adding the chart
// conj(x) . y = |x|^2 at the current point.
CVector polish(const OrbitSystem& base, std::span<const cdouble> x0, int iters) {
  CVector x(x0.begin(), x0.end());
  AffinePatch patch;
  patch.coeffs.resize(x.size());
  double nx2 = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) {
    patch.coeffs[j] = std::conj(x[j]);
    nx2 += std::norm(x[j]);
  }
  patch.rhs = nx2;
  const OrbitSystem sq = base.with_patch(std::move(patch));
  const std::size_t m = sq.num_equations();
  CVector v(m);
  CMatrix jac(m, x.size());
  for (int it = 0; it < iters; ++it) {
    sq.evaluate(x, v, &jac);
    LU<cdouble> lu;
    if (!lu.factor(jac)) break;
    lu.solve_in_place(v);
    for (std::size_t j = 0; j < x.size(); ++j) x[j] -= v[j];
  }
  return x;
}

struct Accepted {
  bool ok = false;
  CVector point;
  double residual = 0.0;
  double abs_det = 0.0;
};

Accepted accept(const ParameterFamily& family, const OrbitSystem& base, const PathResult& r,
                const MonodromyOptions& opts) {
  Accepted a;
  if (!r.ok()) return a;
  a.point = unit(r.endpoint);
  a.residual = norm2(base.evaluate(a.point));
  a.abs_det = normalized_abs_det(a.point, family.n());
  a.ok = std::isfinite(a.residual) && a.residual <= opts.residual_tolerance &&
         a.abs_det > kDetThreshold;
  return a;
}

TrackOptions cautious(TrackOptions t) {
  t.max_step = std::max(t.min_step, t.max_step / 4);
  t.initial_step = std::clamp(t.initial_step / 4, t.min_step, t.max_step);
  t.max_steps *= 4;
  return t;
}

}  // namespace

ParameterFamily::ParameterFamily(Hypersurface f)
    : f_(std::move(f)),
      s_(OrbitStructure::identity(f_.form, static_cast<std::size_t>(f_.n() * f_.n() - 1))) {}

OrbitSystem ParameterFamily::instantiate(const CVector& q, std::optional<AffinePatch> patch) const {
  if (q.size() != num_parameters()) throw DimensionError("family: wrong parameter count");
  return OrbitSystem(s_, q, 0.0, std::move(patch));
}

CVector ParameterFamily::random_parameters(Rng& rng) const {
  return rng.complex_normal_vector(num_parameters());
}

LoopSchedule::LoopSchedule(const ParameterFamily& family, CVector base, std::uint64_t seed)
    : family_(&family), base_(std::move(base)), rng_(seed) {
  if (base_.size() != family.num_parameters()) throw DimensionError("loop schedule: bad base");
}

Loop LoopSchedule::next() {
  Loop l;
  l.index = ++counter_;
  l.q1 = family_->random_parameters(rng_);
  l.q2 = family_->random_parameters(rng_);
  l.patch = rng_.unit_vector(family_->num_vars());
  return l;
}

void StoppingRule::validate() const {
  if (stall_loops < 1) throw std::invalid_argument("stopping rule: stall_loops must be >= 1");
  if (max_loops < 1) throw std::invalid_argument("stopping rule: max_loops must be >= 1");
  if (target_count && *target_count == 0)
    throw std::invalid_argument("stopping rule: target_count must be positive");
}

SolutionRegistry make_registry(const ParameterFamily& family, const CVector& base,
                               double tolerance) {
  SolutionRegistry reg(family.num_vars(), tolerance, RegistryMode::projective);
  auto sys = std::make_shared<OrbitSystem>(family.structure(), base);
  reg.set_refiner([sys](std::span<const cdouble> x) { return polish(*sys, x, 3); });
  return reg;
}

PathResult track_loop(const ParameterFamily& family, const CVector& base, const Loop& loop,
                      std::span<const cdouble> x0, const TrackOptions& opts) {
  const auto& s = family.structure();
  const CVector* legs[4] = {&base, &loop.q1, &loop.q2, &base};
  PathResult r;
  CVector x(x0.begin(), x0.end());
  int steps = 0;
  for (int k = 0; k < 3; ++k) {
    OrbitHomotopy h(s, *legs[k], *legs[k + 1]);
    r = track(h, x, opts, loop.patch);
    steps += r.steps_taken;
    r.steps_taken = steps;
    if (!r.ok()) {
      r.t_reached = (k + r.t_reached) / 3.0;
      return r;
    }
    x = r.endpoint;
  }
  return r;
}

std::size_t run_loop(SolutionRegistry& registry, const ParameterFamily& family, const CVector& base,
                     const Loop& loop, const MonodromyOptions& opts, LoopStats* stats) {
  if (registry.empty()) throw std::invalid_argument("run_loop: registry is empty");
  if (registry.dim() != family.num_vars()) throw DimensionError("run_loop: registry dimension");
  const auto t0 = std::chrono::steady_clock::now();
  const OrbitSystem base_sys = family.instantiate(base);
  const TrackOptions retry_opts = cautious(opts.track);

  LoopStats st;
  st.loop = loop.index;
  std::unordered_map<std::size_t, std::size_t> owner;  // image -> source
  std::vector<std::size_t> frontier(registry.size());
  for (std::size_t i = 0; i < frontier.size(); ++i) frontier[i] = i;
  std::size_t added = 0;

  while (!frontier.empty()) {
    std::vector<Accepted> out(frontier.size());
    parallel_for(frontier.size(), opts.workers, [&](std::size_t i) {
      const auto r = track_loop(family, base, loop, registry[frontier[i]].coords, opts.track);
      out[i] = accept(family, base_sys, r, opts);
    });
    st.tracked += frontier.size();

    std::vector<std::size_t> next;
    for (std::size_t i = 0; i < frontier.size(); ++i) {
      const std::size_t src = frontier[i];
      for (int attempt = 0; attempt < 2; ++attempt) {
        if (attempt == 1) {
          // Retrack a failed or colliding path with smaller steps.
          const auto r = track_loop(family, base, loop, registry[src].coords, retry_opts);
          out[i] = accept(family, base_sys, r, opts);
        }
        if (!out[i].ok) {
          if (attempt == 1) ++st.failures;
          continue;
        }
        auto idx = registry.find(out[i].point);
        if (idx && owner.count(*idx)) {
          if (attempt == 1) ++st.collisions;
          continue;
        }
        if (!idx) {
          // The near-tie refiner can still merge a point find() did not match.
          if (registry.insert(out[i].point, out[i].residual, out[i].abs_det, loop.index) ==
              InsertOutcome::duplicate)
            break;
          idx = registry.size() - 1;
          next.push_back(*idx);
          ++added;
        }
        owner.emplace(*idx, src);
        break;
      }
    }
    frontier = std::move(next);
  }

  st.new_solutions = added;
  st.registry_size = registry.size();
  st.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (stats) *stats = st;
  if (st.tracked >= opts.min_paths_for_abort &&
      static_cast<double>(st.failures) > opts.failure_abort * static_cast<double>(st.tracked))
    throw MonodromyAbort("monodromy: " + std::to_string(st.failures) + " of " +
                             std::to_string(st.tracked) + " paths failed on loop " +
                             std::to_string(loop.index),
                         st);
  return added;
}

nlohmann::json MonodromyReport::to_json() const {
  nlohmann::json hist = nlohmann::json::array();
  for (const auto& h : history)
    hist.push_back({{"loop", h.loop},
                    {"tracked", h.tracked},
                    {"failures", h.failures},
                    {"collisions", h.collisions},
                    {"new", h.new_solutions},
                    {"count", h.registry_size}});
  nlohmann::json j = {{"count", registry.size()}, {"loops", loops},
                      {"stop_reason", stop_reason}, {"complete", complete},
                      {"path_failures", path_failures}, {"seed", seed},
                      {"history", hist}};
  if (!diagnostics.empty()) j["diagnostics"] = diagnostics;
  return j;
}

MonodromyReport monodromy_solve(const ParameterFamily& family, const StartPair& start,
                                const MonodromyOptions& opts) {
  opts.rule.validate();
  opts.track.validate();
  const CVector base = start.config.flatten();
  const OrbitSystem base_sys = family.instantiate(base);
  const CVector x0 = unit(start.phi0);
  const double r0 = norm2(base_sys.evaluate(x0));
  if (!(r0 <= 1e-10))
    throw std::invalid_argument("monodromy: start pair residual " + std::to_string(r0) +
                                " exceeds 1e-10");

  MonodromyReport rep{make_registry(family, base, opts.dedup_tolerance), 0, "", false, 0, opts.seed,
                      {}, ""};
  rep.registry.insert(x0, r0, normalized_abs_det(x0, family.n()), 0);

  LoopSchedule schedule(family, base, opts.seed);
  int stall = 0;
  for (;;) {
    const Loop loop = schedule.next();
    LoopStats st;
    try {
      run_loop(rep.registry, family, base, loop, opts, &st);
    } catch (const MonodromyAbort& e) {
      st = e.stats();
      rep.history.push_back(st);
      rep.path_failures += st.failures;
      rep.loops = loop.index;
      rep.stop_reason = "path_failures";
      rep.complete = false;
      rep.diagnostics = e.what();
      if (opts.on_loop) opts.on_loop(st);
      return rep;
    }
    rep.history.push_back(st);
    rep.path_failures += st.failures;
    rep.loops = loop.index;
    if (opts.on_loop) opts.on_loop(st);
    stall = st.new_solutions == 0 ? stall + 1 : 0;

    const auto& rule = opts.rule;
    if (rule.target_count && rep.registry.size() >= *rule.target_count) {
      rep.stop_reason = "target_reached";
      rep.complete = true;
      break;
    }
    if (stall >= rule.stall_loops) {
      rep.stop_reason = "stalled";
      rep.complete = !rule.target_count.has_value();
      break;
    }
    if (loop.index >= rule.max_loops) {
      rep.stop_reason = "max_loops";
      rep.complete = false;
      break;
    }
  }
  return rep;
}

void write_solutions_jsonl(std::ostream& out, const SolutionRegistry& registry) {
  for (const auto& s : registry.entries()) {
    nlohmann::json coords = nlohmann::json::array();
    for (const auto& z : s.coords) coords.push_back(complex_to_json(z));
    out << nlohmann::json{{"coords", coords}, {"residual", s.residual}, {"abs_det", s.abs_det}}.dump()
        << '\n';
  }
}

std::vector<RegisteredSolution> read_solutions_jsonl(std::istream& in) {
  std::vector<RegisteredSolution> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      RegisteredSolution s;
      for (const auto& c : j.at("coords")) s.coords.push_back(complex_from_json(c));
      s.residual = j.value("residual", 0.0);
      s.abs_det = j.value("abs_det", 0.0);
      out.push_back(std::move(s));
    } catch (const nlohmann::json::exception& e) {
      throw std::invalid_argument("solutions line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace orbitdeg
