#include "hflab/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <exception>
#include <fstream>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include "hflab/dense.hpp"
#include "hflab/errors.hpp"
#include "hflab/interaction.hpp"

#ifndef HFLAB_VERSION
#define HFLAB_VERSION "0.0.0"
#endif
#ifndef HFLAB_GIT
#define HFLAB_GIT "unknown"
#endif

namespace hflab {

using nlohmann::json;

namespace {

const std::set<std::string> kInequalityIds{"kinetic_interpolation", "merged_interpolation",
                                           "weighted_schatten_moment", "commutator_V",
                                           "commutator_X", "weighted_commutator"};
const std::vector<std::string> kOracleIds{"densify",           "propagation", "singular_values",
                                          "weighted_schatten", "sobolev",     "commutator_V",
                                          "commutator_X",      "weighted_commutator"};

// ---------------------------------------------------------------------------
// JSON field access

[[noreturn]] void fail(const std::string& where, const std::string& what) {
  throw ConfigError(where + ": " + what);
}

void reject_unknown(const json& obj, const std::string& where, std::initializer_list<const char*> keys) {
  if (!obj.is_object()) fail(where, "expected an object");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (std::none_of(keys.begin(), keys.end(), [&](const char* k) { return it.key() == k; })) {
      fail(where, "unknown key '" + it.key() + "'");
    }
  }
}

double as_number(const json& v, const std::string& where) {
  if (!v.is_number()) fail(where, "expected a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) fail(where, "expected a finite number");
  return d;
}

// Lebesgue exponents: numbers >= 1 or the string "inf".
double as_exponent(const json& v, const std::string& where) {
  if (v.is_string()) {
    if (v.get<std::string>() == "inf") return kInfinity;
    fail(where, "expected a number or \"inf\"");
  }
  const double p = as_number(v, where);
  if (!(p >= 1.0)) fail(where, "exponent must be >= 1");
  return p;
}

int as_int(const json& v, const std::string& where) {
  if (!v.is_number_integer()) {
    if (v.is_number_float()) {
      const double d = v.get<double>();
      if (std::isfinite(d) && d == std::round(d) && std::abs(d) < 2e9) return static_cast<int>(d);
    }
    fail(where, "expected an integer");
  }
  return v.get<int>();
}

bool as_bool(const json& v, const std::string& where) {
  if (!v.is_boolean()) fail(where, "expected true or false");
  return v.get<bool>();
}

std::string as_string(const json& v, const std::string& where) {
  if (!v.is_string()) fail(where, "expected a string");
  return v.get<std::string>();
}

const json* field(const json& obj, const char* key) {
  const auto it = obj.find(key);
  return it == obj.end() ? nullptr : &*it;
}

std::array<double, 3> as_vec3(const json& v, const std::string& where) {
  if (!v.is_array() || v.size() != 3) fail(where, "expected an array of 3 numbers");
  return {as_number(v[0], where), as_number(v[1], where), as_number(v[2], where)};
}

json exponent_json(double p) { return std::isinf(p) ? json("inf") : json(p); }

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string short_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

// ---------------------------------------------------------------------------
// Section parsers

GridConfig parse_grid(const json& j) {
  reject_unknown(j, "grid", {"N", "L"});
  GridConfig g;
  if (const json* v = field(j, "N")) g.points = as_int(*v, "grid.N");
  if (const json* v = field(j, "L")) g.length = as_number(*v, "grid.L");
  if (g.points < 4 || g.points % 2 != 0) fail("grid.N", "must be even and >= 4");
  if (g.points > 256) fail("grid.N", "must be <= 256");
  if (!(g.length > 0.0)) fail("grid.L", "must be positive");
  return g;
}

PhysicsConfig parse_physics(const json& j) {
  reject_unknown(j, "physics", {"a", "sign", "hbar", "mode", "dealias", "exchange_coefficient"});
  PhysicsConfig p;
  if (const json* v = field(j, "a")) p.a = as_number(*v, "physics.a");
  if (const json* v = field(j, "sign")) p.sign = as_int(*v, "physics.sign");
  if (const json* v = field(j, "hbar")) {
    p.hbar.clear();
    if (v->is_array()) {
      for (const auto& h : *v) p.hbar.push_back(as_number(h, "physics.hbar"));
    } else {
      p.hbar.push_back(as_number(*v, "physics.hbar"));
    }
  }
  if (const json* v = field(j, "mode")) {
    try {
      p.mode = parse_mode(as_string(*v, "physics.mode"));
    } catch (const InvalidArgument& e) {
      fail("physics.mode", e.what());
    }
  }
  if (const json* v = field(j, "dealias")) p.dealias = as_bool(*v, "physics.dealias");
  if (const json* v = field(j, "exchange_coefficient")) {
    p.exchange_coefficient = as_number(*v, "physics.exchange_coefficient");
  }
  if (!(p.a > 0.0 && p.a < 2.0)) fail("physics.a", "must lie in (0, 2)");
  if (p.sign < -1 || p.sign > 1) fail("physics.sign", "must be -1, 0 or 1");
  if (p.hbar.empty()) fail("physics.hbar", "needs at least one value");
  for (double h : p.hbar) {
    if (!(h > 0.0)) fail("physics.hbar", "values must be positive");
  }
  return p;
}

StateConfig parse_state(const json& j) {
  reject_unknown(j, "state", {"constructor", "rank", "seed", "decay", "centers", "width", "modes", "weights"});
  StateConfig s;
  if (const json* v = field(j, "constructor")) s.constructor = as_string(*v, "state.constructor");
  if (const json* v = field(j, "rank")) s.rank = as_int(*v, "state.rank");
  if (const json* v = field(j, "seed")) {
    if (!v->is_number_unsigned() && !(v->is_number_integer() && v->get<long long>() >= 0)) {
      fail("state.seed", "expected a non-negative integer");
    }
    s.seed = v->get<std::uint64_t>();
  }
  if (const json* v = field(j, "decay")) s.decay = as_number(*v, "state.decay");
  if (const json* v = field(j, "centers")) {
    if (!v->is_array()) fail("state.centers", "expected an array");
    for (const auto& c : *v) {
      reject_unknown(c, "state.centers[]", {"x", "v"});
      PhaseSpaceCenter pc;
      if (const json* x = field(c, "x")) pc.position = as_vec3(*x, "state.centers[].x");
      if (const json* u = field(c, "v")) pc.velocity = as_vec3(*u, "state.centers[].v");
      s.centers.push_back(pc);
    }
  }
  if (const json* v = field(j, "width")) s.width = as_number(*v, "state.width");
  if (const json* v = field(j, "modes")) {
    if (!v->is_array()) fail("state.modes", "expected an array");
    for (const auto& m : *v) {
      if (!m.is_array() || m.size() != 3) fail("state.modes[]", "expected 3 integers");
      s.modes.push_back({as_int(m[0], "state.modes[]"), as_int(m[1], "state.modes[]"),
                         as_int(m[2], "state.modes[]")});
    }
  }
  if (const json* v = field(j, "weights")) {
    if (!v->is_array()) fail("state.weights", "expected an array");
    for (const auto& w : *v) s.weights.push_back(as_number(w, "state.weights[]"));
  }

  if (s.constructor == "random") {
    if (s.rank < 1) fail("state.rank", "must be >= 1");
    if (!(s.decay >= 0.0)) fail("state.decay", "must be >= 0");
  } else if (s.constructor == "coherent") {
    if (s.centers.empty()) fail("state.centers", "coherent states need at least one center");
    if (field(j, "rank") && s.rank != static_cast<int>(s.centers.size())) {
      fail("state.rank", "must equal the number of centers");
    }
    s.rank = static_cast<int>(s.centers.size());
    if (s.width && !(*s.width > 0.0)) fail("state.width", "must be positive");
  } else if (s.constructor == "plane_wave") {
    if (s.modes.empty()) fail("state.modes", "plane-wave states need at least one mode");
    if (!s.weights.empty() && s.weights.size() != s.modes.size()) {
      fail("state.weights", "needs one weight per mode");
    }
    for (double w : s.weights) {
      if (!(w > 0.0)) fail("state.weights", "weights must be positive");
    }
    s.rank = static_cast<int>(s.modes.size());
  } else {
    fail("state.constructor", "must be random, coherent or plane_wave");
  }
  return s;
}

TimeConfig parse_time(const json& j) {
  reject_unknown(j, "time", {"T", "dt", "cadence", "corrector_iterations"});
  TimeConfig t;
  if (const json* v = field(j, "T")) t.final_time = as_number(*v, "time.T");
  if (const json* v = field(j, "dt")) t.dt = as_number(*v, "time.dt");
  if (const json* v = field(j, "cadence")) t.cadence = as_int(*v, "time.cadence");
  if (const json* v = field(j, "corrector_iterations")) {
    t.corrector_iterations = as_int(*v, "time.corrector_iterations");
  }
  if (!(t.final_time >= 0.0)) fail("time.T", "must be >= 0");
  if (!(t.dt > 0.0)) fail("time.dt", "must be positive");
  if (t.cadence < 1) fail("time.cadence", "must be >= 1");
  if (t.corrector_iterations < 0) fail("time.corrector_iterations", "must be >= 0");
  const double ratio = t.final_time / t.dt;
  const long long steps = std::llround(ratio);
  if (std::abs(ratio - static_cast<double>(steps)) > 1e-9 * std::max(1.0, ratio)) {
    fail("time.T", "must be an integer multiple of dt");
  }
  if (steps % t.cadence != 0) fail("time.cadence", "must divide the number of steps");
  return t;
}

ObservableConfig parse_observables(const json& j, const PhysicsConfig& physics) {
  reject_unknown(j, "observables",
                 {"moments", "schatten_p", "weight_n", "weighted_p", "sobolev", "sobolev_q",
                  "check_localization", "lr_pm_eps", "eps", "delta", "density_norms", "energy"});
  ObservableConfig o;
  if (const json* v = field(j, "moments")) {
    if (!v->is_array()) fail("observables.moments", "expected an array");
    o.moments.clear();
    for (const auto& n : *v) o.moments.push_back(as_int(n, "observables.moments[]"));
  }
  if (const json* v = field(j, "schatten_p")) {
    if (!v->is_array()) fail("observables.schatten_p", "expected an array");
    o.schatten_p.clear();
    for (const auto& p : *v) o.schatten_p.push_back(as_exponent(p, "observables.schatten_p[]"));
  }
  if (const json* v = field(j, "weight_n")) o.weight_n = as_int(*v, "observables.weight_n");
  if (const json* v = field(j, "weighted_p")) {
    if (!v->is_array()) fail("observables.weighted_p", "expected an array");
    o.weighted_p.clear();
    for (const auto& p : *v) o.weighted_p.push_back(as_exponent(p, "observables.weighted_p[]"));
  }
  if (const json* v = field(j, "sobolev")) o.sobolev = as_bool(*v, "observables.sobolev");
  if (const json* v = field(j, "sobolev_q")) o.sobolev_q = as_exponent(*v, "observables.sobolev_q");
  if (const json* v = field(j, "check_localization")) {
    o.check_localization = as_bool(*v, "observables.check_localization");
  }
  if (const json* v = field(j, "lr_pm_eps")) o.lr_pm_eps = as_bool(*v, "observables.lr_pm_eps");
  if (const json* v = field(j, "eps")) o.eps = as_number(*v, "observables.eps");
  if (const json* v = field(j, "delta")) o.delta = as_number(*v, "observables.delta");
  if (const json* v = field(j, "density_norms")) {
    if (!v->is_array()) fail("observables.density_norms", "expected an array");
    for (const auto& e : *v) {
      if (!e.is_array() || e.size() != 2) fail("observables.density_norms[]", "expected [k, p]");
      o.density_norms.emplace_back(as_int(e[0], "observables.density_norms[]"),
                                   as_exponent(e[1], "observables.density_norms[]"));
    }
  }
  if (const json* v = field(j, "energy")) o.energy = as_bool(*v, "observables.energy");

  for (int n : o.moments) {
    if (n < 0 || n % 2 != 0) fail("observables.moments", "orders must be even and >= 0");
  }
  for (const auto& [k, p] : o.density_norms) {
    if (k < 0 || k % 2 != 0) fail("observables.density_norms", "orders must be even and >= 0");
  }
  const bool weighted_used = !o.weighted_p.empty() || o.sobolev || o.lr_pm_eps;
  if (weighted_used && (o.weight_n <= 0 || o.weight_n % 2 != 0)) {
    fail("observables.weight_n", "must be a positive even integer");
  }
  if (o.lr_pm_eps) {
    if (!(o.eps > 0.0 && o.eps < 1.0)) fail("observables.eps", "must lie in (0, 1)");
    if (!(o.delta > 0.0)) fail("observables.delta", "must be positive");
    if (!(physics.a < 1.0)) fail("observables.lr_pm_eps", "needs a < 1 so that r = 3/(1-a) is finite");
    if (!(3.0 / (1.0 - physics.a) - o.eps >= 1.0)) fail("observables.eps", "r - eps must be >= 1");
  }
  return o;
}

ChecksConfig parse_checks(const json& j) {
  reject_unknown(j, "checks",
                 {"inequalities", "ensemble_size", "interpolation", "merged_p", "schatten_moment",
                  "commutator_n", "axes", "weighted_commutator_n", "leibniz_tolerance", "oracle",
                  "oracle_samples", "self_check"});
  ChecksConfig c;
  auto int_list = [&](const char* key, std::vector<int>& out) {
    if (const json* v = field(j, key)) {
      if (!v->is_array()) fail(std::string("checks.") + key, "expected an array");
      out.clear();
      for (const auto& e : *v) out.push_back(as_int(e, std::string("checks.") + key));
    }
  };
  if (const json* v = field(j, "inequalities")) {
    if (!v->is_array()) fail("checks.inequalities", "expected an array");
    for (const auto& e : *v) {
      const std::string id = as_string(e, "checks.inequalities[]");
      if (!kInequalityIds.count(id)) fail("checks.inequalities", "unknown inequality '" + id + "'");
      c.inequalities.push_back(id);
    }
  }
  if (const json* v = field(j, "ensemble_size")) c.ensemble_size = as_int(*v, "checks.ensemble_size");
  if (const json* v = field(j, "interpolation")) {
    if (!v->is_array()) fail("checks.interpolation", "expected an array");
    c.interpolation.clear();
    for (const auto& e : *v) {
      if (!e.is_array() || e.size() != 2) fail("checks.interpolation[]", "expected [n, k]");
      c.interpolation.emplace_back(as_int(e[0], "checks.interpolation[]"),
                                   as_int(e[1], "checks.interpolation[]"));
    }
  }
  if (const json* v = field(j, "merged_p")) c.merged_p = as_exponent(*v, "checks.merged_p");
  if (const json* v = field(j, "schatten_moment")) {
    if (!v->is_array()) fail("checks.schatten_moment", "expected an array");
    c.schatten_moment.clear();
    for (const auto& e : *v) {
      if (!e.is_array() || e.size() != 2) fail("checks.schatten_moment[]", "expected [n, p]");
      c.schatten_moment.emplace_back(as_int(e[0], "checks.schatten_moment[]"),
                                     as_exponent(e[1], "checks.schatten_moment[]"));
    }
  }
  int_list("commutator_n", c.commutator_n);
  int_list("axes", c.axes);
  int_list("weighted_commutator_n", c.weighted_commutator_n);
  if (const json* v = field(j, "leibniz_tolerance")) {
    c.leibniz_tolerance = as_number(*v, "checks.leibniz_tolerance");
  }
  if (const json* v = field(j, "oracle")) {
    if (!v->is_array()) fail("checks.oracle", "expected an array");
    for (const auto& e : *v) {
      const std::string id = as_string(e, "checks.oracle[]");
      if (std::find(kOracleIds.begin(), kOracleIds.end(), id) == kOracleIds.end()) {
        fail("checks.oracle", "unknown oracle check '" + id + "'");
      }
      c.oracle.push_back(id);
    }
  }
  if (const json* v = field(j, "oracle_samples")) c.oracle_samples = as_int(*v, "checks.oracle_samples");
  if (const json* v = field(j, "self_check")) c.self_check = as_bool(*v, "checks.self_check");

  if (c.ensemble_size < 1) fail("checks.ensemble_size", "must be >= 1");
  if (c.oracle_samples < 1) fail("checks.oracle_samples", "must be >= 1");
  for (const auto& [n, k] : c.interpolation) {
    if (n < 2 || n % 2 != 0 || k < 0 || k > n || k % 2 != 0) {
      fail("checks.interpolation", "needs even n >= 2 and even 0 <= k <= n");
    }
  }
  for (const auto& [n, p] : c.schatten_moment) {
    if (n <= 0 || n % 2 != 0 || !(p >= 2.0) || std::isinf(p)) {
      fail("checks.schatten_moment", "needs even n > 0 and finite p >= 2");
    }
  }
  for (int n : c.commutator_n) {
    if (n < 2 || n % 2 != 0) fail("checks.commutator_n", "orders must be even and >= 2");
  }
  for (int l : c.axes) {
    if (l < 1 || l > 3) fail("checks.axes", "axes are 1, 2 or 3");
  }
  for (int n : c.weighted_commutator_n) {
    if (n < 1) fail("checks.weighted_commutator_n", "orders must be >= 1");
  }
  if (!(c.leibniz_tolerance > 0.0)) fail("checks.leibniz_tolerance", "must be positive");
  return c;
}

json to_json(const RunConfig& c) {
  json centers = json::array();
  for (const auto& pc : c.state.centers) centers.push_back({{"x", pc.position}, {"v", pc.velocity}});
  json modes = json::array();
  for (const auto& m : c.state.modes) modes.push_back(m);
  json state = {{"constructor", c.state.constructor}, {"rank", c.state.rank},
                {"seed", c.state.seed},               {"decay", c.state.decay},
                {"centers", centers},                 {"modes", modes},
                {"weights", c.state.weights}};
  if (c.state.width) state["width"] = *c.state.width;
  json physics = {{"a", c.physics.a},
                  {"sign", c.physics.sign},
                  {"hbar", c.physics.hbar},
                  {"mode", to_string(c.physics.mode)},
                  {"dealias", c.physics.dealias}};
  if (c.physics.exchange_coefficient) physics["exchange_coefficient"] = *c.physics.exchange_coefficient;
  json schatten = json::array(), weighted = json::array(), dens = json::array();
  for (double p : c.observables.schatten_p) schatten.push_back(exponent_json(p));
  for (double p : c.observables.weighted_p) weighted.push_back(exponent_json(p));
  for (const auto& [k, p] : c.observables.density_norms) dens.push_back({k, exponent_json(p)});
  json obs = {{"moments", c.observables.moments},
              {"schatten_p", schatten},
              {"weight_n", c.observables.weight_n},
              {"weighted_p", weighted},
              {"sobolev", c.observables.sobolev},
              {"sobolev_q", exponent_json(c.observables.sobolev_q)},
              {"check_localization", c.observables.check_localization},
              {"lr_pm_eps", c.observables.lr_pm_eps},
              {"eps", c.observables.eps},
              {"delta", c.observables.delta},
              {"density_norms", dens},
              {"energy", c.observables.energy}};
  json interp = json::array(), sm = json::array();
  for (const auto& [n, k] : c.checks.interpolation) interp.push_back({n, k});
  for (const auto& [n, p] : c.checks.schatten_moment) sm.push_back({n, exponent_json(p)});
  json checks = {{"inequalities", c.checks.inequalities},
                 {"ensemble_size", c.checks.ensemble_size},
                 {"interpolation", interp},
                 {"schatten_moment", sm},
                 {"commutator_n", c.checks.commutator_n},
                 {"axes", c.checks.axes},
                 {"weighted_commutator_n", c.checks.weighted_commutator_n},
                 {"leibniz_tolerance", c.checks.leibniz_tolerance},
                 {"oracle", c.checks.oracle},
                 {"oracle_samples", c.checks.oracle_samples},
                 {"self_check", c.checks.self_check}};
  if (c.checks.merged_p) checks["merged_p"] = exponent_json(*c.checks.merged_p);
  return {{"grid", {{"N", c.grid.points}, {"L", c.grid.length}}},
          {"physics", physics},
          {"state", state},
          {"time",
           {{"T", c.time.final_time},
            {"dt", c.time.dt},
            {"cadence", c.time.cadence},
            {"corrector_iterations", c.time.corrector_iterations}}},
          {"observables", obs},
          {"checks", checks}};
}

void rehash(RunConfig& c) {
  c.echo = to_json(c);
  c.hash = fnv1a_hex(c.echo.dump());
}

// ---------------------------------------------------------------------------
// Output helpers

std::string iso_time(std::chrono::system_clock::time_point tp) {
  const std::time_t t = std::chrono::system_clock::to_time_t(tp);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  out << text;
  if (!out) throw FormatError("failed writing " + path.string());
}

json admissibility_json(const RunConfig& c) {
  const Admissibility base = admissibility(c.physics.a, 2);
  json short_time = json::object();
  std::set<int> orders(c.observables.moments.begin(), c.observables.moments.end());
  orders.insert(c.observables.weight_n);
  for (int n : orders) {
    if (n >= 2) short_time[std::to_string(n)] = admissibility(c.physics.a, n).short_time;
  }
  return {{"regularity", base.regularity}, {"moments", base.moments}, {"short_time", short_time}};
}

json manifest_base(const RunConfig& c, const CommandOptions& o, const std::string& command,
                   std::chrono::system_clock::time_point start) {
  const auto end = std::chrono::system_clock::now();
  return {{"command", command},
          {"config", c.echo},
          {"config_hash", c.hash},
          {"version", version_string()},
          {"git", HFLAB_GIT},
          {"start", iso_time(start)},
          {"end", iso_time(end)},
          {"wall_seconds", std::chrono::duration<double>(end - start).count()},
          {"threads", o.threads},
          {"admissibility", admissibility_json(c)}};
}

// Runs fn(i) for i in [0, count) on `threads` workers. Exceptions are kept per index and the
// first one (lowest index) is rethrown after all workers finish.
template <class Fn>
void parallel_for(std::size_t count, int threads, Fn fn) {
  std::vector<std::exception_ptr> errors(count);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const int n = std::max(1, std::min<int>(threads, static_cast<int>(count)));
  if (n == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

// ---------------------------------------------------------------------------
// Single evolution

struct EvolveOutcome {
  int exit_code = kExitOk;
  std::string status = "ok";
  std::string message;
  double hbar = 0.0;
  std::vector<std::string> columns;
  std::vector<ObservableRecord> records;
  std::optional<MixedState> final_state;
  int steps = 0;
  double max_drift = 0.0;
  int localization_lost = 0;
};

EvolveOutcome run_evolution(const RunConfig& c, double hbar) {
  EvolveOutcome out;
  out.hbar = hbar;
  out.columns = observable_columns(c.observables);
  const GridPtr grid = TorusGrid::create(c.grid.points, c.grid.length);
  const InteractionKernel kernel(grid, c.physics.a, c.physics.sign, c.physics.dealias);
  const MixedState initial = build_state(c, grid, hbar);
  PropagatorConfig pc;
  pc.mode = c.physics.mode;
  pc.dt = c.time.dt;
  pc.corrector_iterations = c.time.corrector_iterations;
  pc.exchange_coefficient = c.physics.exchange_coefficient;
  const std::optional<double> coef =
      c.physics.mode == Mode::hartree ? std::optional<double>{} : c.physics.exchange_coefficient;

  auto observer = [&](int, double t, const MixedState& s) {
    ObservableRecord r = observe(c.observables, kernel, s, c.physics.mode, t, coef);
    if (r.localization_lost) ++out.localization_lost;
    out.records.push_back(std::move(r));
  };
  try {
    EvolveResult res = evolve(kernel, initial, c.time.final_time, pc, c.time.cadence, observer);
    out.steps = res.steps;
    out.max_drift = res.max_drift;
    out.final_state = std::move(res.state);
  } catch (const DriftAlarm& e) {
    out.exit_code = kExitDrift;
    out.status = "drift";
    out.message = e.what();
    out.max_drift = e.drift();
  }
  if (out.exit_code == kExitOk && c.checks.self_check && !out.records.empty()) {
    for (std::size_t i = 0; i < out.columns.size(); ++i) {
      if (out.columns[i].rfind("M_", 0) != 0) continue;
      const double v0 = out.records.front().values[i];
      for (const auto& r : out.records) {
        if (!(std::abs(r.values[i] - v0) <= 1e-12 * std::max(1.0, std::abs(v0)))) {
          out.exit_code = kExitCorrectness;
          out.status = "self_check_failed";
          out.message = out.columns[i] + " not conserved at t = " + format_number(r.time);
        }
      }
    }
  }
  return out;
}

void write_evolution(const RunConfig& c, const CommandOptions& o, const EvolveOutcome& run,
                     const std::filesystem::path& dir, std::chrono::system_clock::time_point start) {
  std::filesystem::create_directories(dir);
  std::ostringstream csv;
  csv << "# config_hash=" << c.hash << "\n";
  csv << "t";
  for (const auto& name : run.columns) csv << "," << name;
  csv << "\n";
  for (const auto& r : run.records) {
    csv << format_number(r.time);
    for (double v : r.values) csv << "," << format_number(v);
    csv << "\n";
  }
  write_text(dir / "timeseries.csv", csv.str());
  json outputs = {"timeseries.csv"};
  std::string snapshot_hash;
  if (run.final_state) {
    write_snapshot(*run.final_state, dir / "final_state.hfls");
    outputs.push_back("final_state.hfls");
    const auto bytes = encode_snapshot(*run.final_state);
    snapshot_hash = fnv1a_hex(std::string(bytes.begin(), bytes.end()));
  }
  json m = manifest_base(c, o, "evolve", start);
  if (!snapshot_hash.empty()) m["final_state_hash"] = snapshot_hash;
  m["hbar"] = run.hbar;
  m["seed"] = c.state.seed;
  m["status"] = run.status;
  m["exit_code"] = run.exit_code;
  m["message"] = run.message;
  m["steps"] = run.steps;
  m["samples"] = run.records.size();
  m["max_orthonormality_drift"] = run.max_drift;
  m["localization_lost_samples"] = run.localization_lost;
  m["outputs"] = outputs;
  write_text(dir / "manifest.json", m.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Ensemble evaluation

struct LabeledReport {
  std::string label;
  IneqReport report;
};

std::vector<LabeledReport> evaluate_member(const RunConfig& c, const GridPtr& grid,
                                           const InteractionKernel& kernel, double hbar,
                                           std::uint64_t seed) {
  const MixedState state = build_state(c, grid, hbar, seed);
  std::vector<LabeledReport> out;
  auto push = [&](std::string label, IneqReport r) {
    r.seed = seed;
    r.t = 0.0;
    r.hbar = hbar;
    out.push_back({std::move(label), std::move(r)});
  };
  for (const auto& id : c.checks.inequalities) {
    if (id == "kinetic_interpolation") {
      for (const auto& [n, k] : c.checks.interpolation) {
        push("n=" + std::to_string(n) + ",k=" + std::to_string(k), check_kinetic_interpolation(state, n, k));
      }
    } else if (id == "merged_interpolation") {
      for (const auto& [n, k] : c.checks.interpolation) {
        if (n < 4) continue;
        const double p = c.checks.merged_p.value_or((3.0 + n) / (3.0 + k));
        push("n=" + std::to_string(n) + ",k=" + std::to_string(k) + ",p=" + short_number(p),
             check_merged_interpolation(state, n, k, p));
      }
    } else if (id == "weighted_schatten_moment") {
      for (const auto& [n, p] : c.checks.schatten_moment) {
        push("n=" + std::to_string(n) + ",p=" + short_number(p), check_weighted_schatten_moment(state, n, p));
      }
    } else if (id == "commutator_V") {
      for (int n : c.checks.commutator_n) {
        for (int l : c.checks.axes) {
          push("n=" + std::to_string(n) + ",l=" + std::to_string(l), commutator_trace_V(kernel, state, n, l - 1));
        }
      }
    } else if (id == "commutator_X") {
      for (int n : c.checks.commutator_n) {
        for (int l : c.checks.axes) {
          auto chk = commutator_trace_X(kernel, state, n, l - 1, c.checks.leibniz_tolerance);
          push("n=" + std::to_string(n) + ",l=" + std::to_string(l), std::move(chk.report));
        }
      }
    } else if (id == "weighted_commutator") {
      const MixedState mu = random_mixed_state(seed ^ 0x9e3779b97f4a7c15ULL, hbar, grid,
                                               std::max(1, c.state.rank), c.state.decay);
      for (int n : c.checks.weighted_commutator_n) {
        for (int l : c.checks.axes) {
          auto reps = check_weighted_commutator(kernel, state, mu, n, l - 1, c.observables.delta,
                                                c.observables.eps);
          const std::string label = "n=" + std::to_string(n) + ",j=" + std::to_string(l);
          push(label, std::move(reps.force));
          push(label, std::move(reps.potential));
        }
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Oracle suite

struct OracleCheck {
  std::string id;
  int samples = 0;
  double worst = 0.0;
  double tolerance = 0.0;
  std::string detail;
  bool pass() const { return std::isfinite(worst) && worst <= tolerance; }
};

double rel_gap(double a, double b) {
  const double scale = std::max({std::abs(a), std::abs(b), 1e-300});
  return std::abs(a - b) / scale;
}

ScalarField random_field(const GridPtr& grid, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  ScalarField f(grid);
  for (auto& v : f.values()) v = {normal(rng), normal(rng)};
  return f;
}

OracleCheck oracle_check(const RunConfig& c, const std::string& id, const GridPtr& grid,
                         const InteractionKernel& kernel, double hbar) {
  OracleCheck chk;
  chk.id = id;
  const int samples = c.checks.oracle_samples;
  const std::uint64_t base = c.state.seed;
  const int rank = std::max(1, c.state.rank);
  auto state_of = [&](int i) { return random_mixed_state(base + i, hbar, grid, rank, c.state.decay); };

  if (id == "densify") {
    chk.tolerance = 1e-10;
    for (int i = 0; i < samples; ++i) {
      const MixedState s = state_of(i);
      const DenseOperator d = densify(s);
      const auto e = dense_eigenvalues(d);
      for (int k = 0; k < s.rank(); ++k) {
        chk.worst = std::max(chk.worst, std::abs(e[k] - s.weights()[k]) / s.operator_norm());
      }
      for (std::size_t k = s.rank(); k < e.size(); ++k) {
        chk.worst = std::max(chk.worst, std::abs(e[k]) / s.operator_norm());
      }
      chk.worst = std::max(chk.worst, std::abs(dense_normalized_trace(d, hbar) - 1.0));
    }
    chk.samples = samples;
  } else if (id == "propagation") {
    chk.tolerance = 1e-5;
    const MixedState s = build_state(c, grid, hbar);
    PropagatorConfig pc;
    pc.mode = c.physics.mode;
    pc.dt = c.time.dt;
    pc.corrector_iterations = c.time.corrector_iterations;
    const EvolveResult lr = evolve(kernel, s, c.time.final_time, pc, 1, nullptr);
    const DenseEvolveResult dr =
        dense_evolve_rk4(kernel, densify(s), hbar, c.time.final_time, c.time.dt, c.physics.mode);
    chk.worst = dense_frobenius_distance(densify(lr.state), dr.gamma) / frobenius_norm(s);
    chk.samples = 1;
    chk.detail = "steps=" + std::to_string(lr.steps);
  } else if (id == "singular_values") {
    chk.tolerance = 1e-9;
    std::mt19937_64 rng(base);
    for (int i = 0; i < samples; ++i) {
      LowRankOperator op;
      for (int k = 0; k < 6; ++k) {
        op.left.push_back(random_field(grid, rng));
        op.right.push_back(random_field(grid, rng));
      }
      const auto s = low_rank_singular_values(op);
      const auto d = dense_singular_values(densify(op));
      for (std::size_t k = 0; k < s.size(); ++k) chk.worst = std::max(chk.worst, std::abs(s[k] - d[k]) / d[0]);
    }
    chk.samples = samples;
  } else if (id == "weighted_schatten") {
    chk.tolerance = 1e-8;
    const int n = c.observables.weight_n;
    for (int i = 0; i < samples; ++i) {
      const MixedState s = state_of(i);
      const DenseOperator d = densify(s);
      for (double p : {kInfinity, 1.0, 2.0, 3.0}) {
        chk.worst = std::max(chk.worst, rel_gap(weighted_schatten(s, n, p), dense_weighted(d, n, p, hbar)));
      }
    }
    chk.samples = samples;
  } else if (id == "sobolev") {
    chk.tolerance = 1e-8;
    SobolevOptions opts;
    opts.check_localization = false;
    const int n = c.observables.weight_n;
    for (int i = 0; i < samples; ++i) {
      const MixedState s = state_of(i);
      const SobolevNorm a = sobolev_norm(s, n, c.observables.sobolev_q, opts);
      const SobolevNorm b = dense_sobolev(densify(s), n, c.observables.sobolev_q, hbar);
      chk.worst = std::max(chk.worst, rel_gap(a.base, b.base));
      for (int k = 0; k < 6; ++k) chk.worst = std::max(chk.worst, rel_gap(a.directions[k], b.directions[k]));
    }
    chk.samples = samples;
  } else if (id == "commutator_V" || id == "commutator_X") {
    chk.tolerance = 1e-9;
    const bool v = id == "commutator_V";
    for (int i = 0; i < samples; ++i) {
      const MixedState s = state_of(i);
      const DenseOperator d = densify(s);
      for (int n : c.checks.commutator_n) {
        for (int l : c.checks.axes) {
          const double lr = v ? commutator_trace_V_value(kernel, s, n, l - 1)
                              : commutator_trace_X_value(kernel, s, n, l - 1, TraceMethod::direct);
          const double dv = dense_commutator_trace(kernel, d, n, l - 1,
                                                   v ? TraceOperator::V : TraceOperator::X, hbar);
          chk.worst = std::max(chk.worst, rel_gap(lr, dv));
        }
      }
    }
    chk.samples = samples;
  } else if (id == "weighted_commutator") {
    chk.tolerance = 1e-8;
    for (int i = 0; i < samples; ++i) {
      const MixedState g = state_of(i);
      const MixedState mu = state_of(i + samples);
      const DenseOperator dg = densify(g), dm = densify(mu);
      for (int n : c.checks.weighted_commutator_n) {
        for (int l : c.checks.axes) {
          const auto reps = check_weighted_commutator(kernel, g, mu, n, l - 1, c.observables.delta,
                                                      c.observables.eps);
          chk.worst = std::max(chk.worst, rel_gap(reps.force.lhs,
                                                  dense_weighted_commutator(kernel, dg, dm, n, l - 1, true, hbar)));
          chk.worst = std::max(chk.worst, rel_gap(reps.potential.lhs,
                                                  dense_weighted_commutator(kernel, dg, dm, n, l - 1, false, hbar)));
        }
      }
    }
    chk.samples = samples;
  }
  return chk;
}

}  // namespace

// ---------------------------------------------------------------------------

std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string version_string() { return HFLAB_VERSION; }

RunConfig parse_config(const json& doc) {
  reject_unknown(doc, "config", {"grid", "physics", "state", "time", "observables", "checks"});
  static const json empty = json::object();
  auto section = [&](const char* key) -> const json& {
    const json* v = field(doc, key);
    return v ? *v : empty;
  };
  RunConfig c;
  c.grid = parse_grid(section("grid"));
  c.physics = parse_physics(section("physics"));
  c.state = parse_state(section("state"));
  c.time = parse_time(section("time"));
  c.observables = parse_observables(section("observables"), c.physics);
  c.checks = parse_checks(section("checks"));
  if (c.checks.self_check && c.physics.sign != 0) fail("checks.self_check", "requires physics.sign = 0");
  if (c.state.constructor == "random" && c.state.rank > c.grid.points * c.grid.points * c.grid.points) {
    fail("state.rank", "exceeds the grid dimension");
  }
  rehash(c);
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw ConfigError("config is not valid JSON: " + std::string(e.what()));
  }
  return parse_config(doc);
}

MixedState build_state(const RunConfig& c, const GridPtr& grid, double hbar,
                       std::optional<std::uint64_t> seed) {
  const StateConfig& s = c.state;
  if (s.constructor == "random") {
    return random_mixed_state(seed.value_or(s.seed), hbar, grid, s.rank, s.decay);
  }
  if (s.constructor == "coherent") {
    return coherent_state_lattice(hbar, grid, s.centers, s.width.value_or(default_coherent_width(hbar, *grid)));
  }
  std::vector<double> w = s.weights.empty() ? std::vector<double>(s.modes.size(), 1.0) : s.weights;
  return plane_wave_state(hbar, grid, s.modes, std::move(w));
}

int cmd_evolve(const RunConfig& c, const CommandOptions& o) {
  if (c.physics.hbar.size() != 1) throw ConfigError("evolve takes exactly one hbar value; use sweep");
  const auto start = std::chrono::system_clock::now();
  const EvolveOutcome run = run_evolution(c, c.physics.hbar.front());
  write_evolution(c, o, run, o.out, start);
  if (!run.message.empty()) std::cerr << run.message << "\n";
  return run.exit_code;
}

int cmd_sweep(const RunConfig& c, const CommandOptions& o) {
  const auto& hbars = c.physics.hbar;
  if (hbars.size() < 2) throw ConfigError("sweep needs at least two hbar values");
  const auto start = std::chrono::system_clock::now();
  std::vector<EvolveOutcome> runs(hbars.size());
  parallel_for(hbars.size(), o.threads, [&](std::size_t i) { runs[i] = run_evolution(c, hbars[i]); });

  std::filesystem::create_directories(o.out);
  json members = json::array();
  int code = kExitOk;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const std::string name = "hbar_" + std::to_string(i) + "_" + short_number(hbars[i]);
    write_evolution(c, o, runs[i], o.out / name, start);
    members.push_back({{"hbar", hbars[i]}, {"dir", name}, {"status", runs[i].status}});
    code = std::max(code, runs[i].exit_code);
  }

  // Per-time statistics over the common prefix of samples.
  const auto& cols = runs.front().columns;
  std::size_t rows = runs.front().records.size();
  for (const auto& r : runs) rows = std::min(rows, r.records.size());
  auto spread = [](double mx, double mn) {
    if (mx == mn) return 0.0;
    return mn > 0.0 ? mx / mn - 1.0 : std::numeric_limits<double>::quiet_NaN();
  };
  std::ostringstream csv;
  csv << "# config_hash=" << c.hash << "\n";
  csv << "t";
  for (const auto& col : cols) csv << "," << col << "_max," << col << "_min," << col << "_spread";
  csv << "\n";
  for (std::size_t t = 0; t < rows; ++t) {
    csv << format_number(runs.front().records[t].time);
    for (std::size_t q = 0; q < cols.size(); ++q) {
      double mx = -kInfinity, mn = kInfinity;
      for (const auto& r : runs) {
        mx = std::max(mx, r.records[t].values[q]);
        mn = std::min(mn, r.records[t].values[q]);
      }
      csv << "," << format_number(mx) << "," << format_number(mn) << "," << format_number(spread(mx, mn));
    }
    csv << "\n";
  }
  write_text(o.out / "sweep_summary.csv", csv.str());

  // Peak over time per hbar and the spread of the peaks.
  std::ostringstream peaks;
  peaks << "# config_hash=" << c.hash << "\n";
  peaks << "quantity";
  for (std::size_t i = 0; i < runs.size(); ++i) peaks << ",peak_hbar_" << i;
  peaks << ",peak_max,peak_min,peak_spread\n";
  for (std::size_t q = 0; q < cols.size(); ++q) {
    peaks << cols[q];
    double mx = -kInfinity, mn = kInfinity;
    for (const auto& r : runs) {
      double peak = -kInfinity;
      for (std::size_t t = 0; t < rows; ++t) peak = std::max(peak, r.records[t].values[q]);
      peaks << "," << format_number(peak);
      mx = std::max(mx, peak);
      mn = std::min(mn, peak);
    }
    peaks << "," << format_number(mx) << "," << format_number(mn) << "," << format_number(spread(mx, mn)) << "\n";
  }
  write_text(o.out / "sweep_peaks.csv", peaks.str());

  json m = manifest_base(c, o, "sweep", start);
  m["members"] = members;
  m["summary_rows"] = rows;
  m["exit_code"] = code;
  m["outputs"] = {"sweep_summary.csv", "sweep_peaks.csv"};
  write_text(o.out / "manifest.json", m.dump(2) + "\n");
  return code;
}

int cmd_ensemble(const RunConfig& c, const CommandOptions& o) {
  if (c.checks.inequalities.empty()) throw ConfigError("ensemble needs at least one inequality id");
  const auto start = std::chrono::system_clock::now();
  const auto& hbars = c.physics.hbar;
  const std::size_t members = static_cast<std::size_t>(c.checks.ensemble_size);
  const GridPtr grid = TorusGrid::create(c.grid.points, c.grid.length);
  const InteractionKernel kernel(grid, c.physics.a, c.physics.sign, c.physics.dealias);

  std::vector<std::vector<LabeledReport>> results(hbars.size() * members);
  std::atomic<bool> abort{false};
  std::string alarm;
  try {
    parallel_for(results.size(), o.threads, [&](std::size_t idx) {
      if (abort) return;
      const std::size_t h = idx / members, i = idx % members;
      try {
        results[idx] = evaluate_member(c, grid, kernel, hbars[h], c.state.seed + i);
      } catch (const ConsistencyError&) {
        abort = true;
        throw;
      }
    });
  } catch (const ConsistencyError& e) {
    alarm = e.what();
  }

  std::filesystem::create_directories(o.out);
  std::ostringstream jsonl;
  std::map<std::pair<std::string, std::size_t>, std::vector<IneqReport>> groups;
  std::vector<std::pair<std::string, std::size_t>> order;
  for (std::size_t idx = 0; idx < results.size(); ++idx) {
    for (const auto& lr : results[idx]) {
      json j = json::parse(lr.report.to_json());
      j["label"] = lr.label;
      j["config_hash"] = c.hash;
      jsonl << j.dump() << "\n";
      const auto key = std::make_pair(lr.report.id + "[" + lr.label + "]", idx / members);
      if (!groups.count(key)) order.push_back(key);
      groups[key].push_back(lr.report);
    }
  }
  write_text(o.out / "reports.jsonl", jsonl.str());

  std::ostringstream agg;
  agg << "# config_hash=" << c.hash << "\n";
  agg << "inequality,hbar,count,max_ratio,median_ratio,all_finite\n";
  std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second < b.second : a.first < b.first;
  });
  for (const auto& key : order) {
    const EnsembleAggregate a = aggregate(groups[key]);
    agg << key.first << "," << format_number(hbars[key.second]) << "," << a.count << ","
        << format_number(a.max_ratio) << "," << format_number(a.median_ratio) << ","
        << (a.all_finite ? "true" : "false") << "\n";
  }
  write_text(o.out / "aggregate.csv", agg.str());

  const int code = alarm.empty() ? kExitOk : kExitCorrectness;
  json m = manifest_base(c, o, "ensemble", start);
  m["exit_code"] = code;
  m["status"] = alarm.empty() ? "ok" : "correctness_alarm";
  m["message"] = alarm;
  m["outputs"] = {"reports.jsonl", "aggregate.csv"};
  write_text(o.out / "manifest.json", m.dump(2) + "\n");
  if (!alarm.empty()) std::cerr << "correctness alarm: " << alarm << "\n";
  return code;
}

int cmd_oracle(const RunConfig& c, const CommandOptions& o) {
  if (c.grid.points > kDenseMaxPoints) {
    throw ConfigError("oracle suite needs grid.N <= " + std::to_string(kDenseMaxPoints));
  }
  if (c.checks.oracle.empty()) throw ConfigError("oracle suite needs a non-empty checks.oracle list");
  const auto start = std::chrono::system_clock::now();
  const GridPtr grid = TorusGrid::create(c.grid.points, c.grid.length);
  const InteractionKernel kernel(grid, c.physics.a, c.physics.sign, c.physics.dealias);
  const double hbar = c.physics.hbar.front();

  std::vector<OracleCheck> checks(c.checks.oracle.size());
  parallel_for(checks.size(), o.threads,
               [&](std::size_t i) {
                 try {
                   checks[i] = oracle_check(c, c.checks.oracle[i], grid, kernel, hbar);
                 } catch (const DriftAlarm& e) {
                   checks[i] = {c.checks.oracle[i], 0, std::numeric_limits<double>::quiet_NaN(), 0.0, e.what()};
                 } catch (const ConsistencyError& e) {
                   checks[i] = {c.checks.oracle[i], 0, std::numeric_limits<double>::quiet_NaN(), 0.0, e.what()};
                 }
               });

  bool pass = true;
  json list = json::array();
  for (const auto& chk : checks) {
    pass = pass && chk.pass();
    list.push_back({{"id", chk.id},
                    {"samples", chk.samples},
                    {"worst", chk.worst},
                    {"tolerance", chk.tolerance},
                    {"pass", chk.pass()},
                    {"detail", chk.detail}});
  }
  std::filesystem::create_directories(o.out);
  json report = {{"config_hash", c.hash}, {"hbar", hbar}, {"pass", pass}, {"checks", list}};
  write_text(o.out / "oracle_report.json", report.dump(2) + "\n");
  const int code = pass ? kExitOk : kExitOracle;
  json m = manifest_base(c, o, "oracle", start);
  m["exit_code"] = code;
  m["outputs"] = {"oracle_report.json"};
  write_text(o.out / "manifest.json", m.dump(2) + "\n");
  return code;
}

int run_command(const std::string& command, const std::filesystem::path& config_path,
                const CommandOptions& options) {
  try {
    if (options.threads < 1) throw ConfigError("--threads must be >= 1");
    RunConfig c = load_config(config_path);
    if (options.seed) {
      c.state.seed = *options.seed;
      rehash(c);
    }
    if (command == "evolve") return cmd_evolve(c, options);
    if (command == "sweep") return cmd_sweep(c, options);
    if (command == "ensemble") return cmd_ensemble(c, options);
    if (command == "oracle") return cmd_oracle(c, options);
    throw ConfigError("unknown command '" + command + "'");
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const InvalidArgument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const OrthonormalityError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DriftAlarm& e) {
    std::cerr << "drift alarm: " << e.what() << "\n";
    return kExitDrift;
  } catch (const ConsistencyError& e) {
    std::cerr << "correctness alarm: " << e.what() << "\n";
    return kExitCorrectness;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace hflab
