#include "common.hpp"

#include <filesystem>
#include <fstream>

#include "hflab/harness.hpp"

using namespace hflab;
using namespace hflab::test;
using nlohmann::json;

namespace {

std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("hflab_unit_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::filesystem::path write_config(const std::filesystem::path& dir, const json& j) {
  auto path = dir / "config.json";
  std::ofstream(path) << j.dump();
  return path;
}

json small_config() {
  return json::parse(R"({
    "grid": {"N": 8, "L": 6.283185307179586},
    "physics": {"a": 0.3, "sign": -1, "hbar": [1.0], "mode": "hartree_fock"},
    "state": {"constructor": "random", "rank": 2, "seed": 3, "decay": 0.1},
    "time": {"T": 0.0, "dt": 0.01, "cadence": 1},
    "observables": {"sobolev": false}
  })");
}

std::vector<std::string> lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

}  // namespace

TEST_CASE("fnv1a") {
  CHECK(fnv1a_hex("") == "cbf29ce484222325");
  CHECK(fnv1a_hex("a") == "af63dc4c8601ec8c");
}

TEST_CASE("config parsing") {
  auto c = parse_config(small_config());
  CHECK(c.grid.points == 8);
  CHECK(c.hash.size() == 16);
  CHECK(parse_config(small_config()).hash == c.hash);
  auto changed = small_config();
  changed["state"]["seed"] = 4;
  CHECK(parse_config(changed).hash != c.hash);

  auto bad = small_config();
  bad["grid"]["M"] = 3;
  CHECK_THROWS_AS(parse_config(bad), ConfigError);
  bad = small_config();
  bad["grid"]["N"] = 7;
  CHECK_THROWS_AS(parse_config(bad), ConfigError);
  bad = small_config();
  bad["physics"]["mode"] = "fock";
  CHECK_THROWS_AS(parse_config(bad), ConfigError);
  bad = small_config();
  bad["time"]["dt"] = -1;
  CHECK_THROWS_AS(parse_config(bad), ConfigError);
  bad = small_config();
  bad["state"]["rank"] = "two";
  CHECK_THROWS_AS(parse_config(bad), ConfigError);
}

TEST_CASE("evolve at T = 0 writes one row") {
  auto dir = scratch_dir("t0");
  auto cfg = write_config(dir, small_config());
  CommandOptions o;
  o.out = dir / "out";
  CHECK(run_command("evolve", cfg, o) == kExitOk);
  auto rows = lines(o.out / "timeseries.csv");
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].rfind("# config_hash=", 0) == 0);
  CHECK(rows[1].rfind("t,", 0) == 0);
  CHECK(std::filesystem::exists(o.out / "final_state.hfls"));
  auto manifest = json::parse(std::ifstream(o.out / "manifest.json"));
  CHECK(manifest["status"] == "ok");
  CHECK(manifest.contains("config"));
  CHECK(manifest.contains("admissibility"));
}

TEST_CASE("evolve is bitwise reproducible") {
  auto dir = scratch_dir("repro");
  auto j = small_config();
  j["time"]["T"] = 0.05;
  j["time"]["cadence"] = 5;
  auto cfg = write_config(dir, j);
  CommandOptions a, b;
  a.out = dir / "a";
  b.out = dir / "b";
  CHECK(run_command("evolve", cfg, a) == kExitOk);
  CHECK(run_command("evolve", cfg, b) == kExitOk);
  CHECK(lines(a.out / "timeseries.csv") == lines(b.out / "timeseries.csv"));
}

TEST_CASE("free evolution self check") {
  auto dir = scratch_dir("free");
  auto j = small_config();
  j["physics"]["sign"] = 0;
  j["time"]["T"] = 0.05;
  j["checks"] = {{"self_check", true}};
  CommandOptions o;
  o.out = dir / "out";
  CHECK(run_command("evolve", write_config(dir, j), o) == kExitOk);
}

TEST_CASE("sweep with a duplicated hbar has zero spread") {
  auto dir = scratch_dir("sweep");
  auto j = small_config();
  j["physics"]["hbar"] = {0.5, 0.5};
  j["time"]["T"] = 0.02;
  CommandOptions o;
  o.out = dir / "out";
  o.threads = 2;
  CHECK(run_command("sweep", write_config(dir, j), o) == kExitOk);
  auto rows = lines(o.out / "sweep_summary.csv");
  REQUIRE(rows.size() == 2 + 3);
  auto header = rows[1];
  auto last = rows.back();
  std::vector<std::string> h, v;
  for (std::stringstream hs(header); hs.good();) { std::string s; std::getline(hs, s, ','); h.push_back(s); }
  for (std::stringstream vs(last); vs.good();) { std::string s; std::getline(vs, s, ','); v.push_back(s); }
  REQUIRE(h.size() == v.size());
  for (std::size_t i = 0; i < h.size(); ++i) {
    if (h[i].find("spread") != std::string::npos) CHECK(std::stod(v[i]) == 0.0);
  }
}

TEST_CASE("ensemble is seed deterministic") {
  auto dir = scratch_dir("ens");
  auto j = small_config();
  j["checks"] = {{"inequalities", {"kinetic_interpolation", "commutator_V"}}, {"ensemble_size", 3}};
  auto cfg = write_config(dir, j);
  CommandOptions a, b;
  a.out = dir / "a";
  b.out = dir / "b";
  b.threads = 3;
  CHECK(run_command("ensemble", cfg, a) == kExitOk);
  CHECK(run_command("ensemble", cfg, b) == kExitOk);
  CHECK(lines(a.out / "reports.jsonl") == lines(b.out / "reports.jsonl"));
  CHECK(std::filesystem::exists(a.out / "aggregate.csv"));
}

TEST_CASE("oracle gates") {
  auto dir = scratch_dir("oracle");
  auto j = small_config();
  j["checks"] = {{"oracle", {"densify", "singular_values"}}, {"oracle_samples", 2}};
  CommandOptions o;
  o.out = dir / "ok";
  CHECK(run_command("oracle", write_config(dir, j), o) == kExitOk);
  CHECK(std::filesystem::exists(o.out / "oracle_report.json"));
  j["grid"]["N"] = 16;
  o.out = dir / "big";
  CHECK(run_command("oracle", write_config(dir, j), o) == kExitConfig);
  j["grid"]["N"] = 8;
  j["checks"]["oracle"] = json::array();
  o.out = dir / "empty";
  CHECK(run_command("oracle", write_config(dir, j), o) == kExitConfig);
  o.out = dir / "missing";
  CHECK(run_command("evolve", dir / "nope.json", o) == kExitConfig);
  CHECK(run_command("bogus", write_config(dir, small_config()), o) == kExitConfig);
}
