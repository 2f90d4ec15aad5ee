#include "cgo/config.hpp"
#include "cgo/runner.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>

using namespace cgo;

namespace fs = std::filesystem;

TEST_CASE("config parsing") {
  const Config c = Config::parse(
      "# comment\n"
      "grid.n = 24   # trailing\n"
      "solver.tau_schedule = [4, 8, 16]\n"
      "pairing.xi = 1 0 0; 0 1 1\n"
      "flag = yes\n");
  CHECK(c.get_int("grid.n") == 24);
  CHECK(c.get_list("solver.tau_schedule") == std::vector<double>{4, 8, 16});
  CHECK(c.get_rows("pairing.xi").size() == 2);
  CHECK(c.get_bool("flag", false));
  CHECK(c.get_double("missing", 2.5) == 2.5);
}

TEST_CASE("config errors carry the key path") {
  CHECK_THROWS_AS(Config::parse("a = 1\na = 2\n"), ConfigError);
  CHECK_THROWS_AS(Config::parse("no equals sign\n"), ConfigError);
  CHECK_THROWS_AS(Config::parse("bad key! = 1\n"), ConfigError);
  const Config c = Config::parse("grid.n = twelve\n");
  try {
    (void)c.get_int("grid.n");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.key == "grid.n");
  }
}

TEST_CASE("canonical text and hash ignore key order") {
  const Config a = Config::parse("b = 2\na = 1\n");
  const Config b = Config::parse("a = 1\nb = 2\n");
  CHECK(a.canonical() == b.canonical());
  CHECK(a.hash() == b.hash());
  CHECK(hex64(fnv1a64("")) == "cbf29ce484222325");
}

TEST_CASE("medium sections are validated") {
  Config c = Config::parse(
      "grid.n = 16\n"
      "medium1.bumps = 1\n"
      "medium1.bump0.center = [0, 0, 0]\n"
      "medium1.bump0.amp_mu = 0.01\n"
      "medium1.bump0.amp_gamma = [0.01, 0.002]\n");
  const GridSpec g = grid_from_config(c);
  const MediumSpec s = medium_spec_from_config(c, "medium1", g);
  REQUIRE(s.bumps.size() == 1);
  CHECK(s.bumps[0].amp_gamma == cplx(0.01, 0.002));
  c.set("medium1.bump0.center", "[2, 0, 0]");
  try {
    (void)medium_spec_from_config(c, "medium1", g);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.key.rfind("medium1.bump0", 0) == 0);
  }
  c.set("grid.n", "15");
  CHECK_THROWS_AS(grid_from_config(c), ConfigError);
}

TEST_CASE("report text round trip") {
  RunReport r;
  r.experiment = "carleman";
  r.config_hash = "0123456789abcdef";
  r.seed = 4;
  r.threads = 2;
  r.wall_time = 1.5;
  r.checks.push_back({"z_first", 1e-9, "<=", 1e-8, 0.0, true, false});
  r.checks.push_back({"a_second", -1.0, "in", -1.3, -0.7, true, false});
  r.checks.push_back({"runtime", 3.0, "<=", 60.0, 0.0, true, true});
  r.metrics.emplace_back("noise", 2.5e-8);
  r.artifacts.push_back("x.csv");
  const RunReport p = RunReport::parse(r.to_text());
  REQUIRE(p.checks.size() == 3);
  CHECK(p.checks[0].name == "z_first");
  CHECK(p.checks[1].lo == -1.3);
  CHECK(p.checks[2].timing);
  CHECK(p.metrics.at(0).second == 2.5e-8);
  CHECK(p.artifacts.at(0) == "x.csv");
  CHECK(p.exit_code() == 0);
  r.failure = "solver diverged # badly";
  CHECK(RunReport::parse(r.to_text()).exit_code() == 3);
}

TEST_CASE("run rejects unknown experiments and bad keys") {
  RunOptions o;
  o.write_artifacts = false;
  CHECK_THROWS_AS(run(Config::parse("experiment = nope\n"), o), ConfigError);
  CHECK_THROWS_AS(run(Config::parse("experiment = carleman\nsolver.tol = -1\n"), o), ConfigError);
}

TEST_CASE("carleman run writes a report that replays and refuses tampering") {
  const fs::path dir = fs::temp_directory_path() / "cgo_unit_run";
  fs::remove_all(dir);
  const Config c = Config::parse(
      "experiment = carleman\n"
      "grid.n = 16\n"
      "medium1.bumps = 1\n"
      "medium1.bump0.amp_mu = 0.01\n"
      "medium1.bump0.amp_gamma = 0.01\n"
      "medium1.bump0.sigma = 1.0\n");
  RunOptions o;
  o.output_dir = dir.string();
  const RunReport r = run(c, o);
  CHECK(r.pass());
  CHECK(fs::exists(dir / "report.txt"));
  CHECK(fs::exists(dir / "carleman.csv"));

  const ReplayOutcome rp = replay(dir.string(), 2, 1e-13);
  CHECK(rp.match);

  std::ofstream(dir / "config.txt", std::ios::app) << "grid.box_length = 7\n";
  CHECK_THROWS_AS(replay(dir.string(), 1), ConfigError);
  fs::remove_all(dir);
}
