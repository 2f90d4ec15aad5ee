// cgo_lab: command line driver for the experiments.
//
// Exit codes: 0 all checks pass, 1 a check failed, 2 configuration error,
// 3 numerical failure.

#include "cgo/config.hpp"
#include "cgo/runner.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <iostream>
#include <thread>

namespace {

void print_summary(const cgo::RunReport& r, const std::string& out) {
  std::size_t failed = 0;
  for (const cgo::Check& c : r.checks) {
    std::printf("%-4s %-48s %-12.5g %s", c.pass ? "ok" : "FAIL", c.name.c_str(), c.value,
                c.relation.c_str());
    if (c.relation == "in") std::printf(" [%g, %g]\n", c.lo, c.hi);
    else std::printf(" %g\n", c.lo);
    if (!c.pass) ++failed;
  }
  if (!r.failure.empty()) std::printf("numerical failure: %s\n", r.failure.c_str());
  std::printf("%s: %zu checks, %zu failed, %.2fs, config %s, report in %s\n",
              r.experiment.c_str(), r.checks.size(), failed, r.wall_time,
              r.config_hash.c_str(), out.c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"CGO reconstruction lab"};
  app.require_subcommand(1);

  std::string config_path, output;
  std::uint64_t seed = 0;
  int threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  double rtol = 1e-9;

  const std::vector<std::string> experiments = {"verify-operators", "cgo-decay", "pairing-sweep",
                                                "recover", "null-test", "carleman"};
  std::vector<CLI::App*> subs;
  for (const std::string& e : experiments) {
    CLI::App* s = app.add_subcommand(e, "run the " + e + " experiment");
    s->add_option("-c,--config", config_path, "config file (key = value)")->check(CLI::ExistingFile);
    s->add_option("-o,--output", output, "output directory");
    s->add_option("-s,--seed", seed, "override the config seed");
    s->add_option("-t,--threads", threads, "worker threads")->check(CLI::PositiveNumber);
    subs.push_back(s);
  }
  CLI::App* run_cmd = app.add_subcommand("run", "run the experiment named in the config");
  run_cmd->add_option("-c,--config", config_path, "config file")->required()->check(CLI::ExistingFile);
  run_cmd->add_option("-o,--output", output, "output directory");
  run_cmd->add_option("-s,--seed", seed, "override the config seed");
  run_cmd->add_option("-t,--threads", threads, "worker threads")->check(CLI::PositiveNumber);

  std::string report_dir;
  CLI::App* rep = app.add_subcommand("replay", "re-run a stored report and compare");
  rep->add_option("report_dir", report_dir, "directory holding report.txt and config.txt")
      ->required()
      ->check(CLI::ExistingDirectory);
  rep->add_option("-o,--output", output, "where the re-run writes its files");
  rep->add_option("-t,--threads", threads, "worker threads")->check(CLI::PositiveNumber);
  rep->add_option("--rtol", rtol, "relative tolerance for value comparison");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (rep->parsed()) {
      const cgo::ReplayOutcome r = cgo::replay(report_dir, threads, rtol, output);
      print_summary(r.rerun, output.empty() ? report_dir + "/replay" : output);
      for (const std::string& m : r.mismatches) std::printf("mismatch: %s\n", m.c_str());
      std::printf("replay %s\n", r.match ? "matches" : "DIFFERS");
      if (!r.match) return 1;
      return r.rerun.exit_code();
    }

    cgo::Config cfg;
    if (!config_path.empty()) cfg = cgo::Config::load(config_path);
    for (std::size_t i = 0; i < subs.size(); ++i) {
      if (!subs[i]->parsed()) continue;
      if (cfg.has("experiment") && cfg.get_string("experiment") != experiments[i])
        throw cgo::ConfigError("experiment", "config is for '" + cfg.get_string("experiment") +
                                                 "', not '" + experiments[i] + "'");
      cfg.set("experiment", experiments[i]);
    }
    if (!cfg.has("experiment")) throw cgo::ConfigError("experiment", "missing required key");

    cgo::RunOptions opt;
    opt.output_dir = output;
    opt.threads = threads;
    if (app.get_subcommands().front()->count("--seed") > 0) opt.seed = seed;
    const cgo::RunReport r = cgo::run(cfg, opt);
    print_summary(r, output.empty() ? cfg.get_string("output_dir", "cgo_lab_out") : output);
    return r.exit_code();
  } catch (const cgo::ConfigError& e) {
    std::fprintf(stderr, "configuration error: %s\n", e.what());
    return 2;
  }
}
