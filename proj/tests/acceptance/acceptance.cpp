// Acceptance driver: one pass/fail line per criterion.
//
//   cgo_acceptance [all | N...] [--output DIR]

#include "cgo/config.hpp"
#include "cgo/runner.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using cgo::Check;
using cgo::RunReport;

namespace {

std::string g_out = "acceptance_runs";

struct Verdict {
  bool pass = true;
  std::size_t checks = 0;
  std::vector<std::string> failed;
  std::vector<std::string> notes;

  void take(const RunReport& r, const std::function<bool(const std::string&)>& want) {
    if (!r.failure.empty()) {
      pass = false;
      failed.push_back(r.experiment + " numerical failure: " + r.failure);
    }
    for (const Check& c : r.checks) {
      if (!want(c.name)) continue;
      ++checks;
      if (c.pass) continue;
      pass = false;
      char buf[256];
      if (c.relation == "in")
        std::snprintf(buf, sizeof buf, "%s=%.4g not in [%g, %g]", c.name.c_str(), c.value, c.lo,
                      c.hi);
      else
        std::snprintf(buf, sizeof buf, "%s=%.4g not %s %g", c.name.c_str(), c.value,
                      c.relation.c_str(), c.lo);
      failed.push_back(buf);
    }
  }
  void take_all(const RunReport& r) {
    take(r, [](const std::string&) { return true; });
  }
};

auto named(std::vector<std::string> names) {
  return [names = std::move(names)](const std::string& n) {
    for (const std::string& p : names) {
      if (!p.empty() && p.back() == '*' ? n.rfind(p.substr(0, p.size() - 1), 0) == 0 : n == p)
        return true;
    }
    return false;
  };
}

std::string config_path(const std::string& name) {
  return (fs::path(CGO_ACCEPTANCE_CONFIGS) / (name + ".cfg")).string();
}

// Reports are cached per process so criteria sharing an experiment run it once.
std::map<std::string, RunReport> g_cache;

const RunReport& run_experiment(const std::string& name, int criterion) {
  auto it = g_cache.find(name);
  if (it != g_cache.end()) return it->second;
  cgo::RunOptions o;
  o.output_dir = (fs::path(g_out) / ("criterion" + std::to_string(criterion)) / name).string();
  o.threads = 1;
  return g_cache[name] = cgo::run(cgo::Config::load(config_path(name)), o);
}

Verdict criterion(int id) {
  Verdict v;
  switch (id) {
    case 1: {
      const RunReport& r = run_experiment("verify_operators", id);
      v.take(r, [](const std::string& n) { return n.rfind("maxwell_", 0) != 0; });
      break;
    }
    case 2: {
      v.take(run_experiment("verify_operators", id), named({"maxwell_plane_wave_*"}));
      v.take(run_experiment("cgo_decay", id),
             named({"maxwell_scalar_slots", "maxwell_rescaled_residual", "maxwell_ampere_residual",
                    "maxwell_faraday_residual", "cgo_equation_residual"}));
      break;
    }
    case 3: {
      const RunReport& r = run_experiment("cgo_decay", id);
      v.take(r, named({"remainder_R_slope", "remainder_S_slope", "constant_medium_*",
                       "dirac_residual", "runtime_cgo_decay"}));
      break;
    }
    case 4: v.take_all(run_experiment("pairing_sweep", id)); break;
    case 5: v.take_all(run_experiment("null_test", id)); break;
    case 6: v.take_all(run_experiment("recover", id)); break;
    case 7: {
      const RunReport& r = run_experiment("cgo_decay", id);
      v.take(r, named({"aux_identity_printed", "aux_fourth_slot"}));
      if (const Check* c = r.find("aux_identity_corrected_sign_tight")) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "first slot with opposite sign: %.3g (%s)", c->value,
                      c->pass ? "within 10 tol" : "above 10 tol");
        v.notes.push_back(buf);
      }
      break;
    }
    case 8: v.take_all(run_experiment("carleman", id)); break;
    case 9: {
      for (const char* name :
           {"verify_operators", "cgo_decay", "pairing_sweep", "recover", "null_test", "carleman"}) {
        const fs::path dir = fs::path(g_out) / "criterion9" / name;
        cgo::RunOptions o;
        o.output_dir = dir.string();
        o.threads = 1;
        (void)cgo::run(cgo::Config::load(config_path(name)), o);
        const cgo::ReplayOutcome rp =
            cgo::replay(dir.string(), 2, 1e-13, (dir / "threads2").string());
        ++v.checks;
        if (!rp.match) {
          v.pass = false;
          for (const std::string& m : rp.mismatches) v.failed.push_back(std::string(name) + " " + m);
        }
      }
      break;
    }
    default: throw std::invalid_argument("unknown criterion");
  }
  if (v.checks == 0) {
    v.pass = false;
    v.failed.push_back("no checks selected");
  }
  return v;
}

const char* title(int id) {
  static const char* t[] = {"",
                            "operator identities",
                            "Maxwell equivalence",
                            "CGO remainder decay",
                            "Fourier asymptotics of the pairing",
                            "orthogonality null test",
                            "linearized recovery",
                            "auxiliary-system identity",
                            "Carleman diagnostic",
                            "determinism across thread counts"};
  return t[id];
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<int> ids;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--output" && i + 1 < argc) {
      g_out = argv[++i];
    } else if (a == "all") {
      for (int k = 1; k <= 9; ++k) ids.push_back(k);
    } else {
      const int k = std::atoi(a.c_str());
      if (k < 1 || k > 9) {
        std::fprintf(stderr, "usage: cgo_acceptance [all | 1..9 ...] [--output DIR]\n");
        return 2;
      }
      ids.push_back(k);
    }
  }
  if (ids.empty())
    for (int k = 1; k <= 9; ++k) ids.push_back(k);

  bool all = true;
  for (int id : ids) {
    Verdict v;
    try {
      v = criterion(id);
    } catch (const std::exception& e) {
      v.pass = false;
      v.failed.push_back(e.what());
    }
    std::ostringstream line;
    line << "criterion " << id << " " << (v.pass ? "PASS" : "FAIL") << "  " << title(id) << " ("
         << v.checks << " checks";
    if (!v.failed.empty()) {
      line << "; " << v.failed.size() << " failed: " << v.failed.front();
      if (v.failed.size() > 1) line << ", ...";
    }
    for (const std::string& n : v.notes) line << "; " << n;
    line << ")";
    std::printf("%s\n", line.str().c_str());
    for (std::size_t i = 1; i < v.failed.size(); ++i) std::printf("    %s\n", v.failed[i].c_str());
    std::fflush(stdout);
    all = all && v.pass;
  }
  return all ? 0 : 1;
}
