// lattice-laws: verification sweeps, evolution runs and coercivity scans for the
// Toda and Ablowitz-Ladik lattices.

#include <cstdio>
#include <iostream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "lattice_laws/errors.hpp"
#include "lattice_laws/experiment.hpp"

namespace ex = lattice_laws::experiment;

namespace {

constexpr int kExitFail = 1;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (const auto& s : items) out += (out.empty() ? "" : ";") + s;
  return out;
}

void print_summary(const ex::Report& report) {
  for (const auto& c : report.checks) {
    std::printf("%-4s %-26s max %-12.3e tol %.1e\n", c.pass ? "PASS" : "FAIL", c.name.c_str(), c.max_residual,
                c.tolerance);
  }
  for (const auto& n : report.notes) std::printf("note: %s\n", n.c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Conservation-law checks for the Toda and Ablowitz-Ladik lattices"};
  app.set_version_flag("--version", ex::version());
  app.require_subcommand(1, 1);

  // Flag values are collected as text and fed through the same parser as the
  // config file, so both report identical diagnostics.
  std::string config_path;
  std::vector<std::pair<std::string, std::string>> scalar_flags = {
      {"model", ""},     {"seed", ""},        {"n-states", ""},     {"window", ""},     {"amplitude", ""},
      {"delta", ""},     {"sign", ""},        {"out", ""},          {"T", ""},          {"flow-tol", ""},
      {"n-directions", ""}, {"probe-step", ""}, {"eps", ""}};
  std::vector<std::string> kappas;
  std::vector<std::string> zs;
  std::vector<std::string> signs;
  bool allow_unsupported = false;
  std::map<std::string, std::string> tolerances;

  std::map<std::string, std::string> help = {
      {"model", "toda or al"},
      {"seed", "random seed (default 1)"},
      {"n-states", "number of random states (default 100)"},
      {"window", "sites per state, >= 8 (default 32)"},
      {"amplitude", "per-site draw amplitude before ball scaling (default 0.05)"},
      {"delta", "ball radius (default 0.1)"},
      {"out", "output directory for report.json and CSV tables"},
      {"T", "evolve: final time (default 1)"},
      {"flow-tol", "evolve: local error tolerance (default 1e-10)"},
      {"n-directions", "probe directions per state (default 20)"},
      {"probe-step", "Toda convexity finite-difference step (default 1e-3)"},
      {"eps", "AL coercivity scaling (default 1e-3)"},
  };

  std::vector<CLI::App*> subs;
  for (const char* name : {"verify", "evolve", "coercivity", "macroscopic"}) {
    CLI::App* sub = app.add_subcommand(name);
    subs.push_back(sub);
    sub->add_option("--config", config_path, "key = value file; flags override it");
    for (auto& [key, value] : scalar_flags) {
      if (key == "sign") continue;
      sub->add_option("--" + key, value, help[key]);
    }
    sub->add_option("--kappa", kappas, "Toda spectral parameter, repeatable (default 1 2 3)");
    sub->add_option("--z", zs, "AL spectral parameter such as 2, 2+1i or (2,1); repeatable (default 2 3 2+i)");
    sub->add_option("--sign", signs, "+1/-1, plus/minus, focusing/defocusing or both; repeatable");
    sub->add_flag("--allow-unsupported-z", allow_unsupported, "accept 1 < |z| < 2 (no guarantees)");
    for (const auto& check : ex::all_check_names()) {
      std::string flag = check;
      for (char& ch : flag)
        if (ch == '_') ch = '-';
      sub->add_option("--tol-" + flag, tolerances[check], "tolerance override for " + check);
    }
  }
  subs[0]->description("identity, conservation and positivity checks over random states");
  subs[1]->description("integrate the flow and monitor conserved functionals");
  subs[2]->description("Toda convexity probes, AL quadratic-form comparison");
  subs[3]->description("determinant and trace ledgers only");

  CLI11_PARSE(app, argc, argv);

  ex::ExperimentConfig config;
  const std::string mode = app.get_subcommands().front()->get_name();
  try {
    ex::set_option(config, "mode", mode, "subcommand");
    if (!config_path.empty()) ex::apply_config_file(config, config_path);
    for (const auto& [key, value] : scalar_flags)
      if (!value.empty()) ex::set_option(config, key, value, "--" + key);
    if (!kappas.empty()) ex::set_option(config, "kappa", join(kappas), "--kappa");
    if (!zs.empty()) ex::set_option(config, "z", join(zs), "--z");
    if (!signs.empty()) ex::set_option(config, "sign", join(signs), "--sign");
    if (allow_unsupported) ex::set_option(config, "allow-unsupported-z", "true", "--allow-unsupported-z");
    for (const auto& [check, value] : tolerances)
      if (!value.empty()) {
        std::string flag = check;
        for (char& ch : flag)
          if (ch == '_') ch = '-';
        ex::set_option(config, "tol-" + flag, value, "--tol-" + flag);
      }
    ex::validate(config);
  } catch (const lattice_laws::ConfigError& e) {
    std::cerr << "lattice-laws: " << e.what() << "\n";
    return kExitConfig;
  }

  try {
    const ex::Report report = ex::run(config);
    ex::write_outputs(report, config);
    print_summary(report);
    return report.all_pass() ? 0 : kExitFail;
  } catch (const lattice_laws::ConfigError& e) {
    std::cerr << "lattice-laws: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "lattice-laws: " << e.what() << "\n";
    return kExitRuntime;
  }
}
