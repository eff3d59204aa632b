#pragma once

// Experiment harness behind the command-line tool: deterministic state generation,
// verification sweeps, evolution runs, coercivity scans and report output.

#include <complex>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "lattice_laws/al.hpp"
#include "lattice_laws/toda.hpp"

namespace lattice_laws::experiment {

enum class Model { toda, al };
enum class Mode { verify, evolve, coercivity, macroscopic };

struct ExperimentConfig {
  Model model = Model::toda;
  Mode mode = Mode::verify;
  std::uint64_t seed = 1;
  int n_states = 100;
  int window_size = 32;
  /// Per-site amplitude of the random draws before ball scaling.
  double amplitude = 0.05;
  double delta = 0.1;
  std::vector<double> kappas{1.0, 2.0, 3.0};
  std::vector<std::complex<double>> zs{{2.0, 0.0}, {3.0, 0.0}, {2.0, 1.0}};
  std::vector<int> signs{1, -1};
  /// Overrides keyed by check name.
  std::map<std::string, double> tolerances;
  std::string out;
  // evolve
  double final_time = 1.0;
  double flow_tol = 1e-10;
  // coercivity / convexity probes
  int n_directions = 20;
  double probe_step = 1e-3;
  double coercivity_eps = 1e-3;
  bool allow_unsupported_z = false;
};

/// Sets one configuration key from text. `where` names the source (a flag or
/// file:line) for diagnostics; throws ConfigError on unknown keys or bad values.
void set_option(ExperimentConfig& config, const std::string& key, const std::string& value,
                const std::string& where);

/// Reads `key = value` lines ('#' starts a comment) into the config.
void apply_config_file(ExperimentConfig& config, const std::string& path);

/// Cross-field checks (window >= 8, non-empty parameter lists, ...). Throws ConfigError.
void validate(const ExperimentConfig& config);

std::string to_string(Model m);
std::string to_string(Mode m);

/// SplitMix64 finalizer over (seed, index, site, component): a counter-based stream,
/// so each value is reproducible independently of evaluation order.
std::uint64_t counter_hash(std::uint64_t seed, std::uint64_t index, std::int64_t site, std::uint64_t component);
/// Uniform on [-1, 1) from the same counter.
double counter_uniform(std::uint64_t seed, std::uint64_t index, std::int64_t site, std::uint64_t component);

/// Random state on [0, window_size), shrunk if needed so that H sits at no more than
/// half the ball bound for the smallest kappa. Throws BallUnreachable for a negative
/// or non-finite amplitude or a non-positive delta.
toda::TodaState generate_toda_state(const ExperimentConfig& config, int index);
/// Same for AL, against |M| e^{|M|} at the smallest |z|.
al::ALState generate_al_state(const ExperimentConfig& config, int index, al::ALSign sign);

struct CheckSpec {
  std::string name;
  std::string anchor;  // the identity being checked, as a formula
  double tolerance;
  std::vector<Mode> modes;  // modes that report this check
};
/// Every check the harness can report for a model, with default tolerances.
const std::vector<CheckSpec>& check_catalog(Model model);
/// All check names across both models (for building --tol-<check> flags).
std::vector<std::string> all_check_names();

struct CheckRecord {
  std::string name;
  std::string anchor;
  double max_residual = 0;
  double tolerance = 0;
  bool pass = true;
};

struct Table {
  std::string file_name;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;  // cells already formatted
};

/// `%.17g`.
std::string format_number(double v);

struct Report {
  std::vector<CheckRecord> checks;
  std::vector<Table> tables;
  std::vector<std::string> notes;
  bool all_pass() const;
};

/// Executes the configured mode. Items run in parallel (see thread_count) but the
/// report is assembled in state-index, then parameter order.
Report run(const ExperimentConfig& config);

std::string version();
std::string report_json(const Report& report, const ExperimentConfig& config, bool with_timestamp = true);
/// Header row, then one line per row.
std::string table_csv(const Table& table);
/// Writes report.json and every table into config.out (created if missing).
void write_outputs(const Report& report, const ExperimentConfig& config);

/// Hardware concurrency, capped by LATTICE_LAWS_THREADS when set.
int thread_count();
/// Runs body(i) for i in [0, n) on up to thread_count() threads; rethrows the first
/// exception after all workers stop.
void parallel_for(int n, const std::function<void(int)>& body);

}  // namespace lattice_laws::experiment
