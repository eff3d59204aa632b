// Acceptance gate: ten criteria, one PASS/FAIL line each. Exit status is 0 only if
// every criterion passes.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <complex>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <string>
#include <vector>

#include "lattice_laws/al.hpp"
#include "lattice_laws/errors.hpp"
#include "lattice_laws/experiment.hpp"
#include "lattice_laws/flow.hpp"
#include "lattice_laws/toda.hpp"

using namespace lattice_laws;
namespace ex = lattice_laws::experiment;
using Complex = std::complex<double>;
using Clock = std::chrono::steady_clock;

namespace {

constexpr int kStates = 100;
constexpr int kWindow = 32;

struct Worst {
  std::map<std::string, double> value;
  std::mutex mutex;
  void merge(const std::map<std::string, double>& r) {
    std::lock_guard lock(mutex);
    for (const auto& [k, v] : r) {
      auto& slot = value[k];
      slot = std::isnan(v) ? INFINITY : std::max(slot, v);
    }
  }
  double operator[](const std::string& k) const {
    const auto it = value.find(k);
    return it == value.end() ? INFINITY : it->second;
  }
};

int failures = 0;

void report(int id, bool pass, const std::string& detail) {
  if (!pass) ++failures;
  std::printf("criterion %2d: %s  %s\n", id, pass ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

ex::ExperimentConfig base_config(ex::Model model) {
  ex::ExperimentConfig c;
  c.model = model;
  c.window_size = kWindow;
  c.n_states = kStates;
  return c;
}

// ---- criteria 1-4 ---------------------------------------------------------------------

void toda_criteria() {
  const ex::ExperimentConfig cfg = base_config(ex::Model::toda);
  const std::vector<double> kappas{1.0, 2.0, 3.0};
  const std::vector<toda::LaxSign> signs{toda::LaxSign::plus, toda::LaxSign::minus};
  const int items = kStates * 3 * 2;

  Worst worst;
  double min_density = 0.0;
  std::mutex min_mutex;
  const auto t0 = Clock::now();
  ex::parallel_for(items, [&](int k) {
    const int index = k / 6;
    const double kappa = kappas[(k / 2) % 3];
    const toda::LaxSign sign = signs[k % 2];
    const toda::TodaState s = ex::generate_toda_state(cfg, index);
    const auto r = toda::density_report(s, toda::Kappa(kappa), sign);
    worst.merge(r.residuals);
    double m = 0.0;
    for (double v : r.rho.values) m = std::min(m, v);
    for (double v : r.gamma.values) m = std::min(m, v);
    std::lock_guard lock(min_mutex);
    min_density = std::min(min_density, m);
  });
  const double sweep_time = seconds_since(t0);

  const std::vector<std::string> ids{"quadratic_id", "d1", "u1", "middle", "involution", "symmetry"};
  double id_max = 0.0;
  std::string detail;
  for (const auto& n : ids) {
    id_max = std::max(id_max, worst[n]);
    detail += fmt("%s %.1e ", n.c_str(), worst[n]);
  }
  report(1, id_max < 1e-9 && sweep_time < 60.0,
         fmt("Toda identities, 600 items: max %.2e (< 1e-9), %.1f s (< 60 s) [", id_max, sweep_time) + detail + "]");

  const double lc_rho = worst["local_conservation_rho"];
  const double lc_gamma = worst["local_conservation_gamma"];
  report(2, lc_rho < 1e-9 && lc_gamma < 1e-9,
         fmt("Toda local conservation: rho %.2e, gamma %.2e (< 1e-9)", lc_rho, lc_gamma));

  const double lr = worst["ledger_rho"], lg = worst["ledger_gamma"], ld = worst["log_det_routes"];
  report(3, lr < 1e-8 && lg < 1e-8 && ld < 1e-9,
         fmt("Toda ledgers: det %.2e, trace %.2e (< 1e-8); log det routes %.2e (< 1e-9)", lr, lg, ld));

  // Convexity: 20 unit directions per (state, kappa, sign) at a random site.
  double worst_second = INFINITY;
  double worst_gradient = 0.0;
  std::mutex probe_mutex;
  ex::parallel_for(items, [&](int k) {
    const int index = k / 6;
    const double kappa = kappas[(k / 2) % 3];
    const toda::LaxSign sign = signs[k % 2];
    const toda::TodaState s = ex::generate_toda_state(cfg, index);
    double second = INFINITY, gradient = 0.0;
    for (int d = 0; d < 20; ++d) {
      toda::Direction dir{std::vector<double>(kWindow), std::vector<double>(kWindow)};
      double norm2 = 0.0;
      for (int i = 0; i < kWindow; ++i) {
        dir.c[i] = ex::counter_uniform(77, static_cast<std::uint64_t>(k), i, 2 * d);
        dir.d[i] = ex::counter_uniform(77, static_cast<std::uint64_t>(k), i, 2 * d + 1);
        norm2 += dir.c[i] * dir.c[i] + dir.d[i] * dir.d[i];
      }
      for (int i = 0; i < kWindow; ++i) {
        dir.c[i] /= std::sqrt(norm2);
        dir.d[i] /= std::sqrt(norm2);
      }
      const int site = static_cast<int>(ex::counter_hash(77, static_cast<std::uint64_t>(k), d, 999) % kWindow);
      const auto p = toda::convexity_probe(s, toda::Kappa(kappa), sign, dir, site, 1e-3);
      second = std::min({second, p.rho_second_diff, p.gamma_second_diff});
      gradient = std::max(gradient, std::abs(p.a_gradient));
    }
    std::lock_guard lock(probe_mutex);
    worst_second = std::min(worst_second, second);
    worst_gradient = std::max(worst_gradient, gradient);
  });
  report(4, min_density >= -1e-12 && worst_second >= -1e-6 && worst_gradient < 1e-8,
         fmt("Toda positivity/convexity: min density %.2e (>= -1e-12), min second difference %.3e (>= -1e-6), "
             "max |d rho_n/d a_n| %.2e (< 1e-8)",
             min_density, worst_second, worst_gradient));
}

// ---- criteria 5-7 ---------------------------------------------------------------------

void al_criteria() {
  const ex::ExperimentConfig cfg = base_config(ex::Model::al);
  const std::vector<Complex> zs{{2, 0}, {3, 0}, {2, 1}};
  const std::vector<al::ALSign> signs{al::ALSign::defocusing, al::ALSign::focusing};
  const int items = kStates * 3 * 2;

  Worst worst;
  const auto t0 = Clock::now();
  ex::parallel_for(items, [&](int k) {
    const int index = k / 6;
    const al::SpectralZ z(zs[(k / 2) % 3]);
    const al::ALSign sign = signs[k % 2];
    const al::ALState s = ex::generate_al_state(cfg, index, sign);
    auto r = al::density_report(s, z);
    const auto zd = al::z_derivative_check(s, z);
    r.residuals["z_derivative"] = std::abs(zd.lhs - zd.rhs);
    worst.merge(r.residuals);
  });
  const double sweep_time = seconds_since(t0);

  const std::vector<std::string> ids{"detID", "trID", "nD",  "nU",  "nD2", "nU2", "wrap_left", "wrap_right",
                                     "vacuous_trace", "rho_forms"};
  double id_max = 0.0;
  std::string detail;
  for (const auto& n : ids) {
    id_max = std::max(id_max, worst[n]);
    detail += fmt("%s %.1e ", n.c_str(), worst[n]);
  }
  report(5, id_max < 1e-9 && sweep_time < 120.0,
         fmt("AL identities, 600 items: max %.2e (< 1e-9), %.1f s (< 120 s) [", id_max, sweep_time) + detail + "]");

  const double lc_rho = worst["local_conservation_rho"];
  const double lc_gamma = worst["local_conservation_gamma"];
  report(6, lc_rho < 1e-9 && lc_gamma < 1e-9,
         fmt("AL local conservation: rho %.2e, gamma %.2e (< 1e-9)", lc_rho, lc_gamma));

  const double ldet = worst["ledger_det"], ltr = worst["ledger_tr"], zd = worst["z_derivative"];
  report(7, ldet < 1e-8 && ltr < 1e-8 && zd < 1e-6,
         fmt("AL ledgers: det %.2e, trace %.2e (< 1e-8); z-derivative %.2e (< 1e-6); log det routes %.2e", ldet, ltr,
             zd, worst["log_det_routes"]));
}

// ---- criterion 8 ----------------------------------------------------------------------

void coercivity_criterion() {
  double worst_rel = 0.0;
  double worst_sign = 0.0;
  int probes = 0;
  for (double z : {2.0, 3.0})
    for (al::ALSign sign : {al::ALSign::defocusing, al::ALSign::focusing})
      for (int d = 0; d < 10; ++d) {
        std::vector<Complex> dir(kWindow);
        double norm2 = 0.0;
        for (int i = 0; i < kWindow; ++i) {
          dir[i] = {ex::counter_uniform(88, d, i, 0), ex::counter_uniform(88, d, i, 1)};
          norm2 += std::norm(dir[i]);
        }
        for (auto& v : dir) v /= std::sqrt(norm2);
        const auto c = al::coercivity_check({0, kWindow}, dir, z, sign, 1e-3);
        worst_rel = std::max({worst_rel, std::abs(c.sum_im_j2 - c.dft_im) / std::abs(c.dft_im),
                              std::abs(c.sum_re_rho2 - c.dft_re) / std::abs(c.dft_re)});
        const double s = al::sign_value(sign);
        worst_sign = std::max({worst_sign, s * c.sum_im_j2, -s * c.sum_re_rho2});
        ++probes;
      }
  report(8, worst_rel < 1e-4 && worst_sign <= 0.0,
         fmt("AL coercivity, %d probes: max relative error %.2e (< 1e-4), sign violation %.2e (<= 0)", probes,
             worst_rel, worst_sign));
}

// ---- criterion 9 ----------------------------------------------------------------------

struct DriftPair {
  std::map<std::string, double> at_tol;
  std::map<std::string, double> at_half;
};

template <class Model, class Monitor>
DriftPair drift_pair(const typename Model::State& s, int margin, Monitor&& monitor) {
  DriftPair out;
  flow::IntegrateOptions o;
  o.tol = 1e-10;
  o.grow_margin = margin;
  o.output_times = {0.25, 0.5, 0.75};
  out.at_tol = monitor(flow::integrate<Model>(s, 1.0, o)).drift;
  o.tol = 5e-11;
  out.at_half = monitor(flow::integrate<Model>(s, 1.0, o)).drift;
  return out;
}

void dynamics_criterion() {
  const int n = 5;
  std::vector<DriftPair> runs(2 * n + 2 * n);
  const ex::ExperimentConfig toda_cfg = base_config(ex::Model::toda);
  const ex::ExperimentConfig al_cfg = base_config(ex::Model::al);
  ex::parallel_for(static_cast<int>(runs.size()), [&](int k) {
    if (k < 2 * n) {
      const toda::Kappa kappa(k % 2 == 0 ? 1.0 : 2.0);
      const auto s = ex::generate_toda_state(toda_cfg, k / 2);
      runs[k] = drift_pair<flow::TodaModel>(s, toda::pad_width(kappa), [&](const auto& traj) {
        return flow::conservation_monitor(traj, kappa, toda::LaxSign::plus);
      });
    } else {
      const int j = k - 2 * n;
      const al::SpectralZ z(2.0);
      const auto s = ex::generate_al_state(al_cfg, j / 2, j % 2 == 0 ? al::ALSign::defocusing : al::ALSign::focusing);
      runs[k] = drift_pair<flow::ALModel>(s, al::pad_width(z),
                                          [&](const auto& traj) { return flow::conservation_monitor(traj, z); });
    }
  });

  std::map<std::string, double> worst;
  double min_ratio = INFINITY;
  double max_ratio = 0.0;
  for (const auto& r : runs)
    for (const auto& [name, d] : r.at_tol) {
      worst[name] = std::max(worst[name], d);
      if (d > 1e-13) {
        const double ratio = d / std::max(r.at_half.at(name), 1e-300);
        min_ratio = std::min(min_ratio, ratio);
        max_ratio = std::max(max_ratio, ratio);
      }
    }
  double drift_max = 0.0;
  std::string detail;
  for (const char* name : {"H", "M", "P", "sum_rho", "sum_gamma"}) {
    drift_max = std::max(drift_max, worst[name]);
    detail += fmt("%s %.1e ", name, worst[name]);
  }
  const bool drift_ok = drift_max < 1e-7;
  const bool halving_ok = min_ratio >= 8.0;
  report(9, drift_ok && halving_ok,
         fmt("Dynamics, T = 1, tol 1e-10: max drift %.2e (< 1e-7) [", drift_max) + detail +
             fmt("]; drift(tol)/drift(tol/2) in [%.2f, %.2f] (needs >= 8)", min_ratio, max_ratio));

  // Supplementary: with the step fixed instead of the tolerance, halving h shows the order.
  const auto s = ex::generate_toda_state(toda_cfg, 0);
  auto final_error = [&](double h, const toda::TodaState& ref) {
    flow::IntegrateOptions o;
    o.fixed_step = h;
    o.edge_threshold = 1.0;
    const auto out = flow::integrate<flow::TodaModel>(s, 1.0, o).states.back();
    double e = 0.0;
    for (std::size_t i = 0; i < out.a.size(); ++i)
      e = std::max({e, std::abs(out.a[i] - ref.a[i]), std::abs(out.b[i] - ref.b[i])});
    return e;
  };
  flow::IntegrateOptions o;
  o.fixed_step = 1.0 / 1024;
  o.edge_threshold = 1.0;
  const auto ref = flow::integrate<flow::TodaModel>(s, 1.0, o).states.back();
  std::printf("             (fixed-step check: error(h=1/8)/error(h=1/16) = %.1f)\n",
              final_error(1.0 / 8, ref) / final_error(1.0 / 16, ref));
}

// ---- criterion 10 ---------------------------------------------------------------------

std::map<std::string, std::string> payloads(const std::filesystem::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.path().extension() != ".csv") continue;
    std::ifstream f(e.path(), std::ios::binary);
    std::stringstream s;
    s << f.rdbuf();
    out[e.path().filename().string()] = s.str();
  }
  return out;
}

void determinism_criterion() {
  const auto root = std::filesystem::temp_directory_path() / "lattice_laws_acceptance";
  std::filesystem::remove_all(root);
  bool identical = true;
  std::size_t files = 0;
  std::vector<ex::ExperimentConfig> configs;
  {
    ex::ExperimentConfig c = base_config(ex::Model::toda);
    c.n_states = 5;
    c.mode = ex::Mode::verify;
    configs.push_back(c);
    c.mode = ex::Mode::evolve;
    c.n_states = 2;
    configs.push_back(c);
    ex::ExperimentConfig a = base_config(ex::Model::al);
    a.n_states = 5;
    configs.push_back(a);
    a.mode = ex::Mode::coercivity;
    a.n_directions = 3;
    configs.push_back(a);
  }
  for (std::size_t i = 0; i < configs.size(); ++i) {
    std::map<std::string, std::string> first;
    for (int rep = 0; rep < 2; ++rep) {
      ex::ExperimentConfig c = configs[i];
      c.out = (root / (std::to_string(i) + "_" + std::to_string(rep))).string();
      ex::write_outputs(ex::run(c), c);
      const auto p = payloads(c.out);
      if (rep == 0)
        first = p;
      else
        identical = identical && p == first && !p.empty();
      files += rep == 0 ? p.size() : 0;
    }
  }
  std::filesystem::remove_all(root);
  report(10, identical, fmt("Determinism: %zu CSV payloads byte-identical across repeated runs", files));
}

}  // namespace

int main() {
  set_warning_handler([](std::string_view) {});
  const auto t0 = Clock::now();
  try {
    toda_criteria();
    al_criteria();
    coercivity_criterion();
    dynamics_criterion();
    determinism_criterion();
  } catch (const std::exception& e) {
    std::printf("acceptance aborted: %s\n", e.what());
    return 2;
  }
  std::printf("acceptance: %d of 10 criteria failed (%.1f s total)\n", failures, seconds_since(t0));
  return failures == 0 ? 0 : 1;
}
