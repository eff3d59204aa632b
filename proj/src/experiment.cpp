#include "lattice_laws/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <numbers>
#include <optional>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "lattice_laws/errors.hpp"
#include "lattice_laws/flow.hpp"

#ifndef LATTICE_LAWS_VERSION
#define LATTICE_LAWS_VERSION "0.0.0"
#endif

namespace lattice_laws::experiment {

namespace {

using Complex = std::complex<double>;
using Residuals = std::map<std::string, double>;

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, ';')) {
    // Commas separate list items too, except inside parentheses: "(2,1)".
    int depth = 0;
    std::string cur;
    for (char c : item) {
      if (c == '(') ++depth;
      if (c == ')') --depth;
      if (c == ',' && depth == 0) {
        if (!trim(cur).empty()) out.push_back(trim(cur));
        cur.clear();
      } else {
        cur += c;
      }
    }
    if (!trim(cur).empty()) out.push_back(trim(cur));
  }
  return out;
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const std::string& where,
                            const std::string& why) {
  throw ConfigError(where + ": invalid value '" + value + "' for " + key + ": " + why);
}

double parse_double(const std::string& key, const std::string& value, const std::string& where) {
  const std::string v = trim(value);
  char* end = nullptr;
  const double d = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size() || !std::isfinite(d)) bad_value(key, value, where, "not a number");
  return d;
}

long long parse_int(const std::string& key, const std::string& value, const std::string& where) {
  const std::string v = trim(value);
  char* end = nullptr;
  const long long d = std::strtoll(v.c_str(), &end, 10);
  if (v.empty() || end != v.c_str() + v.size()) bad_value(key, value, where, "not an integer");
  return d;
}

// "2", "2+1i", "2-0.5i", "1.5i", "(2,1)".
Complex parse_complex(const std::string& key, const std::string& value, const std::string& where) {
  std::string v = trim(value);
  if (v.size() >= 2 && v.front() == '(' && v.back() == ')') {
    const auto comma = v.find(',');
    if (comma == std::string::npos) bad_value(key, value, where, "expected (re,im)");
    return {parse_double(key, v.substr(1, comma - 1), where),
            parse_double(key, v.substr(comma + 1, v.size() - comma - 2), where)};
  }
  if (v.empty()) bad_value(key, value, where, "empty");
  if (v.back() != 'i' && v.back() != 'j') return {parse_double(key, v, where), 0.0};
  v.pop_back();
  // Split at the last sign that is not an exponent sign or the leading sign.
  std::size_t split = std::string::npos;
  for (std::size_t i = v.size(); i-- > 1;) {
    if ((v[i] == '+' || v[i] == '-') && v[i - 1] != 'e' && v[i - 1] != 'E') {
      split = i;
      break;
    }
  }
  auto imag_of = [&](std::string s) {
    if (s.empty() || s == "+") return 1.0;
    if (s == "-") return -1.0;
    return parse_double(key, s, where);
  };
  if (split == std::string::npos) return {0.0, imag_of(v)};
  return {parse_double(key, v.substr(0, split), where), imag_of(v.substr(split))};
}

int parse_sign(const std::string& key, const std::string& value, const std::string& where) {
  const std::string v = trim(value);
  if (v == "+" || v == "+1" || v == "1" || v == "plus" || v == "defocusing") return 1;
  if (v == "-" || v == "-1" || v == "minus" || v == "focusing") return -1;
  bad_value(key, value, where, "expected +1/-1, plus/minus or defocusing/focusing");
}

std::string tolerance_key(const std::string& check) {
  std::string k = check;
  std::replace(k.begin(), k.end(), '_', '-');
  return "tol-" + k;
}

// Ball-scaling by bisection on a scale factor in [0, 1]; `measure` must increase with it.
template <class Make, class Measure>
auto scale_into_ball(Make&& make, Measure&& measure, double target) {
  auto s = make(1.0);
  if (measure(s) <= target) return s;
  double lo = 0.0;
  double hi = 1.0;
  for (int it = 0; it < 80; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (measure(make(mid)) <= target)
      lo = mid;
    else
      hi = mid;
  }
  return make(lo);
}

void require_generation_inputs(const ExperimentConfig& c) {
  if (!(c.amplitude >= 0.0) || !std::isfinite(c.amplitude))
    throw BallUnreachable("amplitude must be finite and non-negative");
  if (!(c.delta > 0.0) || !std::isfinite(c.delta)) throw BallUnreachable("ball radius delta must be positive");
  if (c.window_size < 1) throw BallUnreachable("window must contain at least one site");
}

double min_kappa(const ExperimentConfig& c) {
  if (c.kappas.empty()) throw BallUnreachable("no kappa values to scale against");
  return *std::min_element(c.kappas.begin(), c.kappas.end());
}

double min_modulus(const ExperimentConfig& c) {
  if (c.zs.empty()) throw BallUnreachable("no z values to scale against");
  double m = std::abs(c.zs.front());
  for (const auto& z : c.zs) m = std::min(m, std::abs(z));
  return m;
}

std::string sign_label(Model m, int sign) {
  if (m == Model::toda) return sign > 0 ? "plus" : "minus";
  return sign > 0 ? "defocusing" : "focusing";
}

std::string param_label(double kappa) { return "k" + format_number(kappa); }

std::string param_label(Complex z) {
  std::ostringstream s;
  s << "z" << format_number(z.real()) << (z.imag() < 0 ? "-" : "+") << format_number(std::abs(z.imag())) << "i";
  return s.str();
}

void bump(Residuals& r, const std::string& name, double v) {
  auto [it, inserted] = r.emplace(name, v);
  if (!inserted) it->second = std::max(it->second, std::isnan(v) ? std::numeric_limits<double>::infinity() : v);
  if (std::isnan(v)) it->second = std::numeric_limits<double>::infinity();
}

struct ItemResult {
  Residuals residuals;
  std::vector<Table> tables;
  std::vector<std::vector<std::string>> rows;  // rows for the mode's shared table
  std::vector<std::string> notes;
};

// A unit direction (c, d) for convexity probes.
toda::Direction probe_direction(const ExperimentConfig& c, int index, int k, int size) {
  toda::Direction d{std::vector<double>(static_cast<std::size_t>(size)),
                    std::vector<double>(static_cast<std::size_t>(size))};
  double norm2 = 0.0;
  const std::uint64_t stream = 1000 + 2 * static_cast<std::uint64_t>(k);
  for (int i = 0; i < size; ++i) {
    d.c[i] = counter_uniform(c.seed, static_cast<std::uint64_t>(index), i, stream);
    d.d[i] = counter_uniform(c.seed, static_cast<std::uint64_t>(index), i, stream + 1);
    norm2 += d.c[i] * d.c[i] + d.d[i] * d.d[i];
  }
  const double scale = norm2 > 0 ? 1.0 / std::sqrt(norm2) : 0.0;
  for (int i = 0; i < size; ++i) {
    d.c[i] *= scale;
    d.d[i] *= scale;
  }
  return d;
}

Table site_table(const std::string& name) { return {name, {"site", "density", "current", "residual"}, {}}; }

// ---- Toda items --------------------------------------------------------------------

ItemResult toda_item(const ExperimentConfig& c, int index, double kappa_value, int sign_int, bool write_sites) {
  ItemResult out;
  const toda::Kappa kappa(kappa_value);
  const toda::LaxSign sign = sign_int > 0 ? toda::LaxSign::plus : toda::LaxSign::minus;
  const toda::TodaState s = generate_toda_state(c, index);
  Residuals& r = out.residuals;

  if (c.mode == Mode::macroscopic) {
    const toda::MacroscopicLedger l = toda::macroscopic_check(s, kappa, sign);
    bump(r, "ledger_rho", std::abs(l.lhs_rho - l.rhs_rho));
    bump(r, "ledger_gamma", std::abs(l.lhs_gamma - l.rhs_gamma));
    bump(r, "log_det_routes", std::abs(l.log_det - l.log_det_pivots));
    return out;
  }

  if (c.mode == Mode::verify) {
    const toda::TodaDensityReport rep = toda::density_report(s, kappa, sign);
    for (const auto& [name, v] : rep.residuals) bump(r, name, v);
    double min_density = 0.0;
    for (double v : rep.rho.values) min_density = std::min(min_density, v);
    for (double v : rep.gamma.values) min_density = std::min(min_density, v);
    bump(r, "nonnegativity", -min_density);
    const toda::GreenTable g = toda::green_table(s, kappa, sign);
    bump(r, "green_positivity", std::max(0.0, -toda::min_green_entry(g, g.window())));

    if (sign == toda::LaxSign::plus) {
      toda::TodaState flipped = s;
      for (double& b : flipped.b) b = -b;
      const toda::GreenTable gm = toda::green_table(flipped, kappa, toda::LaxSign::minus);
      const auto rho_minus = toda::rho_density(flipped, kappa, toda::LaxSign::minus, gm);
      double gap = 0.0;
      for (std::size_t i = 0; i < rho_minus.values.size(); ++i)
        gap = std::max(gap, std::abs(rep.rho.values[i] - rho_minus.values[i]));
      bump(r, "sign_flip", gap);
    }

    if (write_sites) {
      const auto rates = toda::density_time_derivative(s, kappa, sign, g);
      Table t = site_table("sites_toda_" + param_label(kappa_value) + "_" + sign_label(Model::toda, sign_int) + ".csv");
      const LatticeWindow w = rep.rho.window;
      for (int n = w.first; n < w.end(); ++n) {
        const double res = n < w.last() ? std::abs(toda::sign_value(sign) * rates.drho_dt[n] -
                                                   (rep.rho_current[n + 1] - rep.rho_current[n]))
                                        : 0.0;
        t.rows.push_back({std::to_string(n), format_number(rep.rho[n]), format_number(rep.rho_current[n]),
                          format_number(res)});
      }
      out.tables.push_back(std::move(t));
    }
  }

  if (c.mode == Mode::verify || c.mode == Mode::coercivity) {
    for (int k = 0; k < c.n_directions; ++k) {
      const toda::Direction dir = probe_direction(c, index, k, s.window.size);
      const int site = s.window.first +
                       static_cast<int>(counter_hash(c.seed, static_cast<std::uint64_t>(index), k, 999) %
                                        static_cast<std::uint64_t>(s.window.size));
      const toda::ConvexityProbe p = toda::convexity_probe(s, kappa, sign, dir, site, c.probe_step);
      bump(r, "convexity", std::max(0.0, -std::min(p.rho_second_diff, p.gamma_second_diff)));
      bump(r, "a_gradient", std::abs(p.a_gradient));
      if (c.mode == Mode::coercivity) {
        out.rows.push_back({std::to_string(index), format_number(kappa_value), std::to_string(sign_int),
                            std::to_string(k), std::to_string(site), format_number(p.rho_second_diff),
                            format_number(p.gamma_second_diff), format_number(p.a_gradient)});
      }
    }
  }
  return out;
}

// ---- AL items ----------------------------------------------------------------------

ItemResult al_item(const ExperimentConfig& c, int index, Complex zv, int sign_int, bool write_sites) {
  ItemResult out;
  const al::SpectralZ z(zv, c.allow_unsupported_z);
  const al::ALSign sign = sign_int > 0 ? al::ALSign::defocusing : al::ALSign::focusing;
  const al::ALState s = generate_al_state(c, index, sign);
  Residuals& r = out.residuals;

  if (c.mode == Mode::macroscopic) {
    const al::Ledger l = al::macroscopic_check(s, z);
    bump(r, "ledger_det", std::abs(l.sum_rho - l.log_det));
    bump(r, "ledger_tr", std::abs(l.sum_gamma - l.weighted_trace));
    bump(r, "log_det_routes",
         std::max(std::abs(l.log_det - l.log_det_section), std::abs(l.log_det - l.log_det_pivots)));
  } else {
    const al::ALDensityReport rep = al::density_report(s, z);
    for (const auto& [name, v] : rep.residuals) bump(r, name, v);
    if (write_sites) {
      const al::GreenTable g = al::green_table(s, z);
      const auto rates = al::density_time_derivative(s, z, g);
      const std::string stem = "sites_al_" + param_label(zv) + "_" + sign_label(Model::al, sign_int);
      Table re = site_table(stem + "_re.csv");
      Table im = site_table(stem + "_im.csv");
      const LatticeWindow w = rep.rho.window;
      for (int n = w.first; n < w.end(); ++n) {
        const double res = n < w.last() ? std::abs(rates.drho_dt[n] - (rep.j[n + 1] - rep.j[n])) : 0.0;
        re.rows.push_back({std::to_string(n), format_number(rep.rho[n].real()), format_number(rep.j[n].real()),
                           format_number(res)});
        im.rows.push_back({std::to_string(n), format_number(rep.rho[n].imag()), format_number(rep.j[n].imag()),
                           format_number(res)});
      }
      out.tables.push_back(std::move(re));
      out.tables.push_back(std::move(im));
    }
  }
  const al::ZDerivative zd = al::z_derivative_check(s, z);
  bump(r, "z_derivative", std::abs(zd.lhs - zd.rhs));
  return out;
}

ItemResult al_coercivity_item(const ExperimentConfig& c, int direction_index, double z, int sign_int) {
  ItemResult out;
  const al::ALSign sign = sign_int > 0 ? al::ALSign::defocusing : al::ALSign::focusing;
  const LatticeWindow w{0, c.window_size};
  std::vector<Complex> dir(static_cast<std::size_t>(c.window_size));
  double norm2 = 0.0;
  for (int i = 0; i < c.window_size; ++i) {
    dir[i] = {counter_uniform(c.seed, static_cast<std::uint64_t>(direction_index), i, 2000),
              counter_uniform(c.seed, static_cast<std::uint64_t>(direction_index), i, 2001)};
    norm2 += std::norm(dir[i]);
  }
  for (auto& d : dir) d /= std::sqrt(norm2);
  const al::Coercivity co = al::coercivity_check(w, dir, z, sign, c.coercivity_eps);
  auto rel = [](double x, double ref) { return std::abs(x - ref) / std::max(std::abs(ref), 1e-300); };
  bump(out.residuals, "coercivity_im", rel(co.sum_im_j2, co.dft_im));
  bump(out.residuals, "coercivity_re", rel(co.sum_re_rho2, co.dft_re));
  // defocusing: Im-form <= 0 and Re-form >= 0; focusing reverses both.
  const double s = static_cast<double>(sign_int);
  bump(out.residuals, "coercivity_sign", std::max({0.0, s * co.sum_im_j2, -s * co.sum_re_rho2}));
  out.rows.push_back({format_number(z), std::to_string(sign_int), std::to_string(direction_index),
                      format_number(co.sum_im_j2), format_number(co.dft_im), format_number(co.sum_re_rho2),
                      format_number(co.dft_re)});
  return out;
}

// ---- evolution ---------------------------------------------------------------------

constexpr double kDriftFloor = 1e-13;

template <class Model, class Monitor>
ItemResult evolve_item(const ExperimentConfig& c, int index, int sign_int, const typename Model::State& s,
                       int grow_margin, Monitor&& monitor) {
  ItemResult out;
  flow::IntegrateOptions opts;
  opts.tol = c.flow_tol;
  opts.grow_margin = grow_margin;
  for (int q = 1; q < 4; ++q) opts.output_times.push_back(c.final_time * q / 4.0);
  const auto traj = flow::integrate<Model>(s, c.final_time, opts);
  opts.tol = c.flow_tol / 2.0;
  const auto traj_half = flow::integrate<Model>(s, c.final_time, opts);

  std::map<std::string, double> drift;
  std::map<std::string, double> drift_half;
  std::vector<std::size_t> flagged;
  monitor(traj, drift, flagged);
  monitor(traj_half, drift_half, flagged);
  if (!flagged.empty())
    out.notes.push_back("state " + std::to_string(index) + ": snapshots left the ball during evolution");

  double worst_ratio = std::numeric_limits<double>::infinity();
  for (const auto& [name, d] : drift) {
    bump(out.residuals, "drift_" + name, d);
    const double dh = drift_half[name];
    const double ratio = dh > 0 ? d / dh : std::numeric_limits<double>::infinity();
    if (d > kDriftFloor) worst_ratio = std::min(worst_ratio, ratio);
    out.rows.push_back({std::to_string(index), std::to_string(sign_int), name, format_number(d), format_number(dh),
                        format_number(ratio)});
  }
  bump(out.residuals, "drift_halving", std::isinf(worst_ratio) ? 0.0 : 1.0 / worst_ratio);
  return out;
}

ItemResult toda_evolve_item(const ExperimentConfig& c, int index) {
  const toda::TodaState s = generate_toda_state(c, index);
  const int margin = toda::pad_width(toda::Kappa(min_kappa(c)));
  return evolve_item<flow::TodaModel>(
      c, index, 0, s, margin,
      [&](const flow::Trajectory<toda::TodaState>& traj, std::map<std::string, double>& drift,
          std::vector<std::size_t>& flagged) {
        for (double k : c.kappas) {
          for (int sg : c.signs) {
            const auto table =
                flow::conservation_monitor(traj, toda::Kappa(k), sg > 0 ? toda::LaxSign::plus : toda::LaxSign::minus);
            for (const auto& [name, d] : table.drift) drift[name] = std::max(drift[name], d);
            flagged.insert(flagged.end(), table.out_of_ball.begin(), table.out_of_ball.end());
          }
        }
      });
}

ItemResult al_evolve_item(const ExperimentConfig& c, int index, int sign_int) {
  const al::ALState s = generate_al_state(c, index, sign_int > 0 ? al::ALSign::defocusing : al::ALSign::focusing);
  const int margin = al::pad_width(al::SpectralZ(c.zs.front(), c.allow_unsupported_z));
  return evolve_item<flow::ALModel>(
      c, index, sign_int, s, margin,
      [&](const flow::Trajectory<al::ALState>& traj, std::map<std::string, double>& drift,
          std::vector<std::size_t>& flagged) {
        for (const Complex& z : c.zs) {
          const auto table = flow::conservation_monitor(traj, al::SpectralZ(z, c.allow_unsupported_z));
          for (const auto& [name, d] : table.drift) drift[name] = std::max(drift[name], d);
          flagged.insert(flagged.end(), table.out_of_ball.begin(), table.out_of_ball.end());
        }
      });
}

std::vector<CheckSpec> make_catalog(Model model) {
  using M = Mode;
  const std::vector<M> verify{M::verify};
  const std::vector<M> ledger{M::verify, M::macroscopic};
  const std::vector<M> probes{M::verify, M::coercivity};
  const std::vector<M> evolve{M::evolve};
  const std::vector<M> all{M::verify, M::evolve, M::coercivity, M::macroscopic};
  std::vector<CheckSpec> c;
  if (model == Model::toda) {
    c = {
        {"quadratic_id", "G(n,n+1)[1 + a_n G(n,n+1)] = a_n G(n,n) G(n+1,n+1)", 1e-9, verify},
        {"d1", "G(n+1,k)/G(n+1,n) = G(n,k)/G(n,n) [1 + 1_{k>n}/(a_n G(n,n+1))] (relative)", 1e-9, verify},
        {"u1", "G(n,k)/G(n,n+1) = G(n+1,k)/G(n+1,n+1) [1 + 1_{k<=n}/(a_n G(n,n+1))] (relative)", 1e-9, verify},
        {"middle", "G(k,l) = G(k,n+1) G(n,l)/G(n+1,n) for k <= n < l (relative)", 1e-9, verify},
        {"involution", "L+ - 2 cosh(k) = -U L- U, (Uf)_n = (-1)^n f_n", 1e-9, verify},
        {"symmetry", "G(n,m) = G(m,n)", 1e-9, verify},
        {"local_conservation_rho", "+-d(rho_n)/dt = j_{n+1} - j_n", 1e-9, verify},
        {"local_conservation_gamma", "+-d(gamma_n)/dt = gj_{n+1} - gj_n", 1e-9, verify},
        {"rho_forms", "rho_n by the log, arcsinh and log-ratio forms agree", 1e-11, verify},
        {"sign_flip", "rho+_n(a,b) = rho-_n(a,-b)", 1e-12, verify},
        {"nonnegativity", "rho_n >= 0 and gamma_n >= 0 (residual: -min)", 1e-12, verify},
        {"green_positivity", "G(n,m) > 0 (residual: -min)", 0.0, verify},
        {"ledger_rho", "sum rho_n = -log det(L/L0) +- P/(2 sinh k) + e^{-k} M/(2 sinh k)", 1e-8, ledger},
        {"ledger_gamma", "sum gamma_n = tr(L^-1 - L0^-1) +- cosh(k) P/(2 sinh^3 k) + M/(2 sinh^3 k)", 1e-8, ledger},
        {"log_det_routes", "log det(L L0^-1): trace-log series vs LU pivots", 1e-9, ledger},
        {"convexity", "second difference of rho_n, gamma_n along unit directions >= 0 (residual: -min)", 1e-6,
         probes},
        {"a_gradient", "d(rho_n)/d(a_n) = 0", 1e-8, probes},
        {"drift_H", "H(t) = H(0)", 1e-7, evolve},
        {"drift_M", "M(t) = M(0)", 1e-7, evolve},
        {"drift_P", "P(t) = P(0)", 1e-7, evolve},
        {"drift_sum_rho", "sum rho_n(t) = sum rho_n(0)", 1e-7, evolve},
        {"drift_sum_gamma", "sum gamma_n(t) = sum gamma_n(0)", 1e-7, evolve},
        {"drift_log_det", "log det(L L0^-1)(t) = log det(L L0^-1)(0)", 1e-7, evolve},
    };
  } else {
    c = {
        {"detID", "det G(n,m) = 0", 1e-9, verify},
        {"trID", "tr G(n+1,n) = -1", 1e-9, verify},
        {"nD", "G12(n+1,k)/(1+G11(n+1,n)) = G12(n,k)/G11(n,n) + 1_{k<n} a_n G22(n+1,k)/((1-a_n b_n)(1+G11(n+1,n))G11(n,n))",
         1e-9, verify},
        {"nU",
         "G21(k,n)/(1+G11(n+1,n)) = G21(k,n+1)/G11(n+1,n+1) + 1_{k>n+1} b_{n+1} G22(k,n)/((1-a_{n+1}b_{n+1})(1+G11(n+1,n))G11(n+1,n+1))",
         1e-9, verify},
        {"nD2",
         "(d_nk + G11(n+1,k))/(1+G11(n+1,n)) = G11(n,k)/G11(n,n) + 1_{k<n} a_n G21(n+1,k)/((1-a_n b_n)G11(n,n)(1+G11(n+1,n)))",
         1e-9, verify},
        {"nU2",
         "(d_{n+1,k} + G11(k,n))/(1+G11(n+1,n)) = G11(k,n+1)/G11(n+1,n+1) + 1_{k>n+1} b_{n+1} G12(k,n)/((1-a_{n+1}b_{n+1})G11(n+1,n+1)(1+G11(n+1,n)))",
         1e-9, verify},
        {"wrap_left", "U_n G(n,n) = 1 + G(n+1,n)", 1e-9, verify},
        {"wrap_right", "1 + G(n+1,n) = G(n+1,n+1) U_{n+1}", 1e-9, verify},
        {"vacuous_trace", "tr{(L^-1 - L0^-1) S} = 0", 1e-9, verify},
        {"local_conservation_rho", "d(rho_n)/dt = j_{n+1} - j_n", 1e-9, verify},
        {"local_conservation_gamma", "d(gamma_n)/dt = gj_{n+1} - gj_n", 1e-9, verify},
        {"rho_forms", "rho_n by its definition and both alternative log forms agree", 1e-11, verify},
        {"gamma_forms", "G11(n+1,n) - G22(n+1,n) - 1 = 2 G11(n+1,n)", 1e-11, verify},
        {"ledger_det", "sum rho_n = log det[L L0^-1]", 1e-8, ledger},
        {"ledger_tr", "sum gamma_n = tr{(L^-1 - L0^-1) S sigma3}", 1e-8, ledger},
        {"log_det_routes", "log det[L L0^-1]: Gamma-Lambda series vs section series vs LU pivots", 1e-9, ledger},
        {"z_derivative", "z d/dz log det[L L0^-1] = tr{(L^-1 - L0^-1) S sigma3} (finite difference)", 1e-6, ledger},
        {"coercivity_im", "quadratic part of sum Im j_n = -+ int 2z^2 sin^2/|z^2-e^{it}|^2 |alpha^|^2 (relative)",
         1e-4, {Mode::coercivity}},
        {"coercivity_re",
         "quadratic part of sum Re rho~_n = +- int (z^4-1)/(2|z^2-e^{it}|^2) |alpha^|^2 (relative)", 1e-4,
         {Mode::coercivity}},
        {"coercivity_sign", "Im-form <= 0 <= Re-form when defocusing, reversed when focusing", 0.0,
         {Mode::coercivity}},
        {"drift_H", "H(t) = H(0)", 1e-7, evolve},
        {"drift_M", "M(t) = M(0)", 1e-7, evolve},
        {"drift_sum_rho", "sum rho_n(t) = sum rho_n(0)", 1e-7, evolve},
        {"drift_sum_gamma", "sum gamma_n(t) = sum gamma_n(0)", 1e-7, evolve},
        {"drift_log_det", "log det[L L0^-1](t) = log det[L L0^-1](0)", 1e-7, evolve},
    };
  }
  c.push_back({"drift_halving", "drift(tol)/drift(tol/2) >= 8 (residual: inverse of the smallest ratio)", 0.125,
               evolve});
  c.push_back({"evaluation_errors", "items that raised instead of producing residuals (count)", 0.0, all});
  return c;
}

}  // namespace

// ---- configuration -------------------------------------------------------------------

std::string to_string(Model m) { return m == Model::toda ? "toda" : "al"; }

std::string to_string(Mode m) {
  switch (m) {
    case Mode::verify:
      return "verify";
    case Mode::evolve:
      return "evolve";
    case Mode::coercivity:
      return "coercivity";
    case Mode::macroscopic:
      return "macroscopic";
  }
  return "verify";
}

void set_option(ExperimentConfig& c, const std::string& raw_key, const std::string& value, const std::string& where) {
  std::string key = trim(raw_key);
  std::replace(key.begin(), key.end(), '_', '-');
  if (key == "model") {
    const std::string v = trim(value);
    if (v == "toda")
      c.model = Model::toda;
    else if (v == "al" || v == "ablowitz-ladik")
      c.model = Model::al;
    else
      bad_value(key, value, where, "expected toda or al");
  } else if (key == "mode") {
    const std::string v = trim(value);
    if (v == "verify")
      c.mode = Mode::verify;
    else if (v == "evolve")
      c.mode = Mode::evolve;
    else if (v == "coercivity")
      c.mode = Mode::coercivity;
    else if (v == "macroscopic")
      c.mode = Mode::macroscopic;
    else
      bad_value(key, value, where, "expected verify, evolve, coercivity or macroscopic");
  } else if (key == "seed") {
    const long long v = parse_int(key, value, where);
    if (v < 0) bad_value(key, value, where, "must be non-negative");
    c.seed = static_cast<std::uint64_t>(v);
  } else if (key == "n-states") {
    const long long v = parse_int(key, value, where);
    if (v < 1 || v > 1000000) bad_value(key, value, where, "must lie in [1, 1e6]");
    c.n_states = static_cast<int>(v);
  } else if (key == "window") {
    const long long v = parse_int(key, value, where);
    if (v < 8 || v > 4096) bad_value(key, value, where, "must lie in [8, 4096]");
    c.window_size = static_cast<int>(v);
  } else if (key == "amplitude") {
    c.amplitude = parse_double(key, value, where);
    if (c.amplitude < 0) bad_value(key, value, where, "must be non-negative");
  } else if (key == "delta") {
    c.delta = parse_double(key, value, where);
    if (!(c.delta > 0)) bad_value(key, value, where, "must be positive");
  } else if (key == "kappa") {
    c.kappas.clear();
    for (const auto& item : split_list(value)) {
      const double k = parse_double(key, item, where);
      if (!(k >= 1.0)) bad_value(key, item, where, "kappa must be >= 1");
      c.kappas.push_back(k);
    }
  } else if (key == "z") {
    c.zs.clear();
    for (const auto& item : split_list(value)) {
      const Complex z = parse_complex(key, item, where);
      if (!(std::abs(z) > 1.0)) bad_value(key, item, where, "|z| must exceed 1");
      c.zs.push_back(z);
    }
  } else if (key == "sign") {
    c.signs.clear();
    for (const auto& item : split_list(value)) {
      if (trim(item) == "both") {
        c.signs = {1, -1};
        continue;
      }
      c.signs.push_back(parse_sign(key, item, where));
    }
  } else if (key == "out") {
    c.out = trim(value);
  } else if (key == "t" || key == "T" || key == "final-time") {
    c.final_time = parse_double(key, value, where);
    if (!(c.final_time > 0)) bad_value(key, value, where, "must be positive");
  } else if (key == "flow-tol") {
    c.flow_tol = parse_double(key, value, where);
    if (!(c.flow_tol >= 1e-12 && c.flow_tol <= 1e-6)) bad_value(key, value, where, "must lie in [1e-12, 1e-6]");
  } else if (key == "n-directions") {
    const long long v = parse_int(key, value, where);
    if (v < 0 || v > 10000) bad_value(key, value, where, "must lie in [0, 1e4]");
    c.n_directions = static_cast<int>(v);
  } else if (key == "probe-step") {
    c.probe_step = parse_double(key, value, where);
    if (!(c.probe_step >= 1e-4 && c.probe_step <= 1e-2)) bad_value(key, value, where, "must lie in [1e-4, 1e-2]");
  } else if (key == "eps") {
    c.coercivity_eps = parse_double(key, value, where);
    if (!(c.coercivity_eps >= 1e-3 && c.coercivity_eps <= 1e-2))
      bad_value(key, value, where, "must lie in [1e-3, 1e-2]");
  } else if (key == "allow-unsupported-z") {
    const std::string v = trim(value);
    if (v == "true" || v == "1" || v == "yes")
      c.allow_unsupported_z = true;
    else if (v == "false" || v == "0" || v == "no")
      c.allow_unsupported_z = false;
    else
      bad_value(key, value, where, "expected true or false");
  } else if (key.rfind("tol-", 0) == 0) {
    const std::vector<std::string> names = all_check_names();
    const auto it = std::find_if(names.begin(), names.end(), [&](const std::string& n) { return tolerance_key(n) == key; });
    if (it == names.end()) throw ConfigError(where + ": unknown check in '" + raw_key + "'");
    const double t = parse_double(key, value, where);
    if (t < 0) bad_value(key, value, where, "tolerance must be non-negative");
    c.tolerances[*it] = t;
  } else {
    throw ConfigError(where + ": unknown key '" + raw_key + "'");
  }
}

void apply_config_file(ExperimentConfig& c, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path + ": cannot open config file");
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const std::string where = path + ":" + std::to_string(number);
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError(where + ": missing key before '='");
    set_option(c, key, line.substr(eq + 1), where);
  }
}

void validate(const ExperimentConfig& c) {
  if (c.window_size < 8) throw ConfigError("window must be at least 8 sites");
  if (c.n_states < 1) throw ConfigError("n-states must be positive");
  if (c.signs.empty()) throw ConfigError("at least one sign is required");
  if (c.model == Model::toda && c.kappas.empty()) throw ConfigError("at least one kappa is required");
  if (c.model == Model::al && c.zs.empty()) throw ConfigError("at least one z is required");
  if (c.model == Model::al) {
    for (const auto& z : c.zs) {
      if (std::abs(z) < 2.0 && !c.allow_unsupported_z) {
        std::ostringstream msg;
        msg << "|z| = " << std::abs(z) << " < 2 needs allow-unsupported-z";
        throw ConfigError(msg.str());
      }
    }
  }
}

// ---- random states -------------------------------------------------------------------

std::uint64_t counter_hash(std::uint64_t seed, std::uint64_t index, std::int64_t site, std::uint64_t component) {
  auto mix = [](std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  };
  std::uint64_t h = mix(seed);
  h = mix(h ^ index);
  h = mix(h ^ static_cast<std::uint64_t>(site));
  return mix(h ^ component);
}

double counter_uniform(std::uint64_t seed, std::uint64_t index, std::int64_t site, std::uint64_t component) {
  const std::uint64_t bits = counter_hash(seed, index, site, component) >> 11;  // 53 bits
  return 2.0 * (static_cast<double>(bits) * 0x1.0p-53) - 1.0;
}

toda::TodaState generate_toda_state(const ExperimentConfig& c, int index) {
  require_generation_inputs(c);
  const double bound = c.delta * c.delta * min_kappa(c);
  const auto idx = static_cast<std::uint64_t>(index);
  auto make = [&](double t) {
    toda::TodaState s = toda::TodaState::vacuum({0, c.window_size});
    for (int i = 0; i < c.window_size; ++i) {
      s.a[i] = 0.5 * std::exp(t * c.amplitude * counter_uniform(c.seed, idx, i, 0));
      s.b[i] = t * c.amplitude * counter_uniform(c.seed, idx, i, 1);
    }
    return s;
  };
  toda::TodaState s = scale_into_ball(make, [](const toda::TodaState& st) { return toda::energy(st); }, 0.5 * bound);
  if (!(toda::energy(s) < bound)) throw BallUnreachable("could not scale the Toda state into the ball");
  return s;
}

al::ALState generate_al_state(const ExperimentConfig& c, int index, al::ALSign sign) {
  require_generation_inputs(c);
  const double r = min_modulus(c);
  const double bound = c.delta * c.delta * (r * r - 1.0) / r;
  const auto idx = static_cast<std::uint64_t>(index);
  std::vector<Complex> draw(static_cast<std::size_t>(c.window_size));
  double largest = 0.0;
  for (int i = 0; i < c.window_size; ++i) {
    draw[i] = {counter_uniform(c.seed, idx, i, 0), counter_uniform(c.seed, idx, i, 1)};
    largest = std::max(largest, std::abs(draw[i]) * c.amplitude);
  }
  // Defocusing needs |alpha| < 1 before M is even defined.
  const double cap = largest > 0.5 ? 0.5 / largest : 1.0;
  auto make = [&](double t) {
    al::ALState s = al::ALState::vacuum({0, c.window_size}, sign);
    for (int i = 0; i < c.window_size; ++i) s.alpha[i] = t * cap * c.amplitude * draw[i];
    return s;
  };
  auto measure = [](const al::ALState& st) {
    const double m = std::abs(al::mass_and_energy(st).M);
    return m * std::exp(m);
  };
  al::ALState s = scale_into_ball(make, measure, 0.5 * bound);
  if (!(measure(s) < bound)) throw BallUnreachable("could not scale the AL state into the ball");
  return s;
}

// ---- checks and running ----------------------------------------------------------------

const std::vector<CheckSpec>& check_catalog(Model model) {
  static const std::vector<CheckSpec> toda_catalog = make_catalog(Model::toda);
  static const std::vector<CheckSpec> al_catalog = make_catalog(Model::al);
  return model == Model::toda ? toda_catalog : al_catalog;
}

std::vector<std::string> all_check_names() {
  std::vector<std::string> names;
  for (Model m : {Model::toda, Model::al})
    for (const auto& spec : check_catalog(m))
      if (std::find(names.begin(), names.end(), spec.name) == names.end()) names.push_back(spec.name);
  return names;
}

bool Report::all_pass() const {
  return std::all_of(checks.begin(), checks.end(), [](const CheckRecord& r) { return r.pass; });
}

std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

Report run(const ExperimentConfig& c) {
  validate(c);
  struct Item {
    int index;
    int param;
    int sign;
  };
  std::vector<Item> items;
  std::vector<double> coercivity_zs;
  Report report;

  const int n_params = c.model == Model::toda ? static_cast<int>(c.kappas.size()) : static_cast<int>(c.zs.size());
  if (c.mode == Mode::evolve) {
    for (int i = 0; i < c.n_states; ++i) {
      if (c.model == Model::toda)
        items.push_back({i, 0, 0});
      else
        for (std::size_t s = 0; s < c.signs.size(); ++s) items.push_back({i, 0, static_cast<int>(s)});
    }
  } else if (c.mode == Mode::coercivity && c.model == Model::al) {
    for (const auto& z : c.zs) {
      if (z.imag() == 0.0 && z.real() >= 2.0)
        coercivity_zs.push_back(z.real());
      else
        report.notes.push_back("coercivity skips z = " + param_label(z) + ": the Fourier weights need real z >= 2");
    }
    for (std::size_t p = 0; p < coercivity_zs.size(); ++p)
      for (std::size_t s = 0; s < c.signs.size(); ++s)
        for (int d = 0; d < c.n_directions; ++d) items.push_back({d, static_cast<int>(p), static_cast<int>(s)});
  } else {
    for (int i = 0; i < c.n_states; ++i)
      for (int p = 0; p < n_params; ++p)
        for (std::size_t s = 0; s < c.signs.size(); ++s) items.push_back({i, p, static_cast<int>(s)});
  }

  std::vector<ItemResult> results(items.size());
  std::vector<std::optional<std::string>> failures(items.size());
  parallel_for(static_cast<int>(items.size()), [&](int k) {
    const Item& it = items[k];
    const int sign = c.signs[static_cast<std::size_t>(it.sign)];
    try {
      if (c.mode == Mode::evolve) {
        results[k] = c.model == Model::toda ? toda_evolve_item(c, it.index) : al_evolve_item(c, it.index, sign);
      } else if (c.mode == Mode::coercivity && c.model == Model::al) {
        results[k] = al_coercivity_item(c, it.index, coercivity_zs[static_cast<std::size_t>(it.param)], sign);
      } else if (c.model == Model::toda) {
        results[k] = toda_item(c, it.index, c.kappas[static_cast<std::size_t>(it.param)], sign, it.index == 0);
      } else {
        results[k] = al_item(c, it.index, c.zs[static_cast<std::size_t>(it.param)], sign, it.index == 0);
      }
    } catch (const LatticeError& e) {
      failures[k] = "item " + std::to_string(it.index) + " (parameter " + std::to_string(it.param) + ", sign " +
                    std::to_string(sign) + "): " + e.what();
    }
  });

  Residuals totals;
  double error_count = 0;
  Table shared;
  if (c.mode == Mode::evolve) {
    shared = {"drift_" + to_string(c.model) + ".csv", {"state", "sign", "functional", "drift", "drift_half_tol", "ratio"}, {}};
  } else if (c.mode == Mode::coercivity) {
    if (c.model == Model::al)
      shared = {"coercivity_al.csv", {"z", "sign", "direction", "sum_im_j2", "dft_im", "sum_re_rho2", "dft_re"}, {}};
    else
      shared = {"convexity_toda.csv",
                {"state", "kappa", "sign", "direction", "site", "rho_second_diff", "gamma_second_diff", "a_gradient"},
                {}};
  }
  for (std::size_t k = 0; k < items.size(); ++k) {
    if (failures[k]) {
      error_count += 1;
      report.notes.push_back(*failures[k]);
      continue;
    }
    for (const auto& [name, v] : results[k].residuals) bump(totals, name, v);
    for (auto& t : results[k].tables) report.tables.push_back(std::move(t));
    for (auto& row : results[k].rows) shared.rows.push_back(std::move(row));
    for (auto& n : results[k].notes) report.notes.push_back(std::move(n));
  }
  totals["evaluation_errors"] = error_count;
  if (!shared.file_name.empty()) report.tables.push_back(std::move(shared));

  for (const auto& spec : check_catalog(c.model)) {
    if (std::find(spec.modes.begin(), spec.modes.end(), c.mode) == spec.modes.end()) continue;
    const auto found = totals.find(spec.name);
    if (found == totals.end()) continue;  // e.g. sign_flip when only the minus sign was requested
    CheckRecord rec;
    rec.name = spec.name;
    rec.anchor = spec.anchor;
    rec.tolerance = c.tolerances.count(spec.name) ? c.tolerances.at(spec.name) : spec.tolerance;
    rec.max_residual = found->second;
    rec.pass = rec.max_residual <= rec.tolerance;
    report.checks.push_back(rec);
  }
  return report;
}

// ---- output ----------------------------------------------------------------------------

std::string version() { return LATTICE_LAWS_VERSION; }

std::string report_json(const Report& report, const ExperimentConfig& c, bool with_timestamp) {
  nlohmann::ordered_json j;
  j["schema"] = 1;
  j["model"] = to_string(c.model);
  j["mode"] = to_string(c.mode);
  j["pass"] = report.all_pass();
  nlohmann::ordered_json checks = nlohmann::ordered_json::array();
  for (const auto& r : report.checks) {
    nlohmann::ordered_json rec;
    rec["name"] = r.name;
    rec["paper_anchor"] = r.anchor;
    rec["max_residual"] = r.max_residual;
    rec["tolerance"] = r.tolerance;
    rec["pass"] = r.pass;
    checks.push_back(rec);
  }
  j["checks"] = checks;

  nlohmann::ordered_json cfg;
  cfg["n_states"] = c.n_states;
  cfg["window"] = c.window_size;
  cfg["amplitude"] = c.amplitude;
  cfg["delta"] = c.delta;
  if (c.model == Model::toda) {
    cfg["kappa"] = c.kappas;
  } else {
    nlohmann::ordered_json zs = nlohmann::ordered_json::array();
    for (const auto& z : c.zs) zs.push_back({z.real(), z.imag()});
    cfg["z"] = zs;
  }
  cfg["sign"] = c.signs;
  if (c.mode == Mode::evolve) {
    cfg["T"] = c.final_time;
    cfg["flow_tol"] = c.flow_tol;
  }
  if (c.mode == Mode::coercivity || c.mode == Mode::verify) cfg["n_directions"] = c.n_directions;
  j["config"] = cfg;
  j["notes"] = report.notes;
  nlohmann::ordered_json env;
  env["seed"] = c.seed;
  env["version"] = version();
  j["environment"] = env;
  if (with_timestamp) {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    j["timestamp"] = buf;
  }
  return j.dump(2) + "\n";
}

std::string table_csv(const Table& t) {
  std::string out;
  for (std::size_t i = 0; i < t.header.size(); ++i) out += (i ? "," : "") + t.header[i];
  out += '\n';
  for (const auto& row : t.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) out += (i ? "," : "") + row[i];
    out += '\n';
  }
  return out;
}

void write_outputs(const Report& report, const ExperimentConfig& c) {
  if (c.out.empty()) return;
  const std::filesystem::path dir(c.out);
  std::filesystem::create_directories(dir);
  auto write = [&](const std::string& name, const std::string& text) {
    std::ofstream f(dir / name, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + (dir / name).string());
    f << text;
  };
  write("report.json", report_json(report, c));
  for (const auto& t : report.tables) write(t.file_name, table_csv(t));
}

int thread_count() {
  int n = static_cast<int>(std::thread::hardware_concurrency());
  if (n < 1) n = 1;
  if (const char* cap = std::getenv("LATTICE_LAWS_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(cap, &end, 10);
    if (end != cap && *end == '\0' && v >= 1) n = std::min<long>(n, v);
  }
  return n;
}

void parallel_for(int n, const std::function<void(int)>& body) {
  const int workers = std::min(thread_count(), n);
  if (workers <= 1) {
    for (int i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
        try {
          body(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
          next.store(n);
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace lattice_laws::experiment
