#include "lattice_laws/toda.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "lattice_laws/errors.hpp"

namespace lattice_laws::toda {

namespace {

double relative_gap(double x, double y) {
  const double scale = std::max(std::abs(x), std::abs(y));
  return scale > 0.0 ? std::abs(x - y) / scale : 0.0;
}

// sum_m [log(2a_m) e^{-2k|m + shift_a - n|} w_a + sign b_m e^{-2k|m + shift_b - n|} w_b]
double renormalization(const TodaState& s, double kappa, double sign, int n, double shift_a, double shift_b,
                       double w_a, double w_b) {
  double acc = 0.0;
  for (int i = 0; i < s.window.size; ++i) {
    const int m = s.window.first + i;
    const double la = std::log(2.0 * s.a[i]);
    acc += la * w_a * std::exp(-2.0 * kappa * std::abs(m + shift_a - n));
    acc += sign * s.b[i] * w_b * std::exp(-2.0 * kappa * std::abs(m + shift_b - n));
  }
  return acc;
}

// Current-side sums: sum_m [(4 a_{m-1}^2 - 1) e^{-2k|m + shift_a - n|} w_a + sign b_m e^{-2k|m + shift_b - n|} w_b]
double current_renormalization(const TodaState& s, double kappa, double sign, int n, double shift_a, double shift_b,
                               double w_a, double w_b) {
  double acc = 0.0;
  for (int i = 0; i < s.window.size; ++i) {
    const int m = s.window.first + i;
    const double a = s.a[i];
    // (4 a_{m'-1}^2 - 1) with m' = m + 1
    acc += (4.0 * a * a - 1.0) * w_a * std::exp(-2.0 * kappa * std::abs(m + 1 + shift_a - n));
    acc += sign * s.b[i] * w_b * std::exp(-2.0 * kappa * std::abs(m + shift_b - n));
  }
  return acc;
}

double gamma_at(const TodaState& s, double kappa, double sign, const GreenTable& g, int n) {
  const double sh = std::sinh(kappa);
  return g(n, n) - 1.0 / sh - renormalization(s, kappa, sign, n, 0.5, 0.0, 1.0 / (sh * sh), 1.0 / (sh * sh));
}

double rho_at(const TodaState& s, double kappa, double sign, const GreenTable& g, int n) {
  const double agn = s.a_at(n) * g(n, n + 1);
  if (!(g(n, n + 1) > 0.0)) {
    std::ostringstream msg;
    msg << "G(" << n << ", " << n + 1 << ") = " << g(n, n + 1) << " is not positive";
    throw DegenerateGreen(msg.str());
  }
  return kappa - 0.5 * std::log1p(1.0 / agn) - renormalization(s, kappa, sign, n, 0.0, -0.5, 1.0, 1.0);
}

void check_report_fits(const GreenTable& g, LatticeWindow report) {
  if (!g.window().covers(report.grown(1)))
    throw std::invalid_argument("Green table window does not cover the report window");
}

}  // namespace

Kappa::Kappa(double value) : value_(value) {
  if (!(value >= 1.0) || !std::isfinite(value)) {
    std::ostringstream msg;
    msg << "kappa must be >= 1, got " << value;
    throw DomainError(msg.str());
  }
}

TodaState TodaState::vacuum(LatticeWindow window) {
  require_valid(window);
  return {window, std::vector<double>(static_cast<std::size_t>(window.size), 0.5),
          std::vector<double>(static_cast<std::size_t>(window.size), 0.0)};
}

void TodaState::validate() const {
  require_valid(window);
  if (a.size() != static_cast<std::size_t>(window.size) || b.size() != static_cast<std::size_t>(window.size))
    throw std::invalid_argument("Toda state sequences do not match the window");
  for (double v : a)
    if (!(v > 0.0) || !std::isfinite(v)) throw std::invalid_argument("Toda state requires a_n > 0");
  for (double v : b)
    if (!std::isfinite(v)) throw std::invalid_argument("Toda state requires finite b_n");
}

TodaState TodaState::embedded(LatticeWindow larger) const {
  if (!larger.covers(window)) throw std::invalid_argument("embedding window must cover the state");
  TodaState out = vacuum(larger);
  for (int n = window.first; n < window.end(); ++n) {
    out.a[larger.offset(n)] = a_at(n);
    out.b[larger.offset(n)] = b_at(n);
  }
  return out;
}

TodaState flaschka_forward(const TodaPhase& phase) {
  require_valid(phase.window);
  if (phase.q.size() != static_cast<std::size_t>(phase.window.size) ||
      phase.p.size() != static_cast<std::size_t>(phase.window.size))
    throw std::invalid_argument("phase sequences do not match the window");
  auto q = [&](int n) { return phase.window.contains(n) ? phase.q[phase.window.offset(n)] : 0.0; };
  auto p = [&](int n) { return phase.window.contains(n) ? phase.p[phase.window.offset(n)] : 0.0; };
  const LatticeWindow w = phase.window.grown(1, 0);
  TodaState s = TodaState::vacuum(w);
  for (int n = w.first; n < w.end(); ++n) {
    s.a[w.offset(n)] = 0.5 * std::exp(0.5 * (q(n) - q(n + 1)));
    s.b[w.offset(n)] = -0.5 * p(n);
  }
  return s;
}

TodaRates toda_vector_field(const TodaState& s) { return toda_vector_field(s, s.window); }

TodaRates toda_vector_field(const TodaState& s, LatticeWindow out) {
  TodaRates r{SiteSeries<double>(out), SiteSeries<double>(out)};
  for (int n = out.first; n < out.end(); ++n) {
    const double a = s.a_at(n);
    const double a_prev = s.a_at(n - 1);
    r.da_dt[n] = a * (s.b_at(n + 1) - s.b_at(n));
    r.db_dt[n] = 2.0 * (a * a - a_prev * a_prev);
  }
  return r;
}

double energy(const TodaState& s) {
  double h = 0.0;
  for (int i = 0; i < s.window.size; ++i) {
    const double x = -2.0 * std::log(2.0 * s.a[i]);
    // V(x) = e^{-x} + x - 1, written to keep precision for small x
    h += 2.0 * s.b[i] * s.b[i] + (std::expm1(-x) + x);
  }
  return h;
}

Casimirs casimirs(const TodaState& s) {
  Casimirs c;
  for (int i = 0; i < s.window.size; ++i) {
    c.M -= 2.0 * std::log(2.0 * s.a[i]);
    c.P -= 2.0 * s.b[i];
  }
  return c;
}

bool in_ball(const TodaState& s, Kappa kappa, double delta) {
  if (!(delta > 0.0)) throw std::invalid_argument("ball radius must be positive");
  return energy(s) < delta * delta * kappa.value();
}

void require_ball(const TodaState& s, Kappa kappa, double delta) {
  if (in_ball(s, kappa, delta)) return;
  std::ostringstream msg;
  msg << "Toda state with energy " << energy(s) << " lies outside the ball H < " << delta * delta * kappa.value()
      << " (kappa = " << kappa.value() << ")";
  if (in_ball(s, kappa, 2.0 * delta)) {
    warn(msg.str());
    return;
  }
  throw OutOfBall(msg.str());
}

int pad_width(Kappa kappa) { return static_cast<int>(std::ceil(40.0 / kappa.value())); }

LatticeWindow padded_window(const TodaState& s, Kappa kappa) { return s.window.grown(pad_width(kappa)); }

LatticeWindow report_window(const TodaState& s, Kappa kappa) { return s.window.grown((pad_width(kappa) + 1) / 2); }

linalg::BandedMatrix<double> lax_matrix(const TodaState& s, Kappa kappa, LaxSign sign) {
  return lax_matrix(s, kappa, sign, padded_window(s, kappa));
}

linalg::BandedMatrix<double> lax_matrix(const TodaState& s, Kappa kappa, LaxSign sign, LatticeWindow window) {
  linalg::BandedMatrix<double> l(window, 1, 1, 1);
  const double ch = std::cosh(kappa.value());
  const double sg = sign_value(sign);
  for (int i = 0; i < window.size; ++i) {
    const int n = window.first + i;
    l.ref(i, i) = ch - sg * s.b_at(n);
    if (i + 1 < window.size) {
      l.ref(i, i + 1) = -s.a_at(n);
      l.ref(i + 1, i) = -s.a_at(n);
    }
  }
  return l;
}

double free_green(int n, int m, double kappa) {
  if (!(kappa > 0.0)) throw DomainError("free Green's function needs kappa > 0");
  return std::exp(-kappa * std::abs(n - m)) / std::sinh(kappa);
}

GreenTable green_table(const TodaState& s, Kappa kappa, LaxSign sign, double delta) {
  s.validate();
  require_ball(s, kappa, delta);
  return GreenTable(linalg::invert_window(lax_matrix(s, kappa, sign)));
}

SiteSeries<double> gamma_density(const TodaState& s, Kappa kappa, LaxSign sign, const GreenTable& g) {
  const LatticeWindow w = report_window(s, kappa);
  check_report_fits(g, w);
  SiteSeries<double> out(w);
  for (int n = w.first; n < w.end(); ++n) out[n] = gamma_at(s, kappa, sign_value(sign), g, n);
  return out;
}

SiteSeries<double> rho_density(const TodaState& s, Kappa kappa, LaxSign sign, const GreenTable& g) {
  const LatticeWindow w = report_window(s, kappa);
  check_report_fits(g, w);
  SiteSeries<double> out(w);
  for (int n = w.first; n < w.end(); ++n) out[n] = rho_at(s, kappa, sign_value(sign), g, n);
  return out;
}

RhoForms rho_forms(const TodaState& s, Kappa kappa, LaxSign sign, const GreenTable& g) {
  const LatticeWindow w = report_window(s, kappa);
  check_report_fits(g, w);
  const double k = kappa.value();
  const double sg = sign_value(sign);
  RhoForms f{SiteSeries<double>(w), SiteSeries<double>(w), SiteSeries<double>(w)};
  for (int n = w.first; n < w.end(); ++n) {
    const double a = s.a_at(n);
    const double renorm = renormalization(s, k, sg, n, 0.0, -0.5, 1.0, 1.0);
    f.original[n] = rho_at(s, k, sg, g, n);
    f.arcsinh[n] = k - std::asinh(1.0 / std::sqrt(4.0 * a * a * g(n, n) * g(n + 1, n + 1))) - renorm;
    const double off = g(n, n + 1);
    f.log_ratio[n] = k - 0.5 * std::log(g(n, n) * g(n + 1, n + 1) / (off * off)) - renorm;
  }
  return f;
}

TodaCurrents currents(const TodaState& s, Kappa kappa, LaxSign sign, const GreenTable& g) {
  const LatticeWindow w = report_window(s, kappa);
  check_report_fits(g, w.grown(1));
  const double k = kappa.value();
  const double sg = sign_value(sign);
  const double sh = std::sinh(k);
  TodaCurrents c{SiteSeries<double>(w), SiteSeries<double>(w)};
  for (int n = w.first; n < w.end(); ++n) {
    c.gamma_current[n] = 2.0 * s.a_at(n - 1) * g(n, n - 1) - std::exp(-k) / sh -
                         current_renormalization(s, k, sg, n, 0.0, 0.5, 0.5 / (sh * sh), 1.0 / (sh * sh));
    const double gnn = g(n, n);
    if (!(gnn > 0.0)) throw DegenerateGreen("diagonal Green's function is not positive");
    // The (4a^2 - 1) weight sits at |n + 1/2 - m| in a_{m-1} indexing; this is what makes
    // the current telescope against d(rho_n)/dt.
    c.rho_current[n] = sh - 1.0 / gnn - current_renormalization(s, k, sg, n, -0.5, 0.0, 0.5, 1.0);
  }
  return c;
}

DensityRates density_time_derivative(const TodaState& s, Kappa kappa, LaxSign sign) {
  return density_time_derivative(s, kappa, sign, green_table(s, kappa, sign));
}

DensityRates density_time_derivative(const TodaState& s, Kappa kappa, LaxSign sign, const GreenTable& g) {
  const LatticeWindow w = report_window(s, kappa);
  check_report_fits(g, w.grown(1));
  const double k = kappa.value();
  const double sg = sign_value(sign);
  const double sh = std::sinh(k);

  // +-dG(n,m)/dt = a_n G(n+1,m) - a_{n-1} G(n-1,m) + a_m G(n,m+1) - a_{m-1} G(n,m-1)
  auto g_dot = [&](int n, int m) {
    return sg * (s.a_at(n) * g(n + 1, m) - s.a_at(n - 1) * g(n - 1, m) + s.a_at(m) * g(n, m + 1) -
                 s.a_at(m - 1) * g(n, m - 1));
  };

  // The flow moves the state one site beyond its window in each direction.
  const LatticeWindow moving = s.window.grown(1);
  const TodaRates rates = toda_vector_field(s, moving);

  DensityRates out{SiteSeries<double>(w), SiteSeries<double>(w)};
  for (int n = w.first; n < w.end(); ++n) {
    double renorm_rho = 0.0;
    double renorm_gamma = 0.0;
    for (int m = moving.first; m < moving.end(); ++m) {
      const double log_a_dot = rates.da_dt[m] / s.a_at(m);
      const double b_dot = rates.db_dt[m];
      renorm_rho += log_a_dot * std::exp(-2.0 * k * std::abs(n - m)) +
                    sg * b_dot * std::exp(-2.0 * k * std::abs(n + 0.5 - m));
      renorm_gamma += (log_a_dot * std::exp(-2.0 * k * std::abs(m + 0.5 - n)) +
                       sg * b_dot * std::exp(-2.0 * k * std::abs(m - n))) /
                      (sh * sh);
    }
    const double gdot_nn = g_dot(n, n);
    out.dgamma_dt[n] = gdot_nn - renorm_gamma;
    out.drho_dt[n] = -0.5 * (gdot_nn / g(n, n) + g_dot(n + 1, n + 1) / g(n + 1, n + 1) -
                             2.0 * g_dot(n, n + 1) / g(n, n + 1)) -
                     renorm_rho;
  }
  return out;
}

Residuals check_identities(const TodaState& s, Kappa kappa, LaxSign, const GreenTable& g) {
  const LatticeWindow w = report_window(s, kappa);
  check_report_fits(g, w);
  Residuals r{{"quadratic_id", 0.0}, {"d1", 0.0}, {"u1", 0.0}, {"middle", 0.0}, {"symmetry", 0.0},
              {"involution", 0.0}};

  for (int n = w.first; n < w.last(); ++n) {
    const double a = s.a_at(n);
    const double off = g(n, n + 1);
    r["quadratic_id"] = std::max(r["quadratic_id"], std::abs(off * (1.0 + a * off) - a * g(n, n) * g(n + 1, n + 1)));
    const double jump = 1.0 / (a * off);
    for (int k = w.first; k < w.end(); ++k) {
      const double d1_lhs = g(n + 1, k) / g(n + 1, n);
      const double d1_rhs = g(n, k) / g(n, n) * (1.0 + (k > n ? jump : 0.0));
      r["d1"] = std::max(r["d1"], relative_gap(d1_lhs, d1_rhs));
      const double u1_lhs = g(n, k) / g(n, n + 1);
      const double u1_rhs = g(n + 1, k) / g(n + 1, n + 1) * (1.0 + (k <= n ? jump : 0.0));
      r["u1"] = std::max(r["u1"], relative_gap(u1_lhs, u1_rhs));
    }
    for (int k = w.first; k <= n; ++k) {
      const double ratio = g(k, n + 1) / g(n + 1, n);
      for (int l = n + 1; l < w.end(); ++l)
        r["middle"] = std::max(r["middle"], relative_gap(g(k, l), ratio * g(n, l)));
    }
  }

  const auto& values = g.kernel().values;
  r["symmetry"] = (values - values.transpose()).cwiseAbs().maxCoeff();

  const LatticeWindow pw = g.window();
  const auto lp = lax_matrix(s, kappa, LaxSign::plus, pw);
  const auto lm = lax_matrix(s, kappa, LaxSign::minus, pw);
  const double two_cosh = 2.0 * std::cosh(kappa.value());
  double inv = 0.0;
  for (int i = 0; i < pw.size; ++i) {
    for (int j = std::max(0, i - 1); j <= std::min(pw.size - 1, i + 1); ++j) {
      const double parity = ((pw.first + i) + (pw.first + j)) % 2 == 0 ? 1.0 : -1.0;
      const double lhs = lp(i, j) - (i == j ? two_cosh : 0.0);
      inv = std::max(inv, std::abs(lhs + parity * lm(i, j)));
    }
  }
  r["involution"] = inv;
  return r;
}

double min_green_entry(const GreenTable& g, LatticeWindow window) {
  double best = std::numeric_limits<double>::infinity();
  for (int n = window.first; n < window.end(); ++n)
    for (int m = window.first; m < window.end(); ++m) best = std::min(best, g(n, m));
  return best;
}

MacroscopicLedger macroscopic_check(const TodaState& s, Kappa kappa, LaxSign sign) {
  const double k = kappa.value();
  const double sg = sign_value(sign);
  const double sh = std::sinh(k);
  const LatticeWindow pw = padded_window(s, kappa);

  const auto l = lax_matrix(s, kappa, sign, pw);
  const auto l0 = lax_matrix(TodaState::vacuum(s.window), kappa, sign, pw);
  const auto ld = linalg::log_det_ratio(l, l0);

  const GreenTable g = green_table(s, kappa, sign);
  const auto g0 = linalg::invert_window(l0);
  double trace = 0.0;
  for (int i = 0; i < pw.size; ++i) trace += g.kernel().values(i, i) - g0.values(i, i);

  const Casimirs c = casimirs(s);
  MacroscopicLedger out;
  out.log_det = ld.value;
  out.log_det_pivots = ld.pivot_value;
  out.trace_diff = trace;
  out.M = c.M;
  out.P = c.P;
  for (double v : rho_density(s, kappa, sign, g).values) out.lhs_rho += v;
  for (double v : gamma_density(s, kappa, sign, g).values) out.lhs_gamma += v;
  out.rhs_rho = -ld.value + sg * c.P / (2.0 * sh) + std::exp(-k) * c.M / (2.0 * sh);
  out.rhs_gamma = trace + sg * std::cosh(k) * c.P / (2.0 * sh * sh * sh) + c.M / (2.0 * sh * sh * sh);
  return out;
}

ConvexityProbe convexity_probe(const TodaState& s, Kappa kappa, LaxSign sign, const Direction& dir, int site,
                               double h) {
  if (!(h >= 1e-4 && h <= 1e-2)) throw std::invalid_argument("probe step must lie in [1e-4, 1e-2]");
  if (dir.c.size() != static_cast<std::size_t>(s.window.size) ||
      dir.d.size() != static_cast<std::size_t>(s.window.size))
    throw std::invalid_argument("direction does not match the state window");
  const double k = kappa.value();
  const double sg = sign_value(sign);

  auto shifted = [&](double t) {
    TodaState p = s;
    for (std::size_t i = 0; i < p.a.size(); ++i) {
      p.a[i] *= std::exp(t * dir.c[i]);
      p.b[i] += t * dir.d[i];
    }
    return p;
  };
  struct Values {
    double rho;
    double gamma;
  };
  auto evaluate = [&](const TodaState& p) {
    const GreenTable g = green_table(p, kappa, sign);
    return Values{rho_at(p, k, sg, g, site), gamma_at(p, k, sg, g, site)};
  };

  const Values centre = evaluate(s);
  const Values up = evaluate(shifted(h));
  const Values down = evaluate(shifted(-h));

  ConvexityProbe out;
  out.rho_second_diff = (up.rho + down.rho - 2.0 * centre.rho) / (h * h);
  out.gamma_second_diff = (up.gamma + down.gamma - 2.0 * centre.gamma) / (h * h);
  out.rho_first_diff = (up.rho - down.rho) / (2.0 * h);
  out.gamma_first_diff = (up.gamma - down.gamma) / (2.0 * h);

  // rho_n does not depend on a_n at all; probe it in a_n alone.
  const TodaState wide = s.window.contains(site) ? s : s.embedded(s.window.grown(
                                                           std::max(0, s.window.first - site),
                                                           std::max(0, site - s.window.last())));
  auto bump = [&](double t) {
    TodaState p = wide;
    p.a[p.window.offset(site)] += t;
    return p;
  };
  const TodaState a_up = bump(h);
  const TodaState a_down = bump(-h);
  out.a_gradient = (rho_at(a_up, k, sg, green_table(a_up, kappa, sign), site) -
                    rho_at(a_down, k, sg, green_table(a_down, kappa, sign), site)) /
                   (2.0 * h);
  return out;
}

TodaDensityReport density_report(const TodaState& s, Kappa kappa, LaxSign sign) {
  const GreenTable g = green_table(s, kappa, sign);
  TodaDensityReport r;
  r.gamma = gamma_density(s, kappa, sign, g);
  r.rho = rho_density(s, kappa, sign, g);
  TodaCurrents c = currents(s, kappa, sign, g);
  r.gamma_current = std::move(c.gamma_current);
  r.rho_current = std::move(c.rho_current);
  r.residuals = check_identities(s, kappa, sign, g);

  const DensityRates rates = density_time_derivative(s, kappa, sign, g);
  const double sg = sign_value(sign);
  const LatticeWindow w = r.rho.window;
  double cons_rho = 0.0;
  double cons_gamma = 0.0;
  for (int n = w.first; n < w.last(); ++n) {
    cons_rho = std::max(cons_rho, std::abs(sg * rates.drho_dt[n] - (r.rho_current[n + 1] - r.rho_current[n])));
    cons_gamma =
        std::max(cons_gamma, std::abs(sg * rates.dgamma_dt[n] - (r.gamma_current[n + 1] - r.gamma_current[n])));
  }
  r.residuals["local_conservation_rho"] = cons_rho;
  r.residuals["local_conservation_gamma"] = cons_gamma;

  const RhoForms forms = rho_forms(s, kappa, sign, g);
  double form_gap = 0.0;
  for (int n = w.first; n < w.end(); ++n) {
    form_gap = std::max({form_gap, std::abs(forms.original[n] - forms.arcsinh[n]),
                         std::abs(forms.original[n] - forms.log_ratio[n])});
  }
  r.residuals["rho_forms"] = form_gap;

  const MacroscopicLedger ledger = macroscopic_check(s, kappa, sign);
  r.residuals["ledger_rho"] = std::abs(ledger.lhs_rho - ledger.rhs_rho);
  r.residuals["ledger_gamma"] = std::abs(ledger.lhs_gamma - ledger.rhs_gamma);
  r.residuals["log_det_routes"] = std::abs(ledger.log_det - ledger.log_det_pivots);
  r.macroscopic = {ledger.lhs_rho, ledger.lhs_gamma, ledger.log_det, ledger.trace_diff, ledger.M, ledger.P};
  return r;
}

}  // namespace lattice_laws::toda
