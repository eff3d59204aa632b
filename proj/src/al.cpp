#include "lattice_laws/al.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "lattice_laws/errors.hpp"

namespace lattice_laws::al {

namespace {

constexpr Complex kI{0.0, 1.0};

double block_max_abs(const Block& b) { return b.cwiseAbs().maxCoeff(); }

void check_report_fits(const GreenTable& g, LatticeWindow report) {
  // Densities and currents reach one site beyond the report window on each side, and
  // second-column entries need one more on the right.
  if (!g.window().covers(report.grown(1, 2)))
    throw std::invalid_argument("Green table window does not cover the report window");
}

Block v_matrix(const ALState& s, Complex z, int n) {
  const Complex a = s.alpha_at(n);
  const Complex a_prev = s.alpha_at(n - 1);
  const Complex b = s.beta_at(n);
  const Complex b_prev = s.beta_at(n - 1);
  Block v;
  v << z * z - 1.0 - a * b_prev, z * a - a_prev / z, z * b_prev - b / z, 1.0 + a_prev * b - 1.0 / (z * z);
  return kI * v;
}

Block u_matrix(const ALState& s, Complex z, int n) {
  Block u;
  u << z, s.alpha_at(n), s.beta_at(n), 1.0 / z;
  return u;
}

linalg::BandedMatrix<Complex> section_impl(const ALState& s, Complex z, LatticeWindow window) {
  linalg::BandedMatrix<Complex> m(window, 2, 3, 2);
  for (int i = 0; i < window.size; ++i) {
    const int n = window.first + i;
    m.ref(2 * i, 2 * i) = z;
    m.ref(2 * i, 2 * i + 1) = s.alpha_at(n);
    if (i + 1 < window.size) m.ref(2 * i, 2 * i + 2) = -1.0;
    if (i >= 1) {
      m.ref(2 * i + 1, 2 * i - 2) = s.beta_at(n - 1);
      m.ref(2 * i + 1, 2 * i - 1) = 1.0 / z;
    }
    m.ref(2 * i + 1, 2 * i + 1) = -1.0;
  }
  return m;
}

// Y = Gamma Lambda compressed to the state's window:
// Y(n, n') = beta_n sum_{k >= n, k > n'} alpha_k z^{n + n' - 2k}.
linalg::DenseMatrix<Complex> gamma_lambda(const ALState& s, Complex z) {
  const LatticeWindow w = s.window;
  linalg::DenseMatrix<Complex> y = linalg::DenseMatrix<Complex>::Zero(w.size, w.size);
  const Complex inv_z2 = 1.0 / (z * z);
  for (int n = w.first; n < w.end(); ++n) {
    const Complex b = s.beta_at(n);
    if (b == Complex{}) continue;
    for (int np = w.first; np < w.end(); ++np) {
      Complex acc{};
      const int k0 = std::max(n, np + 1);
      // z^{n + n' - 2k} = z^{n + n' - 2 k0} (z^{-2})^{k - k0}
      Complex weight = std::pow(z, n + np - 2 * k0);
      for (int k = k0; k < w.end(); ++k) {
        acc += s.alpha_at(k) * weight;
        weight *= inv_z2;
      }
      y(w.offset(n), w.offset(np)) = b * acc;
    }
  }
  return y;
}

Determinant determinant_at(const ALState& s, Complex z) {
  Determinant d;
  double norm2 = 0.0;
  for (const Complex& a : s.alpha) norm2 += std::norm(a);
  const double z2 = std::norm(z);
  d.hs_lambda = std::sqrt(z2 / (z2 - 1.0) * norm2);
  d.hs_gamma = std::sqrt(norm2 / (z2 - 1.0));

  const auto y = gamma_lambda(s, z);
  if (!(y.norm() < 1.0)) {
    std::ostringstream msg;
    msg << "Hilbert-Schmidt norm of Gamma Lambda is " << y.norm() << " >= 1";
    throw SeriesDivergence(msg.str());
  }
  d.log_det = linalg::trace_log_series<Complex>(y, &d.terms);

  // The section is exact on any window covering the support.
  const LatticeWindow pw = s.window.grown(2);
  const ALState vac = ALState::vacuum(s.window, s.sign);
  const auto ratio = linalg::log_det_ratio(section_impl(s, z, pw), section_impl(vac, z, pw));
  d.log_det_section = ratio.value;
  d.log_det_pivots = ratio.pivot_value;
  return d;
}

Complex weighted_trace_impl(const GreenTable& g, Complex z, double sign3) {
  Complex acc{};
  const LatticeWindow w = g.window();
  for (int n = w.first + 1; n <= w.last(); ++n) {
    const Block k = g(n, n - 1) - free_green(n, n - 1, z);
    acc += k(0, 0) + sign3 * k(1, 1);
  }
  return acc;
}

}  // namespace

SpectralZ::SpectralZ(Complex z, bool allow_unsupported) : z_(z) {
  const double r = std::abs(z);
  if (!std::isfinite(r) || !(r > 1.0)) {
    std::ostringstream msg;
    msg << "spectral parameter needs |z| > 1, got " << z;
    throw DomainError(msg.str());
  }
  if (r < 2.0) {
    std::ostringstream msg;
    msg << "|z| = " << r << " lies in the unsupported regime 1 < |z| < 2";
    if (!allow_unsupported) throw DomainError(msg.str() + " (pass allow_unsupported to proceed)");
    warn(msg.str() + "; identities are not guaranteed there");
  }
}

SpectralZ SpectralZ::scaled(double factor) const {
  SpectralZ out = *this;
  out.z_ *= factor;
  return out;
}

ALState ALState::vacuum(LatticeWindow window, ALSign sign) {
  require_valid(window);
  return {window, std::vector<Complex>(static_cast<std::size_t>(window.size)), sign};
}

void ALState::validate() const {
  require_valid(window);
  if (alpha.size() != static_cast<std::size_t>(window.size))
    throw std::invalid_argument("AL state sequence does not match the window");
  for (const Complex& a : alpha) {
    if (!std::isfinite(a.real()) || !std::isfinite(a.imag())) throw std::invalid_argument("AL state is not finite");
    if (sign == ALSign::defocusing && !(std::abs(a) < 1.0))
      throw DomainError("defocusing AL state requires |alpha_n| < 1");
  }
}

ALState ALState::embedded(LatticeWindow larger) const {
  if (!larger.covers(window)) throw std::invalid_argument("embedding window must cover the state");
  ALState out = vacuum(larger, sign);
  for (int n = window.first; n < window.end(); ++n) out.alpha[larger.offset(n)] = alpha_at(n);
  return out;
}

SiteSeries<Complex> al_vector_field(const ALState& s) { return al_vector_field(s, s.window); }

SiteSeries<Complex> al_vector_field(const ALState& s, LatticeWindow out) {
  SiteSeries<Complex> r(out);
  for (int n = out.first; n < out.end(); ++n) {
    const Complex a = s.alpha_at(n);
    r[n] = -kI * (2.0 * a - (1.0 - a * s.beta_at(n)) * (s.alpha_at(n + 1) + s.alpha_at(n - 1)));
  }
  return r;
}

MassEnergy mass_and_energy(const ALState& s) {
  MassEnergy me;
  for (int n = s.window.first - 1; n < s.window.end(); ++n) {
    const double ab = (s.alpha_at(n) * s.beta_at(n)).real();
    if (!(1.0 - ab > 0.0)) throw DomainError("1 - alpha_n beta_n must stay positive");
    const double log_term = std::log1p(-ab);
    me.M -= log_term;
    const Complex hop = s.alpha_at(n) * s.beta_at(n + 1) + s.alpha_at(n + 1) * s.beta_at(n);
    me.H += -hop.real() - 2.0 * log_term;
  }
  return me;
}

bool in_ball(const ALState& s, const SpectralZ& z, double delta) {
  if (!(delta > 0.0)) throw std::invalid_argument("ball radius must be positive");
  const double m = std::abs(mass_and_energy(s).M);
  const double r = z.modulus();
  return m * std::exp(m) < delta * delta * (r * r - 1.0) / r;
}

void require_ball(const ALState& s, const SpectralZ& z, double delta) {
  if (in_ball(s, z, delta)) return;
  const double m = std::abs(mass_and_energy(s).M);
  const double r = z.modulus();
  std::ostringstream msg;
  msg << "AL state with |M| e^|M| = " << m * std::exp(m) << " lies outside the ball bound "
      << delta * delta * (r * r - 1.0) / r << " (|z| = " << r << ")";
  if (in_ball(s, z, 2.0 * delta)) {
    warn(msg.str());
    return;
  }
  throw OutOfBall(msg.str());
}

TransferPair transfer_pair(const ALState& s, const SpectralZ& z, int n) {
  return {u_matrix(s, z.value(), n), v_matrix(s, z.value(), n)};
}

int pad_width(const SpectralZ& z) { return static_cast<int>(std::ceil(40.0 / std::log(z.modulus()))); }

LatticeWindow padded_window(const ALState& s, const SpectralZ& z) { return s.window.grown(pad_width(z)); }

LatticeWindow report_window(const ALState& s, const SpectralZ& z) {
  return s.window.grown((pad_width(z) + 1) / 2);
}

linalg::BandedMatrix<Complex> lax_section(const ALState& s, const SpectralZ& z) {
  return lax_section(s, z, padded_window(s, z));
}

linalg::BandedMatrix<Complex> lax_section(const ALState& s, const SpectralZ& z, LatticeWindow window) {
  if (!window.covers(s.window)) throw std::invalid_argument("section window must cover the state");
  return section_impl(s, z.value(), window);
}

Block free_green(int n, int m, Complex z) {
  if (!(std::abs(z) > 1.0)) throw DomainError("free AL Green's function needs |z| > 1");
  Block g = Block::Zero();
  if (n <= m)
    g(0, 0) = std::pow(z, n - m - 1);
  else
    g(1, 1) = -std::pow(z, m - n + 1);
  return g;
}

Complex GreenTable::entry(int n, int m, int r, int c) const {
  const LatticeWindow& w = raw_.window;
  if (!w.contains(n) || !w.contains(m) || (c == 1 && m >= w.last())) {
    std::ostringstream msg;
    msg << "G(" << n << ", " << m << ") column " << c + 1 << " is outside the table";
    throw std::out_of_range(msg.str());
  }
  const auto row = static_cast<Eigen::Index>(2 * (n - w.first) + r);
  const auto col = static_cast<Eigen::Index>(c == 0 ? 2 * (m - w.first) : 2 * (m + 1 - w.first) + 1);
  return raw_.values(row, col);
}

Block GreenTable::operator()(int n, int m) const {
  Block b;
  b << entry(n, m, 0, 0), entry(n, m, 0, 1), entry(n, m, 1, 0), entry(n, m, 1, 1);
  return b;
}

GreenTable green_table(const ALState& s, const SpectralZ& z, double delta) {
  s.validate();
  require_ball(s, z, delta);
  return GreenTable(linalg::invert_window(lax_section(s, z)));
}

Residuals check_identities(const ALState& s, const SpectralZ& z, const GreenTable& g) {
  const LatticeWindow w = report_window(s, z);
  check_report_fits(g, w);
  const Complex zv = z.value();
  Residuals r{{"detID", 0.0},  {"trID", 0.0},      {"nD", 0.0},         {"nU", 0.0},
              {"nD2", 0.0},    {"nU2", 0.0},       {"wrap_left", 0.0},  {"wrap_right", 0.0},
              {"vacuous_trace", 0.0}};
  auto bump = [&](const char* name, double v) { r[name] = std::max(r[name], v); };

  for (int n = w.first; n < w.end(); ++n)
    for (int m = w.first; m < w.end(); ++m) bump("detID", std::abs(g(n, m).determinant()));

  for (int n = w.first; n < w.end(); ++n) {
    const Block g_nn = g(n, n);
    const Block g_up = g(n + 1, n);
    bump("trID", std::abs(g_up.trace() + 1.0));
    const Block one_plus = Block::Identity() + g_up;
    bump("wrap_left", block_max_abs(u_matrix(s, zv, n) * g_nn - one_plus));
    bump("wrap_right", block_max_abs(g(n + 1, n + 1) * u_matrix(s, zv, n + 1) - one_plus));
  }

  for (int n = w.first; n < w.last(); ++n) {
    const Complex a_n = s.alpha_at(n);
    const Complex ab_n = 1.0 - a_n * s.beta_at(n);
    const Complex b_n1 = s.beta_at(n + 1);
    const Complex ab_n1 = 1.0 - s.alpha_at(n + 1) * b_n1;
    const Complex g11_nn = g.entry(n, n, 0, 0);
    const Complex g11_n1n1 = g.entry(n + 1, n + 1, 0, 0);
    const Complex d = 1.0 + g.entry(n + 1, n, 0, 0);
    for (int k = w.first; k < w.end(); ++k) {
      const double below = k < n ? 1.0 : 0.0;
      const double above = k > n + 1 ? 1.0 : 0.0;
      const double kn = k == n ? 1.0 : 0.0;
      const double kn1 = k == n + 1 ? 1.0 : 0.0;

      const Complex nd = g.entry(n + 1, k, 0, 1) / d -
                         (g.entry(n, k, 0, 1) / g11_nn + below * a_n * g.entry(n + 1, k, 1, 1) / (ab_n * d * g11_nn));
      bump("nD", std::abs(nd));

      const Complex nu =
          g.entry(k, n, 1, 0) / d -
          (g.entry(k, n + 1, 1, 0) / g11_n1n1 + above * b_n1 * g.entry(k, n, 1, 1) / (ab_n1 * d * g11_n1n1));
      bump("nU", std::abs(nu));

      const Complex nd2 = (kn + g.entry(n + 1, k, 0, 0)) / d -
                          (g.entry(n, k, 0, 0) / g11_nn + below * a_n * g.entry(n + 1, k, 1, 0) / (ab_n * g11_nn * d));
      bump("nD2", std::abs(nd2));

      const Complex nu2 =
          (kn1 + g.entry(k, n, 0, 0)) / d -
          (g.entry(k, n + 1, 0, 0) / g11_n1n1 + above * b_n1 * g.entry(k, n, 0, 1) / (ab_n1 * g11_n1n1 * d));
      bump("nU2", std::abs(nu2));
    }
  }

  r["vacuous_trace"] = std::abs(vacuous_trace(g, zv));
  return r;
}

Densities densities(const ALState& s, const SpectralZ& z, const GreenTable& g) {
  const LatticeWindow w = report_window(s, z);
  check_report_fits(g, w);
  const Complex zv = z.value();
  const double floor_g11 = 0.1 / z.modulus();
  Densities d{SiteSeries<Complex>(w), SiteSeries<Complex>(w), SiteSeries<Complex>(w), SiteSeries<Complex>(w),
              SiteSeries<Complex>(w)};
  for (int n = w.first; n < w.end(); ++n) {
    const Block g_nn = g(n, n);
    const Block g_n1n1 = g(n + 1, n + 1);
    const Block g_up = g(n + 1, n);
    const Complex one_plus = 1.0 + g_up(0, 0);
    if (std::abs(g_nn(0, 0)) < floor_g11 || std::abs(g_n1n1(0, 0)) < floor_g11 || std::abs(one_plus) < 0.5) {
      std::ostringstream msg;
      msg << "AL Green's function degenerates at site " << n << ": G11(n,n) = " << g_nn(0, 0)
          << ", 1 + G11(n+1,n) = " << one_plus;
      throw DegenerateGreen(msg.str());
    }
    const Complex a_n = s.alpha_at(n);
    const Complex b_n1 = s.beta_at(n + 1);

    d.gamma[n] = g_up(0, 0) - g_up(1, 1) - 1.0;
    d.gamma_alt[n] = 2.0 * g_up(0, 0);
    d.rho[n] = std::log(one_plus) - 0.5 * std::log(zv * g_nn(0, 0)) - 0.5 * std::log(zv * g_n1n1(0, 0));
    d.rho_definition[n] = 0.5 * std::log(1.0 + a_n * g_nn(1, 0) / (zv * g_nn(0, 0))) +
                          0.5 * std::log(1.0 + b_n1 * g_n1n1(0, 1) / (zv * g_n1n1(0, 0)));
    const Complex two_plus = 2.0 + d.gamma[n];
    d.rho_alt1[n] = -0.5 * std::log(1.0 - 2.0 * a_n * g_nn(1, 0) / two_plus) -
                    0.5 * std::log(1.0 - 2.0 * b_n1 * g_n1n1(0, 1) / two_plus);
  }
  return d;
}

Currents currents(const ALState& s, const SpectralZ& z, const GreenTable& g) {
  const LatticeWindow w = report_window(s, z);
  check_report_fits(g, w);
  const Complex zv = z.value();
  Currents c{SiteSeries<Complex>(w), SiteSeries<Complex>(w)};
  for (int n = w.first; n < w.end(); ++n) {
    const Block g_nn = g(n, n);
    const Complex a = s.alpha_at(n);
    const Complex b = s.beta_at(n);
    c.j[n] = 0.5 * kI * (zv * a - s.alpha_at(n - 1) / zv) * g_nn(1, 0) / g_nn(0, 0) +
             0.5 * kI * (zv * b - s.beta_at(n + 1) / zv) * g_nn(0, 1) / g_nn(0, 0) -
             0.5 * kI * a * s.beta_at(n - 1) - 0.5 * kI * s.alpha_at(n + 1) * b;
    const Block g_far = g(n + 1, n - 1);
    c.gamma_j[n] = 2.0 * kI * zv * g_far(0, 0) + 2.0 * kI / zv * (g_far(1, 1) + 1.0 / zv);
  }
  return c;
}

DensityRates density_time_derivative(const ALState& s, const SpectralZ& z) {
  return density_time_derivative(s, z, green_table(s, z));
}

DensityRates density_time_derivative(const ALState& s, const SpectralZ& z, const GreenTable& g) {
  const LatticeWindow w = report_window(s, z);
  check_report_fits(g, w);
  const Complex zv = z.value();
  auto g_dot = [&](int n, int m) -> Block {
    const Block gnm = g(n, m);
    return v_matrix(s, zv, n) * gnm - gnm * v_matrix(s, zv, m + 1);
  };
  DensityRates r{SiteSeries<Complex>(w), SiteSeries<Complex>(w)};
  for (int n = w.first; n < w.end(); ++n) {
    const Complex up_dot = g_dot(n + 1, n)(0, 0);
    r.dgamma_dt[n] = 2.0 * up_dot;
    r.drho_dt[n] = up_dot / (1.0 + g.entry(n + 1, n, 0, 0)) - 0.5 * g_dot(n, n)(0, 0) / g.entry(n, n, 0, 0) -
                   0.5 * g_dot(n + 1, n + 1)(0, 0) / g.entry(n + 1, n + 1, 0, 0);
  }
  return r;
}

Determinant perturbation_determinant(const ALState& s, const SpectralZ& z) {
  s.validate();
  return determinant_at(s, z.value());
}

Complex weighted_trace(const GreenTable& g, Complex z) { return weighted_trace_impl(g, z, -1.0); }

Complex vacuous_trace(const GreenTable& g, Complex z) { return weighted_trace_impl(g, z, 1.0); }

Ledger macroscopic_check(const ALState& s, const SpectralZ& z) {
  const GreenTable g = green_table(s, z);
  const Densities d = densities(s, z, g);
  const Determinant det = perturbation_determinant(s, z);
  Ledger l;
  for (const Complex& v : d.rho.values) l.sum_rho += v;
  for (const Complex& v : d.gamma.values) l.sum_gamma += v;
  l.log_det = det.log_det;
  l.log_det_section = det.log_det_section;
  l.log_det_pivots = det.log_det_pivots;
  l.weighted_trace = weighted_trace(g, z.value());
  return l;
}

ZDerivative z_derivative_check(const ALState& s, const SpectralZ& z, double h) {
  if (!(h > 0.0 && h < 1e-2)) throw std::invalid_argument("z-derivative step must lie in (0, 1e-2)");
  s.validate();
  require_ball(s, z);
  const Complex zv = z.value();
  ZDerivative out;
  // z d/dz f  ~  [f(z(1+h)) - f(z(1-h))] / (2h)
  out.lhs = (determinant_at(s, zv * (1.0 + h)).log_det - determinant_at(s, zv * (1.0 - h)).log_det) / (2.0 * h);
  out.rhs = weighted_trace(green_table(s, z), zv);
  return out;
}

Coercivity coercivity_check(LatticeWindow window, const std::vector<Complex>& direction, double z, ALSign sign,
                            double eps) {
  if (!(z >= 2.0)) throw DomainError("coercivity checks need real z >= 2");
  if (!(eps >= 1e-4 && eps <= 1e-2)) throw std::invalid_argument("eps must lie in [1e-4, 1e-2]");
  if (direction.size() != static_cast<std::size_t>(window.size))
    throw std::invalid_argument("direction does not match the window");
  const SpectralZ zs(z);

  struct Sums {
    double im_j = 0;
    double re_rho_tilde = 0;
  };
  auto evaluate = [&](double t) {
    ALState st = ALState::vacuum(window, sign);
    for (std::size_t i = 0; i < direction.size(); ++i) st.alpha[i] = t * direction[i];
    const GreenTable g = green_table(st, zs);
    const Densities d = densities(st, zs, g);
    const Currents c = currents(st, zs, g);
    Sums out;
    for (const Complex& v : c.j.values) out.im_j += v.imag();
    for (int n = d.rho.window.first; n < d.rho.window.end(); ++n)
      out.re_rho_tilde += d.rho[n].real() - 0.5 * std::log1p(-(st.alpha_at(n) * st.beta_at(n)).real());
    return out;
  };
  const Sums plus = evaluate(eps);
  const Sums minus = evaluate(-eps);

  Coercivity c;
  c.sum_im_j2 = (plus.im_j + minus.im_j) / (2.0 * eps * eps);
  c.sum_re_rho2 = (plus.re_rho_tilde + minus.re_rho_tilde) / (2.0 * eps * eps);

  constexpr int kNodes = 4096;
  const double sg = sign_value(sign);
  const double z2 = z * z;
  double im_acc = 0.0;
  double re_acc = 0.0;
  for (int k = 0; k < kNodes; ++k) {
    const double theta = 2.0 * std::numbers::pi * k / kNodes;
    Complex hat{};
    for (int i = 0; i < window.size; ++i) hat += direction[i] * std::polar(1.0, (window.first + i) * theta);
    const double power = std::norm(hat);
    const double denom = std::norm(Complex(z2, 0.0) - std::polar(1.0, theta));
    const double sn = std::sin(theta);
    im_acc += 2.0 * z2 * sn * sn / denom * power;
    re_acc += (z2 * z2 - 1.0) / (2.0 * denom) * power;
  }
  c.dft_im = -sg * im_acc / kNodes;
  c.dft_re = sg * re_acc / kNodes;
  return c;
}

ALDensityReport density_report(const ALState& s, const SpectralZ& z) {
  const GreenTable g = green_table(s, z);
  const Densities d = densities(s, z, g);
  const Currents c = currents(s, z, g);
  const DensityRates rates = density_time_derivative(s, z, g);

  ALDensityReport r;
  r.rho = d.rho;
  r.gamma = d.gamma;
  r.j = c.j;
  r.gamma_j = c.gamma_j;
  r.residuals = check_identities(s, z, g);

  const LatticeWindow w = d.rho.window;
  double cons_rho = 0.0;
  double cons_gamma = 0.0;
  double rho_forms = 0.0;
  double gamma_forms = 0.0;
  for (int n = w.first; n < w.end(); ++n) {
    if (n < w.last()) {
      cons_rho = std::max(cons_rho, std::abs(rates.drho_dt[n] - (c.j[n + 1] - c.j[n])));
      cons_gamma = std::max(cons_gamma, std::abs(rates.dgamma_dt[n] - (c.gamma_j[n + 1] - c.gamma_j[n])));
    }
    rho_forms = std::max({rho_forms, std::abs(d.rho[n] - d.rho_definition[n]), std::abs(d.rho[n] - d.rho_alt1[n])});
    gamma_forms = std::max(gamma_forms, std::abs(d.gamma[n] - d.gamma_alt[n]));
  }
  r.residuals["local_conservation_rho"] = cons_rho;
  r.residuals["local_conservation_gamma"] = cons_gamma;
  r.residuals["rho_forms"] = rho_forms;
  r.residuals["gamma_forms"] = gamma_forms;

  const Determinant det = perturbation_determinant(s, z);
  Complex sum_rho{};
  Complex sum_gamma{};
  for (const Complex& v : d.rho.values) sum_rho += v;
  for (const Complex& v : d.gamma.values) sum_gamma += v;
  const Complex wt = weighted_trace(g, z.value());
  r.residuals["ledger_det"] = std::abs(sum_rho - det.log_det);
  r.residuals["ledger_tr"] = std::abs(sum_gamma - wt);
  r.residuals["log_det_routes"] =
      std::max(std::abs(det.log_det - det.log_det_section), std::abs(det.log_det - det.log_det_pivots));
  r.macroscopic = {sum_rho, det.log_det, sum_gamma, wt};
  return r;
}

}  // namespace lattice_laws::al
