#pragma once

// Toda lattice in Flaschka variables: Lax operators L+/L-, their Green's
// functions, and the renormalized densities gamma_n, rho_n with currents.

#include <map>
#include <string>
#include <vector>

#include "lattice_laws/linalg.hpp"
#include "lattice_laws/window.hpp"

namespace lattice_laws::toda {

inline constexpr double kDefaultDelta = 0.1;

/// Spectral parameter kappa >= 1; cosh(kappa) sits on the Lax diagonal.
class Kappa {
 public:
  explicit Kappa(double value);
  double value() const { return value_; }
  operator double() const { return value_; }

 private:
  double value_;
};

enum class LaxSign : int { plus = 1, minus = -1 };

inline double sign_value(LaxSign s) { return static_cast<double>(static_cast<int>(s)); }

/// Flaschka variables (a_n, b_n) on a window; a = 1/2, b = 0 outside it.
struct TodaState {
  LatticeWindow window;
  std::vector<double> a;
  std::vector<double> b;

  static TodaState vacuum(LatticeWindow window);

  double a_at(int n) const { return window.contains(n) ? a[window.offset(n)] : 0.5; }
  double b_at(int n) const { return window.contains(n) ? b[window.offset(n)] : 0.0; }

  /// Throws std::invalid_argument unless sizes match and every a_n is finite and positive.
  void validate() const;

  /// Same state on a larger window (vacuum in the new sites).
  TodaState embedded(LatticeWindow larger) const;
};

/// Positions and momenta; both vanish outside the window.
struct TodaPhase {
  LatticeWindow window;
  std::vector<double> q;
  std::vector<double> p;
};

/// a_n = exp((q_n - q_{n+1})/2)/2, b_n = -p_n/2. The result covers one extra site on
/// the left, where a_{first-1} feels q_first.
TodaState flaschka_forward(const TodaPhase& phase);

struct TodaRates {
  SiteSeries<double> da_dt;
  SiteSeries<double> db_dt;
};

/// da_n/dt = a_n (b_{n+1} - b_n), db_n/dt = 2 (a_n^2 - a_{n-1}^2), evaluated on `out`
/// (default: the state's window).
TodaRates toda_vector_field(const TodaState& s);
TodaRates toda_vector_field(const TodaState& s, LatticeWindow out);

/// H = sum 2 b_n^2 + V(-2 log 2a_n) with V(x) = e^{-x} + x - 1.
double energy(const TodaState& s);

struct Casimirs {
  double M = 0;  // -sum 2 log(2 a_n)
  double P = 0;  // -sum 2 b_n
};
Casimirs casimirs(const TodaState& s);

/// H < delta^2 kappa.
bool in_ball(const TodaState& s, Kappa kappa, double delta = kDefaultDelta);

/// ceil(40 / kappa): boundary effects of the hard cutoff are ~exp(-80).
int pad_width(Kappa kappa);
/// Support grown by the pad width: the window the Lax matrix lives on.
LatticeWindow padded_window(const TodaState& s, Kappa kappa);
/// Support grown by half the pad width: where densities and currents are reported.
LatticeWindow report_window(const TodaState& s, Kappa kappa);

/// (L f)_n = cosh(kappa) f_n - (a_n f_{n+1} + a_{n-1} f_{n-1} +- b_n f_n), truncated to a window.
linalg::BandedMatrix<double> lax_matrix(const TodaState& s, Kappa kappa, LaxSign sign);
linalg::BandedMatrix<double> lax_matrix(const TodaState& s, Kappa kappa, LaxSign sign, LatticeWindow window);

/// Free Green's function exp(-kappa |n - m|) / sinh(kappa); any kappa > 0.
double free_green(int n, int m, double kappa);

/// G(n, m) = <delta_n, L^{-1} delta_m> on the padded window.
class GreenTable {
 public:
  explicit GreenTable(linalg::DenseKernel<double> kernel) : kernel_(std::move(kernel)) {}

  const LatticeWindow& window() const { return kernel_.window; }
  double operator()(int n, int m) const {
    return kernel_.values(static_cast<Eigen::Index>(n - kernel_.window.first),
                          static_cast<Eigen::Index>(m - kernel_.window.first));
  }
  const linalg::DenseKernel<double>& kernel() const { return kernel_; }

 private:
  linalg::DenseKernel<double> kernel_;
};

/// Throws OutOfBall when the state is outside the ball of radius 2*delta and warns
/// when it lies between delta and 2*delta.
void require_ball(const TodaState& s, Kappa kappa, double delta = kDefaultDelta);

GreenTable green_table(const TodaState& s, Kappa kappa, LaxSign sign, double delta = kDefaultDelta);

/// gamma_n = G(n,n) - 1/sinh k - sum_m [log(2a_m) e^{-2k|m+1/2-n|} +- b_m e^{-2k|m-n|}] / sinh^2 k
SiteSeries<double> gamma_density(const TodaState& s, Kappa kappa, LaxSign sign, const GreenTable& g);

/// rho_n = k - 1/2 log[1 + 1/(a_n G(n,n+1))] - sum_m [log(2a_m) e^{-2k|n-m|} +- b_m e^{-2k|n+1/2-m|}]
SiteSeries<double> rho_density(const TodaState& s, Kappa kappa, LaxSign sign, const GreenTable& g);

/// The three algebraically equivalent evaluations of rho_n.
struct RhoForms {
  SiteSeries<double> original;
  SiteSeries<double> arcsinh;    // via 1/sqrt(4 a_n^2 G(n,n) G(n+1,n+1))
  SiteSeries<double> log_ratio;  // via G(n,n) G(n+1,n+1) / G(n,n+1)^2
};
RhoForms rho_forms(const TodaState& s, Kappa kappa, LaxSign sign, const GreenTable& g);

struct TodaCurrents {
  SiteSeries<double> gamma_current;
  SiteSeries<double> rho_current;
};
TodaCurrents currents(const TodaState& s, Kappa kappa, LaxSign sign, const GreenTable& g);

struct DensityRates {
  SiteSeries<double> drho_dt;
  SiteSeries<double> dgamma_dt;
};
/// d/dt of rho_n and gamma_n along the Toda flow, assembled analytically from the
/// Lax evolution of G; no time stepping.
DensityRates density_time_derivative(const TodaState& s, Kappa kappa, LaxSign sign);
DensityRates density_time_derivative(const TodaState& s, Kappa kappa, LaxSign sign, const GreenTable& g);

using Residuals = std::map<std::string, double>;

/// Residuals of the Green's-function identities on the report window:
/// quadratic_id, d1, u1, middle (relative), symmetry, involution (absolute).
Residuals check_identities(const TodaState& s, Kappa kappa, LaxSign sign, const GreenTable& g);

/// Smallest G(n, m) over n, m in `window`.
double min_green_entry(const GreenTable& g, LatticeWindow window);

struct MacroscopicLedger {
  double lhs_rho = 0;
  double rhs_rho = 0;
  double lhs_gamma = 0;
  double rhs_gamma = 0;
  double log_det = 0;         // log det(L/L0), series route
  double log_det_pivots = 0;  // same, LU route
  double trace_diff = 0;      // tr{L^{-1} - L0^{-1}}
  double M = 0;
  double P = 0;
};
MacroscopicLedger macroscopic_check(const TodaState& s, Kappa kappa, LaxSign sign);

/// Direction (c, d) on the state's window: a -> a e^{s c}, b -> b + s d.
struct Direction {
  std::vector<double> c;
  std::vector<double> d;
};

struct ConvexityProbe {
  double rho_second_diff = 0;
  double gamma_second_diff = 0;
  double rho_first_diff = 0;    // central difference along the direction
  double gamma_first_diff = 0;
  double a_gradient = 0;        // central difference of rho_n in a_n alone
};
ConvexityProbe convexity_probe(const TodaState& s, Kappa kappa, LaxSign sign, const Direction& dir, int site,
                               double h);

struct MacroscopicSummary {
  double sum_rho = 0;
  double sum_gamma = 0;
  double log_det = 0;
  double trace_diff = 0;
  double M = 0;
  double P = 0;
};

struct TodaDensityReport {
  SiteSeries<double> gamma;
  SiteSeries<double> rho;
  SiteSeries<double> gamma_current;
  SiteSeries<double> rho_current;
  Residuals residuals;
  MacroscopicSummary macroscopic;
};

/// Everything above for one (state, kappa, sign).
TodaDensityReport density_report(const TodaState& s, Kappa kappa, LaxSign sign);

}  // namespace lattice_laws::toda
