#pragma once

// Ablowitz-Ladik lattice: block Lax operator L = U - S, its Green's function,
// the densities rho_n, gamma_n with currents, and the determinant/trace ledgers.

#include <complex>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lattice_laws/linalg.hpp"
#include "lattice_laws/window.hpp"

namespace lattice_laws::al {

using Complex = std::complex<double>;
using Block = Eigen::Matrix2cd;

inline constexpr double kDefaultDelta = 0.1;

/// +1: defocusing, beta = conj(alpha), |alpha| < 1.  -1: focusing, beta = -conj(alpha).
enum class ALSign : int { defocusing = 1, focusing = -1 };

inline double sign_value(ALSign s) { return static_cast<double>(static_cast<int>(s)); }

/// Spectral parameter with |z| >= 2. Values with 1 < |z| < 2 are accepted only when
/// `allow_unsupported` is set, and then with a warning; |z| <= 1 is always rejected.
class SpectralZ {
 public:
  explicit SpectralZ(Complex z, bool allow_unsupported = false);
  Complex value() const { return z_; }
  double modulus() const { return std::abs(z_); }
  SpectralZ scaled(double factor) const;

 private:
  Complex z_;
};

struct ALState {
  LatticeWindow window;
  std::vector<Complex> alpha;
  ALSign sign = ALSign::defocusing;

  static ALState vacuum(LatticeWindow window, ALSign sign);

  Complex alpha_at(int n) const { return window.contains(n) ? alpha[window.offset(n)] : Complex{}; }
  Complex beta_at(int n) const { return sign_value(sign) * std::conj(alpha_at(n)); }

  /// Throws std::invalid_argument on size mismatch or non-finite entries and
  /// DomainError when a defocusing state has |alpha_n| >= 1.
  void validate() const;
  ALState embedded(LatticeWindow larger) const;
};

/// i d(alpha_n)/dt = 2 alpha_n - (1 - alpha_n beta_n)(alpha_{n+1} + alpha_{n-1}), on `out`.
SiteSeries<Complex> al_vector_field(const ALState& s, LatticeWindow out);
SiteSeries<Complex> al_vector_field(const ALState& s);

struct MassEnergy {
  double M = 0;
  double H = 0;
};
/// M = -sum log(1 - alpha beta), H = sum(-alpha_n beta_{n+1} - alpha_{n+1} beta_n - 2 log(1 - alpha_n beta_n)).
MassEnergy mass_and_energy(const ALState& s);

/// |M| e^{|M|} < delta^2 (|z|^2 - 1)/|z|.
bool in_ball(const ALState& s, const SpectralZ& z, double delta = kDefaultDelta);
/// Warns between delta and 2*delta, throws OutOfBall beyond.
void require_ball(const ALState& s, const SpectralZ& z, double delta = kDefaultDelta);

struct TransferPair {
  Block U;
  Block V;
};
TransferPair transfer_pair(const ALState& s, const SpectralZ& z, int n);

/// ceil(40 / log|z|).
int pad_width(const SpectralZ& z);
LatticeWindow padded_window(const ALState& s, const SpectralZ& z);
LatticeWindow report_window(const ALState& s, const SpectralZ& z);

/// The operator [[z - S, alpha], [beta, 1/z - S]] sectioned onto a window, unknowns
/// interleaved as (f_n, g_n).
///
/// Row 2i carries the first component equation at site first+i; row 2i+1 carries the
/// second component equation at site first+i-1. With f vanishing right of the window
/// and g vanishing left of it, this square section inverts to the exact restriction of
/// the lattice Green's function; a plain cutoff of both blocks would pick the growing
/// branch of (1/z - S)^{-1}. The determinant ratio against the vacuum section equals
/// det[L L0^{-1}].
linalg::BandedMatrix<Complex> lax_section(const ALState& s, const SpectralZ& z, LatticeWindow window);
linalg::BandedMatrix<Complex> lax_section(const ALState& s, const SpectralZ& z);

/// diag(z^{n-m-1} 1_{n<=m}, -z^{m-n+1} 1_{n>m}).
Block free_green(int n, int m, Complex z);

/// G(n, m), the 2x2 block kernel of L^{-1}. Column-2 entries need m <= window.last() - 1.
class GreenTable {
 public:
  explicit GreenTable(linalg::DenseKernel<Complex> raw) : raw_(std::move(raw)) {}

  const LatticeWindow& window() const { return raw_.window; }
  Block operator()(int n, int m) const;
  Complex entry(int n, int m, int r, int c) const;
  const linalg::DenseKernel<Complex>& raw() const { return raw_; }

 private:
  linalg::DenseKernel<Complex> raw_;
};

GreenTable green_table(const ALState& s, const SpectralZ& z, double delta = kDefaultDelta);

using Residuals = std::map<std::string, double>;

/// detID, trID, nD, nU, nD2, nU2, wrap_left, wrap_right and vacuous_trace, all as
/// max-abs residuals over the report window.
Residuals check_identities(const ALState& s, const SpectralZ& z, const GreenTable& g);

struct Densities {
  SiteSeries<Complex> rho;            // rho-alt form, principal logs
  SiteSeries<Complex> rho_definition;
  SiteSeries<Complex> rho_alt1;
  SiteSeries<Complex> gamma;          // G11(n+1,n) - G22(n+1,n) - 1
  SiteSeries<Complex> gamma_alt;      // 2 G11(n+1,n)
};
/// Throws DegenerateGreen if |G11(n,n)| < 0.1/|z| or |1 + G11(n+1,n)| < 0.5.
Densities densities(const ALState& s, const SpectralZ& z, const GreenTable& g);

struct Currents {
  SiteSeries<Complex> j;
  SiteSeries<Complex> gamma_j;
};
Currents currents(const ALState& s, const SpectralZ& z, const GreenTable& g);

struct DensityRates {
  SiteSeries<Complex> drho_dt;
  SiteSeries<Complex> dgamma_dt;
};
/// dG/dt = V_n G(n,m) - G(n,m) V_{m+1}, pushed through rho-alt and gamma = 2 G11(n+1,n).
DensityRates density_time_derivative(const ALState& s, const SpectralZ& z, const GreenTable& g);
DensityRates density_time_derivative(const ALState& s, const SpectralZ& z);

struct Determinant {
  Complex log_det;         // log det[L L0^{-1}] from the trace-log series in Gamma Lambda
  Complex log_det_section; // same from the sectioned operator (series over its compression)
  Complex log_det_pivots;  // LU pivots of the sectioned operator
  double hs_lambda = 0;
  double hs_gamma = 0;
  int terms = 0;
};
Determinant perturbation_determinant(const ALState& s, const SpectralZ& z);

/// tr{(L^{-1} - L0^{-1}) S sigma3} over the padded window.
Complex weighted_trace(const GreenTable& g, Complex z);
/// tr{(L^{-1} - L0^{-1}) S}, which vanishes identically.
Complex vacuous_trace(const GreenTable& g, Complex z);

struct Ledger {
  Complex sum_rho;
  Complex log_det;
  Complex sum_gamma;
  Complex weighted_trace;
  Complex log_det_section;
  Complex log_det_pivots;
};
Ledger macroscopic_check(const ALState& s, const SpectralZ& z);

struct ZDerivative {
  Complex lhs;  // z times a central difference of log det in z
  Complex rhs;  // weighted trace
};
ZDerivative z_derivative_check(const ALState& s, const SpectralZ& z, double h = 1e-5);

struct Coercivity {
  double sum_im_j2 = 0;
  double dft_im = 0;
  double sum_re_rho2 = 0;
  double dft_re = 0;
};
/// Quadratic parts of sum Im j_n and sum Re(rho_n - log(1 - alpha_n beta_n)/2) by
/// symmetric eps-scaling, next to their Fourier-side weights on a 4096-node grid.
/// `direction` lives on `window`; z must be real with z >= 2.
Coercivity coercivity_check(LatticeWindow window, const std::vector<Complex>& direction, double z, ALSign sign,
                            double eps = 1e-3);

struct MacroscopicSummary {
  Complex sum_rho;
  Complex log_det;
  Complex sum_gamma;
  Complex weighted_trace;
};

struct ALDensityReport {
  SiteSeries<Complex> rho;
  SiteSeries<Complex> gamma;
  SiteSeries<Complex> j;
  SiteSeries<Complex> gamma_j;
  Residuals residuals;
  MacroscopicSummary macroscopic;
};
ALDensityReport density_report(const ALState& s, const SpectralZ& z);

}  // namespace lattice_laws::al
