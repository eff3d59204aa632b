#include "lattice_laws/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "lattice_laws/errors.hpp"

namespace lattice_laws::linalg {

namespace {

template <class T>
double magnitude(const T& v) {
  return std::abs(v);
}

double imag_part(double) { return 0.0; }
double imag_part(const Complex& v) { return v.imag(); }

template <class T>
T from_complex(const Complex& v);

template <>
double from_complex<double>(const Complex& v) {
  return v.real();
}

template <>
Complex from_complex<Complex>(const Complex& v) {
  return v;
}

// Distance between two angles on the circle.
double wrapped_difference(double x, double y) {
  const double two_pi = 2.0 * std::numbers::pi;
  double d = std::fmod(x - y, two_pi);
  if (d > std::numbers::pi) d -= two_pi;
  if (d < -std::numbers::pi) d += two_pi;
  return d;
}

}  // namespace

template <class T>
BandedMatrix<T>::BandedMatrix(LatticeWindow window, int block, int lower, int upper)
    : window_(window), block_(block), lower_(lower), upper_(upper), dim_(block * window.size) {
  require_valid(window);
  if (block < 1 || lower < 0 || upper < 0) throw std::invalid_argument("invalid band shape");
  band_.assign(static_cast<std::size_t>(dim_) * static_cast<std::size_t>(lower + upper + 1), T{});
}

template <class T>
T& BandedMatrix<T>::ref(int i, int j) {
  if (!in_band(i, j)) {
    std::ostringstream msg;
    msg << "entry (" << i << ", " << j << ") lies outside the band";
    throw std::out_of_range(msg.str());
  }
  return band_[index(i, j)];
}

template <class T>
double BandedMatrix<T>::norm_inf() const {
  double best = 0.0;
  for (int i = 0; i < dim_; ++i) {
    double row = 0.0;
    for (int j = std::max(0, i - lower_); j <= std::min(dim_ - 1, i + upper_); ++j) row += magnitude((*this)(i, j));
    best = std::max(best, row);
  }
  return best;
}

template <class T>
std::vector<T> BandedMatrix<T>::apply(std::span<const T> x) const {
  if (static_cast<int>(x.size()) != dim_) throw std::invalid_argument("dimension mismatch in apply");
  std::vector<T> y(x.size(), T{});
  for (int i = 0; i < dim_; ++i) {
    T acc{};
    for (int j = std::max(0, i - lower_); j <= std::min(dim_ - 1, i + upper_); ++j) acc += (*this)(i, j) * x[j];
    y[i] = acc;
  }
  return y;
}

template <class T>
DenseMatrix<T> BandedMatrix<T>::to_dense() const {
  DenseMatrix<T> d = DenseMatrix<T>::Zero(dim_, dim_);
  for (int i = 0; i < dim_; ++i)
    for (int j = std::max(0, i - lower_); j <= std::min(dim_ - 1, i + upper_); ++j) d(i, j) = (*this)(i, j);
  return d;
}

template <class T>
BandedLU<T>::BandedLU(const BandedMatrix<T>& a)
    : n_(a.rows()),
      kl_(a.lower()),
      ku_(a.upper()),
      width_(static_cast<std::size_t>(2 * a.lower() + a.upper() + 1)),
      work_(static_cast<std::size_t>(a.rows()) * width_, T{}),
      multipliers_(static_cast<std::size_t>(a.rows()) * static_cast<std::size_t>(std::max(a.lower(), 1)), T{}),
      pivots_(static_cast<std::size_t>(a.rows()), 0) {
  for (int i = 0; i < n_; ++i)
    for (int j = std::max(0, i - kl_); j <= std::min(n_ - 1, i + ku_); ++j) u(i, j) = a(i, j);

  const double threshold = 1e-14 * a.norm_inf();
  for (int k = 0; k < n_; ++k) {
    const int last_row = std::min(n_ - 1, k + kl_);
    const int last_col = std::min(n_ - 1, k + kl_ + ku_);
    int p = k;
    double best = magnitude(u(k, k));
    for (int i = k + 1; i <= last_row; ++i) {
      if (magnitude(u(i, k)) > best) {
        best = magnitude(u(i, k));
        p = i;
      }
    }
    if (!(best > threshold)) {
      std::ostringstream msg;
      msg << "pivot " << best << " at column " << k << " below " << threshold;
      throw SingularMatrix(msg.str());
    }
    pivots_[k] = p;
    if (p != k) {
      ++swaps_;
      for (int j = k; j <= last_col; ++j) std::swap(u(k, j), u(p, j));
    }
    const T pivot = u(k, k);
    for (int i = k + 1; i <= last_row; ++i) {
      const T l = u(i, k) / pivot;
      multipliers_[static_cast<std::size_t>(k) * kl_ + (i - k - 1)] = l;
      u(i, k) = T{};
      if (l == T{}) continue;
      for (int j = k + 1; j <= last_col; ++j) u(i, j) -= l * u(k, j);
    }
  }
}

template <class T>
void BandedLU<T>::solve_in_place(std::span<T> rhs) const {
  if (static_cast<int>(rhs.size()) != n_) throw std::invalid_argument("dimension mismatch in solve");
  for (int k = 0; k < n_; ++k) {
    if (pivots_[k] != k) std::swap(rhs[k], rhs[pivots_[k]]);
    const T bk = rhs[k];
    if (bk == T{}) continue;
    for (int i = k + 1; i <= std::min(n_ - 1, k + kl_); ++i)
      rhs[i] -= multipliers_[static_cast<std::size_t>(k) * kl_ + (i - k - 1)] * bk;
  }
  for (int k = n_ - 1; k >= 0; --k) {
    T acc = rhs[k];
    for (int j = k + 1; j <= std::min(n_ - 1, k + kl_ + ku_); ++j) acc -= u(k, j) * rhs[j];
    rhs[k] = acc / u(k, k);
  }
}

template <class T>
Complex BandedLU<T>::log_det() const {
  Complex sum{};
  for (int k = 0; k < n_; ++k) sum += std::log(Complex(u(k, k)));
  if (swaps_ % 2 != 0) sum += Complex(0.0, std::numbers::pi);
  return sum;
}

template <class T>
std::vector<T> solve_banded(const BandedMatrix<T>& a, std::span<const T> rhs) {
  BandedLU<T> lu(a);
  std::vector<T> x(rhs.begin(), rhs.end());
  lu.solve_in_place(x);
  return x;
}

template <class T>
DenseKernel<T> invert_window(const BandedMatrix<T>& a) {
  BandedLU<T> lu(a);
  const int n = a.rows();
  DenseKernel<T> k{a.window(), a.block(), DenseMatrix<T>::Zero(n, n)};
  std::vector<T> column(static_cast<std::size_t>(n));
  for (int j = 0; j < n; ++j) {
    std::fill(column.begin(), column.end(), T{});
    column[j] = T{1};
    lu.solve_in_place(column);
    for (int i = 0; i < n; ++i) k.values(i, j) = column[i];
  }
  return k;
}

template <class T>
T trace_log_series(const DenseMatrix<T>& y, int* terms_used, int max_terms) {
  const double y_norm = y.norm();
  DenseMatrix<T> power = y;
  T sum{};
  for (int l = 1; l <= max_terms; ++l) {
    const T term = power.trace() * (l % 2 == 1 ? 1.0 : -1.0) / static_cast<double>(l);
    sum += term;
    // |tr(Y^{l+1})| <= |Y|_F |Y^l|_F bounds every later term geometrically.
    const double next_bound = y_norm * power.norm() / static_cast<double>(l + 1);
    const double tail_bound = y_norm < 1.0 ? next_bound / (1.0 - y_norm) : next_bound;
    if (magnitude(term) < 1e-14 && tail_bound < 1e-14) {
      if (terms_used) *terms_used = l;
      return sum;
    }
    power = (power * y).eval();
  }
  throw SeriesDivergence("trace-log series did not converge");
}

template <class T>
LogDetRatio<T> log_det_ratio(const BandedMatrix<T>& a, const BandedMatrix<T>& a0, double agreement) {
  if (a.rows() != a0.rows() || !(a.window() == a0.window()) || a.block() != a0.block())
    throw std::invalid_argument("log_det_ratio: operators must share a window");
  const int n = a.rows();
  const int lower = std::max(a.lower(), a0.lower());
  const int upper = std::max(a.upper(), a0.upper());

  // Rows carrying the perturbation A - A0.
  std::vector<int> rows;
  for (int i = 0; i < n; ++i) {
    for (int j = std::max(0, i - lower); j <= std::min(n - 1, i + upper); ++j) {
      if (a(i, j) != a0(i, j)) {
        rows.push_back(i);
        break;
      }
    }
  }

  LogDetRatio<T> out;
  const Complex pivot_route = BandedLU<T>(a).log_det() - BandedLU<T>(a0).log_det();
  if (rows.empty()) {
    out.value = T{};
    out.pivot_value = T{};
    return out;
  }

  // tr{X^l} with X = (A - A0) A0^{-1} only sees the perturbed rows, so the series
  // runs on the compression of X to those rows and columns.
  const DenseKernel<T> a0_inverse = invert_window(a0);
  const int r = static_cast<int>(rows.size());
  DenseMatrix<T> x_rows = DenseMatrix<T>::Zero(r, n);
  for (int s = 0; s < r; ++s) {
    const int i = rows[s];
    for (int j = std::max(0, i - lower); j <= std::min(n - 1, i + upper); ++j) {
      const T d = a(i, j) - a0(i, j);
      if (d != T{}) x_rows.row(s) += d * a0_inverse.values.row(j);
    }
  }
  out.hs_norm = x_rows.norm();
  if (!(out.hs_norm < 1.0)) {
    std::ostringstream msg;
    msg << "Hilbert-Schmidt norm of the relative perturbation is " << out.hs_norm << " >= 1";
    throw SeriesDivergence(msg.str());
  }
  DenseMatrix<T> y(r, r);
  for (int s = 0; s < r; ++s)
    for (int t = 0; t < r; ++t) y(s, t) = x_rows(s, rows[t]);

  out.value = trace_log_series<T>(y, &out.terms);

  const double real_gap = std::abs(std::real(Complex(out.value)) - pivot_route.real());
  const double imag_gap = std::abs(wrapped_difference(pivot_route.imag(), imag_part(out.value)));
  const double scale = std::max(1.0, magnitude(out.value));
  if (real_gap > agreement * scale || imag_gap > agreement * scale) {
    std::ostringstream msg;
    msg << "log det routes disagree: series " << Complex(out.value) << " vs pivots " << pivot_route;
    throw LogDetMismatch(msg.str());
  }
  // Move the pivot route onto the series branch.
  const Complex reconciled(pivot_route.real(),
                           imag_part(out.value) + wrapped_difference(pivot_route.imag(), imag_part(out.value)));
  out.pivot_value = from_complex<T>(reconciled);
  return out;
}

template class BandedMatrix<double>;
template class BandedMatrix<Complex>;
template class BandedLU<double>;
template class BandedLU<Complex>;
template std::vector<double> solve_banded(const BandedMatrix<double>&, std::span<const double>);
template std::vector<Complex> solve_banded(const BandedMatrix<Complex>&, std::span<const Complex>);
template DenseKernel<double> invert_window(const BandedMatrix<double>&);
template DenseKernel<Complex> invert_window(const BandedMatrix<Complex>&);
template double trace_log_series(const DenseMatrix<double>&, int*, int);
template Complex trace_log_series(const DenseMatrix<Complex>&, int*, int);
template LogDetRatio<double> log_det_ratio(const BandedMatrix<double>&, const BandedMatrix<double>&, double);
template LogDetRatio<Complex> log_det_ratio(const BandedMatrix<Complex>&, const BandedMatrix<Complex>&, double);

}  // namespace lattice_laws::linalg
