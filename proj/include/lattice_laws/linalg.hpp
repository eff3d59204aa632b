#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "lattice_laws/window.hpp"

namespace lattice_laws::linalg {

using Complex = std::complex<double>;

template <class T>
using DenseMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;

/// Square band matrix acting on `block` unknowns per site of a lattice window.
///
/// Global row/column indices run over [0, block * window.size); site n, component c
/// maps to block * (n - window.first) + c. Entries outside the band are zero and
/// cannot be written.
template <class T>
class BandedMatrix {
 public:
  BandedMatrix(LatticeWindow window, int block, int lower, int upper);

  const LatticeWindow& window() const { return window_; }
  int block() const { return block_; }
  int lower() const { return lower_; }
  int upper() const { return upper_; }
  int rows() const { return dim_; }

  bool in_band(int i, int j) const {
    return i >= 0 && j >= 0 && i < dim_ && j < dim_ && j - i >= -lower_ && j - i <= upper_;
  }

  /// Entry (i, j); zero outside the band.
  T operator()(int i, int j) const {
    return in_band(i, j) ? band_[index(i, j)] : T{};
  }

  /// Mutable entry (i, j); throws std::out_of_range outside the band.
  T& ref(int i, int j);

  double norm_inf() const;
  std::vector<T> apply(std::span<const T> x) const;
  DenseMatrix<T> to_dense() const;

 private:
  std::size_t index(int i, int j) const {
    return static_cast<std::size_t>(i) * static_cast<std::size_t>(lower_ + upper_ + 1) +
           static_cast<std::size_t>(j - i + lower_);
  }

  LatticeWindow window_;
  int block_;
  int lower_;
  int upper_;
  int dim_;
  std::vector<T> band_;
};

/// Dense kernel over a lattice window (block x block values per site pair).
template <class T>
struct DenseKernel {
  LatticeWindow window;
  int block = 1;
  DenseMatrix<T> values;

  T operator()(int i, int j) const { return values(i, j); }
};

/// LU factorization with partial pivoting, stored in band form.
template <class T>
class BandedLU {
 public:
  /// Factors `a`; throws SingularMatrix if a pivot falls below 1e-14 * |a|_inf.
  explicit BandedLU(const BandedMatrix<T>& a);

  int rows() const { return n_; }
  void solve_in_place(std::span<T> rhs) const;

  /// Sum of complex pivot logarithms with the permutation parity folded in as
  /// i*pi, i.e. one branch of log det. Real matrices are handled the same way.
  Complex log_det() const;

 private:
  T& u(int i, int j) { return work_[static_cast<std::size_t>(i) * width_ + (j - i + kl_)]; }
  const T& u(int i, int j) const { return work_[static_cast<std::size_t>(i) * width_ + (j - i + kl_)]; }

  int n_;
  int kl_;
  int ku_;
  std::size_t width_;  // 2*kl + ku + 1
  std::vector<T> work_;
  std::vector<T> multipliers_;  // kl per column
  std::vector<int> pivots_;
  int swaps_ = 0;
};

template <class T>
std::vector<T> solve_banded(const BandedMatrix<T>& a, std::span<const T> rhs);

/// Full inverse of `a`, column by column. Kernel window/block follow `a`.
template <class T>
DenseKernel<T> invert_window(const BandedMatrix<T>& a);

template <class T>
struct LogDetRatio {
  T value{};           // trace-log series value (defines the branch)
  T pivot_value{};     // pivot-log route, reconciled onto the series branch
  double hs_norm = 0;  // Hilbert-Schmidt norm of (A - A0) A0^{-1}
  int terms = 0;
};

/// log det(A A0^{-1}) by two routes: LU pivot logs and the trace-log series
/// sum_{l>=1} (-1)^{l+1}/l tr{((A - A0) A0^{-1})^l}. Throws SeriesDivergence when
/// the Hilbert-Schmidt norm of the perturbation is >= 1 and LogDetMismatch when
/// the routes differ by more than `agreement` (imaginary parts modulo 2*pi).
template <class T>
LogDetRatio<T> log_det_ratio(const BandedMatrix<T>& a, const BandedMatrix<T>& a0,
                             double agreement = 1e-9);

/// sum_{l>=1} (-1)^{l+1}/l tr{Y^l}, stopping once a term drops below 1e-14.
/// Throws SeriesDivergence if it has not converged after `max_terms`.
template <class T>
T trace_log_series(const DenseMatrix<T>& y, int* terms_used = nullptr, int max_terms = 4000);

template <class T>
double hs_norm(const DenseKernel<T>& k) {
  return k.values.norm();
}

}  // namespace lattice_laws::linalg
