#pragma once

// Dense reference constructions used as independent checks.

#include <cmath>
#include <complex>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

using Complex = std::complex<double>;

// Tridiagonal Toda operator on sites [first, first + size) with given a, b on the
// whole range: diagonal cosh k - sign b_n, off-diagonal -a_n.
inline Eigen::MatrixXd toda_dense(int size, double kappa, double sign, const std::vector<double>& a,
                                  const std::vector<double>& b) {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(size, size);
  for (int i = 0; i < size; ++i) {
    m(i, i) = std::cosh(kappa) - sign * b[i];
    if (i + 1 < size) m(i, i + 1) = m(i + 1, i) = -a[i];
  }
  return m;
}

template <class M>
double log_abs_det(const M& m) {
  const Eigen::PartialPivLU<M> lu(m);
  double acc = 0.0;
  for (int i = 0; i < m.rows(); ++i) acc += std::log(std::abs(lu.matrixLU()(i, i)));
  return acc;
}

// Kernels on sites [first, first + size), S the left shift (S f)_n = f_{n+1}.
// (z - S)^{-1}(n, m) = z^{n-m-1} for m >= n.
inline Eigen::MatrixXcd z_minus_s_inv(int size, Complex z) {
  Eigen::MatrixXcd k = Eigen::MatrixXcd::Zero(size, size);
  for (int n = 0; n < size; ++n)
    for (int m = n; m < size; ++m) k(n, m) = std::pow(z, n - m - 1);
  return k;
}

// (S - 1/z)^{-1}(n, m) = z^{m-n+1} for m <= n - 1.
inline Eigen::MatrixXcd s_minus_zinv_inv(int size, Complex z) {
  Eigen::MatrixXcd k = Eigen::MatrixXcd::Zero(size, size);
  for (int n = 0; n < size; ++n)
    for (int m = 0; m < n; ++m) k(n, m) = std::pow(z, m - n + 1);
  return k;
}

}  // namespace oracle
