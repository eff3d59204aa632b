#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

namespace lattice_laws {

/// Contiguous range of lattice sites [first, first + size).
struct LatticeWindow {
  int first = 0;
  int size = 1;

  constexpr int last() const { return first + size - 1; }
  constexpr int end() const { return first + size; }
  constexpr bool contains(int n) const { return n >= first && n < end(); }
  std::size_t offset(int n) const { return static_cast<std::size_t>(n - first); }

  constexpr LatticeWindow grown(int left, int right) const {
    return {first - left, size + left + right};
  }
  constexpr LatticeWindow grown(int margin) const { return grown(margin, margin); }

  constexpr bool covers(const LatticeWindow& other) const {
    return first <= other.first && end() >= other.end();
  }

  friend constexpr bool operator==(const LatticeWindow&, const LatticeWindow&) = default;
};

inline void require_valid(const LatticeWindow& w) {
  if (w.size < 1) throw std::invalid_argument("lattice window must contain at least one site");
}

/// Values attached to each site of a window.
template <class T>
struct SiteSeries {
  LatticeWindow window;
  std::vector<T> values;

  SiteSeries() = default;
  SiteSeries(LatticeWindow w, T fill = T{}) : window(w), values(static_cast<std::size_t>(w.size), fill) {}

  T& operator[](int n) { return values[window.offset(n)]; }
  const T& operator[](int n) const { return values[window.offset(n)]; }

  /// Value at site n, or `outside` when n is not in the window.
  T at_or(int n, T outside) const { return window.contains(n) ? values[window.offset(n)] : outside; }
};

}  // namespace lattice_laws
