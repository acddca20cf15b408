#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

namespace macrokin::exact {

using Integer = boost::multiprecision::cpp_int;
using Rational = boost::multiprecision::cpp_rational;
using RationalMatrix = std::vector<std::vector<Rational>>;
using IntMatrix = std::vector<std::vector<std::int64_t>>;

inline RationalMatrix to_rational(const IntMatrix& m) {
  RationalMatrix out;
  out.reserve(m.size());
  for (const auto& row : m) {
    std::vector<Rational> r;
    r.reserve(row.size());
    for (auto v : row) r.emplace_back(v);
    out.push_back(std::move(r));
  }
  return out;
}

// In-place reduced row echelon form. Returns the pivot column of each
// nonzero row, in row order; rows below pivots.size() are zero afterwards.
inline std::vector<std::size_t> rref(RationalMatrix& a, std::size_t cols) {
  std::vector<std::size_t> pivots;
  std::size_t row = 0;
  for (std::size_t col = 0; col < cols && row < a.size(); ++col) {
    std::size_t sel = row;
    while (sel < a.size() && a[sel][col] == 0) ++sel;
    if (sel == a.size()) continue;
    std::swap(a[row], a[sel]);
    const Rational p = a[row][col];
    for (auto& v : a[row]) v /= p;
    for (std::size_t r = 0; r < a.size(); ++r) {
      if (r == row || a[r][col] == 0) continue;
      const Rational f = a[r][col];
      for (std::size_t c = col; c < cols; ++c) a[r][c] -= f * a[row][c];
    }
    pivots.push_back(col);
    ++row;
  }
  return pivots;
}

// Scales a rational vector to the primitive integer vector on the same ray,
// first nonzero entry positive. The zero vector maps to itself.
inline std::vector<std::int64_t> primitive(const std::vector<Rational>& v) {
  Integer lcm_den = 1;
  for (const auto& x : v) {
    if (x == 0) continue;
    lcm_den = boost::multiprecision::lcm(lcm_den, Integer(denominator(x)));
  }
  std::vector<Integer> ints;
  ints.reserve(v.size());
  Integer g = 0;
  for (const auto& x : v) {
    Integer n = numerator(x) * (lcm_den / denominator(x));
    g = boost::multiprecision::gcd(g, boost::multiprecision::abs(n));
    ints.push_back(std::move(n));
  }
  std::vector<std::int64_t> out(v.size(), 0);
  if (g == 0) return out;
  int sign = 0;
  for (const auto& n : ints) {
    if (n != 0) {
      sign = n > 0 ? 1 : -1;
      break;
    }
  }
  const Integer lim = std::numeric_limits<std::int64_t>::max();
  for (std::size_t i = 0; i < ints.size(); ++i) {
    Integer n = ints[i] / g * sign;
    if (boost::multiprecision::abs(n) > lim)
      throw std::overflow_error("conservation law entry exceeds 64-bit range");
    out[i] = n.convert_to<std::int64_t>();
  }
  return out;
}

// Basis of {x : a x = 0} for an m x cols integer matrix, one primitive
// integer vector per free column of the echelon form, in free-column order.
inline IntMatrix null_space(const IntMatrix& a, std::size_t cols) {
  RationalMatrix r = to_rational(a);
  const auto pivots = rref(r, cols);
  std::vector<bool> is_pivot(cols, false);
  for (auto p : pivots) is_pivot[p] = true;

  IntMatrix basis;
  for (std::size_t free = 0; free < cols; ++free) {
    if (is_pivot[free]) continue;
    std::vector<Rational> v(cols, Rational(0));
    v[free] = 1;
    for (std::size_t k = 0; k < pivots.size(); ++k) v[pivots[k]] = -r[k][free];
    basis.push_back(primitive(v));
  }
  return basis;
}

// Indices of a maximal linearly independent subset of rows, chosen greedily
// in row order.
inline std::vector<std::size_t> independent_rows(const IntMatrix& rows, std::size_t cols) {
  std::vector<std::size_t> keep;
  RationalMatrix echelon;  // reduced copies of the kept rows
  std::vector<std::size_t> pivot_of;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::vector<Rational> v;
    v.reserve(cols);
    for (auto x : rows[i]) v.emplace_back(x);
    for (std::size_t k = 0; k < echelon.size(); ++k) {
      const auto pc = pivot_of[k];
      if (v[pc] == 0) continue;
      const Rational f = v[pc] / echelon[k][pc];
      for (std::size_t c = 0; c < cols; ++c) v[c] -= f * echelon[k][c];
    }
    std::size_t pc = cols;
    for (std::size_t c = 0; c < cols; ++c) {
      if (v[c] != 0) {
        pc = c;
        break;
      }
    }
    if (pc == cols) continue;
    keep.push_back(i);
    echelon.push_back(std::move(v));
    pivot_of.push_back(pc);
  }
  return keep;
}

inline std::size_t rank(const IntMatrix& rows, std::size_t cols) {
  return independent_rows(rows, cols).size();
}

}  // namespace macrokin::exact
