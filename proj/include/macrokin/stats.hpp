#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>

namespace macrokin::stats {

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
};

// Ordinary least squares y = slope * x + intercept.
inline LineFit fit_line(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("fit_line needs >= 2 paired points");
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
  }
  const double mx = sx / n, my = sy / n;
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sxx == 0.0) throw std::invalid_argument("fit_line needs distinct x values");
  const double slope = sxy / sxx;
  return {slope, my - slope * mx};
}

struct MeanCI {
  double mean = 0.0;
  double half_width = 0.0;  // 95% normal-approximation half-width
  std::size_t n = 0;
};

inline MeanCI mean_ci(std::span<const double> v) {
  MeanCI r;
  r.n = v.size();
  if (v.empty()) return r;
  double s = 0;
  for (auto x : v) s += x;
  r.mean = s / static_cast<double>(v.size());
  if (v.size() < 2) return r;
  double ss = 0;
  for (auto x : v) ss += (x - r.mean) * (x - r.mean);
  const double sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
  r.half_width = 1.959963984540054 * sd / std::sqrt(static_cast<double>(v.size()));
  return r;
}

}  // namespace macrokin::stats
