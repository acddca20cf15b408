#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "macrokin/csv.hpp"
#include "macrokin/equilibrium.hpp"
#include "macrokin/errors.hpp"
#include "macrokin/model.hpp"

namespace macrokin {

// Mass-action field dc_i/dt = sum_r (beta_i - alpha_i) K_r c^alpha_r, 0^0 = 1.
inline void rhs(const Network& net, std::span<const double> c, std::span<double> dc) {
  std::fill(dc.begin(), dc.end(), 0.0);
  for (const auto& r : net.reactions()) {
    double flux = r.rate_constant;
    for (std::size_t j = 0; j < c.size() && flux != 0.0; ++j) {
      for (int k = 0; k < r.alpha[j]; ++k) flux *= c[j];
    }
    if (flux == 0.0) continue;
    for (std::size_t i = 0; i < c.size(); ++i) {
      const int d = r.beta[i] - r.alpha[i];
      if (d != 0) dc[i] += d * flux;
    }
  }
}

inline std::vector<double> rhs(const Network& net, std::span<const double> c) {
  if (c.size() != net.num_species()) throw std::invalid_argument("concentration dimension mismatch");
  std::vector<double> dc(c.size());
  rhs(net, c, dc);
  return dc;
}

// d rhs_i / d c_j
inline Eigen::MatrixXd rhs_jacobian(const Network& net, std::span<const double> c) {
  const auto n = net.num_species();
  Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (const auto& r : net.reactions()) {
    for (std::size_t j = 0; j < n; ++j) {
      if (r.alpha[j] == 0) continue;
      double d = r.rate_constant * r.alpha[j];
      for (std::size_t l = 0; l < n; ++l) {
        const int power = r.alpha[l] - (l == j ? 1 : 0);
        for (int k = 0; k < power; ++k) d *= c[l];
      }
      for (std::size_t i = 0; i < n; ++i)
        jac(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) += (r.beta[i] - r.alpha[i]) * d;
    }
  }
  return jac;
}

struct OdeTrajectory {
  std::vector<double> times;
  std::vector<Concentration> states;
  std::vector<std::vector<double>> derivs;  // rhs at each grid point
  std::size_t steps = 0;
  std::size_t rejected = 0;
  double rtol = 0.0;
  double atol = 0.0;

  std::size_t size() const { return times.size(); }
  const Concentration& back() const { return states.back(); }

  // Cubic Hermite interpolation between grid points.
  Concentration at(double t) const {
    if (times.empty()) throw std::logic_error("empty trajectory");
    if (t <= times.front()) return states.front();
    if (t >= times.back()) return states.back();
    const auto k = static_cast<std::size_t>(std::upper_bound(times.begin(), times.end(), t) - times.begin()) - 1;
    const double h = times[k + 1] - times[k];
    const double s = (t - times[k]) / h;
    const double h00 = (1 + 2 * s) * (1 - s) * (1 - s), h10 = s * (1 - s) * (1 - s);
    const double h01 = s * s * (3 - 2 * s), h11 = s * s * (s - 1);
    Concentration c(states[k].size());
    for (std::size_t i = 0; i < c.size(); ++i)
      c[i] = h00 * states[k][i] + h10 * h * derivs[k][i] + h01 * states[k + 1][i] + h11 * h * derivs[k + 1][i];
    return c;
  }
};

struct IntegrateOptions {
  double max_step = std::numeric_limits<double>::infinity();
  std::size_t max_steps = 10'000'000;
};

// Dormand-Prince 5(4) with per-step error control
// max_i |err_i| / (atol + rtol max(|y_i|, |y_new_i|)) <= 1. A step that
// drives a component below -atol is rejected and halved; components in
// [-atol, 0) are clamped to 0.
inline OdeTrajectory integrate(const Network& net, const Concentration& c0, double t_end, double rtol = 1e-8,
                               double atol = 1e-12, const IntegrateOptions& opts = {}) {
  const auto n = net.num_species();
  if (c0.size() != n) throw std::invalid_argument("concentration dimension mismatch");
  for (auto v : c0)
    if (!(v >= 0.0) || !std::isfinite(v)) throw std::invalid_argument("initial concentration must be finite and >= 0");
  if (!(t_end >= 0.0)) throw std::invalid_argument("t_end must be >= 0");
  if (!(rtol > 0.0) || !(atol > 0.0)) throw std::invalid_argument("tolerances must be positive");

  static constexpr double a21 = 1.0 / 5;
  static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
  static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                          a65 = -5103.0 / 18656;
  static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784, b6 = 11.0 / 84;
  static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                          e6 = 22.0 / 525, e7 = -1.0 / 40;

  OdeTrajectory tr;
  tr.rtol = rtol;
  tr.atol = atol;
  std::vector<double> y = c0, k1(n), k2(n), k3(n), k4(n), k5(n), k6(n), k7(n), tmp(n), y_new(n), err(n);
  rhs(net, y, k1);
  tr.times.push_back(0.0);
  tr.states.push_back(y);
  tr.derivs.push_back(k1);
  if (t_end == 0.0) return tr;

  auto scaled_norm = [&](std::span<const double> v, std::span<const double> ref) {
    double m = 0.0;
    for (std::size_t i = 0; i < n; ++i) m = std::max(m, std::abs(v[i]) / (atol + rtol * std::abs(ref[i])));
    return m;
  };
  // Initial step (Hairer, Norsett, Wanner, II.4).
  double h;
  {
    const double d0 = scaled_norm(y, y), d1 = scaled_norm(k1, y);
    double h0 = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
    h0 = std::min(h0, t_end);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + h0 * k1[i];
    rhs(net, tmp, k2);
    for (std::size_t i = 0; i < n; ++i) err[i] = k2[i] - k1[i];
    const double d2 = scaled_norm(err, y) / h0;
    const double h1 = std::max(d1, d2) <= 1e-15 ? std::max(1e-6, h0 * 1e-3) : std::pow(0.01 / std::max(d1, d2), 0.2);
    h = std::min({100 * h0, h1, opts.max_step, t_end});
  }

  double t = 0.0;
  while (t < t_end) {
    if (tr.steps + tr.rejected >= opts.max_steps) throw NumericError("integrator exceeded max_steps at t=" + csv::num(t));
    bool last = false;
    if (t + h >= t_end) {
      h = t_end - t;
      last = true;
    }
    if (h < 1e-14 * std::max(1.0, std::abs(t)))
      throw NumericError("step size underflow at t=" + csv::num(t));

    auto stage = [&](std::vector<double>& out, std::initializer_list<std::pair<double, const std::vector<double>*>> terms) {
      for (std::size_t i = 0; i < n; ++i) {
        double s = y[i];
        for (const auto& [a, k] : terms) s += h * a * (*k)[i];
        tmp[i] = s;
      }
      rhs(net, tmp, out);
    };
    stage(k2, {{a21, &k1}});
    stage(k3, {{a31, &k1}, {a32, &k2}});
    stage(k4, {{a41, &k1}, {a42, &k2}, {a43, &k3}});
    stage(k5, {{a51, &k1}, {a52, &k2}, {a53, &k3}, {a54, &k4}});
    stage(k6, {{a61, &k1}, {a62, &k2}, {a63, &k3}, {a64, &k4}, {a65, &k5}});
    for (std::size_t i = 0; i < n; ++i)
      y_new[i] = y[i] + h * (b1 * k1[i] + b3 * k3[i] + b4 * k4[i] + b5 * k5[i] + b6 * k6[i]);
    rhs(net, y_new, k7);
    double en = 0.0;
    bool finite = true;
    for (std::size_t i = 0; i < n; ++i) {
      err[i] = h * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] + e6 * k6[i] + e7 * k7[i]);
      finite = finite && std::isfinite(y_new[i]);
      en = std::max(en, std::abs(err[i]) / (atol + rtol * std::max(std::abs(y[i]), std::abs(y_new[i]))));
    }
    bool negative = false;
    for (std::size_t i = 0; i < n; ++i) negative = negative || y_new[i] < -atol;

    if (!finite || negative || en > 1.0) {
      ++tr.rejected;
      if (!finite || negative) h *= 0.5;
      else h *= std::max(0.2, 0.9 * std::pow(en, -0.2));
      continue;
    }
    bool clamped = false;
    for (auto& v : y_new) {
      if (v < 0.0) {
        v = 0.0;
        clamped = true;
      }
    }
    if (clamped) rhs(net, y_new, k7);
    t = last ? t_end : t + h;
    y.swap(y_new);
    k1.swap(k7);
    ++tr.steps;
    tr.times.push_back(t);
    tr.states.push_back(y);
    tr.derivs.push_back(k1);
    const double fac = en == 0.0 ? 5.0 : std::min(5.0, std::max(0.2, 0.9 * std::pow(en, -0.2)));
    h = std::min(h * fac, opts.max_step);
  }
  return tr;
}

// --------------------------------------------------------------------------
// Lyapunov monitoring

struct LyapunovSeries {
  std::vector<double> values;  // H(c(t)) on the trajectory grid
  double max_increase = 0.0;   // largest H(t_{k+1}) - H(t_k), 0 if none positive
  double tolerance = 0.0;
  bool nonincreasing = true;   // max_increase <= tolerance
};

// Evaluates H along the grid. The default tolerance is
// 50 rtol max(1, max |H|), rtol taken from the trajectory.
inline LyapunovSeries lyapunov_along(const OdeTrajectory& traj, const PoissonParams& xi,
                                     std::optional<double> tolerance = std::nullopt) {
  LyapunovSeries out;
  out.values.reserve(traj.size());
  double scale = 1.0;
  for (const auto& c : traj.states) {
    if (c.size() != xi.size()) throw std::invalid_argument("dimension mismatch");
    out.values.push_back(entropy(c, xi));
    scale = std::max(scale, std::abs(out.values.back()));
  }
  for (std::size_t k = 1; k < out.values.size(); ++k)
    out.max_increase = std::max(out.max_increase, out.values[k] - out.values[k - 1]);
  out.tolerance = tolerance.value_or(50.0 * traj.rtol * scale);
  out.nonincreasing = out.max_increase <= out.tolerance;
  return out;
}

// max_t |<mu, c(t)> - <mu, c(0)>| per basis row.
inline std::vector<double> linear_invariant_drift(const OdeTrajectory& traj, const ConservationBasis& basis) {
  std::vector<double> drift(basis.rank(), 0.0);
  if (traj.states.empty()) return drift;
  const auto b0 = invariant_values(basis, traj.states.front());
  for (const auto& c : traj.states) {
    const auto b = invariant_values(basis, c);
    for (std::size_t k = 0; k < b.size(); ++k) drift[k] = std::max(drift[k], std::abs(b[k] - b0[k]));
  }
  return drift;
}

// --------------------------------------------------------------------------
// Lotka-Volterra

// Rate constants of prey birth X -> 2X (K1), predation X + Y -> 2Y (K2) and
// predator death Y -> 0 (K3), with the species indices of X and Y.
struct LotkaVolterra {
  double K1 = 0.0, K2 = 0.0, K3 = 0.0;
  std::size_t prey = 0, predator = 1;
};

// Recognizes the three-reaction predator-prey network in any reaction order.
inline std::optional<LotkaVolterra> match_lotka_volterra(const Network& net) {
  if (net.num_species() != 2 || net.num_reactions() != 3) return std::nullopt;
  for (std::size_t prey = 0; prey < 2; ++prey) {
    const std::size_t pred = 1 - prey;
    auto vec = [&](int x, int y) {
      Stoich s(2);
      s[prey] = x;
      s[pred] = y;
      return s;
    };
    std::optional<double> k1, k2, k3;
    for (const auto& r : net.reactions()) {
      if (r.alpha == vec(1, 0) && r.beta == vec(2, 0)) k1 = r.rate_constant;
      else if (r.alpha == vec(1, 1) && r.beta == vec(0, 2)) k2 = r.rate_constant;
      else if (r.alpha == vec(0, 1) && r.beta == vec(0, 0)) k3 = r.rate_constant;
    }
    if (k1 && k2 && k3) return LotkaVolterra{*k1, *k2, *k3, prey, pred};
  }
  return std::nullopt;
}

// K3 ln c_prey + K1 ln c_predator - K2 (c_prey + c_predator).
inline double lv_first_integral(double prey, double predator, double K1, double K2, double K3) {
  if (!(prey > 0.0) || !(predator > 0.0))
    throw std::domain_error("Lotka-Volterra first integral needs positive concentrations");
  return K3 * std::log(prey) + K1 * std::log(predator) - K2 * (prey + predator);
}

inline double lv_first_integral(std::span<const double> c, const LotkaVolterra& lv) {
  return lv_first_integral(c[lv.prey], c[lv.predator], lv.K1, lv.K2, lv.K3);
}

// First return of the trajectory to the hyperplane through c(0) normal to
// rhs(c(0)), crossed in the same direction as at t = 0.
struct SectionReturn {
  double period = 0.0;
  Concentration point;
  double closure = 0.0;  // ||point - c(0)||_inf
};

inline std::optional<SectionReturn> first_section_return(const OdeTrajectory& traj) {
  if (traj.size() < 3) return std::nullopt;
  const auto& c0 = traj.states.front();
  const auto& normal = traj.derivs.front();
  auto g = [&](const Concentration& c) {
    double s = 0.0;
    for (std::size_t i = 0; i < c.size(); ++i) s += normal[i] * (c[i] - c0[i]);
    return s;
  };
  // Skip the departure from the section, then look for a - to + crossing.
  bool been_negative = false;
  for (std::size_t k = 1; k < traj.size(); ++k) {
    const double gk = g(traj.states[k]);
    if (gk < 0.0) {
      been_negative = true;
      continue;
    }
    if (!been_negative || g(traj.states[k - 1]) >= 0.0) continue;
    double lo = traj.times[k - 1], hi = traj.times[k];
    for (int it = 0; it < 200 && hi - lo > 1e-15 * hi; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (g(traj.at(mid)) < 0.0) lo = mid;
      else hi = mid;
    }
    SectionReturn ret;
    ret.period = 0.5 * (lo + hi);
    ret.point = traj.at(ret.period);
    for (std::size_t i = 0; i < c0.size(); ++i) ret.closure = std::max(ret.closure, std::abs(ret.point[i] - c0[i]));
    return ret;
  }
  return std::nullopt;
}

// --------------------------------------------------------------------------
// Attractor diagnostics

struct AttractorGap {
  double gap = 0.0;  // ||c(t_end) - c*||_inf
  Concentration c_star;
  Concentration c_end;
};

// Integrates from c0 and compares the endpoint with the Boltzmann extremal
// on the affine set fixed by the conservation laws at c0.
inline AttractorGap attractor_gap(const Network& net, const PoissonParams& xi, const ConservationBasis& basis,
                                  const Concentration& c0, double t_end, double rtol = 1e-11, double atol = 1e-14) {
  const auto ex = boltzmann_extremal(make_entropy_problem(basis, c0, xi));
  const auto tr = integrate(net, c0, t_end, rtol, atol);
  AttractorGap out;
  out.c_star = ex.c_star;
  out.c_end = tr.back();
  for (std::size_t i = 0; i < c0.size(); ++i) out.gap = std::max(out.gap, std::abs(out.c_end[i] - out.c_star[i]));
  return out;
}

// Slowest linear relaxation time 1 / min |Re lambda| at an equilibrium c*,
// over Jacobian eigenvalues after discarding the rank(basis) eigenvalues of
// smallest modulus (the conserved directions, exactly zero in theory).
inline double slowest_relaxation_time(const Network& net, const Concentration& c_star, const ConservationBasis& basis) {
  const Eigen::MatrixXd jac = rhs_jacobian(net, c_star);
  Eigen::EigenSolver<Eigen::MatrixXd> es(jac, false);
  std::vector<std::complex<double>> ev(es.eigenvalues().data(), es.eigenvalues().data() + es.eigenvalues().size());
  std::sort(ev.begin(), ev.end(), [](auto a, auto b) { return std::abs(a) < std::abs(b); });
  double slowest = std::numeric_limits<double>::infinity();
  for (std::size_t k = basis.rank(); k < ev.size(); ++k) slowest = std::min(slowest, std::abs(ev[k].real()));
  if (!(slowest > 0.0) || !std::isfinite(slowest)) throw NumericError("no decaying mode at the equilibrium");
  return 1.0 / slowest;
}

// --------------------------------------------------------------------------
// Output

// CSV `t,c_<species>...[,H][,lv_integral]`.
inline std::string ode_csv(const Network& net, const OdeTrajectory& traj, const PoissonParams* xi = nullptr,
                           const LotkaVolterra* lv = nullptr) {
  std::string out = "t";
  for (const auto& s : net.species()) out += ",c_" + s;
  if (xi) out += ",H";
  if (lv) out += ",lv_integral";
  out += '\n';
  for (std::size_t k = 0; k < traj.size(); ++k) {
    out += csv::num(traj.times[k]);
    for (auto v : traj.states[k]) out += "," + csv::num(v);
    if (xi) out += "," + csv::num(entropy(traj.states[k], *xi));
    if (lv) {
      const auto& c = traj.states[k];
      out += ",";
      if (c[lv->prey] > 0.0 && c[lv->predator] > 0.0) out += csv::num(lv_first_integral(c, *lv));
    }
    out += '\n';
  }
  return out;
}

}  // namespace macrokin
