#pragma once

// Test-only network builders and independent oracles. Nothing here calls
// into the library code paths the tests check, except to construct inputs.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "macrokin/model.hpp"

namespace macrokin::fixture {

inline Network ehrenfest(std::int64_t M, double lambda = 1.0) {
  return Network({"A", "B"}, {{{1, 0}, {0, 1}, lambda}, {{0, 1}, {1, 0}, lambda}}, M);
}

inline Network lotka_volterra(double k1, double k2, double k3, std::int64_t M = 1) {
  return Network({"Zh", "X"}, {{{1, 0}, {2, 0}, k1}, {{1, 1}, {0, 2}, k2}, {{0, 1}, {0, 0}, k3}}, M);
}

inline Network irreversible_ab(double k = 1.0, std::int64_t M = 1) {
  return Network({"A", "B"}, {{{1, 0}, {0, 1}, k}}, M);
}

inline Network reversible_ab(double kf, double kr, std::int64_t M = 1) {
  return Network({"A", "B"}, {{{1, 0}, {0, 1}, kf}, {{0, 1}, {1, 0}, kr}}, M);
}

inline Network cycle3(double k = 1.0, std::int64_t M = 1) {
  return Network({"A", "B", "C"}, {{{1, 0, 0}, {0, 1, 0}, k}, {{0, 1, 0}, {0, 0, 1}, k}, {{0, 0, 1}, {1, 0, 0}, k}}, M);
}

// Binomial(M, 1/2) pmf via lgamma.
inline double binomial_half(int M, int k) {
  return std::exp(std::lgamma(M + 1.0) - std::lgamma(k + 1.0) - std::lgamma(M - k + 1.0) - M * std::log(2.0));
}

inline double xi_power(const std::vector<double>& xi, const Stoich& y) {
  double p = 1.0;
  for (std::size_t j = 0; j < y.size(); ++j) p *= std::pow(xi[j], y[j]);
  return p;
}

struct RandomNetwork {
  Network net;
  std::vector<double> xi;  // a positive point where the network is balanced
};

inline Stoich random_complex(std::mt19937_64& rng, std::size_t ns, int max_total) {
  std::uniform_int_distribution<std::size_t> pick(0, ns - 1);
  std::uniform_int_distribution<int> total(0, max_total);
  Stoich y(ns, 0);
  const int t = total(rng);
  for (int k = 0; k < t; ++k) ++y[pick(rng)];
  return y;
}

// Reversible pairs alpha <-> beta with K_rev = K_fwd xi^alpha / xi^beta, so
// detailed balance holds at xi.
inline RandomNetwork random_detailed_balanced(std::mt19937_64& rng, std::size_t ns, std::size_t pairs,
                                              int max_total = 2, bool conserve_total = false) {
  std::uniform_real_distribution<double> xi_d(0.5, 2.0), k_d(0.5, 2.0);
  std::vector<double> xi(ns);
  for (auto& x : xi) x = xi_d(rng);
  std::vector<std::string> names;
  for (std::size_t i = 0; i < ns; ++i) names.push_back("S" + std::to_string(i));
  std::vector<Reaction> rx;
  while (rx.size() < 2 * pairs) {
    Stoich a = random_complex(rng, ns, max_total), b = random_complex(rng, ns, max_total);
    if (a == b) continue;
    if (conserve_total) {
      int sa = 0, sb = 0;
      for (auto v : a) sa += v;
      for (auto v : b) sb += v;
      if (sa != sb || sa == 0) continue;
    }
    const double kf = k_d(rng);
    const double kr = kf * xi_power(xi, a) / xi_power(xi, b);
    rx.push_back({a, b, kf});
    rx.push_back({b, a, kr});
  }
  return {Network(names, rx, 1), xi};
}

// Detailed-balanced pairs plus one irreversible 3-cycle of complexes with
// equal flux at xi, so complex balance holds at xi without detailed balance.
// With conserve_total the cycle runs over single-species complexes, which
// needs ns >= 3.
inline RandomNetwork random_complex_balanced(std::mt19937_64& rng, std::size_t ns, std::size_t pairs,
                                             bool conserve_total = true) {
  auto base = random_detailed_balanced(rng, ns, pairs, 2, conserve_total);
  std::vector<Reaction> rx(base.net.reactions().begin(), base.net.reactions().end());
  std::uniform_real_distribution<double> j_d(0.5, 2.0);
  std::vector<Stoich> cyc;
  while (cyc.size() < 3) {
    auto y = random_complex(rng, ns, 2);
    int s = 0;
    for (auto v : y) s += v;
    if (conserve_total && s != 1) continue;
    if (std::find(cyc.begin(), cyc.end(), y) == cyc.end()) cyc.push_back(y);
  }
  const double flux = j_d(rng);
  for (std::size_t k = 0; k < 3; ++k) rx.push_back({cyc[k], cyc[(k + 1) % 3], flux / xi_power(base.xi, cyc[k])});
  std::vector<std::string> names(base.net.species().begin(), base.net.species().end());
  return {Network(names, rx, 1), base.xi};
}

// Random entropy problem with a known strictly positive feasible point c0:
// integer constraint rows of full row rank, b = A c0.
struct RandomEntropyProblem {
  std::vector<double> xi;
  Eigen::MatrixXd A;
  Eigen::VectorXd b;
  Eigen::VectorXd c0;
};

inline RandomEntropyProblem random_entropy_problem(std::mt19937_64& rng, int ns, int m) {
  std::uniform_real_distribution<double> pos(0.2, 3.0);
  std::uniform_int_distribution<int> entry(-1, 2);
  RandomEntropyProblem p;
  p.xi.resize(static_cast<std::size_t>(ns));
  for (auto& x : p.xi) x = pos(rng);
  p.c0.resize(ns);
  for (int i = 0; i < ns; ++i) p.c0(i) = pos(rng);
  p.A.resize(m, ns);
  for (;;) {
    for (int r = 0; r < m; ++r)
      for (int j = 0; j < ns; ++j) p.A(r, j) = entry(rng);
    if (Eigen::FullPivLU<Eigen::MatrixXd>(p.A).rank() == m) break;
  }
  p.b = p.A * p.c0;
  return p;
}

// Brute-force oracle: gradient descent on H projected onto the null space of
// A, from the interior point c0, with backtracking that keeps c > 0.
inline double projected_gradient_entropy_min(const RandomEntropyProblem& p, int max_iter = 200000) {
  const auto n = p.c0.size();
  const Eigen::Map<const Eigen::VectorXd> xi(p.xi.data(), n);
  Eigen::MatrixXd P = Eigen::MatrixXd::Identity(n, n);
  if (p.A.rows() > 0) P -= p.A.transpose() * (p.A * p.A.transpose()).ldlt().solve(p.A);
  auto H = [&](const Eigen::VectorXd& c) { return (c.array() * ((c.array() / xi.array()).log() - 1.0)).sum(); };
  Eigen::VectorXd c = p.c0;
  double h = H(c), step = 1.0;
  for (int it = 0; it < max_iter; ++it) {
    const Eigen::VectorXd d = -(P * (c.array() / xi.array()).log().matrix());
    if (d.norm() < 1e-13) break;
    step = std::min(1.0, step * 2.0);
    for (;;) {
      const Eigen::VectorXd trial = c + step * d;
      if ((trial.array() > 0.0).all()) {
        const double ht = H(trial);
        if (ht <= h - 1e-4 * step * d.squaredNorm()) {
          c = trial;
          h = ht;
          break;
        }
      }
      step *= 0.5;
      if (step < 1e-300) return h;
    }
  }
  return h;
}

}  // namespace macrokin::fixture
