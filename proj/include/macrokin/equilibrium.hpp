#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "macrokin/csv.hpp"
#include "macrokin/errors.hpp"
#include "macrokin/master_eq.hpp"
#include "macrokin/model.hpp"
#include "macrokin/parallel.hpp"
#include "macrokin/rng.hpp"
#include "macrokin/stats.hpp"

namespace macrokin {

// xi^y = prod_j xi_j^{y_j}
inline double monomial(std::span<const double> xi, const Stoich& y) {
  double p = 1.0;
  for (std::size_t j = 0; j < y.size(); ++j)
    if (y[j] != 0) p *= std::pow(xi[j], y[j]);
  return p;
}

// Distinct complexes (reactant and product sides) in order of first
// appearance, reactant before product within a reaction.
inline std::vector<Stoich> complexes(const Network& net) {
  std::vector<Stoich> out;
  auto add = [&](const Stoich& y) {
    if (std::find(out.begin(), out.end(), y) == out.end()) out.push_back(y);
  };
  for (const auto& r : net.reactions()) {
    add(r.alpha);
    add(r.beta);
  }
  return out;
}

namespace detail {

inline double relative(double a, double b) {
  const double scale = std::max(std::abs(a), std::abs(b));
  return scale == 0.0 ? 0.0 : std::abs(a - b) / scale;
}

}  // namespace detail

// --------------------------------------------------------------------------
// Detailed balance

struct ReactionPair {
  Stoich alpha, beta;
  double k_forward = 0.0;  // K for alpha -> beta (summed over duplicates)
  double k_reverse = 0.0;  // K for beta -> alpha, 0 when the network has none
  double forward_flux = 0.0;
  double reverse_flux = 0.0;
  double residual = 0.0;  // forward_flux - reverse_flux
  double relative = 0.0;
};

struct DetailedBalanceReport {
  std::vector<ReactionPair> pairs;
  double max_relative = 0.0;
};

// Per reaction pair: K(alpha->beta) xi^alpha - K(beta->alpha) xi^beta.
inline DetailedBalanceReport check_detailed_balance(const Network& net, const PoissonParams& xi) {
  if (xi.size() != net.num_species()) throw std::invalid_argument("xi dimension mismatch");
  std::vector<std::pair<std::pair<Stoich, Stoich>, double>> keyed;  // insertion order
  for (const auto& r : net.reactions()) {
    auto key = std::make_pair(r.alpha, r.beta);
    auto it = std::find_if(keyed.begin(), keyed.end(), [&](const auto& e) { return e.first == key; });
    if (it == keyed.end()) keyed.emplace_back(std::move(key), r.rate_constant);
    else it->second += r.rate_constant;
  }
  DetailedBalanceReport rep;
  std::vector<bool> used(keyed.size(), false);
  for (std::size_t i = 0; i < keyed.size(); ++i) {
    if (used[i]) continue;
    used[i] = true;
    ReactionPair p;
    p.alpha = keyed[i].first.first;
    p.beta = keyed[i].first.second;
    p.k_forward = keyed[i].second;
    for (std::size_t j = i + 1; j < keyed.size(); ++j) {
      if (!used[j] && keyed[j].first.first == p.beta && keyed[j].first.second == p.alpha) {
        used[j] = true;
        p.k_reverse = keyed[j].second;
        break;
      }
    }
    p.forward_flux = p.k_forward * monomial(xi.xi, p.alpha);
    p.reverse_flux = p.k_reverse * monomial(xi.xi, p.beta);
    p.residual = p.forward_flux - p.reverse_flux;
    p.relative = detail::relative(p.forward_flux, p.reverse_flux);
    rep.max_relative = std::max(rep.max_relative, p.relative);
    rep.pairs.push_back(std::move(p));
  }
  return rep;
}

// --------------------------------------------------------------------------
// Complex balance

struct ComplexBalance {
  Stoich complex;
  double inflow = 0.0;   // sum over a -> y of K xi^a
  double outflow = 0.0;  // xi^y sum over y -> b of K
  double residual = 0.0;
  double relative = 0.0;  // |residual| / max(inflow, outflow)
};

struct SbpReport {
  PoissonParams xi;
  std::vector<ComplexBalance> complexes;
  double max_residual = 0.0;  // max relative residual over complexes
  DetailedBalanceReport detailed;
  bool converged = false;  // set by solve_sbp
  std::size_t iterations = 0;
  std::size_t start_index = 0;
};

// Per-complex flux balance at xi. Every complex of the network is checked,
// including those that only ever appear on one side.
inline SbpReport check_sbp(const Network& net, const PoissonParams& xi) {
  if (xi.size() != net.num_species()) throw std::invalid_argument("xi dimension mismatch");
  SbpReport rep;
  rep.xi = xi;
  for (const auto& y : complexes(net)) {
    ComplexBalance cb;
    cb.complex = y;
    double out_k = 0.0;
    for (const auto& r : net.reactions()) {
      if (r.beta == y) cb.inflow += r.rate_constant * monomial(xi.xi, r.alpha);
      if (r.alpha == y) out_k += r.rate_constant;
    }
    cb.outflow = monomial(xi.xi, y) * out_k;
    cb.residual = cb.inflow - cb.outflow;
    cb.relative = detail::relative(cb.inflow, cb.outflow);
    rep.max_residual = std::max(rep.max_residual, cb.relative);
    rep.complexes.push_back(std::move(cb));
  }
  rep.detailed = check_detailed_balance(net, xi);
  rep.converged = rep.max_residual == 0.0;
  return rep;
}

namespace detail {

// Smooth scale-free residuals F_y(u) = (in - out) / (in + out) with their
// Jacobian in log coordinates u = ln xi.
struct SbpSystem {
  std::vector<Stoich> cx;
  std::vector<std::vector<std::size_t>> in_reactions, out_reactions;
  const Network* net;

  explicit SbpSystem(const Network& n) : net(&n) {
    for (const auto& y : complexes(n)) {
      std::vector<std::size_t> ins, outs;
      double k_total = 0.0;
      for (std::size_t r = 0; r < n.num_reactions(); ++r) {
        const auto& rx = n.reaction(r);
        if (rx.rate_constant <= 0.0) continue;
        if (rx.beta == y) ins.push_back(r);
        if (rx.alpha == y) outs.push_back(r);
        if (rx.beta == y || rx.alpha == y) k_total += rx.rate_constant;
      }
      if (k_total == 0.0) continue;  // balanced for every xi
      cx.push_back(y);
      in_reactions.push_back(std::move(ins));
      out_reactions.push_back(std::move(outs));
    }
  }

  std::size_t rows() const { return cx.size(); }

  void eval(const Eigen::VectorXd& u, Eigen::VectorXd& f, Eigen::MatrixXd& jac) const {
    const auto ns = static_cast<Eigen::Index>(net->num_species());
    f.resize(static_cast<Eigen::Index>(rows()));
    jac.setZero(static_cast<Eigen::Index>(rows()), ns);
    for (std::size_t c = 0; c < rows(); ++c) {
      double in = 0.0, out = 0.0;
      Eigen::VectorXd din = Eigen::VectorXd::Zero(ns), dout = Eigen::VectorXd::Zero(ns);
      for (auto r : in_reactions[c]) {
        const auto& rx = net->reaction(r);
        double lt = std::log(rx.rate_constant);
        for (Eigen::Index j = 0; j < ns; ++j) lt += rx.alpha[static_cast<std::size_t>(j)] * u(j);
        const double t = std::exp(lt);
        in += t;
        for (Eigen::Index j = 0; j < ns; ++j) din(j) += t * rx.alpha[static_cast<std::size_t>(j)];
      }
      double k_out = 0.0;
      for (auto r : out_reactions[c]) k_out += net->reaction(r).rate_constant;
      if (k_out > 0.0) {
        double lt = std::log(k_out);
        for (Eigen::Index j = 0; j < ns; ++j) lt += cx[c][static_cast<std::size_t>(j)] * u(j);
        out = std::exp(lt);
        for (Eigen::Index j = 0; j < ns; ++j) dout(j) = out * cx[c][static_cast<std::size_t>(j)];
      }
      const double s = in + out;
      const auto ci = static_cast<Eigen::Index>(c);
      f(ci) = (in - out) / s;
      jac.row(ci) = ((din - dout) / s - (in - out) * (din + dout) / (s * s)).transpose();
    }
  }
};

struct LmResult {
  Eigen::VectorXd u;
  std::size_t iterations = 0;
  bool finite = true;
};

// Levenberg-Marquardt on 0.5 ||F(u)||^2 with Nielsen damping updates; stops
// once the relative residuals of check_sbp are below tol.
inline LmResult levenberg_marquardt(const Network& net, const SbpSystem& sys, Eigen::VectorXd u, double tol,
                                    std::size_t max_iter) {
  LmResult res;
  Eigen::VectorXd f, f_new;
  Eigen::MatrixXd jac, jac_new;
  sys.eval(u, f, jac);
  if (!f.allFinite()) return {u, 0, false};
  double cost = 0.5 * f.squaredNorm();
  double mu = 1e-3 * std::max(1.0, (jac.transpose() * jac).diagonal().maxCoeff());
  double nu = 2.0;
  auto rel_max = [&](const Eigen::VectorXd& uu) {
    return check_sbp(net, PoissonParams(std::vector<double>(uu.array().exp().begin(), uu.array().exp().end())))
        .max_residual;
  };
  std::size_t it = 0;
  for (; it < max_iter; ++it) {
    if (f.cwiseAbs().maxCoeff() < tol && rel_max(u) < tol) break;
    const Eigen::MatrixXd jtj = jac.transpose() * jac;
    const Eigen::VectorXd g = jac.transpose() * f;
    Eigen::MatrixXd lhs = jtj;
    lhs.diagonal().array() += mu;
    const Eigen::VectorXd step = lhs.ldlt().solve(-g);
    if (!step.allFinite()) return {u, it, false};
    const Eigen::VectorXd u_new = u + step;
    sys.eval(u_new, f_new, jac_new);
    const double cost_new = f_new.allFinite() ? 0.5 * f_new.squaredNorm() : std::numeric_limits<double>::infinity();
    const double predicted = -(g.dot(step) + 0.5 * step.dot(jtj * step));
    const double gain = predicted > 0.0 ? (cost - cost_new) / predicted : -1.0;
    if (gain > 0.0) {
      u = u_new;
      f = f_new;
      jac = jac_new;
      cost = cost_new;
      mu *= std::max(1.0 / 3.0, 1.0 - std::pow(2.0 * gain - 1.0, 3));
      nu = 2.0;
    } else {
      mu *= nu;
      nu *= 2.0;
      if (!std::isfinite(mu) || mu > 1e30) break;
    }
    if (step.norm() < 1e-15 * (1.0 + u.norm()) && gain <= 0.0) break;
  }
  res.u = u;
  res.iterations = it;
  res.finite = u.allFinite();
  return res;
}

}  // namespace detail

// Searches xi > 0 satisfying the complex-balance condition to relative
// residual tol. Damped Gauss-Newton (Levenberg-Marquardt) in u = ln xi from
// n_starts points drawn log-uniformly in [-3, 3]^n; start s uses RNG
// substream s. Returns the best start (lowest residual, then lowest index);
// converged == false marks an infeasible outcome.
inline SbpReport solve_sbp(const Network& net, std::size_t n_starts = 8, double tol = 1e-10, RngSeed seed = {},
                           std::size_t max_iter = 400) {
  if (n_starts == 0) throw std::invalid_argument("need at least one start");
  const detail::SbpSystem sys(net);
  const auto ns = static_cast<Eigen::Index>(net.num_species());
  std::vector<std::optional<SbpReport>> results(n_starts);
  parallel_for(n_starts, [&](std::size_t s) {
    Philox4x32 rng(seed.substream(s));
    Eigen::VectorXd u(ns);
    for (Eigen::Index j = 0; j < ns; ++j) u(j) = -3.0 + 6.0 * rng.uniform();
    auto lm = detail::levenberg_marquardt(net, sys, u, tol, max_iter);
    if (!lm.finite) return;
    std::vector<double> xi(static_cast<std::size_t>(ns));
    for (Eigen::Index j = 0; j < ns; ++j) xi[static_cast<std::size_t>(j)] = std::exp(lm.u(j));
    for (auto x : xi)
      if (!(x > 0.0) || !std::isfinite(x)) return;
    auto rep = check_sbp(net, PoissonParams(std::move(xi)));
    if (!std::isfinite(rep.max_residual)) return;
    rep.iterations = lm.iterations;
    rep.start_index = s;
    rep.converged = rep.max_residual < tol;
    results[s] = std::move(rep);
  });
  std::optional<SbpReport> best;
  for (auto& r : results) {
    if (!r) continue;
    if (!best || r->max_residual < best->max_residual) best = std::move(r);
  }
  if (!best) throw NumericError("every solve_sbp start produced non-finite residuals");
  return *best;
}

// --------------------------------------------------------------------------
// Entropy and the Boltzmann extremal

// H(c) = sum_i c_i (ln(c_i / xi_i) - 1), with 0 ln 0 = 0.
inline double entropy(std::span<const double> c, const PoissonParams& xi) {
  if (c.size() != xi.size()) throw std::invalid_argument("dimension mismatch");
  double h = 0.0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    if (c[i] < 0.0) throw std::invalid_argument("entropy needs c >= 0");
    if (c[i] == 0.0) continue;
    h += c[i] * (std::log(c[i] / xi[i]) - 1.0);
  }
  return h;
}

// Minimize H(c) subject to A c = b, c >= 0.
struct EntropyProblem {
  PoissonParams xi;
  Eigen::MatrixXd A;  // constraints x species, full row rank
  Eigen::VectorXd b;
};

// Builds the problem from integer constraint rows, dropping rows that are
// linearly dependent on earlier ones (exact arithmetic).
inline EntropyProblem make_entropy_problem(const exact::IntMatrix& rows, std::span<const double> b,
                                           const PoissonParams& xi) {
  if (rows.size() != b.size()) throw std::invalid_argument("one right-hand side per constraint row");
  const auto keep = exact::independent_rows(rows, xi.size());
  EntropyProblem p{xi, Eigen::MatrixXd(static_cast<Eigen::Index>(keep.size()), static_cast<Eigen::Index>(xi.size())),
                   Eigen::VectorXd(static_cast<Eigen::Index>(keep.size()))};
  for (std::size_t k = 0; k < keep.size(); ++k) {
    const auto& row = rows[keep[k]];
    if (row.size() != xi.size()) throw std::invalid_argument("constraint row dimension mismatch");
    for (std::size_t j = 0; j < row.size(); ++j)
      p.A(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)) = static_cast<double>(row[j]);
    p.b(static_cast<Eigen::Index>(k)) = b[keep[k]];
  }
  return p;
}

inline EntropyProblem make_entropy_problem(const ConservationBasis& basis, std::span<const double> c0,
                                           const PoissonParams& xi) {
  return make_entropy_problem(basis.rows, invariant_values(basis, c0), xi);
}

struct Extremal {
  std::vector<double> c_star;
  std::vector<double> multipliers;  // ln(c*/xi) = A^T multipliers
  double optimality_residual = 0.0;  // ||ln(c*/xi) - A^T lambda||_inf
  double feasibility_residual = 0.0;  // ||A c* - b||_inf
  double dual_value = 0.0;
  std::size_t iterations = 0;
};

// Concave dual <lambda, b> - sum_i xi_i exp((A^T lambda)_i). Its maximum
// equals min H on the constraint set.
inline double dual_objective(const EntropyProblem& p, const Eigen::VectorXd& lambda) {
  const Eigen::VectorXd xi = Eigen::Map<const Eigen::VectorXd>(p.xi.xi.data(), static_cast<Eigen::Index>(p.xi.size()));
  const Eigen::VectorXd e = (p.A.transpose() * lambda).array().exp();
  return lambda.dot(p.b) - xi.dot(e);
}

// Newton's method on the dual with c(lambda) = xi exp(A^T lambda), Hessian
// A diag(c) A^T and Armijo backtracking. Throws Infeasible when the
// multipliers diverge (b outside the relative interior of {A c : c > 0}).
inline Extremal boltzmann_extremal(const EntropyProblem& p, double tol = 1e-12, std::size_t max_iter = 500) {
  const auto ns = static_cast<Eigen::Index>(p.xi.size());
  const auto m = p.A.rows();
  if (p.A.cols() != ns && m > 0) throw std::invalid_argument("constraint matrix has wrong column count");
  if (p.b.size() != m) throw std::invalid_argument("right-hand side has wrong length");
  if (m > 0) {
    Eigen::FullPivLU<Eigen::MatrixXd> lu(p.A);
    if (lu.rank() < m) throw std::invalid_argument("constraint matrix is rank deficient");
  }
  const Eigen::VectorXd xi = Eigen::Map<const Eigen::VectorXd>(p.xi.xi.data(), ns);

  Eigen::VectorXd lambda = Eigen::VectorXd::Zero(m);
  auto conc = [&](const Eigen::VectorXd& l) -> Eigen::VectorXd {
    return (xi.array() * (p.A.transpose() * l).array().exp()).matrix();
  };
  Eigen::VectorXd c = conc(lambda);
  const double scale = std::max(1.0, m > 0 ? p.b.cwiseAbs().maxCoeff() : 0.0);
  std::size_t it = 0;
  for (; m > 0; ++it) {
    const Eigen::VectorXd grad = p.b - p.A * c;
    if (grad.cwiseAbs().maxCoeff() <= tol * scale) break;
    if (it >= max_iter) throw Infeasible("dual Newton did not converge; b is likely outside the moment cone", grad.cwiseAbs().maxCoeff());
    const Eigen::MatrixXd hess = p.A * c.asDiagonal() * p.A.transpose();
    const Eigen::VectorXd dir = hess.ldlt().solve(grad);
    if (!dir.allFinite()) throw Infeasible("singular dual Hessian; b is on the boundary of the moment cone", grad.cwiseAbs().maxCoeff());
    const double g0 = dual_objective(p, lambda);
    const double slope = grad.dot(dir);
    double t = 1.0;
    Eigen::VectorXd trial;
    for (int ls = 0;; ++ls) {
      trial = lambda + t * dir;
      const double g1 = dual_objective(p, trial);
      if (std::isfinite(g1) && g1 >= g0 + 1e-4 * t * slope) break;
      // Near the optimum the Armijo test is lost in rounding; accept full
      // steps that still shrink the constraint residual.
      if (std::isfinite(g1) && ls == 0 && (p.b - p.A * conc(trial)).cwiseAbs().maxCoeff() < grad.cwiseAbs().maxCoeff() &&
          std::abs(g1 - g0) <= 1e-12 * std::max(1.0, std::abs(g0)))
        break;
      t *= 0.5;
      if (ls > 60) throw Infeasible("dual line search failed", grad.cwiseAbs().maxCoeff());
    }
    lambda = trial;
    if (lambda.cwiseAbs().maxCoeff() > 700.0)
      throw Infeasible("dual multipliers diverge; b is outside the relative interior of the moment cone",
                       grad.cwiseAbs().maxCoeff());
    c = conc(lambda);
  }

  Extremal ex;
  ex.c_star.assign(c.data(), c.data() + ns);
  ex.multipliers.assign(lambda.data(), lambda.data() + m);
  const Eigen::VectorXd at_l = m > 0 ? Eigen::VectorXd(p.A.transpose() * lambda) : Eigen::VectorXd::Zero(ns);
  ex.optimality_residual = ((c.array() / xi.array()).log() - at_l.array()).abs().maxCoeff();
  ex.feasibility_residual = m > 0 ? (p.A * c - p.b).cwiseAbs().maxCoeff() : 0.0;
  ex.dual_value = dual_objective(p, lambda);
  ex.iterations = it;
  return ex;
}

// --------------------------------------------------------------------------
// Concentration of the invariant measure

struct ConcentrationRow {
  std::int64_t M = 0;
  double max_delta = 0.0;
  std::size_t worst_probe = 0;
};

struct ConcentrationTable {
  std::vector<ConcentrationRow> rows;
  // Negated slope of ln(delta / ln M) against ln M over rows with M > 1;
  // 1 means delta = O(ln M / M). NaN when fewer than two such rows.
  double decay_exponent = std::numeric_limits<double>::quiet_NaN();
};

// delta(n, M) = | -ln nu(n) / M - H(n / M) - sum_i xi_i | with nu the
// product-Poisson measure of means xi_i M, at n = round(c M) for each probe
// concentration c.
inline ConcentrationTable concentration_check(const Network& net, const PoissonParams& xi,
                                              std::span<const std::int64_t> M_list,
                                              std::span<const Concentration> probes) {
  if (probes.empty()) throw std::invalid_argument("need at least one probe concentration");
  double sum_xi = 0.0;
  for (auto x : xi.xi) sum_xi += x;
  ConcentrationTable tab;
  std::vector<double> lx, ly;
  for (auto M : M_list) {
    if (M < 1) throw std::invalid_argument("M must be >= 1");
    const Network scaled = net.with_scale(M);
    const double Md = static_cast<double>(M);
    ConcentrationRow row{M, 0.0, 0};
    for (std::size_t k = 0; k < probes.size(); ++k) {
      const auto& c = probes[k];
      if (c.size() != xi.size()) throw std::invalid_argument("probe dimension mismatch");
      State n(std::vector<std::int64_t>(c.size()));
      std::vector<double> cn(c.size());
      for (std::size_t i = 0; i < c.size(); ++i) {
        n[i] = std::llround(c[i] * Md);
        cn[i] = static_cast<double>(n[i]) / Md;
      }
      const double delta = std::abs(-log_poisson_weight(scaled, xi, n) / Md - entropy(cn, xi) - sum_xi);
      if (delta > row.max_delta || k == 0) {
        row.max_delta = delta;
        row.worst_probe = k;
      }
    }
    tab.rows.push_back(row);
    if (M > 1 && row.max_delta > 0.0) {
      lx.push_back(std::log(Md));
      ly.push_back(std::log(row.max_delta / std::log(Md)));
    }
  }
  if (lx.size() >= 2) tab.decay_exponent = -stats::fit_line(lx, ly).slope;
  return tab;
}

// --------------------------------------------------------------------------
// Reports

inline std::string complex_label(const Network& net, const Stoich& y) { return detail::render_side(net, y); }

// complex,inflow,outflow,residual,relative
inline std::string sbp_csv(const Network& net, const SbpReport& rep) {
  std::string out = "complex,inflow,outflow,residual,relative\n";
  for (const auto& c : rep.complexes) {
    out += complex_label(net, c.complex) + "," + csv::num(c.inflow) + "," + csv::num(c.outflow) + "," +
           csv::num(c.residual) + "," + csv::num(c.relative) + "\n";
  }
  return out;
}

// species,xi,c_star,multiplier rows: one row per species, then one
// multiplier row per constraint (species column `lambda_<k>`).
inline std::string extremal_csv(const Network& net, const PoissonParams& xi, const Extremal& ex) {
  std::string out = "name,xi,c_star,multiplier\n";
  for (std::size_t i = 0; i < net.num_species(); ++i)
    out += std::string(net.species()[i]) + "," + csv::num(xi[i]) + "," + csv::num(ex.c_star[i]) + ",\n";
  for (std::size_t k = 0; k < ex.multipliers.size(); ++k)
    out += "lambda_" + std::to_string(k) + ",,," + csv::num(ex.multipliers[k]) + "\n";
  return out;
}

}  // namespace macrokin
