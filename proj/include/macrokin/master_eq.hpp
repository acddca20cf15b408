#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <deque>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include "macrokin/csv.hpp"
#include "macrokin/errors.hpp"
#include "macrokin/model.hpp"

namespace macrokin {

// Finite set of states closed under the jump relation of a network.
class StateSpace {
 public:
  StateSpace() = default;
  explicit StateSpace(std::vector<State> states) : states_(std::move(states)) {
    index_.reserve(states_.size());
    for (std::size_t i = 0; i < states_.size(); ++i) {
      if (!index_.emplace(states_[i], i).second)
        throw std::invalid_argument("duplicate state in state space");
    }
  }

  std::size_t size() const { return states_.size(); }
  const State& operator[](std::size_t i) const { return states_[i]; }
  std::span<const State> states() const { return states_; }

  std::optional<std::size_t> find(const State& s) const {
    auto it = index_.find(s);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

 private:
  std::vector<State> states_;
  std::unordered_map<State, std::size_t, StateHash> index_;
};

// Breadth-first closure of n0 under reactions with K > 0. States are ordered
// by BFS layer, lexicographically within a layer. Throws Truncated if the
// closure has more than `cap` states.
inline StateSpace enumerate_states(const Network& net, const State& n0, std::size_t cap) {
  if (n0.size() != net.num_species()) throw std::invalid_argument("initial state dimension mismatch");
  for (auto v : n0.counts)
    if (v < 0) throw std::invalid_argument("initial state has a negative count");
  if (cap == 0) throw Truncated(cap);

  std::vector<State> order{n0};
  std::unordered_map<State, bool, StateHash> seen{{n0, true}};
  std::vector<State> layer{n0};
  while (!layer.empty()) {
    std::vector<State> next;
    for (const auto& s : layer) {
      for (std::size_t r = 0; r < net.num_reactions(); ++r) {
        if (intensity(net, s, r) <= 0.0) continue;
        auto m = apply(net.reaction(r), s);
        if (!m || seen.contains(*m)) continue;
        seen.emplace(*m, true);
        next.push_back(std::move(*m));
        if (seen.size() > cap) throw Truncated(cap);
      }
    }
    std::sort(next.begin(), next.end());
    order.insert(order.end(), next.begin(), next.end());
    layer = std::move(next);
  }
  return StateSpace(std::move(order));
}

// Infinitesimal generator: off-diagonal jump rates q(i -> j) >= 0 and a
// diagonal equal to minus the row sum.
struct Generator {
  Eigen::SparseMatrix<double, Eigen::RowMajor> q;

  std::size_t dimension() const { return static_cast<std::size_t>(q.rows()); }

  double exit_rate(std::size_t i) const { return -q.coeff(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)); }

  double max_exit_rate() const {
    double m = 0.0;
    for (std::size_t i = 0; i < dimension(); ++i) m = std::max(m, exit_rate(i));
    return m;
  }

  // Maximum absolute row sum.
  double inf_norm() const { return 2.0 * max_exit_rate(); }
};

inline Generator build_generator(const Network& net, const StateSpace& space) {
  using Index = Eigen::Index;
  const auto n = static_cast<Index>(space.size());
  std::vector<Eigen::Triplet<double, Index>> trips;
  for (std::size_t i = 0; i < space.size(); ++i) {
    std::vector<std::pair<std::size_t, double>> row;
    for (std::size_t r = 0; r < net.num_reactions(); ++r) {
      const double rate = intensity(net, space[i], r);
      if (rate <= 0.0) continue;
      auto m = apply(net.reaction(r), space[i]);
      auto j = m ? space.find(*m) : std::nullopt;
      if (!j) throw Truncated(space.size());
      row.emplace_back(*j, rate);
    }
    std::sort(row.begin(), row.end());
    double total = 0.0;
    for (std::size_t k = 0; k < row.size();) {
      const auto col = row[k].first;
      double rate = 0.0;
      for (; k < row.size() && row[k].first == col; ++k) rate += row[k].second;
      total += rate;
      trips.emplace_back(static_cast<Index>(i), static_cast<Index>(col), rate);
    }
    trips.emplace_back(static_cast<Index>(i), static_cast<Index>(i), -total);
  }
  Generator g;
  g.q.resize(n, n);
  g.q.setFromTriplets(trips.begin(), trips.end());
  g.q.makeCompressed();
  return g;
}

struct Distribution {
  std::vector<double> prob;

  std::size_t size() const { return prob.size(); }
  double operator[](std::size_t i) const { return prob[i]; }
};

inline Distribution point_mass(std::size_t dim, std::size_t at) {
  Distribution d{std::vector<double>(dim, 0.0)};
  d.prob.at(at) = 1.0;
  return d;
}

namespace detail {

// y = x^T Q
inline void left_multiply(const Generator& g, std::span<const double> x, std::span<double> y) {
  std::fill(y.begin(), y.end(), 0.0);
  for (Eigen::Index i = 0; i < g.q.outerSize(); ++i) {
    const double xi = x[static_cast<std::size_t>(i)];
    if (xi == 0.0) continue;
    for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(g.q, i); it; ++it)
      y[static_cast<std::size_t>(it.col())] += xi * it.value();
  }
}

inline void normalize(std::vector<double>& p) {
  for (auto& v : p)
    if (v < 0.0) v = 0.0;
  const double s = std::accumulate(p.begin(), p.end(), 0.0);
  if (!(s > 0.0) || !std::isfinite(s)) throw NumericError("distribution lost all mass");
  for (auto& v : p) v /= s;
}

inline bool reaches_all(const Generator& g, bool transpose) {
  const auto n = g.dimension();
  std::vector<std::vector<std::size_t>> adj(n);
  for (Eigen::Index i = 0; i < g.q.outerSize(); ++i) {
    for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(g.q, i); it; ++it) {
      if (it.col() == i || it.value() <= 0.0) continue;
      const auto a = static_cast<std::size_t>(i), b = static_cast<std::size_t>(it.col());
      if (transpose) adj[b].push_back(a);
      else adj[a].push_back(b);
    }
  }
  std::vector<bool> seen(n, false);
  std::deque<std::size_t> queue{0};
  seen[0] = true;
  std::size_t count = 1;
  while (!queue.empty()) {
    auto v = queue.front();
    queue.pop_front();
    for (auto w : adj[v]) {
      if (!seen[w]) {
        seen[w] = true;
        ++count;
        queue.push_back(w);
      }
    }
  }
  return count == n;
}

}  // namespace detail

// Strong connectivity of the positive-rate digraph.
inline bool is_ergodic(const Generator& g) {
  if (g.dimension() <= 1) return true;
  return detail::reaches_all(g, false) && detail::reaches_all(g, true);
}

// p(t) for dp^T/dt = p^T Q by uniformization: p(t) = sum_k Pois(k; L t) p0 P^k
// with P = I + Q / L and L = 1.05 max exit rate. The Poisson series is cut
// once the remaining tail mass is below tol.
inline Distribution evolve(const Generator& g, const Distribution& p0, double t, double tol = 1e-12) {
  if (p0.size() != g.dimension()) throw std::invalid_argument("distribution dimension mismatch");
  if (!(t >= 0.0)) throw std::invalid_argument("evolve needs t >= 0");
  if (!(tol > 0.0)) throw std::invalid_argument("evolve needs tol > 0");
  if (t == 0.0) return p0;
  const double unif = 1.05 * g.max_exit_rate();
  if (unif == 0.0) return p0;

  const double mu = unif * t;
  constexpr double kMaxTerms = 5e7;
  if (mu > kMaxTerms) throw NumericError("uniformization needs too many terms (rate * t = " + std::to_string(mu) + ")");

  const auto n = g.dimension();
  std::vector<double> v = p0.prob, vq(n), out(n, 0.0);
  const double log_mu = std::log(mu);
  for (std::size_t k = 0;; ++k) {
    const double kd = static_cast<double>(k);
    const double w = std::exp(kd * log_mu - mu - std::lgamma(kd + 1.0));
    if (w > 0.0)
      for (std::size_t i = 0; i < n; ++i) out[i] += w * v[i];
    if (kd > mu) {
      // Geometric bound on the Poisson tail beyond k.
      const double ratio = mu / (kd + 1.0);
      if (w * ratio / (1.0 - ratio) < tol) break;
    }
    if (kd > mu + 50.0 * std::sqrt(mu) + 1000.0) throw NumericError("uniformization series did not converge");
    detail::left_multiply(g, v, vq);
    for (std::size_t i = 0; i < n; ++i) v[i] += vq[i] / unif;
  }
  detail::normalize(out);
  return Distribution{std::move(out)};
}

// ||pi^T Q||_inf
inline double stationary_residual(const Generator& g, const Distribution& pi) {
  std::vector<double> r(g.dimension());
  detail::left_multiply(g, pi.prob, r);
  double m = 0.0;
  for (auto v : r) m = std::max(m, std::abs(v));
  return m;
}

// Unique pi with pi^T Q = 0, sum pi = 1. Direct sparse LU with one balance
// equation replaced by normalization; power iteration on the uniformized
// chain above kDirectLimit states.
inline Distribution stationary(const Generator& g) {
  constexpr std::size_t kDirectLimit = 20000;
  const auto n = g.dimension();
  if (n == 0) throw std::invalid_argument("empty generator");
  if (n == 1) return Distribution{{1.0}};
  if (!is_ergodic(g)) throw NotErgodic("rate graph is not strongly connected; stationary law is not unique");

  if (n > kDirectLimit) {
    const double unif = 1.05 * g.max_exit_rate();
    std::vector<double> pi(n, 1.0 / static_cast<double>(n)), pq(n);
    for (int it = 0; it < 10'000'000; ++it) {
      detail::left_multiply(g, pi, pq);
      double change = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double d = pq[i] / unif;
        pi[i] += d;
        change += std::abs(d);
      }
      if (change < 1e-15) break;
    }
    detail::normalize(pi);
    return Distribution{std::move(pi)};
  }

  using Index = Eigen::Index;
  const auto last = static_cast<Index>(n - 1);
  std::vector<Eigen::Triplet<double, Index>> trips;
  for (Index i = 0; i < g.q.outerSize(); ++i) {
    for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(g.q, i); it; ++it) {
      if (it.col() == last) continue;  // row `last` of Q^T becomes all ones
      trips.emplace_back(it.col(), i, it.value());
    }
  }
  for (Index j = 0; j <= last; ++j) trips.emplace_back(last, j, 1.0);
  Eigen::SparseMatrix<double> a(static_cast<Index>(n), static_cast<Index>(n));
  a.setFromTriplets(trips.begin(), trips.end());
  a.makeCompressed();

  Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu;
  lu.compute(a);
  if (lu.info() != Eigen::Success) throw NumericError("sparse LU factorization failed");
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(static_cast<Index>(n));
  rhs(last) = 1.0;
  Eigen::VectorXd x = lu.solve(rhs);
  // One step of iterative refinement.
  Eigen::VectorXd corr = lu.solve(rhs - a * x);
  x += corr;

  std::vector<double> pi(x.data(), x.data() + n);
  for (auto v : pi)
    if (!std::isfinite(v)) throw NumericError("stationary solve produced non-finite values");
  detail::normalize(pi);
  return Distribution{std::move(pi)};
}

// Expected return time to `target`: holding time there plus the mean
// first-passage time back from the state it jumps to. Solves the hitting-time
// equations sum_y Q(x, y) h(y) = -1, h(target) = 0.
inline double expected_return_time(const Generator& g, std::size_t target) {
  const auto n = g.dimension();
  if (target >= n) throw std::out_of_range("target index");
  const double q_out = g.exit_rate(target);
  if (q_out <= 0.0) throw NotErgodic("target state is absorbing");
  if (!is_ergodic(g)) throw NotErgodic("rate graph is not strongly connected");
  if (n == 1) return 1.0 / q_out;

  using Index = Eigen::Index;
  auto reduced = [target](Index i) { return i < static_cast<Index>(target) ? i : i - 1; };
  std::vector<Eigen::Triplet<double, Index>> trips;
  for (Index i = 0; i < g.q.outerSize(); ++i) {
    if (i == static_cast<Index>(target)) continue;
    for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(g.q, i); it; ++it) {
      if (it.col() == static_cast<Index>(target)) continue;
      trips.emplace_back(reduced(i), reduced(it.col()), it.value());
    }
  }
  const auto m = static_cast<Index>(n - 1);
  Eigen::SparseMatrix<double> a(m, m);
  a.setFromTriplets(trips.begin(), trips.end());
  Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu;
  lu.compute(a);
  if (lu.info() != Eigen::Success) throw NumericError("first-passage factorization failed");
  Eigen::VectorXd h = lu.solve(Eigen::VectorXd::Constant(m, -1.0));

  double mean = 1.0 / q_out;
  for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(g.q, static_cast<Index>(target)); it; ++it) {
    if (it.col() == static_cast<Index>(target)) continue;
    mean += it.value() / q_out * h(reduced(it.col()));
  }
  return mean;
}

// Candidate invariant measure: product of Poisson laws with means xi_i * M.
struct PoissonParams {
  std::vector<double> xi;

  PoissonParams() = default;
  explicit PoissonParams(std::vector<double> v) : xi(std::move(v)) {
    for (auto x : xi)
      if (!(x > 0.0) || !std::isfinite(x)) throw std::invalid_argument("Poisson parameters must be positive");
  }

  std::size_t size() const { return xi.size(); }
  double operator[](std::size_t i) const { return xi[i]; }
};

// ln nu(n) for the product-Poisson measure with means xi_i M.
inline double log_poisson_weight(const Network& net, const PoissonParams& xi, const State& n) {
  const double M = static_cast<double>(net.scale());
  double s = 0.0;
  for (std::size_t i = 0; i < n.size(); ++i) {
    const double lam = xi[i] * M;
    const double k = static_cast<double>(n[i]);
    s += k * std::log(lam) - lam - std::lgamma(k + 1.0);
  }
  return s;
}

// Pointwise flux balance of nu at n, divided by nu(n):
//   sum_r lambda_r(n + alpha - beta) nu(n + alpha - beta) / nu(n) - sum_r lambda_r(n).
// Zero for every n iff nu is invariant. The weight ratio is accumulated in
// log space from the few factorial factors that differ, so no factorial is
// ever formed.
inline double invariance_residual(const Network& net, const PoissonParams& xi, const State& n) {
  if (xi.size() != net.num_species() || n.size() != net.num_species())
    throw std::invalid_argument("dimension mismatch");
  const double M = static_cast<double>(net.scale());
  double inflow = 0.0, outflow = 0.0;
  for (std::size_t r = 0; r < net.num_reactions(); ++r) {
    const auto& rx = net.reaction(r);
    outflow += intensity(net, n, r);

    State pre = n;
    bool valid = true;
    double log_ratio = 0.0;
    for (std::size_t i = 0; i < n.size(); ++i) {
      pre[i] = n[i] + rx.alpha[i] - rx.beta[i];
      if (pre[i] < 0) {
        valid = false;
        break;
      }
      const auto d = pre[i] - n[i];
      log_ratio += static_cast<double>(d) * std::log(xi[i] * M);
      for (auto k = n[i] + 1; k <= pre[i]; ++k) log_ratio -= std::log(static_cast<double>(k));
      for (auto k = pre[i] + 1; k <= n[i]; ++k) log_ratio += std::log(static_cast<double>(k));
    }
    if (!valid) continue;
    const double rate = intensity(net, pre, r);
    if (rate > 0.0) inflow += rate * std::exp(log_ratio);
  }
  return inflow - outflow;
}

// CSV with columns state_<species>..., prob.
inline std::string distribution_csv(const Network& net, const StateSpace& space, const Distribution& d) {
  std::string out;
  for (const auto& s : net.species()) out += "state_" + s + ",";
  out += "prob\n";
  for (std::size_t i = 0; i < space.size(); ++i) {
    for (auto v : space[i].counts) out += std::to_string(v) + ",";
    out += csv::num(d[i]) + "\n";
  }
  return out;
}

}  // namespace macrokin
