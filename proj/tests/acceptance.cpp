// Acceptance run: one PASS/FAIL line per criterion with the measured values.
// Exits 0 once every criterion has been evaluated; pass --strict to exit 1
// when any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "macrokin/macrokin.hpp"
#include "support/fixtures.hpp"

using namespace macrokin;
using macrokin::fixture::ehrenfest;

namespace {

// Tolerances, pinned.
constexpr double kC1MaxAbsError = 1e-10;
constexpr double kC2Residual = 1e-9;
constexpr double kC2IrreversibleMin = 1e-3;
constexpr double kC3Ehrenfest = 1e-10;
constexpr double kC3Kkt = 1e-8;
constexpr double kC3Objective = 1e-6;
constexpr double kC5Lo = 0.8, kC5Hi = 1.1;
constexpr double kC6RtolFactor = 50.0, kC6Rtol = 1e-8;
constexpr double kC6Gap = 1e-6, kC6RelaxMultiple = 10.0;
constexpr double kC7Band = 0.02;
constexpr int kC7MinGood = 99;
constexpr double kC8RelError = 0.10;
constexpr double kC9RtolFactor = 100.0, kC9Closure = 1e-4;
constexpr double kC10Lo = 0.9, kC10Hi = 1.25;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string f6(double x) { return csv::num6(x); }

int failures = 0;

void report(int id, const char* name, const std::function<Outcome()>& run) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = run();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!o.pass) ++failures;
  std::printf("criterion %2d %s  %-28s %s  [%.1fs]\n", id, o.pass ? "PASS" : "FAIL", name, o.detail.c_str(), secs);
  std::fflush(stdout);
}

// 1. Exact stationary law of the two-stone chain at M = 100.
Outcome c1() {
  const int M = 100;
  const auto net = ehrenfest(M);
  const auto sp = enumerate_states(net, State{M, 0}, 1000);
  const auto pi = stationary(build_generator(net, sp));
  double err = 0.0;
  for (int k = 0; k <= M; ++k)
    err = std::max(err, std::abs(pi[sp.find(State{k, M - k}).value()] - fixture::binomial_half(M, k)));
  return {err < kC1MaxAbsError, "max|pi - binom| = " + f6(err) + " (< " + f6(kC1MaxAbsError) + ")"};
}

// Visits every state of the box prod_i [0, hi_i].
void for_box(const std::vector<int>& hi, const std::function<void(const State&)>& fn) {
  State s(std::vector<std::int64_t>(hi.size(), 0));
  for (;;) {
    fn(s);
    std::size_t i = 0;
    while (i < hi.size() && s[i] == hi[i]) s[i++] = 0;
    if (i == hi.size()) return;
    ++s[i];
  }
}

// 2. Product-Poisson invariance on reversible networks; failure on A -> B.
Outcome c2() {
  std::mt19937_64 rng(20240601);
  double worst = 0.0;
  std::size_t probes = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t ns = 2 + trial % 3;
    auto rn = fixture::random_detailed_balanced(rng, ns, 2 + trial % 2);
    const std::int64_t M = 3;
    const auto net = rn.net.with_scale(M);
    const PoissonParams xi(rn.xi);
    std::vector<int> hi(ns);
    const int cap = ns == 4 ? 7 : 10;
    for (std::size_t i = 0; i < ns; ++i) hi[i] = std::min(cap, static_cast<int>(std::ceil(3.0 * M * rn.xi[i])) + 2);
    for_box(hi, [&](const State& n) {
      worst = std::max(worst, std::abs(invariance_residual(net, xi, n)));
      ++probes;
    });
  }
  const auto irr = fixture::irreversible_ab(1.0, 3);
  const PoissonParams ones({1.0, 1.0});
  double irr_max = 0.0;
  for_box({6, 6}, [&](const State& n) { irr_max = std::max(irr_max, std::abs(invariance_residual(irr, ones, n))); });
  const bool ok = worst < kC2Residual && irr_max > kC2IrreversibleMin;
  return {ok, "reversible max|res| = " + f6(worst) + " over " + std::to_string(probes) +
                  " probes (< " + f6(kC2Residual) + "); A->B max|res| = " + f6(irr_max) + " (> " +
                  f6(kC2IrreversibleMin) + ")"};
}

// 3. Boltzmann extremal: Ehrenfest, then random problems against a
// projected-gradient oracle.
Outcome c3() {
  const auto net = ehrenfest(1);
  const std::vector<double> c0{1.0, 0.0};
  const auto ex = boltzmann_extremal(make_entropy_problem(conservation_basis(net), c0, PoissonParams({1.0, 1.0})));
  const double e_err = std::max(std::abs(ex.c_star[0] - 0.5), std::abs(ex.c_star[1] - 0.5));
  std::mt19937_64 rng(7031);
  double kkt = 0.0, obj = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const int ns = 2 + trial % 4;
    const int m = 1 + trial % std::min(ns - 1, 3);
    const auto rp = fixture::random_entropy_problem(rng, ns, m);
    const EntropyProblem p{PoissonParams(rp.xi), rp.A, rp.b};
    const auto x = boltzmann_extremal(p);
    kkt = std::max({kkt, x.optimality_residual, x.feasibility_residual});
    obj = std::max(obj, std::abs(entropy(x.c_star, p.xi) - fixture::projected_gradient_entropy_min(rp)));
  }
  const bool ok = e_err < kC3Ehrenfest && kkt < kC3Kkt && obj < kC3Objective;
  return {ok, "Ehrenfest err = " + f6(e_err) + "; max KKT = " + f6(kkt) + "; max |H - oracle| = " + f6(obj)};
}

// 4. Mode of the exact stationary law against M c*.
Outcome c4() {
  std::string d;
  bool ok = true;
  for (int M : {10, 50, 100}) {
    const auto net = ehrenfest(M);
    const auto sp = enumerate_states(net, State{M, 0}, 1000);
    const auto pi = stationary(build_generator(net, sp));
    const auto arg = static_cast<std::size_t>(std::max_element(pi.prob.begin(), pi.prob.end()) - pi.prob.begin());
    const std::vector<double> c0{1.0, 0.0};
    const auto ex =
        boltzmann_extremal(make_entropy_problem(conservation_basis(net), c0, PoissonParams({1.0, 1.0})));
    const double dist = std::hypot(sp[arg][0] - M * ex.c_star[0], sp[arg][1] - M * ex.c_star[1]);
    ok = ok && dist <= 1.0 / M;
    d += "M=" + std::to_string(M) + ": " + f6(dist) + " ";
  }
  return {ok, d + "(<= 1/M)"};
}

// 5. Concentration of the invariant measure.
Outcome c5() {
  std::vector<std::int64_t> Ms;
  for (int k = 6; k <= 12; ++k) Ms.push_back(std::int64_t{1} << k);
  const std::vector<Concentration> probes{{0.5, 0.5}, {0.25, 0.75}, {0.125, 0.875}};
  const auto tab = concentration_check(ehrenfest(1), PoissonParams({0.5, 0.5}), Ms, probes);
  const double e = tab.decay_exponent;
  return {e >= kC5Lo && e <= kC5Hi, "exponent = " + f6(e) + " (in [" + f6(kC5Lo) + ", " + f6(kC5Hi) + "])"};
}

// 6. Lyapunov descent and convergence to the extremal on random
// complex-balanced networks.
Outcome c6() {
  std::mt19937_64 rng(606);
  std::uniform_real_distribution<double> u(0.2, 2.0);
  double worst_rise = 0.0, worst_gap = 0.0;
  int lyap_bad = 0, gap_bad = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t ns = 3 + trial % 2;
    auto rn = fixture::random_complex_balanced(rng, ns, 2, trial % 2 == 0);
    const PoissonParams xi(rn.xi);
    Concentration c0(ns);
    for (auto& v : c0) v = u(rng);
    const auto tr = integrate(rn.net, c0, 20.0, kC6Rtol, 1e-14);
    const auto ly = lyapunov_along(tr, xi, std::nullopt);
    double scale = 1.0;
    for (auto h : ly.values) scale = std::max(scale, std::abs(h));
    const double rise = ly.max_increase / scale;
    worst_rise = std::max(worst_rise, rise);
    if (ly.max_increase > kC6RtolFactor * kC6Rtol * scale) ++lyap_bad;

    const auto basis = conservation_basis(rn.net);
    const auto ex = boltzmann_extremal(make_entropy_problem(basis, c0, xi));
    const double tau = slowest_relaxation_time(rn.net, ex.c_star, basis);
    const auto gap = attractor_gap(rn.net, xi, basis, c0, kC6RelaxMultiple * tau);
    worst_gap = std::max(worst_gap, gap.gap);
    if (!(gap.gap < kC6Gap)) ++gap_bad;
  }
  return {lyap_bad == 0 && gap_bad == 0, "max relative H rise = " + f6(worst_rise) + " (" +
                                             std::to_string(lyap_bad) + " bad); max gap at 10 tau = " +
                                             f6(worst_gap) + " (" + std::to_string(gap_bad) + "/20 >= " +
                                             f6(kC6Gap) + ")"};
}

// 7. A single SSA path at M = 1e4 follows the quasi-mean ODE.
Outcome c7() {
  const std::int64_t M = 10000;
  const double lam = 1.0, t_end = 5.0 / lam;
  const auto net = ehrenfest(M, lam);
  const auto ode = integrate(ehrenfest(1, lam), {1.0, 0.0}, t_end, 1e-10, 1e-14);
  std::vector<int> good(100, 0);
  std::vector<double> sup(100, 0.0);
  parallel_for(100, [&](std::size_t run) {
    const auto tr = simulate(net, State{M, 0}, t_end, RngSeed{7, run});
    double worst = 0.0;
    double held = 1.0, from = 0.0;
    auto check = [&](double t) { worst = std::max(worst, std::abs(held - ode.at(t)[0])); };
    std::int64_t a = M;
    for (std::size_t k = 0; k < tr.times.size(); ++k) {
      check(from);
      check(tr.times[k]);  // left limit, before the jump
      a += tr.reactions[k] == 0 ? -1 : 1;
      held = static_cast<double>(a) / static_cast<double>(M);
      from = tr.times[k];
    }
    check(from);
    check(t_end);
    sup[run] = worst;
    good[run] = worst <= kC7Band;
  });
  int n_good = 0;
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    n_good += good[static_cast<std::size_t>(i)];
    worst = std::max(worst, sup[static_cast<std::size_t>(i)]);
  }
  return {n_good >= kC7MinGood, std::to_string(n_good) + "/100 runs within " + f6(kC7Band) +
                                    " (need >= " + std::to_string(kC7MinGood) + "); worst sup = " + f6(worst)};
}

// 8. Mean return time to (10, 0).
Outcome c8() {
  const int M = 10;
  const auto net = ehrenfest(M, 1.0);
  const double target = std::pow(2.0, M) / M;
  const auto est = mean_return_time(net, State{M, 0}, 2000, 1e6, RngSeed{42, 0});
  const auto sp = enumerate_states(net, State{M, 0}, 100);
  const double fp = expected_return_time(build_generator(net, sp), sp.find(State{M, 0}).value());
  const double rel = std::abs(est.mean - target) / target;
  const double fp_rel = std::abs(fp - target) / target;
  const bool ok = est.available && est.censored == 0 && rel < kC8RelError && fp_rel < 1e-9;
  return {ok, "SSA mean = " + f6(est.mean) + " +- " + f6(est.half_width) + " (" + std::to_string(est.censored) +
                  " censored, rel err " + f6(rel) + " < " + f6(kC8RelError) + "); first-passage = " + f6(fp) +
                  " vs " + f6(target)};
}

// 9. Lotka-Volterra: first integral, orbit closure, stochastic extinction.
Outcome c9() {
  const auto net = fixture::lotka_volterra(1, 1, 1);
  const auto lv = *match_lotka_volterra(net);
  const double rtol = 1e-10;
  const auto tr = integrate(net, {1.0, 0.5}, 50.0, rtol, 1e-14);
  const double v0 = lv_first_integral(tr.states.front(), lv);
  double drift = 0.0;
  for (const auto& c : tr.states) drift = std::max(drift, std::abs(lv_first_integral(c, lv) - v0));
  const double drift_tol = kC9RtolFactor * rtol * std::max(1.0, std::abs(v0));
  const auto ret = first_section_return(tr);
  const double closure = ret ? ret->closure : std::numeric_limits<double>::infinity();

  const std::int64_t M = 50;
  const auto snet = fixture::lotka_volterra(1, 1, 1, M);
  std::vector<int> extinct(200, 0);
  parallel_for(200, [&](std::size_t run) {
    const auto t = simulate(snet, State{50, 25}, 500.0, RngSeed{9, run}, {RateUpdate::incremental, 50'000'000, true});
    extinct[run] = t.reason == StopReason::absorbed || t.reason == StopReason::boundary_trap;
  });
  int n_ext = 0;
  for (auto e : extinct) n_ext += e;
  const bool ok = drift < drift_tol && closure < kC9Closure && n_ext >= 1;
  return {ok, "integral drift = " + f6(drift) + " (< " + f6(drift_tol) + "); period = " +
                  f6(ret ? ret->period : 0.0) + ", closure = " + f6(closure) + " (< " + f6(kC9Closure) +
                  "); extinctions = " + std::to_string(n_ext) + "/200"};
}

// 10. Events until the occupation fraction enters |x - 1/2| < 0.05.
Outcome c10() {
  std::vector<std::int64_t> Ms;
  for (int k = 4; k <= 10; ++k) Ms.push_back(std::int64_t{1} << k);
  const auto res = mixing_scaling(ehrenfest(1), 0, 0.5, 0.05, Ms, [](std::int64_t M) { return State{M, 0}; }, 2000,
                                  RngSeed{10, 0});
  const double e = res.exponent_over_log;
  return {e >= kC10Lo && e <= kC10Hi, "exponent after ln M division = " + f6(e) + " (in [" + f6(kC10Lo) + ", " +
                                          f6(kC10Hi) + "]); raw exponent = " + f6(res.raw_exponent)};
}

}  // namespace

int main(int argc, char** argv) {
  const bool strict = argc > 1 && std::strcmp(argv[1], "--strict") == 0;
  report(1, "ehrenfest-stationary", c1);
  report(2, "poisson-invariance", c2);
  report(3, "boltzmann-extremal", c3);
  report(4, "mode-consistency", c4);
  report(5, "concentration", c5);
  report(6, "lyapunov-descent", c6);
  report(7, "quasi-mean-limit", c7);
  report(8, "return-time", c8);
  report(9, "lotka-volterra", c9);
  report(10, "mixing-scaling", c10);
  std::printf("acceptance: %d/10 criteria pass\n", 10 - failures);
  return strict && failures > 0 ? 1 : 0;
}
