// macrokin command-line front end.
//
// Exit codes: 0 ok, 1 usage or I/O error, 2 parse error, 3 infeasible or
// not ergodic, 4 numeric failure, 5 state-space truncation.

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "macrokin/macrokin.hpp"

namespace fs = std::filesystem;
using namespace macrokin;

namespace {

struct RunConfig {
  std::string model_path;
  std::string out_dir = ".";
  std::uint64_t seed = 42;
  std::optional<double> tol;
  std::optional<double> t_end;
  std::optional<std::size_t> samples;
  std::size_t cap = 200000;
  std::optional<std::int64_t> M;
};

std::string g6(double x) { return csv::num6(x); }

std::string read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read model file " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

// Loads the model; --M rescales the network and the initial counts in
// proportion (rounded to nearest).
Model load(const RunConfig& cfg) {
  Model m = parse_model(read_file(cfg.model_path));
  if (cfg.M && *cfg.M != m.network.scale()) {
    if (*cfg.M < 1) throw std::invalid_argument("--M must be >= 1");
    const double f = static_cast<double>(*cfg.M) / static_cast<double>(m.network.scale());
    for (auto& v : m.init.counts) v = std::llround(static_cast<double>(v) * f);
    m.network = m.network.with_scale(*cfg.M);
  }
  return m;
}

Concentration initial_concentration(const Model& m) {
  Concentration c(m.init.size());
  for (std::size_t i = 0; i < c.size(); ++i)
    c[i] = static_cast<double>(m.init[i]) / static_cast<double>(m.network.scale());
  return c;
}

void write_out(const RunConfig& cfg, const std::string& name, const std::string& content) {
  fs::create_directories(cfg.out_dir);
  csv::write_atomic(fs::path(cfg.out_dir) / name, content);
  std::cout << "wrote " << name << "\n";
}

std::string state_str(const State& s) {
  std::string out = "(";
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? ", " : "") + std::to_string(s[i]);
  return out + ")";
}

std::string vec_str(std::span<const double> v) {
  std::string out = "(";
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ", " : "") + g6(v[i]);
  return out + ")";
}

void print_header(const Model& m) {
  const auto& net = m.network;
  std::cout << "species:";
  for (const auto& s : net.species()) std::cout << " " << s;
  std::cout << "\nscale M = " << net.scale() << "\n";
  std::cout << "init " << state_str(m.init) << "\n";
}

int cmd_analyze(const RunConfig& cfg) {
  const auto m = load(cfg);
  const auto& net = m.network;
  print_header(m);
  std::cout << "reactions:\n";
  for (std::size_t r = 0; r < net.num_reactions(); ++r)
    std::cout << "  [" << r << "] " << describe_reaction(net, r) << "  K=" << g6(net.reaction(r).rate_constant)
              << "\n";
  const auto basis = conservation_basis(net);
  const auto inv = invariant_counts(basis, m.init);
  std::string csv_out = "row";
  for (const auto& s : net.species()) csv_out += ",mu_" + s;
  csv_out += ",invariant\n";
  if (basis.empty()) {
    std::cout << "no linear conservation laws\n";
  } else {
    std::cout << "conservation basis (rank " << basis.rank() << "):\n";
    for (std::size_t k = 0; k < basis.rank(); ++k) {
      std::cout << "  mu" << k << " = (";
      csv_out += std::to_string(k);
      for (std::size_t j = 0; j < basis.rows[k].size(); ++j) {
        std::cout << (j ? ", " : "") << basis.rows[k][j];
        csv_out += "," + std::to_string(basis.rows[k][j]);
      }
      std::cout << ")  <mu, n0> = " << inv[k] << "\n";
      csv_out += "," + std::to_string(inv[k]) + "\n";
    }
  }
  write_out(cfg, "analyze.csv", csv_out);
  return 0;
}

int cmd_equilibrium(const RunConfig& cfg) {
  const auto m = load(cfg);
  const auto& net = m.network;
  const double tol = cfg.tol.value_or(1e-10);
  const auto rep = solve_sbp(net, 8, tol, RngSeed{cfg.seed, 0});
  write_out(cfg, "sbp.csv", sbp_csv(net, rep));
  if (!rep.converged) {
    std::cout << "complex balance: INFEASIBLE, best relative residual " << g6(rep.max_residual) << " (tol "
              << g6(tol) << ")\n";
    return 3;
  }
  std::cout << "complex balance: xi = " << vec_str(rep.xi.xi) << ", max relative residual "
            << g6(rep.max_residual) << "\n";
  std::cout << "detailed balance: max relative residual " << g6(rep.detailed.max_relative)
            << (rep.detailed.max_relative < tol ? " (holds)" : " (does not hold)") << "\n";
  const auto c0 = initial_concentration(m);
  const auto ex = boltzmann_extremal(make_entropy_problem(conservation_basis(net), c0, rep.xi));
  std::cout << "extremal c* = " << vec_str(ex.c_star) << "\n";
  std::cout << "multipliers = " << vec_str(ex.multipliers) << "\n";
  std::cout << "KKT residuals: optimality " << g6(ex.optimality_residual) << ", feasibility "
            << g6(ex.feasibility_residual) << "\n";
  std::cout << "H(c*) = " << g6(entropy(ex.c_star, rep.xi)) << "\n";
  write_out(cfg, "extremal.csv", extremal_csv(net, rep.xi, ex));
  return 0;
}

int cmd_master(const RunConfig& cfg) {
  const auto m = load(cfg);
  const auto& net = m.network;
  print_header(m);
  const auto sp = enumerate_states(net, m.init, cfg.cap);
  const auto g = build_generator(net, sp);
  std::cout << "states: " << sp.size() << "\n";
  if (cfg.t_end) {
    const auto p = evolve(g, point_mass(sp.size(), sp.find(m.init).value()), *cfg.t_end, cfg.tol.value_or(1e-12));
    write_out(cfg, "transient.csv", distribution_csv(net, sp, p));
  }
  if (!is_ergodic(g)) {
    std::cout << "generator is not ergodic on the reachable set; no stationary law\n";
    return 3;
  }
  const auto pi = stationary(g);
  std::cout << "stationary residual ||pi Q||_inf = " << g6(stationary_residual(g, pi)) << "\n";
  const auto arg = static_cast<std::size_t>(std::max_element(pi.prob.begin(), pi.prob.end()) - pi.prob.begin());
  std::cout << "mode " << state_str(sp[arg]) << " with probability " << g6(pi[arg]) << "\n";
  write_out(cfg, "stationary.csv", distribution_csv(net, sp, pi));
  return 0;
}

int cmd_simulate(const RunConfig& cfg) {
  const auto m = load(cfg);
  const auto& net = m.network;
  const double t_end = cfg.t_end.value_or(10.0);
  print_header(m);
  SimOptions opts;
  opts.stop_on_boundary_trap = true;
  const auto traj = simulate(net, m.init, t_end, RngSeed{cfg.seed, 0}, opts);
  std::cout << "events: " << traj.num_events() << ", stop: " << to_string(traj.reason) << " at t = "
            << g6(traj.reason == StopReason::time_limit ? t_end : traj.stopped_at) << "\n";
  std::cout << "final state " << state_str(traj.final_state(net)) << "\n";
  write_out(cfg, "trajectory.csv", trajectory_csv(net, traj));
  if (cfg.samples && *cfg.samples > 0) {
    const auto finals = ensemble_final_states(net, m.init, t_end, RngSeed{cfg.seed, 0}, *cfg.samples, opts);
    const auto rows = histogram(finals);
    std::cout << "ensemble: " << *cfg.samples << " paths, " << rows.size() << " distinct final states\n";
    write_out(cfg, "ensemble.csv", histogram_csv(net, rows));
  }
  return 0;
}

int cmd_quasimean(const RunConfig& cfg) {
  const auto m = load(cfg);
  const auto& net = m.network;
  const double t_end = cfg.t_end.value_or(10.0);
  const double rtol = cfg.tol.value_or(1e-8);
  const auto c0 = initial_concentration(m);
  std::cout << "c0 = " << vec_str(c0) << "\n";
  const auto tr = integrate(net, c0, t_end, rtol, 1e-14);
  std::cout << "steps: " << tr.steps << " accepted, " << tr.rejected << " rejected\n";
  std::cout << "c(" << g6(t_end) << ") = " << vec_str(tr.back()) << "\n";
  const auto basis = conservation_basis(net);
  const auto drift = linear_invariant_drift(tr, basis);
  for (std::size_t k = 0; k < drift.size(); ++k) std::cout << "mu" << k << " drift " << g6(drift[k]) << "\n";

  std::optional<PoissonParams> xi;
  const auto sbp = solve_sbp(net, 8, 1e-10, RngSeed{cfg.seed, 0});
  if (sbp.converged) {
    xi = sbp.xi;
    const auto ly = lyapunov_along(tr, *xi);
    std::cout << "H: " << g6(ly.values.front()) << " -> " << g6(ly.values.back()) << ", max increase "
              << g6(ly.max_increase) << (ly.nonincreasing ? " (nonincreasing)" : " (NOT monotone)") << "\n";
  } else {
    std::cout << "complex balance infeasible; no entropy column\n";
  }
  const auto lv = match_lotka_volterra(net);
  if (lv) {
    double lo = INFINITY, hi = -INFINITY;
    for (const auto& c : tr.states) {
      if (c[lv->prey] <= 0.0 || c[lv->predator] <= 0.0) continue;
      const double v = lv_first_integral(c, *lv);
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    std::cout << "Lotka-Volterra first integral range " << g6(hi - lo) << "\n";
    if (const auto ret = first_section_return(tr))
      std::cout << "orbit period " << g6(ret->period) << ", closure " << g6(ret->closure) << "\n";
  }
  write_out(cfg, "ode.csv", ode_csv(net, tr, xi ? &*xi : nullptr, lv ? &*lv : nullptr));
  return 0;
}

int cmd_return_time(const RunConfig& cfg) {
  const auto m = load(cfg);
  const auto& net = m.network;
  const std::size_t n = cfg.samples.value_or(1000);
  const double t_cap = cfg.t_end.value_or(1e6);
  print_header(m);
  const auto est = mean_return_time(net, m.init, n, t_cap, RngSeed{cfg.seed, 0});
  std::string out = "samples,completed,censored,mean,half_width,first_passage\n";
  out += std::to_string(n) + "," + std::to_string(est.completed) + "," + std::to_string(est.censored) + ",";
  if (est.available) {
    std::cout << "mean return time " << g6(est.mean) << " +- " << g6(est.half_width) << " (95%), " << est.completed
              << " completed, " << est.censored << " censored at t_cap = " << g6(t_cap) << "\n";
    if (est.censored > 0) std::cout << "note: censored runs are excluded, so the mean is biased low\n";
    out += csv::num(est.mean) + "," + csv::num(est.half_width) + ",";
  } else {
    std::cout << "estimate unavailable: all " << n << " runs censored at t_cap = " << g6(t_cap) << "\n";
    out += ",,";
  }
  // Exact value from the master equation when the chain is small and ergodic.
  try {
    const auto sp = enumerate_states(net, m.init, std::min<std::size_t>(cfg.cap, 20000));
    const auto g = build_generator(net, sp);
    if (is_ergodic(g)) {
      const double fp = expected_return_time(g, sp.find(m.init).value());
      std::cout << "first-passage solve " << g6(fp) << "\n";
      out += csv::num(fp);
    }
  } catch (const Truncated&) {
    std::cout << "state space too large for the first-passage solve\n";
  }
  out += "\n";
  write_out(cfg, "return_time.csv", out);
  return 0;
}

int cmd_concentration(const RunConfig& cfg) {
  const auto m = load(cfg);
  const auto& net = m.network;
  const auto sbp = solve_sbp(net, 8, 1e-10, RngSeed{cfg.seed, 0});
  if (!sbp.converged) {
    std::cout << "complex balance: INFEASIBLE, best relative residual " << g6(sbp.max_residual) << "\n";
    return 3;
  }
  std::vector<std::int64_t> Ms;
  if (cfg.M) Ms.push_back(*cfg.M);
  else
    for (int k = 6; k <= 12; ++k) Ms.push_back(std::int64_t{1} << k);
  const auto c0 = initial_concentration(m);
  const auto ex = boltzmann_extremal(make_entropy_problem(conservation_basis(net), c0, sbp.xi));
  const std::vector<Concentration> probes{c0, ex.c_star};
  const auto tab = concentration_check(net, sbp.xi, Ms, probes);
  std::string out = "M,max_delta,worst_probe\n";
  for (const auto& r : tab.rows) {
    std::cout << "M = " << r.M << "  max delta = " << g6(r.max_delta) << "\n";
    out += std::to_string(r.M) + "," + csv::num(r.max_delta) + "," + std::to_string(r.worst_probe) + "\n";
  }
  if (!std::isnan(tab.decay_exponent)) std::cout << "decay exponent (after ln M) " << g6(tab.decay_exponent) << "\n";
  write_out(cfg, "concentration.csv", out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"macrokin: stochastic and quasi-mean kinetics of macrosystems"};
  app.require_subcommand(1);
  RunConfig cfg;

  std::optional<double> tol, t_end;
  std::optional<std::size_t> samples;
  std::optional<std::int64_t> M;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--model", cfg.model_path, "model file")->required();
    sub->add_option("--out", cfg.out_dir, "output directory")->capture_default_str();
    sub->add_option("--seed", cfg.seed, "RNG seed")->capture_default_str();
    sub->add_option("--tol", tol, "tolerance (meaning depends on the subcommand)")->check(CLI::PositiveNumber);
    sub->add_option("--t-end", t_end, "time horizon")->check(CLI::NonNegativeNumber);
    sub->add_option("--samples", samples, "number of sample paths");
    sub->add_option("--cap", cfg.cap, "state-space cap")->capture_default_str();
    sub->add_option("--M", M, "override the model scale");
  };

  using Cmd = int (*)(const RunConfig&);
  const std::vector<std::tuple<const char*, const char*, Cmd>> cmds{
      {"analyze", "species, reactions and conservation laws", cmd_analyze},
      {"equilibrium", "complex-balance solve and Boltzmann extremal", cmd_equilibrium},
      {"master", "master equation: stationary law and transient", cmd_master},
      {"simulate", "stochastic simulation (Gillespie direct method)", cmd_simulate},
      {"quasimean", "quasi-mean ODE trajectory", cmd_quasimean},
      {"return-time", "mean return time to the initial state", cmd_return_time},
      {"concentration", "concentration of the invariant measure", cmd_concentration},
  };
  std::vector<std::pair<CLI::App*, Cmd>> subs;
  for (const auto& [name, help, fn] : cmds) {
    auto* sub = app.add_subcommand(name, help);
    add_common(sub);
    subs.emplace_back(sub, fn);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }
  cfg.tol = tol;
  cfg.t_end = t_end;
  cfg.samples = samples;
  cfg.M = M;

  try {
    for (const auto& [sub, fn] : subs)
      if (sub->parsed()) return fn(cfg);
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << fs::path(cfg.model_path).filename().string() << ": " << e.what() << "\n";
    return 2;
  } catch (const Infeasible& e) {
    std::cerr << "infeasible: " << e.what() << " (residual " << g6(e.residual()) << ")\n";
    return 3;
  } catch (const NotErgodic& e) {
    std::cerr << "not ergodic: " << e.what() << "\n";
    return 3;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 4;
  } catch (const Truncated& e) {
    std::cerr << "truncated: " << e.what() << " (raise --cap)\n";
    return 5;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
