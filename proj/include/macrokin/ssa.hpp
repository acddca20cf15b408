#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "macrokin/csv.hpp"
#include "macrokin/model.hpp"
#include "macrokin/parallel.hpp"
#include "macrokin/rng.hpp"
#include "macrokin/stats.hpp"

namespace macrokin {

enum class RateUpdate {
  full,         // recompute every intensity after each event
  incremental,  // recompute only intensities that read a changed species
};

enum class StopReason { time_limit, absorbed, boundary_trap, event_limit };

inline const char* to_string(StopReason r) {
  switch (r) {
    case StopReason::time_limit: return "time_limit";
    case StopReason::absorbed: return "absorbed";
    case StopReason::boundary_trap: return "boundary_trap";
    case StopReason::event_limit: return "event_limit";
  }
  return "?";
}

struct SimOptions {
  RateUpdate update = RateUpdate::incremental;
  std::size_t max_events = 500'000'000;
  // Stop as soon as the state sits on a boundary face no reaction can leave.
  bool stop_on_boundary_trap = false;
};

// Gillespie direct method, one event at a time. Holds the current state,
// the intensity of every reaction, and the RNG substream.
class DirectMethod {
 public:
  DirectMethod(const Network& net, State n0, RngSeed seed, RateUpdate update = RateUpdate::incremental)
      : net_(&net), state_(std::move(n0)), rng_(seed), update_(update), props_(net.num_reactions()) {
    if (state_.size() != net.num_species()) throw std::invalid_argument("initial state dimension mismatch");
    for (auto v : state_.counts)
      if (v < 0) throw std::invalid_argument("initial state has a negative count");
    build_dependencies();
    for (std::size_t r = 0; r < props_.size(); ++r) props_[r] = intensity(net, state_, r);
    total_ = sum_props();
  }

  double time() const { return time_; }
  const State& state() const { return state_; }
  double total_rate() const { return total_; }

  // Fires the next reaction if it happens no later than t_limit and returns
  // its index. Returns nullopt when absorbed (total rate 0) or when the next
  // event would fall after t_limit; time() is then left unchanged.
  std::optional<std::size_t> step(double t_limit) {
    if (total_ <= 0.0) return std::nullopt;
    const double dt = rng_.exponential(total_);
    if (time_ + dt > t_limit) return std::nullopt;
    time_ += dt;
    const std::size_t r = choose(rng_.uniform() * total_);
    fire(r);
    return r;
  }

 private:
  void build_dependencies() {
    const auto nr = net_->num_reactions(), ns = net_->num_species();
    deps_.assign(nr, {});
    for (std::size_t s = 0; s < nr; ++s) {
      const auto& fired = net_->reaction(s);
      for (std::size_t r = 0; r < nr; ++r) {
        const auto& rx = net_->reaction(r);
        for (std::size_t i = 0; i < ns; ++i) {
          if (rx.alpha[i] > 0 && fired.alpha[i] != fired.beta[i]) {
            deps_[s].push_back(r);
            break;
          }
        }
      }
    }
  }

  double sum_props() const {
    double s = 0.0;
    for (auto p : props_) s += p;
    return s;
  }

  std::size_t choose(double target) const {
    double acc = 0.0;
    std::size_t last_positive = 0;
    for (std::size_t r = 0; r < props_.size(); ++r) {
      if (props_[r] <= 0.0) continue;
      acc += props_[r];
      last_positive = r;
      if (target < acc) return r;
    }
    return last_positive;  // rounding at the top of the cumulative sum
  }

  void fire(std::size_t r) {
    const auto& rx = net_->reaction(r);
    for (std::size_t i = 0; i < state_.size(); ++i) state_[i] += rx.beta[i] - rx.alpha[i];
    if (update_ == RateUpdate::full) {
      for (std::size_t k = 0; k < props_.size(); ++k) props_[k] = intensity(*net_, state_, k);
    } else {
      for (auto k : deps_[r]) props_[k] = intensity(*net_, state_, k);
    }
    // Summed in index order either way, so both update modes agree bitwise.
    total_ = sum_props();
  }

  const Network* net_;
  State state_;
  Philox4x32 rng_;
  RateUpdate update_;
  std::vector<double> props_;
  std::vector<std::vector<std::size_t>> deps_;
  double total_ = 0.0;
  double time_ = 0.0;
};

// Realization of the jump process: the initial state plus the time and
// reaction index of every event.
struct Trajectory {
  State initial;
  std::vector<double> times;
  std::vector<std::uint32_t> reactions;
  double t_end = 0.0;
  StopReason reason = StopReason::time_limit;
  double stopped_at = 0.0;

  std::size_t num_events() const { return times.size(); }
  bool absorbed() const { return reason == StopReason::absorbed; }

  // Calls fn(time, state) for the initial state and after every event.
  template <typename Fn>
  void replay(const Network& net, Fn&& fn) const {
    State s = initial;
    fn(0.0, static_cast<const State&>(s));
    for (std::size_t k = 0; k < times.size(); ++k) {
      const auto& rx = net.reaction(reactions[k]);
      for (std::size_t i = 0; i < s.size(); ++i) s[i] += rx.beta[i] - rx.alpha[i];
      fn(times[k], static_cast<const State&>(s));
    }
  }

  // State holding at time t (right-continuous).
  State state_at(const Network& net, double t) const {
    const auto upto = static_cast<std::size_t>(std::upper_bound(times.begin(), times.end(), t) - times.begin());
    State s = initial;
    for (std::size_t k = 0; k < upto; ++k) {
      const auto& rx = net.reaction(reactions[k]);
      for (std::size_t i = 0; i < s.size(); ++i) s[i] += rx.beta[i] - rx.alpha[i];
    }
    return s;
  }

  State final_state(const Network& net) const { return state_at(net, std::numeric_limits<double>::infinity()); }
};

// Direct-method simulation on [0, t_end]. Stops early when the total rate
// hits zero (absorbed), or, if requested, on a boundary trap.
inline Trajectory simulate(const Network& net, const State& n0, double t_end, RngSeed seed,
                           const SimOptions& opts = {}) {
  if (!(t_end >= 0.0)) throw std::invalid_argument("simulate needs t_end >= 0");
  Trajectory traj;
  traj.initial = n0;
  traj.t_end = t_end;
  DirectMethod sim(net, n0, seed, opts.update);
  traj.reason = StopReason::time_limit;
  if (opts.stop_on_boundary_trap && trapped_on_boundary(net, n0)) {
    traj.reason = StopReason::boundary_trap;
    traj.stopped_at = 0.0;
    return traj;
  }
  if (t_end == 0.0) return traj;
  for (;;) {
    if (sim.total_rate() <= 0.0) {
      traj.reason = StopReason::absorbed;
      traj.stopped_at = sim.time();
      break;
    }
    if (traj.times.size() >= opts.max_events) {
      traj.reason = StopReason::event_limit;
      traj.stopped_at = sim.time();
      break;
    }
    auto r = sim.step(t_end);
    if (!r) {
      traj.stopped_at = t_end;
      break;
    }
    traj.times.push_back(sim.time());
    traj.reactions.push_back(static_cast<std::uint32_t>(*r));
    if (opts.stop_on_boundary_trap && trapped_on_boundary(net, sim.state())) {
      traj.reason = StopReason::boundary_trap;
      traj.stopped_at = sim.time();
      break;
    }
  }
  return traj;
}

// CSV rows `t,reaction_index,state_<species>...`, one per event.
inline std::string trajectory_csv(const Network& net, const Trajectory& traj) {
  std::string out = "t,reaction_index";
  for (const auto& s : net.species()) out += ",state_" + s;
  out += '\n';
  std::size_t k = 0;
  traj.replay(net, [&](double t, const State& s) {
    if (t == 0.0 && k == 0) {
      ++k;
      return;  // initial state is not an event
    }
    out += csv::num(t) + "," + std::to_string(traj.reactions[k - 1]);
    for (auto v : s.counts) out += "," + std::to_string(v);
    out += '\n';
    ++k;
  });
  return out;
}

// --------------------------------------------------------------------------
// Occupation measure

struct OccupationMeasure {
  std::map<State, double> fraction;  // time fraction of [burn_in, t_end]
  double observed_time = 0.0;
  bool absorbed_before_burn_in = false;
};

// Time-weighted occupation frequencies of one path over [burn_in, t_end].
inline OccupationMeasure occupation_measure(const Network& net, const State& n0, double t_end, double burn_in,
                                            RngSeed seed, const SimOptions& opts = {}) {
  if (!(burn_in >= 0.0) || !(burn_in < t_end)) throw std::invalid_argument("need 0 <= burn_in < t_end");
  DirectMethod sim(net, n0, seed, opts.update);
  OccupationMeasure occ;
  auto credit = [&](const State& s, double from, double to) {
    const double a = std::max(from, burn_in), b = std::min(to, t_end);
    if (b > a) occ.fraction[s] += b - a;
  };
  std::size_t events = 0;
  for (;;) {
    const double t0 = sim.time();
    State held = sim.state();
    if (sim.total_rate() <= 0.0) {
      if (t0 < burn_in) occ.absorbed_before_burn_in = true;
      credit(held, t0, t_end);
      break;
    }
    if (!sim.step(t_end) || ++events > opts.max_events) {
      credit(held, t0, t_end);
      break;
    }
    credit(held, t0, sim.time());
  }
  double total = 0.0;
  for (auto& [s, w] : occ.fraction) total += w;
  occ.observed_time = total;
  if (total > 0.0)
    for (auto& [s, w] : occ.fraction) w /= total;
  return occ;
}

// --------------------------------------------------------------------------
// Return times

struct ReturnTimeEstimate {
  bool available = false;
  double mean = 0.0;
  double half_width = 0.0;  // 95% CI over completed runs
  std::size_t completed = 0;
  std::size_t censored = 0;  // runs that had not returned by t_cap
};

// First return time to `target` (holding time at target included). Run i
// uses substream i. Censored runs are excluded from the mean and counted,
// which biases the estimate low when t_cap is short.
inline ReturnTimeEstimate mean_return_time(const Network& net, const State& target, std::size_t n_samples,
                                           double t_cap, RngSeed seed, const SimOptions& opts = {}) {
  if (n_samples == 0) throw std::invalid_argument("need at least one sample");
  if (!(t_cap > 0.0)) throw std::invalid_argument("t_cap must be positive");
  {
    DirectMethod probe(net, target, seed);
    if (probe.total_rate() <= 0.0) throw std::invalid_argument("target state is absorbing");
  }
  // A path whose support can no longer grow back to the target's support
  // never returns; censor it at once instead of running to t_cap.
  auto lost_target = [&](const State& s) {
    bool hit_zero = false;
    for (std::size_t i = 0; i < s.size(); ++i) hit_zero = hit_zero || (s[i] == 0 && target[i] > 0);
    if (!hit_zero) return false;
    const auto reach = reachable_support(net, s);
    for (std::size_t i = 0; i < s.size(); ++i)
      if (target[i] > 0 && !reach[i]) return true;
    return false;
  };
  std::vector<double> times(n_samples, -1.0);
  parallel_for(n_samples, [&](std::size_t i) {
    DirectMethod sim(net, target, seed.substream(i), opts.update);
    bool left = false;
    std::size_t events = 0;
    while (auto r = sim.step(t_cap)) {
      if (++events > opts.max_events) break;
      if (lost_target(sim.state())) break;
      if (!left) {
        left = sim.state() != target;
        continue;
      }
      if (sim.state() == target) {
        times[i] = sim.time();
        return;
      }
    }
  });
  std::vector<double> done;
  for (auto t : times)
    if (t >= 0.0) done.push_back(t);
  ReturnTimeEstimate est;
  est.completed = done.size();
  est.censored = n_samples - done.size();
  if (done.empty()) return est;
  const auto ci = stats::mean_ci(done);
  est.available = true;
  est.mean = ci.mean;
  est.half_width = ci.half_width;
  return est;
}

// --------------------------------------------------------------------------
// Ensembles and mixing experiments

// Final state of n independent paths on [0, t_end]; path i uses substream i.
inline std::vector<State> ensemble_final_states(const Network& net, const State& n0, double t_end, RngSeed seed,
                                                std::size_t n, const SimOptions& opts = {}) {
  std::vector<State> out(n);
  parallel_for(n, [&](std::size_t i) {
    DirectMethod sim(net, n0, seed.substream(i), opts.update);
    std::size_t events = 0;
    while (sim.step(t_end))
      if (++events >= opts.max_events) break;
    out[i] = sim.state();
  });
  return out;
}

struct HistogramRow {
  State state;
  std::size_t count = 0;
  double freq = 0.0;
  double ci_lo = 0.0;  // 95% normal approximation, clipped to [0, 1]
  double ci_hi = 0.0;
};

inline std::vector<HistogramRow> histogram(std::span<const State> samples) {
  std::map<State, std::size_t> counts;
  for (const auto& s : samples) ++counts[s];
  const double n = static_cast<double>(samples.size());
  std::vector<HistogramRow> rows;
  for (const auto& [s, c] : counts) {
    const double p = static_cast<double>(c) / n;
    const double hw = 1.959963984540054 * std::sqrt(p * (1.0 - p) / n);
    rows.push_back({s, c, p, std::max(0.0, p - hw), std::min(1.0, p + hw)});
  }
  return rows;
}

inline std::string histogram_csv(const Network& net, std::span<const HistogramRow> rows) {
  std::string out;
  for (const auto& s : net.species()) out += "state_" + s + ",";
  out += "count,freq,ci_lo,ci_hi\n";
  for (const auto& r : rows) {
    for (auto v : r.state.counts) out += std::to_string(v) + ",";
    out += std::to_string(r.count) + "," + csv::num(r.freq) + "," + csv::num(r.ci_lo) + "," + csv::num(r.ci_hi) + "\n";
  }
  return out;
}

// Number of events until `done(state)` holds (0 if it holds initially), or
// nullopt if the path is absorbed or max_events is exhausted first.
inline std::optional<std::size_t> events_until(const Network& net, const State& n0,
                                               const std::function<bool(const State&)>& done, RngSeed seed,
                                               std::size_t max_events, RateUpdate update = RateUpdate::incremental) {
  if (done(n0)) return 0;
  DirectMethod sim(net, n0, seed, update);
  const double inf = std::numeric_limits<double>::infinity();
  for (std::size_t k = 1; k <= max_events; ++k) {
    if (!sim.step(inf)) return std::nullopt;
    if (done(sim.state())) return k;
  }
  return std::nullopt;
}

struct MixingPoint {
  std::int64_t M = 0;
  double mean_events = 0.0;
  std::size_t runs = 0;
};

struct MixingScaling {
  std::vector<MixingPoint> points;
  double exponent_over_log = 0.0;  // slope of ln(events / ln M) against ln M
  double raw_exponent = 0.0;       // slope of ln(events) against ln M
};

// Equilibration experiment: for each M, mean number of events until the
// fraction n_species/M enters the band |x - center| < half_width, starting
// from the state `start(M)`. Run r at scale M uses substream (M << 20) + r.
inline MixingScaling mixing_scaling(const Network& base, std::size_t species, double center, double half_width,
                                    std::span<const std::int64_t> M_list,
                                    const std::function<State(std::int64_t)>& start, std::size_t runs,
                                    RngSeed seed) {
  MixingScaling out;
  std::vector<double> lx, ly_log, ly_raw;
  for (auto M : M_list) {
    const Network net = base.with_scale(M);
    const State n0 = start(M);
    const double Md = static_cast<double>(M);
    auto done = [&](const State& s) { return std::abs(static_cast<double>(s[species]) / Md - center) < half_width; };
    std::vector<double> events(runs, 0.0);
    parallel_for(runs, [&](std::size_t r) {
      auto k = events_until(net, n0, done, seed.substream((static_cast<std::uint64_t>(M) << 20) + r),
                            1'000'000'000);
      if (!k) throw std::runtime_error("mixing run did not reach the band");
      events[r] = static_cast<double>(*k);
    });
    const double mean = stats::mean_ci(events).mean;
    out.points.push_back({M, mean, runs});
    if (M > 1) {
      lx.push_back(std::log(Md));
      ly_log.push_back(std::log(mean / std::log(Md)));
      ly_raw.push_back(std::log(mean));
    }
  }
  if (lx.size() >= 2) {
    out.exponent_over_log = stats::fit_line(lx, ly_log).slope;
    out.raw_exponent = stats::fit_line(lx, ly_raw).slope;
  }
  return out;
}

}  // namespace macrokin
