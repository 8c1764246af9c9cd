#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "pneumo/plant.hpp"
#include "pneumo/stats.hpp"

namespace pneumo {

/// Flags motion once |q - q_init| exceeds `epsilon` for `persist`
/// consecutive samples. The reported start is the first sample of that run.
struct MovementDetector {
  double epsilon = 0.5;
  int persist = 2;

  std::optional<std::size_t> detect(std::span<const double> q, double q_init) const {
    int run = 0;
    for (std::size_t k = 0; k < q.size(); ++k) {
      run = std::abs(q[k] - q_init) > epsilon ? run + 1 : 0;
      if (run >= persist) return k + 1 - static_cast<std::size_t>(persist);
    }
    return std::nullopt;
  }
};

/// Streaming form of MovementDetector.
class MovementWatch {
 public:
  MovementWatch(MovementDetector d, double q_init) : d_(d), q_init_(q_init) {}

  /// Feeds sample `k`; returns the start index once motion is confirmed.
  std::optional<long> feed(long k, double q) {
    if (std::abs(q - q_init_) > d_.epsilon) {
      if (run_ == 0) start_ = k;
      ++run_;
    } else {
      run_ = 0;
    }
    if (run_ >= d_.persist) return start_;
    return std::nullopt;
  }

 private:
  MovementDetector d_;
  double q_init_;
  int run_ = 0;
  long start_ = 0;
};

struct ExperimentOptions {
  MovementDetector detector;
  double hold_time = 1.0;          // s of holding before t0
  double timeout = 5.0;            // s without detected motion -> no-move
  double hold_search_step = 10.0;  // command units
  double hold_margin = 50.0;       // added to a nonzero holding command
  double settle_timeout = 10.0;
  std::uint64_t seed = 1;
};

struct DelayResult {
  std::size_t joint = 0;
  Posture posture = Posture::EP;
  Direction direction = Direction::positive;
  double u_diff = 0.0;
  std::optional<double> t_delay_ms;  // empty: no-move outcome
  int trial = 0;
};

struct MinPressureResult {
  std::size_t joint = 0;
  Posture posture = Posture::EP;
  int trial = 0;
  std::optional<double> u_diff;  // empty: immovable
};

struct MaxVelocityResult {
  std::size_t joint = 0;
  Posture posture = Posture::EP;
  int trial = 0;
  double peak_velocity = 0.0;  // signed, normalized units / s
  std::vector<double> q;       // measured trajectory from t0
};

/// Pairwise trial RMSE matrices and per-tick spread for every joint.
struct ReproReport {
  std::vector<std::vector<std::vector<double>>> rmse;  // [joint][trial][trial]
  std::vector<std::vector<double>> std_trace;          // [joint][tick]
  std::vector<std::vector<std::vector<double>>> q;     // [trial][joint][tick]
};

namespace detail {

inline std::uint64_t trial_seed(std::uint64_t base, std::size_t joint, Posture p, int trial) {
  return base * 1000003ULL + joint * 7919ULL + static_cast<std::uint64_t>(p) * 104729ULL +
         static_cast<std::uint64_t>(trial);
}

/// Chamber that drives motion in `dir`.
inline double& drive_chamber(ValveCommand& c, std::size_t j, Direction dir) {
  return dir == Direction::positive ? c.u_a[j] : c.u_b[j];
}
inline double& hold_chamber(ValveCommand& c, std::size_t j, Direction dir) {
  return dir == Direction::positive ? c.u_b[j] : c.u_a[j];
}

}  // namespace detail

template <ControlledPlant P>
ValveCommand limit_push_command_for(const P& plant, const JointVector& targets) {
  ValveCommand c(plant.n_joints());
  for (std::size_t i = 0; i < plant.n_joints(); ++i) {
    if (targets[i] >= plant.range_hi(i)) c.u_a[i] = plant.u_max();
    else c.u_b[i] = plant.u_max();
  }
  return c;
}

/// Puts the plant into `posture` for joint `j` and holds it there with the
/// holding chamber at `hold` and the driving chamber empty. Returns the
/// holding command; other joints keep pressing on their posture limits.
template <ControlledPlant P>
ValveCommand prepare_trial(P& plant, std::size_t j, Posture posture, double hold, std::uint64_t seed,
                           const ExperimentOptions& opt) {
  plant.reset(seed);
  plant.set_posture(posture, j);
  plant.jitter_positions();
  auto cmd = limit_push_command_for(plant, plant.posture_targets(posture, j));
  const auto dir = direction_of(posture);
  detail::drive_chamber(cmd, j, dir) = 0.0;
  detail::hold_chamber(cmd, j, dir) = hold;
  const long ticks = static_cast<long>(std::lround(opt.hold_time / plant.dt()));
  for (long k = 0; k < ticks; ++k) plant.step(cmd);
  return cmd;
}

/// Smallest holding command (on a `hold_search_step` grid) that keeps the
/// joint under test on its starting stop for one second, plus
/// `hold_margin` when the stop needs any holding at all.
template <ControlledPlant P>
double find_hold_command(P& plant, std::size_t j, Posture posture, const ExperimentOptions& opt) {
  const auto start = plant.posture_targets(posture, j)[j];
  for (double h = 0.0; h <= plant.u_max(); h += opt.hold_search_step) {
    auto cmd = prepare_trial(plant, j, posture, h, detail::trial_seed(opt.seed, j, posture, 9999), opt);
    bool held = std::abs(plant.read().q[j] - start) <= opt.detector.epsilon;
    for (long k = 0; held && k < static_cast<long>(std::lround(1.0 / plant.dt())); ++k) {
      plant.step(cmd);
      held = std::abs(plant.read().q[j] - start) <= opt.detector.epsilon;
    }
    if (held) return h > 0.0 ? std::min(plant.u_max(), h + opt.hold_margin) : 0.0;
  }
  throw std::runtime_error("no holding command keeps joint " + std::to_string(j) + " on its stop");
}

/// Step-response delay (Experiment I-A) at one command difference.
template <ControlledPlant P>
std::vector<DelayResult> measure_time_delay(P& plant, std::size_t j, Posture posture, double u_diff,
                                            int trials, const ExperimentOptions& opt,
                                            std::optional<double> hold = std::nullopt) {
  const auto dir = direction_of(posture);
  const double h = hold ? *hold : find_hold_command(plant, j, posture, opt);
  std::vector<DelayResult> out;
  for (int trial = 0; trial < trials; ++trial) {
    auto cmd = prepare_trial(plant, j, posture, h, detail::trial_seed(opt.seed, j, posture, trial), opt);
    const double q_init = plant.read().q[j];
    detail::drive_chamber(cmd, j, dir) = std::min(plant.u_max(), h + u_diff);
    DelayResult r{j, posture, dir, u_diff, std::nullopt, trial};
    MovementWatch watch(opt.detector, q_init);
    const long max_ticks = static_cast<long>(std::lround(opt.timeout / plant.dt()));
    if (u_diff > 0.0) {
      for (long k = 1; k <= max_ticks; ++k) {
        plant.step(cmd);
        if (auto start = watch.feed(k, plant.read().q[j])) {
          r.t_delay_ms = static_cast<double>(*start) * plant.dt() * 1000.0;
          break;
        }
      }
    }
    out.push_back(r);
  }
  return out;
}

/// Minimum activating command difference (Experiment I-B): ramps the
/// driving chamber from zero by `ramp_rate` per tick.
template <ControlledPlant P>
std::vector<MinPressureResult> measure_min_pressure(P& plant, std::size_t j, Posture posture,
                                                    double ramp_rate, int trials,
                                                    const ExperimentOptions& opt,
                                                    std::optional<double> hold = std::nullopt) {
  if (!(ramp_rate > 0)) throw std::invalid_argument("ramp_rate must be > 0");
  const auto dir = direction_of(posture);
  const double h = hold ? *hold : find_hold_command(plant, j, posture, opt);
  std::vector<MinPressureResult> out;
  for (int trial = 0; trial < trials; ++trial) {
    auto cmd = prepare_trial(plant, j, posture, h, detail::trial_seed(opt.seed, j, posture, trial), opt);
    const double q_init = plant.read().q[j];
    MovementWatch watch(opt.detector, q_init);
    MinPressureResult r{j, posture, trial, std::nullopt};
    std::vector<double> drive_history{0.0};
    const long ramp_ticks = static_cast<long>(std::ceil(plant.u_max() / ramp_rate));
    const long max_ticks = ramp_ticks + static_cast<long>(std::lround(opt.timeout / plant.dt()));
    for (long k = 1; k <= max_ticks; ++k) {
      const double u = std::min(plant.u_max(), ramp_rate * static_cast<double>(k));
      detail::drive_chamber(cmd, j, dir) = u;
      drive_history.push_back(u);
      plant.step(cmd);
      if (auto start = watch.feed(k, plant.read().q[j])) {
        r.u_diff = drive_history[static_cast<std::size_t>(*start)] - h;
        break;
      }
    }
    out.push_back(r);
  }
  return out;
}

/// Peak of the central-difference velocity over a measured stroke.
/// Throws if the stroke spans fewer than three samples.
inline double peak_central_velocity(std::span<const double> q, double dt, Direction dir) {
  if (q.size() < 3) throw std::runtime_error("stroke too short to differentiate");
  double peak = 0.0;
  for (std::size_t k = 1; k + 1 < q.size(); ++k) {
    const double v = (q[k + 1] - q[k - 1]) / (2.0 * dt);
    if (dir == Direction::positive ? v > peak : v < peak) peak = v;
  }
  return peak;
}

/// Full-supply step response (Experiment I-C).
template <ControlledPlant P>
std::vector<MaxVelocityResult> measure_max_velocity(P& plant, std::size_t j, Posture posture, int trials,
                                                    const ExperimentOptions& opt,
                                                    std::optional<double> hold = std::nullopt) {
  const auto dir = direction_of(posture);
  const double h = hold ? *hold : find_hold_command(plant, j, posture, opt);
  const double far = dir == Direction::positive ? plant.range_hi(j) : plant.range_lo(j);
  std::vector<MaxVelocityResult> out;
  for (int trial = 0; trial < trials; ++trial) {
    auto cmd = prepare_trial(plant, j, posture, h, detail::trial_seed(opt.seed, j, posture, trial), opt);
    MaxVelocityResult r{j, posture, trial, 0.0, {}};
    const double q_init = plant.read().q[j];
    r.q.push_back(q_init);
    detail::drive_chamber(cmd, j, dir) = plant.u_max();
    MovementWatch watch(opt.detector, q_init);
    std::optional<long> start;
    std::optional<long> arrival;
    const long max_ticks = static_cast<long>(std::lround(opt.timeout / plant.dt()));
    for (long k = 1; k <= max_ticks; ++k) {
      plant.step(cmd);
      const double q = plant.read().q[j];
      r.q.push_back(q);
      if (!start) start = watch.feed(k, q);
      if (start && std::abs(q - far) <= opt.detector.epsilon) {
        arrival = k;
        break;
      }
    }
    if (!start) throw std::runtime_error("joint did not move under full supply");
    // The stroke runs from the last sample before motion to one sample past arrival.
    const long first = std::max(0L, *start - 1);
    long last = arrival ? *arrival : static_cast<long>(r.q.size()) - 1;
    if (arrival) {
      plant.step(cmd);
      r.q.push_back(plant.read().q[j]);
      last += 1;
    }
    std::span<const double> stroke(r.q.data() + first, static_cast<std::size_t>(last - first + 1));
    r.peak_velocity = peak_central_velocity(stroke, plant.dt(), dir);
    out.push_back(std::move(r));
  }
  return out;
}

/// Random piecewise-constant valve commands for every joint, changing at
/// random intervals in [hold_min, hold_max] seconds.
inline std::vector<ValveCommand> random_command_sequence(std::size_t n_joints, double duration,
                                                         double u_max, std::uint64_t seed,
                                                         double hold_min = 0.3, double hold_max = 1.5) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, u_max);
  std::uniform_real_distribution<double> hold(hold_min, hold_max);
  const long ticks = static_cast<long>(std::lround(duration * kControlRate));
  std::vector<ValveCommand> seq(static_cast<std::size_t>(ticks), ValveCommand(n_joints));
  for (std::size_t j = 0; j < n_joints; ++j) {
    long k = 0;
    while (k < ticks) {
      const double a = u(rng), b = u(rng);
      const long len = std::max(1L, std::lround(hold(rng) * kControlRate));
      for (long m = k; m < std::min(ticks, k + len); ++m) {
        seq[static_cast<std::size_t>(m)].u_a[j] = a;
        seq[static_cast<std::size_t>(m)].u_b[j] = b;
      }
      k += len;
    }
  }
  return seq;
}

/// Pairwise RMSE matrix over trial trajectories of one joint.
inline std::vector<std::vector<double>> rmse_matrix(const std::vector<std::vector<double>>& trials) {
  const std::size_t n = trials.size();
  std::vector<std::vector<double>> m(n, std::vector<double>(n, 0.0));
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = a + 1; b < n; ++b) m[a][b] = m[b][a] = rmse(trials[a], trials[b]);
  return m;
}

/// Builds a ReproReport from recorded trajectories [trial][joint][tick].
inline ReproReport reproducibility_report(std::vector<std::vector<std::vector<double>>> runs) {
  if (runs.empty()) throw std::invalid_argument("no trials");
  const std::size_t n = runs.front().size();
  const std::size_t T = runs.front().front().size();
  for (const auto& r : runs) {
    if (r.size() != n) throw std::invalid_argument("joint count mismatch between trials");
    for (const auto& qj : r)
      if (qj.size() != T) throw std::invalid_argument("trial length mismatch");
  }
  ReproReport rep;
  rep.rmse.resize(n);
  rep.std_trace.assign(n, std::vector<double>(T));
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::vector<double>> per_trial;
    for (const auto& r : runs) per_trial.push_back(r[i]);
    rep.rmse[i] = rmse_matrix(per_trial);
    std::vector<double> column(runs.size());
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t k = 0; k < runs.size(); ++k) column[k] = runs[k][i][t];
      rep.std_trace[i][t] = stddev(column);
    }
  }
  rep.q = std::move(runs);
  return rep;
}

/// Experiment II: replays `commands` from a limit-initialized state
/// `trials + warmup_discard` times and compares the kept trials.
template <ControlledPlant P>
ReproReport assess_reproducibility(P& plant, const std::vector<ValveCommand>& commands, int trials,
                                   int warmup_discard, std::uint64_t seed) {
  if (commands.empty()) throw std::invalid_argument("empty command sequence");
  for (const auto& c : commands)
    if (c.size() != plant.n_joints()) throw std::invalid_argument("command arity mismatch");
  const std::size_t n = plant.n_joints();
  JointVector start(n);
  for (std::size_t i = 0; i < n; ++i) start[i] = plant.range_lo(i);

  std::vector<std::vector<std::vector<double>>> runs;
  for (int t = 0; t < trials + warmup_discard; ++t) {
    plant.reset(seed * 7919ULL + static_cast<std::uint64_t>(t));
    plant.drive_to_limits(start);
    plant.jitter_positions();
    std::vector<std::vector<double>> q(n);
    for (const auto& c : commands) {
      plant.step(c);
      const auto f = plant.read();
      for (std::size_t i = 0; i < n; ++i) q[i].push_back(f.q[i]);
    }
    if (t >= warmup_discard) runs.push_back(std::move(q));
  }
  return reproducibility_report(std::move(runs));
}

/// One point of a delay-versus-command-difference sweep.
struct DelaySweepPoint {
  double u_diff = 0.0;
  std::vector<DelayResult> results;
  MeanStd delay;  // over trials that moved
};

struct DelaySweep {
  std::size_t joint = 0;
  Posture posture = Posture::EP;
  double hold = 0.0;
  std::vector<DelaySweepPoint> points;
  MeanStd converged;  // per-trial mean over the `converge_points` largest u_diff
};

/// `count` log-spaced values from lo to hi inclusive.
inline std::vector<double> log_grid(double lo, double hi, int count) {
  if (!(lo > 0 && hi > lo) || count < 2) throw std::invalid_argument("log_grid: bad bounds");
  std::vector<double> g(static_cast<std::size_t>(count));
  for (int k = 0; k < count; ++k)
    g[static_cast<std::size_t>(k)] = lo * std::pow(hi / lo, static_cast<double>(k) / (count - 1));
  return g;
}

/// Delay sweep over log-spaced command differences from just above the
/// measured activation threshold to full supply.
template <ControlledPlant P>
DelaySweep delay_sweep(P& plant, std::size_t j, Posture posture, int trials, const ExperimentOptions& opt,
                       int grid_points = 12, int converge_points = 3, double ramp_rate = 1.0) {
  DelaySweep sweep;
  sweep.joint = j;
  sweep.posture = posture;
  sweep.hold = find_hold_command(plant, j, posture, opt);
  auto probe = measure_min_pressure(plant, j, posture, ramp_rate, 1, opt, sweep.hold);
  const double u_top = plant.u_max() - sweep.hold;
  double u_lo = probe.front().u_diff ? 1.05 * *probe.front().u_diff : 0.5 * u_top;
  u_lo = std::clamp(u_lo, 1.0, 0.9 * u_top);
  for (double u : log_grid(u_lo, u_top, grid_points)) {
    DelaySweepPoint pt;
    pt.u_diff = u;
    pt.results = measure_time_delay(plant, j, posture, u, trials, opt, sweep.hold);
    std::vector<double> d;
    for (const auto& r : pt.results)
      if (r.t_delay_ms) d.push_back(*r.t_delay_ms);
    pt.delay = summarize(d);
    sweep.points.push_back(std::move(pt));
  }
  std::vector<double> per_trial;
  for (int t = 0; t < trials; ++t) {
    double sum = 0.0;
    int cnt = 0;
    for (std::size_t p = sweep.points.size() - static_cast<std::size_t>(converge_points);
         p < sweep.points.size(); ++p) {
      const auto& r = sweep.points[p].results[static_cast<std::size_t>(t)];
      if (r.t_delay_ms) {
        sum += *r.t_delay_ms;
        ++cnt;
      }
    }
    if (cnt > 0) per_trial.push_back(sum / cnt);
  }
  sweep.converged = summarize(per_trial);
  return sweep;
}

}  // namespace pneumo
