#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "pneumo/config.hpp"
#include "pneumo/ini.hpp"
#include "pneumo/plant.hpp"

namespace pneumo {

/// Diagonal PID gains and baseline command of the antagonistic law
///   du = Kp e + Kd de/dt + Ki int(e),  u_a = u0 + du/2,  u_b = u0 - du/2.
struct PidGains {
  JointVector kp, kd, ki, u0;

  std::size_t size() const { return kp.size(); }

  /// Hand-tuned gains of the 4-DOF arm (abduction, flexion, rotation, elbow).
  static PidGains arm4_defaults() {
    return {{5.48, 3.08, 3.64, 3.4},
            {0.044, 0.148, 0.016, 0.016},
            {0.0005, 0.0036, 0.001, 0.0009},
            {400.0, 400.0, 400.0, 400.0}};
  }

  void validate(double u_max) const {
    const auto n = kp.size();
    if (kd.size() != n || ki.size() != n || u0.size() != n)
      throw std::invalid_argument("PID gain vectors differ in length");
    for (std::size_t i = 0; i < n; ++i) {
      if (kp[i] < 0 || kd[i] < 0 || ki[i] < 0) throw std::invalid_argument("PID gains must be >= 0");
      if (u0[i] < 0 || u0[i] > u_max) throw std::invalid_argument("u0 outside the command range");
    }
  }
};

/// One evaluation of the PID law. `de_dt` is the (filtered) error rate and
/// `integral` the already-updated error integral. Commands are clamped.
inline ValveCommand pid_step(const PidGains& g, const JointVector& e, const JointVector& de_dt,
                             const JointVector& integral, double u_max = 600.0) {
  const auto n = g.size();
  if (e.size() != n || de_dt.size() != n || integral.size() != n)
    throw std::invalid_argument("pid_step: arity mismatch");
  ValveCommand c(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double du = g.kp[i] * e[i] + g.kd[i] * de_dt[i] + g.ki[i] * integral[i];
    c.u_a[i] = std::clamp(g.u0[i] + 0.5 * du, 0.0, u_max);
    c.u_b[i] = std::clamp(g.u0[i] - 0.5 * du, 0.0, u_max);
  }
  return c;
}

/// PID law with the error rate taken as (e - e_prev) / dt.
inline ValveCommand pid_step(const PidGains& g, const JointVector& e, const JointVector& e_prev,
                             const JointVector& integral, double dt, double u_max) {
  if (e_prev.size() != e.size()) throw std::invalid_argument("pid_step: arity mismatch");
  JointVector de(e.size());
  for (std::size_t i = 0; i < e.size(); ++i) de[i] = (e[i] - e_prev[i]) / dt;
  return pid_step(g, e, de, integral, u_max);
}

/// Reads `[pid]` with kp, kd, ki, u0 lists of `n_joints` values each.
inline PidGains load_gains(const ini::Document& doc, std::size_t n_joints, double u_max) {
  const ini::Section* s = nullptr;
  for (const auto& sec : doc.sections)
    if (sec.name == "pid") s = &sec;
  if (!s) throw ConfigError(doc.file, 0, "pid", "missing [pid] section");
  PidGains g;
  for (const auto& e : s->entries) {
    JointVector* dst = e.key == "kp" ? &g.kp : e.key == "kd" ? &g.kd : e.key == "ki" ? &g.ki : e.key == "u0" ? &g.u0 : nullptr;
    if (!dst) throw ConfigError(doc.file, e.line, e.key, "unknown gain field");
    *dst = ini::to_doubles(doc, e);
    if (dst->size() != n_joints)
      throw ConfigError(doc.file, e.line, e.key, "expected " + std::to_string(n_joints) + " values");
  }
  for (const char* k : {"kp", "kd", "ki", "u0"})
    if (!s->find(k)) throw ConfigError(doc.file, s->line, k, "missing in [pid]");
  try {
    g.validate(u_max);
  } catch (const std::invalid_argument& ex) {
    throw ConfigError(doc.file, s->line, "pid", ex.what());
  }
  return g;
}

inline PidGains load_gains_file(const std::string& path, std::size_t n_joints, double u_max) {
  return load_gains(ini::parse_file(path), n_joints, u_max);
}

/// Rate estimate averaging the last two backward differences,
/// i.e. (x[k] - x[k-2]) / (2 dt). Falls back to one difference at start-up.
class TwoTickRate {
 public:
  explicit TwoTickRate(std::size_t n = 0, double dt = kControlDt) : n_(n), dt_(dt) {}

  JointVector update(const JointVector& x) {
    JointVector r(n_, 0.0);
    if (count_ >= 2) {
      for (std::size_t i = 0; i < n_; ++i) r[i] = (x[i] - prev2_[i]) / (2.0 * dt_);
    } else if (count_ == 1) {
      for (std::size_t i = 0; i < n_; ++i) r[i] = (x[i] - prev1_[i]) / dt_;
    }
    prev2_ = prev1_;
    prev1_ = x;
    ++count_;
    return r;
  }

  void reset() {
    count_ = 0;
    prev1_.clear();
    prev2_.clear();
  }

 private:
  std::size_t n_;
  double dt_;
  int count_ = 0;
  JointVector prev1_, prev2_;
};

/// Stateful PID: filtered derivative, rectangular integral updated before
/// use, integration frozen while the joint is saturated in the direction
/// the error would push it further.
class PidController {
 public:
  PidController(PidGains g, double u_max, double dt = kControlDt)
      : g_(std::move(g)), u_max_(u_max), dt_(dt), rate_(g_.size(), dt) {
    g_.validate(u_max_);
    reset();
  }

  void reset() {
    integral_.assign(g_.size(), 0.0);
    last_du_.assign(g_.size(), 0.0);
    saturated_.assign(g_.size(), false);
    rate_.reset();
  }

  ValveCommand update(const JointVector& e) {
    const auto de = rate_.update(e);
    for (std::size_t i = 0; i < g_.size(); ++i) {
      const bool winding = saturated_[i] && e[i] * last_du_[i] > 0.0;
      if (!winding) integral_[i] += e[i] * dt_;
    }
    auto c = pid_step(g_, e, de, integral_, u_max_);
    for (std::size_t i = 0; i < g_.size(); ++i) {
      last_du_[i] = g_.kp[i] * e[i] + g_.kd[i] * de[i] + g_.ki[i] * integral_[i];
      saturated_[i] = c.u_a[i] <= 0.0 || c.u_a[i] >= u_max_ || c.u_b[i] <= 0.0 || c.u_b[i] >= u_max_;
    }
    return c;
  }

  const JointVector& integral() const { return integral_; }
  const PidGains& gains() const { return g_; }

 private:
  PidGains g_;
  double u_max_;
  double dt_;
  TwoTickRate rate_;
  JointVector integral_, last_du_;
  std::vector<bool> saturated_;
};

struct RandomWalkSpec {
  double hold_min = 0.1;   // s
  double hold_max = 1.0;   // s
  double step_scale = 15;  // normalized units per update
  JointVector lo, hi;      // per-joint bounds
  std::optional<JointVector> start;  // defaults to the bounds' midpoint
  std::uint64_t seed = 0;

  /// Bounds inset `inset` units from every joint limit of `cfg`.
  static RandomWalkSpec for_plant(const PlantConfig& cfg, double inset = 5.0, std::uint64_t seed = 0) {
    RandomWalkSpec s;
    for (const auto& j : cfg.joints) {
      s.lo.push_back(j.range_lo + inset);
      s.hi.push_back(j.range_hi - inset);
    }
    s.seed = seed;
    return s;
  }

  void validate() const {
    if (!(hold_min > 0 && hold_min <= hold_max)) throw std::invalid_argument("need 0 < hold_min <= hold_max");
    if (!(step_scale >= 0)) throw std::invalid_argument("step_scale must be >= 0");
    if (lo.size() != hi.size() || lo.empty()) throw std::invalid_argument("random walk bounds malformed");
    for (std::size_t i = 0; i < lo.size(); ++i)
      if (!(lo[i] < hi[i])) throw std::invalid_argument("random walk bound lo >= hi");
    if (start && start->size() != lo.size()) throw std::invalid_argument("start has wrong arity");
  }
};

/// Piecewise-constant random-walk reference sampled at 30 Hz. Each joint
/// holds for U(hold_min, hold_max) seconds and then moves by
/// U(-step_scale, step_scale), reflected at its bounds.
inline std::vector<JointVector> gen_random_walk(const RandomWalkSpec& spec, double duration) {
  spec.validate();
  if (!(duration > 0)) throw std::invalid_argument("duration must be > 0");
  const std::size_t n = spec.lo.size();
  const auto ticks = static_cast<std::size_t>(std::lround(duration * kControlRate));
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> hold(spec.hold_min, spec.hold_max);
  std::uniform_real_distribution<double> inc(-spec.step_scale, spec.step_scale);

  std::vector<JointVector> ref(ticks, JointVector(n));
  for (std::size_t j = 0; j < n; ++j) {
    double x = spec.start ? std::clamp((*spec.start)[j], spec.lo[j], spec.hi[j])
                          : 0.5 * (spec.lo[j] + spec.hi[j]);
    std::size_t k = 0;
    while (k < ticks) {
      const auto len = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(hold(rng) * kControlRate)));
      for (std::size_t m = k; m < std::min(ticks, k + len); ++m) ref[m][j] = x;
      k += len;
      if (spec.step_scale > 0) {
        x += inc(rng);
        while (x < spec.lo[j] || x > spec.hi[j]) {
          if (x < spec.lo[j]) x = 2 * spec.lo[j] - x;
          if (x > spec.hi[j]) x = 2 * spec.hi[j] - x;
        }
      }
    }
  }
  return ref;
}

/// Signals logged at one control tick.
struct SampleRecord {
  long tick = 0;
  double t = 0.0;
  JointVector u_a, u_b, p_a, p_b, q, v, q_ref;
};

struct TrialLog {
  int trial = 0;
  std::uint64_t seed = 0;
  bool valid = true;
  std::string fault;
  std::vector<SampleRecord> rows;
};

struct Dataset {
  std::vector<std::string> joint_names;
  std::vector<TrialLog> trials;

  std::size_t n_joints() const { return joint_names.size(); }
  std::size_t rows() const {
    std::size_t n = 0;
    for (const auto& t : trials) n += t.rows.size();
    return n;
  }
};

/// Seed of trial `t` of a collection run.
inline std::uint64_t collect_trial_seed(std::uint64_t base, int t) {
  return base * 6364136223846793005ULL + 1442695040888963407ULL * static_cast<std::uint64_t>(t + 1);
}

/// Runs one PID tracking trial of the random walk `ref`, logging every tick.
template <ControlledPlant P>
TrialLog run_pid_trial(P& plant, const PidGains& gains, const std::vector<JointVector>& ref, int trial,
                       std::uint64_t seed) {
  const std::size_t n = plant.n_joints();
  TrialLog log{trial, seed, true, {}, {}};
  plant.reset(seed, ValveCommand(gains.u0, gains.u0));
  PidController pid(gains, plant.u_max(), plant.dt());
  TwoTickRate vel(n, plant.dt());
  log.rows.reserve(ref.size());
  try {
    for (std::size_t k = 0; k < ref.size(); ++k) {
      const auto f = plant.read();
      auto v = vel.update(f.q);
      JointVector e(n);
      for (std::size_t i = 0; i < n; ++i) e[i] = ref[k][i] - f.q[i];
      auto cmd = pid.update(e);
      log.rows.push_back(SampleRecord{static_cast<long>(k), static_cast<double>(k) * plant.dt(), cmd.u_a,
                                      cmd.u_b, f.p_a, f.p_b, f.q, std::move(v), ref[k]});
      plant.step(cmd);
    }
  } catch (const SimulationError& ex) {
    log.valid = false;
    log.fault = ex.what();
  }
  return log;
}

/// PID-driven random-motion data collection: `trials` runs of `duration`
/// seconds, each from a freshly reset plant with its own seeds.
template <ControlledPlant P>
Dataset collect(P& plant, const PidGains& gains, const RandomWalkSpec& walk, int trials, double duration,
                std::uint64_t seed, const std::vector<std::string>& joint_names) {
  if (gains.size() != plant.n_joints()) throw std::invalid_argument("gains do not match plant joints");
  if (trials < 1) throw std::invalid_argument("trials must be >= 1");
  Dataset ds;
  ds.joint_names = joint_names;
  for (int t = 0; t < trials; ++t) {
    const auto trial_seed = collect_trial_seed(seed, t);
    auto spec = walk;
    spec.seed = trial_seed ^ 0x9e3779b97f4a7c15ULL;
    auto ref = gen_random_walk(spec, duration);
    ds.trials.push_back(run_pid_trial(plant, gains, ref, t, trial_seed));
  }
  return ds;
}

}  // namespace pneumo
