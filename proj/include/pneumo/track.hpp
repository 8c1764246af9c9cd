#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "pneumo/datagen.hpp"
#include "pneumo/learn/mlp.hpp"
#include "pneumo/spline.hpp"
#include "pneumo/stats.hpp"

namespace pneumo {

/// Knot-defined per-joint reference, evaluated through clamped cubic splines.
class ReferenceTrajectory {
 public:
  ReferenceTrajectory() = default;

  ReferenceTrajectory(std::vector<double> knot_t, std::vector<JointVector> knots)
      : t_(std::move(knot_t)), knots_(std::move(knots)) {
    if (t_.size() < 2 || knots_.size() != t_.size()) throw std::invalid_argument("reference needs >= 2 knots");
    const std::size_t n = knots_.front().size();
    if (n == 0) throw std::invalid_argument("reference has no joints");
    for (const auto& k : knots_)
      if (k.size() != n) throw std::invalid_argument("reference knots differ in arity");
    for (std::size_t j = 0; j < n; ++j) {
      std::vector<double> y(t_.size());
      for (std::size_t i = 0; i < t_.size(); ++i) y[i] = knots_[i][j];
      splines_.emplace_back(t_, std::move(y));
    }
  }

  std::size_t n_joints() const { return splines_.size(); }
  double t_begin() const { return t_.front(); }
  double t_end() const { return t_.back(); }
  double duration() const { return t_.back() - t_.front(); }
  const std::vector<double>& knot_times() const { return t_; }
  const std::vector<JointVector>& knots() const { return knots_; }

  JointVector value(double t) const {
    JointVector out(n_joints());
    for (std::size_t j = 0; j < n_joints(); ++j) out[j] = splines_[j](t);
    return out;
  }
  JointVector derivative(double t) const {
    JointVector out(n_joints());
    for (std::size_t j = 0; j < n_joints(); ++j) out[j] = splines_[j].derivative(t);
    return out;
  }

  /// Samples at the control rate from t_begin; ticks past the end hold the last value.
  std::vector<JointVector> sample(std::size_t ticks, double dt = kControlDt) const {
    std::vector<JointVector> out(ticks);
    for (std::size_t k = 0; k < ticks; ++k) out[k] = value(t_begin() + static_cast<double>(k) * dt);
    return out;
  }

 private:
  std::vector<double> t_;
  std::vector<JointVector> knots_;
  std::vector<CubicSpline> splines_;
};

/// Throws listing every knot outside the joint ranges of `cfg`.
inline void check_reference_bounds(const PlantConfig& cfg, const std::vector<double>& t,
                                   const std::vector<JointVector>& knots) {
  std::string bad;
  for (std::size_t i = 0; i < knots.size(); ++i) {
    if (knots[i].size() != cfg.n_joints()) throw std::invalid_argument("reference arity does not match plant");
    for (std::size_t j = 0; j < knots[i].size(); ++j) {
      const auto& jp = cfg.joints[j];
      if (!(knots[i][j] >= jp.range_lo && knots[i][j] <= jp.range_hi)) {
        if (!bad.empty()) bad += ", ";
        bad += jp.name + "@t=" + std::to_string(t[i]) + "=" + std::to_string(knots[i][j]);
      }
    }
  }
  if (!bad.empty()) throw std::invalid_argument("reference knots outside joint range: " + bad);
}

/// Recorded source: validated knots from a log.
inline ReferenceTrajectory make_recorded_reference(const PlantConfig& cfg, std::vector<double> t,
                                                   std::vector<JointVector> knots) {
  check_reference_bounds(cfg, t, knots);
  ReferenceTrajectory r(std::move(t), std::move(knots));
  if (r.duration() < 5.0) throw std::invalid_argument("reference duration must be >= 5 s");
  return r;
}

/// Scripted source: per joint, a sum of sinusoids with random frequency and
/// phase, interrupted by holds, around the joint's home position.
struct ScriptedSpec {
  double duration = 30.0;     // s
  double knot_dt = 0.2;       // s
  double amplitude = 35.0;    // peak excursion from home, normalized units
  int components = 3;         // sinusoids per joint
  double f_min = 0.05;        // Hz
  double f_max = 0.25;        // Hz
  double hold_fraction = 0.2; // share of the run spent in holds
  double hold_len = 1.5;      // s per hold
  double ramp_in = 2.0;       // s envelope rise from home
  std::uint64_t seed = 1;

  void validate() const {
    if (!(duration >= 5.0)) throw std::invalid_argument("reference duration must be >= 5 s");
    if (!(knot_dt > 0 && knot_dt < duration)) throw std::invalid_argument("knot_dt out of range");
    if (!(amplitude >= 0)) throw std::invalid_argument("amplitude must be >= 0");
    if (components < 1) throw std::invalid_argument("components must be >= 1");
    if (!(f_min > 0 && f_min <= f_max)) throw std::invalid_argument("need 0 < f_min <= f_max");
    if (!(hold_fraction >= 0 && hold_fraction < 1)) throw std::invalid_argument("hold_fraction in [0, 1)");
    if (!(hold_len > 0)) throw std::invalid_argument("hold_len must be > 0");
    if (!(ramp_in >= 0)) throw std::invalid_argument("ramp_in must be >= 0");
  }
};

inline ReferenceTrajectory make_scripted_reference(const PlantConfig& cfg, const ScriptedSpec& spec) {
  spec.validate();
  const std::size_t n = cfg.n_joints();
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> uf(spec.f_min, spec.f_max), uph(0.0, 2 * std::numbers::pi), u01(0.0, 1.0);

  const auto n_knots = static_cast<std::size_t>(std::floor(spec.duration / spec.knot_dt + 1e-9)) + 1;
  std::vector<double> t(n_knots);
  for (std::size_t i = 0; i < n_knots; ++i) t[i] = static_cast<double>(i) * spec.knot_dt;
  std::vector<JointVector> knots(n_knots, JointVector(n));

  for (std::size_t j = 0; j < n; ++j) {
    const auto& jp = cfg.joints[j];
    std::vector<double> f(static_cast<std::size_t>(spec.components)), ph(f.size()), w(f.size());
    double wsum = 0.0;
    for (std::size_t c = 0; c < f.size(); ++c) {
      f[c] = uf(rng);
      ph[c] = uph(rng);
      w[c] = 0.5 + u01(rng);
      wsum += w[c];
    }
    // Hold windows on a per-joint schedule: the signal's own clock stops during a hold.
    const int n_holds = static_cast<int>(std::floor(spec.hold_fraction * spec.duration / spec.hold_len));
    std::vector<double> hold_start;
    for (int h = 0; h < n_holds; ++h)
      hold_start.push_back(spec.ramp_in + u01(rng) * std::max(0.0, spec.duration - spec.ramp_in - spec.hold_len));
    std::sort(hold_start.begin(), hold_start.end());
    const double home = jp.home;
    const double amp = std::min(spec.amplitude, std::min(home - jp.range_lo, jp.range_hi - home) - 1.0);
    for (std::size_t i = 0; i < n_knots; ++i) {
      double clock = t[i];
      for (double hs : hold_start) clock -= std::clamp(t[i] - hs, 0.0, spec.hold_len);
      double s = 0.0;
      for (std::size_t c = 0; c < f.size(); ++c)
        s += w[c] * (std::sin(2 * std::numbers::pi * f[c] * clock + ph[c]) - std::sin(ph[c]));
      s /= 2.0 * wsum;  // |s| <= 1
      const double env = spec.ramp_in > 0 ? std::min(1.0, t[i] / spec.ramp_in) : 1.0;
      knots[i][j] = home + std::max(0.0, amp) * env * s;
    }
  }
  check_reference_bounds(cfg, t, knots);
  return ReferenceTrajectory(std::move(t), std::move(knots));
}

/// Linear ramp on one joint from `from` to `to` at `speed` units/s, other
/// joints held at home, with `settle` seconds of hold at both ends.
inline ReferenceTrajectory make_ramp_reference(const PlantConfig& cfg, std::size_t joint, double from, double to,
                                               double speed, double settle = 1.0) {
  if (joint >= cfg.n_joints()) throw std::invalid_argument("ramp joint out of range");
  if (!(speed > 0)) throw std::invalid_argument("ramp speed must be > 0");
  const double T = std::abs(to - from) / speed;
  JointVector home(cfg.n_joints());
  for (std::size_t j = 0; j < cfg.n_joints(); ++j) home[j] = cfg.joints[j].home;
  std::vector<double> t;
  std::vector<JointVector> knots;
  const double step = 0.2;
  auto add = [&](double tt, double v) {
    auto k = home;
    k[joint] = v;
    t.push_back(tt);
    knots.push_back(std::move(k));
  };
  add(0.0, from);
  add(settle, from);
  const int n = std::max(1, static_cast<int>(std::ceil(T / step)));
  for (int i = 1; i <= n; ++i) add(settle + T * i / n, from + (to - from) * static_cast<double>(i) / n);
  add(2 * settle + T, to);
  check_reference_bounds(cfg, t, knots);
  ReferenceTrajectory r(std::move(t), std::move(knots));
  return r;
}

enum class ControllerKind { pid, model };

inline std::string_view to_string(ControllerKind c) { return c == ControllerKind::pid ? "pid" : "model"; }
inline ControllerKind parse_controller(std::string_view s) {
  if (s == "pid") return ControllerKind::pid;
  if (s == "model") return ControllerKind::model;
  throw std::invalid_argument("unknown controller '" + std::string(s) + "' (pid|model)");
}

struct TrackResult {
  ControllerKind controller = ControllerKind::pid;
  std::uint64_t seed = 0;
  bool valid = true;
  std::string fault;
  std::vector<SampleRecord> rows;  // q_ref(k), measured q(k), applied commands
  JointVector rmse;

  std::size_t n_joints() const { return rmse.size(); }
  std::vector<double> column_q(std::size_t j) const {
    std::vector<double> out;
    for (const auto& r : rows) out.push_back(r.q[j]);
    return out;
  }
  std::vector<double> column_ref(std::size_t j) const {
    std::vector<double> out;
    for (const auto& r : rows) out.push_back(r.q_ref[j]);
    return out;
  }
};

inline JointVector tracking_rmse(const std::vector<SampleRecord>& rows, std::size_t n) {
  JointVector out(n, std::nan(""));
  if (rows.empty()) return out;
  for (std::size_t j = 0; j < n; ++j) {
    std::vector<double> a, b;
    a.reserve(rows.size());
    b.reserve(rows.size());
    for (const auto& r : rows) {
      a.push_back(r.q_ref[j]);
      b.push_back(r.q[j]);
    }
    out[j] = rmse(a, b);
  }
  return out;
}

namespace detail {

inline void check_track_inputs(std::size_t n, const std::vector<JointVector>& ref, std::size_t ticks,
                               const PlantConfig* cfg) {
  if (ticks == 0) throw std::invalid_argument("tracking duration must be > 0");
  if (ref.empty()) throw std::invalid_argument("empty reference");
  for (const auto& r : ref) {
    if (r.size() != n) throw std::invalid_argument("reference arity does not match plant");
    if (cfg)
      for (std::size_t j = 0; j < n; ++j)
        if (!(r[j] >= cfg->joints[j].range_lo && r[j] <= cfg->joints[j].range_hi))
          throw std::invalid_argument("reference outside the range of joint " + cfg->joints[j].name);
  }
}

template <ControlledPlant P, class Policy>
TrackResult run_tracking(P& plant, const std::vector<JointVector>& ref, std::size_t ticks, std::uint64_t seed,
                         const ValveCommand& init, ControllerKind kind, Policy&& policy) {
  const std::size_t n = plant.n_joints();
  TrackResult res;
  res.controller = kind;
  res.seed = seed;
  plant.reset(seed, init);
  TwoTickRate vel(n, plant.dt());
  res.rows.reserve(ticks);
  try {
    for (std::size_t k = 0; k < ticks; ++k) {
      const auto f = plant.read();
      auto v = vel.update(f.q);
      const auto cmd = policy(k, f, v).clamped(plant.u_max());
      res.rows.push_back(SampleRecord{static_cast<long>(k), static_cast<double>(k) * plant.dt(), cmd.u_a, cmd.u_b,
                                      f.p_a, f.p_b, f.q, std::move(v), ref[std::min(k, ref.size() - 1)]});
      plant.step(cmd);
    }
  } catch (const SimulationError& ex) {
    res.valid = false;
    res.fault = ex.what();
  }
  res.rmse = tracking_rmse(res.rows, n);
  return res;
}

}  // namespace detail

/// Closed-loop tracking with the inverse model: at tick k the model sees the
/// current measurements and q_ref(k + tau) (last value held past the end).
template <ControlledPlant P>
TrackResult track_model(P& plant, const learn::InverseModel& model, const std::vector<JointVector>& ref,
                        std::size_t ticks, std::uint64_t seed, const ValveCommand& init,
                        const PlantConfig* bounds = nullptr) {
  const std::size_t n = plant.n_joints();
  if (model.n_joints != n) throw std::invalid_argument("model joint count does not match plant");
  detail::check_track_inputs(n, ref, ticks, bounds);
  const auto tau = static_cast<std::size_t>(model.tau);
  learn::RowVector x(static_cast<Eigen::Index>(learn::input_dim(n)));
  return detail::run_tracking(plant, ref, ticks, seed, init, ControllerKind::model,
                              [&](std::size_t k, const SensorFrame& f, const JointVector& v) {
                                const auto& target = ref[std::min(k + tau, ref.size() - 1)];
                                learn::fill_input(x, f.q, v, f.p_a, f.p_b, target);
                                const auto y = model.predict(x);
                                ValveCommand c(n);
                                for (std::size_t i = 0; i < n; ++i) {
                                  c.u_a[i] = y(static_cast<Eigen::Index>(i));
                                  c.u_b[i] = y(static_cast<Eigen::Index>(n + i));
                                }
                                return c;
                              });
}

/// Baseline command for model runs: the training-set mean of each output.
inline ValveCommand model_rest_command(const learn::InverseModel& model) {
  const std::size_t n = model.n_joints;
  ValveCommand c(n);
  for (std::size_t i = 0; i < n; ++i) {
    c.u_a[i] = model.scale.y.mean(static_cast<Eigen::Index>(i));
    c.u_b[i] = model.scale.y.mean(static_cast<Eigen::Index>(n + i));
  }
  return c;
}

template <ControlledPlant P>
TrackResult track_pid(P& plant, const PidGains& gains, const std::vector<JointVector>& ref, std::size_t ticks,
                      std::uint64_t seed, const PlantConfig* bounds = nullptr) {
  const std::size_t n = plant.n_joints();
  if (gains.size() != n) throw std::invalid_argument("gains do not match plant joints");
  detail::check_track_inputs(n, ref, ticks, bounds);
  PidController pid(gains, plant.u_max(), plant.dt());
  return detail::run_tracking(plant, ref, ticks, seed, ValveCommand(gains.u0, gains.u0), ControllerKind::pid,
                              [&](std::size_t k, const SensorFrame& f, const JointVector&) {
                                const auto& r = ref[std::min(k, ref.size() - 1)];
                                JointVector e(n);
                                for (std::size_t i = 0; i < n; ++i) e[i] = r[i] - f.q[i];
                                return pid.update(e);
                              });
}

/// Seed of tracking trial `t`.
inline std::uint64_t track_trial_seed(std::uint64_t base, int t) {
  return (base + 0x632be59bd9b4e019ULL) * 0x9e3779b97f4a7c15ULL + static_cast<std::uint64_t>(t) * 0xbf58476d1ce4e5b9ULL;
}

// ---- metrics ---------------------------------------------------------------

/// Lag (ticks) maximizing the normalized cross-correlation between the
/// reference and the response, searched over [-max_lag, max_lag]. Positive
/// means the response trails the reference.
inline int xcorr_lag(std::span<const double> ref, std::span<const double> q, int max_lag = 60) {
  if (ref.size() != q.size() || ref.size() < 3) throw std::invalid_argument("xcorr_lag: bad lengths");
  const double mr = mean(ref), mq = mean(q);
  const auto N = static_cast<long>(ref.size());
  int best = 0;
  double best_c = -std::numeric_limits<double>::infinity();
  for (int lag = -max_lag; lag <= max_lag; ++lag) {
    double s = 0, sr = 0, sq = 0;
    for (long k = 0; k < N; ++k) {
      const long m = k + lag;
      if (m < 0 || m >= N) continue;
      const double a = ref[static_cast<std::size_t>(k)] - mr, b = q[static_cast<std::size_t>(m)] - mq;
      s += a * b;
      sr += a * a;
      sq += b * b;
    }
    if (sr <= 0 || sq <= 0) continue;
    const double c = s / std::sqrt(sr * sq);
    if (c > best_c) {
      best_c = c;
      best = lag;
    }
  }
  return best;
}

/// Stick-slip dwells: stationary runs of at least `min_ticks` ticks that lie
/// between two moving phases while the reference keeps moving, and during
/// which the tracking error reaches `min_error`. Motion is classified from the
/// response's displacement over `window` ticks with hysteresis: below `still`
/// units/tick is stationary, above `moving` is moving, in between keeps the
/// previous state. Only [from, to) is examined.
struct DwellOptions {
  double still = 0.05;       // units per tick
  double moving = 0.15;      // units per tick
  double ref_moving = 0.02;  // units per tick the reference must move
  double min_error = 3.0;    // units of tracking error built up while stuck
  int min_ticks = 3;
  int window = 3;
};

inline int count_dwells(std::span<const double> ref, std::span<const double> q, std::size_t from, std::size_t to,
                        const DwellOptions& o = {}) {
  if (ref.size() != q.size()) throw std::invalid_argument("count_dwells: length mismatch");
  to = std::min(to, q.size());
  const auto w = static_cast<std::size_t>(std::max(1, o.window));
  bool moving = false, seen_motion = false;
  int run = 0, dwells = 0;
  double peak_error = 0.0;
  for (std::size_t k = from; k + w < to; ++k) {
    const double dq = std::abs(q[k + w] - q[k]) / static_cast<double>(w);
    const double dr = std::abs(ref[k + w] - ref[k]) / static_cast<double>(w);
    if (dq >= o.moving) {
      if (!moving && seen_motion && run >= o.min_ticks && peak_error >= o.min_error) ++dwells;
      moving = true;
      seen_motion = true;
      run = 0;
      peak_error = 0.0;
    } else if (dq < o.still) {
      moving = false;
    }
    if (!moving && dr >= o.ref_moving) {
      ++run;
      peak_error = std::max(peak_error, std::abs(ref[k] - q[k]));
    }
  }
  return dwells;
}

// ---- comparison ------------------------------------------------------------

struct ControllerSummary {
  ControllerKind controller = ControllerKind::pid;
  std::vector<MeanStd> rmse;             // per joint over trials
  std::vector<JointVector> mean_q;       // per tick
  std::vector<JointVector> std_q;        // per tick
  std::size_t trials = 0;
};

struct Comparison {
  std::vector<JointVector> ref;
  std::vector<ControllerSummary> controllers;
};

inline ControllerSummary summarize_runs(const std::vector<TrackResult>& runs) {
  if (runs.empty()) throw std::invalid_argument("no runs to summarize");
  ControllerSummary s;
  s.controller = runs.front().controller;
  s.trials = runs.size();
  const std::size_t n = runs.front().n_joints();
  const std::size_t T = runs.front().rows.size();
  for (const auto& r : runs)
    if (r.rows.size() != T || r.n_joints() != n) throw std::invalid_argument("runs differ in length or arity");
  for (std::size_t j = 0; j < n; ++j) {
    std::vector<double> v;
    for (const auto& r : runs) v.push_back(r.rmse[j]);
    s.rmse.push_back(summarize(v));
  }
  s.mean_q.assign(T, JointVector(n));
  s.std_q.assign(T, JointVector(n));
  std::vector<double> col(runs.size());
  for (std::size_t k = 0; k < T; ++k)
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t t = 0; t < runs.size(); ++t) col[t] = runs[t].rows[k].q[j];
      s.mean_q[k][j] = mean(col);
      s.std_q[k][j] = stddev(col);
    }
  return s;
}

/// Groups runs by controller; all runs must share one reference.
inline Comparison compare(const std::vector<TrackResult>& runs) {
  if (runs.empty()) throw std::invalid_argument("no runs to compare");
  Comparison c;
  for (const auto& r : runs.front().rows) c.ref.push_back(r.q_ref);
  for (const auto& run : runs) {
    if (run.rows.size() != c.ref.size()) throw std::invalid_argument("runs track references of different length");
    for (std::size_t k = 0; k < c.ref.size(); ++k)
      if (run.rows[k].q_ref != c.ref[k]) throw std::invalid_argument("runs track different references");
  }
  for (auto kind : {ControllerKind::pid, ControllerKind::model}) {
    std::vector<TrackResult> sel;
    for (const auto& r : runs)
      if (r.controller == kind) sel.push_back(r);
    if (!sel.empty()) c.controllers.push_back(summarize_runs(sel));
  }
  return c;
}

}  // namespace pneumo
