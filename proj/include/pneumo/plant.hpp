#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "pneumo/config.hpp"
#include "pneumo/types.hpp"

namespace pneumo {

/// Linear valve map: 0 -> 0 MPaG, u_max -> p_supply. Out-of-range commands
/// are clamped.
inline double command_to_setpoint(double u, double u_max = 600.0, double p_supply = 0.6) {
  return std::clamp(u, 0.0, u_max) / u_max * p_supply;
}

/// Chamber A / chamber B commands for every joint at one control tick.
struct ValveCommand {
  JointVector u_a;
  JointVector u_b;

  ValveCommand() = default;
  explicit ValveCommand(std::size_t n, double a = 0.0, double b = 0.0) : u_a(n, a), u_b(n, b) {}
  ValveCommand(JointVector a, JointVector b) : u_a(std::move(a)), u_b(std::move(b)) {}

  std::size_t size() const { return u_a.size(); }

  ValveCommand clamped(double u_max) const {
    ValveCommand out = *this;
    for (auto* v : {&out.u_a, &out.u_b})
      for (auto& x : *v) x = std::isfinite(x) ? std::clamp(x, 0.0, u_max) : 0.0;
    return out;
  }

  bool operator==(const ValveCommand&) const = default;
};

/// Fixed-length FIFO of pending pressure setpoints (one transmission line).
class DelayLine {
 public:
  DelayLine() = default;
  DelayLine(std::size_t length, double fill) : buf_(length, fill) {}

  /// Pushes `in` and returns the value pushed `size()` calls ago.
  double shift(double in) {
    if (buf_.empty()) return in;
    double out = std::exchange(buf_[head_], in);
    head_ = (head_ + 1) % buf_.size();
    return out;
  }

  /// Entry that will be popped `i` shifts from now (0 = next).
  double pending(std::size_t i) const { return buf_[(head_ + i) % buf_.size()]; }
  std::size_t size() const { return buf_.size(); }

  bool operator==(const DelayLine&) const = default;

 private:
  std::vector<double> buf_;
  std::size_t head_ = 0;
};

struct PlantState {
  JointVector q;    // normalized position
  JointVector v;    // normalized units / s
  JointVector p_a;  // MPaG
  JointVector p_b;
  std::vector<DelayLine> delay_a;
  std::vector<DelayLine> delay_b;
  double t = 0.0;
  long tick = 0;
  std::mt19937_64 rng;

  bool operator==(const PlantState&) const = default;
};

/// Quantized, optionally noisy sensor readings.
struct SensorFrame {
  JointVector q;
  JointVector v;
  JointVector p_a;
  JointVector p_b;
  bool operator==(const SensorFrame&) const = default;
};

/// Quantizes `x` onto a 16-bit grid spanning [lo, hi].
inline double quantize16(double x, double lo, double hi) {
  const double step = (hi - lo) / 65535.0;
  const double c = std::clamp(x, lo, hi);
  return lo + std::round((c - lo) / step) * step;
}

/// Gravity torque and effective inertia of every joint at a configuration.
struct ChainLoads {
  JointVector gravity_torque;  // N·m, positive along +q
  JointVector inertia;         // kg·m² about each joint axis
};

/// Planar serial-chain statics. Joints with gravity_sign != 0 rotate the
/// chain in the vertical plane; other joints only carry their links along.
inline ChainLoads chain_loads(const PlantConfig& cfg, const JointVector& q) {
  const std::size_t n = cfg.n_joints();
  std::vector<double> jx(n), jy(n), cx(n), cy(n);
  double phi = 0.0, px = 0.0, py = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& j = cfg.joints[i];
    phi += j.link_offset;
    if (j.gravity_sign != 0) phi += j.gravity_sign * (q[i] - j.range_lo) * j.rad_per_unit();
    const double c = std::cos(phi), s = std::sin(phi);
    jx[i] = px;
    jy[i] = py;
    cx[i] = px + j.link_com_dist * c;
    cy[i] = py + j.link_com_dist * s;
    px += j.link_length * c;
    py += j.link_length * s;
  }
  ChainLoads out{JointVector(n, 0.0), JointVector(n, 0.0)};
  for (std::size_t i = 0; i < n; ++i) {
    const auto& j = cfg.joints[i];
    double moment = 0.0;
    double inertia = j.inertia_self;
    for (std::size_t k = i; k < n; ++k) {
      const double m = cfg.joints[k].link_mass;
      moment += m * (cx[k] - jx[i]);
      if (k > i) {
        // Joints outside the vertical plane turn about a vertical axis and
        // only see the horizontal offset of distal masses.
        const double dx = cx[k] - jx[i], dy = j.gravity_sign == 0 ? 0.0 : cy[k] - jy[i];
        inertia += m * (dx * dx + dy * dy);
      }
    }
    out.gravity_torque[i] = j.gravity_sign == 0 ? 0.0 : -j.gravity_sign * cfg.gravity * moment;
    out.inertia[i] = inertia;
  }
  return out;
}

/// Creates a state at rest at `q0` with chamber pressures and delay lines
/// settled on `init`.
inline PlantState make_state(const PlantConfig& cfg, JointVector q0, const ValveCommand& init,
                             std::uint64_t seed) {
  const std::size_t n = cfg.n_joints();
  PlantState s;
  s.q = std::move(q0);
  s.v.assign(n, 0.0);
  s.p_a.resize(n);
  s.p_b.resize(n);
  const auto cmd = init.clamped(cfg.u_max);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& j = cfg.joints[i];
    s.q[i] = std::clamp(s.q[i], j.range_lo, j.range_hi);
    s.p_a[i] = command_to_setpoint(cmd.u_a[i], cfg.u_max, cfg.p_supply);
    s.p_b[i] = command_to_setpoint(cmd.u_b[i], cfg.u_max, cfg.p_supply);
    s.delay_a.emplace_back(static_cast<std::size_t>(j.delay_steps), s.p_a[i]);
    s.delay_b.emplace_back(static_cast<std::size_t>(j.delay_steps), s.p_b[i]);
  }
  s.rng.seed(seed);
  return s;
}

/// Advances the plant by one control tick of length `dt`.
///
/// Per tick: setpoints pass through the per-joint delay lines, then
/// `cfg.substeps` substeps of first-order chamber lag, chain statics,
/// Karnopp friction, semi-implicit Euler and inelastic hard stops.
/// Velocities are rescaled by sqrt(I_old / I_new) when the effective
/// inertia changes so that configuration changes never inject energy.
inline PlantState step(const PlantConfig& cfg, PlantState s, const ValveCommand& raw_cmd,
                       double dt = kControlDt) {
  const std::size_t n = cfg.n_joints();
  if (raw_cmd.u_a.size() != n || raw_cmd.u_b.size() != n)
    throw std::invalid_argument("valve command has wrong arity");
  if (!(dt > 0)) throw std::invalid_argument("dt must be > 0");
  const auto cmd = raw_cmd.clamped(cfg.u_max);

  JointVector set_a(n), set_b(n);
  for (std::size_t i = 0; i < n; ++i) {
    set_a[i] = s.delay_a[i].shift(command_to_setpoint(cmd.u_a[i], cfg.u_max, cfg.p_supply));
    set_b[i] = s.delay_b[i].shift(command_to_setpoint(cmd.u_b[i], cfg.u_max, cfg.p_supply));
  }

  const double h = dt / cfg.substeps;
  JointVector decay(n);
  for (std::size_t i = 0; i < n; ++i) decay[i] = std::exp(-h / cfg.joints[i].lag_tau);

  auto loads = chain_loads(cfg, s.q);
  for (int sub = 0; sub < cfg.substeps; ++sub) {
    for (std::size_t i = 0; i < n; ++i) {
      s.p_a[i] = set_a[i] + (s.p_a[i] - set_a[i]) * decay[i];
      s.p_b[i] = set_b[i] + (s.p_b[i] - set_b[i]) * decay[i];
    }
    for (std::size_t i = 0; i < n; ++i) {
      const auto& j = cfg.joints[i];
      const double rpu = j.rad_per_unit();
      const double w = s.v[i] * rpu;  // rad/s
      const double drive = j.torque_per_mpa() * (s.p_a[i] - s.p_b[i]) + loads.gravity_torque[i];
      double accel;
      if (std::abs(s.v[i]) < cfg.v_dead) {
        if (std::abs(drive) <= j.static_torque()) {
          s.v[i] = 0.0;
          continue;
        }
        accel = (drive - std::copysign(j.coulomb_torque(), drive) - j.viscous_torque_coeff() * w) /
                loads.inertia[i];
      } else {
        accel = (drive - std::copysign(j.coulomb_torque(), w) - j.viscous_torque_coeff() * w) /
                loads.inertia[i];
      }
      double w_new = w + accel * h;
      if (w != 0.0 && w * w_new < 0.0) w_new = 0.0;  // friction cannot reverse motion
      s.v[i] = w_new / rpu;
    }
    for (std::size_t i = 0; i < n; ++i) {
      const auto& j = cfg.joints[i];
      s.q[i] += s.v[i] * h;
      if (s.q[i] <= j.range_lo) {
        s.q[i] = j.range_lo;
        if (s.v[i] < 0) s.v[i] = 0.0;
      } else if (s.q[i] >= j.range_hi) {
        s.q[i] = j.range_hi;
        if (s.v[i] > 0) s.v[i] = 0.0;
      }
    }
    auto next = chain_loads(cfg, s.q);
    for (std::size_t i = 0; i < n; ++i)
      if (s.v[i] != 0.0 && next.inertia[i] != loads.inertia[i])
        s.v[i] *= std::sqrt(loads.inertia[i] / next.inertia[i]);
    loads = std::move(next);
  }

  s.tick += 1;
  s.t = static_cast<double>(s.tick) * dt;
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(s.q[i]) || !std::isfinite(s.v[i]) || !std::isfinite(s.p_a[i]) ||
        !std::isfinite(s.p_b[i]))
      throw SimulationError(s.tick, "non-finite state on joint '" + cfg.joints[i].name + "'");
  }
  return s;
}

/// Sensor model: 16-bit quantization of every channel plus optional
/// Gaussian noise drawn from the state's generator.
inline SensorFrame read_sensors(const PlantConfig& cfg, PlantState& s, bool noise_on) {
  const std::size_t n = cfg.n_joints();
  SensorFrame f{JointVector(n), JointVector(n), JointVector(n), JointVector(n)};
  auto noise = [&](double sigma) {
    if (!noise_on || sigma <= 0.0) return 0.0;
    return std::normal_distribution<double>(0.0, sigma)(s.rng);
  };
  for (std::size_t i = 0; i < n; ++i) {
    const auto& j = cfg.joints[i];
    f.q[i] = quantize16(s.q[i] + noise(cfg.noise_q), j.range_lo, j.range_hi);
    f.v[i] = quantize16(s.v[i] + noise(cfg.noise_v), -cfg.v_fullscale, cfg.v_fullscale);
    f.p_a[i] = quantize16(s.p_a[i] + noise(cfg.noise_p), 0.0, cfg.p_sensor_max);
    f.p_b[i] = quantize16(s.p_b[i] + noise(cfg.noise_p), 0.0, cfg.p_sensor_max);
  }
  return f;
}

/// Command that presses every joint against the limit named in `targets`.
inline ValveCommand limit_push_command(const PlantConfig& cfg, const JointVector& targets) {
  ValveCommand c(cfg.n_joints());
  for (std::size_t i = 0; i < cfg.n_joints(); ++i) {
    if (targets[i] >= cfg.joints[i].range_hi) c.u_a[i] = cfg.u_max;
    else c.u_b[i] = cfg.u_max;
  }
  return c;
}

/// Simulated pneumatic robot: configuration plus evolving state.
class Plant {
 public:
  explicit Plant(PlantConfig cfg, std::uint64_t seed = 0)
      : cfg_(std::move(cfg)), noise_(cfg_.noise), jitter_(cfg_.jitter) {
    validate(cfg_);
    reset(seed);
  }

  const PlantConfig& config() const { return cfg_; }
  const PlantState& state() const { return state_; }
  PlantState& mutable_state() { return state_; }

  std::size_t n_joints() const { return cfg_.n_joints(); }
  double u_max() const { return cfg_.u_max; }
  double dt() const { return kControlDt; }
  double range_lo(std::size_t j) const { return cfg_.joints[j].range_lo; }
  double range_hi(std::size_t j) const { return cfg_.joints[j].range_hi; }
  const std::string& joint_name(std::size_t j) const { return cfg_.joints[j].name; }

  bool noise_enabled() const { return noise_; }
  bool jitter_enabled() const { return jitter_; }
  void set_noise(bool on) { noise_ = on; }
  void set_jitter(bool on) { jitter_ = on; }

  /// Re-seeds the generator and puts every joint at rest at its home
  /// position (plus jitter) with chambers settled on `init`.
  void reset(std::uint64_t seed, const ValveCommand& init) {
    JointVector q0(n_joints());
    for (std::size_t i = 0; i < n_joints(); ++i) q0[i] = cfg_.joints[i].home;
    state_ = make_state(cfg_, std::move(q0), init, seed);
    jitter_positions();
  }
  void reset(std::uint64_t seed) { reset(seed, ValveCommand(n_joints())); }

  /// Perturbs positions by N(0, jitter_q), reflecting at the stops so a
  /// joint resting on a limit moves inward. No-op when jitter is off.
  void jitter_positions() {
    if (!jitter_ || cfg_.jitter_q <= 0.0) return;
    std::normal_distribution<double> d(0.0, cfg_.jitter_q);
    for (std::size_t i = 0; i < n_joints(); ++i) {
      const auto& j = cfg_.joints[i];
      double q = state_.q[i] + d(state_.rng);
      if (q < j.range_lo) q = 2 * j.range_lo - q;
      if (q > j.range_hi) q = 2 * j.range_hi - q;
      state_.q[i] = std::clamp(q, j.range_lo, j.range_hi);
    }
  }

  void step(const ValveCommand& cmd) { state_ = pneumo::step(cfg_, std::move(state_), cmd, dt()); }
  SensorFrame read() { return read_sensors(cfg_, state_, noise_); }

  ChainLoads loads() const { return chain_loads(cfg_, state_.q); }

  /// Pressure difference (MPa) needed to hold joint `j` against gravity
  /// at the current configuration.
  double holding_pressure_difference(std::size_t j) const {
    return std::abs(loads().gravity_torque[j]) / cfg_.joints[j].torque_per_mpa();
  }

  /// Targets of `posture` for joint `j`: the configured table with the
  /// joint under test at its negative stop (P) or positive stop (N).
  /// Without a table, every other joint stays at its current limit side.
  JointVector posture_targets(Posture posture, std::size_t j) const {
    JointVector targets(n_joints());
    auto it = cfg_.postures.find(cfg_.joints[j].name);
    if (it != cfg_.postures.end() && it->second.count(posture)) {
      targets = it->second.at(posture);
    } else {
      for (std::size_t k = 0; k < n_joints(); ++k) targets[k] = cfg_.joints[k].range_lo;
    }
    targets[j] = direction_of(posture) == Direction::positive ? cfg_.joints[j].range_lo
                                                              : cfg_.joints[j].range_hi;
    return targets;
  }

  bool has_posture(Posture posture, std::size_t j) const {
    auto it = cfg_.postures.find(cfg_.joints[j].name);
    return it != cfg_.postures.end() && it->second.count(posture) > 0;
  }

  /// Drives every joint onto the stop named in `targets` and runs until all
  /// joints rest there. Returns immediately if they already do.
  void drive_to_limits(const JointVector& targets, double timeout_s = 10.0) {
    auto settled = [&] {
      for (std::size_t i = 0; i < n_joints(); ++i)
        if (state_.q[i] != targets[i] || std::abs(state_.v[i]) > kRestEps) return false;
      return true;
    };
    if (settled()) return;
    const auto cmd = limit_push_command(cfg_, targets);
    const long max_ticks = static_cast<long>(std::ceil(timeout_s / dt()));
    int calm = 0;
    for (long k = 0; k < max_ticks; ++k) {
      step(cmd);
      calm = settled() ? calm + 1 : 0;
      if (calm >= 3) return;
    }
    for (std::size_t i = 0; i < n_joints(); ++i)
      if (state_.q[i] != targets[i] || std::abs(state_.v[i]) > kRestEps)
        throw SettleError(cfg_.joints[i].name, "not at rest on its target limit after " +
                                                   std::to_string(timeout_s) + " s");
  }

  void set_posture(Posture posture, std::size_t j, double timeout_s = 10.0) {
    if (j >= n_joints()) throw std::out_of_range("joint index out of range");
    drive_to_limits(posture_targets(posture, j), timeout_s);
  }

  static constexpr double kRestEps = 1e-9;

 private:
  PlantConfig cfg_;
  PlantState state_;
  bool noise_;
  bool jitter_;
};

/// Anything the experiment and control code can drive at 30 Hz.
template <class P>
concept ControlledPlant = requires(P p, const P cp, const ValveCommand& c, Posture pos, std::size_t j,
                                   const JointVector& targets, std::uint64_t seed) {
  { cp.n_joints() } -> std::convertible_to<std::size_t>;
  { cp.u_max() } -> std::convertible_to<double>;
  { cp.dt() } -> std::convertible_to<double>;
  { cp.range_lo(j) } -> std::convertible_to<double>;
  { cp.range_hi(j) } -> std::convertible_to<double>;
  { cp.posture_targets(pos, j) } -> std::convertible_to<JointVector>;
  p.step(c);
  { p.read() } -> std::convertible_to<SensorFrame>;
  p.set_posture(pos, j);
  p.drive_to_limits(targets);
  p.reset(seed);
  p.reset(seed, c);
  p.jitter_positions();
};

static_assert(ControlledPlant<Plant>);

}  // namespace pneumo
