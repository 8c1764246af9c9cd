#pragma once

#include <array>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pneumo/ini.hpp"
#include "pneumo/types.hpp"

namespace pneumo {

enum class ActuatorKind { rotary, cylinder };

/// Physical and actuator parameters of one joint.
///
/// Positions are normalized to [range_lo, range_hi] (0..100 for every
/// shipped joint). Generalized forces are N·m for rotary actuators and N
/// for cylinders; a cylinder drives its joint through `lever_arm`.
struct JointParams {
  std::string name;
  ActuatorKind actuator_kind = ActuatorKind::rotary;
  double torque_gain = 1.0;       // generalized force per MPa of pressure difference
  double range_lo = 0.0;
  double range_hi = 100.0;
  double angle_scale = 0.0157079632679;  // rad (or m) per normalized unit
  double lever_arm = 1.0;         // m, cylinders only
  int delay_steps = 8;
  double lag_tau = 0.06;          // s
  double static_friction = 0.0;
  double coulomb_friction = 0.0;
  double viscous_friction = 0.0;  // per rad/s (or m/s)
  double inertia_self = 0.01;     // kg·m²
  double link_mass = 0.0;
  double link_com_dist = 0.0;
  double link_length = 0.0;
  int gravity_sign = 0;
  double link_offset = 0.0;       // rad, link angle above horizontal at range_lo
  double home = 50.0;             // reset position

  double range() const { return range_hi - range_lo; }
  bool is_cylinder() const { return actuator_kind == ActuatorKind::cylinder; }

  /// Actuator torque per MPa about the joint axis.
  double torque_per_mpa() const { return is_cylinder() ? torque_gain * lever_arm : torque_gain; }
  /// Joint rotation (rad) per normalized unit.
  double rad_per_unit() const { return is_cylinder() ? angle_scale / lever_arm : angle_scale; }
  /// Conversion of a generalized force to a torque about the joint axis.
  double force_to_torque() const { return is_cylinder() ? lever_arm : 1.0; }
  double static_torque() const { return static_friction * force_to_torque(); }
  double coulomb_torque() const { return coulomb_friction * force_to_torque(); }
  /// Viscous coefficient in N·m per rad/s.
  double viscous_torque_coeff() const {
    return is_cylinder() ? viscous_friction * lever_arm * lever_arm : viscous_friction;
  }
};

/// Posture table for one joint under test: a target angle per joint for
/// each of the four postures.
using PostureTable = std::map<Posture, JointVector>;

struct PlantConfig {
  std::string name = "plant";
  double u_max = 600.0;        // command units
  double p_supply = 0.6;       // MPaG at u_max
  int substeps = 10;
  double gravity = 9.81;
  double v_dead = 0.5;         // normalized units/s
  double noise_q = 0.05;       // sensor noise sigmas
  double noise_v = 0.5;
  double noise_p = 0.0005;
  double jitter_q = 0.2;       // initial-state jitter sigma
  double v_fullscale = 1000.0; // velocity channel spans ±v_fullscale
  double p_sensor_max = 1.0;   // pressure channel spans [0, p_sensor_max]
  bool noise = true;
  bool jitter = true;
  std::vector<JointParams> joints;
  std::map<std::string, PostureTable> postures;  // keyed by joint name

  std::size_t n_joints() const { return joints.size(); }

  std::optional<std::size_t> joint_index(const std::string& name) const {
    for (std::size_t i = 0; i < joints.size(); ++i)
      if (joints[i].name == name) return i;
    return std::nullopt;
  }
};

/// Checks the JointParams / PlantConfig invariants; throws ConfigError.
inline void validate(const PlantConfig& cfg, const std::string& file = {}) {
  auto fail = [&](const std::string& field, const std::string& what) {
    throw ConfigError(file, 0, field, what);
  };
  if (cfg.joints.empty()) fail("joints", "at least one joint is required");
  if (!(cfg.u_max > 0)) fail("u_max", "must be > 0");
  if (!(cfg.p_supply > 0)) fail("p_supply", "must be > 0");
  if (cfg.substeps < 1) fail("substeps", "must be >= 1");
  if (!(cfg.v_dead >= 0)) fail("v_dead", "must be >= 0");
  for (double s : {cfg.noise_q, cfg.noise_v, cfg.noise_p, cfg.jitter_q})
    if (!(s >= 0)) fail("noise", "noise sigmas must be >= 0");
  for (const auto& j : cfg.joints) {
    const std::string p = j.name + ".";
    if (!(j.range_lo < j.range_hi)) fail(p + "range_lo", "range_lo must be < range_hi");
    if (j.delay_steps < 0) fail(p + "delay_steps", "must be >= 0");
    if (!(j.lag_tau > 0)) fail(p + "lag_tau", "must be > 0");
    if (!(j.static_friction >= 0)) fail(p + "static_friction", "must be >= 0");
    if (!(j.coulomb_friction >= 0 && j.coulomb_friction <= j.static_friction))
      fail(p + "coulomb_friction", "must satisfy 0 <= coulomb_friction <= static_friction");
    if (!(j.viscous_friction >= 0)) fail(p + "viscous_friction", "must be >= 0");
    if (!(j.torque_gain > 0)) fail(p + "torque_gain", "must be > 0");
    if (!(j.inertia_self > 0)) fail(p + "inertia_self", "must be > 0");
    if (!(j.angle_scale > 0)) fail(p + "angle_scale", "must be > 0");
    if (j.is_cylinder() && !(j.lever_arm > 0)) fail(p + "lever_arm", "must be > 0 for cylinders");
    if (j.gravity_sign < -1 || j.gravity_sign > 1) fail(p + "gravity_sign", "must be -1, 0 or 1");
    if (!(j.link_mass >= 0 && j.link_com_dist >= 0 && j.link_length >= 0))
      fail(p + "link_mass", "mass and geometry must be >= 0");
    if (j.home < j.range_lo || j.home > j.range_hi) fail(p + "home", "must lie within the joint range");
  }
  for (const auto& [name, table] : cfg.postures) {
    if (!cfg.joint_index(name)) fail("posture " + name, "posture table for unknown joint");
    for (const auto& [posture, angles] : table) {
      if (angles.size() != cfg.n_joints())
        fail("posture " + name + "." + std::string(to_string(posture)), "expected one angle per joint");
      for (std::size_t k = 0; k < angles.size(); ++k) {
        const auto& jk = cfg.joints[k];
        if (angles[k] != jk.range_lo && angles[k] != jk.range_hi)
          fail("posture " + name + "." + std::string(to_string(posture)),
               "angle for joint '" + jk.name + "' must be one of its limits");
      }
    }
  }
}

namespace detail {

inline bool parse_bool(const ini::Document& doc, const ini::Entry& e) {
  if (e.value == "on" || e.value == "true" || e.value == "1" || e.value == "yes") return true;
  if (e.value == "off" || e.value == "false" || e.value == "0" || e.value == "no") return false;
  throw ConfigError(doc.file, e.line, e.key, "expected on/off, got '" + e.value + "'");
}

inline void read_plant_section(const ini::Document& doc, const ini::Section& s, PlantConfig& cfg) {
  for (const auto& e : s.entries) {
    if (e.key == "name") cfg.name = e.value;
    else if (e.key == "u_max") cfg.u_max = ini::to_double(doc, e);
    else if (e.key == "p_supply") cfg.p_supply = ini::to_double(doc, e);
    else if (e.key == "substeps") cfg.substeps = static_cast<int>(ini::to_long(doc, e));
    else if (e.key == "gravity") cfg.gravity = ini::to_double(doc, e);
    else if (e.key == "v_dead") cfg.v_dead = ini::to_double(doc, e);
    else if (e.key == "noise_q") cfg.noise_q = ini::to_double(doc, e);
    else if (e.key == "noise_v") cfg.noise_v = ini::to_double(doc, e);
    else if (e.key == "noise_p") cfg.noise_p = ini::to_double(doc, e);
    else if (e.key == "jitter_q") cfg.jitter_q = ini::to_double(doc, e);
    else if (e.key == "v_fullscale") cfg.v_fullscale = ini::to_double(doc, e);
    else if (e.key == "p_sensor_max") cfg.p_sensor_max = ini::to_double(doc, e);
    else if (e.key == "noise") cfg.noise = parse_bool(doc, e);
    else if (e.key == "jitter") cfg.jitter = parse_bool(doc, e);
    else throw ConfigError(doc.file, e.line, e.key, "unknown plant field");
  }
}

inline JointParams read_joint_section(const ini::Document& doc, const ini::Section& s, std::string name) {
  JointParams j;
  j.name = std::move(name);
  bool has_home = false;
  static constexpr std::array required = {"torque_gain", "delay_steps", "lag_tau", "inertia_self"};
  for (const char* key : required)
    if (!s.find(key)) throw ConfigError(doc.file, s.line, key, "missing in [" + s.name + "]");
  for (const auto& e : s.entries) {
    auto num = [&] { return ini::to_double(doc, e); };
    if (e.key == "actuator_kind") {
      if (e.value == "rotary") j.actuator_kind = ActuatorKind::rotary;
      else if (e.value == "cylinder") j.actuator_kind = ActuatorKind::cylinder;
      else throw ConfigError(doc.file, e.line, e.key, "expected rotary|cylinder");
    } else if (e.key == "torque_gain") j.torque_gain = num();
    else if (e.key == "range_lo") j.range_lo = num();
    else if (e.key == "range_hi") j.range_hi = num();
    else if (e.key == "angle_scale") j.angle_scale = num();
    else if (e.key == "lever_arm") j.lever_arm = num();
    else if (e.key == "delay_steps") j.delay_steps = static_cast<int>(ini::to_long(doc, e));
    else if (e.key == "lag_tau") j.lag_tau = num();
    else if (e.key == "static_friction") j.static_friction = num();
    else if (e.key == "coulomb_friction") j.coulomb_friction = num();
    else if (e.key == "viscous_friction") j.viscous_friction = num();
    else if (e.key == "inertia_self") j.inertia_self = num();
    else if (e.key == "link_mass") j.link_mass = num();
    else if (e.key == "link_com_dist") j.link_com_dist = num();
    else if (e.key == "link_length") j.link_length = num();
    else if (e.key == "gravity_sign") j.gravity_sign = static_cast<int>(ini::to_long(doc, e));
    else if (e.key == "link_offset") j.link_offset = num();
    else if (e.key == "home") { j.home = num(); has_home = true; }
    else throw ConfigError(doc.file, e.line, e.key, "unknown joint field in [" + s.name + "]");
  }
  if (!has_home) j.home = 0.5 * (j.range_lo + j.range_hi);
  return j;
}

}  // namespace detail

/// Builds a PlantConfig from a parsed INI document.
///
/// Sections: `[plant]`, one `[joint <name>]` per joint in chain order, and
/// optional `[posture <joint>]` tables whose keys EP/HP/EN/HN list one
/// target per joint (`lo`, `hi` or a numeric limit).
inline PlantConfig load_config(const ini::Document& doc) {
  PlantConfig cfg;
  std::vector<const ini::Section*> posture_sections;
  for (const auto& s : doc.sections) {
    if (s.name == "plant") {
      detail::read_plant_section(doc, s, cfg);
    } else if (s.name.rfind("joint ", 0) == 0) {
      auto name = std::string(ini::trim(std::string_view(s.name).substr(6)));
      if (cfg.joint_index(name)) throw ConfigError(doc.file, s.line, "", "duplicate joint '" + name + "'");
      cfg.joints.push_back(detail::read_joint_section(doc, s, name));
    } else if (s.name.rfind("posture ", 0) == 0) {
      posture_sections.push_back(&s);
    } else {
      throw ConfigError(doc.file, s.line, "", "unknown section [" + s.name + "]");
    }
  }
  for (const auto* s : posture_sections) {
    auto name = std::string(ini::trim(std::string_view(s->name).substr(8)));
    if (!cfg.joint_index(name))
      throw ConfigError(doc.file, s->line, "", "posture table for unknown joint '" + name + "'");
    PostureTable table;
    for (const auto& e : s->entries) {
      Posture p;
      try {
        p = parse_posture(e.key);
      } catch (const std::invalid_argument& ex) {
        throw ConfigError(doc.file, e.line, e.key, ex.what());
      }
      auto words = ini::split_words(e.value);
      if (words.size() != cfg.n_joints())
        throw ConfigError(doc.file, e.line, e.key,
                          "expected " + std::to_string(cfg.n_joints()) + " targets, got " +
                              std::to_string(words.size()));
      JointVector angles(words.size());
      for (std::size_t k = 0; k < words.size(); ++k) {
        const auto& jk = cfg.joints[k];
        if (words[k] == "lo") angles[k] = jk.range_lo;
        else if (words[k] == "hi") angles[k] = jk.range_hi;
        else angles[k] = ini::to_double(doc, ini::Entry{e.key, words[k], e.line});
        if (angles[k] != jk.range_lo && angles[k] != jk.range_hi)
          throw ConfigError(doc.file, e.line, e.key,
                            "target for joint '" + jk.name + "' must be one of its limits");
      }
      table[p] = std::move(angles);
    }
    cfg.postures[name] = std::move(table);
  }
  validate(cfg, doc.file);
  return cfg;
}

inline PlantConfig load_config_file(const std::string& path) { return load_config(ini::parse_file(path)); }

/// Resolves a plant config argument. Existing paths are used as-is; bare
/// names ("arm4", "arm4.cfg") are looked up in $PNEUMO_CONFIG_DIR and then
/// in the shipped configs directory.
inline std::string resolve_config_path(const std::string& arg) {
  namespace fs = std::filesystem;
  if (fs::exists(arg)) return arg;
  std::vector<fs::path> dirs;
  if (const char* env = std::getenv("PNEUMO_CONFIG_DIR"); env && *env) dirs.emplace_back(env);
#ifdef PNEUMO_DEFAULT_CONFIG_DIR
  dirs.emplace_back(PNEUMO_DEFAULT_CONFIG_DIR);
#endif
  for (const auto& d : dirs) {
    for (const auto& candidate : {d / arg, d / (arg + ".cfg")})
      if (fs::exists(candidate)) return candidate.string();
  }
  return arg;  // let the loader report the missing file
}

}  // namespace pneumo
