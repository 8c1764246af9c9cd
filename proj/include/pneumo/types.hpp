#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace pneumo {

/// Per-joint vector (one entry per simulated joint).
using JointVector = std::vector<double>;

/// Control tick of the robot loop (30 Hz).
inline constexpr double kControlRate = 30.0;
inline constexpr double kControlDt = 1.0 / kControlRate;

enum class Direction { positive, negative };

/// Initial posture of an experiment, relative to the joint under test.
/// E = easiest to move, H = hardest, P/N = positive/negative motion.
enum class Posture { EP, HP, EN, HN };

inline constexpr Posture kAllPostures[] = {Posture::EP, Posture::HP, Posture::EN, Posture::HN};

inline Direction direction_of(Posture p) {
  return (p == Posture::EP || p == Posture::HP) ? Direction::positive : Direction::negative;
}

inline std::string_view to_string(Posture p) {
  switch (p) {
    case Posture::EP: return "EP";
    case Posture::HP: return "HP";
    case Posture::EN: return "EN";
    case Posture::HN: return "HN";
  }
  return "?";
}

inline std::string_view to_string(Direction d) {
  return d == Direction::positive ? "pos" : "neg";
}

inline Posture parse_posture(std::string_view s) {
  if (s == "EP" || s == "E_P") return Posture::EP;
  if (s == "HP" || s == "H_P") return Posture::HP;
  if (s == "EN" || s == "E_N") return Posture::EN;
  if (s == "HN" || s == "H_N") return Posture::HN;
  throw std::invalid_argument("unknown posture '" + std::string(s) + "' (expected EP|HP|EN|HN)");
}

inline Direction parse_direction(std::string_view s) {
  if (s == "pos" || s == "positive") return Direction::positive;
  if (s == "neg" || s == "negative") return Direction::negative;
  throw std::invalid_argument("unknown direction '" + std::string(s) + "' (expected pos|neg)");
}

/// Thrown when a configuration file cannot be parsed or validated.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string file, int line, std::string field, const std::string& what)
      : std::runtime_error(format(file, line, field, what)),
        file_(std::move(file)),
        line_(line),
        field_(std::move(field)) {}

  const std::string& file() const { return file_; }
  int line() const { return line_; }
  const std::string& field() const { return field_; }

 private:
  static std::string format(const std::string& file, int line, const std::string& field,
                            const std::string& what) {
    std::string msg = file.empty() ? std::string("<config>") : file;
    if (line > 0) msg += ":" + std::to_string(line);
    if (!field.empty()) msg += ": field '" + field + "'";
    return msg + ": " + what;
  }

  std::string file_;
  int line_;
  std::string field_;
};

/// Non-finite or otherwise broken simulator state.
class SimulationError : public std::runtime_error {
 public:
  SimulationError(long tick, const std::string& what)
      : std::runtime_error("simulation fault at tick " + std::to_string(tick) + ": " + what),
        tick_(tick) {}
  long tick() const { return tick_; }

 private:
  long tick_;
};

/// A joint did not come to rest at its posture target in time.
class SettleError : public std::runtime_error {
 public:
  SettleError(std::string joint, const std::string& what)
      : std::runtime_error("joint '" + joint + "' failed to settle: " + what), joint_(std::move(joint)) {}
  const std::string& joint() const { return joint_; }

 private:
  std::string joint_;
};

}  // namespace pneumo
