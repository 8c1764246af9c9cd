#pragma once

#include <cstdlib>
#include <filesystem>
#include <random>
#include <string>
#include <sys/wait.h>
#include <unistd.h>

#include "pneumo/pneumo.hpp"

namespace pneumo::testkit {

inline std::string config_dir() { return PNEUMO_CONFIG_DIR_FOR_TESTS; }
inline PlantConfig shipped(const std::string& name) { return load_config_file(config_dir() + "/" + name + ".cfg"); }

/// One frictionless, gravity-free rotary joint with noise and jitter off.
inline PlantConfig single_joint() {
  PlantConfig cfg;
  cfg.name = "single";
  cfg.noise = false;
  cfg.jitter = false;
  JointParams j;
  j.name = "j0";
  j.torque_gain = 5.0;
  j.delay_steps = 8;
  j.lag_tau = 0.06;
  j.inertia_self = 0.01;
  cfg.joints.push_back(j);
  return cfg;
}

inline PlantConfig quiet(PlantConfig cfg) {
  cfg.noise = false;
  cfg.jitter = false;
  return cfg;
}

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& tag) {
  static std::mt19937_64 rng(std::random_device{}());
  auto p = std::filesystem::temp_directory_path() / ("pneumo_" + tag + "_" + std::to_string(rng() % 1000000000));
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

/// Runs the CLI; returns its exit status.
inline int run_cli(const std::string& args, const std::string& env = {}) {
  const std::string cmd = (env.empty() ? "" : env + " ") + std::string(PNEUMO_CLI) + " -q " + args + " > /dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

/// Runs the CLI and captures stderr.
inline int run_cli_capture(const std::string& args, std::string& err) {
  const auto f = std::filesystem::temp_directory_path() / ("pneumo_err_" + std::to_string(::getpid()));
  const std::string cmd = std::string(PNEUMO_CLI) + " -q " + args + " > /dev/null 2> " + f.string();
  const int rc = std::system(cmd.c_str());
  err = read_bytes(f);
  std::filesystem::remove(f);
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

}  // namespace pneumo::testkit
