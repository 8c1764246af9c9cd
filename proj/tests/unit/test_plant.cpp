#include <gtest/gtest.h>

#include "helpers.hpp"

using namespace pneumo;
using namespace pneumo::testkit;

TEST(CommandToSetpoint, LinearMapAndClamp) {
  EXPECT_DOUBLE_EQ(command_to_setpoint(0.0), 0.0);
  EXPECT_DOUBLE_EQ(command_to_setpoint(300.0), 0.3);
  EXPECT_DOUBLE_EQ(command_to_setpoint(600.0), 0.6);
  EXPECT_DOUBLE_EQ(command_to_setpoint(-5.0), 0.0);
  EXPECT_DOUBLE_EQ(command_to_setpoint(900.0), 0.6);
}

TEST(PlantStep, SymmetricCommandsGiveZeroActuatorForce) {
  Plant plant(single_joint(), 3);
  const double q0 = plant.state().q[0];
  for (int k = 0; k < 200; ++k) {
    plant.step(ValveCommand(1, 250.0 + k, 250.0 + k));
    ASSERT_EQ(plant.state().p_a[0], plant.state().p_b[0]);
  }
  EXPECT_EQ(plant.state().q[0], q0);
}

TEST(PlantStep, RestingJointWithoutForceStaysPut) {
  auto cfg = single_joint();
  cfg.joints[0].static_friction = 0.1;
  cfg.joints[0].coulomb_friction = 0.05;
  Plant plant(cfg, 1);
  const auto q0 = plant.state().q;
  for (int k = 0; k < 900; ++k) plant.step(ValveCommand(1));
  EXPECT_EQ(plant.state().q, q0);
}

TEST(PlantStep, DelayLineHoldsSetpointForDelaySteps) {
  auto cfg = single_joint();
  cfg.joints[0].lag_tau = 1e-4;
  Plant plant(cfg, 1);
  const ValveCommand step_cmd(1, 600.0, 0.0);
  plant.step(step_cmd);  // command tick 0
  // The new setpoint sits at the back of the buffer: popped after 7 more shifts.
  const auto& line = plant.state().delay_a[0];
  ASSERT_EQ(line.size(), 8u);
  for (std::size_t i = 0; i + 1 < line.size(); ++i) EXPECT_EQ(line.pending(i), 0.0);
  EXPECT_DOUBLE_EQ(line.pending(7), 0.6);
  EXPECT_EQ(plant.state().p_a[0], 0.0);
  for (int k = 1; k < 8; ++k) {
    plant.step(step_cmd);
    EXPECT_EQ(plant.state().p_a[0], 0.0) << "tick " << k;
  }
  plant.step(step_cmd);  // tick 8 = command tick + delay_steps
  EXPECT_GT(plant.state().p_a[0], 0.5);
}

TEST(PlantStep, FirstMotionNoEarlierThanDelay) {
  auto cfg = single_joint();
  cfg.joints[0].lag_tau = 1e-3;
  Plant plant(cfg, 1);
  const double q0 = plant.state().q[0];
  int first = -1;
  for (int k = 0; k < 30 && first < 0; ++k) {
    plant.step(ValveCommand(1, 600.0, 0.0));
    if (plant.state().q[0] != q0) first = k;
  }
  EXPECT_GE(first, 8);
}

TEST(PlantStep, DeterministicForSameSeedAndCommands) {
  auto cfg = shipped("arm4");
  Plant a(cfg, 42), b(cfg, 42);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0, 600);
  for (int k = 0; k < 600; ++k) {
    ValveCommand c(cfg.n_joints());
    for (std::size_t i = 0; i < cfg.n_joints(); ++i) c.u_a[i] = u(rng), c.u_b[i] = u(rng);
    a.step(c);
    b.step(c);
    ASSERT_EQ(a.read(), b.read());
  }
  EXPECT_TRUE(a.state() == b.state());
}

TEST(PlantStep, KineticEnergyNonIncreasingWithoutDriveOrGravity) {
  auto cfg = quiet(shipped("arm4"));
  cfg.gravity = 0.0;
  Plant plant(cfg, 1);
  auto& s = plant.mutable_state();
  for (std::size_t i = 0; i < cfg.n_joints(); ++i) s.v[i] = (i % 2 ? -1.0 : 1.0) * (60.0 + 20.0 * i);
  auto energy = [&] {
    const auto L = plant.loads();
    double e = 0.0;
    for (std::size_t i = 0; i < cfg.n_joints(); ++i) {
      const double w = plant.state().v[i] * cfg.joints[i].rad_per_unit();
      e += 0.5 * L.inertia[i] * w * w;
    }
    return e;
  };
  double prev = energy();
  ASSERT_GT(prev, 0.0);
  for (int k = 0; k < 300; ++k) {
    plant.step(ValveCommand(cfg.n_joints()));
    const double e = energy();
    ASSERT_LE(e, prev * (1 + 1e-12)) << "tick " << k;
    prev = e;
  }
}

TEST(PlantStep, StictionThresholdMatchesAnalyticValue) {
  auto cfg = single_joint();
  cfg.joints[0].static_friction = 0.3;
  cfg.joints[0].coulomb_friction = 0.2;
  cfg.joints[0].delay_steps = 0;
  const double analytic = cfg.joints[0].static_friction / cfg.joints[0].torque_gain / (cfg.p_supply / cfg.u_max);
  auto moves = [&](double d) {
    Plant plant(cfg, 1);
    const double q0 = plant.state().q[0];
    for (int k = 0; k < 90; ++k) plant.step(ValveCommand(1, 200.0 + d, 200.0));
    return plant.state().q[0] != q0;
  };
  double lo = 0.0, hi = 600.0 - 200.0;
  ASSERT_FALSE(moves(lo));
  ASSERT_TRUE(moves(hi));
  for (int it = 0; it < 50; ++it) {
    const double mid = 0.5 * (lo + hi);
    (moves(mid) ? hi : lo) = mid;
  }
  EXPECT_NEAR(hi, analytic, 1e-6 * analytic);
}

TEST(PlantStep, PositionsNeverLeaveTheirRange) {
  auto cfg = shipped("test7");
  Plant plant(cfg, 9);
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0, 600);
  std::uniform_int_distribution<int> len(1, 40);
  ValveCommand c(cfg.n_joints());
  for (int k = 0, next = 0; k < 6000; ++k) {
    if (k == next) {
      for (std::size_t i = 0; i < cfg.n_joints(); ++i) c.u_a[i] = u(rng), c.u_b[i] = u(rng);
      next += len(rng);
    }
    plant.step(c);
    for (std::size_t i = 0; i < cfg.n_joints(); ++i) {
      ASSERT_GE(plant.state().q[i], cfg.joints[i].range_lo);
      ASSERT_LE(plant.state().q[i], cfg.joints[i].range_hi);
      ASSERT_GE(plant.state().p_a[i], 0.0);
      ASSERT_LE(plant.state().p_a[i], cfg.p_supply);
    }
  }
}

TEST(PlantStep, NonFiniteStateIsFatal) {
  Plant plant(single_joint(), 1);
  plant.step(ValveCommand(1));
  plant.mutable_state().v[0] = std::nan("");
  try {
    plant.step(ValveCommand(1));
    FAIL() << "expected SimulationError";
  } catch (const SimulationError& e) {
    EXPECT_EQ(e.tick(), 2);
  }
}

TEST(Sensors, QuantizationOnlyWithoutNoise) {
  auto cfg = single_joint();
  Plant plant(cfg, 1);
  plant.mutable_state().q[0] = 50.0;
  const auto f = plant.read();
  EXPECT_LE(std::abs(f.q[0] - 50.0), 100.0 / 65535.0);
}

TEST(Sensors, SameSeedSameFrames) {
  auto cfg = single_joint();
  cfg.noise = true;
  Plant a(cfg, 77), b(cfg, 77);
  for (int k = 0; k < 50; ++k) EXPECT_EQ(a.read(), b.read());
}

TEST(Sensors, NoiseSigmaMatchesConfig) {
  auto cfg = single_joint();
  cfg.noise = true;
  cfg.noise_q = 0.1;
  Plant plant(cfg, 5);
  plant.mutable_state().q[0] = 50.0;
  std::vector<double> x;
  for (int k = 0; k < 10000; ++k) x.push_back(plant.read().q[0]);
  EXPECT_NEAR(stddev(x), 0.1, 0.005);
}

TEST(Posture, ReachesTableTargetsAndIsIdempotent) {
  Plant plant(quiet(shipped("test7")), 1);
  const auto j = *plant.config().joint_index("l_scapula");
  plant.set_posture(Posture::EP, j);
  const auto targets = plant.posture_targets(Posture::EP, j);
  EXPECT_EQ(plant.state().q, targets);
  EXPECT_EQ(targets[j], plant.range_lo(j));
  const auto before = plant.state();
  plant.set_posture(Posture::EP, j);
  EXPECT_TRUE(plant.state() == before);
}

TEST(Posture, EasyAndHardDifferInDistalLinks) {
  Plant plant(quiet(shipped("test7")), 1);
  const auto j = *plant.config().joint_index("l_scapula");
  const auto e = plant.posture_targets(Posture::EP, j), h = plant.posture_targets(Posture::HP, j);
  EXPECT_EQ(e[j], h[j]);
  EXPECT_NE(e, h);
}

TEST(Posture, SettleTimeoutNamesTheJoint) {
  auto cfg = single_joint();
  cfg.joints[0].name = "stuck";
  cfg.joints[0].static_friction = 100.0;  // beyond the actuator's reach
  cfg.joints[0].coulomb_friction = 50.0;
  Plant plant(cfg, 1);
  try {
    plant.set_posture(Posture::EP, 0, 1.0);
    FAIL() << "expected SettleError";
  } catch (const SettleError& e) {
    EXPECT_EQ(e.joint(), "stuck");
  }
}

TEST(Posture, HoldingPressureHardAtLeastEasy) {
  Plant plant(quiet(shipped("test7")), 1);
  int checked = 0;
  for (std::size_t j = 0; j < plant.n_joints(); ++j) {
    if (plant.config().joints[j].gravity_sign == 0) continue;
    if (!plant.has_posture(Posture::EP, j) || !plant.has_posture(Posture::HP, j)) continue;
    plant.set_posture(Posture::EP, j);
    const double pe = plant.holding_pressure_difference(j);
    plant.set_posture(Posture::HP, j);
    const double ph = plant.holding_pressure_difference(j);
    EXPECT_GE(ph, pe) << plant.joint_name(j);
    ++checked;
  }
  EXPECT_GT(checked, 0);
}

TEST(Config, MissingFieldReportsLineAndField) {
  const std::string text = "[plant]\nu_max = 600\n[joint a]\ntorque_gain = 1\ndelay_steps = 2\nlag_tau = 0.05\n";
  try {
    load_config(ini::parse_string(text, "x.cfg"));
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.field(), "inertia_self");
    EXPECT_EQ(e.line(), 3);
  }
}

TEST(Config, BadNumberReportsLine) {
  const std::string text =
      "[joint a]\ntorque_gain = 1\ndelay_steps = 2\nlag_tau = fast\ninertia_self = 0.01\n";
  try {
    load_config(ini::parse_string(text, "x.cfg"));
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.field(), "lag_tau");
    EXPECT_EQ(e.line(), 4);
  }
}

TEST(Config, InvariantsAreChecked) {
  auto cfg = single_joint();
  cfg.joints[0].coulomb_friction = 1.0;
  cfg.joints[0].static_friction = 0.5;
  EXPECT_THROW(validate(cfg), ConfigError);
  cfg = single_joint();
  cfg.joints[0].range_hi = cfg.joints[0].range_lo;
  EXPECT_THROW(validate(cfg), ConfigError);
  cfg = single_joint();
  cfg.joints[0].lag_tau = 0.0;
  EXPECT_THROW(validate(cfg), ConfigError);
}

TEST(Config, ShippedConfigsLoad) {
  EXPECT_EQ(shipped("arm4").n_joints(), 4u);
  EXPECT_EQ(shipped("test7").n_joints(), 7u);
}
