#include <gtest/gtest.h>

#include "helpers.hpp"

using namespace pneumo;
using namespace pneumo::testkit;

namespace {

/// Untrained but well-scaled inverse model for arm4-sized plants.
learn::InverseModel random_model(std::size_t n, int tau, std::uint64_t seed) {
  learn::InverseModel m;
  m.n_joints = n;
  m.tau = tau;
  const auto in = static_cast<Eigen::Index>(learn::input_dim(n)), out = static_cast<Eigen::Index>(learn::output_dim(n));
  m.scale.x = {learn::RowVector::Constant(in, 50.0), learn::RowVector::Constant(in, 30.0)};
  m.scale.y = {learn::RowVector::Constant(out, 300.0), learn::RowVector::Constant(out, 150.0)};
  m.net = learn::Mlp::glorot(in, 16, out, seed);
  return m;
}

std::vector<JointVector> hold_home(const PlantConfig& cfg, std::size_t ticks) {
  JointVector home;
  for (const auto& j : cfg.joints) home.push_back(j.home);
  return std::vector<JointVector>(ticks, home);
}

}  // namespace

TEST(Spline, ConstantKnotsGiveConstant) {
  CubicSpline s({0, 1, 2, 3}, {4, 4, 4, 4});
  for (double x = -1; x < 4; x += 0.1) EXPECT_NEAR(s(x), 4.0, 1e-12);
}

TEST(Spline, PassesThroughKnotsWithFlatEnds) {
  const std::vector<double> t = {0, 0.5, 1.5, 2, 3.5}, y = {1, 3, -2, 0, 5};
  CubicSpline s(t, y);
  for (std::size_t i = 0; i < t.size(); ++i) EXPECT_NEAR(s(t[i]), y[i], 1e-12);
  EXPECT_NEAR(s.derivative(1e-9), 0.0, 1e-6);
  EXPECT_NEAR(s.derivative(3.5 - 1e-9), 0.0, 1e-6);
  EXPECT_THROW(CubicSpline({0, 0}, {1, 2}), std::invalid_argument);
}

TEST(Reference, ScriptedStaysInRangeAndIsSeeded) {
  const auto cfg = shipped("arm4");
  ScriptedSpec spec;
  spec.seed = 4;
  const auto a = make_scripted_reference(cfg, spec), b = make_scripted_reference(cfg, spec);
  EXPECT_EQ(a.knots(), b.knots());
  for (const auto& x : a.sample(900))
    for (std::size_t j = 0; j < x.size(); ++j) {
      EXPECT_GE(x[j], cfg.joints[j].range_lo);
      EXPECT_LE(x[j], cfg.joints[j].range_hi);
    }
  spec.seed = 5;
  EXPECT_NE(make_scripted_reference(cfg, spec).knots(), a.knots());
}

TEST(Reference, ScriptedDistributionDiffersFromTrainingWalk) {
  const auto cfg = shipped("arm4");
  ScriptedSpec spec;
  spec.seed = 1;
  const auto scripted = make_scripted_reference(cfg, spec).sample(900);
  std::vector<JointVector> walk;
  for (int t = 0; t < 10; ++t) {
    auto w = RandomWalkSpec::for_plant(cfg, 5.0, collect_trial_seed(1, t) ^ 0x9e3779b97f4a7c15ULL);
    const auto part = gen_random_walk(w, 60.0);
    walk.insert(walk.end(), part.begin(), part.end());
  }
  for (std::size_t j = 0; j < cfg.n_joints(); ++j) {
    std::vector<double> a, b;
    for (const auto& x : scripted) a.push_back(x[j]);
    for (const auto& x : walk) b.push_back(x[j]);
    EXPECT_GT(ks_distance(a, b), 0.15) << cfg.joints[j].name;
  }
}

TEST(Reference, RecordedRejectsOutOfRangeAndShort) {
  const auto cfg = shipped("arm4");
  std::vector<double> t = {0, 5, 10};
  std::vector<JointVector> k = {{50, 50, 50, 50}, {50, 120, 50, 50}, {50, 50, 50, 50}};
  EXPECT_THROW(make_recorded_reference(cfg, t, k), std::invalid_argument);
  k[1][1] = 60;
  EXPECT_NO_THROW(make_recorded_reference(cfg, t, k));
  EXPECT_THROW(make_recorded_reference(cfg, {0, 1, 2}, k), std::invalid_argument);
  EXPECT_THROW(make_recorded_reference(cfg, t, {{50, 50, 50}, {50, 50, 50}, {50, 50, 50}}), std::invalid_argument);
}

TEST(Reference, RampMovesOneJointAtRequestedSpeed) {
  const auto cfg = shipped("arm4");
  const auto r = make_ramp_reference(cfg, 0, 30, 60, 1.0);
  EXPECT_NEAR(r.duration(), 32.0, 1e-12);
  EXPECT_NEAR(r.derivative(16.0)[0], 1.0, 1e-9);
  EXPECT_NEAR(r.value(16.0)[1], cfg.joints[1].home, 1e-12);
}

TEST(TrackModel, LooksAheadExactlyTauTicks) {
  const auto cfg = shipped("arm4");
  const auto model = random_model(4, 9, 3);
  const std::size_t K = 60, m = 40;
  auto ref_a = hold_home(cfg, K + 9);
  auto ref_b = ref_a;
  for (std::size_t k = m; k < ref_b.size(); ++k) ref_b[k][2] += 10.0;
  Plant p1(cfg, 0), p2(cfg, 0);
  const auto init = model_rest_command(model);
  const auto a = track_model(p1, model, ref_a, K, 5, init, &cfg);
  const auto b = track_model(p2, model, ref_b, K, 5, init, &cfg);
  for (std::size_t k = 0; k < K; ++k) {
    if (k + 9 < m) {
      ASSERT_EQ(a.rows[k].u_a, b.rows[k].u_a) << k;
    } else if (k + 9 == m) {
      EXPECT_NE(a.rows[k].u_a, b.rows[k].u_a);
    }
  }
}

TEST(TrackModel, CommandsStayLegal) {
  const auto cfg = shipped("arm4");
  auto model = random_model(4, 9, 5);
  model.scale.y.std.setConstant(5000.0);  // push raw outputs far outside the valve range
  Plant plant(cfg, 0);
  ScriptedSpec spec;
  spec.duration = 10.0;
  const auto ref = make_scripted_reference(cfg, spec).sample(310);
  const auto res = track_model(plant, model, ref, 300, 1, model_rest_command(model), &cfg);
  ASSERT_TRUE(res.valid);
  for (const auto& r : res.rows)
    for (std::size_t i = 0; i < 4; ++i) {
      EXPECT_GE(r.u_a[i], 0.0);
      EXPECT_LE(r.u_a[i], 600.0);
      EXPECT_GE(r.u_b[i], 0.0);
      EXPECT_LE(r.u_b[i], 600.0);
    }
}

TEST(TrackModel, RejectsWrongArityAndOutOfRange) {
  const auto cfg = shipped("arm4");
  Plant plant(cfg, 0);
  EXPECT_THROW(track_model(plant, random_model(3, 9, 1), hold_home(cfg, 50), 40, 1, ValveCommand(4), &cfg),
               std::invalid_argument);
  auto ref = hold_home(cfg, 50);
  ref[10][0] = 150.0;
  const auto model = random_model(4, 9, 1);
  EXPECT_THROW(track_model(plant, model, ref, 40, 1, model_rest_command(model), &cfg), std::invalid_argument);
}

TEST(TrackPid, ZeroGainsHoldStill) {
  auto cfg = quiet(shipped("arm4"));
  cfg.gravity = 0.0;
  Plant plant(cfg, 0);
  PidGains g{JointVector(4, 0.0), JointVector(4, 0.0), JointVector(4, 0.0), JointVector(4, 300.0)};
  const auto res = track_pid(plant, g, hold_home(cfg, 300), 300, 1, &cfg);
  for (double e : res.rmse) EXPECT_LT(e, 1e-3);
}

TEST(TrackPid, FlexionTrailsRisingRamp) {
  const auto cfg = shipped("arm4");
  const std::size_t flex = *cfg.joint_index("l_shoulder_flex");
  const auto ref = make_ramp_reference(cfg, flex, 30, 70, 2.0).sample(20 * 30);
  Plant plant(cfg, 0);
  const auto res = track_pid(plant, PidGains::arm4_defaults(), ref, ref.size(), 2, &cfg);
  double under = 0.0;
  int n = 0;
  for (std::size_t k = 60; k < 20 * 30 + 30 && k < res.rows.size(); ++k) {
    if (res.rows[k].t < 2.0 || res.rows[k].t > 20.0) continue;
    under += res.rows[k].q_ref[flex] - res.rows[k].q[flex];
    ++n;
  }
  EXPECT_GT(under / n, 0.0);
}

TEST(Metrics, XcorrFindsSyntheticShift) {
  std::vector<double> ref, q;
  for (int k = 0; k < 400; ++k) {
    ref.push_back(std::sin(0.05 * k) + 0.3 * std::sin(0.13 * k));
    q.push_back(std::sin(0.05 * (k - 7)) + 0.3 * std::sin(0.13 * (k - 7)));
  }
  EXPECT_EQ(xcorr_lag(ref, q), 7);
  EXPECT_EQ(xcorr_lag(q, ref), -7);
  EXPECT_EQ(xcorr_lag(ref, ref), 0);
}

TEST(Metrics, DwellsCountStickSlipOnly) {
  std::vector<double> ref, smooth, sticky;
  double q = 0.0;
  for (int k = 0; k < 300; ++k) {
    const double r = 0.5 * k;
    ref.push_back(r);
    smooth.push_back(r - 2.0);
    const bool stuck = (k % 100) >= 60 && (k % 100) < 80;
    if (!stuck) q = std::min(r, q + 2.0);
    sticky.push_back(q);
  }
  EXPECT_EQ(count_dwells(ref, smooth, 0, ref.size()), 0);
  EXPECT_EQ(count_dwells(ref, sticky, 0, ref.size()), 3);
  EXPECT_EQ(count_dwells(ref, sticky, 0, 150), 1);
}

TEST(Compare, SameSeedSameRmse) {
  const auto cfg = shipped("arm4");
  ScriptedSpec spec;
  spec.duration = 8.0;
  const auto ref = make_scripted_reference(cfg, spec).sample(240);
  Plant p(cfg, 0);
  const auto a = track_pid(p, PidGains::arm4_defaults(), ref, 240, 9, &cfg);
  const auto b = track_pid(p, PidGains::arm4_defaults(), ref, 240, 9, &cfg);
  EXPECT_EQ(a.rmse, b.rmse);
  const auto c = compare({a, b});
  ASSERT_EQ(c.controllers.size(), 1u);
  EXPECT_EQ(c.controllers[0].trials, 2u);
  EXPECT_EQ(c.controllers[0].rmse[0].std, 0.0);
  EXPECT_EQ(c.controllers[0].rmse[0].mean, a.rmse[0]);
}

TEST(Compare, MismatchedReferencesThrow) {
  const auto cfg = shipped("arm4");
  Plant p(cfg, 0);
  auto ref = hold_home(cfg, 60);
  const auto a = track_pid(p, PidGains::arm4_defaults(), ref, 60, 1, &cfg);
  ref[30][0] += 1.0;
  const auto b = track_pid(p, PidGains::arm4_defaults(), ref, 60, 1, &cfg);
  EXPECT_THROW(compare({a, b}), std::invalid_argument);
  EXPECT_THROW(compare({}), std::invalid_argument);
}
