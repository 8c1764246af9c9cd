#include <gtest/gtest.h>

#include <fstream>

#include "helpers.hpp"

using namespace pneumo;
using namespace pneumo::testkit;
namespace fs = std::filesystem;

namespace {

std::vector<std::string> names(const PlantConfig& cfg) {
  std::vector<std::string> out;
  for (const auto& j : cfg.joints) out.push_back(j.name);
  return out;
}

void write_text(const fs::path& p, const std::string& s) { std::ofstream(p, std::ios::binary) << s; }

}  // namespace

TEST(Csv, NumbersRoundTripExactly) {
  for (double x : {0.1, 1.0 / 3.0, -2.5e-17, 123456.789, 600.0}) {
    double back = 0;
    const auto s = csv::num(x);
    std::from_chars(s.data(), s.data() + s.size(), back);
    EXPECT_EQ(back, x) << s;
  }
}

TEST(Csv, WriterRejectsBadRows) {
  const auto dir = scratch_dir("csvw");
  csv::Writer w(dir / "a.csv", {"x", "y"});
  EXPECT_THROW(w.row({"1"}), std::invalid_argument);
  EXPECT_THROW(w.row({"1", "a,b"}), std::invalid_argument);
  w.row({"1", "2"});
  w.close();
  const auto t = csv::read(dir / "a.csv");
  EXPECT_EQ(t.header, (std::vector<std::string>{"x", "y"}));
  EXPECT_EQ(t.number(0, t.col("y")), 2.0);
  EXPECT_THROW(t.col("z"), csv::CsvError);
  fs::remove_all(dir);
}

TEST(Csv, SampleHeaderIsPerJoint) {
  const auto h = csv::sample_header({"a", "b"});
  const std::vector<std::string> expect = {"tick", "t",     "q_a",   "v_a", "p_a_a", "p_b_a", "u_a_a", "u_b_a",
                                           "q_ref_a", "q_b", "v_b", "p_a_b", "p_b_b", "u_a_b", "u_b_b", "q_ref_b"};
  EXPECT_EQ(h, expect);
}

TEST(Csv, DatasetRoundTrip) {
  auto cfg = shipped("arm4");
  Plant plant(cfg, 0);
  const auto ds = collect(plant, PidGains::arm4_defaults(), RandomWalkSpec::for_plant(cfg), 2, 2.0, 3, names(cfg));
  const auto dir = scratch_dir("ds");
  csv::write_dataset(dir, ds);
  const auto back = csv::read_dataset(dir);
  EXPECT_EQ(back.joint_names, ds.joint_names);
  ASSERT_EQ(back.trials.size(), 2u);
  for (std::size_t t = 0; t < 2; ++t) {
    EXPECT_EQ(back.trials[t].seed, ds.trials[t].seed);
    ASSERT_EQ(back.trials[t].rows.size(), ds.trials[t].rows.size());
    for (std::size_t k = 0; k < ds.trials[t].rows.size(); ++k) {
      const auto &a = ds.trials[t].rows[k], &b = back.trials[t].rows[k];
      EXPECT_EQ(a.tick, b.tick);
      EXPECT_EQ(a.t, b.t);
      EXPECT_EQ(a.q, b.q);
      EXPECT_EQ(a.v, b.v);
      EXPECT_EQ(a.p_a, b.p_a);
      EXPECT_EQ(a.u_b, b.u_b);
      EXPECT_EQ(a.q_ref, b.q_ref);
    }
  }
  fs::remove_all(dir);
}

TEST(Csv, SampleTicksMustBeContinuous) {
  const auto dir = scratch_dir("gap");
  std::string text;
  for (const auto& h : csv::sample_header({"a"})) text += (text.empty() ? "" : ",") + h;
  text += "\n0,0,1,0,0,0,0,0,1\n2,0.066,1,0,0,0,0,0,1\n";
  write_text(dir / "s.csv", text);
  EXPECT_THROW(csv::read_samples(dir / "s.csv", nullptr), csv::CsvError);
  fs::remove_all(dir);
}

TEST(Csv, RunsRoundTripRecomputesRmse) {
  const auto cfg = shipped("arm4");
  ScriptedSpec spec;
  spec.duration = 6.0;
  const auto ref = make_scripted_reference(cfg, spec).sample(180);
  Plant p(cfg, 0);
  std::vector<TrackResult> runs = {track_pid(p, PidGains::arm4_defaults(), ref, 180, 1, &cfg),
                                   track_pid(p, PidGains::arm4_defaults(), ref, 180, 2, &cfg)};
  const auto dir = scratch_dir("runs");
  csv::write_runs(dir, names(cfg), runs);
  std::vector<std::string> joints;
  const auto back = csv::read_runs(dir, &joints);
  EXPECT_EQ(joints, names(cfg));
  ASSERT_EQ(back.size(), 2u);
  for (std::size_t r = 0; r < 2; ++r)
    for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(back[r].rmse[j], runs[r].rmse[j], 1e-12);
  const auto index = csv::read(dir / "runs.csv");
  EXPECT_EQ(index.number(1, index.col("rmse_l_shoulder_abd")), runs[1].rmse[0]);
  fs::remove_all(dir);
}

TEST(Csv, ReferenceRoundTrip) {
  const auto cfg = shipped("arm4");
  ScriptedSpec spec;
  spec.duration = 10.0;
  const auto ref = make_scripted_reference(cfg, spec);
  const auto dir = scratch_dir("ref");
  csv::write_reference(dir / "ref.csv", ref, names(cfg));
  const auto back = csv::read_reference(dir / "ref.csv", cfg);
  EXPECT_EQ(back.knots(), ref.knots());
  EXPECT_EQ(back.knot_times(), ref.knot_times());
  EXPECT_EQ(back.sample(300), ref.sample(300));
  fs::remove_all(dir);
}

TEST(Csv, ReferenceErrorsAreConfigErrors) {
  const auto cfg = shipped("arm4");
  const auto dir = scratch_dir("badref");
  const std::string head = "t,l_shoulder_abd,l_shoulder_flex,l_shoulder_rot,l_elbow_flex\n";
  write_text(dir / "nan.csv", head + "0,50,50,50,50\n5,50,abc,50,50\n10,50,50,50,50\n");
  try {
    csv::read_reference(dir / "nan.csv", cfg);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.line(), 3);
    EXPECT_EQ(e.field(), "l_shoulder_flex");
  }
  write_text(dir / "order.csv", head + "0,50,50,50,50\n5,50,50,50,50\n5,50,50,50,50\n");
  try {
    csv::read_reference(dir / "order.csv", cfg);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.line(), 4);
    EXPECT_EQ(e.field(), "t");
  }
  write_text(dir / "missing.csv", "t,l_shoulder_abd\n0,50\n10,50\n");
  EXPECT_THROW(csv::read_reference(dir / "missing.csv", cfg), ConfigError);
  EXPECT_THROW(csv::read_reference(dir / "absent.csv", cfg), ConfigError);
  write_text(dir / "range.csv", head + "0,50,50,50,50\n10,50,150,50,50\n");
  EXPECT_THROW(csv::read_reference(dir / "range.csv", cfg), std::invalid_argument);
  fs::remove_all(dir);
}

TEST(Manifest, VerifyDetectsTampering) {
  const auto dir = scratch_dir("man");
  write_text(dir / "out.csv", "a\n1\n");
  RunManifest m;
  m.stage = "test";
  m.add_config(dir, "plant", config_dir() + "/arm4.cfg");
  m.add_output(dir, dir / "out.csv");
  m.write(dir);
  EXPECT_TRUE(verify_manifest(dir).empty());
  const auto j = read_manifest(dir);
  EXPECT_EQ(j.at("configs")[0].at("sha256"), sha256_file(config_dir() + "/arm4.cfg"));
  write_text(dir / "out.csv", "a\n2\n");
  EXPECT_EQ(verify_manifest(dir).size(), 1u);
  fs::remove_all(dir);
}

TEST(Manifest, InputChainsUpstreamManifest) {
  const auto up = scratch_dir("up"), down = scratch_dir("down");
  RunManifest a;
  a.stage = "up";
  a.write(up);
  RunManifest b;
  b.add_input(up);
  b.add_input(up / "file.bin");
  EXPECT_EQ(b.inputs[0].manifest_sha256, sha256_file(up / kManifestName));
  EXPECT_EQ(b.inputs[1].manifest_sha256, b.inputs[0].manifest_sha256);
  fs::remove_all(up);
  fs::remove_all(down);
}

TEST(Sha256, KnownVector) {
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}
