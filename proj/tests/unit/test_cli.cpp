#include <gtest/gtest.h>

#include <fstream>

#include "helpers.hpp"

using namespace pneumo;
using namespace pneumo::testkit;
namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& p, const std::string& s) { std::ofstream(p, std::ios::binary) << s; }

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

/// Every CSV under `dir`, relative path -> bytes.
std::map<std::string, std::string> csv_bytes(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".csv")
      out[fs::relative(e.path(), dir).string()] = read_bytes(e.path());
  return out;
}

}  // namespace

TEST(Cli, MissingConfigExitsTwo) {
  const auto dir = scratch_dir("cli_missing");
  EXPECT_EQ(run_cli("--plant /nonexistent/plant.cfg --out " + q(dir) + " collect --trials 1 --duration 1"), 2);
  fs::remove_all(dir);
}

TEST(Cli, BadConfigReportsLineAndField) {
  const auto dir = scratch_dir("cli_bad");
  auto text = read_bytes(config_dir() + "/arm4.cfg");
  const auto pos = text.find("lag_tau");
  ASSERT_NE(pos, std::string::npos);
  const auto eol = text.find('\n', pos);
  text = text.substr(0, pos) + "lag_tau = fast" + text.substr(eol);
  const int line = 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<long>(pos), '\n'));
  write_text(dir / "bad.cfg", text);
  std::string err;
  EXPECT_EQ(run_cli_capture("--plant " + q(dir / "bad.cfg") + " --out " + q(dir / "o") + " collect --trials 1", err), 2);
  EXPECT_NE(err.find("bad.cfg:" + std::to_string(line)), std::string::npos) << err;
  EXPECT_NE(err.find("lag_tau"), std::string::npos) << err;
  fs::remove_all(dir);
}

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run_cli("frobnicate"), 2);
  EXPECT_EQ(run_cli(""), 2);
  EXPECT_EQ(run_cli("characterize warp --out /tmp/x"), 2);
  EXPECT_EQ(run_cli("train"), 2);  // --data is required
}

TEST(Cli, ConfigDirEnvironmentOverride) {
  const auto dir = scratch_dir("cli_env");
  fs::create_directories(dir / "cfgs");
  fs::copy_file(config_dir() + "/arm4.cfg", dir / "cfgs" / "myarm.cfg");
  const std::string args = "--plant myarm --out " + q(dir / "o") + " collect --trials 1 --duration 1";
  EXPECT_EQ(run_cli(args), 2);
  EXPECT_EQ(run_cli(args, "PNEUMO_CONFIG_DIR=" + q(dir / "cfgs")), 0);
  const auto j = read_manifest(dir / "o");
  EXPECT_NE(j.at("configs")[0].at("source").get<std::string>().find("myarm.cfg"), std::string::npos);
  fs::remove_all(dir);
}

TEST(Cli, StageFailureExitsOne) {
  const auto dir = scratch_dir("cli_fail");
  EXPECT_EQ(run_cli("--out " + q(dir / "m") + " train --data " + q(dir / "nothing")), 1);
  EXPECT_EQ(run_cli("--out " + q(dir / "t") + " track --controller model --model " + q(dir / "none.bin")), 1);
  EXPECT_FALSE(fs::exists(dir / "t" / kManifestName));
  fs::remove_all(dir);
}

TEST(Cli, PipelineSmokeAndDeterminism) {
  const auto root = scratch_dir("cli_pipe");
  auto pipeline = [&](const fs::path& d) {
    const std::string plant = "--plant arm4 --seed 3 ";
    ASSERT_EQ(run_cli(plant + "--out " + q(d / "data") + " collect --trials 3 --duration 10"), 0);
    ASSERT_EQ(run_cli(plant + "--out " + q(d / "model") + " train --data " + q(d / "data") +
                      " --epochs 3 --hidden 16"), 0);
    ASSERT_EQ(run_cli(plant + "--out " + q(d / "ref") + " make-ref --ref-duration 8"), 0);
    ASSERT_EQ(run_cli(plant + "--out " + q(d / "track") + " track --model " + q(d / "model" / "model.bin") +
                      " --ref " + q(d / "ref" / "ref.csv") + " --trials 2"), 0);
    ASSERT_EQ(run_cli("--out " + q(d / "report") + " report --in " + q(d / "track")), 0);
    ASSERT_EQ(run_cli("--plant test7 --seed 3 --out " + q(d / "char") +
                      " characterize delay --joint waist --posture EP --trials 2 --grid 3"), 0);
  };
  pipeline(root / "a");
  if (HasFatalFailure()) return;
  pipeline(root / "b");
  if (HasFatalFailure()) return;

  const auto a = root / "a";
  for (auto stage : {"data", "model", "ref", "track", "report", "char"}) {
    EXPECT_TRUE(fs::exists(a / stage / kManifestName)) << stage;
    EXPECT_TRUE(verify_manifest(a / stage).empty()) << stage;
  }
  const auto ds = csv::read_dataset(a / "data");
  EXPECT_EQ(ds.rows(), 900u);
  const auto rmse = csv::read(a / "report" / "rmse.csv");
  EXPECT_EQ(rmse.rows.size(), 8u);
  // Provenance: each stage records the manifest hash of its input.
  const auto tm = read_manifest(a / "model");
  EXPECT_EQ(tm.at("inputs")[0].at("manifest_sha256"), sha256_file(a / "data" / kManifestName));
  const auto km = read_manifest(a / "track");
  bool chained = false;
  for (const auto& in : km.at("inputs"))
    chained |= in.at("manifest_sha256") == sha256_file(a / "model" / kManifestName);
  EXPECT_TRUE(chained);
  const auto rm = read_manifest(a / "report");
  EXPECT_EQ(rm.at("inputs")[0].at("manifest_sha256"), sha256_file(a / "track" / kManifestName));

  // Same seeds: byte-identical CSVs from every stage.
  for (auto stage : {"data", "model", "ref", "track", "report", "char"}) {
    const auto x = csv_bytes(a / stage), y = csv_bytes(root / "b" / stage);
    EXPECT_FALSE(x.empty()) << stage;
    EXPECT_EQ(x, y) << stage;
  }
  EXPECT_EQ(read_bytes(a / "model" / "model.bin"), read_bytes(root / "b" / "model" / "model.bin"));
  fs::remove_all(root);
}
