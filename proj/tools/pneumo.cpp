// Command-line entry point: characterize, collect, train, track, report.
//
// Exit codes: 0 success, 2 configuration or usage error, 1 stage failure.

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fmt/format.h>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "pneumo/pneumo.hpp"

namespace fs = std::filesystem;
using namespace pneumo;

namespace {

struct Globals {
  std::uint64_t seed = 1;
  std::string out;
  std::string plant = "arm4";
  bool quiet = false;
  std::vector<std::string> argv;
};

/// Bad command-line values; reported like configuration errors.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void log(const Globals& g, const std::string& msg) {
  if (!g.quiet) std::fprintf(stderr, "%s\n", msg.c_str());
}

/// Creates the output directory and removes a stale manifest so that a
/// manifest is only present once this run has finished.
fs::path prepare_out(const Globals& g, const std::vector<fs::path>& inputs = {}) {
  if (g.out.empty()) throw UsageError("--out is required");
  const fs::path out(g.out);
  fs::create_directories(out);
  for (const auto& in : inputs) {
    const auto dir = fs::is_directory(in) ? in : in.parent_path();
    if (!dir.empty() && fs::exists(dir) && fs::equivalent(dir, out))
      throw UsageError("--out must differ from the input directory '" + dir.string() + "'");
  }
  fs::remove(out / kManifestName);
  return out;
}

RunManifest start_manifest(const Globals& g, const std::string& stage) {
  RunManifest m;
  m.stage = stage;
  m.argv = g.argv;
  m.seeds["seed"] = g.seed;
  return m;
}

struct LoadedPlant {
  std::string path;
  PlantConfig cfg;
};

LoadedPlant load_plant(const Globals& g) {
  const auto path = resolve_config_path(g.plant);
  return {path, load_config_file(path)};
}

std::size_t joint_arg(const PlantConfig& cfg, const std::string& s) {
  if (auto i = cfg.joint_index(s)) return *i;
  std::size_t pos = 0;
  try {
    const auto i = std::stoul(s, &pos);
    if (pos == s.size() && i < cfg.n_joints()) return i;
  } catch (const std::exception&) {
  }
  throw UsageError("unknown joint '" + s + "' (name or index 0.." + std::to_string(cfg.n_joints() - 1) + ")");
}

std::vector<std::size_t> joint_args(const PlantConfig& cfg, const std::vector<std::string>& v) {
  std::vector<std::size_t> out;
  if (v.empty() || (v.size() == 1 && v[0] == "all")) {
    for (std::size_t j = 0; j < cfg.n_joints(); ++j) out.push_back(j);
    return out;
  }
  for (const auto& s : v) out.push_back(joint_arg(cfg, s));
  return out;
}

/// Posture list from `--posture` (EP/HP/EN/HN, or E/H combined with
/// `--direction`), defaulting to all four.
std::vector<Posture> posture_args(const std::vector<std::string>& v, const std::string& direction) {
  std::optional<Direction> dir;
  if (!direction.empty()) {
    try {
      dir = parse_direction(direction);
    } catch (const std::exception& e) {
      throw UsageError(e.what());
    }
  }
  std::vector<Posture> out;
  auto add = [&](Posture p) {
    if (!dir || direction_of(p) == *dir) out.push_back(p);
  };
  if (v.empty()) {
    for (auto p : kAllPostures) add(p);
    return out;
  }
  for (const auto& s : v) {
    if (s == "E" || s == "H") {
      const bool neg = dir && *dir == Direction::negative;
      out.push_back(parse_posture(s + (neg ? "N" : "P")));
      continue;
    }
    Posture p;
    try {
      p = parse_posture(s);
    } catch (const std::exception& e) {
      throw UsageError(e.what());
    }
    if (dir && direction_of(p) != *dir)
      throw UsageError("posture " + s + " contradicts --direction " + direction);
    out.push_back(p);
  }
  return out;
}

/// "Table 2/3"-style layout: one row per joint, mean and std per posture,
/// "-" where a condition was not measured.
void write_wide_summary(const fs::path& path, const PlantConfig& cfg, const std::vector<std::size_t>& joints,
                        const std::map<std::pair<std::size_t, Posture>, MeanStd>& cells) {
  std::vector<std::string> header{"joint"};
  for (auto p : kAllPostures) {
    header.push_back(std::string(to_string(p)) + "_mean");
    header.push_back(std::string(to_string(p)) + "_std");
    header.push_back(std::string(to_string(p)) + "_n");
  }
  csv::Writer w(path, header);
  for (auto j : joints) {
    std::vector<std::string> row{cfg.joints[j].name};
    for (auto p : kAllPostures) {
      auto it = cells.find({j, p});
      if (it == cells.end() || it->second.n == 0) {
        row.insert(row.end(), {"-", "-", "0"});
      } else {
        row.push_back(csv::num(it->second.mean));
        row.push_back(csv::num(it->second.std));
        row.push_back(std::to_string(it->second.n));
      }
    }
    w.row(row);
  }
  w.close();
}

struct CharacterizeArgs {
  std::vector<std::string> joints;
  std::vector<std::string> postures;
  std::string direction;
  int trials = 10;
  int grid = 12;
  double ramp_rate = 1.0;
  std::optional<double> u_diff;
  bool no_noise = false;
  bool no_jitter = false;
  double duration = 60.0;
  int warmup = 1;
};

Plant make_characterize_plant(const LoadedPlant& lp, const CharacterizeArgs& a, std::uint64_t seed) {
  Plant plant(lp.cfg, seed);
  if (a.no_noise) plant.set_noise(false);
  if (a.no_jitter) plant.set_jitter(false);
  return plant;
}

int run_characterize(const Globals& g, const std::string& exp, const CharacterizeArgs& a) {
  Stopwatch sw;
  const auto lp = load_plant(g);
  const auto joints = joint_args(lp.cfg, a.joints);
  const auto postures = posture_args(a.postures, a.direction);
  if (a.trials < 1) throw UsageError("--trials must be >= 1");
  const auto out = prepare_out(g);
  auto m = start_manifest(g, "characterize " + exp);
  m.add_config(out, "plant", lp.path);
  m.params["trials"] = std::to_string(a.trials);
  m.params["noise"] = a.no_noise ? "off" : (lp.cfg.noise ? "on" : "off");
  m.params["jitter"] = a.no_jitter ? "off" : (lp.cfg.jitter ? "on" : "off");
  auto plant = make_characterize_plant(lp, a, g.seed);
  ExperimentOptions opt;
  opt.seed = g.seed;

  // Conditions without a posture table in the config are skipped.
  auto conditions = [&] {
    std::vector<std::pair<std::size_t, Posture>> c;
    for (auto j : joints)
      for (auto p : postures)
        if (plant.has_posture(p, j)) c.emplace_back(j, p);
    if (c.empty()) throw std::runtime_error("no measurable (joint, posture) condition in the plant config");
    return c;
  };
  const auto& names = lp.cfg.joints;

  if (exp == "delay") {
    m.params["grid"] = std::to_string(a.grid);
    if (a.u_diff) m.params["u_diff"] = csv::num(*a.u_diff);
    csv::Writer trials(out / "delay_trials.csv",
                       {"joint", "posture", "direction", "u_diff", "trial", "moved", "t_delay_ms"});
    csv::Writer curve(out / "delay_curve.csv",
                      {"joint", "posture", "direction", "u_diff", "mean_ms", "std_ms", "moved", "trials"});
    std::map<std::pair<std::size_t, Posture>, MeanStd> cells;
    for (auto [j, p] : conditions()) {
      log(g, fmt::format("delay: {} {}", names[j].name, to_string(p)));
      std::vector<DelaySweepPoint> points;
      if (a.u_diff) {
        DelaySweepPoint pt;
        pt.u_diff = *a.u_diff;
        pt.results = measure_time_delay(plant, j, p, *a.u_diff, a.trials, opt);
        std::vector<double> d;
        for (const auto& r : pt.results)
          if (r.t_delay_ms) d.push_back(*r.t_delay_ms);
        pt.delay = summarize(d);
        cells[{j, p}] = pt.delay;
        points.push_back(std::move(pt));
      } else {
        auto sweep = delay_sweep(plant, j, p, a.trials, opt, a.grid);
        cells[{j, p}] = sweep.converged;
        points = std::move(sweep.points);
      }
      const std::string ps(to_string(p)), ds(to_string(direction_of(p)));
      for (const auto& pt : points) {
        for (const auto& r : pt.results)
          trials.row({names[j].name, ps, ds, csv::num(pt.u_diff), std::to_string(r.trial), r.t_delay_ms ? "1" : "0",
                      r.t_delay_ms ? csv::num(*r.t_delay_ms) : "nan"});
        curve.row({names[j].name, ps, ds, csv::num(pt.u_diff), csv::num(pt.delay.mean), csv::num(pt.delay.std),
                   std::to_string(pt.delay.n), std::to_string(pt.results.size())});
      }
      m.summary["converged_ms"][names[j].name][ps] = cells[{j, p}].mean;
    }
    trials.close();
    curve.close();
    write_wide_summary(out / "delay_summary.csv", lp.cfg, joints, cells);
    for (auto f : {"delay_trials.csv", "delay_curve.csv", "delay_summary.csv"}) m.add_output(out, out / f);
  } else if (exp == "minpress") {
    if (!(a.ramp_rate > 0)) throw UsageError("--ramp-rate must be > 0");
    m.params["ramp_rate"] = csv::num(a.ramp_rate);
    csv::Writer trials(out / "minpress_trials.csv", {"joint", "posture", "direction", "hold", "trial", "moved", "u_diff"});
    std::map<std::pair<std::size_t, Posture>, MeanStd> cells;
    for (auto [j, p] : conditions()) {
      log(g, fmt::format("minpress: {} {}", names[j].name, to_string(p)));
      const double hold = find_hold_command(plant, j, p, opt);
      const auto res = measure_min_pressure(plant, j, p, a.ramp_rate, a.trials, opt, hold);
      std::vector<double> v;
      for (const auto& r : res) {
        trials.row({names[j].name, std::string(to_string(p)), std::string(to_string(direction_of(p))), csv::num(hold),
                    std::to_string(r.trial), r.u_diff ? "1" : "0", r.u_diff ? csv::num(*r.u_diff) : "nan"});
        if (r.u_diff) v.push_back(*r.u_diff);
      }
      cells[{j, p}] = summarize(v);
      m.summary["min_u_diff"][names[j].name][std::string(to_string(p))] = cells[{j, p}].mean;
    }
    trials.close();
    write_wide_summary(out / "minpress_summary.csv", lp.cfg, joints, cells);
    for (auto f : {"minpress_trials.csv", "minpress_summary.csv"}) m.add_output(out, out / f);
  } else if (exp == "maxvel") {
    csv::Writer trials(out / "maxvel_trials.csv", {"joint", "posture", "direction", "trial", "peak_velocity"});
    std::map<std::pair<std::size_t, Posture>, MeanStd> cells;
    for (auto [j, p] : conditions()) {
      log(g, fmt::format("maxvel: {} {}", names[j].name, to_string(p)));
      const auto res = measure_max_velocity(plant, j, p, a.trials, opt);
      std::vector<double> v;
      for (const auto& r : res) {
        trials.row({names[j].name, std::string(to_string(p)), std::string(to_string(direction_of(p))),
                    std::to_string(r.trial), csv::num(r.peak_velocity)});
        v.push_back(std::abs(r.peak_velocity));
      }
      cells[{j, p}] = summarize(v);
      m.summary["peak_velocity"][names[j].name][std::string(to_string(p))] = cells[{j, p}].mean;
    }
    trials.close();
    write_wide_summary(out / "maxvel_summary.csv", lp.cfg, joints, cells);
    for (auto f : {"maxvel_trials.csv", "maxvel_summary.csv"}) m.add_output(out, out / f);
  } else if (exp == "repro") {
    if (a.warmup < 0) throw UsageError("--warmup must be >= 0");
    if (!(a.duration > 0)) throw UsageError("--duration must be > 0");
    m.params["duration"] = csv::num(a.duration);
    m.params["warmup"] = std::to_string(a.warmup);
    const auto commands = random_command_sequence(lp.cfg.n_joints(), a.duration, lp.cfg.u_max, g.seed);
    log(g, fmt::format("repro: {} + {} trials of {} s", a.warmup, a.trials, a.duration));
    const auto rep = assess_reproducibility(plant, commands, a.trials, a.warmup, g.seed);
    csv::Writer summary(out / "repro_summary.csv",
                        {"joint", "range", "max_rmse", "mean_rmse", "max_pct_of_range", "trials"});
    for (std::size_t j = 0; j < lp.cfg.n_joints(); ++j) {
      const auto& mat = rep.rmse[j];
      double mx = 0.0, sum = 0.0;
      std::size_t cnt = 0;
      std::vector<std::string> header{"trial"};
      for (std::size_t b = 0; b < mat.size(); ++b) header.push_back(fmt::format("t{}", b));
      const auto name = fmt::format("repro_rmse_{}.csv", names[j].name);
      csv::Writer w(out / name, header);
      for (std::size_t r = 0; r < mat.size(); ++r) {
        std::vector<std::string> row{std::to_string(r)};
        for (std::size_t c = 0; c < mat.size(); ++c) {
          row.push_back(csv::num(mat[r][c]));
          if (r != c) {
            mx = std::max(mx, mat[r][c]);
            sum += mat[r][c];
            ++cnt;
          }
        }
        w.row(row);
      }
      w.close();
      m.add_output(out, out / name);
      const double range = names[j].range();
      summary.row({names[j].name, csv::num(range), csv::num(mx), csv::num(cnt ? sum / cnt : 0.0),
                   csv::num(100.0 * mx / range), std::to_string(mat.size())});
      m.summary["max_pct_of_range"][names[j].name] = 100.0 * mx / range;
    }
    summary.close();
    std::vector<std::string> header{"tick", "t"};
    for (const auto& jp : names) header.push_back("std_" + jp.name);
    csv::Writer trace(out / "repro_std.csv", header);
    for (std::size_t k = 0; k < rep.std_trace.front().size(); ++k) {
      std::vector<std::string> row{std::to_string(k + 1), csv::num(static_cast<double>(k + 1) * kControlDt)};
      for (std::size_t j = 0; j < names.size(); ++j) row.push_back(csv::num(rep.std_trace[j][k]));
      trace.row(row);
    }
    trace.close();
    for (auto f : {"repro_summary.csv", "repro_std.csv"}) m.add_output(out, out / f);
  } else {
    throw UsageError("unknown experiment '" + exp + "' (delay|minpress|maxvel|repro)");
  }
  m.wall_seconds = sw.seconds();
  m.write(out);
  return 0;
}

PidGains load_gains_arg(const std::string& arg, const PlantConfig& cfg, std::string* path_out) {
  const auto path = resolve_config_path(arg);
  if (path_out) *path_out = path;
  return load_gains_file(path, cfg.n_joints(), cfg.u_max);
}

struct CollectArgs {
  std::string gains = "gains_arm4";
  int trials = 100;
  double duration = 60.0;
  double step_scale = 15.0;
  double inset = 5.0;
  double hold_min = 0.1;
  double hold_max = 1.0;
};

int run_collect(const Globals& g, const CollectArgs& a) {
  Stopwatch sw;
  const auto lp = load_plant(g);
  std::string gains_path;
  const auto gains = load_gains_arg(a.gains, lp.cfg, &gains_path);
  if (a.trials < 1) throw UsageError("--trials must be >= 1");
  if (!(a.duration > 0)) throw UsageError("--duration must be > 0");
  auto walk = RandomWalkSpec::for_plant(lp.cfg, a.inset);
  walk.step_scale = a.step_scale;
  walk.hold_min = a.hold_min;
  walk.hold_max = a.hold_max;
  try {
    walk.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  const auto out = prepare_out(g);
  auto m = start_manifest(g, "collect");
  m.add_config(out, "plant", lp.path);
  m.add_config(out, "gains", gains_path);
  m.params["trials"] = std::to_string(a.trials);
  m.params["duration"] = csv::num(a.duration);
  m.params["step_scale"] = csv::num(a.step_scale);
  m.params["inset"] = csv::num(a.inset);
  m.params["hold_min"] = csv::num(a.hold_min);
  m.params["hold_max"] = csv::num(a.hold_max);

  Plant plant(lp.cfg, g.seed);
  std::vector<std::string> names;
  for (const auto& j : lp.cfg.joints) names.push_back(j.name);
  log(g, fmt::format("collect: {} trials x {} s", a.trials, a.duration));
  const auto ds = collect(plant, gains, walk, a.trials, a.duration, g.seed, names);
  for (const auto& f : csv::write_dataset(out, ds)) m.add_output(out, f);
  int valid = 0;
  for (const auto& t : ds.trials) {
    valid += t.valid ? 1 : 0;
    m.seeds[fmt::format("trial_{:03d}", t.trial)] = t.seed;
    if (!t.valid) log(g, fmt::format("trial {} invalid: {}", t.trial, t.fault));
  }
  m.summary["rows"] = ds.rows();
  m.summary["trials"] = ds.trials.size();
  m.summary["valid_trials"] = valid;
  m.wall_seconds = sw.seconds();
  m.write(out);
  if (valid == 0) throw std::runtime_error("every trial hit a simulation fault");
  return 0;
}

struct TrainArgs {
  std::string data;
  int tau = learn::kDefaultTau;
  int hidden = 200;
  int epochs = 200;
  int batch = 256;
  double lr = 1e-3;
  double weight_decay = 0.0;
  double val_split = 0.1;
  std::string report;
};

int run_train(const Globals& g, const TrainArgs& a) {
  Stopwatch sw;
  if (a.data.empty()) throw UsageError("--data is required");
  if (a.tau < 0) throw UsageError("--tau must be >= 0");
  if (a.hidden < 1 || a.epochs < 1 || a.batch < 1) throw UsageError("--hidden, --epochs and --batch must be >= 1");
  if (!(a.val_split >= 0 && a.val_split < 1)) throw UsageError("--val-split must lie in [0, 1)");
  // --out names the model file (`*.bin`) or its directory.
  if (g.out.empty()) throw UsageError("--out is required");
  fs::path model_path(g.out);
  Globals gd = g;
  if (model_path.extension() == ".bin") {
    gd.out = model_path.parent_path().empty() ? "." : model_path.parent_path().string();
  } else {
    model_path /= "model.bin";
  }
  const auto out = prepare_out(gd, {fs::path(a.data)});
  const fs::path report = a.report.empty() ? out / "losses.csv" : fs::path(a.report);

  auto m = start_manifest(g, "train");
  m.add_input(a.data);
  for (const auto& [k, v] : std::map<std::string, std::string>{
           {"tau", std::to_string(a.tau)},
           {"hidden", std::to_string(a.hidden)},
           {"epochs", std::to_string(a.epochs)},
           {"batch", std::to_string(a.batch)},
           {"lr", csv::num(a.lr)},
           {"weight_decay", csv::num(a.weight_decay)},
           {"val_split", csv::num(a.val_split)}})
    m.params[k] = v;

  const auto ds = csv::read_dataset(a.data);
  const auto mats = learn::build_matrices(ds, a.tau);
  for (auto t : mats.skipped_trials) log(g, fmt::format("warning: trial {} skipped (invalid or shorter than tau+1)", t));
  if (mats.X.rows() < 2) throw std::runtime_error("not enough rows to train on");
  learn::TrainHyper h;
  h.epochs = a.epochs;
  h.batch = a.batch;
  h.learning_rate = a.lr;
  h.weight_decay = a.weight_decay;
  h.val_split = a.val_split;
  h.hidden = a.hidden;
  h.seed = g.seed;
  h.on_epoch = [&](const learn::EpochLoss& e, const learn::Mlp&) {
    if (!g.quiet && (e.epoch == 1 || e.epoch % 10 == 0 || e.epoch == a.epochs))
      std::fprintf(stderr, "epoch %4d  train %.6f  val %.6f\n", e.epoch, e.train, e.val);
  };
  log(g, fmt::format("train: {} rows, {} inputs, {} outputs", mats.X.rows(), mats.X.cols(), mats.Y.cols()));
  const auto res = learn::train(mats, h);
  learn::save_model(res.model, model_path.string());

  csv::Writer w(report, {"epoch", "train_loss", "val_loss", "best"});
  for (const auto& e : res.history)
    w.row({std::to_string(e.epoch), csv::num(e.train), csv::num(e.val), e.epoch == res.best_epoch ? "1" : "0"});
  w.close();

  m.add_output(out, model_path);
  if (fs::absolute(report).parent_path() == fs::absolute(out)) m.add_output(out, report);
  else m.outputs.push_back(fs::absolute(report).string());
  m.summary["rows"] = mats.X.rows();
  m.summary["train_rows"] = res.train_rows;
  m.summary["val_rows"] = res.val_rows;
  m.summary["best_epoch"] = res.best_epoch;
  m.summary["best_val_loss"] = res.best_loss;
  m.wall_seconds = sw.seconds();
  m.write(out);
  return 0;
}

struct RefArgs {
  std::string kind = "scripted";
  double duration = 30.0;
  double amplitude = 35.0;
  std::string joint;
  double from = std::nan("");
  double to = std::nan("");
  double speed = 1.0;
};

ReferenceTrajectory build_reference(const PlantConfig& cfg, const RefArgs& a, std::uint64_t seed) {
  if (a.kind == "scripted") {
    ScriptedSpec spec;
    spec.duration = a.duration;
    spec.amplitude = a.amplitude;
    spec.seed = seed;
    try {
      spec.validate();
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
    return make_scripted_reference(cfg, spec);
  }
  if (a.kind == "ramp") {
    if (a.joint.empty()) throw UsageError("ramp references need --joint");
    const auto j = joint_arg(cfg, a.joint);
    const double from = std::isnan(a.from) ? cfg.joints[j].home : a.from;
    const double to = std::isnan(a.to) ? from + 30.0 : a.to;
    return make_ramp_reference(cfg, j, from, to, a.speed);
  }
  throw UsageError("unknown reference kind '" + a.kind + "' (scripted|ramp)");
}

int run_make_ref(const Globals& g, const RefArgs& a) {
  Stopwatch sw;
  const auto lp = load_plant(g);
  const auto ref = build_reference(lp.cfg, a, g.seed);
  const auto out = prepare_out(g);
  auto m = start_manifest(g, "make-ref");
  m.add_config(out, "plant", lp.path);
  m.params["kind"] = a.kind;
  m.params["duration"] = csv::num(ref.duration());
  std::vector<std::string> names;
  for (const auto& j : lp.cfg.joints) names.push_back(j.name);
  csv::write_reference(out / "ref.csv", ref, names);
  m.add_output(out, out / "ref.csv");
  m.wall_seconds = sw.seconds();
  m.write(out);
  return 0;
}

struct TrackArgs {
  std::string model;
  std::string gains = "gains_arm4";
  std::string ref;
  std::string controller = "both";
  int trials = 10;
  double duration = 0.0;  // 0: the reference's own duration
  RefArgs gen;
};

int run_track(const Globals& g, const TrackArgs& a) {
  Stopwatch sw;
  const auto lp = load_plant(g);
  std::vector<ControllerKind> kinds;
  if (a.controller == "both") kinds = {ControllerKind::pid, ControllerKind::model};
  else {
    try {
      kinds = {parse_controller(a.controller)};
    } catch (const std::exception& e) {
      throw UsageError(e.what());
    }
  }
  if (a.trials < 1) throw UsageError("--trials must be >= 1");
  const bool need_model = std::find(kinds.begin(), kinds.end(), ControllerKind::model) != kinds.end();
  const bool need_pid = std::find(kinds.begin(), kinds.end(), ControllerKind::pid) != kinds.end();
  if (need_model && a.model.empty()) throw UsageError("--model is required for the model controller");

  std::vector<fs::path> inputs;
  std::optional<learn::InverseModel> model;
  if (need_model) {
    model = learn::load_model(a.model);
    if (model->n_joints != lp.cfg.n_joints()) throw UsageError("model joint count does not match the plant");
    inputs.emplace_back(a.model);
  }
  std::optional<PidGains> gains;
  std::string gains_path;
  if (need_pid) gains = load_gains_arg(a.gains, lp.cfg, &gains_path);

  const auto ref = a.ref.empty() ? build_reference(lp.cfg, a.gen, g.seed) : csv::read_reference(a.ref, lp.cfg);
  if (!a.ref.empty()) inputs.emplace_back(a.ref);
  const double duration = a.duration > 0 ? a.duration : ref.duration();
  const auto ticks = static_cast<std::size_t>(std::lround(duration * kControlRate));
  const int tau = model ? model->tau : 0;
  const auto samples = ref.sample(ticks + static_cast<std::size_t>(tau) + 1);

  const auto out = prepare_out(g, inputs);
  auto m = start_manifest(g, "track");
  m.add_config(out, "plant", lp.path);
  if (need_pid) m.add_config(out, "gains", gains_path);
  for (const auto& in : inputs) m.add_input(in);
  m.params["controller"] = a.controller;
  m.params["trials"] = std::to_string(a.trials);
  m.params["duration"] = csv::num(duration);
  m.params["reference"] = a.ref.empty() ? "generated " + a.gen.kind : a.ref;

  std::vector<std::string> names;
  for (const auto& j : lp.cfg.joints) names.push_back(j.name);
  csv::write_reference(out / "ref.csv", ref, names);

  Plant plant(lp.cfg, g.seed);
  std::vector<TrackResult> runs;
  for (auto kind : kinds) {
    for (int t = 0; t < a.trials; ++t) {
      const auto seed = track_trial_seed(g.seed, t);
      log(g, fmt::format("track: {} trial {}", to_string(kind), t));
      runs.push_back(kind == ControllerKind::model
                         ? track_model(plant, *model, samples, ticks, seed, model_rest_command(*model), &lp.cfg)
                         : track_pid(plant, *gains, samples, ticks, seed, &lp.cfg));
      if (!runs.back().valid) log(g, "  fault: " + runs.back().fault);
    }
  }
  m.add_output(out, out / "ref.csv");
  for (const auto& f : csv::write_runs(out, names, runs)) m.add_output(out, f);
  const auto cmp = compare(runs);
  for (const auto& c : cmp.controllers)
    for (std::size_t j = 0; j < names.size(); ++j)
      m.summary["rmse_mean"][std::string(to_string(c.controller))][names[j]] = c.rmse[j].mean;
  m.wall_seconds = sw.seconds();
  m.write(out);
  for (const auto& r : runs)
    if (!r.valid) throw std::runtime_error("a tracking run hit a simulation fault: " + r.fault);
  return 0;
}

const char* kPlotRmse = R"(import csv
import matplotlib.pyplot as plt

rows = list(csv.DictReader(open("rmse.csv")))
joints = list(dict.fromkeys(r["joint"] for r in rows))
ctrls = list(dict.fromkeys(r["controller"] for r in rows))
width = 0.8 / max(1, len(ctrls))
fig, ax = plt.subplots(figsize=(7, 4))
for i, c in enumerate(ctrls):
    sel = {r["joint"]: r for r in rows if r["controller"] == c}
    xs = [k + i * width for k in range(len(joints))]
    ax.bar(xs, [float(sel[j]["mean"]) for j in joints], width,
           yerr=[float(sel[j]["std"]) for j in joints], capsize=3, label=c)
ax.set_xticks([k + width * (len(ctrls) - 1) / 2 for k in range(len(joints))])
ax.set_xticklabels(joints, rotation=20)
ax.set_ylabel("RMSE [0-100]")
ax.legend()
fig.tight_layout()
fig.savefig("rmse.png", dpi=150)
)";

const char* kPlotTrajectory = R"(import csv
import matplotlib.pyplot as plt

rows = list(csv.DictReader(open("trajectory.csv")))
cols = rows[0].keys()
joints = [c[4:] for c in cols if c.startswith("ref_")]
ctrls = sorted({c.split("_mean_")[0] for c in cols if "_mean_" in c})
t = [float(r["t"]) for r in rows]
fig, axes = plt.subplots(len(joints), 1, sharex=True, figsize=(8, 2.2 * len(joints)), squeeze=False)
for ax, j in zip(axes[:, 0], joints):
    ax.plot(t, [float(r["ref_" + j]) for r in rows], "k--", lw=1, label="reference")
    for c in ctrls:
        mu = [float(r[f"{c}_mean_{j}"]) for r in rows]
        sd = [float(r[f"{c}_std_{j}"]) for r in rows]
        ax.plot(t, mu, lw=1, label=c)
        ax.fill_between(t, [m - s for m, s in zip(mu, sd)], [m + s for m, s in zip(mu, sd)], alpha=0.3)
    ax.set_ylabel(j)
axes[0, 0].legend(loc="upper right")
axes[-1, 0].set_xlabel("t [s]")
fig.tight_layout()
fig.savefig("trajectory.png", dpi=150)
)";

int run_report(const Globals& g, const std::vector<std::string>& in_dirs) {
  Stopwatch sw;
  if (in_dirs.empty()) throw UsageError("--in is required");
  std::vector<fs::path> inputs(in_dirs.begin(), in_dirs.end());
  const auto out = prepare_out(g, inputs);
  auto m = start_manifest(g, "report");
  std::vector<TrackResult> runs;
  std::vector<std::string> joints;
  for (const auto& d : inputs) {
    m.add_input(d);
    std::vector<std::string> j;
    auto r = csv::read_runs(d, &j);
    if (joints.empty()) joints = j;
    else if (j != joints) throw std::runtime_error("input directories log different joints");
    runs.insert(runs.end(), std::make_move_iterator(r.begin()), std::make_move_iterator(r.end()));
  }
  const auto cmp = compare(runs);

  csv::Writer rmse(out / "rmse.csv", {"joint", "controller", "mean", "std", "trials"});
  for (std::size_t j = 0; j < joints.size(); ++j)
    for (const auto& c : cmp.controllers)
      rmse.row({joints[j], std::string(to_string(c.controller)), csv::num(c.rmse[j].mean), csv::num(c.rmse[j].std),
                std::to_string(c.trials)});
  rmse.close();

  std::vector<std::string> th{"controller", "trial", "seed"};
  for (const auto& j : joints) th.push_back("rmse_" + j);
  csv::Writer per_trial(out / "rmse_trials.csv", th);
  std::map<ControllerKind, int> counter;
  for (const auto& r : runs) {
    std::vector<std::string> row{std::string(to_string(r.controller)), std::to_string(counter[r.controller]++),
                                 std::to_string(r.seed)};
    for (double x : r.rmse) row.push_back(csv::num(x));
    per_trial.row(row);
  }
  per_trial.close();

  std::vector<std::string> hh{"tick", "t"};
  for (const auto& j : joints) hh.push_back("ref_" + j);
  for (const auto& c : cmp.controllers)
    for (const auto& j : joints) {
      hh.push_back(std::string(to_string(c.controller)) + "_mean_" + j);
      hh.push_back(std::string(to_string(c.controller)) + "_std_" + j);
    }
  csv::Writer traj(out / "trajectory.csv", hh);
  for (std::size_t k = 0; k < cmp.ref.size(); ++k) {
    std::vector<double> row{static_cast<double>(k), static_cast<double>(k) * kControlDt};
    row.insert(row.end(), cmp.ref[k].begin(), cmp.ref[k].end());
    for (const auto& c : cmp.controllers)
      for (std::size_t j = 0; j < joints.size(); ++j) {
        row.push_back(c.mean_q[k][j]);
        row.push_back(c.std_q[k][j]);
      }
    traj.row_numbers(row);
  }
  traj.close();

  // Lag of the mean response behind the reference, per controller and joint.
  csv::Writer lag(out / "lag.csv", {"joint", "controller", "lag_ticks", "lag_ms"});
  for (std::size_t j = 0; j < joints.size(); ++j) {
    std::vector<double> r;
    for (const auto& v : cmp.ref) r.push_back(v[j]);
    for (const auto& c : cmp.controllers) {
      std::vector<double> q;
      for (const auto& v : c.mean_q) q.push_back(v[j]);
      const int l = xcorr_lag(r, q);
      lag.row({joints[j], std::string(to_string(c.controller)), std::to_string(l),
               csv::num(static_cast<double>(l) * kControlDt * 1000.0)});
    }
  }
  lag.close();

  std::vector<std::string> outputs{"rmse.csv", "rmse_trials.csv", "trajectory.csv", "lag.csv"};
  if (cmp.controllers.size() == 2) {
    csv::Writer red(out / "reduction.csv", {"joint", "pid_rmse", "model_rmse", "ratio", "reduction_pct"});
    for (std::size_t j = 0; j < joints.size(); ++j) {
      const double p = cmp.controllers[0].rmse[j].mean, md = cmp.controllers[1].rmse[j].mean;
      red.row({joints[j], csv::num(p), csv::num(md), csv::num(md / p), csv::num(100.0 * (1.0 - md / p))});
      m.summary["reduction_pct"][joints[j]] = 100.0 * (1.0 - md / p);
    }
    red.close();
    outputs.push_back("reduction.csv");
  }
  for (const auto& [name, body] : {std::pair{"plot_rmse.py", kPlotRmse}, std::pair{"plot_trajectory.py", kPlotTrajectory}}) {
    std::ofstream f(out / name, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error(std::string("cannot write ") + name);
    f << body;
    outputs.push_back(name);
  }
  for (const auto& f : outputs) m.add_output(out, out / f);
  m.wall_seconds = sw.seconds();
  m.write(out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  Globals g;
  for (int i = 0; i < argc; ++i) g.argv.emplace_back(argv[i]);

  CLI::App app{"Simulated pneumatic arm: characterization, data collection, inverse-model training and tracking"};
  app.require_subcommand(1);
  app.fallthrough();
  app.add_option("--seed", g.seed, "Base random seed");
  app.add_option("--out", g.out, "Output directory (train: model file or directory)");
  app.add_option("--plant", g.plant, "Plant config path or name looked up in $PNEUMO_CONFIG_DIR");
  app.add_flag("-q,--quiet", g.quiet, "No progress output");

  // characterize
  CharacterizeArgs ca;
  std::string exp;
  auto* ch = app.add_subcommand("characterize", "Dynamic characterization experiments");
  ch->add_option("experiment", exp, "delay|minpress|maxvel|repro")->required();
  ch->add_option("--joint", ca.joints, "Joint names or indices (default: all)");
  ch->add_option("--posture", ca.postures, "EP|HP|EN|HN, or E|H with --direction (default: all)");
  ch->add_option("--direction", ca.direction, "pos|neg");
  ch->add_option("--trials", ca.trials, "Trials per condition")->capture_default_str();
  ch->add_option("--grid", ca.grid, "Delay sweep points")->capture_default_str();
  ch->add_option("--u-diff", ca.u_diff, "Single command difference instead of a delay sweep");
  ch->add_option("--ramp-rate", ca.ramp_rate, "Command units per tick (minpress)")->capture_default_str();
  ch->add_option("--duration", ca.duration, "Sequence length in s (repro)")->capture_default_str();
  ch->add_option("--warmup", ca.warmup, "Discarded leading trials (repro)")->capture_default_str();
  ch->add_flag("--no-noise", ca.no_noise, "Disable sensor noise");
  ch->add_flag("--no-jitter", ca.no_jitter, "Disable initial-state jitter");

  CollectArgs co;
  auto* cl = app.add_subcommand("collect", "PID random-walk data collection");
  cl->add_option("--gains", co.gains, "PID gains config")->capture_default_str();
  cl->add_option("--trials", co.trials)->capture_default_str();
  cl->add_option("--duration", co.duration, "Seconds per trial")->capture_default_str();
  cl->add_option("--step-scale", co.step_scale)->capture_default_str();
  cl->add_option("--inset", co.inset, "Reference bounds inset from the joint limits")->capture_default_str();
  cl->add_option("--hold-min", co.hold_min)->capture_default_str();
  cl->add_option("--hold-max", co.hold_max)->capture_default_str();

  TrainArgs ta;
  auto* tr = app.add_subcommand("train", "Train the inverse-dynamics model");
  tr->add_option("--data", ta.data, "Dataset directory from collect")->required();
  tr->add_option("--tau", ta.tau)->capture_default_str();
  tr->add_option("--hidden", ta.hidden)->capture_default_str();
  tr->add_option("--epochs", ta.epochs)->capture_default_str();
  tr->add_option("--batch", ta.batch)->capture_default_str();
  tr->add_option("--lr", ta.lr)->capture_default_str();
  tr->add_option("--weight-decay", ta.weight_decay)->capture_default_str();
  tr->add_option("--val-split", ta.val_split)->capture_default_str();
  tr->add_option("--report", ta.report, "Loss history CSV (default: <out dir>/losses.csv)");

  RefArgs ra;
  auto add_ref_opts = [&](CLI::App* sc, RefArgs& r) {
    sc->add_option("--ref-kind", r.kind, "scripted|ramp")->capture_default_str();
    sc->add_option("--ref-duration", r.duration)->capture_default_str();
    sc->add_option("--amplitude", r.amplitude)->capture_default_str();
    sc->add_option("--ramp-joint", r.joint);
    sc->add_option("--ramp-from", r.from);
    sc->add_option("--ramp-to", r.to);
    sc->add_option("--ramp-speed", r.speed)->capture_default_str();
  };
  auto* mr = app.add_subcommand("make-ref", "Write a reference trajectory (knot CSV)");
  add_ref_opts(mr, ra);

  TrackArgs tk;
  auto* tc = app.add_subcommand("track", "Closed-loop tracking runs");
  tc->add_option("--model", tk.model, "Model file from train");
  tc->add_option("--gains", tk.gains, "PID gains config")->capture_default_str();
  tc->add_option("--ref", tk.ref, "Reference knot CSV (default: generated)");
  tc->add_option("--controller", tk.controller, "model|pid|both")->capture_default_str();
  tc->add_option("--trials", tk.trials)->capture_default_str();
  tc->add_option("--duration", tk.duration, "Seconds (default: reference duration)");
  add_ref_opts(tc, tk.gen);

  std::vector<std::string> report_in;
  auto* rp = app.add_subcommand("report", "RMSE tables and plot scripts from track outputs");
  rp->add_option("--in", report_in, "Track output directories")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  std::string stage = "?";
  try {
    if (*ch) return stage = "characterize", run_characterize(g, exp, ca);
    if (*cl) return stage = "collect", run_collect(g, co);
    if (*tr) return stage = "train", run_train(g, ta);
    if (*mr) return stage = "make-ref", run_make_ref(g, ra);
    if (*tc) return stage = "track", run_track(g, tk);
    if (*rp) return stage = "report", run_report(g, report_in);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const UsageError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "%s failed: %s\n", stage.c_str(), e.what());
    return 1;
  }
  return 2;
}
