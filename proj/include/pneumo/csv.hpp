#pragma once

#include <array>
#include <charconv>
#include <filesystem>
#include <fmt/format.h>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "pneumo/datagen.hpp"
#include "pneumo/track.hpp"
#include "pneumo/types.hpp"

namespace pneumo::csv {

class CsvError : public std::runtime_error {
 public:
  CsvError(const std::string& file, std::size_t line, const std::string& what)
      : std::runtime_error(file + ":" + std::to_string(line) + ": " + what) {}
};

/// Shortest round-trip text for a double; identical inputs give identical bytes.
inline std::string num(double x) { return fmt::format("{}", x); }

/// Buffered CSV writer with a mandatory header; rows must match its width.
class Writer {
 public:
  Writer(std::filesystem::path path, std::vector<std::string> header)
      : path_(std::move(path)), width_(header.size()) {
    if (header.empty()) throw std::invalid_argument("CSV header must not be empty");
    append_row(header);
  }

  void row(const std::vector<std::string>& cells) {
    if (cells.size() != width_)
      throw std::invalid_argument(fmt::format("{}: row has {} cells, header has {}", path_.string(), cells.size(), width_));
    append_row(cells);
  }

  void row_numbers(const std::vector<double>& cells) {
    std::vector<std::string> s;
    s.reserve(cells.size());
    for (double x : cells) s.push_back(num(x));
    row(s);
  }

  /// Writes the file in one go; nothing touches disk before this call.
  void close() {
    std::ofstream f(path_, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write '" + path_.string() + "'");
    f << buf_;
    if (!f) throw std::runtime_error("failed writing '" + path_.string() + "'");
  }

 private:
  void append_row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (cells[i].find_first_of(",\n\"") != std::string::npos)
        throw std::invalid_argument("CSV cell contains a separator: '" + cells[i] + "'");
      if (i) buf_ += ',';
      buf_ += cells[i];
    }
    buf_ += '\n';
  }

  std::filesystem::path path_;
  std::size_t width_;
  std::string buf_;
};

/// Whole-file CSV table with header lookup.
struct Table {
  std::string file;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t col(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    throw CsvError(file, 1, "missing column '" + std::string(name) + "'");
  }

  double number(std::size_t r, std::size_t c) const {
    const auto& s = rows.at(r).at(c);
    double v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size())
      throw CsvError(file, r + 2, "column '" + header[c] + "': not a number '" + s + "'");
    return v;
  }
};

inline std::vector<std::string> split_line(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.emplace_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

inline Table read(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open '" + path.string() + "'");
  Table t;
  t.file = path.string();
  std::string line;
  std::size_t n = 0;
  while (std::getline(f, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cells = split_line(line);
    if (t.header.empty()) {
      t.header = std::move(cells);
      continue;
    }
    if (cells.size() != t.header.size())
      throw CsvError(t.file, n, fmt::format("expected {} cells, got {}", t.header.size(), cells.size()));
    t.rows.push_back(std::move(cells));
  }
  if (t.header.empty()) throw CsvError(t.file, 1, "missing header");
  return t;
}

// ---- per-tick logs ---------------------------------------------------------

inline constexpr const char* kSignalGroups[] = {"q", "v", "p_a", "p_b", "u_a", "u_b", "q_ref"};

/// Column order: tick, t, then per joint q, v, p_a, p_b, u_a, u_b, q_ref
/// (named `<signal>_<joint>`).
inline std::vector<std::string> sample_header(const std::vector<std::string>& joints) {
  std::vector<std::string> h{"tick", "t"};
  for (const auto& j : joints)
    for (const char* g : kSignalGroups) h.push_back(std::string(g) + "_" + j);
  return h;
}

namespace detail {
template <class R>
auto signal_columns(R& r) {
  return std::array{&r.q, &r.v, &r.p_a, &r.p_b, &r.u_a, &r.u_b, &r.q_ref};
}
}  // namespace detail

inline void write_samples(const std::filesystem::path& path, const std::vector<std::string>& joints,
                          const std::vector<SampleRecord>& rows) {
  Writer w(path, sample_header(joints));
  std::vector<std::string> cells;
  for (const auto& r : rows) {
    cells.clear();
    cells.push_back(std::to_string(r.tick));
    cells.push_back(num(r.t));
    const auto cols = detail::signal_columns(r);
    for (const auto* v : cols)
      if (v->size() != joints.size()) throw std::invalid_argument("sample arity does not match joint names");
    for (std::size_t j = 0; j < joints.size(); ++j)
      for (const auto* v : cols) cells.push_back(num((*v)[j]));
    w.row(cells);
  }
  w.close();
}

/// Joint names recovered from the `q_<joint>` columns.
inline std::vector<std::string> joints_from_header(const Table& t) {
  std::vector<std::string> joints;
  for (const auto& h : t.header)
    if (h.rfind("q_", 0) == 0 && h.rfind("q_ref_", 0) != 0) joints.push_back(h.substr(2));
  if (joints.empty()) throw CsvError(t.file, 1, "no q_<joint> columns");
  if (t.header != sample_header(joints)) throw CsvError(t.file, 1, "unexpected column layout");
  return joints;
}

inline std::vector<SampleRecord> read_samples(const std::filesystem::path& path, std::vector<std::string>* joints_out) {
  const auto t = read(path);
  const auto joints = joints_from_header(t);
  const std::size_t n = joints.size();
  std::vector<SampleRecord> rows;
  rows.reserve(t.rows.size());
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    SampleRecord s;
    s.tick = static_cast<long>(t.number(r, 0));
    s.t = t.number(r, 1);
    std::size_t c = 2;
    const auto cols = detail::signal_columns(s);
    for (auto* v : cols) v->resize(n);
    for (std::size_t i = 0; i < n; ++i)
      for (auto* v : cols) (*v)[i] = t.number(r, c++);
    if (s.tick != static_cast<long>(r)) throw CsvError(t.file, r + 2, "ticks must run 0, 1, 2, ...");
    rows.push_back(std::move(s));
  }
  if (joints_out) *joints_out = joints;
  return rows;
}

// ---- datasets --------------------------------------------------------------

inline std::string trial_file_name(int trial) { return fmt::format("trial_{:03d}.csv", trial); }

/// One CSV per trial plus `trials.csv` (trial, seed, valid, rows, fault).
inline std::vector<std::filesystem::path> write_dataset(const std::filesystem::path& dir, const Dataset& ds) {
  std::vector<std::filesystem::path> files;
  Writer index(dir / "trials.csv", {"trial", "seed", "valid", "rows", "file", "fault"});
  for (const auto& t : ds.trials) {
    const auto name = trial_file_name(t.trial);
    write_samples(dir / name, ds.joint_names, t.rows);
    files.push_back(dir / name);
    std::string fault = t.fault;
    for (auto& ch : fault)
      if (ch == ',' || ch == '\n' || ch == '"') ch = ';';
    index.row({std::to_string(t.trial), std::to_string(t.seed), t.valid ? "1" : "0", std::to_string(t.rows.size()),
               name, fault});
  }
  index.close();
  files.push_back(dir / "trials.csv");
  return files;
}

inline Dataset read_dataset(const std::filesystem::path& dir) {
  const auto index = read(dir / "trials.csv");
  const auto c_trial = index.col("trial"), c_seed = index.col("seed"), c_valid = index.col("valid"),
             c_file = index.col("file"), c_fault = index.col("fault");
  Dataset ds;
  for (std::size_t r = 0; r < index.rows.size(); ++r) {
    TrialLog t;
    t.trial = static_cast<int>(index.number(r, c_trial));
    t.seed = std::stoull(index.rows[r][c_seed]);
    t.valid = index.rows[r][c_valid] == "1";
    t.fault = index.rows[r][c_fault];
    std::vector<std::string> joints;
    t.rows = read_samples(dir / index.rows[r][c_file], &joints);
    if (ds.joint_names.empty()) ds.joint_names = joints;
    else if (joints != ds.joint_names) throw CsvError(index.file, r + 2, "trial joints differ from earlier trials");
    ds.trials.push_back(std::move(t));
  }
  if (ds.trials.empty()) throw CsvError(index.file, 1, "dataset lists no trials");
  return ds;
}

// ---- references ------------------------------------------------------------

/// Knot file: `t` then one column per joint, named as in the plant config.
inline void write_reference(const std::filesystem::path& path, const ReferenceTrajectory& ref,
                            const std::vector<std::string>& joints) {
  if (joints.size() != ref.n_joints()) throw std::invalid_argument("reference arity does not match joint names");
  std::vector<std::string> header{"t"};
  header.insert(header.end(), joints.begin(), joints.end());
  Writer w(path, header);
  for (std::size_t i = 0; i < ref.knot_times().size(); ++i) {
    std::vector<double> row{ref.knot_times()[i]};
    row.insert(row.end(), ref.knots()[i].begin(), ref.knots()[i].end());
    w.row_numbers(row);
  }
  w.close();
}

/// Reads a knot file against `cfg`; malformed files raise ConfigError with
/// the offending line and column.
inline ReferenceTrajectory read_reference(const std::filesystem::path& path, const PlantConfig& cfg) {
  Table t;
  try {
    t = read(path);
  } catch (const CsvError& e) {
    throw ConfigError(path.string(), 0, "", e.what());
  } catch (const std::runtime_error& e) {
    throw ConfigError(path.string(), 0, "", e.what());
  }
  if (t.header.empty() || t.header[0] != "t") throw ConfigError(t.file, 1, "t", "first column must be 't'");
  std::vector<std::size_t> cols;
  for (const auto& j : cfg.joints) {
    const auto it = std::find(t.header.begin(), t.header.end(), j.name);
    if (it == t.header.end()) throw ConfigError(t.file, 1, j.name, "missing column for joint");
    cols.push_back(static_cast<std::size_t>(it - t.header.begin()));
  }
  std::vector<double> times;
  std::vector<JointVector> knots;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    auto cell = [&](std::size_t c) {
      try {
        return t.number(r, c);
      } catch (const CsvError& e) {
        throw ConfigError(t.file, static_cast<int>(r + 2), t.header[c], "not a number");
      }
    };
    times.push_back(cell(0));
    JointVector k;
    for (auto c : cols) k.push_back(cell(c));
    knots.push_back(std::move(k));
  }
  for (std::size_t i = 1; i < times.size(); ++i)
    if (!(times[i] > times[i - 1])) throw ConfigError(t.file, static_cast<int>(i + 2), "t", "knot times must increase");
  return make_recorded_reference(cfg, std::move(times), std::move(knots));
}

// ---- tracking runs -----------------------------------------------------------

inline std::string run_file_name(ControllerKind c, int trial) {
  return fmt::format("{}_trial_{:03d}.csv", to_string(c), trial);
}

inline std::vector<std::string> runs_header(const std::vector<std::string>& joints) {
  std::vector<std::string> h{"controller", "trial", "seed", "valid", "rows", "file"};
  for (const auto& j : joints) h.push_back("rmse_" + j);
  h.push_back("fault");
  return h;
}

/// Per-run sample logs plus `runs.csv` (controller, trial, seed, valid, rows,
/// file, rmse per joint, fault).
inline std::vector<std::filesystem::path> write_runs(const std::filesystem::path& dir,
                                                     const std::vector<std::string>& joints,
                                                     const std::vector<TrackResult>& runs) {
  std::vector<std::filesystem::path> files;
  Writer index(dir / "runs.csv", runs_header(joints));
  std::map<ControllerKind, int> counter;
  for (const auto& r : runs) {
    const int trial = counter[r.controller]++;
    const auto name = run_file_name(r.controller, trial);
    write_samples(dir / name, joints, r.rows);
    files.push_back(dir / name);
    std::vector<std::string> cells{std::string(to_string(r.controller)), std::to_string(trial), std::to_string(r.seed),
                                   r.valid ? "1" : "0", std::to_string(r.rows.size()), name};
    for (double x : r.rmse) cells.push_back(num(x));
    std::string fault = r.fault;
    for (auto& ch : fault)
      if (ch == ',' || ch == '\n' || ch == '"') ch = ';';
    cells.push_back(fault);
    index.row(cells);
  }
  index.close();
  files.push_back(dir / "runs.csv");
  return files;
}

/// Reads runs back; RMSE is recomputed from the per-tick logs.
inline std::vector<TrackResult> read_runs(const std::filesystem::path& dir, std::vector<std::string>* joints_out) {
  const auto index = read(dir / "runs.csv");
  const auto c_ctrl = index.col("controller"), c_seed = index.col("seed"), c_valid = index.col("valid"),
             c_file = index.col("file"), c_fault = index.col("fault");
  std::vector<TrackResult> runs;
  std::vector<std::string> joints;
  for (std::size_t r = 0; r < index.rows.size(); ++r) {
    TrackResult t;
    t.controller = parse_controller(index.rows[r][c_ctrl]);
    t.seed = std::stoull(index.rows[r][c_seed]);
    t.valid = index.rows[r][c_valid] == "1";
    t.fault = index.rows[r][c_fault];
    std::vector<std::string> j;
    t.rows = read_samples(dir / index.rows[r][c_file], &j);
    if (joints.empty()) joints = j;
    else if (j != joints) throw CsvError(index.file, r + 2, "run joints differ from earlier runs");
    t.rmse = tracking_rmse(t.rows, j.size());
    runs.push_back(std::move(t));
  }
  if (runs.empty()) throw CsvError(index.file, 1, "no runs listed");
  if (joints_out) *joints_out = joints;
  return runs;
}

}  // namespace pneumo::csv
