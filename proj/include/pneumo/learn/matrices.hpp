#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "pneumo/datagen.hpp"

namespace pneumo::learn {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

inline constexpr int kDefaultTau = 9;

inline std::size_t input_dim(std::size_t n_joints) { return 5 * n_joints; }
inline std::size_t output_dim(std::size_t n_joints) { return 2 * n_joints; }

/// Lookahead training pairs. Row k of X is [q(k) v(k) p_a(k) p_b(k) q(k+tau)],
/// row k of Y is [u_a(k) u_b(k)]; rows never straddle two trials.
struct TrainMatrices {
  Matrix X;
  Matrix Y;
  int tau = kDefaultTau;
  std::size_t n_joints = 0;
  std::vector<std::size_t> trial_starts;  // first row of each contributing trial
  std::vector<int> skipped_trials;        // trials shorter than tau + 1 (or invalid)
};

/// Writes one model input row from the current sensor values and future target.
inline void fill_input(Eigen::Ref<RowVector> row, const JointVector& q, const JointVector& v, const JointVector& p_a,
                       const JointVector& p_b, const JointVector& q_future) {
  const auto n = q.size();
  if (v.size() != n || p_a.size() != n || p_b.size() != n || q_future.size() != n ||
      static_cast<std::size_t>(row.size()) != 5 * n)
    throw std::invalid_argument("fill_input: arity mismatch");
  for (std::size_t i = 0; i < n; ++i) {
    row(static_cast<Eigen::Index>(i)) = q[i];
    row(static_cast<Eigen::Index>(n + i)) = v[i];
    row(static_cast<Eigen::Index>(2 * n + i)) = p_a[i];
    row(static_cast<Eigen::Index>(3 * n + i)) = p_b[i];
    row(static_cast<Eigen::Index>(4 * n + i)) = q_future[i];
  }
}

inline TrainMatrices build_matrices(const Dataset& ds, int tau = kDefaultTau) {
  if (tau < 0) throw std::invalid_argument("tau must be >= 0");
  const std::size_t n = ds.n_joints();
  if (n == 0) throw std::invalid_argument("dataset has no joints");
  const auto ut = static_cast<std::size_t>(tau);

  TrainMatrices m;
  m.tau = tau;
  m.n_joints = n;
  std::size_t rows = 0;
  for (const auto& t : ds.trials)
    if (t.valid && t.rows.size() > ut) rows += t.rows.size() - ut;
  m.X.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(input_dim(n)));
  m.Y.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(output_dim(n)));

  Eigen::Index r = 0;
  for (const auto& t : ds.trials) {
    if (!t.valid || t.rows.size() <= ut) {
      m.skipped_trials.push_back(t.trial);
      continue;
    }
    m.trial_starts.push_back(static_cast<std::size_t>(r));
    for (std::size_t k = 0; k + ut < t.rows.size(); ++k, ++r) {
      const auto& s = t.rows[k];
      fill_input(m.X.row(r), s.q, s.v, s.p_a, s.p_b, t.rows[k + ut].q);
      for (std::size_t i = 0; i < n; ++i) {
        m.Y(r, static_cast<Eigen::Index>(i)) = s.u_a[i];
        m.Y(r, static_cast<Eigen::Index>(n + i)) = s.u_b[i];
      }
    }
  }
  return m;
}

/// Column names of X and Y for `names` joints, used in diagnostics.
inline std::vector<std::string> input_columns(const std::vector<std::string>& names) {
  std::vector<std::string> out;
  for (const char* p : {"q", "v", "p_a", "p_b", "q_future"})
    for (const auto& n : names) out.push_back(std::string(p) + "_" + n);
  return out;
}

inline std::vector<std::string> output_columns(const std::vector<std::string>& names) {
  std::vector<std::string> out;
  for (const char* p : {"u_a", "u_b"})
    for (const auto& n : names) out.push_back(std::string(p) + "_" + n);
  return out;
}

}  // namespace pneumo::learn
