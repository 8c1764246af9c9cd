#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

#include "pneumo/learn/matrices.hpp"

namespace pneumo::learn {

/// Per-column affine scaling to zero mean and unit (population) variance.
struct ColumnScaler {
  RowVector mean;
  RowVector std;

  Eigen::Index cols() const { return mean.size(); }

  static ColumnScaler fit(const Matrix& A, const std::string& what = "column") {
    if (A.rows() < 2) throw std::invalid_argument("standardizer needs at least 2 rows");
    ColumnScaler s;
    s.mean = A.colwise().mean();
    s.std.resize(A.cols());
    for (Eigen::Index c = 0; c < A.cols(); ++c) {
      const double var = (A.col(c).array() - s.mean(c)).square().mean();
      const double sd = std::sqrt(var);
      if (!(sd > 1e-12 * std::max(1.0, std::abs(s.mean(c)))))
        throw std::invalid_argument("constant " + what + " " + std::to_string(c) + " cannot be standardized");
      s.std(c) = sd;
    }
    return s;
  }

  Matrix apply(const Matrix& A) const {
    check(A.cols());
    return ((A.rowwise() - mean).array().rowwise() / std.array()).matrix();
  }
  Matrix invert(const Matrix& Z) const {
    check(Z.cols());
    return ((Z.array().rowwise() * std.array()).rowwise() + mean.array()).matrix();
  }

 private:
  void check(Eigen::Index c) const {
    if (c != cols()) throw std::invalid_argument("standardizer column count mismatch");
  }
};

struct Standardizer {
  ColumnScaler x;
  ColumnScaler y;

  static Standardizer fit(const Matrix& X, const Matrix& Y) {
    return {ColumnScaler::fit(X, "input column"), ColumnScaler::fit(Y, "output column")};
  }
};

}  // namespace pneumo::learn
