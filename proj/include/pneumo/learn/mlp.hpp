#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "pneumo/learn/matrices.hpp"
#include "pneumo/learn/standardizer.hpp"

namespace pneumo::learn {

class TrainingError : public std::runtime_error {
 public:
  TrainingError(int epoch, long batch, const std::string& what)
      : std::runtime_error("epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch) + ": " + what),
        epoch_(epoch),
        batch_(batch) {}
  int epoch() const { return epoch_; }
  long batch() const { return batch_; }

 private:
  int epoch_;
  long batch_;
};

/// One-hidden-layer perceptron on standardized data:
///   out = tanh(z W1 + b1) W2 + b2   (z is a row vector).
struct Mlp {
  Matrix W1;     // in x hidden
  RowVector b1;  // hidden
  Matrix W2;     // hidden x out
  RowVector b2;  // out

  Eigen::Index in() const { return W1.rows(); }
  Eigen::Index hidden() const { return W1.cols(); }
  Eigen::Index out() const { return W2.cols(); }

  static Mlp zeros(Eigen::Index in, Eigen::Index hidden, Eigen::Index out) {
    return {Matrix::Zero(in, hidden), RowVector::Zero(hidden), Matrix::Zero(hidden, out), RowVector::Zero(out)};
  }

  /// Glorot-uniform weights, zero biases.
  static Mlp glorot(Eigen::Index in, Eigen::Index hidden, Eigen::Index out, std::uint64_t seed) {
    Mlp m = zeros(in, hidden, out);
    std::mt19937_64 rng(seed);
    auto fill = [&rng](Matrix& W) {
      const double a = std::sqrt(6.0 / static_cast<double>(W.rows() + W.cols()));
      std::uniform_real_distribution<double> d(-a, a);
      for (Eigen::Index r = 0; r < W.rows(); ++r)
        for (Eigen::Index c = 0; c < W.cols(); ++c) W(r, c) = d(rng);
    };
    fill(m.W1);
    fill(m.W2);
    return m;
  }

  Matrix hidden_activations(const Matrix& Z) const {
    Matrix H = Z * W1;
    H.rowwise() += b1;
    return H.array().tanh().matrix();
  }

  Matrix forward(const Matrix& Z) const {
    Matrix O = hidden_activations(Z) * W2;
    O.rowwise() += b2;
    return O;
  }

  std::size_t parameter_count() const {
    return static_cast<std::size_t>(W1.size() + b1.size() + W2.size() + b2.size());
  }

  /// Flat views in the order W1, b1, W2, b2 (each row-major).
  double& parameter(std::size_t i) {
    const auto n1 = static_cast<std::size_t>(W1.size()), n2 = static_cast<std::size_t>(b1.size()),
               n3 = static_cast<std::size_t>(W2.size());
    if (i < n1) return W1.data()[i];
    i -= n1;
    if (i < n2) return b1.data()[i];
    i -= n2;
    if (i < n3) return W2.data()[i];
    i -= n3;
    if (i < static_cast<std::size_t>(b2.size())) return b2.data()[i];
    throw std::out_of_range("parameter index");
  }
};

inline double mse(const Matrix& A, const Matrix& B) {
  if (A.rows() != B.rows() || A.cols() != B.cols()) throw std::invalid_argument("mse: shape mismatch");
  if (A.size() == 0) throw std::invalid_argument("mse: empty");
  return (A - B).squaredNorm() / static_cast<double>(A.size());
}

struct Gradients {
  Matrix W1;
  RowVector b1;
  Matrix W2;
  RowVector b2;
};

/// Loss = mean squared error over all output elements plus
/// (weight_decay / 2) * (|W1|^2 + |W2|^2). Fills `g` with its gradient.
inline double loss_and_gradient(const Mlp& net, const Matrix& Z, const Matrix& T, double weight_decay,
                                Gradients& g) {
  const Matrix H = net.hidden_activations(Z);
  Matrix O = H * net.W2;
  O.rowwise() += net.b2;
  const Matrix D = O - T;
  const double scale = 2.0 / static_cast<double>(D.size());
  const Matrix dO = scale * D;
  g.W2.noalias() = H.transpose() * dO;
  g.b2 = dO.colwise().sum();
  const Matrix dH = ((dO * net.W2.transpose()).array() * (1.0 - H.array().square())).matrix();
  g.W1.noalias() = Z.transpose() * dH;
  g.b1 = dH.colwise().sum();
  double loss = D.squaredNorm() / static_cast<double>(D.size());
  if (weight_decay > 0.0) {
    g.W1 += weight_decay * net.W1;
    g.W2 += weight_decay * net.W2;
    loss += 0.5 * weight_decay * (net.W1.squaredNorm() + net.W2.squaredNorm());
  }
  return loss;
}

inline double loss_only(const Mlp& net, const Matrix& Z, const Matrix& T, double weight_decay = 0.0) {
  double loss = mse(net.forward(Z), T);
  if (weight_decay > 0.0) loss += 0.5 * weight_decay * (net.W1.squaredNorm() + net.W2.squaredNorm());
  return loss;
}

struct EpochLoss {
  int epoch = 0;
  double train = 0.0;
  double val = 0.0;  // NaN without a validation split
};

struct TrainHyper {
  int epochs = 200;
  int batch = 256;
  double learning_rate = 1e-3;
  double weight_decay = 0.0;
  double val_split = 0.1;
  int hidden = 200;
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::function<void(const EpochLoss&, const Mlp&)> on_epoch;  // optional progress hook

  void validate() const {
    if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
    if (batch < 1) throw std::invalid_argument("batch must be >= 1");
    if (!(learning_rate > 0)) throw std::invalid_argument("learning rate must be > 0");
    if (weight_decay < 0) throw std::invalid_argument("weight decay must be >= 0");
    if (!(val_split >= 0 && val_split < 1)) throw std::invalid_argument("val_split must be in [0, 1)");
    if (hidden < 1) throw std::invalid_argument("hidden must be >= 1");
  }
};


/// Inverse-dynamics model: raw sensor/target row in, raw valve commands out.
struct InverseModel {
  std::size_t n_joints = 0;
  int tau = kDefaultTau;
  Standardizer scale;
  Mlp net;

  RowVector predict(const RowVector& x) const {
    if (static_cast<std::size_t>(x.size()) != input_dim(n_joints))
      throw std::invalid_argument("predict: expected " + std::to_string(input_dim(n_joints)) + " inputs, got " +
                                  std::to_string(x.size()));
    const Matrix z = scale.x.apply(Matrix(x));
    return scale.y.invert(net.forward(z)).row(0);
  }

  Matrix predict(const Matrix& X) const { return scale.y.invert(net.forward(scale.x.apply(X))); }
};

struct TrainResult {
  InverseModel model;
  std::vector<EpochLoss> history;
  int best_epoch = 0;
  double best_loss = 0.0;  // validation loss of the kept model (training loss without a split)
  std::size_t train_rows = 0;
  std::size_t val_rows = 0;
};

namespace detail {

struct AdamState {
  Gradients m, v;
  long t = 0;
  explicit AdamState(const Mlp& n)
      : m{Matrix::Zero(n.W1.rows(), n.W1.cols()), RowVector::Zero(n.b1.size()),
          Matrix::Zero(n.W2.rows(), n.W2.cols()), RowVector::Zero(n.b2.size())},
        v(m) {}
};

template <class P, class G>
void adam_update(P& p, const G& g, P& m, P& v, const TrainHyper& h, double c1, double c2) {
  m = h.beta1 * m + (1.0 - h.beta1) * g;
  v = (h.beta2 * v.array() + (1.0 - h.beta2) * g.array().square()).matrix();
  p.array() -= h.learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + h.epsilon);
}

inline Matrix gather(const Matrix& A, const std::vector<Eigen::Index>& idx, std::size_t from, std::size_t to) {
  Matrix out(static_cast<Eigen::Index>(to - from), A.cols());
  for (std::size_t i = from; i < to; ++i) out.row(static_cast<Eigen::Index>(i - from)) = A.row(idx[i]);
  return out;
}

}  // namespace detail

/// Minibatch Adam on standardized data, keeping the parameters with the best
/// validation loss. The standardizer is fitted on the training rows only.
inline TrainResult train(const TrainMatrices& data, const TrainHyper& h) {
  h.validate();
  const auto N = static_cast<std::size_t>(data.X.rows());
  if (N < 2 || data.Y.rows() != data.X.rows()) throw std::invalid_argument("train: need >= 2 matching rows");

  std::mt19937_64 rng(h.seed);
  std::vector<Eigen::Index> perm(N);
  std::iota(perm.begin(), perm.end(), Eigen::Index{0});
  std::shuffle(perm.begin(), perm.end(), rng);
  auto n_val = static_cast<std::size_t>(std::floor(h.val_split * static_cast<double>(N)));
  if (n_val >= N - 1) n_val = 0;
  std::vector<Eigen::Index> val_idx(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<Eigen::Index> tr_idx(perm.begin() + static_cast<std::ptrdiff_t>(n_val), perm.end());
  std::sort(val_idx.begin(), val_idx.end());
  std::sort(tr_idx.begin(), tr_idx.end());

  const Matrix Xtr = detail::gather(data.X, tr_idx, 0, tr_idx.size());
  const Matrix Ytr = detail::gather(data.Y, tr_idx, 0, tr_idx.size());
  TrainResult res;
  res.train_rows = tr_idx.size();
  res.val_rows = val_idx.size();
  res.model.n_joints = data.n_joints;
  res.model.tau = data.tau;
  res.model.scale = Standardizer::fit(Xtr, Ytr);
  const Matrix Ztr = res.model.scale.x.apply(Xtr);
  const Matrix Ttr = res.model.scale.y.apply(Ytr);
  Matrix Zval, Tval;
  if (n_val > 0) {
    Zval = res.model.scale.x.apply(detail::gather(data.X, val_idx, 0, val_idx.size()));
    Tval = res.model.scale.y.apply(detail::gather(data.Y, val_idx, 0, val_idx.size()));
  }

  Mlp net = Mlp::glorot(Ztr.cols(), h.hidden, Ttr.cols(), rng());
  detail::AdamState adam(net);
  Gradients g;
  Mlp best = net;
  double best_loss = std::numeric_limits<double>::infinity();
  std::vector<Eigen::Index> order(tr_idx.size());
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  const auto B = static_cast<std::size_t>(h.batch);

  for (int epoch = 1; epoch <= h.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    long batch_no = 0;
    for (std::size_t from = 0; from < order.size(); from += B, ++batch_no) {
      const auto to = std::min(order.size(), from + B);
      const Matrix Zb = detail::gather(Ztr, order, from, to);
      const Matrix Tb = detail::gather(Ttr, order, from, to);
      const double loss = loss_and_gradient(net, Zb, Tb, h.weight_decay, g);
      if (!std::isfinite(loss)) throw TrainingError(epoch, batch_no, "non-finite loss");
      ++adam.t;
      const double c1 = 1.0 - std::pow(h.beta1, static_cast<double>(adam.t));
      const double c2 = 1.0 - std::pow(h.beta2, static_cast<double>(adam.t));
      detail::adam_update(net.W1, g.W1, adam.m.W1, adam.v.W1, h, c1, c2);
      detail::adam_update(net.b1, g.b1, adam.m.b1, adam.v.b1, h, c1, c2);
      detail::adam_update(net.W2, g.W2, adam.m.W2, adam.v.W2, h, c1, c2);
      detail::adam_update(net.b2, g.b2, adam.m.b2, adam.v.b2, h, c1, c2);
    }
    EpochLoss el{epoch, loss_only(net, Ztr, Ttr), std::numeric_limits<double>::quiet_NaN()};
    if (!std::isfinite(el.train)) throw TrainingError(epoch, batch_no, "non-finite loss");
    if (n_val > 0) el.val = loss_only(net, Zval, Tval);
    res.history.push_back(el);
    if (h.on_epoch) h.on_epoch(el, net);
    const double sel = n_val > 0 ? el.val : el.train;
    if (sel < best_loss) {
      best_loss = sel;
      best = net;
      res.best_epoch = epoch;
    }
  }
  res.model.net = std::move(best);
  res.best_loss = best_loss;
  return res;
}

}  // namespace pneumo::learn
