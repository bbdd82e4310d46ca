#include "divnorm/diffnet.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "divnorm/errors.hpp"

namespace divnorm {

Linear::Linear(const std::string& name, int d_in, int d_out, SeededRng& rng)
    : weight(name + ".weight", Matrix(d_out, d_in)), bias(name + ".bias", Matrix(1, d_out)) {
  const double limit = std::sqrt(6.0 / (d_in + d_out));
  for (int i = 0; i < d_out; ++i)
    for (int j = 0; j < d_in; ++j) weight.value(i, j) = rng.uniform(-limit, limit);
}

Matrix Linear::forward(const Matrix& x) {
  if (x.cols() != d_in()) {
    throw ContractViolation("Linear(" + weight.name + "): input has " +
                            std::to_string(x.cols()) + " columns, expected " +
                            std::to_string(d_in()));
  }
  cached_input_ = x;
  Matrix y = matmul_bt(x, weight.value);
  for (int i = 0; i < y.rows(); ++i)
    for (int j = 0; j < y.cols(); ++j) y(i, j) += bias.value(0, j);
  return y;
}

Matrix Linear::backward(const Matrix& grad_out) {
  if (cached_input_.empty()) {
    throw ContractViolation("Linear(" + weight.name + "): backward without forward");
  }
  if (grad_out.rows() != cached_input_.rows() || grad_out.cols() != d_out()) {
    throw ContractViolation("Linear(" + weight.name + "): grad_out shape mismatch");
  }
  weight.grad += matmul_at(grad_out, cached_input_);
  for (int i = 0; i < grad_out.rows(); ++i)
    for (int j = 0; j < grad_out.cols(); ++j) bias.grad(0, j) += grad_out(i, j);
  return grad_out * weight.value;
}

Matrix sigmoid(const Matrix& x) {
  // Largest double below 1; the clamp keeps the open-interval contract.
  static const double kBelowOne = std::nextafter(1.0, 0.0);
  Matrix y = x;
  for (int i = 0; i < y.rows(); ++i) {
    for (int j = 0; j < y.cols(); ++j) {
      double v = 1.0 / (1.0 + std::exp(-y(i, j)));
      if (v >= 1.0) v = kBelowOne;
      if (v <= 0.0) v = std::numeric_limits<double>::denorm_min();
      y(i, j) = v;
    }
  }
  return y;
}

Matrix sigmoid_backward(const Matrix& y, const Matrix& grad_out) {
  if (!y.same_shape(grad_out)) throw ContractViolation("sigmoid_backward: shape mismatch");
  Matrix g = grad_out;
  for (int i = 0; i < g.rows(); ++i)
    for (int j = 0; j < g.cols(); ++j) g(i, j) *= y(i, j) * (1.0 - y(i, j));
  return g;
}

std::vector<double> SoftmaxCrossEntropy::forward(const Matrix& logits,
                                                 const std::vector<int>& labels) {
  const int n = logits.rows();
  const int c = logits.cols();
  if (static_cast<int>(labels.size()) != n) {
    throw ContractViolation("softmax_cross_entropy: got " + std::to_string(labels.size()) +
                            " labels for " + std::to_string(n) + " rows");
  }
  for (int label : labels) {
    if (label < 0 || label >= c) {
      throw ContractViolation("softmax_cross_entropy: label " + std::to_string(label) +
                              " outside [0, " + std::to_string(c) + ")");
    }
  }
  labels_ = labels;
  probs_ = Matrix(n, c);
  std::vector<double> losses(n);
  for (int i = 0; i < n; ++i) {
    double m = logits(i, 0);
    int argmax = 0;
    for (int j = 1; j < c; ++j) {
      if (logits(i, j) > m) {
        m = logits(i, j);
        argmax = j;
      }
    }
    // lse = m + log1p(sum_{j != argmax} e^{z_j - m}); log1p keeps tiny
    // losses representable instead of rounding the sum to 1.
    double rest = 0.0;
    for (int j = 0; j < c; ++j) {
      if (j != argmax) rest += std::exp(logits(i, j) - m);
    }
    const double lse = m + std::log1p(rest);
    losses[i] = lse - logits(i, labels[i]);
    const double denom = 1.0 + rest;
    for (int j = 0; j < c; ++j) probs_(i, j) = std::exp(logits(i, j) - m) / denom;
  }
  return losses;
}

Matrix SoftmaxCrossEntropy::backward(const std::vector<double>& grad_per_sample_loss) const {
  if (probs_.empty()) throw ContractViolation("softmax_cross_entropy: backward without forward");
  if (grad_per_sample_loss.size() != labels_.size()) {
    throw ContractViolation("softmax_cross_entropy: grad size mismatch");
  }
  Matrix grad = probs_;
  for (int i = 0; i < grad.rows(); ++i) {
    grad(i, labels_[i]) -= 1.0;
    for (int j = 0; j < grad.cols(); ++j) grad(i, j) *= grad_per_sample_loss[i];
  }
  return grad;
}

Matrix global_avg_pool(const Matrix& x, int spatial) {
  if (spatial < 1) throw ContractViolation("global_avg_pool: spatial must be >= 1");
  if (x.cols() % spatial != 0) {
    throw ContractViolation("global_avg_pool: columns not divisible by spatial size");
  }
  if (spatial == 1) return x;
  const int d = x.cols() / spatial;
  Matrix out(x.rows(), d);
  for (int i = 0; i < x.rows(); ++i) {
    for (int c = 0; c < d; ++c) {
      double s = 0.0;
      for (int k = 0; k < spatial; ++k) s += x(i, c * spatial + k);
      out(i, c) = s / spatial;
    }
  }
  return out;
}

Matrix global_avg_pool_backward(const Matrix& grad_out, int spatial) {
  if (spatial < 1) throw ContractViolation("global_avg_pool_backward: spatial must be >= 1");
  if (spatial == 1) return grad_out;
  Matrix grad(grad_out.rows(), grad_out.cols() * spatial);
  for (int i = 0; i < grad_out.rows(); ++i) {
    for (int c = 0; c < grad_out.cols(); ++c) {
      const double g = grad_out(i, c) / spatial;
      for (int k = 0; k < spatial; ++k) grad(i, c * spatial + k) = g;
    }
  }
  return grad;
}

}  // namespace divnorm
