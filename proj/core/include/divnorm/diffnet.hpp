#pragma once

#include <string>
#include <vector>

#include "divnorm/matrix.hpp"
#include "divnorm/rng.hpp"

namespace divnorm {

// A named trainable tensor. Gradients accumulate across backward calls and
// are zeroed explicitly at the start of each optimization step.
struct ParamTensor {
  std::string name;
  Matrix value;
  Matrix grad;

  ParamTensor() = default;
  ParamTensor(std::string n, Matrix v) : name(std::move(n)), value(std::move(v)) {
    grad = Matrix(value.rows(), value.cols());
  }
  void zero_grad() { grad.fill(0.0); }
};

// Fully-connected layer, y = x W^T + b. The forward pass caches its input;
// each backward() consumes the cache of exactly one preceding forward().
class Linear {
 public:
  // Weights drawn uniform in +-sqrt(6/(fan_in+fan_out)), biases zero.
  Linear(const std::string& name, int d_in, int d_out, SeededRng& rng);

  Matrix forward(const Matrix& x);
  // Accumulates into weight.grad / bias.grad, returns grad wrt x.
  Matrix backward(const Matrix& grad_out);

  int d_in() const { return weight.value.cols(); }
  int d_out() const { return weight.value.rows(); }

  ParamTensor weight;  // d_out x d_in
  ParamTensor bias;    // 1 x d_out

 private:
  Matrix cached_input_;
};

// Elementwise logistic. Outputs are nudged off the closed bounds so that
// 0 < y < 1 holds as a strict comparison even in saturation.
Matrix sigmoid(const Matrix& x);
// grad_x given y = sigmoid(x) and upstream grad.
Matrix sigmoid_backward(const Matrix& y, const Matrix& grad_out);

// Per-sample cross-entropy over logits, computed with max-subtraction and
// log1p so saturated losses stay finite and nonnegative. Losses are exposed
// per sample because the re-weighting scheme consumes individual values.
class SoftmaxCrossEntropy {
 public:
  std::vector<double> forward(const Matrix& logits, const std::vector<int>& labels);
  // grad wrt logits; row i is grad_per_sample_loss[i] * (softmax_i - onehot_i).
  // For the plain mean loss pass 1/n for every sample.
  Matrix backward(const std::vector<double>& grad_per_sample_loss) const;

 private:
  Matrix probs_;
  std::vector<int> labels_;
};

// Mean over the trailing spatial axis of an n x (d*spatial) activation laid
// out channel-major per row: entry (i, c*spatial + s). spatial == 1 is the
// identity map on channels, which is the desk-scale default since the
// backbone emits vectors.
Matrix global_avg_pool(const Matrix& x, int spatial);
Matrix global_avg_pool_backward(const Matrix& grad_out, int spatial);

}  // namespace divnorm
