#include <doctest.h>

#include <cmath>

#include "divnorm/diffnet.hpp"
#include "divnorm/errors.hpp"
#include "divnorm/numerics.hpp"
#include "support.hpp"

using namespace divnorm;
using namespace divnorm::test;

namespace {

double rel_err(double a, double b) {
  return std::fabs(a - b) / std::max({1.0, std::fabs(a), std::fabs(b)});
}

}  // namespace

TEST_CASE("linear: identity weights pass input through") {
  SeededRng rng(1);
  Linear layer("l", 3, 3, rng);
  layer.weight.value = Matrix::identity(3);
  layer.bias.value.fill(0.0);
  const Matrix x = random_matrix(5, 3, rng);
  CHECK(layer.forward(x).max_abs_diff(x) == 0.0);
}

TEST_CASE("linear: zero input broadcasts the bias") {
  SeededRng rng(2);
  Linear layer("l", 4, 2, rng);
  layer.bias.value(0, 0) = 1.5;
  layer.bias.value(0, 1) = -2.0;
  const Matrix y = layer.forward(Matrix(3, 4));
  for (int i = 0; i < 3; ++i) {
    CHECK(y(i, 0) == 1.5);
    CHECK(y(i, 1) == -2.0);
  }
}

TEST_CASE("linear: analytic gradients match finite differences") {
  SeededRng rng(3);
  Linear layer("l", 3, 2, rng);
  const Matrix x = random_matrix(4, 3, rng);
  const Matrix c = random_matrix(4, 2, rng);

  layer.weight.zero_grad();
  layer.bias.zero_grad();
  layer.forward(x);
  const Matrix grad_x = layer.backward(c);

  const Matrix w0 = layer.weight.value;
  auto f_w = [&](const std::vector<double>& flat) {
    Linear probe = layer;
    std::copy(flat.begin(), flat.end(), probe.weight.value.data());
    const Matrix y = probe.forward(x);
    double s = 0.0;
    for (size_t i = 0; i < y.size(); ++i) s += y.data()[i] * c.data()[i];
    return s;
  };
  std::vector<double> flat(w0.data(), w0.data() + w0.size());
  const std::vector<double> num = finite_diff_gradient(f_w, flat);
  for (size_t i = 0; i < num.size(); ++i) {
    CHECK(rel_err(layer.weight.grad.data()[i], num[i]) < 1e-6);
  }

  auto f_x = [&](const std::vector<double>& flat_x) {
    Matrix xx = x;
    std::copy(flat_x.begin(), flat_x.end(), xx.data());
    Linear probe = layer;
    const Matrix y = probe.forward(xx);
    double s = 0.0;
    for (size_t i = 0; i < y.size(); ++i) s += y.data()[i] * c.data()[i];
    return s;
  };
  std::vector<double> flat_x(x.data(), x.data() + x.size());
  const std::vector<double> num_x = finite_diff_gradient(f_x, flat_x);
  for (size_t i = 0; i < num_x.size(); ++i) CHECK(rel_err(grad_x.data()[i], num_x[i]) < 1e-6);
}

TEST_CASE("linear init stays inside the glorot bound") {
  SeededRng rng(4);
  Linear layer("l", 10, 6, rng);
  const double limit = std::sqrt(6.0 / 16.0);
  CHECK(layer.weight.value.max_abs() <= limit);
  CHECK(layer.bias.value.max_abs() == 0.0);
}

TEST_CASE("sigmoid: midpoint and saturation stay inside the open interval") {
  Matrix x(1, 3);
  x(0, 0) = 0.0;
  x(0, 1) = 40.0;
  x(0, 2) = -40.0;
  const Matrix y = sigmoid(x);
  CHECK(y(0, 0) == 0.5);
  CHECK(y(0, 1) < 1.0);
  CHECK(y(0, 1) >= 1.0 - 1e-15);
  CHECK(y(0, 2) > 0.0);
  CHECK(y(0, 2) < 1e-15);

  Matrix extreme(1, 2);
  extreme(0, 0) = 1000.0;
  extreme(0, 1) = -1000.0;
  const Matrix ye = sigmoid(extreme);
  CHECK(ye(0, 0) < 1.0);
  CHECK(ye(0, 1) > 0.0);
}

TEST_CASE("sigmoid backward matches finite differences") {
  SeededRng rng(5);
  const Matrix x = random_matrix(3, 4, rng);
  const Matrix c = random_matrix(3, 4, rng);
  const Matrix grad = sigmoid_backward(sigmoid(x), c);
  auto f = [&](const std::vector<double>& flat) {
    Matrix xx = x;
    std::copy(flat.begin(), flat.end(), xx.data());
    const Matrix y = sigmoid(xx);
    double s = 0.0;
    for (size_t i = 0; i < y.size(); ++i) s += y.data()[i] * c.data()[i];
    return s;
  };
  std::vector<double> flat(x.data(), x.data() + x.size());
  const std::vector<double> num = finite_diff_gradient(f, flat);
  for (size_t i = 0; i < num.size(); ++i) CHECK(rel_err(grad.data()[i], num[i]) < 1e-6);
}

TEST_CASE("softmax cross entropy: uniform logits give ln C") {
  const int classes = 10;
  Matrix logits(3, classes, 0.7);
  SoftmaxCrossEntropy ce;
  const std::vector<double> losses = ce.forward(logits, {0, 5, 9});
  for (double l : losses) CHECK(l == doctest::Approx(std::log(10.0)).epsilon(1e-12));
}

TEST_CASE("softmax cross entropy: dominant correct logit saturates to ~0") {
  Matrix logits(1, 10);
  logits(0, 3) = 50.0;
  SoftmaxCrossEntropy ce;
  const std::vector<double> losses = ce.forward(logits, {3});
  CHECK(losses[0] >= 0.0);
  CHECK(losses[0] <= 1e-20);
}

TEST_CASE("softmax cross entropy is translation invariant") {
  SeededRng rng(6);
  Matrix logits = random_matrix(4, 7, rng);
  std::vector<int> labels = {0, 3, 6, 2};
  SoftmaxCrossEntropy ce;
  const std::vector<double> base = ce.forward(logits, labels);
  Matrix shifted = logits;
  for (int i = 0; i < shifted.rows(); ++i)
    for (int j = 0; j < shifted.cols(); ++j) shifted(i, j) += 123.456;
  const std::vector<double> moved = ce.forward(shifted, labels);
  for (size_t i = 0; i < base.size(); ++i) CHECK(std::fabs(base[i] - moved[i]) < 1e-12);
}

TEST_CASE("softmax cross entropy backward matches finite differences") {
  SeededRng rng(7);
  Matrix logits = random_matrix(5, 4, rng);
  std::vector<int> labels(5);
  for (int& l : labels) l = rng.below(4);
  std::vector<double> weights(5);
  for (double& w : weights) w = rng.uniform(0.2, 1.5);

  SoftmaxCrossEntropy ce;
  ce.forward(logits, labels);
  const Matrix grad = ce.backward(weights);
  auto f = [&](const std::vector<double>& flat) {
    Matrix ll = logits;
    std::copy(flat.begin(), flat.end(), ll.data());
    SoftmaxCrossEntropy probe;
    const std::vector<double> losses = probe.forward(ll, labels);
    double s = 0.0;
    for (size_t i = 0; i < losses.size(); ++i) s += weights[i] * losses[i];
    return s;
  };
  std::vector<double> flat(logits.data(), logits.data() + logits.size());
  const std::vector<double> num = finite_diff_gradient(f, flat);
  for (size_t i = 0; i < num.size(); ++i) CHECK(rel_err(grad.data()[i], num[i]) < 1e-6);
}

TEST_CASE("softmax cross entropy: mean-loss backward is (softmax - onehot)/n") {
  SeededRng rng(8);
  Matrix logits = random_matrix(3, 4, rng);
  std::vector<int> labels = {1, 0, 3};
  SoftmaxCrossEntropy ce;
  ce.forward(logits, labels);
  const Matrix grad = ce.backward(std::vector<double>(3, 1.0 / 3));
  double col_sum = 0.0;
  for (int j = 0; j < 4; ++j) col_sum += grad(0, j);
  CHECK(std::fabs(col_sum) < 1e-15);  // softmax rows sum to 1, onehot too
}

TEST_CASE("softmax cross entropy rejects bad labels") {
  Matrix logits(2, 3);
  SoftmaxCrossEntropy ce;
  CHECK_THROWS_AS(ce.forward(logits, {0, 3}), ContractViolation);
  CHECK_THROWS_AS(ce.forward(logits, {-1, 0}), ContractViolation);
}

TEST_CASE("global average pool") {
  SeededRng rng(9);
  const Matrix x = random_matrix(4, 6, rng);
  CHECK(global_avg_pool(x, 1).max_abs_diff(x) == 0.0);  // s=1 is the identity

  Matrix cmap(2, 6);  // 2 channels x 3 positions, constant per channel
  for (int i = 0; i < 2; ++i)
    for (int c = 0; c < 2; ++c)
      for (int s = 0; s < 3; ++s) cmap(i, c * 3 + s) = 10.0 * c + i;
  const Matrix pooled = global_avg_pool(cmap, 3);
  for (int i = 0; i < 2; ++i)
    for (int c = 0; c < 2; ++c) CHECK(pooled(i, c) == doctest::Approx(10.0 * c + i));

  // random map vs independent mean
  const Matrix xr = random_matrix(2, 12, rng);
  const Matrix p = global_avg_pool(xr, 4);
  for (int i = 0; i < 2; ++i) {
    for (int c = 0; c < 3; ++c) {
      double mean = 0.0;
      for (int s = 0; s < 4; ++s) mean += xr(i, c * 4 + s);
      mean /= 4.0;
      CHECK(std::fabs(p(i, c) - mean) < 1e-15);
    }
  }
  CHECK_THROWS_AS(global_avg_pool(xr, 0), ContractViolation);
  CHECK_THROWS_AS(global_avg_pool(xr, 5), ContractViolation);
}

TEST_CASE("two-layer composition gradient matches finite differences") {
  SeededRng rng(10);
  Linear l1("l1", 4, 3, rng);
  Linear l2("l2", 3, 2, rng);
  const Matrix x = random_matrix(5, 4, rng);
  std::vector<int> labels(5);
  for (int& l : labels) l = rng.below(2);

  l1.weight.zero_grad();
  l1.bias.zero_grad();
  l2.weight.zero_grad();
  l2.bias.zero_grad();
  SoftmaxCrossEntropy ce;
  ce.forward(l2.forward(sigmoid(l1.forward(x))), labels);
  const Matrix grad_logits = ce.backward(std::vector<double>(5, 0.2));
  const Matrix grad_hidden = l2.backward(grad_logits);
  Matrix y1 = sigmoid(l1.forward(x));  // recompute activations for the backward
  l1.weight.zero_grad();
  l1.bias.zero_grad();
  l1.forward(x);
  l1.backward(sigmoid_backward(y1, grad_hidden));

  std::vector<Matrix*> tensors = {&l1.weight.value, &l1.bias.value, &l2.weight.value,
                                  &l2.bias.value};
  std::vector<Matrix*> grads = {&l1.weight.grad, &l1.bias.grad, &l2.weight.grad,
                                &l2.bias.grad};
  std::vector<double> flat;
  for (Matrix* t : tensors) flat.insert(flat.end(), t->data(), t->data() + t->size());
  std::vector<Matrix> saved;
  for (Matrix* t : tensors) saved.push_back(*t);

  auto f = [&](const std::vector<double>& v) {
    size_t pos = 0;
    for (Matrix* t : tensors) {
      std::copy(v.begin() + pos, v.begin() + pos + t->size(), t->data());
      pos += t->size();
    }
    SoftmaxCrossEntropy probe;
    Linear p1 = l1, p2 = l2;
    const std::vector<double> losses = probe.forward(p2.forward(sigmoid(p1.forward(x))), labels);
    double s = 0.0;
    for (double l : losses) s += 0.2 * l;
    for (size_t i = 0; i < tensors.size(); ++i) *tensors[i] = saved[i];
    return s;
  };
  const std::vector<double> num = finite_diff_gradient(f, flat);
  size_t pos = 0;
  for (Matrix* g : grads) {
    for (size_t i = 0; i < g->size(); ++i) {
      CHECK(rel_err(g->data()[i], num[pos + i]) < 1e-5);
    }
    pos += g->size();
  }
}
