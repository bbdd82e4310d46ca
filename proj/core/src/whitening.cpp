#include "divnorm/whitening.hpp"

#include <cmath>

#include "divnorm/errors.hpp"
#include "divnorm/numerics.hpp"

namespace divnorm {

WhiteningState WhiteningState::create(int dim) {
  WhiteningState s;
  s.running_mean = Matrix(1, dim);
  s.running_cov = Matrix::identity(dim);
  return s;
}

namespace {

// Forward recurrence, keeping every P_k for the backward pass.
Matrix newton_schulz_unrolled(const Matrix& sigma, int iterations, WhitenContext& ctx) {
  const double tr = sigma.trace();
  if (!(tr > 0.0)) throw InvalidInputError("whiten: covariance trace <= 0");
  const int d = sigma.rows();
  ctx.trace = tr;
  ctx.s_n = sigma;
  ctx.s_n *= 1.0 / tr;
  ctx.p_k.clear();
  ctx.p_k.reserve(iterations + 1);
  Matrix p = Matrix::identity(d);
  ctx.p_k.push_back(p);
  for (int k = 0; k < iterations; ++k) {
    const Matrix p2 = p * p;
    const Matrix p3s = p2 * (p * ctx.s_n);
    Matrix next = p;
    next *= 1.5;
    next.add_scaled(p3s, -0.5);
    p = std::move(next);
    ctx.p_k.push_back(p);
  }
  p *= 1.0 / std::sqrt(tr);
  return p;
}

}  // namespace

Matrix whiten(const Matrix& x, WhiteningState& state, WhitenContext* ctx, bool update_running) {
  const int d = state.running_mean.cols();
  if (x.cols() != d) {
    throw ContractViolation("whiten: input has " + std::to_string(x.cols()) +
                            " columns, state expects " + std::to_string(d));
  }

  if (state.mode == WhitenMode::eval) {
    if (!state.initialized) {
      throw UninitializedStatsError("whiten: eval mode before any train-mode batch");
    }
    if (!state.eval_cache_valid) {
      state.eval_w = exact_inv_sqrt(state.running_cov);
      state.eval_cache_valid = true;
    }
    Matrix centered = x;
    for (int i = 0; i < centered.rows(); ++i)
      for (int j = 0; j < d; ++j) centered(i, j) -= state.running_mean(0, j);
    return matmul_bt(centered, state.eval_w);
  }

  // Train mode.
  if (x.rows() < 2) {
    throw DegenerateBatchError("whiten: train mode needs n >= 2, got " +
                               std::to_string(x.rows()));
  }
  const CovarianceResult stats = covariance(x, state.eps);

  WhitenContext local;
  WhitenContext& c = ctx ? *ctx : local;
  c.method = state.method;
  c.sigma = stats.cov;
  c.centered = x;
  for (int i = 0; i < x.rows(); ++i)
    for (int j = 0; j < d; ++j) c.centered(i, j) -= stats.mean(0, j);

  if (state.method == WhitenMethod::exact) {
    c.w = exact_inv_sqrt(stats.cov);
  } else {
    c.w = newton_schulz_unrolled(stats.cov, state.iterations, c);
  }

  if (update_running) {
    state.running_mean *= 1.0 - state.momentum;
    state.running_mean.add_scaled(stats.mean, state.momentum);
    state.running_cov *= 1.0 - state.momentum;
    state.running_cov.add_scaled(stats.cov, state.momentum);
    state.initialized = true;
    state.invalidate_eval_cache();
  }

  return matmul_bt(c.centered, c.w);
}

Matrix WhitenContext::backward(const Matrix& grad_psi) const {
  if (centered.empty()) throw ContractViolation("WhitenContext: backward without forward");
  if (!grad_psi.same_shape(centered)) {
    throw ContractViolation("WhitenContext: grad_psi shape mismatch");
  }

  // psi = Xc W^T:  dXc = G W,  dW = G^T Xc.
  Matrix grad_centered = grad_psi * w;

  if (method == WhitenMethod::exact) {
    // W and mu are constants of the batch here.
    return grad_centered;
  }

  const int n = centered.rows();
  const int d = centered.cols();
  Matrix grad_w = matmul_at(grad_psi, centered);

  // W = P_T / sqrt(tr)
  const double inv_sqrt_tr = 1.0 / std::sqrt(trace);
  Matrix grad_p = grad_w;
  grad_p *= inv_sqrt_tr;
  double grad_tr = 0.0;
  {
    const Matrix& p_t = p_k.back();
    double dot = 0.0;
    for (size_t i = 0; i < grad_w.size(); ++i) dot += grad_w.data()[i] * p_t.data()[i];
    grad_tr += -0.5 * std::pow(trace, -1.5) * dot;
  }

  // Reverse through P_{k+1} = (3 P_k - P_k^3 S_n) / 2.
  Matrix grad_s(d, d);
  for (int k = static_cast<int>(p_k.size()) - 2; k >= 0; --k) {
    const Matrix& p = p_k[k];
    const Matrix p2 = p * p;
    const Matrix ps = p * s_n;
    const Matrix p2s = p2 * s_n;
    // d(P^3 S)/dP applied to G: G (P^2 S)^T + P^T G (P S)^T + (P^2)^T G S^T
    Matrix term = matmul_bt(grad_p, p2s);
    term += matmul_at(p, matmul_bt(grad_p, ps));
    term += matmul_at(p2, matmul_bt(grad_p, s_n));
    grad_s.add_scaled(matmul_at(p2 * p, grad_p), -0.5);
    Matrix next = grad_p;
    next *= 1.5;
    next.add_scaled(term, -0.5);
    grad_p = std::move(next);
  }

  // S_n = Sigma / tr
  Matrix grad_sigma = grad_s;
  grad_sigma *= 1.0 / trace;
  {
    double dot = 0.0;
    for (size_t i = 0; i < grad_s.size(); ++i) dot += grad_s.data()[i] * sigma.data()[i];
    grad_tr += -dot / (trace * trace);
  }
  for (int i = 0; i < d; ++i) grad_sigma(i, i) += grad_tr;

  // Sigma = (1/n) Xc^T Xc + eps I:  dXc += (1/n) Xc (dSigma + dSigma^T)
  Matrix sym = grad_sigma;
  sym += grad_sigma.transposed();
  grad_centered.add_scaled(centered * sym, 1.0 / n);

  // Xc = X - 1 mu^T, mu = (1/n) X^T 1:  dX = dXc - colmean(dXc)
  Matrix col_mean = grad_centered.row_mean();
  Matrix grad_x = grad_centered;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) grad_x(i, j) -= col_mean(0, j);
  return grad_x;
}

}  // namespace divnorm
