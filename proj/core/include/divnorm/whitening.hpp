#pragma once

#include <vector>

#include "divnorm/matrix.hpp"

namespace divnorm {

enum class WhitenMethod { exact, newton_schulz };
enum class WhitenMode { train, eval };

// Running whitening statistics plus the knobs that control how the
// whitening matrix is built. Train-mode calls update the running stats
// with momentum; eval-mode calls whiten against the frozen stats.
struct WhiteningState {
  Matrix running_mean;  // 1 x d
  Matrix running_cov;   // d x d, kept SPD by the eps ridge mixed in per batch
  double momentum = 0.1;
  double eps = 1e-5;
  int iterations = 5;  // Newton-Schulz T
  WhitenMethod method = WhitenMethod::newton_schulz;
  WhitenMode mode = WhitenMode::train;
  bool initialized = false;  // set by the first train-mode call

  static WhiteningState create(int dim);

  // Eval-mode whitening matrix, rebuilt lazily from the running stats and
  // cached until the next training update.
  void invalidate_eval_cache() { eval_cache_valid = false; }
  bool eval_cache_valid = false;
  Matrix eval_w;
};

// Saved intermediates of one train-mode whitening forward; produces the
// gradient wrt the layer input.
//
// With method == newton_schulz the backward differentiates the whole
// unrolled computation: batch mean, batch covariance, trace normalization,
// every P_{k+1} = (3 P_k - P_k^3 S_n)/2 step, and the final 1/sqrt(tr)
// scale. With method == exact, W and mu are treated as constants of the
// batch (stop-gradient), so only psi = (X - mu) W^T is differentiated.
struct WhitenContext {
  Matrix backward(const Matrix& grad_psi) const;
  const Matrix& whitening_matrix() const { return w; }

  WhitenMethod method = WhitenMethod::newton_schulz;
  Matrix centered;          // n x d
  Matrix w;                 // d x d
  Matrix sigma;             // batch covariance incl. ridge
  Matrix s_n;               // sigma / trace
  std::vector<Matrix> p_k;  // P_0 .. P_T (newton_schulz only)
  double trace = 0.0;
};

// psi = W (x - mu) applied row-wise. Train mode draws mu, Sigma from the
// batch, builds W by state.method, and (optionally) folds the batch stats
// into the running ones. Eval mode reuses the frozen running stats; the
// eval W is always the exact symmetric root, since nothing differentiates
// through it. ctx may be null when no backward pass will follow.
Matrix whiten(const Matrix& x, WhiteningState& state, WhitenContext* ctx = nullptr,
              bool update_running = true);

}  // namespace divnorm
