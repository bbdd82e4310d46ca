#pragma once

#include <functional>
#include <vector>

#include "divnorm/matrix.hpp"

namespace divnorm {

struct CovarianceResult {
  Matrix mean;  // 1 x d column means
  Matrix cov;   // d x d, symmetric, 1/n convention, ridge added on the diagonal
};

// Two-pass batch statistics: mean first, then (1/n)(X-mu)^T(X-mu) + ridge*I.
// The 1/n convention matches batch-normalization practice; the ridge keeps
// degenerate batches whitenable. Throws DegenerateBatchError for n < 2 and
// InvalidInputError for non-finite entries or ridge < 0.
CovarianceResult covariance(const Matrix& x, double ridge = 1e-5);

struct SymmetricEigen {
  std::vector<double> values;  // ascending
  Matrix vectors;              // column k is the eigenvector for values[k]
};

// Cyclic Jacobi sweeps. Converges to off-diagonal Frobenius norm <= tol
// (capped at max_sweeps); accurate and dependency-free for the d <= 64
// matrices this project works with.
SymmetricEigen symmetric_eigen(const Matrix& a, double off_tol = 1e-12, int max_sweeps = 100);

// Symmetric inverse square root via eigendecomposition. Input must be
// symmetric positive definite; an eigenvalue <= 0 raises
// NotPositiveDefiniteError.
Matrix exact_inv_sqrt(const Matrix& spd);

// Trace-normalized Newton-Schulz iteration:
//   tr = trace(S), S_n = S / tr, P_0 = I,
//   P_{k+1} = (3 P_k - P_k^3 S_n) / 2,  W = P_T / sqrt(tr).
// Trace normalization puts every eigenvalue of S_n in (0, 1], which makes
// the recurrence monotonically convergent. The unrolled recurrence is what
// whitening differentiates through.
Matrix newton_schulz_inv_sqrt(const Matrix& spd, int iterations);

// Central differences, (f(x+h e_i) - f(x-h e_i)) / 2h per coordinate.
// Non-finite f values propagate as InvalidInputError.
std::vector<double> finite_diff_gradient(
    const std::function<double(const std::vector<double>&)>& f, std::vector<double> x,
    double h = 1e-5);

}  // namespace divnorm
