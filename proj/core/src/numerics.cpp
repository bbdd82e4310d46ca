#include "divnorm/numerics.hpp"

#include <cmath>
#include <string>

#include "divnorm/errors.hpp"

namespace divnorm {

CovarianceResult covariance(const Matrix& x, double ridge) {
  if (x.rows() < 2) {
    throw DegenerateBatchError("covariance: need at least 2 rows, got " +
                               std::to_string(x.rows()));
  }
  if (ridge < 0.0) throw InvalidInputError("covariance: ridge must be >= 0");
  if (!x.all_finite()) throw InvalidInputError("covariance: non-finite input");

  const int n = x.rows();
  const int d = x.cols();
  CovarianceResult out;
  out.mean = x.row_mean();
  out.cov = Matrix(d, d);
  // Upper triangle once, mirrored, so (i,j) and (j,i) are bit-identical.
  for (int i = 0; i < d; ++i) {
    for (int j = i; j < d; ++j) {
      double s = 0.0;
      for (int k = 0; k < n; ++k) {
        s += (x(k, i) - out.mean(0, i)) * (x(k, j) - out.mean(0, j));
      }
      const double v = s / n;
      out.cov(i, j) = v;
      out.cov(j, i) = v;
    }
    out.cov(i, i) += ridge;
  }
  return out;
}

namespace {

double off_diagonal_norm(const Matrix& a) {
  double s = 0.0;
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < a.cols(); ++j)
      if (i != j) s += a(i, j) * a(i, j);
  return std::sqrt(s);
}

}  // namespace

SymmetricEigen symmetric_eigen(const Matrix& a, double off_tol, int max_sweeps) {
  if (a.rows() != a.cols()) throw ContractViolation("symmetric_eigen: matrix not square");
  if (!a.all_finite()) throw InvalidInputError("symmetric_eigen: non-finite input");
  const int n = a.rows();
  Matrix work = a;
  Matrix v = Matrix::identity(n);

  for (int sweep = 0; sweep < max_sweeps && off_diagonal_norm(work) > off_tol; ++sweep) {
    for (int p = 0; p < n - 1; ++p) {
      for (int q = p + 1; q < n; ++q) {
        const double apq = work(p, q);
        if (apq == 0.0) continue;
        const double app = work(p, p);
        const double aqq = work(q, q);
        // Stable rotation (Golub & Van Loan sec. 8.5).
        const double tau = (aqq - app) / (2.0 * apq);
        const double t = (tau >= 0.0) ? 1.0 / (tau + std::sqrt(1.0 + tau * tau))
                                      : 1.0 / (tau - std::sqrt(1.0 + tau * tau));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = t * c;
        for (int k = 0; k < n; ++k) {
          const double wkp = work(k, p);
          const double wkq = work(k, q);
          work(k, p) = c * wkp - s * wkq;
          work(k, q) = s * wkp + c * wkq;
        }
        for (int k = 0; k < n; ++k) {
          const double wpk = work(p, k);
          const double wqk = work(q, k);
          work(p, k) = c * wpk - s * wqk;
          work(q, k) = s * wpk + c * wqk;
        }
        for (int k = 0; k < n; ++k) {
          const double vkp = v(k, p);
          const double vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }

  // Sort ascending by eigenvalue, permuting the eigenvector columns along.
  SymmetricEigen out;
  out.values.resize(n);
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      if (work(order[j], order[j]) < work(order[i], order[i])) std::swap(order[i], order[j]);
    }
  }
  out.vectors = Matrix(n, n);
  for (int k = 0; k < n; ++k) {
    out.values[k] = work(order[k], order[k]);
    for (int r = 0; r < n; ++r) out.vectors(r, k) = v(r, order[k]);
  }
  return out;
}

Matrix exact_inv_sqrt(const Matrix& spd) {
  const SymmetricEigen eig = symmetric_eigen(spd);
  const int n = spd.rows();
  for (double lambda : eig.values) {
    if (lambda <= 0.0) {
      throw NotPositiveDefiniteError("exact_inv_sqrt: eigenvalue " + std::to_string(lambda) +
                                     " <= 0");
    }
  }
  // W = V diag(1/sqrt(lambda)) V^T, assembled symmetrically and mirrored so
  // the result is bit-symmetric.
  Matrix w(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = i; j < n; ++j) {
      double s = 0.0;
      for (int k = 0; k < n; ++k) {
        s += eig.vectors(i, k) * eig.vectors(j, k) / std::sqrt(eig.values[k]);
      }
      w(i, j) = s;
      w(j, i) = s;
    }
  }
  return w;
}

Matrix newton_schulz_inv_sqrt(const Matrix& spd, int iterations) {
  if (spd.rows() != spd.cols()) {
    throw ContractViolation("newton_schulz_inv_sqrt: matrix not square");
  }
  if (iterations < 0) throw ContractViolation("newton_schulz_inv_sqrt: negative iterations");
  const double tr = spd.trace();
  if (!(tr > 0.0)) {
    throw InvalidInputError("newton_schulz_inv_sqrt: trace " + std::to_string(tr) + " <= 0");
  }
  const int n = spd.rows();
  Matrix s_n = spd;
  s_n *= 1.0 / tr;
  Matrix p = Matrix::identity(n);
  for (int k = 0; k < iterations; ++k) {
    const Matrix p2 = p * p;
    const Matrix p3s = p2 * (p * s_n);
    Matrix next = p;
    next *= 1.5;
    next.add_scaled(p3s, -0.5);
    p = std::move(next);
  }
  p *= 1.0 / std::sqrt(tr);
  return p;
}

std::vector<double> finite_diff_gradient(
    const std::function<double(const std::vector<double>&)>& f, std::vector<double> x,
    double h) {
  if (h <= 0.0) throw ContractViolation("finite_diff_gradient: h must be positive");
  std::vector<double> grad(x.size());
  for (size_t i = 0; i < x.size(); ++i) {
    const double xi = x[i];
    x[i] = xi + h;
    const double fp = f(x);
    x[i] = xi - h;
    const double fm = f(x);
    x[i] = xi;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw InvalidInputError("finite_diff_gradient: non-finite function value at coordinate " +
                              std::to_string(i));
    }
    grad[i] = (fp - fm) / (2.0 * h);
  }
  return grad;
}

}  // namespace divnorm
