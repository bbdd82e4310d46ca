#pragma once

// Shared test fixtures and independent oracles. Everything in this header
// must stay independent of the implementation paths it is used to check.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "divnorm/matrix.hpp"
#include "divnorm/numerics.hpp"
#include "divnorm/rng.hpp"

namespace divnorm::test {

inline Matrix random_matrix(int rows, int cols, SeededRng& rng) {
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = rng.normal();
  return m;
}

// Independent mean/covariance oracle: E[xy] - E[x]E[y] with long double
// accumulation (a different algebraic route than the centered two-pass in
// the implementation).
struct CovOracle {
  std::vector<double> mean;
  std::vector<std::vector<double>> cov;
};

inline CovOracle covariance_oracle(const Matrix& x) {
  const int n = x.rows(), d = x.cols();
  CovOracle out;
  out.mean.assign(d, 0.0);
  out.cov.assign(d, std::vector<double>(d, 0.0));
  std::vector<long double> sum(d, 0.0L);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) sum[j] += x(i, j);
  for (int j = 0; j < d; ++j) out.mean[j] = static_cast<double>(sum[j] / n);
  for (int a = 0; a < d; ++a) {
    for (int b = 0; b < d; ++b) {
      long double s = 0.0L;
      for (int i = 0; i < n; ++i) {
        s += static_cast<long double>(x(i, a)) * static_cast<long double>(x(i, b));
      }
      out.cov[a][b] = static_cast<double>(s / n - (sum[a] / n) * (sum[b] / n));
    }
  }
  return out;
}

// Random orthonormal basis from the eigenvectors of a random symmetric
// matrix (generation aid for controlled-conditioning SPD inputs).
inline Matrix random_orthonormal(int d, SeededRng& rng) {
  Matrix sym(d, d);
  for (int i = 0; i < d; ++i) {
    for (int j = i; j < d; ++j) {
      const double v = rng.normal();
      sym(i, j) = v;
      sym(j, i) = v;
    }
  }
  return symmetric_eigen(sym).vectors;
}

inline Matrix spd_with_eigenvalues(const std::vector<double>& eigs, SeededRng& rng,
                                   Matrix* basis_out = nullptr) {
  const int d = static_cast<int>(eigs.size());
  const Matrix v = random_orthonormal(d, rng);
  Matrix out(d, d);
  for (int i = 0; i < d; ++i) {
    for (int j = i; j < d; ++j) {
      double s = 0.0;
      for (int k = 0; k < d; ++k) s += v(i, k) * eigs[k] * v(j, k);
      out(i, j) = s;
      out(j, i) = s;
    }
  }
  if (basis_out) *basis_out = v;
  return out;
}

// Batch with population covariance V diag(eigs) V^T and the given mean.
inline Matrix sample_gaussian_batch(int n, const std::vector<double>& eigs,
                                    const std::vector<double>& mean, SeededRng& rng) {
  const int d = static_cast<int>(eigs.size());
  const Matrix v = random_orthonormal(d, rng);
  Matrix x(n, d);
  std::vector<double> z(d);
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < d; ++k) z[k] = rng.normal() * std::sqrt(eigs[k]);
    for (int j = 0; j < d; ++j) {
      double s = 0.0;
      for (int k = 0; k < d; ++k) s += v(j, k) * z[k];
      x(i, j) = s + mean[j];
    }
  }
  return x;
}

// Exhaustive AP/rank oracle: recomputes precision at every position by
// counting matches in the prefix. Same tie rule as the implementation
// (score descending, gallery id ascending).
struct BruteForceRank {
  double ap = 0.0;
  int first_match_rank = 0;  // 0 = none
};

inline BruteForceRank brute_force_rank(const std::vector<double>& scores,
                                       const std::vector<char>& is_match,
                                       const std::vector<long long>& gallery_ids) {
  const size_t n = scores.size();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return gallery_ids[a] < gallery_ids[b];
  });
  BruteForceRank out;
  int relevant = 0;
  for (char f : is_match) relevant += f ? 1 : 0;
  if (relevant == 0) return out;
  double ap = 0.0;
  for (size_t pos = 1; pos <= n; ++pos) {
    if (!is_match[order[pos - 1]]) continue;
    if (out.first_match_rank == 0) out.first_match_rank = static_cast<int>(pos);
    int hits = 0;
    for (size_t q = 0; q < pos; ++q) hits += is_match[order[q]] ? 1 : 0;
    ap += static_cast<double>(hits) / static_cast<double>(pos);
  }
  out.ap = ap / relevant;
  return out;
}

inline double frob_diff_from_identity(const Matrix& m) {
  double s = 0.0;
  for (int i = 0; i < m.rows(); ++i) {
    for (int j = 0; j < m.cols(); ++j) {
      const double v = m(i, j) - (i == j ? 1.0 : 0.0);
      s += v * v;
    }
  }
  return std::sqrt(s);
}

}  // namespace divnorm::test
