#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "labelaudit/embed.hpp"

namespace labelaudit {

enum class ReduceMethod { pca, external };

inline const char* reduce_method_name(ReduceMethod m) {
  return m == ReduceMethod::pca ? "pca" : "external";
}

struct ReducerConfig {
  ReduceMethod method = ReduceMethod::pca;
  std::size_t n_components = 2;
  // Neighborhood knobs of the external reducer. Unused by PCA but carried
  // through every report for provenance.
  std::size_t n_neighbors = 15;
  double min_dist = 0.1;

  void validate(std::size_t input_dim) const {
    if (n_components < 2) throw std::runtime_error("reducer: n_components must be >= 2");
    if (n_components > input_dim)
      throw std::runtime_error("reducer: n_components exceeds input dimension");
    if (min_dist < 0.0) throw std::runtime_error("reducer: min_dist must be >= 0");
    if (n_neighbors < 1) throw std::runtime_error("reducer: n_neighbors must be >= 1");
  }
};

struct EigenDecomposition {
  std::vector<double> values;   // n
  std::vector<double> vectors;  // n x n, column j = eigenvector of values[j]
};

// Cyclic Jacobi rotations for a symmetric matrix (row-major n x n).
// Deterministic sweep order; converges when the off-diagonal mass is
// negligible relative to the Frobenius norm.
inline EigenDecomposition jacobi_eigen_symmetric(std::vector<double> a, std::size_t n) {
  EigenDecomposition out;
  out.vectors.assign(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) out.vectors[i * n + i] = 1.0;

  double frob = 0.0;
  for (const double x : a) frob += x * x;
  frob = std::sqrt(frob);
  const double tol = (frob > 0.0) ? frob * 1e-12 : 0.0;

  const int max_sweeps = 100;
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += 2.0 * a[p * n + q] * a[p * n + q];
    if (std::sqrt(off) <= tol) break;

    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a[p * n + q];
        if (std::abs(apq) <= tol / static_cast<double>(n * n + 1)) continue;
        const double app = a[p * n + p];
        const double aqq = a[q * n + q];
        const double theta = (aqq - app) / (2.0 * apq);
        const double t = (theta >= 0.0)
                             ? 1.0 / (theta + std::sqrt(1.0 + theta * theta))
                             : 1.0 / (theta - std::sqrt(1.0 + theta * theta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = t * c;

        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a[k * n + p];
          const double akq = a[k * n + q];
          a[k * n + p] = c * akp - s * akq;
          a[k * n + q] = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a[p * n + k];
          const double aqk = a[q * n + k];
          a[p * n + k] = c * apk - s * aqk;
          a[q * n + k] = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = out.vectors[k * n + p];
          const double vkq = out.vectors[k * n + q];
          out.vectors[k * n + p] = c * vkp - s * vkq;
          out.vectors[k * n + q] = s * vkp + c * vkq;
        }
      }
    }
  }

  out.values.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.values[i] = a[i * n + i];
  return out;
}

struct PcaResult {
  EmbeddingMatrix scores;                  // rows x n_components, tagged reduced
  std::vector<double> components;          // n_components x input_dim, row-major
  std::vector<double> explained_variance;  // per component, non-increasing
  double total_variance = 0.0;
  std::vector<double> mean;  // column means of the normalized input
  std::size_t input_dim = 0;
};

namespace detail {

// Sorts eigenpairs by descending value (stable on ties) and returns the top k
// as rows, each flipped so its largest-magnitude entry is nonnegative.
inline void select_components(const EigenDecomposition& eig, std::size_t n, std::size_t k,
                              std::vector<double>& rows_out, std::vector<double>& values_out) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
    return eig.values[i] > eig.values[j];
  });

  rows_out.assign(k * n, 0.0);
  values_out.resize(k);
  for (std::size_t c = 0; c < k; ++c) {
    const std::size_t col = order[c];
    values_out[c] = eig.values[col];
    std::size_t arg = 0;
    double best = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double mag = std::abs(eig.vectors[i * n + col]);
      if (mag > best) {
        best = mag;
        arg = i;
      }
    }
    const double sign = (eig.vectors[arg * n + col] < 0.0) ? -1.0 : 1.0;
    for (std::size_t i = 0; i < n; ++i) rows_out[c * n + i] = sign * eig.vectors[i * n + col];
  }
}

}  // namespace detail

// Principal-component projection of an embedding matrix. Rows are
// L2-normalized first (zero rows pass through) so Euclidean structure on the
// result approximates cosine structure on the input, then centered and
// projected onto the top directions of the sample covariance.
inline PcaResult pca_fit_transform(const EmbeddingMatrix& m, const ReducerConfig& cfg) {
  if (cfg.method != ReduceMethod::pca)
    throw std::runtime_error("pca_fit_transform: config method is not pca");
  const std::size_t n = m.rows();
  const std::size_t d = m.dim;
  cfg.validate(d);
  if (n < cfg.n_components)
    throw std::runtime_error("pca_fit_transform: need at least n_components rows, have " +
                             std::to_string(n));

  // Normalize rows, then center columns.
  std::vector<double> x(m.data);
  for (std::size_t i = 0; i < n; ++i) {
    double norm_sq = 0.0;
    for (std::size_t j = 0; j < d; ++j) norm_sq += x[i * d + j] * x[i * d + j];
    if (norm_sq > 0.0) {
      const double inv = 1.0 / std::sqrt(norm_sq);
      for (std::size_t j = 0; j < d; ++j) x[i * d + j] *= inv;
    }
  }
  PcaResult result;
  result.input_dim = d;
  result.mean.assign(d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) result.mean[j] += x[i * d + j];
  for (double& v : result.mean) v /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) x[i * d + j] -= result.mean[j];

  const double denom = static_cast<double>(n > 1 ? n - 1 : 1);
  double total = 0.0;
  for (const double v : x) total += v * v;
  total /= denom;
  if (total < 1e-18)
    throw std::runtime_error("pca_fit_transform: degenerate input (all rows identical)");
  result.total_variance = total;

  const std::size_t k = cfg.n_components;
  if (d <= n) {
    // Covariance route: C = X^T X / (n-1), d x d.
    std::vector<double> cov(d * d, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t a = 0; a < d; ++a) {
        const double xa = x[i * d + a];
        if (xa == 0.0) continue;
        for (std::size_t b = a; b < d; ++b) cov[a * d + b] += xa * x[i * d + b];
      }
    for (std::size_t a = 0; a < d; ++a)
      for (std::size_t b = a; b < d; ++b) {
        cov[a * d + b] /= denom;
        cov[b * d + a] = cov[a * d + b];
      }
    const auto eig = jacobi_eigen_symmetric(std::move(cov), d);
    detail::select_components(eig, d, k, result.components, result.explained_variance);
  } else {
    // Gram route for wide matrices: G = X X^T / (n-1), n x n, shares the
    // nonzero spectrum with the covariance; components are X^T u normalized.
    std::vector<double> gram(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i; j < n; ++j) {
        double dot = 0.0;
        for (std::size_t a = 0; a < d; ++a) dot += x[i * d + a] * x[j * d + a];
        gram[i * n + j] = dot / denom;
        gram[j * n + i] = gram[i * n + j];
      }
    const auto eig = jacobi_eigen_symmetric(std::move(gram), n);
    std::vector<double> u_rows, values;
    detail::select_components(eig, n, k, u_rows, values);
    result.explained_variance = values;
    result.components.assign(k * d, 0.0);
    for (std::size_t c = 0; c < k; ++c) {
      double norm_sq = 0.0;
      for (std::size_t a = 0; a < d; ++a) {
        double v = 0.0;
        for (std::size_t i = 0; i < n; ++i) v += x[i * d + a] * u_rows[c * n + i];
        result.components[c * d + a] = v;
        norm_sq += v * v;
      }
      if (norm_sq > 0.0) {
        const double inv = 1.0 / std::sqrt(norm_sq);
        for (std::size_t a = 0; a < d; ++a) result.components[c * d + a] *= inv;
      }
      // Re-apply the sign convention in the component basis.
      std::size_t arg = 0;
      double best = -1.0;
      for (std::size_t a = 0; a < d; ++a) {
        const double mag = std::abs(result.components[c * d + a]);
        if (mag > best) {
          best = mag;
          arg = a;
        }
      }
      if (result.components[c * d + arg] < 0.0)
        for (std::size_t a = 0; a < d; ++a) result.components[c * d + a] = -result.components[c * d + a];
    }
  }

  // Clamp tiny negative eigenvalues from roundoff.
  for (double& v : result.explained_variance)
    if (v < 0.0 && v > -1e-12) v = 0.0;

  result.scores.ids = m.ids;
  result.scores.dim = k;
  result.scores.reduced = true;
  result.scores.data.assign(n * k, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < k; ++c) {
      double s = 0.0;
      for (std::size_t a = 0; a < d; ++a) s += x[i * d + a] * result.components[c * d + a];
      result.scores.data[i * k + c] = s;
    }
  return result;
}

// Import vectors reduced by an external run; dimension checks against the
// reducer config are skipped.
inline EmbeddingMatrix load_reduced(const std::string& path) {
  EmbeddingMatrix m = load_embeddings(path);
  m.reduced = true;
  return m;
}

}  // namespace labelaudit
