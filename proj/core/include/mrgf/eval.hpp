#pragma once

#include <cstdio>
#include <string>
#include <vector>

#include "mrgf/models.hpp"

namespace mrgf {

// --- segmentation metrics ---------------------------------------------------

struct Confusion {
  int64_t tp = 0, tn = 0, fp = 0, fn = 0;
  int64_t total() const { return tp + tn + fp + fn; }
};

// Pixel counts after thresholding both masks at 0.5.
template <class S>
Confusion confusion(const Tensor<S>& pred, const Tensor<S>& truth) {
  if (pred.shape() != truth.shape())
    throw TensorError("confusion: mask shapes differ, " + shape_str(pred.shape()) + " vs " +
                      shape_str(truth.shape()));
  Confusion c;
  for (int64_t i = 0; i < pred.size(); ++i) {
    const bool p = pred.v()[size_t(i)] >= S(0.5);
    const bool t = truth.v()[size_t(i)] >= S(0.5);
    if (p && t) ++c.tp;
    else if (!p && !t) ++c.tn;
    else if (p) ++c.fp;
    else ++c.fn;
  }
  return c;
}

inline double accuracy(const Confusion& c) {
  if (c.total() == 0) throw TensorError("accuracy: empty confusion counts");
  return double(c.tp + c.tn) / double(c.total());
}

// --- symmetric eigendecomposition -------------------------------------------

// Cyclic Jacobi rotations on a dense symmetric matrix. Deterministic sweep
// order, double precision, eigenvalues sorted descending. vecs holds the
// eigenvectors as consecutive rows of length n.
struct EigenSym {
  std::vector<double> vals;
  std::vector<double> vecs;
  int64_t n = 0;
};

inline EigenSym jacobi_eigen_sym(std::vector<double> a, int64_t n) {
  if (n < 1 || int64_t(a.size()) != n * n)
    throw TensorError("jacobi_eigen_sym: matrix size does not match n");
  std::vector<double> v(size_t(n * n), 0.0);
  for (int64_t i = 0; i < n; ++i) v[size_t(i * n + i)] = 1.0;

  double scale = 0.0;
  for (double x : a) scale = std::max(scale, std::abs(x));
  const double stop = scale * 1e-14;

  for (int sweep = 0; sweep < 100 && scale > 0.0; ++sweep) {
    double off = 0.0;
    for (int64_t p = 0; p < n; ++p)
      for (int64_t q = p + 1; q < n; ++q) off = std::max(off, std::abs(a[size_t(p * n + q)]));
    if (off <= stop) break;
    for (int64_t p = 0; p < n; ++p) {
      for (int64_t q = p + 1; q < n; ++q) {
        const double apq = a[size_t(p * n + q)];
        if (std::abs(apq) <= stop) continue;
        const double theta = (a[size_t(q * n + q)] - a[size_t(p * n + p)]) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (int64_t i = 0; i < n; ++i) {
          const double aip = a[size_t(i * n + p)], aiq = a[size_t(i * n + q)];
          a[size_t(i * n + p)] = c * aip - s * aiq;
          a[size_t(i * n + q)] = s * aip + c * aiq;
        }
        for (int64_t i = 0; i < n; ++i) {
          const double api = a[size_t(p * n + i)], aqi = a[size_t(q * n + i)];
          a[size_t(p * n + i)] = c * api - s * aqi;
          a[size_t(q * n + i)] = s * api + c * aqi;
        }
        for (int64_t i = 0; i < n; ++i) {
          const double vip = v[size_t(i * n + p)], viq = v[size_t(i * n + q)];
          v[size_t(i * n + p)] = c * vip - s * viq;
          v[size_t(i * n + q)] = s * vip + c * viq;
        }
      }
    }
  }

  std::vector<int64_t> order(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) order[size_t(i)] = i;
  std::sort(order.begin(), order.end(), [&](int64_t x, int64_t y) {
    return a[size_t(x * n + x)] > a[size_t(y * n + y)];
  });

  EigenSym e;
  e.n = n;
  e.vals.resize(size_t(n));
  e.vecs.resize(size_t(n * n));
  for (int64_t i = 0; i < n; ++i) {
    const int64_t j = order[size_t(i)];
    e.vals[size_t(i)] = a[size_t(j * n + j)];
    for (int64_t r = 0; r < n; ++r) e.vecs[size_t(i * n + r)] = v[size_t(r * n + j)];
  }
  return e;
}

// --- PCA realism / variation / diversity ------------------------------------

struct EigenBasis {
  std::vector<double> mean;               // column mean of the fitted rows
  std::vector<std::vector<double>> vecs;  // k orthonormal vectors, descending
  std::vector<double> vals;               // matching eigenvalues
  double source_total_variation = 0.0;    // sum of squares of the fitted rows
  int64_t dim() const { return vecs.empty() ? 0 : int64_t(vecs.front().size()); }
  int64_t k() const { return int64_t(vecs.size()); }
};

namespace detail {

inline void check_rows(const char* who, const Tensor<double>& rows) {
  if (!rows.defined() || rows.rank() != 2)
    throw TensorError(std::string(who) + ": expects an N x D row matrix");
}

// Fixes the arbitrary eigenvector sign: largest-magnitude entry positive.
inline void canonical_sign(std::vector<double>& v) {
  size_t arg = 0;
  for (size_t i = 1; i < v.size(); ++i)
    if (std::abs(v[i]) > std::abs(v[arg])) arg = i;
  if (!v.empty() && v[arg] < 0.0)
    for (double& x : v) x = -x;
}

}  // namespace detail

// Sum of squared entries: Tr(XX^T) without forming the product.
inline double total_variation_sigma(const Tensor<double>& rows) {
  detail::check_rows("total_variation_sigma", rows);
  double s = 0.0;
  for (double x : rows.v()) s += x * x;
  return s;
}

// Top-k eigenpairs of X^T X, taken literally on the rows as given; callers
// own any centering or normalization. Solves the N x N Gram system instead
// when that is smaller.
inline EigenBasis pca_fit(const Tensor<double>& rows, int64_t k = 16) {
  detail::check_rows("pca_fit", rows);
  const int64_t n = rows.dim(0), d = rows.dim(1);
  if (n < k)
    throw TensorError("pca_fit: need at least k = " + std::to_string(k) + " rows, got " +
                      std::to_string(n));
  const auto& x = rows.v();

  EigenBasis b;
  b.mean.assign(size_t(d), 0.0);
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < d; ++j) b.mean[size_t(j)] += x[size_t(i * d + j)];
  for (double& m : b.mean) m /= double(n);
  b.source_total_variation = total_variation_sigma(rows);

  EigenSym es;
  const bool gram = n < d;
  if (!gram) {
    std::vector<double> c(size_t(d * d), 0.0);
    for (int64_t i = 0; i < n; ++i)
      for (int64_t p = 0; p < d; ++p) {
        const double xp = x[size_t(i * d + p)];
        if (xp == 0.0) continue;
        for (int64_t q = 0; q < d; ++q) c[size_t(p * d + q)] += xp * x[size_t(i * d + q)];
      }
    es = jacobi_eigen_sym(std::move(c), d);
  } else {
    std::vector<double> g(size_t(n * n), 0.0);
    for (int64_t i = 0; i < n; ++i)
      for (int64_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (int64_t p = 0; p < d; ++p) s += x[size_t(i * d + p)] * x[size_t(j * d + p)];
        g[size_t(i * n + j)] = s;
      }
    es = jacobi_eigen_sym(std::move(g), n);
  }

  const double lmax = es.vals.empty() ? 0.0 : std::max(es.vals.front(), 0.0);
  const double tol = lmax * 1e-9;
  int64_t rank = 0;
  for (double l : es.vals)
    if (l > tol) ++rank;
  if (rank < k)
    throw TensorError("pca_fit: rows have rank " + std::to_string(rank) +
                      " < k = " + std::to_string(k) + "; achievable k is " + std::to_string(rank));

  b.vals.assign(es.vals.begin(), es.vals.begin() + k);
  b.vecs.resize(size_t(k));
  for (int64_t i = 0; i < k; ++i) {
    auto& e = b.vecs[size_t(i)];
    if (!gram) {
      e.assign(es.vecs.begin() + i * d, es.vecs.begin() + (i + 1) * d);
    } else {
      // lift the Gram eigenvector u into row space: E = X^T u / sqrt(lambda)
      e.assign(size_t(d), 0.0);
      const double inv = 1.0 / std::sqrt(es.vals[size_t(i)]);
      for (int64_t r = 0; r < n; ++r) {
        const double u = es.vecs[size_t(i * n + r)];
        for (int64_t p = 0; p < d; ++p) e[size_t(p)] += u * x[size_t(r * d + p)] * inv;
      }
    }
    detail::canonical_sign(e);
  }
  return b;
}

// Mean over rows of the projection norm onto the basis.
inline double realism_rho(const EigenBasis& basis, const Tensor<double>& rows) {
  detail::check_rows("realism_rho", rows);
  if (basis.k() == 0) throw TensorError("realism_rho: empty basis");
  if (rows.dim(1) != basis.dim())
    throw TensorError("realism_rho: row length " + std::to_string(rows.dim(1)) +
                      " does not match basis dimension " + std::to_string(basis.dim()));
  const int64_t n = rows.dim(0), d = rows.dim(1);
  double acc = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    double sq = 0.0;
    for (const auto& e : basis.vecs) {
      double dot = 0.0;
      for (int64_t j = 0; j < d; ++j) dot += rows.v()[size_t(i * d + j)] * e[size_t(j)];
      sq += dot * dot;
    }
    acc += std::sqrt(sq);
  }
  return acc / double(n);
}

// Number of eigenvalues strictly above one percent of the total variation.
inline int64_t diversity_delta(const Tensor<double>& rows) {
  detail::check_rows("diversity_delta", rows);
  const int64_t n = rows.dim(0), d = rows.dim(1);
  const double sigma = total_variation_sigma(rows);
  if (sigma == 0.0) return 0;
  const auto& x = rows.v();
  EigenSym es;
  if (d <= n) {
    std::vector<double> c(size_t(d * d), 0.0);
    for (int64_t i = 0; i < n; ++i)
      for (int64_t p = 0; p < d; ++p) {
        const double xp = x[size_t(i * d + p)];
        if (xp == 0.0) continue;
        for (int64_t q = 0; q < d; ++q) c[size_t(p * d + q)] += xp * x[size_t(i * d + q)];
      }
    es = jacobi_eigen_sym(std::move(c), d);
  } else {
    std::vector<double> g(size_t(n * n), 0.0);
    for (int64_t i = 0; i < n; ++i)
      for (int64_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (int64_t p = 0; p < d; ++p) s += x[size_t(i * d + p)] * x[size_t(j * d + p)];
        g[size_t(i * n + j)] = s;
      }
    es = jacobi_eigen_sym(std::move(g), n);
  }
  int64_t count = 0;
  for (double l : es.vals)
    if (l > sigma / 100.0) ++count;
  return count;
}

// --- preprocessing pipeline ---------------------------------------------

inline std::vector<double> column_mean(const Tensor<double>& rows) {
  detail::check_rows("column_mean", rows);
  std::vector<double> m(size_t(rows.dim(1)), 0.0);
  for (int64_t i = 0; i < rows.dim(0); ++i)
    for (int64_t j = 0; j < rows.dim(1); ++j) m[size_t(j)] += rows.v()[size_t(i * rows.dim(1) + j)];
  for (double& v : m) v /= double(rows.dim(0));
  return m;
}

inline Tensor<double> center_rows(const Tensor<double>& rows, const std::vector<double>& mean) {
  detail::check_rows("center_rows", rows);
  if (int64_t(mean.size()) != rows.dim(1))
    throw TensorError("center_rows: mean length does not match row length");
  auto out = rows.detached();
  for (int64_t i = 0; i < rows.dim(0); ++i)
    for (int64_t j = 0; j < rows.dim(1); ++j) out.v()[size_t(i * rows.dim(1) + j)] -= mean[size_t(j)];
  return out;
}

inline Tensor<double> normalize_rows(const Tensor<double>& rows) {
  detail::check_rows("normalize_rows", rows);
  auto out = rows.detached();
  const int64_t d = rows.dim(1);
  for (int64_t i = 0; i < rows.dim(0); ++i) {
    double sq = 0.0;
    for (int64_t j = 0; j < d; ++j) {
      const double v = out.v()[size_t(i * d + j)];
      sq += v * v;
    }
    const double norm = std::sqrt(sq);
    if (norm < 1e-12) continue;  // an all-zero row stays zero
    for (int64_t j = 0; j < d; ++j) out.v()[size_t(i * d + j)] /= norm;
  }
  return out;
}

struct GenEvalReport {
  std::string model_id;
  double rho = 0.0, sigma = 0.0;
  int64_t delta = 0, n_images = 0;
  double wall_seconds = 0.0;
};

inline std::string gen_eval_csv_header() { return "model_id,rho,sigma,delta,n_images,wall_seconds"; }

inline std::string to_csv(const GenEvalReport& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%s,%.9g,%.9g,%lld,%lld,%.3f", r.model_id.c_str(), r.rho, r.sigma,
                static_cast<long long>(r.delta), static_cast<long long>(r.n_images),
                r.wall_seconds);
  return buf;
}

// Convention for all reported numbers: rows are centered by the TRAINING
// mean; rho additionally unit-normalizes them before projecting, sigma and
// delta act on the centered, un-normalized rows. Centering by the training
// mean (not the measured set's own) makes a collapsed generator legible: a
// rank-1 output set scores delta = 1, not 0. The basis is fit on the
// centered, normalized training rows.
struct RealismEval {
  EigenBasis basis;
  std::vector<double> train_mean;
  double train_sigma = 0.0;
  int64_t train_delta = 0;
};

inline RealismEval fit_realism(const Tensor<double>& train_rows, int64_t k = 16) {
  RealismEval r;
  r.train_mean = column_mean(train_rows);
  auto centered = center_rows(train_rows, r.train_mean);
  r.train_sigma = total_variation_sigma(centered);
  r.train_delta = diversity_delta(centered);
  r.basis = pca_fit(normalize_rows(centered), k);
  return r;
}

inline GenEvalReport evaluate_generated(const RealismEval& fit, const Tensor<double>& gen_rows,
                                        const std::string& model_id, double wall_seconds = 0.0) {
  GenEvalReport rep;
  rep.model_id = model_id;
  rep.n_images = gen_rows.dim(0);
  rep.wall_seconds = wall_seconds;
  auto by_train = center_rows(gen_rows, fit.train_mean);
  rep.rho = realism_rho(fit.basis, normalize_rows(by_train));
  rep.sigma = total_variation_sigma(by_train);
  rep.delta = diversity_delta(by_train);
  return rep;
}

// --- latent interpolation -----------------------------------------------

// Images g((1-t) z0 + t z1) for steps equally spaced t in [0, 1]. The
// endpoints bypass the arithmetic so they equal direct generations exactly.
// renormalize rescales interior interpolants back onto the sphere of radius
// ||z0|| for hypersphere-distributed latents.
template <class S>
std::vector<Tensor<S>> latent_interpolate(Model<S>& g, const Tensor<S>& z0, const Tensor<S>& z1,
                                          int steps, bool renormalize = false) {
  if (steps < 2) throw TensorError("latent_interpolate: need at least 2 steps");
  if (z0.shape() != z1.shape())
    throw TensorError("latent_interpolate: latent shapes differ");
  double r0 = 0.0;
  for (S v : z0.v()) r0 += double(v) * double(v);
  r0 = std::sqrt(r0);
  std::vector<Tensor<S>> out;
  for (int i = 0; i < steps; ++i) {
    const double t = double(i) / double(steps - 1);
    Tensor<S> z;
    if (i == 0) z = z0.detached();
    else if (i == steps - 1) z = z1.detached();
    else {
      z = Tensor<S>::zeros(z0.shape());
      for (int64_t j = 0; j < z.size(); ++j)
        z.v()[size_t(j)] =
            static_cast<S>((1.0 - t) * double(z0.v()[size_t(j)]) + t * double(z1.v()[size_t(j)]));
      if (renormalize) {
        double rn = 0.0;
        for (S v : z.v()) rn += double(v) * double(v);
        rn = std::sqrt(rn);
        if (rn > 1e-12)
          for (S& v : z.v()) v = static_cast<S>(double(v) * r0 / rn);
      }
    }
    Tape<S> tp;
    NoRecordGuard<S> nr(tp);
    out.push_back(g.forward(tp, z, false));
  }
  return out;
}

}  // namespace mrgf
