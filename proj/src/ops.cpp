#include "mvbi/ops.hpp"

#include <algorithm>
#include <cmath>

#include "mvbi/error.hpp"

namespace mvbi {

namespace {

void require_row_vector(const Matrix& v, std::size_t n, const char* what) {
  if (v.rows() != 1 || v.cols() != n) {
    throw DimensionError(std::string(what) + ": expected 1x" + std::to_string(n) + ", got " +
                         v.shape_str());
  }
}

}  // namespace

Matrix affine_forward(const Matrix& x, const Matrix& w, const Matrix& b) {
  if (x.cols() != w.cols()) {
    throw DimensionError("affine: input " + x.shape_str() + " does not conform to weight " +
                         w.shape_str());
  }
  require_row_vector(b, w.rows(), "affine bias");
  Matrix out = matmul_nt(x, w);
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += b[j];
  return out;
}

AffineGrads affine_backward(const Matrix& x, const Matrix& w, const Matrix& dout) {
  if (dout.rows() != x.rows() || dout.cols() != w.rows())
    throw DimensionError("affine backward: upstream " + dout.shape_str());
  return {matmul(dout, w), matmul_tn(dout, x), column_sums(dout)};
}

Matrix relu_forward(const Matrix& x) {
  Matrix out = x;
  for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
  return out;
}

Matrix relu_backward(const Matrix& x, const Matrix& dout) {
  require_same_shape(x, dout, "relu backward");
  Matrix dx = dout;
  for (std::size_t i = 0; i < dx.size(); ++i)
    if (!(x[i] > 0.0)) dx[i] = 0.0;
  return dx;
}

Matrix batchnorm_forward(const Matrix& x, const Matrix& gamma, const Matrix& beta,
                         BatchNormStats& stats, Mode mode, BatchNormCache* cache) {
  const std::size_t n = x.rows();
  const std::size_t m = x.cols();
  require_row_vector(gamma, m, "batchnorm gamma");
  require_row_vector(beta, m, "batchnorm beta");
  require_row_vector(stats.mean, m, "batchnorm running mean");
  require_row_vector(stats.var, m, "batchnorm running var");

  Matrix mean(1, m);
  Matrix inv_std(1, m);
  if (mode == Mode::Train) {
    if (n < 2) throw DimensionError("batchnorm: train mode needs batch >= 2, got " + std::to_string(n));
    Matrix var(1, m);
    for (std::size_t j = 0; j < m; ++j) {
      double mu = 0.0;
      for (std::size_t i = 0; i < n; ++i) mu += x(i, j);
      mu /= static_cast<double>(n);
      double s2 = 0.0;
      for (std::size_t i = 0; i < n; ++i) s2 += (x(i, j) - mu) * (x(i, j) - mu);
      mean[j] = mu;
      var[j] = s2 / static_cast<double>(n);
      inv_std[j] = 1.0 / std::sqrt(var[j] + kBatchNormEps);
      const double unbiased = s2 / static_cast<double>(n - 1);
      stats.mean[j] = kBatchNormMomentum * stats.mean[j] + (1.0 - kBatchNormMomentum) * mu;
      stats.var[j] = kBatchNormMomentum * stats.var[j] + (1.0 - kBatchNormMomentum) * unbiased;
    }
  } else {
    for (std::size_t j = 0; j < m; ++j) {
      mean[j] = stats.mean[j];
      inv_std[j] = 1.0 / std::sqrt(stats.var[j] + kBatchNormEps);
    }
  }

  Matrix xhat(n, m);
  Matrix out(n, m);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      xhat(i, j) = (x(i, j) - mean[j]) * inv_std[j];
      out(i, j) = gamma[j] * xhat(i, j) + beta[j];
    }
  }
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->inv_std = std::move(inv_std);
    cache->mode = mode;
  }
  return out;
}

BatchNormGrads batchnorm_backward(const BatchNormCache& cache, const Matrix& gamma,
                                  const Matrix& dout) {
  const Matrix& xhat = cache.xhat;
  require_same_shape(xhat, dout, "batchnorm backward");
  const std::size_t n = xhat.rows();
  const std::size_t m = xhat.cols();
  BatchNormGrads g{Matrix(n, m), Matrix(1, m), Matrix(1, m)};
  for (std::size_t j = 0; j < m; ++j) {
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      sum_dy += dout(i, j);
      sum_dy_xhat += dout(i, j) * xhat(i, j);
    }
    g.dbeta[j] = sum_dy;
    g.dgamma[j] = sum_dy_xhat;
    const double scale = gamma[j] * cache.inv_std[j];
    if (cache.mode == Mode::Eval) {
      for (std::size_t i = 0; i < n; ++i) g.dx(i, j) = scale * dout(i, j);
    } else {
      const double nn = static_cast<double>(n);
      for (std::size_t i = 0; i < n; ++i) {
        g.dx(i, j) = scale * (dout(i, j) - sum_dy / nn - xhat(i, j) * sum_dy_xhat / nn);
      }
    }
  }
  return g;
}

Matrix bilinear_forward(const Matrix& x, const Matrix& y, const Matrix& metrics,
                        const Matrix& bias, Matrix* cache_by) {
  if (x.rows() != y.rows() || x.cols() != y.cols()) {
    throw DimensionError("bilinear: operands " + x.shape_str() + " and " + y.shape_str() +
                         " differ");
  }
  const std::size_t d = x.cols();
  if (d == 0 || metrics.cols() != d || metrics.rows() % d != 0 || metrics.rows() == 0) {
    throw DimensionError("bilinear: metric stack " + metrics.shape_str() +
                         " incompatible with width " + std::to_string(d));
  }
  const std::size_t db = metrics.rows() / d;
  require_row_vector(bias, db, "bilinear bias");

  Matrix by = matmul_nt(y, metrics);  // batch × (d_B·d): row i holds B_p y_i for each p
  Matrix out(x.rows(), db);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const double* xi = x.row(i).data();
    const double* bi = by.row(i).data();
    for (std::size_t p = 0; p < db; ++p) {
      double acc = bias[p];
      const double* blk = bi + p * d;
      for (std::size_t k = 0; k < d; ++k) acc += xi[k] * blk[k];
      out(i, p) = acc;
    }
  }
  if (cache_by) *cache_by = std::move(by);
  return out;
}

BilinearGrads bilinear_backward(const Matrix& x, const Matrix& y, const Matrix& metrics,
                                const Matrix& by, const Matrix& dout) {
  const std::size_t n = x.rows();
  const std::size_t d = x.cols();
  const std::size_t db = metrics.rows() / d;
  if (dout.rows() != n || dout.cols() != db)
    throw DimensionError("bilinear backward: upstream " + dout.shape_str());

  BilinearGrads g{Matrix(n, d), Matrix(), Matrix(), column_sums(dout)};
  Matrix dby(n, db * d);
  for (std::size_t i = 0; i < n; ++i) {
    const double* xi = x.row(i).data();
    const double* bi = by.row(i).data();
    double* dxi = g.dx.row(i).data();
    double* dbi = dby.row(i).data();
    for (std::size_t p = 0; p < db; ++p) {
      const double gp = dout(i, p);
      if (gp == 0.0) continue;
      for (std::size_t k = 0; k < d; ++k) {
        dxi[k] += gp * bi[p * d + k];
        dbi[p * d + k] = gp * xi[k];
      }
    }
  }
  g.dy = matmul(dby, metrics);
  g.dmetrics = matmul_tn(dby, y);
  return g;
}

Matrix concat_forward(std::span<const Matrix> parts) {
  if (parts.empty()) throw DimensionError("concat: no parts");
  const std::size_t n = parts.front().rows();
  std::size_t width = 0;
  for (const auto& p : parts) {
    if (p.rows() != n) {
      throw DimensionError("concat: batch mismatch " + parts.front().shape_str() + " vs " +
                           p.shape_str());
    }
    width += p.cols();
  }
  Matrix out(n, width);
  for (std::size_t i = 0; i < n; ++i) {
    double* o = out.row(i).data();
    for (const auto& p : parts) o = std::copy(p.row(i).begin(), p.row(i).end(), o);
  }
  return out;
}

std::vector<Matrix> concat_backward(std::span<const std::size_t> widths, const Matrix& dout) {
  std::vector<Matrix> parts;
  parts.reserve(widths.size());
  std::size_t offset = 0;
  for (std::size_t w : widths) {
    parts.push_back(slice_cols(dout, offset, w));
    offset += w;
  }
  if (offset != dout.cols()) throw DimensionError("concat backward: widths do not cover upstream");
  return parts;
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix p = logits;
  for (std::size_t i = 0; i < p.rows(); ++i) {
    auto r = p.row(i);
    const double mx = *std::max_element(r.begin(), r.end());
    double z = 0.0;
    for (double& v : r) {
      v = std::exp(v - mx);
      z += v;
    }
    for (double& v : r) v /= z;
  }
  return p;
}

CrossEntropyResult softmax_cross_entropy(const Matrix& logits, std::span<const int> labels) {
  const std::size_t n = logits.rows();
  const std::size_t c = logits.cols();
  if (labels.size() != n) {
    throw DimensionError("cross entropy: " + std::to_string(labels.size()) + " labels for " +
                         logits.shape_str() + " logits");
  }
  if (n == 0) throw DimensionError("cross entropy: empty batch");
  CrossEntropyResult res{0.0, Matrix(n, c)};
  for (std::size_t i = 0; i < n; ++i) {
    const int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= c) {
      throw DataError("cross entropy: label " + std::to_string(y) + " outside [0," +
                      std::to_string(c) + ")");
    }
    auto z = logits.row(i);
    const double mx = *std::max_element(z.begin(), z.end());
    double sum_exp = 0.0;
    for (double v : z) sum_exp += std::exp(v - mx);
    const double log_norm = mx + std::log(sum_exp);
    res.loss += log_norm - z[static_cast<std::size_t>(y)];
    for (std::size_t j = 0; j < c; ++j) res.grad(i, j) = std::exp(z[j] - log_norm);
    res.grad(i, static_cast<std::size_t>(y)) -= 1.0;
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  res.loss *= inv_n;
  res.grad *= inv_n;
  return res;
}

}  // namespace mvbi
