#pragma once

// Differentiable building blocks. Every forward has a matching backward that
// maps the upstream gradient onto each input.

#include <span>
#include <vector>

#include "mvbi/matrix.hpp"

namespace mvbi {

enum class Mode { Train, Eval };

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.9;

// ---- affine: out = x·Wᵀ + b ---------------------------------------------

Matrix affine_forward(const Matrix& x, const Matrix& w, const Matrix& b);

struct AffineGrads {
  Matrix dx, dw, db;
};
AffineGrads affine_backward(const Matrix& x, const Matrix& w, const Matrix& dout);

// ---- relu ----------------------------------------------------------------

Matrix relu_forward(const Matrix& x);
/// Subgradient at exactly zero is zero.
Matrix relu_backward(const Matrix& x, const Matrix& dout);

// ---- batch normalization ---------------------------------------------------

/// Running statistics, mutated only in train mode.
struct BatchNormStats {
  Matrix mean;  // 1×m
  Matrix var;   // 1×m
  explicit BatchNormStats(std::size_t m = 0) : mean(1, m, 0.0), var(1, m, 1.0) {}
};

struct BatchNormCache {
  Matrix xhat;
  Matrix inv_std;  // 1×m
  Mode mode = Mode::Train;
};

/// Train mode normalizes with batch statistics and folds them into `stats`
/// with momentum 0.9 (running variance uses the unbiased estimate).
/// Eval mode uses `stats` unchanged.
Matrix batchnorm_forward(const Matrix& x, const Matrix& gamma, const Matrix& beta,
                         BatchNormStats& stats, Mode mode, BatchNormCache* cache = nullptr);

struct BatchNormGrads {
  Matrix dx, dgamma, dbeta;
};
BatchNormGrads batchnorm_backward(const BatchNormCache& cache, const Matrix& gamma,
                                  const Matrix& dout);

// ---- bilinear form ---------------------------------------------------------
//
// The d_B metric matrices are stacked into one (d_B·d)×d matrix; rows
// [p·d, (p+1)·d) hold B_p. out[i,p] = x_iᵀ B_p y_i + bias[p].

Matrix bilinear_forward(const Matrix& x, const Matrix& y, const Matrix& metrics,
                        const Matrix& bias, Matrix* cache_by = nullptr);

struct BilinearGrads {
  Matrix dx, dy, dmetrics, dbias;
};
/// `by` is the cache filled by forward (y·stackedᵀ).
BilinearGrads bilinear_backward(const Matrix& x, const Matrix& y, const Matrix& metrics,
                                const Matrix& by, const Matrix& dout);

// ---- concat ---------------------------------------------------------------

Matrix concat_forward(std::span<const Matrix> parts);
std::vector<Matrix> concat_backward(std::span<const std::size_t> widths, const Matrix& dout);

// ---- softmax / cross entropy ----------------------------------------------

Matrix softmax_rows(const Matrix& logits);

struct CrossEntropyResult {
  double loss = 0.0;  // batch mean
  Matrix grad;        // (softmax − onehot) / batch
};
CrossEntropyResult softmax_cross_entropy(const Matrix& logits, std::span<const int> labels);

}  // namespace mvbi
