#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mvbi/matrix.hpp"

namespace mvbi {

/// Relative error of an analytic gradient against a numeric one:
/// ‖a − n‖ / max(‖a‖, ‖n‖). Tensors whose gradient is numerically zero
/// (both norms below 1e-6) are compared by the absolute error ‖a − n‖.
double gradient_error(const Matrix& analytic, const Matrix& numeric);

/// Central differences of `f` wrt every entry of `inputs[k]`.
Matrix numeric_gradient(const std::function<double(const std::vector<Matrix>&)>& f,
                        std::vector<Matrix> inputs, std::size_t k, double step);

enum class GradOp { Affine, Relu, BatchNormTrain, BatchNormEval, Bilinear, Concat, SoftmaxCrossEntropy };

struct GradCheckResult {
  std::string name;
  double max_error = 0.0;
};

const char* grad_op_name(GradOp op);
std::vector<GradOp> all_grad_ops();

/// Random shapes and inputs from `seed`; the scalar checked is a random
/// projection of the op's output (the loss itself for cross entropy).
GradCheckResult grad_check(GradOp op, std::uint64_t seed, double step = 1e-6);

/// Sum of per-view cross entropies through the full model on a tiny
/// instance (M=2, d=3, d_B=2, C=2, batch 4), every parameter checked.
GradCheckResult end_to_end_grad_check(std::uint64_t seed, double step = 1e-6);

}  // namespace mvbi
