#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mvbi/tape.hpp"

namespace mvbi {

/// Bias-corrected Adam moments for a fixed, ordered list of parameters.
struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.5;
  double beta2 = 0.9;
  double eps = 1e-8;
  std::uint64_t t = 0;
  std::vector<Matrix> m;
  std::vector<Matrix> v;
};

AdamState make_adam(std::span<Parameter* const> params, double lr, double beta1, double beta2, double eps);

/// One update from the gradients stored in each parameter. A non-finite
/// gradient throws NumericError naming the parameter, before anything moves.
void adam_step(std::span<Parameter* const> params, AdamState& state);

}  // namespace mvbi
