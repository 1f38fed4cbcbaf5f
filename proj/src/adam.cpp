#include "mvbi/adam.hpp"

#include <cmath>

#include "mvbi/error.hpp"

namespace mvbi {

AdamState make_adam(std::span<Parameter* const> params, double lr, double beta1, double beta2, double eps) {
  AdamState s{lr, beta1, beta2, eps, 0, {}, {}};
  for (const Parameter* p : params) {
    s.m.emplace_back(p->value.rows(), p->value.cols());
    s.v.emplace_back(p->value.rows(), p->value.cols());
  }
  return s;
}

void adam_step(std::span<Parameter* const> params, AdamState& state) {
  if (params.size() != state.m.size()) throw DimensionError("adam: parameter count changed");
  for (std::size_t k = 0; k < params.size(); ++k) {
    const Parameter& p = *params[k];
    require_same_shape(p.value, p.grad, "adam gradient");
    require_same_shape(p.value, state.m[k], "adam moment");
    if (!p.grad.all_finite()) throw NumericError("non-finite gradient for parameter '" + p.name + "'");
  }
  ++state.t;
  const double t = static_cast<double>(state.t);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    Parameter& p = *params[k];
    Matrix& m = state.m[k];
    Matrix& v = state.v[k];
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g;
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g * g;
      p.value[i] -= state.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + state.eps);
    }
  }
}

}  // namespace mvbi
