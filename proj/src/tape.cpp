#include "mvbi/tape.hpp"

#include <memory>

#include "mvbi/error.hpp"

namespace mvbi {

Tape::Id Tape::push(Matrix value, bool requires_grad,
                    std::function<void(Tape&, const Matrix&)> backward) {
  if (!value.all_finite()) throw NumericError("non-finite value produced by a forward op");
  nodes_.push_back(Node{std::move(value), Matrix(), requires_grad, nullptr, std::move(backward)});
  return nodes_.size() - 1;
}

void Tape::accumulate(Id id, const Matrix& g) {
  Node& n = nodes_[id];
  if (!n.requires_grad) return;
  if (n.grad.empty()) {
    n.grad = g;
  } else {
    n.grad += g;
  }
}

Tape::Id Tape::input(Matrix value) { return push(std::move(value), false, nullptr); }

Tape::Id Tape::param(Parameter& p) {
  Id id = push(p.value, true, nullptr);
  nodes_[id].param = &p;
  return id;
}

Tape::Id Tape::affine(Id x, Id w, Id b) {
  Matrix out = affine_forward(value(x), value(w), value(b));
  const bool rg = needs(x) || needs(w) || needs(b);
  return push(std::move(out), rg, [x, w, b](Tape& t, const Matrix& dout) {
    AffineGrads g = affine_backward(t.value(x), t.value(w), dout);
    t.accumulate(x, g.dx);
    t.accumulate(w, g.dw);
    t.accumulate(b, g.db);
  });
}

Tape::Id Tape::relu(Id x) {
  return push(relu_forward(value(x)), needs(x), [x](Tape& t, const Matrix& dout) {
    t.accumulate(x, relu_backward(t.value(x), dout));
  });
}

Tape::Id Tape::batchnorm(Id x, Id gamma, Id beta, BatchNormStats& stats, Mode mode) {
  auto cache = std::make_shared<BatchNormCache>();
  Matrix out = batchnorm_forward(value(x), value(gamma), value(beta), stats, mode, cache.get());
  const bool rg = needs(x) || needs(gamma) || needs(beta);
  return push(std::move(out), rg, [x, gamma, beta, cache](Tape& t, const Matrix& dout) {
    BatchNormGrads g = batchnorm_backward(*cache, t.value(gamma), dout);
    t.accumulate(x, g.dx);
    t.accumulate(gamma, g.dgamma);
    t.accumulate(beta, g.dbeta);
  });
}

Tape::Id Tape::bilinear(Id x, Id y, Id metrics, Id bias) {
  auto by = std::make_shared<Matrix>();
  Matrix out = bilinear_forward(value(x), value(y), value(metrics), value(bias), by.get());
  const bool rg = needs(x) || needs(y) || needs(metrics) || needs(bias);
  return push(std::move(out), rg, [x, y, metrics, bias, by](Tape& t, const Matrix& dout) {
    BilinearGrads g = bilinear_backward(t.value(x), t.value(y), t.value(metrics), *by, dout);
    t.accumulate(x, g.dx);
    t.accumulate(y, g.dy);
    t.accumulate(metrics, g.dmetrics);
    t.accumulate(bias, g.dbias);
  });
}

Tape::Id Tape::concat(std::span<const Id> parts) {
  std::vector<Matrix> values;
  std::vector<std::size_t> widths;
  bool rg = false;
  for (Id p : parts) {
    values.push_back(value(p));
    widths.push_back(value(p).cols());
    rg = rg || needs(p);
  }
  std::vector<Id> ids(parts.begin(), parts.end());
  return push(concat_forward(values), rg, [ids, widths](Tape& t, const Matrix& dout) {
    std::vector<Matrix> g = concat_backward(widths, dout);
    for (std::size_t k = 0; k < ids.size(); ++k) t.accumulate(ids[k], g[k]);
  });
}

Tape::Id Tape::cross_entropy(Id logits, std::span<const int> labels) {
  auto res = std::make_shared<CrossEntropyResult>(softmax_cross_entropy(value(logits), labels));
  Matrix out(1, 1, res->loss);
  return push(std::move(out), needs(logits), [logits, res](Tape& t, const Matrix& dout) {
    t.accumulate(logits, res->grad * dout[0]);
  });
}

Tape::Id Tape::weighted_sum(std::span<const Id> scalars, std::span<const double> weights) {
  if (scalars.size() != weights.size()) throw DimensionError("weighted_sum: size mismatch");
  double total = 0.0;
  bool rg = false;
  for (std::size_t k = 0; k < scalars.size(); ++k) {
    const Matrix& v = value(scalars[k]);
    if (v.size() != 1) throw DimensionError("weighted_sum: operand " + v.shape_str() + " is not scalar");
    if (weights[k] != 0.0) {
      total += weights[k] * v[0];
      rg = rg || needs(scalars[k]);
    }
  }
  std::vector<Id> ids(scalars.begin(), scalars.end());
  std::vector<double> w(weights.begin(), weights.end());
  return push(Matrix(1, 1, total), rg, [ids, w](Tape& t, const Matrix& dout) {
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (w[k] != 0.0) t.accumulate(ids[k], Matrix(1, 1, w[k] * dout[0]));
    }
  });
}

void Tape::backward(Id root) {
  if (value(root).size() != 1) throw DimensionError("backward root must be scalar");
  for (Node& n : nodes_) n.grad = Matrix();
  nodes_[root].grad = Matrix(1, 1, 1.0);
  for (Id id = root + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (n.grad.empty()) continue;
    // Callbacks only touch lower-numbered nodes, so n.grad stays valid.
    if (n.backward) n.backward(*this, n.grad);
    if (n.param) n.param->grad += n.grad;
  }
}

}  // namespace mvbi
