#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mvbi/matrix.hpp"
#include "mvbi/ops.hpp"

namespace mvbi {

/// A learnable tensor together with its accumulated gradient.
struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;

  Parameter() = default;
  Parameter(std::string n, Matrix v)
      : name(std::move(n)), value(std::move(v)), grad(value.rows(), value.cols()) {}
  void zero_grad() { grad = Matrix(value.rows(), value.cols()); }
};

/// Records the forward ops of one step and replays their backward rules in
/// reverse order. Gradients of a node feeding several consumers accumulate.
class Tape {
 public:
  using Id = std::size_t;

  /// Constant input; no gradient is propagated into it.
  Id input(Matrix value);
  /// Leaf bound to a parameter; `backward` adds its gradient to `p.grad`.
  /// The parameter must outlive the tape.
  Id param(Parameter& p);

  Id affine(Id x, Id w, Id b);
  Id relu(Id x);
  Id batchnorm(Id x, Id gamma, Id beta, BatchNormStats& stats, Mode mode);
  Id bilinear(Id x, Id y, Id metrics, Id bias);
  Id concat(std::span<const Id> parts);
  /// Batch-mean cross entropy as a 1×1 node.
  Id cross_entropy(Id logits, std::span<const int> labels);
  /// Σ weights[k]·scalars[k]; terms with zero weight send no gradient.
  Id weighted_sum(std::span<const Id> scalars, std::span<const double> weights);

  const Matrix& value(Id id) const { return nodes_.at(id).value; }
  /// Gradient of the last `backward` root wrt this node (empty if unreached).
  const Matrix& grad(Id id) const { return nodes_.at(id).grad; }
  std::size_t size() const { return nodes_.size(); }

  /// Seeds d(root)/d(root) = 1 for a 1×1 root and propagates to every node.
  void backward(Id root);
  void clear() { nodes_.clear(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    Parameter* param = nullptr;
    std::function<void(Tape&, const Matrix& dout)> backward;
  };

  Id push(Matrix value, bool requires_grad,
          std::function<void(Tape&, const Matrix&)> backward);
  bool needs(Id id) const { return nodes_[id].requires_grad; }
  void accumulate(Id id, const Matrix& g);

  std::vector<Node> nodes_;
};

}  // namespace mvbi
