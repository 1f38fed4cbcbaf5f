#include "mvbi/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "mvbi/error.hpp"
#include "mvbi/model.hpp"
#include "mvbi/ops.hpp"
#include "mvbi/rng.hpp"

namespace mvbi {

double gradient_error(const Matrix& analytic, const Matrix& numeric) {
  require_same_shape(analytic, numeric, "gradient check");
  const double diff = frobenius_norm(analytic - numeric);
  const double scale = std::max(frobenius_norm(analytic), frobenius_norm(numeric));
  return scale < 1e-6 ? diff : diff / scale;
}

Matrix numeric_gradient(const std::function<double(const std::vector<Matrix>&)>& f, std::vector<Matrix> inputs,
                        std::size_t k, double step) {
  Matrix g(inputs[k].rows(), inputs[k].cols());
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double orig = inputs[k][i];
    inputs[k][i] = orig + step;
    const double up = f(inputs);
    inputs[k][i] = orig - step;
    const double down = f(inputs);
    inputs[k][i] = orig;
    g[i] = (up - down) / (2.0 * step);
  }
  return g;
}

const char* grad_op_name(GradOp op) {
  switch (op) {
    case GradOp::Affine: return "affine";
    case GradOp::Relu: return "relu";
    case GradOp::BatchNormTrain: return "batchnorm_train";
    case GradOp::BatchNormEval: return "batchnorm_eval";
    case GradOp::Bilinear: return "bilinear_form";
    case GradOp::Concat: return "concat";
    case GradOp::SoftmaxCrossEntropy: return "softmax_cross_entropy";
  }
  return "?";
}

std::vector<GradOp> all_grad_ops() {
  return {GradOp::Affine, GradOp::Relu, GradOp::BatchNormTrain, GradOp::BatchNormEval,
          GradOp::Bilinear, GradOp::Concat, GradOp::SoftmaxCrossEntropy};
}

namespace {

double projected(const Matrix& out, const Matrix& r) { return sum(hadamard(out, r)); }

double max_error(const std::function<double(const std::vector<Matrix>&)>& f, const std::vector<Matrix>& inputs,
                 const std::vector<Matrix>& analytic, double step) {
  double worst = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    worst = std::max(worst, gradient_error(analytic[k], numeric_gradient(f, inputs, k, step)));
  }
  return worst;
}

}  // namespace

GradCheckResult grad_check(GradOp op, std::uint64_t seed, double step) {
  Rng rng(seed);
  auto dim = [&](std::size_t lo, std::size_t hi) { return lo + rng.below(hi - lo + 1); };
  GradCheckResult res{grad_op_name(op), 0.0};

  switch (op) {
    case GradOp::Affine: {
      const std::size_t n = dim(1, 5), in = dim(1, 5), out = dim(1, 5);
      std::vector<Matrix> x = {rng.normal_matrix(n, in), rng.normal_matrix(out, in), rng.normal_matrix(1, out)};
      const Matrix r = rng.normal_matrix(n, out);
      auto f = [&](const std::vector<Matrix>& a) { return projected(affine_forward(a[0], a[1], a[2]), r); };
      AffineGrads g = affine_backward(x[0], x[1], r);
      res.max_error = max_error(f, x, {g.dx, g.dw, g.db}, step);
      break;
    }
    case GradOp::Relu: {
      Matrix x = rng.normal_matrix(dim(1, 5), dim(1, 5));
      // Keep inputs away from the kink so central differences are valid.
      for (double& v : x.values())
        if (std::abs(v) < 1e-3) v = v < 0 ? -1e-3 : 1e-3;
      const Matrix r = rng.normal_matrix(x.rows(), x.cols());
      auto f = [&](const std::vector<Matrix>& a) { return projected(relu_forward(a[0]), r); };
      res.max_error = max_error(f, {x}, {relu_backward(x, r)}, step);
      break;
    }
    case GradOp::BatchNormTrain:
    case GradOp::BatchNormEval: {
      const Mode mode = op == GradOp::BatchNormTrain ? Mode::Train : Mode::Eval;
      const std::size_t n = mode == Mode::Train ? 8 : dim(1, 6), m = dim(1, 5);
      std::vector<Matrix> x = {rng.normal_matrix(n, m, 2.0), rng.uniform_matrix(1, m, 0.5, 1.5),
                               rng.normal_matrix(1, m)};
      BatchNormStats stats(m);
      stats.mean = rng.normal_matrix(1, m);
      stats.var = rng.uniform_matrix(1, m, 0.5, 2.0);
      const Matrix r = rng.normal_matrix(n, m);
      auto f = [&](const std::vector<Matrix>& a) {
        BatchNormStats scratch = stats;
        return projected(batchnorm_forward(a[0], a[1], a[2], scratch, mode), r);
      };
      BatchNormStats scratch = stats;
      BatchNormCache cache;
      batchnorm_forward(x[0], x[1], x[2], scratch, mode, &cache);
      BatchNormGrads g = batchnorm_backward(cache, x[1], r);
      res.max_error = max_error(f, x, {g.dx, g.dgamma, g.dbeta}, step);
      break;
    }
    case GradOp::Bilinear: {
      const std::size_t n = dim(1, 4), d = dim(1, 4), db = dim(1, 3);
      std::vector<Matrix> x = {rng.normal_matrix(n, d), rng.normal_matrix(n, d), rng.normal_matrix(db * d, d),
                               rng.normal_matrix(1, db)};
      const Matrix r = rng.normal_matrix(n, db);
      auto f = [&](const std::vector<Matrix>& a) { return projected(bilinear_forward(a[0], a[1], a[2], a[3]), r); };
      Matrix by;
      bilinear_forward(x[0], x[1], x[2], x[3], &by);
      BilinearGrads g = bilinear_backward(x[0], x[1], x[2], by, r);
      res.max_error = max_error(f, x, {g.dx, g.dy, g.dmetrics, g.dbias}, step);
      break;
    }
    case GradOp::Concat: {
      const std::size_t n = dim(1, 4), parts = dim(1, 4);
      std::vector<Matrix> x;
      std::vector<std::size_t> widths;
      for (std::size_t k = 0; k < parts; ++k) {
        widths.push_back(dim(1, 4));
        x.push_back(rng.normal_matrix(n, widths.back()));
      }
      std::size_t total = 0;
      for (auto w : widths) total += w;
      const Matrix r = rng.normal_matrix(n, total);
      auto f = [&](const std::vector<Matrix>& a) { return projected(concat_forward(a), r); };
      res.max_error = max_error(f, x, concat_backward(widths, r), step);
      break;
    }
    case GradOp::SoftmaxCrossEntropy: {
      const std::size_t n = dim(1, 5), c = dim(2, 5);
      Matrix z = rng.normal_matrix(n, c, 2.0);
      std::vector<int> labels(n);
      for (int& y : labels) y = static_cast<int>(rng.below(c));
      auto f = [&](const std::vector<Matrix>& a) { return softmax_cross_entropy(a[0], labels).loss; };
      res.max_error = max_error(f, {z}, {softmax_cross_entropy(z, labels).grad}, step);
      break;
    }
  }
  return res;
}

GradCheckResult end_to_end_grad_check(std::uint64_t seed, double step) {
  Rng rng(seed);
  ModelSpec spec;
  spec.num_views = 2;
  spec.num_classes = 2;
  spec.view_dims = {4, 5};
  spec.view_hidden = {4, 3};
  spec.d_B = 2;
  spec.head_hidden = {4};
  MvNNBiInModel model(spec, rng);
  // Nonzero biases and non-unit batch-norm scales exercise every term.
  for (Parameter* p : model.parameters())
    for (double& v : p->value.values()) v += 0.3 * rng.normal();

  const std::size_t batch = 4;
  std::vector<Matrix> views = {rng.normal_matrix(batch, 4), rng.normal_matrix(batch, 5)};
  std::vector<int> labels(batch);
  for (int& y : labels) y = static_cast<int>(rng.below(2));

  auto loss_of = [&](MvNNBiInModel& m, Tape& tape) {
    const std::vector<Tape::Id> logits = m.forward(tape, views, Mode::Train);
    std::vector<Tape::Id> ce;
    for (Tape::Id z : logits) ce.push_back(tape.cross_entropy(z, labels));
    const std::vector<double> ones(ce.size(), 1.0);
    return tape.weighted_sum(ce, ones);
  };

  model.zero_grad();
  {
    Tape tape;
    const Tape::Id root = loss_of(model, tape);
    tape.backward(root);
  }

  GradCheckResult res{"end_to_end", 0.0};
  for (Parameter* p : model.parameters()) {
    Matrix numeric(p->value.rows(), p->value.cols());
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double orig = p->value[i];
      auto eval = [&](double v) {
        p->value[i] = v;
        Tape tape;
        return tape.value(loss_of(model, tape))[0];
      };
      const double up = eval(orig + step);
      const double down = eval(orig - step);
      p->value[i] = orig;
      numeric[i] = (up - down) / (2.0 * step);
    }
    res.max_error = std::max(res.max_error, gradient_error(p->grad, numeric));
  }
  return res;
}

}  // namespace mvbi
