#include "mvbi/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Dense>

#include "mvbi/adam.hpp"
#include "mvbi/error.hpp"
#include "mvbi/ops.hpp"

namespace mvbi {

namespace {

using EMat = Eigen::MatrixXd;

EMat to_eigen(const Matrix& m) {
  EMat e(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) e(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = m(i, j);
  return e;
}

Matrix from_eigen(const EMat& e) {
  Matrix m(static_cast<std::size_t>(e.rows()), static_cast<std::size_t>(e.cols()));
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) m(i, j) = e(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  return m;
}

Matrix center_columns(const Matrix& x) {
  Matrix c = x;
  const Matrix mean = column_sums(x) * (1.0 / static_cast<double>(x.rows()));
  for (std::size_t i = 0; i < c.rows(); ++i)
    for (std::size_t j = 0; j < c.cols(); ++j) c(i, j) -= mean[j];
  return c;
}

double ridge_for(const EMat& s, double scale) {
  return scale * s.trace() / static_cast<double>(s.rows());
}

/// (S + ridge·I)^{-1/2}; throws on a (numerically) singular matrix.
EMat inverse_sqrt(const EMat& s, double ridge, const char* which) {
  EMat reg = s;
  reg.diagonal().array() += ridge;
  Eigen::SelfAdjointEigenSolver<EMat> es(reg);
  const Eigen::VectorXd& ev = es.eigenvalues();
  const double tol = 1e-12 * std::max(1.0, ev.cwiseAbs().maxCoeff());
  if (ev.minCoeff() <= tol) {
    throw NumericError(std::string("CCA: scatter of ") + which +
                       " is rank deficient; use a positive ridge");
  }
  return es.eigenvectors() * ev.cwiseInverse().cwiseSqrt().asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

Matrix centered_scatter(const Matrix& x) {
  const Matrix c = center_columns(x);
  return matmul_tn(c, c);
}

Matrix centered_cross_scatter(const Matrix& x1, const Matrix& x2) {
  return matmul_tn(center_columns(x1), center_columns(x2));
}

CcaSolution cca_fit(const Matrix& x1, const Matrix& x2, std::size_t r, double ridge_scale) {
  if (x1.rows() != x2.rows())
    throw DimensionError("CCA: views have " + std::to_string(x1.rows()) + " and " + std::to_string(x2.rows()) + " rows");
  if (x1.rows() < 2) throw DimensionError("CCA: need at least two samples");
  if (r == 0 || r > std::min(x1.cols(), x2.cols()))
    throw ConfigError("CCA: r must lie in [1, min(d1,d2)]");
  if (ridge_scale < 0.0) throw ConfigError("CCA: ridge must be nonnegative");

  const EMat s11 = to_eigen(centered_scatter(x1));
  const EMat s22 = to_eigen(centered_scatter(x2));
  const EMat s12 = to_eigen(centered_cross_scatter(x1, x2));
  const EMat k1 = inverse_sqrt(s11, ridge_for(s11, ridge_scale), "view 1");
  const EMat k2 = inverse_sqrt(s22, ridge_for(s22, ridge_scale), "view 2");
  const EMat t = k1 * s12 * k2;

  Eigen::JacobiSVD<EMat> svd(t, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto rr = static_cast<Eigen::Index>(r);
  CcaSolution sol;
  sol.w1 = from_eigen(k1 * svd.matrixU().leftCols(rr));
  sol.w2 = from_eigen(k2 * svd.matrixV().leftCols(rr));
  for (Eigen::Index i = 0; i < rr; ++i) sol.correlations.push_back(svd.singularValues()(i));
  return sol;
}

JointScatter mvda_scatter(std::span<const LabeledView> views, int num_classes) {
  if (views.empty()) throw DimensionError("MvDA: no views");
  if (num_classes < 2) throw DataError("MvDA: need at least two classes");
  const auto C = static_cast<std::size_t>(num_classes);
  JointScatter js;
  std::size_t D = 0;
  for (const auto& v : views) {
    if (v.x.rows() != v.labels.size()) throw DimensionError("MvDA: label count does not match rows");
    js.offsets.push_back(D);
    D += v.x.cols();
  }

  // Class sums and counts in the lifted space.
  Matrix class_sum(C, D);
  std::vector<double> n_k(C, 0.0);
  std::vector<std::vector<std::size_t>> per_view_count(views.size(), std::vector<std::size_t>(C, 0));
  for (std::size_t v = 0; v < views.size(); ++v) {
    const auto& lv = views[v];
    for (std::size_t i = 0; i < lv.x.rows(); ++i) {
      const int y = lv.labels[i];
      if (y < 0 || y >= num_classes) throw DataError("MvDA: label out of range");
      const auto k = static_cast<std::size_t>(y);
      for (std::size_t j = 0; j < lv.x.cols(); ++j) class_sum(k, js.offsets[v] + j) += lv.x(i, j);
      n_k[k] += 1.0;
      ++per_view_count[v][k];
    }
  }
  std::size_t present = 0;
  for (std::size_t v = 0; v < views.size(); ++v)
    for (std::size_t k = 0; k < C; ++k)
      if (per_view_count[v][k] == 1) throw DataError("MvDA: class " + std::to_string(k) + " has a single sample in view " + std::to_string(v));
  for (std::size_t k = 0; k < C; ++k) present += n_k[k] > 0 ? 1 : 0;
  if (present < 2) throw DataError("MvDA: need samples from at least two classes");

  const double N = std::accumulate(n_k.begin(), n_k.end(), 0.0);
  Matrix mu_k(C, D), mu(1, D);
  for (std::size_t k = 0; k < C; ++k)
    for (std::size_t j = 0; j < D; ++j) {
      if (n_k[k] > 0) mu_k(k, j) = class_sum(k, j) / n_k[k];
      mu[j] += class_sum(k, j) / N;
    }

  js.within = Matrix(D, D);
  for (std::size_t v = 0; v < views.size(); ++v) {
    const auto& lv = views[v];
    std::vector<double> diff(D);
    for (std::size_t i = 0; i < lv.x.rows(); ++i) {
      const auto k = static_cast<std::size_t>(lv.labels[i]);
      for (std::size_t j = 0; j < D; ++j) diff[j] = -mu_k(k, j);
      for (std::size_t j = 0; j < lv.x.cols(); ++j) diff[js.offsets[v] + j] += lv.x(i, j);
      for (std::size_t a = 0; a < D; ++a) {
        if (diff[a] == 0.0) continue;
        for (std::size_t b = 0; b < D; ++b) js.within(a, b) += diff[a] * diff[b];
      }
    }
  }
  js.between = Matrix(D, D);
  for (std::size_t k = 0; k < C; ++k) {
    if (n_k[k] == 0) continue;
    for (std::size_t a = 0; a < D; ++a)
      for (std::size_t b = 0; b < D; ++b)
        js.between(a, b) += n_k[k] * (mu_k(k, a) - mu[a]) * (mu_k(k, b) - mu[b]);
  }
  return js;
}

double mvda_objective(const JointScatter& s, const Matrix& w) {
  const double num = sum(hadamard(w, matmul(s.between, w)));
  const double den = sum(hadamard(w, matmul(s.within, w)));
  if (!(den > 0.0)) throw NumericError("MvDA: projected within-class scatter vanishes");
  return num / den;
}

MvdaSolution mvda_fit(std::span<const LabeledView> views, int num_classes, std::size_t r, double ridge_scale) {
  const JointScatter js = mvda_scatter(views, num_classes);
  const std::size_t D = js.within.rows();
  if (r == 0 || r > D) throw ConfigError("MvDA: r must lie in [1, total dimension]");
  if (ridge_scale < 0.0) throw ConfigError("MvDA: ridge must be nonnegative");

  EMat sw = to_eigen(js.within);
  const EMat sb = to_eigen(js.between);
  sw.diagonal().array() += ridge_for(sw, ridge_scale);
  Eigen::LLT<EMat> llt(sw);
  if (llt.info() != Eigen::Success) {
    throw NumericError("MvDA: within-class scatter is singular; use a positive ridge");
  }
  Eigen::GeneralizedSelfAdjointEigenSolver<EMat> ges(sb, sw);
  if (ges.info() != Eigen::Success) throw NumericError("MvDA: generalized eigensolve failed");

  // Eigenvalues come ascending; take the top r.
  const auto Dn = static_cast<Eigen::Index>(D);
  const auto rr = static_cast<Eigen::Index>(r);
  EMat top = ges.eigenvectors().rightCols(rr).rowwise().reverse();
  MvdaSolution sol;
  for (Eigen::Index i = 0; i < rr; ++i) sol.eigenvalues.push_back(ges.eigenvalues()(Dn - 1 - i));
  const Matrix stacked = from_eigen(top);
  for (std::size_t v = 0; v < views.size(); ++v) {
    sol.w.push_back(slice_rows(stacked, js.offsets[v], views[v].x.cols()));
  }
  sol.objective = mvda_objective(js, stacked);
  return sol;
}

MvdaSolution mvda_fit(const MultiViewDataset& ds, std::size_t r, double ridge_scale) {
  std::vector<std::size_t> rows = ds.indices(Split::Train);
  if (ds.split.empty()) {
    rows.resize(ds.num_samples());
    std::iota(rows.begin(), rows.end(), std::size_t{0});
  }
  std::vector<LabeledView> views;
  std::vector<int> labels;
  for (std::size_t r_ : rows) labels.push_back(ds.labels[r_]);
  for (const auto& x : ds.views) views.push_back({gather_rows(x, rows), labels});
  return mvda_fit(views, ds.num_classes, r, ridge_scale);
}

ConcatSoftmaxResult concat_softmax_fit(const MultiViewDataset& ds, const ConcatSoftmaxConfig& cfg) {
  if (cfg.batch_size < 1 || cfg.epochs < 0) throw ConfigError("concat baseline: invalid batch size or epochs");
  const Matrix all = concat_forward(ds.views);
  const std::size_t D = all.cols();
  const auto C = static_cast<std::size_t>(ds.num_classes);
  std::vector<std::size_t> train = ds.indices(Split::Train);
  const std::vector<std::size_t> test = ds.indices(Split::Test);
  if (train.empty() || test.empty()) throw DataError("concat baseline: needs train and test splits");

  Rng rng(cfg.seed);
  Parameter w("concat.weight", rng.uniform_matrix(C, D, -glorot_bound(D, C), glorot_bound(D, C)));
  Parameter b("concat.bias", Matrix(1, C));
  std::vector<Parameter*> params{&w, &b};
  AdamState opt = make_adam(params, cfg.lr, 0.9, 0.999, 1e-8);

  const auto bs = static_cast<std::size_t>(cfg.batch_size);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(train);
    for (std::size_t first = 0; first < train.size(); first += bs) {
      const std::size_t last = std::min(train.size(), first + bs);
      std::vector<std::size_t> rows(train.begin() + static_cast<std::ptrdiff_t>(first),
                                    train.begin() + static_cast<std::ptrdiff_t>(last));
      const Matrix x = gather_rows(all, rows);
      std::vector<int> y;
      for (std::size_t r : rows) y.push_back(ds.labels[r]);
      const CrossEntropyResult ce = softmax_cross_entropy(affine_forward(x, w.value, b.value), y);
      AffineGrads g = affine_backward(x, w.value, ce.grad);
      w.grad = std::move(g.dw);
      b.grad = std::move(g.db);
      adam_step(params, opt);
    }
  }

  ConcatSoftmaxResult res{w.value, b.value, {}};
  const Matrix scores = affine_forward(gather_rows(all, test), w.value, b.value);
  res.test.k = std::min<std::size_t>(5, C);
  std::size_t hit1 = 0, hitk = 0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const auto y = static_cast<std::size_t>(ds.labels[test[i]]);
    std::size_t ahead = 0;
    for (std::size_t c = 0; c < C; ++c)
      if (scores(i, c) > scores(i, y) || (scores(i, c) == scores(i, y) && c < y)) ++ahead;
    hit1 += ahead == 0 ? 1 : 0;
    hitk += ahead < res.test.k ? 1 : 0;
  }
  res.test.top1 = static_cast<double>(hit1) / static_cast<double>(test.size());
  res.test.topk = static_cast<double>(hitk) / static_cast<double>(test.size());
  return res;
}

}  // namespace mvbi
