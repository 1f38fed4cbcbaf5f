#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mvbi/data.hpp"
#include "mvbi/matrix.hpp"
#include "mvbi/trainer.hpp"

namespace mvbi {

// ---- CCA -------------------------------------------------------------------

struct CcaSolution {
  Matrix w1;                        // d1×r
  Matrix w2;                        // d2×r
  std::vector<double> correlations;  // descending
};

/// Two-view CCA via the SVD of the whitened cross-covariance
/// (S11+ρ1 I)^{-1/2} S12 (S22+ρ2 I)^{-1/2}, where S are scatter matrices of
/// the centered data and each ρ = ridge_scale · trace(S)/dim. With
/// ridge_scale = 0 the columns satisfy wᵀ S w = I exactly; a rank-deficient
/// view then throws NumericError.
CcaSolution cca_fit(const Matrix& x1, const Matrix& x2, std::size_t r, double ridge_scale = 1e-4);

/// Scatter XcᵀXc of the column-centered data.
Matrix centered_scatter(const Matrix& x);
/// Cross scatter X1cᵀX2c.
Matrix centered_cross_scatter(const Matrix& x1, const Matrix& x2);

// ---- MvDA ------------------------------------------------------------------

/// Samples of one view with their class labels; views need not be aligned.
struct LabeledView {
  Matrix x;
  std::vector<int> labels;
};

struct MvdaSolution {
  std::vector<Matrix> w;  // per view d_v×r
  double objective = 0.0;  // Tr(S_B^y)/Tr(S_W^y)
  std::vector<double> eigenvalues;
};

/// Within/between scatter of all views lifted into the stacked
/// (Σ d_v)-dimensional space, where view v occupies its own block.
struct JointScatter {
  Matrix within;
  Matrix between;
  std::vector<std::size_t> offsets;  // block start of each view
};

JointScatter mvda_scatter(std::span<const LabeledView> views, int num_classes);

/// Trace ratio of the stacked projection `w` ((Σ d_v)×r).
double mvda_objective(const JointScatter& s, const Matrix& w);

/// Ratio-trace relaxation: top-r solutions of S_B u = λ (S_W + ρI) u with
/// ρ = ridge_scale · trace(S_W)/dim, u normalized so uᵀ(S_W+ρI)u = 1.
MvdaSolution mvda_fit(std::span<const LabeledView> views, int num_classes, std::size_t r,
                      double ridge_scale = 1e-6);

/// Aligned dataset convenience (uses the train split when assigned).
MvdaSolution mvda_fit(const MultiViewDataset& ds, std::size_t r, double ridge_scale = 1e-6);

// ---- concatenation + softmax regression -------------------------------------

struct ConcatSoftmaxConfig {
  int epochs = 50;
  double lr = 1e-2;
  int batch_size = 64;
  std::uint64_t seed = 0;
};

struct ConcatSoftmaxResult {
  Matrix weight;  // C×Σd_v
  Matrix bias;    // 1×C
  TopK test;
};

/// Multinomial logistic regression on the concatenated views, trained with
/// Adam on the train split and scored on the test split.
ConcatSoftmaxResult concat_softmax_fit(const MultiViewDataset& ds, const ConcatSoftmaxConfig& cfg);

}  // namespace mvbi
