#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mvbi/config.hpp"
#include "mvbi/matrix.hpp"

namespace mvbi {

/// Sparse simplex weights α with their exponent γ and support size s.
struct ViewWeights {
  std::vector<double> alpha;
  double gamma = 2.0;
  int s = 1;

  std::size_t num_views() const { return alpha.size(); }
  std::size_t support_size() const;
  /// Uniform 1/M over every view (the state before the first α update).
  static ViewWeights uniform(std::size_t num_views, double gamma, int s);
};

/// Per-view losses and the ascending permutation that sorts them.
struct LossVector {
  std::vector<double> losses;
  std::vector<std::size_t> order;  // order[k] = view with the k-th smallest loss
};

/// Losses below this are raised to it before the negative power.
inline constexpr double kLossFloor = 1e-12;

/// Batch-mean cross entropy of every view's logits.
std::vector<double> per_view_losses(std::span<const Matrix> logits, std::span<const int> labels);

/// Stable ascending sort; ties keep the lower view index first. NaN throws.
LossVector sort_losses(std::span<const double> losses);

/// Minimizer of Σ α_v^γ L_v over the simplex with exactly s nonzeros:
/// the s smallest losses get weight ∝ L^{1/(1−γ)}, the rest get zero.
ViewWeights solve_alpha(std::span<const double> losses, double gamma, int s);

/// Σ α_v^γ L_v.
double fused_objective(std::span<const double> losses, const ViewWeights& w);

struct Prediction {
  std::vector<int> labels;
  Matrix scores;  // batch×C, Σ_v weight_v · softmax(z^v)
};

/// Combines per-view class probabilities with α (or α^γ) and takes the
/// row-wise argmax, lowest class index on ties.
Prediction predict(std::span<const Matrix> logits, const ViewWeights& w,
                   PredictWeighting weighting = PredictWeighting::Alpha);

}  // namespace mvbi
