#include "mvbi/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "mvbi/error.hpp"
#include "mvbi/ops.hpp"

namespace mvbi {

std::size_t ViewWeights::support_size() const {
  return static_cast<std::size_t>(std::count_if(alpha.begin(), alpha.end(), [](double a) { return a != 0.0; }));
}

ViewWeights ViewWeights::uniform(std::size_t num_views, double gamma, int s) {
  return ViewWeights{std::vector<double>(num_views, 1.0 / static_cast<double>(num_views)), gamma, s};
}

std::vector<double> per_view_losses(std::span<const Matrix> logits, std::span<const int> labels) {
  std::vector<double> out;
  for (std::size_t v = 0; v < logits.size(); ++v) {
    if (v > 0 && (logits[v].rows() != logits[0].rows() || logits[v].cols() != logits[0].cols())) {
      throw DimensionError("per-view losses: view " + std::to_string(v) + " logits " + logits[v].shape_str() +
                           " differ from " + logits[0].shape_str());
    }
    out.push_back(softmax_cross_entropy(logits[v], labels).loss);
  }
  return out;
}

LossVector sort_losses(std::span<const double> losses) {
  for (std::size_t v = 0; v < losses.size(); ++v) {
    if (std::isnan(losses[v])) throw NumericError("loss of view " + std::to_string(v) + " is NaN");
  }
  LossVector lv{std::vector<double>(losses.begin(), losses.end()), std::vector<std::size_t>(losses.size())};
  std::iota(lv.order.begin(), lv.order.end(), std::size_t{0});
  std::stable_sort(lv.order.begin(), lv.order.end(),
                   [&](std::size_t a, std::size_t b) { return lv.losses[a] < lv.losses[b]; });
  return lv;
}

ViewWeights solve_alpha(std::span<const double> losses, double gamma, int s) {
  const std::size_t M = losses.size();
  if (!(gamma > 1.0) || !std::isfinite(gamma))
    throw ConfigError("gamma must be > 1, got " + std::to_string(gamma));
  if (s < 1 || static_cast<std::size_t>(s) > M)
    throw ConfigError("s=" + std::to_string(s) + " outside [1," + std::to_string(M) + "]");
  for (std::size_t v = 0; v < M; ++v) {
    if (!std::isfinite(losses[v])) throw NumericError("loss of view " + std::to_string(v) + " is not finite");
    if (losses[v] < 0.0) throw NumericError("loss of view " + std::to_string(v) + " is negative");
  }
  const LossVector sorted = sort_losses(losses);
  const auto k = static_cast<std::size_t>(s);

  // (L/L_min)^{1/(1−γ)}: the largest term is exactly 1, so γ close to 1
  // cannot overflow, and the ratio makes the weights scale-invariant.
  const double expo = 1.0 / (1.0 - gamma);
  const double l_min = std::max(sorted.losses[sorted.order[0]], kLossFloor);
  std::vector<double> terms(k);
  double total = 0.0;
  for (std::size_t j = 0; j < k; ++j) {
    const double l = std::max(sorted.losses[sorted.order[j]], kLossFloor);
    // Clamped above zero: a selected view keeps a (tiny) nonzero weight.
    terms[j] = std::max(std::pow(l / l_min, expo), std::numeric_limits<double>::min());
    total += terms[j];
  }
  ViewWeights w{std::vector<double>(M, 0.0), gamma, s};
  for (std::size_t j = 0; j < k; ++j) w.alpha[sorted.order[j]] = terms[j] / total;
  return w;
}

double fused_objective(std::span<const double> losses, const ViewWeights& w) {
  if (losses.size() != w.alpha.size()) throw DimensionError("fused objective: loss/weight count mismatch");
  double acc = 0.0;
  for (std::size_t v = 0; v < losses.size(); ++v) {
    if (w.alpha[v] != 0.0) acc += std::pow(w.alpha[v], w.gamma) * losses[v];
  }
  return acc;
}

Prediction predict(std::span<const Matrix> logits, const ViewWeights& w, PredictWeighting weighting) {
  if (logits.size() != w.alpha.size()) {
    throw DimensionError("predict: " + std::to_string(logits.size()) + " logit sets for " +
                         std::to_string(w.alpha.size()) + " weights");
  }
  if (logits.empty()) throw DimensionError("predict: no views");
  Prediction p{{}, Matrix(logits[0].rows(), logits[0].cols())};
  for (std::size_t v = 0; v < logits.size(); ++v) {
    require_same_shape(logits[v], logits[0], "predict logits");
    const double a = weighting == PredictWeighting::Alpha ? w.alpha[v] : std::pow(w.alpha[v], w.gamma);
    if (a == 0.0) continue;
    const Matrix probs = softmax_rows(logits[v]);
    for (std::size_t i = 0; i < probs.size(); ++i) p.scores[i] += a * probs[i];
  }
  p.labels.resize(p.scores.rows());
  for (std::size_t i = 0; i < p.scores.rows(); ++i) {
    auto r = p.scores.row(i);
    p.labels[i] = static_cast<int>(std::max_element(r.begin(), r.end()) - r.begin());
  }
  return p;
}

}  // namespace mvbi
