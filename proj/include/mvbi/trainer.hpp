#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mvbi/adam.hpp"
#include "mvbi/config.hpp"
#include "mvbi/data.hpp"
#include "mvbi/fusion.hpp"
#include "mvbi/model.hpp"

namespace mvbi {

struct TopK {
  double top1 = 0.0;
  double topk = 0.0;
  std::size_t k = 0;
};

struct EpochReport {
  int epoch = 0;
  /// Epoch-mean training cross entropy of each view.
  std::vector<double> view_losses;
  /// Σ α^γ L under the α produced at the end of this epoch.
  double fused_objective = 0.0;
  std::vector<double> alpha;
  double val_top1 = 0.0;
  double val_top5 = 0.0;
  double wall_seconds = 0.0;
};

nlohmann::json to_json(const EpochReport& r);

/// Training loss of one batch: Σ_v α_v^γ · CE(z^v, y), built on `tape`.
/// Returns the loss node; `view_loss_ids` receives each view's CE node.
Tape::Id fused_loss(Tape& tape, MvNNBiInModel& model, const MultiViewBatch& batch,
                    const ViewWeights& w, std::vector<Tape::Id>* view_loss_ids = nullptr);

/// α from a loss vector: sort, then the sparse closed form. When adaptive
/// weighting is disabled the weights stay uniform over all views.
ViewWeights update_alpha(std::span<const double> losses, const TrainConfig& cfg);

/// One pass over the train split with α held fixed (unless the per-batch
/// schedule is selected). Throws NumericError on a non-finite loss.
EpochReport train_epoch(MvNNBiInModel& model, const MultiViewDataset& ds, ViewWeights& w,
                        AdamState& opt, Rng& rng, const TrainConfig& cfg);

/// Top@1 and Top@k (k = min(5, C)) of the α-combined prediction, eval mode.
TopK evaluate(MvNNBiInModel& model, const ViewWeights& w, const MultiViewDataset& ds, Split split,
              PredictWeighting weighting = PredictWeighting::Alpha);

/// Mean cross entropy per view over a split, eval mode.
std::vector<double> split_view_losses(MvNNBiInModel& model, const MultiViewDataset& ds, Split split);

struct FitResult {
  MvNNBiInModel model;  // best validation Top@1
  ViewWeights weights;  // α stored with the best model
  std::vector<EpochReport> history;
  int best_epoch = 0;   // 0: the initial model
  bool aborted = false;
  std::string error;
};

/// Assigns a split if none is present and standardizes when configured.
std::optional<Standardizer> prepare_dataset(MultiViewDataset& ds, const TrainConfig& cfg);

/// Alternating optimization: Adam epochs under fixed α, closed-form α
/// update, validation, early stopping. Requires a split dataset.
FitResult fit(const TrainConfig& cfg, const MultiViewDataset& ds);

}  // namespace mvbi
