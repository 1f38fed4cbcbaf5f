#include "mvbi/trainer.hpp"

#include <chrono>
#include <cmath>

#include "mvbi/error.hpp"

namespace mvbi {

nlohmann::json to_json(const EpochReport& r) {
  return {{"epoch", r.epoch},
          {"view_losses", r.view_losses},
          {"fused_objective", r.fused_objective},
          {"alpha", r.alpha},
          {"val_top1", r.val_top1},
          {"val_top5", r.val_top5},
          {"wall_seconds", r.wall_seconds}};
}

Tape::Id fused_loss(Tape& tape, MvNNBiInModel& model, const MultiViewBatch& batch, const ViewWeights& w,
                    std::vector<Tape::Id>* view_loss_ids) {
  const std::vector<Tape::Id> logits = model.forward(tape, batch.views, Mode::Train);
  std::vector<Tape::Id> losses;
  std::vector<double> coeff;
  for (std::size_t v = 0; v < logits.size(); ++v) {
    losses.push_back(tape.cross_entropy(logits[v], batch.labels));
    coeff.push_back(w.alpha[v] == 0.0 ? 0.0 : std::pow(w.alpha[v], w.gamma));
  }
  if (view_loss_ids) *view_loss_ids = losses;
  return tape.weighted_sum(losses, coeff);
}

ViewWeights update_alpha(std::span<const double> losses, const TrainConfig& cfg) {
  const int M = static_cast<int>(losses.size());
  if (!cfg.adaptive_alpha) return ViewWeights::uniform(losses.size(), cfg.gamma, M);
  return solve_alpha(losses, cfg.gamma, cfg.sparsity(M));
}

EpochReport train_epoch(MvNNBiInModel& model, const MultiViewDataset& ds, ViewWeights& w, AdamState& opt,
                        Rng& rng, const TrainConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  const std::size_t M = model.num_views();
  std::vector<Parameter*> params = model.parameters();
  BatchIterator it(ds, Split::Train, static_cast<std::size_t>(cfg.batch_size), rng.next_u64());

  std::vector<double> loss_sum(M, 0.0);
  std::size_t seen = 0;
  MultiViewBatch batch;
  while (it.next(batch)) {
    Tape tape;
    std::vector<Tape::Id> view_ids;
    const Tape::Id loss = fused_loss(tape, model, batch, w, &view_ids);
    const double value = tape.value(loss)[0];
    if (!std::isfinite(value)) throw NumericError("non-finite training loss");
    model.zero_grad();
    tape.backward(loss);
    adam_step(params, opt);

    std::vector<double> batch_losses(M);
    for (std::size_t v = 0; v < M; ++v) {
      batch_losses[v] = tape.value(view_ids[v])[0];
      loss_sum[v] += batch_losses[v] * static_cast<double>(batch.size());
    }
    seen += batch.size();
    if (cfg.alpha_schedule == AlphaSchedule::Batch) w = update_alpha(batch_losses, cfg);
  }
  if (seen == 0) throw DataError("train split yields no batch of at least two samples");

  EpochReport rep;
  for (double s : loss_sum) rep.view_losses.push_back(s / static_cast<double>(seen));
  rep.fused_objective = fused_objective(rep.view_losses, w);
  rep.alpha = w.alpha;
  rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rep;
}

namespace {

template <class Fn>
void for_each_chunk(const MultiViewDataset& ds, Split split, Fn&& fn) {
  const std::vector<std::size_t> idx = ds.indices(split);
  if (idx.empty()) throw DataError("split '" + to_string(split) + "' is empty");
  constexpr std::size_t kChunk = 512;
  for (std::size_t first = 0; first < idx.size(); first += kChunk) {
    const std::size_t last = std::min(idx.size(), first + kChunk);
    std::vector<std::size_t> rows(idx.begin() + static_cast<std::ptrdiff_t>(first),
                                  idx.begin() + static_cast<std::ptrdiff_t>(last));
    fn(make_batch(ds, rows));
  }
}

}  // namespace

TopK evaluate(MvNNBiInModel& model, const ViewWeights& w, const MultiViewDataset& ds, Split split,
              PredictWeighting weighting) {
  const std::size_t C = model.spec().num_classes;
  TopK res;
  res.k = std::min<std::size_t>(5, C);
  std::size_t n = 0, hit1 = 0, hitk = 0;
  for_each_chunk(ds, split, [&](const MultiViewBatch& b) {
    const std::vector<Matrix> logits = model.logits(b.views, Mode::Eval);
    const Prediction pred = predict(logits, w, weighting);
    for (std::size_t i = 0; i < b.size(); ++i) {
      const auto y = static_cast<std::size_t>(b.labels[i]);
      if (pred.labels[i] == b.labels[i]) ++hit1;
      // Rank of the true class; equal scores rank the lower index first.
      const double sy = pred.scores(i, y);
      std::size_t ahead = 0;
      for (std::size_t c = 0; c < C; ++c) {
        const double sc = pred.scores(i, c);
        if (sc > sy || (sc == sy && c < y)) ++ahead;
      }
      if (ahead < res.k) ++hitk;
    }
    n += b.size();
  });
  res.top1 = static_cast<double>(hit1) / static_cast<double>(n);
  res.topk = static_cast<double>(hitk) / static_cast<double>(n);
  return res;
}

std::vector<double> split_view_losses(MvNNBiInModel& model, const MultiViewDataset& ds, Split split) {
  std::vector<double> total(model.num_views(), 0.0);
  std::size_t n = 0;
  for_each_chunk(ds, split, [&](const MultiViewBatch& b) {
    const std::vector<double> l = per_view_losses(model.logits(b.views, Mode::Eval), b.labels);
    for (std::size_t v = 0; v < l.size(); ++v) total[v] += l[v] * static_cast<double>(b.size());
    n += b.size();
  });
  for (double& t : total) t /= static_cast<double>(n);
  return total;
}

std::optional<Standardizer> prepare_dataset(MultiViewDataset& ds, const TrainConfig& cfg) {
  if (ds.split.empty()) split_dataset(ds, cfg.split_ratios, cfg.seed);
  ds.validate();
  if (!cfg.standardize) return std::nullopt;
  return standardize_fit_apply(ds);
}

FitResult fit(const TrainConfig& cfg, const MultiViewDataset& ds) {
  const int M = static_cast<int>(ds.num_views());
  cfg.validate_for(M);
  if (ds.split.empty()) throw DataError("fit: dataset has no split assignment");
  ds.validate();

  Rng root(cfg.seed);
  Rng init_rng = root.split();
  Rng shuffle_rng = root.split();

  MvNNBiInModel model(make_spec(cfg, ds.view_dims(), static_cast<std::size_t>(ds.num_classes)), init_rng);
  ViewWeights w = ViewWeights::uniform(ds.num_views(), cfg.gamma, cfg.sparsity(M));
  std::vector<Parameter*> params = model.parameters();
  AdamState opt = make_adam(params, cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps);

  FitResult res{model, w, {}, 0, false, {}};
  double best_top1 = -1.0;
  int since_best = 0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    EpochReport rep;
    try {
      rep = train_epoch(model, ds, w, opt, shuffle_rng, cfg);
    } catch (const NumericError& e) {
      res.aborted = true;
      res.error = "epoch " + std::to_string(epoch) + ": " + e.what();
      break;
    }
    const auto t0 = std::chrono::steady_clock::now();
    if (cfg.alpha_schedule == AlphaSchedule::Epoch && epoch % cfg.alpha_update_period == 0) {
      w = update_alpha(rep.view_losses, cfg);
    }
    rep.epoch = epoch;
    rep.alpha = w.alpha;
    rep.fused_objective = fused_objective(rep.view_losses, w);
    const TopK val = evaluate(model, w, ds, Split::Val, cfg.predict_weighting);
    rep.val_top1 = val.top1;
    rep.val_top5 = val.topk;
    rep.wall_seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    res.history.push_back(rep);

    if (val.top1 > best_top1) {
      best_top1 = val.top1;
      res.model = model;
      res.weights = w;
      res.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }
  return res;
}

}  // namespace mvbi
