#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include <gtest/gtest.h>

#include "mvbi/adam.hpp"
#include "mvbi/checkpoint.hpp"
#include "mvbi/error.hpp"
#include "mvbi/trainer.hpp"

using namespace mvbi;
namespace fs = std::filesystem;

namespace {

TrainConfig tiny_config() {
  TrainConfig cfg;
  cfg.view_hidden = {12, 8};
  cfg.d_B = 4;
  cfg.head_hidden = {12};
  cfg.batch_size = 32;
  cfg.lr = 1e-2;
  cfg.gamma = 2.0;
  cfg.epochs = 3;
  return cfg;
}

MultiViewDataset tiny_data(std::uint64_t seed = 1, int n = 240, std::vector<int> noise = {}) {
  SynthSpec s;
  s.num_views = 3;
  s.num_classes = 3;
  s.num_samples = n;
  s.view_dims = {5, 4, 6};
  s.noise_views = std::move(noise);
  s.seed = seed;
  MultiViewDataset ds = synth_generate(s);
  prepare_dataset(ds, tiny_config());
  return ds;
}

bool all_zero(const Matrix& m) { return max_abs(m) == 0.0; }

}  // namespace

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  Parameter p("p", {{1.0, -2.0}});
  std::vector<Parameter*> ps{&p};
  AdamState st = make_adam(ps, 1e-3, 0.5, 0.9, 1e-8);
  for (int k = 0; k < 5; ++k) adam_step(ps, st);
  EXPECT_EQ(p.value, (Matrix{{1.0, -2.0}}));
  EXPECT_EQ(st.t, 5u);
}

TEST(Adam, ConstantGradientStepsByLearningRate) {
  Parameter p("p", {{0.0, 0.0}});
  std::vector<Parameter*> ps{&p};
  AdamState st = make_adam(ps, 1e-3, 0.5, 0.9, 1e-8);
  for (int k = 0; k < 50; ++k) {
    const Matrix before = p.value;
    p.grad = Matrix{{3.0, -0.25}};
    adam_step(ps, st);
    // Bias-corrected moments are exactly g and g², so Δ = lr·g/(|g|+ε).
    EXPECT_NEAR(p.value[0] - before[0], -1e-3 * 3.0 / (3.0 + 1e-8), 1e-15);
    EXPECT_NEAR(p.value[1] - before[1], 1e-3 * 0.25 / (0.25 + 1e-8), 1e-15);
  }
}

TEST(Adam, MatchesHandComputedTwoSteps) {
  Parameter p("p", {{1.0}});
  std::vector<Parameter*> ps{&p};
  AdamState st = make_adam(ps, 0.1, 0.5, 0.9, 1e-8);
  p.grad = Matrix{{2.0}};
  adam_step(ps, st);
  p.grad = Matrix{{-1.0}};
  adam_step(ps, st);
  double m = 0, v = 0, x = 1.0;
  for (int t = 1; t <= 2; ++t) {
    const double g = t == 1 ? 2.0 : -1.0;
    m = 0.5 * m + 0.5 * g;
    v = 0.9 * v + 0.1 * g * g;
    x -= 0.1 * (m / (1 - std::pow(0.5, t))) / (std::sqrt(v / (1 - std::pow(0.9, t))) + 1e-8);
  }
  EXPECT_NEAR(p.value[0], x, 1e-15);
}

TEST(Adam, NanGradientNamesParameter) {
  Parameter a("alpha_weight", {{1.0}}), b("head.layer0.weight", {{1.0}});
  std::vector<Parameter*> ps{&a, &b};
  AdamState st = make_adam(ps, 1e-3, 0.5, 0.9, 1e-8);
  b.grad = Matrix{{std::nan("")}};
  try {
    adam_step(ps, st);
    FAIL();
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("head.layer0.weight"), std::string::npos);
  }
  EXPECT_EQ(a.value[0], 1.0);
}

TEST(UpdateAlpha, Examples) {
  TrainConfig cfg;
  cfg.gamma = 3.0;
  cfg.s = 2;
  const ViewWeights eq = update_alpha(std::vector<double>{0.5, 0.5, 0.5}, cfg);
  EXPECT_EQ(eq.alpha, (std::vector<double>{0.5, 0.5, 0.0}));
  const std::vector<double> dec{0.9, 0.6, 0.3};
  const ViewWeights d = update_alpha(dec, cfg);
  EXPECT_EQ(d.alpha[0], 0.0);
  EXPECT_EQ(d.alpha, solve_alpha(dec, 3.0, 2).alpha);
  cfg.adaptive_alpha = false;
  for (double a : update_alpha(dec, cfg).alpha) EXPECT_DOUBLE_EQ(a, 1.0 / 3.0);
}

TEST(UpdateAlpha, NeverIncreasesObjective) {
  Rng rng(3);
  TrainConfig cfg;
  for (int t = 0; t < 200; ++t) {
    const std::size_t M = 2 + rng.below(5);
    std::vector<double> L(M);
    for (double& l : L) l = rng.uniform(0.01, 2.0);
    cfg.gamma = rng.uniform(1.1, 8.0);
    cfg.s = 1 + static_cast<int>(rng.below(M));
    // Any valid previous α with the same support size.
    ViewWeights prev = ViewWeights::uniform(M, cfg.gamma, *cfg.s);
    std::vector<std::size_t> idx(M);
    std::iota(idx.begin(), idx.end(), 0);
    rng.shuffle(idx);
    std::fill(prev.alpha.begin(), prev.alpha.end(), 0.0);
    double z = 0;
    for (int k = 0; k < *cfg.s; ++k) z += prev.alpha[idx[k]] = rng.uniform(0.01, 1.0);
    for (double& a : prev.alpha) a /= z;
    EXPECT_LE(fused_objective(L, update_alpha(L, cfg)), fused_objective(L, prev) + 1e-12);
  }
}

TEST(TrainEpoch, OnehotAlphaRoutesGradient) {
  MultiViewDataset ds = tiny_data();
  TrainConfig cfg = tiny_config();
  Rng rng(2);
  MvNNBiInModel model(make_spec(cfg, ds.view_dims(), 3), rng);
  const ViewWeights w{{1.0, 0.0, 0.0}, 2.0, 1};
  MultiViewBatch batch = make_batch(ds, {0, 1, 2, 3, 4, 5, 6, 7});
  Tape tape;
  model.zero_grad();
  tape.backward(fused_loss(tape, model, batch, w));
  for (Parameter* p : model.parameters()) {
    const std::string& n = p->name;
    if (n.rfind("pair1_2.", 0) == 0) {
      EXPECT_TRUE(all_zero(p->grad)) << n;
    } else if (n.find(".weight") != std::string::npos || n.find(".metrics") != std::string::npos) {
      // View 0's branch, the head, and the partners through pairs (0,1), (0,2).
      EXPECT_FALSE(all_zero(p->grad)) << n;
    }
  }
}

TEST(TrainEpoch, UnsupportedViewsWithoutInteractionsGetNoGradient) {
  MultiViewDataset ds = tiny_data();
  TrainConfig cfg = tiny_config();
  cfg.use_bilinear = false;
  Rng rng(2);
  MvNNBiInModel model(make_spec(cfg, ds.view_dims(), 3), rng);
  const ViewWeights w{{0.0, 0.7, 0.3}, 2.0, 2};
  MultiViewBatch batch = make_batch(ds, {0, 1, 2, 3, 4, 5});
  Tape tape;
  model.zero_grad();
  tape.backward(fused_loss(tape, model, batch, w));
  for (Parameter* p : model.parameters()) {
    if (p->name.rfind("view0.", 0) == 0) EXPECT_TRUE(all_zero(p->grad)) << p->name;
    if (p->name.rfind("view1.", 0) == 0 && p->name.find("weight") != std::string::npos)
      EXPECT_FALSE(all_zero(p->grad)) << p->name;
  }
}

TEST(TrainEpoch, ZeroLearningRateChangesNothing) {
  MultiViewDataset ds = tiny_data();
  TrainConfig cfg = tiny_config();
  cfg.lr = 0.0;
  Rng init(4);
  MvNNBiInModel model(make_spec(cfg, ds.view_dims(), 3), init);
  std::vector<Matrix> before;
  for (Parameter* p : model.parameters()) before.push_back(p->value);
  auto params = model.parameters();
  AdamState opt = make_adam(params, 0.0, 0.5, 0.9, 1e-8);
  ViewWeights w = ViewWeights::uniform(3, 2.0, 3);
  Rng r1(5), r2(5);
  const EpochReport a = train_epoch(model, ds, w, opt, r1, cfg);
  const EpochReport b = train_epoch(model, ds, w, opt, r2, cfg);
  EXPECT_EQ(a.view_losses, b.view_losses);
  params = model.parameters();
  for (std::size_t k = 0; k < params.size(); ++k) EXPECT_EQ(params[k]->value, before[k]) << params[k]->name;
}

TEST(Evaluate, TopKClampsToClassCount) {
  MultiViewDataset ds = tiny_data();
  TrainConfig cfg = tiny_config();
  Rng rng(6);
  MvNNBiInModel model(make_spec(cfg, ds.view_dims(), 3), rng);
  const TopK r = evaluate(model, ViewWeights::uniform(3, 2.0, 3), ds, Split::Val);
  EXPECT_EQ(r.k, 3u);
  EXPECT_EQ(r.topk, 1.0);
  EXPECT_GE(r.top1, 0.0);
  EXPECT_LE(r.top1, 1.0);
}

TEST(Evaluate, UntrainedModelOnNoiseIsChance) {
  SynthSpec s;
  s.num_views = 2;
  s.num_classes = 4;
  s.num_samples = 4000;
  s.noise_views = {0, 1};
  s.seed = 9;
  MultiViewDataset ds = synth_generate(s);
  split_dataset(ds, {0.1, 0.1, 0.8}, 1);
  TrainConfig cfg = tiny_config();
  Rng rng(7);
  MvNNBiInModel model(make_spec(cfg, ds.view_dims(), 4), rng);
  const TopK r = evaluate(model, ViewWeights::uniform(2, 2.0, 2), ds, Split::Test);
  const double n = static_cast<double>(ds.indices(Split::Test).size());
  EXPECT_NEAR(r.top1, 0.25, 3.0 * std::sqrt(0.25 * 0.75 / n));
  EXPECT_EQ(r.k, 4u);
  EXPECT_EQ(r.topk, 1.0);
}

TEST(Evaluate, EmptySplitIsAnError) {
  MultiViewDataset ds = tiny_data();
  for (auto& s : ds.split) s = Split::Train;
  TrainConfig cfg = tiny_config();
  Rng rng(8);
  MvNNBiInModel model(make_spec(cfg, ds.view_dims(), 3), rng);
  EXPECT_THROW(evaluate(model, ViewWeights::uniform(3, 2.0, 3), ds, Split::Test), DataError);
}

TEST(Fit, ZeroEpochsReturnsInitialModel) {
  MultiViewDataset ds = tiny_data();
  TrainConfig cfg = tiny_config();
  cfg.epochs = 0;
  const FitResult r = fit(cfg, ds);
  EXPECT_TRUE(r.history.empty());
  EXPECT_EQ(r.best_epoch, 0);
  for (double a : r.weights.alpha) EXPECT_DOUBLE_EQ(a, 1.0 / 3.0);
}

TEST(Fit, DeterministicReplay) {
  MultiViewDataset ds = tiny_data();
  TrainConfig cfg = tiny_config();
  FitResult a = fit(cfg, ds), b = fit(cfg, ds);
  ASSERT_EQ(a.history.size(), b.history.size());
  for (std::size_t k = 0; k < a.history.size(); ++k) {
    EXPECT_EQ(a.history[k].view_losses, b.history[k].view_losses);
    EXPECT_EQ(a.history[k].alpha, b.history[k].alpha);
    EXPECT_EQ(a.history[k].val_top1, b.history[k].val_top1);
  }
  const auto pa = a.model.parameters(), pb = b.model.parameters();
  for (std::size_t k = 0; k < pa.size(); ++k) EXPECT_EQ(pa[k]->value, pb[k]->value);
}

TEST(Fit, AlphaStepLowersEpochObjective) {
  MultiViewDataset ds = tiny_data(3, 240, {2});
  TrainConfig cfg = tiny_config();
  cfg.epochs = 4;
  cfg.s = 2;
  const FitResult r = fit(cfg, ds);
  // The initial uniform α spans all three views and so lies outside the
  // s=2 feasible set; compare from the first closed-form α onwards.
  ViewWeights prev{r.history.front().alpha, cfg.gamma, 2};
  for (const EpochReport& rep : r.history) {
    EXPECT_LE(rep.fused_objective, fused_objective(rep.view_losses, prev) + 1e-12);
    EXPECT_TRUE(std::isfinite(rep.fused_objective));
    EXPECT_GE(rep.val_top1, 0.0);
    EXPECT_LE(rep.val_top5, 1.0);
    prev.alpha = rep.alpha;
  }
}

TEST(Fit, SeparableDataReachesHighValidationAccuracy) {
  MultiViewDataset ds = tiny_data(4, 600);
  TrainConfig cfg = tiny_config();
  cfg.epochs = 30;
  const FitResult r = fit(cfg, ds);
  double best = 0;
  for (const auto& rep : r.history) best = std::max(best, rep.val_top1);
  EXPECT_GE(best, 0.95);
  EXPECT_EQ(evaluate(const_cast<MvNNBiInModel&>(r.model), r.weights, ds, Split::Val).top1, best);
}

TEST(Checkpoint, RoundTripPreservesEvaluation) {
  MultiViewDataset ds = tiny_data();
  TrainConfig cfg = tiny_config();
  FitResult r = fit(cfg, ds);
  Checkpoint ck{r.model, r.weights, PredictWeighting::AlphaGamma, std::nullopt, 17, {0.6, 0.3, 0.1}};
  const fs::path file = fs::temp_directory_path() / "mvbi_test_roundtrip.ckpt";
  save_checkpoint(file, ck);
  Checkpoint back = load_checkpoint(file);
  fs::remove(file);
  EXPECT_EQ(back.model.spec(), r.model.spec());
  EXPECT_EQ(back.weights.alpha, r.weights.alpha);
  EXPECT_EQ(back.weights.gamma, r.weights.gamma);
  EXPECT_EQ(back.weights.s, r.weights.s);
  EXPECT_EQ(back.predict_weighting, PredictWeighting::AlphaGamma);
  EXPECT_EQ(back.split_seed, 17u);
  const auto pa = r.model.parameters(), pb = back.model.parameters();
  for (std::size_t k = 0; k < pa.size(); ++k) EXPECT_EQ(pa[k]->value, pb[k]->value) << pa[k]->name;
  for (Split s : {Split::Train, Split::Val, Split::Test}) {
    const TopK a = evaluate(r.model, r.weights, ds, s), b = evaluate(back.model, back.weights, ds, s);
    EXPECT_EQ(a.top1, b.top1);
    EXPECT_EQ(a.topk, b.topk);
    EXPECT_EQ(split_view_losses(r.model, ds, s), split_view_losses(back.model, ds, s));
  }
}

TEST(Checkpoint, CorruptFileRejected) {
  const fs::path file = fs::temp_directory_path() / "mvbi_test_bad.ckpt";
  { std::ofstream(file) << "not a checkpoint"; }
  EXPECT_THROW(load_checkpoint(file), DataError);
  fs::remove(file);
}

TEST(Config, DefaultsAndUnknownKeys) {
  const TrainConfig d = config_from_json(nlohmann::json::object());
  EXPECT_EQ(d.batch_size, 64);
  EXPECT_EQ(d.lr, 1e-3);
  EXPECT_EQ(d.beta1, 0.5);
  EXPECT_EQ(d.beta2, 0.9);
  EXPECT_EQ(d.d_B, 200);
  EXPECT_EQ(d.patience, 10);
  EXPECT_THROW(config_from_json({{"gamm", 2.0}}), ConfigError);
  EXPECT_THROW(config_from_json({{"gamma", 1.0}}).validate(), ConfigError);
  EXPECT_THROW(config_from_json({{"batch_size", 1}}).validate(), ConfigError);
  EXPECT_THROW(config_from_json({{"precision", "float32"}}).validate(), ConfigError);
  TrainConfig c;
  c.s = 3;
  EXPECT_THROW(c.validate_for(2), ConfigError);
}

TEST(Config, JsonRoundTrip) {
  TrainConfig c;
  c.gamma = 4.5;
  c.s = 2;
  c.view_hidden = {7, 3};
  c.alpha_schedule = AlphaSchedule::Batch;
  c.predict_weighting = PredictWeighting::AlphaGamma;
  c.seed = 123456789012345ULL;
  const TrainConfig back = config_from_json(to_json(c));
  EXPECT_EQ(to_json(back), to_json(c));
  EXPECT_EQ(back.s, 2);
  EXPECT_EQ(back.seed, c.seed);
}
