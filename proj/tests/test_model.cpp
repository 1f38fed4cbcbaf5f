#include <cmath>
#include <set>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "mvbi/error.hpp"
#include "mvbi/grad_check.hpp"
#include "mvbi/model.hpp"

using namespace mvbi;

namespace {

TrainConfig small_config() {
  TrainConfig cfg;
  cfg.view_hidden = {6, 4};
  cfg.d_B = 3;
  cfg.head_hidden = {5};
  return cfg;
}

std::vector<Matrix> random_views(const std::vector<std::size_t>& dims, std::size_t n, Rng& rng) {
  std::vector<Matrix> v;
  for (std::size_t d : dims) v.push_back(rng.normal_matrix(n, d));
  return v;
}

// Warms up batch-norm running stats so eval mode is not the identity.
void warm_up(MvNNBiInModel& m, const std::vector<std::size_t>& dims, Rng& rng) {
  for (int k = 0; k < 3; ++k) m.logits(random_views(dims, 8, rng), Mode::Train);
}

}  // namespace

TEST(ModelSpec, HeadWidthLawOnRandomShapes) {
  Rng rng(10);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t M = 1 + rng.below(6), d = 1 + rng.below(12), dB = 1 + rng.below(12);
    TrainConfig cfg;
    cfg.view_hidden = {static_cast<int>(d)};
    cfg.d_B = static_cast<int>(dB);
    cfg.head_hidden = {3};
    std::vector<std::size_t> dims(M, 2);
    const ModelSpec spec = make_spec(cfg, dims, 3);
    EXPECT_EQ(spec.head_input_width(), d + (M - 1) * dB);
    Rng init(trial);
    MvNNBiInModel model(spec, init);
    EXPECT_EQ(model.head().layers.front().in_width(), d + (M - 1) * dB);
  }
}

TEST(ModelSpec, DefaultWidthsGiveTwoHundredPerView) {
  const TrainConfig cfg;
  for (std::size_t M = 1; M <= 6; ++M) {
    std::vector<std::size_t> dims(M, 10);
    EXPECT_EQ(make_spec(cfg, dims, 5).head_input_width(), 200 * M);
  }
  std::vector<std::size_t> six(6, 10);
  EXPECT_EQ(make_spec(cfg, six, 5).head_input_width(), 1200u);
  EXPECT_EQ(cfg.view_hidden, (std::vector<int>{400, 200}));
  EXPECT_EQ(cfg.head_hidden, (std::vector<int>{300}));
}

TEST(ModelSpec, ZeroWidthRejected) {
  TrainConfig cfg = small_config();
  cfg.view_hidden = {6, 0};
  std::vector<std::size_t> dims{3, 3};
  EXPECT_THROW(make_spec(cfg, dims, 2), ConfigError);
  cfg = small_config();
  cfg.d_B = 0;
  EXPECT_THROW(make_spec(cfg, dims, 2), ConfigError);
  cfg = small_config();
  cfg.head_hidden = {0};
  EXPECT_THROW(make_spec(cfg, dims, 2), ConfigError);
}

TEST(Model, SameSeedBitwiseIdentical) {
  std::vector<std::size_t> dims{3, 5, 2};
  const ModelSpec spec = make_spec(small_config(), dims, 4);
  Rng r1(7), r2(7), r3(8);
  MvNNBiInModel a(spec, r1), b(spec, r2), c(spec, r3);
  const auto pa = a.parameters(), pb = b.parameters(), pc = c.parameters();
  ASSERT_EQ(pa.size(), pb.size());
  bool any_diff = false;
  for (std::size_t k = 0; k < pa.size(); ++k) {
    EXPECT_EQ(pa[k]->name, pb[k]->name);
    EXPECT_EQ(pa[k]->value, pb[k]->value) << pa[k]->name;
    any_diff = any_diff || !(pa[k]->value == pc[k]->value);
  }
  EXPECT_TRUE(any_diff);
}

TEST(Model, InitWithinGlorotBounds) {
  std::vector<std::size_t> dims{7, 3};
  const ModelSpec spec = make_spec(small_config(), dims, 4);
  Rng rng(1);
  MvNNBiInModel m(spec, rng);
  for (Parameter* p : m.parameters()) {
    const std::string& n = p->name;
    auto ends_with = [&](const std::string& s) { return n.size() >= s.size() && n.compare(n.size() - s.size(), s.size(), s) == 0; };
    if (ends_with(".metrics")) {
      const double d = static_cast<double>(p->value.cols());
      EXPECT_LE(max_abs(p->value), std::sqrt(6.0 / (d * d + 1.0))) << n;
      EXPECT_GT(max_abs(p->value), 0.0);
    } else if (ends_with(".weight")) {
      EXPECT_LE(max_abs(p->value), glorot_bound(p->value.cols(), p->value.rows())) << n;
      EXPECT_GT(max_abs(p->value), 0.0);
    } else if (ends_with(".bias") || ends_with(".bn_beta")) {
      EXPECT_EQ(max_abs(p->value), 0.0) << n;
    } else if (ends_with(".bn_gamma")) {
      EXPECT_EQ(p->value, Matrix(1, p->value.cols(), 1.0)) << n;
    }
  }
  EXPECT_DOUBLE_EQ(glorot_bound(400, 200), std::sqrt(6.0 / 600.0));
}

TEST(Model, ZeroWeightsGiveZeroViewFeatures) {
  std::vector<std::size_t> dims{3, 4};
  const ModelSpec spec = make_spec(small_config(), dims, 2);
  Rng rng(2);
  MvNNBiInModel m(spec, rng);
  for (ViewNet& net : m.view_nets())
    for (DenseBlock& layer : net.layers) {
      layer.weight.value = Matrix(layer.weight.value.rows(), layer.weight.value.cols());
    }
  Tape t;
  const auto feats = m.embed(t, random_views(dims, 5, rng), Mode::Train);
  for (auto id : feats) EXPECT_EQ(max_abs(t.value(id)), 0.0);
}

TEST(Model, PairSymmetryIsSharedStorage) {
  std::vector<std::size_t> dims{3, 3, 3, 3};
  const ModelSpec spec = make_spec(small_config(), dims, 2);
  Rng rng(3);
  MvNNBiInModel m(spec, rng);
  EXPECT_EQ(m.bilinear().num_pairs(), 6u);
  for (std::size_t v = 0; v < 4; ++v)
    for (std::size_t w = 0; w < 4; ++w) {
      if (v == w) continue;
      EXPECT_EQ(&m.bilinear().pair(v, w), &m.bilinear().pair(w, v));
      EXPECT_EQ(m.bilinear().pair(v, w).first, std::min(v, w));
    }
  m.bilinear().pair(2, 1).metrics.value(0, 0) = 42.0;
  EXPECT_EQ(m.bilinear().pair(1, 2).metrics.value(0, 0), 42.0);
  EXPECT_THROW(m.bilinear().pair(1, 1), DimensionError);
}

TEST(Model, InteractionsAscendingWithLowerViewOnLeft) {
  std::vector<std::size_t> dims{3, 3, 3};
  const ModelSpec spec = make_spec(small_config(), dims, 2);
  Rng rng(4);
  MvNNBiInModel m(spec, rng);
  Tape t;
  const auto feats = m.embed(t, random_views(dims, 6, rng), Mode::Train);
  const auto inter = m.bilinear().interaction_forward(t, feats, 1, Mode::Train);
  ASSERT_EQ(inter.size(), 2u);
  const auto& p01 = m.bilinear().pair(0, 1);
  const auto& p12 = m.bilinear().pair(1, 2);
  EXPECT_EQ(t.value(inter[0]), bilinear_forward(t.value(feats[0]), t.value(feats[1]), p01.metrics.value, p01.bias.value));
  EXPECT_EQ(t.value(inter[1]), bilinear_forward(t.value(feats[1]), t.value(feats[2]), p12.metrics.value, p12.bias.value));
  // The pair output is the same vector whichever view assembles it.
  const auto from0 = m.bilinear().interaction_forward(t, feats, 0, Mode::Train);
  EXPECT_EQ(t.value(from0[0]), t.value(inter[0]));
}

TEST(Model, LogitShapesIncludingSingleView) {
  for (std::size_t M : {1u, 2u, 4u}) {
    std::vector<std::size_t> dims(M, 3);
    const ModelSpec spec = make_spec(small_config(), dims, 5);
    Rng rng(M);
    MvNNBiInModel m(spec, rng);
    if (M == 1) EXPECT_EQ(spec.head_input_width(), 4u);
    const auto z = m.logits(random_views(dims, 7, rng), Mode::Train);
    ASSERT_EQ(z.size(), M);
    for (const Matrix& zv : z) {
      EXPECT_EQ(zv.rows(), 7u);
      EXPECT_EQ(zv.cols(), 5u);
    }
  }
}

TEST(Model, MissingOrMisshapenViewRejected) {
  std::vector<std::size_t> dims{3, 4, 2};
  const ModelSpec spec = make_spec(small_config(), dims, 2);
  Rng rng(5);
  MvNNBiInModel m(spec, rng);
  auto views = random_views(dims, 4, rng);
  views.pop_back();
  try {
    m.logits(views, Mode::Eval);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("3 views"), std::string::npos);
  }
  views = random_views(dims, 4, rng);
  views[1] = rng.normal_matrix(4, 5);
  try {
    m.logits(views, Mode::Eval);
    FAIL();
  } catch (const DimensionError& e) {
    EXPECT_NE(std::string(e.what()).find("view 1"), std::string::npos);
  }
}

TEST(Model, EvalForwardIsDeterministic) {
  std::vector<std::size_t> dims{3, 4, 2};
  const ModelSpec spec = make_spec(small_config(), dims, 3);
  Rng rng(6);
  MvNNBiInModel m(spec, rng);
  warm_up(m, dims, rng);
  const auto x = random_views(dims, 9, rng);
  EXPECT_EQ(m.logits(x, Mode::Eval), m.logits(x, Mode::Eval));
}

TEST(Model, SwappingViewsSwapsLogits) {
  // With the pair's operands exchanged, xᵀBy = yᵀBᵀx, so the metric blocks
  // of the swapped model are transposed.
  std::vector<std::size_t> dims{3, 5};
  const ModelSpec spec = make_spec(small_config(), dims, 3);
  Rng rng(7);
  MvNNBiInModel a(spec, rng);
  warm_up(a, dims, rng);

  std::vector<std::size_t> swapped_dims{5, 3};
  const ModelSpec swapped_spec = make_spec(small_config(), swapped_dims, 3);
  Rng rng2(99);
  MvNNBiInModel b(swapped_spec, rng2);
  b.view_nets()[0] = a.view_nets()[1];
  b.view_nets()[1] = a.view_nets()[0];
  b.head() = a.head();
  const Matrix& ma = a.bilinear().pair(0, 1).metrics.value;
  Matrix& mb = b.bilinear().pair(0, 1).metrics.value;
  const std::size_t d = ma.cols();
  for (std::size_t p = 0; p < ma.rows() / d; ++p)
    for (std::size_t r = 0; r < d; ++r)
      for (std::size_t c = 0; c < d; ++c) mb(p * d + r, c) = ma(p * d + c, r);
  b.bilinear().pair(0, 1).bias.value = a.bilinear().pair(0, 1).bias.value;

  const auto x = random_views(dims, 6, rng);
  const std::vector<Matrix> xs{x[1], x[0]};
  const auto za = a.logits(x, Mode::Eval);
  const auto zb = b.logits(xs, Mode::Eval);
  EXPECT_LT(max_abs(zb[0] - za[1]), 1e-12);
  EXPECT_LT(max_abs(zb[1] - za[0]), 1e-12);
}

TEST(Model, EndToEndGradientMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) EXPECT_LE(end_to_end_grad_check(seed).max_error, 1e-4) << seed;
}

TEST(Model, ParameterNamesAreUniqueAndStable) {
  std::vector<std::size_t> dims{3, 3, 3};
  const ModelSpec spec = make_spec(small_config(), dims, 2);
  Rng rng(8);
  MvNNBiInModel m(spec, rng);
  std::set<std::string> names;
  for (Parameter* p : m.parameters()) EXPECT_TRUE(names.insert(p->name).second) << p->name;
  EXPECT_TRUE(names.contains("view0.layer0.weight"));
  EXPECT_TRUE(names.contains("pair1_2.metrics"));
}
