#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <vector>

#include <gtest/gtest.h>

#include "mvbi/error.hpp"
#include "mvbi/fusion.hpp"
#include "mvbi/ops.hpp"
#include "mvbi/rng.hpp"

using namespace mvbi;

namespace {

double objective(const std::vector<double>& a, const std::vector<double>& L, double g) {
  double s = 0.0;
  for (std::size_t v = 0; v < L.size(); ++v) s += std::pow(a[v], g) * L[v];
  return s;
}

// Closed form restricted to a given support (the per-support minimizer).
double support_objective(const std::vector<double>& L, const std::vector<std::size_t>& support, double g) {
  double z = 0.0;
  for (auto v : support) z += std::pow(L[v], 1.0 / (1.0 - g));
  std::vector<double> a(L.size(), 0.0);
  for (auto v : support) a[v] = std::pow(L[v], 1.0 / (1.0 - g)) / z;
  return objective(a, L, g);
}

void for_each_support(std::size_t M, std::size_t s, const std::function<void(const std::vector<std::size_t>&)>& f) {
  std::vector<bool> pick(M, false);
  std::fill(pick.begin(), pick.begin() + static_cast<long>(s), true);
  do {
    std::vector<std::size_t> sup;
    for (std::size_t v = 0; v < M; ++v)
      if (pick[v]) sup.push_back(v);
    f(sup);
  } while (std::prev_permutation(pick.begin(), pick.end()));
}

std::vector<double> random_losses(Rng& rng, std::size_t M) {
  std::vector<double> L(M);
  for (double& l : L) l = rng.uniform(0.05, 3.0);
  return L;
}

void expect_valid(const ViewWeights& w, int s) {
  double total = 0.0;
  std::size_t nz = 0;
  for (double a : w.alpha) {
    EXPECT_GE(a, 0.0);
    total += a;
    nz += a != 0.0;
  }
  EXPECT_NEAR(total, 1.0, 1e-12);
  EXPECT_EQ(nz, static_cast<std::size_t>(s));
  EXPECT_EQ(w.support_size(), static_cast<std::size_t>(s));
}

}  // namespace

TEST(PerViewLosses, UniformLogitsAreLogC) {
  const std::vector<Matrix> z{Matrix(3, 4), Matrix(3, 4, 2.0)};
  for (double l : per_view_losses(z, std::vector<int>{0, 1, 2})) EXPECT_NEAR(l, std::log(4.0), 1e-12);
}

TEST(PerViewLosses, PerfectViewNearZeroAndMatchesIndependentCe) {
  Rng rng(1);
  const std::vector<int> y{1, 0};
  const std::vector<Matrix> z{{{0, 100}, {100, 0}}, rng.normal_matrix(2, 2)};
  const auto L = per_view_losses(z, y);
  EXPECT_LT(L[0], 1e-40);
  EXPECT_EQ(L[1], softmax_cross_entropy(z[1], y).loss);
  EXPECT_THROW(per_view_losses(z, std::vector<int>{2, 0}), DataError);
}

TEST(SortLosses, Examples) {
  EXPECT_EQ(sort_losses(std::vector<double>{0.5, 0.2, 0.9}).order, (std::vector<std::size_t>{1, 0, 2}));
  EXPECT_EQ(sort_losses(std::vector<double>{0.3, 0.3, 0.3}).order, (std::vector<std::size_t>{0, 1, 2}));
  EXPECT_EQ(sort_losses(std::vector<double>{0.1, 0.2, 0.3}).order, (std::vector<std::size_t>{0, 1, 2}));
  EXPECT_THROW(sort_losses(std::vector<double>{0.1, std::nan("")}), NumericError);
}

TEST(SortLosses, AscendingBijection) {
  Rng rng(2);
  for (int t = 0; t < 100; ++t) {
    auto L = random_losses(rng, 1 + rng.below(7));
    if (t % 3 == 0) L[0] = L.back();  // force ties
    const LossVector lv = sort_losses(L);
    std::vector<std::size_t> seen = lv.order;
    std::sort(seen.begin(), seen.end());
    for (std::size_t k = 0; k < seen.size(); ++k) EXPECT_EQ(seen[k], k);
    for (std::size_t k = 1; k < L.size(); ++k) {
      EXPECT_LE(L[lv.order[k - 1]], L[lv.order[k]]);
      if (L[lv.order[k - 1]] == L[lv.order[k]]) EXPECT_LT(lv.order[k - 1], lv.order[k]);
    }
  }
}

TEST(SolveAlpha, TwoViewExampleAgainstGrid) {
  const std::vector<double> L{1.0, 4.0};
  const ViewWeights w = solve_alpha(L, 2.0, 2);
  EXPECT_NEAR(w.alpha[0], 0.8, 1e-15);
  EXPECT_NEAR(w.alpha[1], 0.2, 1e-15);
  // Grid oracle on the 1-simplex at step 1e-3.
  double best = 1e300, arg = -1;
  for (int k = 0; k <= 1000; ++k) {
    const double a = k * 1e-3, f = objective({a, 1 - a}, L, 2.0);
    if (f < best) best = f, arg = a;
  }
  EXPECT_NEAR(arg, 0.8, 1e-3);
  EXPECT_NEAR(fused_objective(L, w), 0.8, 1e-15);
  EXPECT_NEAR(fused_objective(L, w), 1.0 / (1.0 / 1.0 + 1.0 / 4.0), 1e-15);
}

TEST(SolveAlpha, EqualLossesAreUniform) {
  for (double g : {1.5, 2.0, 7.0}) {
    const ViewWeights w = solve_alpha(std::vector<double>{0.7, 0.7, 0.7}, g, 3);
    for (double a : w.alpha) EXPECT_NEAR(a, 1.0 / 3.0, 1e-15);
    // Uniform over s views with loss c: c·s^{1−γ}.
    EXPECT_NEAR(fused_objective(std::vector<double>{0.7, 0.7, 0.7}, w), 0.7 * std::pow(3.0, 1.0 - g), 1e-14);
  }
}

TEST(SolveAlpha, SingleViewSupportIsArgmin) {
  const std::vector<double> L{0.4, 0.1, 0.9};
  const ViewWeights w = solve_alpha(L, 3.0, 1);
  EXPECT_EQ(w.alpha, (std::vector<double>{0.0, 1.0, 0.0}));
  EXPECT_DOUBLE_EQ(fused_objective(L, w), 0.1);
}

TEST(SolveAlpha, InvalidArgumentsAreConfigErrors) {
  const std::vector<double> L{1.0, 2.0};
  EXPECT_THROW(solve_alpha(L, 1.0, 1), ConfigError);
  EXPECT_THROW(solve_alpha(L, 0.5, 1), ConfigError);
  EXPECT_THROW(solve_alpha(L, 2.0, 0), ConfigError);
  EXPECT_THROW(solve_alpha(L, 2.0, 3), ConfigError);
}

TEST(SolveAlpha, ZeroLossIsFlooredAndDominates) {
  const ViewWeights w = solve_alpha(std::vector<double>{0.0, 0.5, 1.0}, 2.0, 2);
  expect_valid(w, 2);
  EXPECT_GT(w.alpha[0], 1.0 - 1e-10);
  EXPECT_GT(w.alpha[1], 0.0);
}

TEST(SolveAlpha, ConstraintsHoldExactlyForExtremeGamma) {
  Rng rng(3);
  for (int t = 0; t < 500; ++t) {
    const std::size_t M = 1 + rng.below(8);
    auto L = random_losses(rng, M);
    L[rng.below(M)] *= 1e-6;
    for (double g : {1.0001, 1.5, 2.0, 10.0, 1e4}) {
      const int s = 1 + static_cast<int>(rng.below(M));
      expect_valid(solve_alpha(L, g, s), s);
    }
  }
}

TEST(SolveAlpha, BeatsGridOnSelectedSupport) {
  Rng rng(4);
  for (int t = 0; t < 40; ++t) {
    const std::size_t M = 2 + rng.below(2);  // grid is 2-D at most
    const auto L = random_losses(rng, M);
    const double g = std::vector<double>{1.5, 2.0, 5.0}[rng.below(3)];
    const int s = 1 + static_cast<int>(rng.below(M));
    const ViewWeights w = solve_alpha(L, g, s);
    std::vector<std::size_t> sup;
    for (std::size_t v = 0; v < M; ++v)
      if (w.alpha[v] > 0) sup.push_back(v);
    double grid_best = 1e300;
    if (sup.size() == 1) grid_best = L[sup[0]];
    if (sup.size() == 2)
      for (int k = 0; k <= 1000; ++k) {
        std::vector<double> a(M, 0.0);
        a[sup[0]] = k * 1e-3, a[sup[1]] = 1 - k * 1e-3;
        grid_best = std::min(grid_best, objective(a, L, g));
      }
    if (sup.size() == 3)
      for (int i = 0; i <= 1000; ++i)
        for (int j = 0; i + j <= 1000; ++j) {
          std::vector<double> a{i * 1e-3, j * 1e-3, (1000 - i - j) * 1e-3};
          grid_best = std::min(grid_best, objective(a, L, g));
        }
    EXPECT_LE(fused_objective(L, w), grid_best + 1e-9);
  }
}

TEST(SolveAlpha, SupportIsBestAmongAllSupports) {
  Rng rng(5);
  for (int t = 0; t < 200; ++t) {
    const std::size_t M = 2 + rng.below(5);
    const auto L = random_losses(rng, M);
    const double g = std::vector<double>{1.5, 2.0, 5.0, 10.0}[rng.below(4)];
    for (std::size_t s = 1; s <= M; ++s) {
      const double mine = fused_objective(L, solve_alpha(L, g, static_cast<int>(s)));
      for_each_support(M, s, [&](const std::vector<std::size_t>& sup) {
        EXPECT_LE(mine, support_objective(L, sup, g) + 1e-12);
      });
    }
  }
}

TEST(SolveAlpha, GammaNearOneConcentrates) {
  Rng rng(6);
  for (int t = 0; t < 100; ++t) {
    const std::size_t M = 2 + rng.below(5);
    std::vector<double> L(M);
    double l = rng.uniform(0.1, 1.0);
    for (double& x : L) x = l, l *= 1.1 + rng.uniform();  // distinct by ≥ 10%
    Rng(t).shuffle(L);
    const ViewWeights w = solve_alpha(L, 1.001, static_cast<int>(M));
    const auto argmin = std::min_element(L.begin(), L.end()) - L.begin();
    EXPECT_GE(w.alpha[argmin], 0.999);
  }
}

TEST(SolveAlpha, LargeGammaIsNearUniformOnSupport) {
  Rng rng(7);
  for (int t = 0; t < 100; ++t) {
    const std::size_t M = 2 + rng.below(5);
    const auto L = random_losses(rng, M);
    const int s = 1 + static_cast<int>(rng.below(M));
    for (double a : solve_alpha(L, 1000.0, s).alpha)
      if (a > 0) EXPECT_NEAR(a, 1.0 / s, 1e-2);
  }
}

TEST(SolveAlpha, PermutationEquivariant) {
  Rng rng(8);
  for (int t = 0; t < 100; ++t) {
    const std::size_t M = 2 + rng.below(5);
    const auto L = random_losses(rng, M);
    std::vector<std::size_t> perm(M);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);
    std::vector<double> Lp(M);
    for (std::size_t k = 0; k < M; ++k) Lp[k] = L[perm[k]];
    const int s = 1 + static_cast<int>(rng.below(M));
    const auto a = solve_alpha(L, 3.0, s).alpha, ap = solve_alpha(Lp, 3.0, s).alpha;
    for (std::size_t k = 0; k < M; ++k) EXPECT_NEAR(ap[k], a[perm[k]], 1e-15);
  }
}

TEST(SolveAlpha, ScaleInvariant) {
  Rng rng(9);
  for (int t = 0; t < 100; ++t) {
    const std::size_t M = 2 + rng.below(5);
    const auto L = random_losses(rng, M);
    std::vector<double> scaled = L;
    // Powers of two keep the scaling exact in binary floating point.
    const double c = std::ldexp(1.0, static_cast<int>(rng.below(20)) - 10);
    for (double& x : scaled) x *= c;
    const int s = 1 + static_cast<int>(rng.below(M));
    EXPECT_EQ(solve_alpha(L, 4.0, s).alpha, solve_alpha(scaled, 4.0, s).alpha);
    const auto a = solve_alpha(L, 2.5, s).alpha;
    for (double x : {0.37, 5.1}) {
      std::vector<double> sc = L;
      for (double& y : sc) y *= x;
      const auto b = solve_alpha(sc, 2.5, s).alpha;
      for (std::size_t k = 0; k < M; ++k) EXPECT_NEAR(a[k], b[k], 1e-14);
    }
  }
}

TEST(Predict, OnehotAlphaFollowsThatView) {
  const std::vector<Matrix> z{{{2, 1, 0}, {0, 5, 1}}, {{0, 0, 3}, {9, 0, 0}}};
  ViewWeights w{{0.0, 1.0}, 2.0, 1};
  EXPECT_EQ(predict(z, w).labels, (std::vector<int>{2, 0}));
  w.alpha = {1.0, 0.0};
  EXPECT_EQ(predict(z, w).labels, (std::vector<int>{0, 1}));
}

TEST(Predict, IdenticalViewsMatchSingleView) {
  Rng rng(10);
  const Matrix z = rng.normal_matrix(20, 4);
  const std::vector<Matrix> zs{z, z, z};
  const auto p = predict(zs, ViewWeights::uniform(3, 2.0, 3));
  const auto single = predict(std::vector<Matrix>{z}, ViewWeights::uniform(1, 2.0, 1));
  EXPECT_EQ(p.labels, single.labels);
  EXPECT_LT(max_abs(p.scores - softmax_rows(z)), 1e-15);
}

TEST(Predict, HandMixedTwoClassExample) {
  // View 0: p = (σ(2), 1−σ(2)) ≈ (0.881, 0.119); view 1: p = (0.5−, ...).
  const std::vector<Matrix> z{{{2, 0}, {0, 0.1}}, {{0, 3}, {0, 3}}};
  const ViewWeights w{{0.9, 0.1}, 2.0, 2};
  const auto p = predict(z, w);
  const double s0 = 1.0 / (1.0 + std::exp(-2.0)), s1 = 1.0 / (1.0 + std::exp(-3.0));
  const double row0_class0 = 0.9 * s0 + 0.1 * (1 - s1);
  EXPECT_NEAR(p.scores(0, 0), row0_class0, 1e-15);
  EXPECT_EQ(p.labels[0], 0);
  // Row 1: view 0 leans to class 1 slightly and view 1 strongly → class 1.
  EXPECT_EQ(p.labels[1], 1);
  // α^γ weighting (0.81, 0.01) leaves both decisions unchanged here.
  EXPECT_EQ(predict(z, w, PredictWeighting::AlphaGamma).labels, p.labels);
}

TEST(Predict, TiesGoToLowestClass) {
  const std::vector<Matrix> z{Matrix(1, 3, 1.0)};
  EXPECT_EQ(predict(z, ViewWeights::uniform(1, 2.0, 1)).labels, (std::vector<int>{0}));
}
