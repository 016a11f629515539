#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <limits>

#include "grad_suite.hpp"
#include "kd/nn/checkpoint.hpp"
#include "kd/nn/functional.hpp"
#include "kd/nn/grad_check.hpp"
#include "kd/nn/ops.hpp"
#include "kd/nn/optim.hpp"
#include "oracles.hpp"

namespace {

using kd::nn::Matrix;
using kd::nn::Var;
namespace nn = kd::nn;

TEST(SoftmaxTemp, SymmetricLogitsGiveUniform) {
  for (double g : {0.1, 1.0, 7.5}) {
    const auto p = nn::softmax_temp(std::vector<double>{0.0, 0.0}, g);
    EXPECT_DOUBLE_EQ(p[0], 0.5);
    EXPECT_DOUBLE_EQ(p[1], 0.5);
  }
}

TEST(SoftmaxTemp, ClosedForm) {
  const auto p = nn::softmax_temp(std::vector<double>{std::log(3.0), 0.0}, 1.0);
  EXPECT_NEAR(p[0], 0.75, 1e-15);
  EXPECT_NEAR(p[1], 0.25, 1e-15);
}

TEST(SoftmaxTemp, LargeTemperatureFlattens) {
  const auto p = nn::softmax_temp(std::vector<double>{5.0, 0.0, -5.0}, 1000.0);
  EXPECT_LT(p[0] - p[2], 0.01);
}

TEST(SoftmaxTemp, RejectsNonPositiveGamma) {
  EXPECT_THROW(static_cast<void>(nn::softmax_temp(std::vector<double>{1.0}, 0.0)), std::invalid_argument);
  EXPECT_THROW(static_cast<void>(nn::softmax_temp(std::vector<double>{1.0}, -2.0)), std::invalid_argument);
}

TEST(SoftmaxTemp, MatchesOracleAndSumsToOne) {
  nn::Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> l(6);
    for (double& v : l) v = std::normal_distribution<double>(0, 3)(rng);
    const double g = 0.3 + trial * 0.1;
    const auto p = nn::softmax_temp(l, g);
    const auto o = kd::oracle::softmax(l, g);
    for (std::size_t i = 0; i < l.size(); ++i) EXPECT_NEAR(p[i], o[i], 1e-12);
    EXPECT_NEAR(p.total(), 1.0, 1e-12);
  }
}

TEST(KlDivergence, IdenticalIsZero) {
  const nn::ProbDist p({0.2, 0.3, 0.5});
  EXPECT_EQ(nn::kl_divergence(p, p), 0.0);
}

TEST(KlDivergence, PointMassAgainstUniform) {
  EXPECT_NEAR(nn::kl_divergence(nn::ProbDist({1.0, 0.0}), nn::ProbDist({0.5, 0.5})), std::log(2.0), 1e-15);
}

TEST(KlDivergence, Asymmetric) {
  const nn::ProbDist p({0.8, 0.2}), q({0.2, 0.8});
  const double pq = nn::kl_divergence(p, q), qp = nn::kl_divergence(q, p);
  EXPECT_NEAR(pq, kd::oracle::kl({0.8, 0.2}, {0.2, 0.8}), 1e-12);
  EXPECT_NEAR(qp, kd::oracle::kl({0.2, 0.8}, {0.8, 0.2}), 1e-12);
  // a swapped two-point pair is symmetric by construction
  EXPECT_NEAR(pq, qp, 1e-15);
  const nn::ProbDist r({0.7, 0.2, 0.1}), s({0.1, 0.3, 0.6});
  EXPECT_NE(nn::kl_divergence(r, s), nn::kl_divergence(s, r));
}

TEST(KlDivergence, LengthMismatchThrows) {
  EXPECT_THROW(static_cast<void>(nn::kl_divergence(nn::ProbDist({1.0}), nn::ProbDist({0.5, 0.5}))),
               std::invalid_argument);
}

TEST(WeightedCrossEntropy, Example) {
  const std::vector<double> l{0.0, 0.0}, w{1.0, 2.0};
  EXPECT_NEAR(nn::weighted_cross_entropy(l, 1, w), 2.0 * std::log(2.0), 1e-15);
  EXPECT_NEAR(nn::weighted_cross_entropy(l, 1, w), kd::oracle::weighted_ce(l, 1, w), 1e-12);
}

TEST(WeightedCrossEntropy, UniformIsLogC) {
  const std::vector<double> l(7, 1.3), w(7, 1.0);
  EXPECT_NEAR(nn::weighted_cross_entropy(l, 4, w), std::log(7.0), 1e-14);
}

TEST(WeightedCrossEntropy, LargeMarginApproachesZero) {
  const std::vector<double> w{1.0, 1.0, 1.0};
  EXPECT_LT(nn::weighted_cross_entropy(std::vector<double>{60.0, 0.0, 0.0}, 0, w), 1e-20);
}

TEST(WeightedCrossEntropy, ZeroWeightIsZero) {
  EXPECT_EQ(nn::weighted_cross_entropy(std::vector<double>{0.0, 3.0}, 0, std::vector<double>{0.0, 1.0}), 0.0);
}

TEST(TopK, TiesGoToLowestIndex) {
  EXPECT_EQ(nn::top_k_indices(std::vector<double>{1.0, 3.0, 3.0, 0.0, 3.0}, 3), (std::vector<int>{1, 2, 4}));
  EXPECT_EQ(nn::top_k_indices(std::vector<double>{2.0, 2.0}, 1), (std::vector<int>{0}));
}

TEST(GradCheck, LinearFunctionIsExact) {
  nn::ParamStore store;
  nn::Rng rng(1);
  Var x = store.add("x", nn::random_normal(3, 4, 1.0, rng));
  const Matrix w = nn::random_normal(3, 4, 1.0, rng);
  auto r = nn::grad_check([&] { return nn::sum(nn::mul(x, Var::constant(w))); }, store.entries(), 1e-4);
  EXPECT_LT(r.max_rel_error, 1e-9);
}

TEST(GradCheck, ConstantFunctionHasZeroGradients) {
  nn::ParamStore store;
  Var x = store.add("x", Matrix::Constant(2, 2, 0.5));
  auto r = nn::grad_check([&] { return Var::scalar(4.0); }, store.entries(), 1e-4);
  EXPECT_EQ(r.max_rel_error, 0.0);
  EXPECT_EQ(r.analytic, 0.0);
  EXPECT_EQ(r.numeric, 0.0);
}

TEST(GradCheck, NonFiniteLossThrows) {
  nn::ParamStore store;
  Var x = store.add("x", Matrix::Constant(1, 1, 1.0));
  auto bad = [&] { return nn::scale(x, std::numeric_limits<double>::infinity()); };
  EXPECT_THROW(static_cast<void>(nn::grad_check(bad, store.entries(), 1e-4)), std::runtime_error);
}

class OpGradients : public ::testing::TestWithParam<std::size_t> {};

TEST_P(OpGradients, MatchesFiniteDifferences) {
  const auto cases = kd::testkit::op_cases();
  const auto& c = cases.at(GetParam());
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto r = c.run(seed, 1e-4);
    EXPECT_LT(r.max_rel_error, 1e-4) << c.name << " seed " << seed << " at " << r.worst_param << "[" << r.worst_index
                                     << "] analytic " << r.analytic << " numeric " << r.numeric;
  }
}

INSTANTIATE_TEST_SUITE_P(AllOps, OpGradients, ::testing::Range<std::size_t>(0, kd::testkit::op_cases().size()),
                         [](const auto& info) { return kd::testkit::op_cases()[info.param].name; });

TEST(Masks, CausalMaskBlocksFuture) {
  const Matrix m = nn::causal_mask(3);
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      if (j <= i) EXPECT_EQ(m(i, j), 0.0);
      else EXPECT_TRUE(std::isinf(m(i, j)) && m(i, j) < 0);
    }
  }
}

TEST(Masks, MaskedSoftmaxPutsZeroOnMaskedKeys) {
  const Matrix mask = nn::key_padding_mask({true, false, false});
  const Var p = nn::softmax_rows(Var::constant(Matrix::Random(3, 3)), mask);
  for (int r = 0; r < 3; ++r) {
    EXPECT_EQ(p.value()(r, 0), 0.0);
    EXPECT_NEAR(p.value().row(r).sum(), 1.0, 1e-15);
  }
}

TEST(AdamW, ZeroGradNoDecayLeavesParams) {
  nn::ParamStore store;
  Var x = store.add("x", Matrix::Constant(2, 2, 1.5));
  x.node()->grad = Matrix::Zero(2, 2);
  nn::AdamW opt({0.1, 0.0});
  opt.step(store);
  EXPECT_EQ(x.value(), Matrix::Constant(2, 2, 1.5));
}

TEST(AdamW, ZeroGradScalesByDecay) {
  nn::ParamStore store;
  Var x = store.add("x", Matrix::Constant(1, 3, 2.0));
  x.node()->grad = Matrix::Zero(1, 3);
  nn::AdamW opt({0.1, 0.01});
  opt.step(store);
  for (int i = 0; i < 3; ++i) EXPECT_EQ(x.value()(0, i), 2.0 * (1.0 - 0.1 * 0.01));
}

TEST(AdamW, FirstStepOnUnitGrad) {
  nn::ParamStore store;
  Var x = store.add("x", Matrix::Constant(1, 1, 1.0));
  x.node()->grad = Matrix::Constant(1, 1, 1.0);
  nn::AdamW opt({0.1, 0.0});
  opt.step(store);
  EXPECT_NEAR(x.value()(0, 0), 0.9, 1e-9);
  EXPECT_NEAR(x.value()(0, 0), kd::oracle::adamw_scalar(1.0, {1.0}, 0.1, 0.0), 1e-15);
}

TEST(AdamW, MultiStepMatchesRecurrence) {
  const std::vector<double> grads{0.3, -1.2, 0.7, 2.0, -0.1};
  nn::ParamStore store;
  Var x = store.add("x", Matrix::Constant(1, 1, 0.4));
  nn::AdamW opt({0.05, 0.2});
  for (double g : grads) {
    x.node()->grad = Matrix::Constant(1, 1, g);
    opt.step(store);
  }
  EXPECT_NEAR(x.value()(0, 0), kd::oracle::adamw_scalar(0.4, grads, 0.05, 0.2), 1e-14);
}

TEST(AdamW, Deterministic) {
  auto run = [] {
    nn::ParamStore store;
    nn::Rng rng(9);
    Var x = store.add("x", nn::random_normal(3, 3, 1.0, rng));
    nn::AdamW opt({0.01, 0.1});
    for (int i = 0; i < 4; ++i) {
      x.node()->grad = nn::random_normal(3, 3, 1.0, rng);
      opt.step(store);
    }
    return Matrix(x.value());
  };
  EXPECT_EQ(run(), run());
}

TEST(Checkpoint, ExactRoundTrip) {
  nn::ParamStore store;
  nn::Rng rng(5);
  store.add("b.w", nn::random_normal(2, 3, 1.0, rng));
  store.add("a.bias", nn::random_normal(1, 3, 1e-7, rng));
  const auto ckpt = nn::capture(store, {{"kind", "test"}});
  const auto text = nn::serialize(ckpt);
  const auto back = nn::deserialize(text);
  EXPECT_EQ(back, ckpt);
  EXPECT_EQ(nn::serialize(back), text);

  nn::ParamStore other;
  other.add("b.w", Matrix::Zero(2, 3));
  other.add("a.bias", Matrix::Zero(1, 3));
  nn::restore(back, other);
  EXPECT_EQ(other.get("b.w").value(), store.get("b.w").value());
}

TEST(Checkpoint, ShapeMismatchThrows) {
  nn::ParamStore store;
  store.add("w", Matrix::Zero(2, 2));
  const auto ckpt = nn::capture(store, {});
  nn::ParamStore other;
  other.add("w", Matrix::Zero(2, 3));
  EXPECT_THROW(nn::restore(ckpt, other), std::invalid_argument);
}

TEST(Checkpoint, FileRoundTrip) {
  nn::ParamStore store;
  store.add("w", Matrix::Constant(1, 2, 0.1));
  const auto ckpt = nn::capture(store, {{"k", 1}});
  const auto path = std::filesystem::temp_directory_path() / "kd_test_ckpt.json";
  nn::save_checkpoint(ckpt, path);
  EXPECT_EQ(nn::load_checkpoint(path), ckpt);
  std::filesystem::remove(path);
}

}  // namespace
