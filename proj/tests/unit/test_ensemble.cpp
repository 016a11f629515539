#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "fixtures.hpp"
#include "grad_suite.hpp"
#include "kd/ensemble/ensemble.hpp"
#include "kd/nn/ops.hpp"
#include "oracles.hpp"

namespace {

using namespace kd;
using ensemble::EnsembleParams;
using nn::Matrix;
using nn::Var;

void set(const Var& v, const Matrix& m) { v.node()->value = m; }

Matrix m11(double x) { return Matrix::Constant(1, 1, x); }

TEST(EnsembleWeights, HandConstructedHeads) {
  nn::Rng rng(0);
  EnsembleParams p(2, 1, 1, 1, rng);
  // head 0 scores the teachers ln 9 apart -> [0.9, 0.1]; head 1 has a zero query -> [0.5, 0.5]
  set(p.wk(0), m11(1.0));
  set(p.bk(0), m11(0.0));
  set(p.wq(0), m11(1.0));
  set(p.bq(0), m11(0.0));
  set(p.wk(1), m11(1.0));
  set(p.bk(1), m11(0.0));
  set(p.wq(1), m11(0.0));
  set(p.bq(1), m11(0.0));
  Matrix feats(2, 1);
  feats << std::log(9.0), 0.0;
  const nn::RowVector f_s = nn::RowVector::Constant(1, 1.0);
  const auto alpha = ensemble::ensemble_weights(f_s, feats, p);
  EXPECT_NEAR(alpha[0], 0.7, 1e-12);
  EXPECT_NEAR(alpha[1], 0.3, 1e-12);
  const auto oracle_alpha = oracle::ensemble_alpha({{{std::log(9.0)}, {0.0}}, {{std::log(9.0)}, {0.0}}}, {{1.0}, {0.0}});
  EXPECT_NEAR(alpha[0], oracle_alpha[0], 1e-12);
  const Var av = ensemble::ensemble_weights(Var::constant(Matrix(f_s)), feats, p);
  EXPECT_NEAR(av.value()(0, 0), 0.7, 1e-12);
}

TEST(EnsembleWeights, MatchesOracleOnRandomParams) {
  nn::Rng rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    const int heads = 1 + trial % 4, n = 1 + trial % 5;
    EnsembleParams p(heads, 3, 4, 2, rng);
    for (auto& e : p.store().entries()) e.var.mutable_value() = nn::random_normal(e.var.rows(), e.var.cols(), 1.0, rng);
    const Matrix feats = nn::random_normal(n, 3, 1.0, rng);
    const nn::RowVector f_s = nn::random_normal(1, 4, 1.0, rng);
    std::vector<std::vector<std::vector<double>>> keys(static_cast<std::size_t>(heads));
    std::vector<std::vector<double>> queries;
    for (int h = 0; h < heads; ++h) {
      for (int i = 0; i < n; ++i) {
        const Matrix k = feats.row(i) * p.wk(h).value() + p.bk(h).value();
        keys[static_cast<std::size_t>(h)].emplace_back(k.data(), k.data() + k.size());
      }
      const Matrix q = f_s * p.wq(h).value() + p.bq(h).value();
      queries.emplace_back(q.data(), q.data() + q.size());
    }
    const auto want = oracle::ensemble_alpha(keys, queries);
    const auto got = ensemble::ensemble_weights(f_s, feats, p);
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
      EXPECT_NEAR(got[static_cast<std::size_t>(i)], want[static_cast<std::size_t>(i)], 1e-12);
      EXPECT_GE(got[static_cast<std::size_t>(i)], 0.0);
      total += got[static_cast<std::size_t>(i)];
    }
    EXPECT_NEAR(total, 1.0, 1e-9);
  }
}

TEST(EnsembleWeights, SingleTeacherGetsAllWeight) {
  nn::Rng rng(2);
  for (int heads : {1, 3}) {
    EnsembleParams p(heads, 5, 4, 3, rng);
    const auto a = ensemble::ensemble_weights(nn::RowVector(nn::random_normal(1, 4, 1.0, rng)),
                                              nn::random_normal(1, 5, 1.0, rng), p);
    ASSERT_EQ(a.size(), 1u);
    EXPECT_EQ(a[0], 1.0);
  }
}

TEST(EnsembleWeights, IdenticalTeachersAreUniform) {
  nn::Rng rng(3);
  EnsembleParams p(2, 5, 4, 3, rng);
  const Matrix row = nn::random_normal(1, 5, 1.0, rng);
  const Matrix feats = row.replicate(4, 1);
  for (double a : ensemble::ensemble_weights(nn::RowVector(nn::random_normal(1, 4, 1.0, rng)), feats, p)) {
    EXPECT_NEAR(a, 0.25, 1e-15);
  }
}

TEST(EnsembleWeights, PermutationEquivariant) {
  nn::Rng rng(4);
  EnsembleParams p(3, 4, 4, 3, rng);
  const Matrix feats = nn::random_normal(4, 4, 1.0, rng);
  const nn::RowVector f_s = nn::random_normal(1, 4, 1.0, rng);
  std::vector<int> perm{2, 0, 3, 1};
  Matrix permuted(4, 4);
  for (int i = 0; i < 4; ++i) permuted.row(i) = feats.row(perm[static_cast<std::size_t>(i)]);
  const auto a = ensemble::ensemble_weights(f_s, feats, p);
  const auto b = ensemble::ensemble_weights(f_s, permuted, p);
  std::vector<nn::ProbDist> dists, pdists;
  for (int i = 0; i < 4; ++i) {
    const Matrix l = nn::random_normal(1, 6, 1.0, rng);
    dists.push_back(nn::softmax_temp(std::vector<double>(l.data(), l.data() + 6), 1.0));
  }
  for (int i = 0; i < 4; ++i) {
    EXPECT_NEAR(b[static_cast<std::size_t>(i)], a[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])], 1e-15);
    pdists.push_back(dists[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])]);
  }
  const auto ya = ensemble::ensemble_predict(a, dists), yb = ensemble::ensemble_predict(b, pdists);
  for (std::size_t c = 0; c < 6; ++c) EXPECT_NEAR(ya[c], yb[c], 1e-15);
}

TEST(EnsembleWeights, DimensionMismatchThrows) {
  nn::Rng rng(5);
  EnsembleParams p(1, 4, 3, 2, rng);
  EXPECT_THROW(static_cast<void>(ensemble::ensemble_weights(nn::RowVector::Zero(3), Matrix::Zero(2, 5), p)),
               std::invalid_argument);
  EXPECT_THROW(static_cast<void>(ensemble::ensemble_weights(nn::RowVector::Zero(2), Matrix::Zero(2, 4), p)),
               std::invalid_argument);
}

TEST(EnsemblePredict, SingleTeacherIsExact) {
  const nn::ProbDist d({0.1, 0.2, 0.7});
  const auto y = ensemble::ensemble_predict(std::vector<double>{1.0}, {d});
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(y[i], d[i]);
}

TEST(EnsemblePredict, HalfAndHalf) {
  const auto y = ensemble::ensemble_predict(std::vector<double>{0.5, 0.5}, {nn::ProbDist({1.0, 0.0}), nn::ProbDist({0.0, 1.0})});
  EXPECT_EQ(y[0], 0.5);
  EXPECT_EQ(y[1], 0.5);
}

TEST(EnsemblePredict, StaysInSimplex) {
  nn::Rng rng(6);
  std::uniform_int_distribution<int> nd(1, 5), cd(2, 8);
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = nd(rng), c = cd(rng);
    std::vector<double> alpha(static_cast<std::size_t>(n));
    for (double& a : alpha) a = std::exponential_distribution<double>(1.0)(rng);
    const double s = std::accumulate(alpha.begin(), alpha.end(), 0.0);
    for (double& a : alpha) a /= s;
    std::vector<nn::ProbDist> dists;
    for (int i = 0; i < n; ++i) {
      const Matrix l = nn::random_normal(1, c, 2.0, rng);
      dists.push_back(nn::softmax_temp(std::vector<double>(l.data(), l.data() + c), 1.0));
    }
    const auto y = ensemble::ensemble_predict(alpha, dists);
    for (std::size_t k = 0; k < y.size(); ++k) EXPECT_GE(y[k], 0.0);
    EXPECT_NEAR(y.total(), 1.0, 1e-9);
  }
}

TEST(EnsemblePredict, RejectsInvalidWeights) {
  const std::vector<nn::ProbDist> d{nn::ProbDist({1.0, 0.0}), nn::ProbDist({0.0, 1.0})};
  EXPECT_THROW(static_cast<void>(ensemble::ensemble_predict(std::vector<double>{1.2, -0.2}, d)), std::invalid_argument);
  EXPECT_THROW(static_cast<void>(ensemble::ensemble_predict(std::vector<double>{0.5, 0.6}, d)), std::invalid_argument);
}

TEST(Gradients, EnsembleWeightsAndDistillationPath) {
  for (const auto& c : testkit::composite_cases()) {
    if (c.name != "ensemble_weights" && c.name != "ensemble_distillation") continue;
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
      const auto r = c.run(seed, 1e-4);
      EXPECT_LT(r.max_rel_error, 1e-4) << c.name << " seed " << seed << " " << r.worst_param;
    }
  }
}

TEST(Gradients, KeyBiasGradientIsZero) {
  nn::Rng rng(7);
  EnsembleParams p(2, 3, 3, 2, rng);
  const Var f_s = Var::leaf(nn::random_normal(1, 3, 1.0, rng));
  const Var loss = nn::sum(nn::mul(ensemble::ensemble_weights(f_s, nn::random_normal(3, 3, 1.0, rng), p),
                                   Var::constant(nn::random_normal(1, 3, 1.0, rng))));
  nn::backward(loss);
  for (int h = 0; h < 2; ++h) {
    ASSERT_TRUE(p.bk(h).has_grad());
    EXPECT_LT(p.bk(h).grad().cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_GT(p.wk(h).grad().cwiseAbs().maxCoeff(), 0.0);
  }
}

struct World {
  corpus::SyntheticSplit split;
  vocab::Vocabulary vocab;
};

World small_world() {
  World w{corpus::gen_synthetic(testkit::small_world(), 1), {}};
  w.vocab = vocab::Vocabulary::build(w.split.train, w.split.test);
  return w;
}

TEST(EnsembleSource, TeachersStayFrozen) {
  auto w = small_world();
  auto tc = testkit::quick_teacher(3, 1);
  teacher::TeacherModel a(tc, teacher::TeacherDims::from(w.vocab));
  tc.seed = 2;
  teacher::TeacherModel b(tc, teacher::TeacherDims::from(w.vocab));
  const auto scfg = testkit::quick_student(1);
  ensemble::EnsembleSource source({&a, &b}, {}, scfg.hidden);
  source.prepare(w.split.train, w.vocab);
  student::StudentModel s(scfg, {static_cast<int>(w.split.train.feature_dim()), w.vocab.num_actions()});
  const auto g = s.forward_graph(w.split.train.instances[0].frames);
  const Var f_s = nn::slice_rows(g.f_v, g.f_v.rows() - 1, 1);
  student::DistillConfig dc;
  dc.top_k.reset();
  nn::backward(student::distill_loss(g.final_logits, source.target(0, f_s, 2.0), dc));
  for (const auto* t : {&a, &b}) {
    for (const auto& p : t->params().entries()) EXPECT_FALSE(p.var.has_grad()) << p.name;
  }
  EXPECT_TRUE(source.params().wq(0).has_grad());
}

TEST(EnsembleSource, SingleTeacherSingleHeadEqualsTeacherDistillation) {
  auto w = small_world();
  auto tc = testkit::quick_teacher(3, 4);
  tc.epochs = 1;
  const auto teacher = teacher::finetune_teacher(w.split.train, w.vocab, tc);
  const auto scfg = testkit::quick_student(3);
  student::DistillConfig dc;
  dc.lambda_s = 4.0;
  dc.top_k = 5;
  student::TrainLog single_log, ens_log;
  student::TeacherSource single(teacher);
  const auto a = student::train_student(w.split.train, w.vocab, scfg, dc, &single, &single_log);
  ensemble::EnsembleConfig ec;
  ec.heads = 1;
  const auto b = ensemble::train_ensemble_student(w.split.train, w.vocab, scfg, dc, ec, {&teacher}, &ens_log);
  ASSERT_EQ(single_log.step_loss.size(), ens_log.step_loss.size());
  for (std::size_t i = 0; i < single_log.step_loss.size(); ++i) {
    EXPECT_NEAR(single_log.step_loss[i], ens_log.step_loss[i], 1e-12) << i;
    EXPECT_NEAR(single_log.step_distill[i], ens_log.step_distill[i], 1e-12) << i;
  }
  EXPECT_EQ(nn::serialize(a.to_checkpoint()), nn::serialize(b.student.to_checkpoint()));
}

TEST(EnsembleSource, MeanPoolAndFixedWeights) {
  auto w = small_world();
  auto tc = testkit::quick_teacher(3, 1);
  teacher::TeacherModel a(tc, teacher::TeacherDims::from(w.vocab));
  tc.seed = 2;
  teacher::TeacherModel b(tc, teacher::TeacherDims::from(w.vocab));
  ensemble::EnsembleConfig ec;
  ec.strategy = ensemble::Strategy::kMeanPool;
  ensemble::EnsembleSource mean({&a, &b}, ec, 8);
  mean.prepare(w.split.train, w.vocab);
  EXPECT_EQ(mean.trainable(), nullptr);
  const Var alpha = mean.weights(0, Var::constant(Matrix::Zero(1, 8)));
  EXPECT_EQ(alpha.value()(0, 0), 0.5);

  ec.strategy = ensemble::Strategy::kFixedWeights;
  ec.fixed_weights = {0.25, 0.75};
  ensemble::EnsembleSource fixed({&a, &b}, ec, 8);
  fixed.prepare(w.split.train, w.vocab);
  EXPECT_EQ(fixed.weights(0, Var::constant(Matrix::Zero(1, 8))).value()(0, 1), 0.75);
  ec.fixed_weights = {0.5, 0.6};
  EXPECT_THROW(ensemble::EnsembleSource({&a, &b}, ec, 8), std::invalid_argument);
  ec.fixed_weights = {1.0};
  EXPECT_THROW(ensemble::EnsembleSource({&a, &b}, ec, 8), std::invalid_argument);
}

TEST(EnsembleSource, ClassSpaceMismatchThrows) {
  auto w = small_world();
  auto tc = testkit::quick_teacher(3);
  const auto dims = teacher::TeacherDims::from(w.vocab);
  teacher::TeacherModel a(tc, dims);
  teacher::TeacherModel b(tc, {dims.tokens, dims.actions + 2, dims.verbs, dims.objects});
  EXPECT_THROW(ensemble::check_teachers({&a, &b}), std::invalid_argument);
  EXPECT_THROW(ensemble::EnsembleSource({&a, &b}, {}, 8), std::invalid_argument);
}

TEST(Strategy, ParseAndName) {
  for (auto s : {ensemble::Strategy::kCrossAttention, ensemble::Strategy::kMeanPool, ensemble::Strategy::kFixedWeights}) {
    EXPECT_EQ(ensemble::parse_strategy(ensemble::strategy_name(s)), s);
  }
  EXPECT_THROW(static_cast<void>(ensemble::parse_strategy("median")), std::invalid_argument);
}

}  // namespace
