#include <gtest/gtest.h>

#include <boost/math/distributions/chi_squared.hpp>

#include <algorithm>
#include <sstream>

#include "kd/corpus/dataset_io.hpp"
#include "kd/corpus/instructions.hpp"
#include "kd/corpus/synthetic.hpp"

namespace {

using namespace kd::corpus;

ActionSeq parse(std::vector<std::string> sentences, std::vector<SkipRecord>* skipped = nullptr) {
  auto r = parse_instructions({"d", std::move(sentences)});
  if (skipped) *skipped = r.skipped;
  return r.actions;
}

ActionSeq seq(std::initializer_list<std::pair<const char*, const char*>> steps) {
  ActionSeq s;
  for (auto [v, o] : steps) s.steps.push_back({v, o});
  return s;
}

TEST(Instructions, SimpleSentences) {
  EXPECT_EQ(parse({"Cut the onion.", "Heat the pan."}), seq({{"cut", "onion"}, {"heat", "pan"}}));
}

TEST(Instructions, SharedObjectAcrossAnd) {
  EXPECT_EQ(parse({"Wash and dry the cutting board."}), seq({{"wash", "board:cutting"}, {"dry", "board:cutting"}}));
}

TEST(Instructions, IntransitiveGetsNoneObject) { EXPECT_EQ(parse({"Stir."}), seq({{"stir", kNoneObject}})); }

TEST(Instructions, ThenDoesNotShareObject) {
  EXPECT_EQ(parse({"Stir then add the salt."}), seq({{"stir", kNoneObject}, {"add", "salt"}}));
}

TEST(Instructions, ParticleAndPrepositionalPhrase) {
  EXPECT_EQ(parse({"Put down the knife on the board."}), seq({{"put-down", "knife"}}));
}

TEST(Instructions, UnrecognizedClauseIsSkippedAndReported) {
  std::vector<SkipRecord> skipped;
  const auto actions = parse({"The onion is ready.", "Cut the onion."}, &skipped);
  EXPECT_EQ(actions, seq({{"cut", "onion"}}));
  ASSERT_EQ(skipped.size(), 1u);
  EXPECT_EQ(skipped[0].doc_id, "d");
  std::ostringstream os;
  write_skip_report(skipped, os);
  EXPECT_NE(os.str().find("The onion is ready"), std::string::npos);
}

TEST(Instructions, RenderedDocumentsParseBack) {
  const auto world = make_world(SynthConfig{});
  const auto seqs = sample_action_sequences(world, 40, 8, 3);
  const auto lines = render_corpus(seqs, 3);
  ASSERT_EQ(lines.size(), seqs.size());
  std::istringstream in([&] {
    std::string all;
    for (const auto& l : lines) all += l + "\n";
    return all;
  }());
  const auto docs = read_instruction_corpus(in);
  ASSERT_EQ(docs.size(), seqs.size());
  for (std::size_t i = 0; i < docs.size(); ++i) {
    const auto r = parse_instructions(docs[i]);
    EXPECT_TRUE(r.skipped.empty());
    EXPECT_EQ(r.actions, seqs[i]) << lines[i];
  }
}

TEST(Synthetic, SameSeedIsIdentical) {
  SynthConfig cfg;
  cfg.n_train = 50;
  cfg.n_test = 20;
  const auto a = gen_synthetic(cfg, 11), b = gen_synthetic(cfg, 11);
  std::ostringstream sa, sb;
  write_dataset(a.train, sa);
  write_dataset(b.train, sb);
  EXPECT_EQ(sa.str(), sb.str());
  EXPECT_EQ(a.test.instances, b.test.instances);
}

TEST(Synthetic, DifferentSeedsDiffer) {
  SynthConfig cfg;
  cfg.n_train = 20;
  cfg.n_test = 5;
  EXPECT_NE(gen_synthetic(cfg, 1).train.instances, gen_synthetic(cfg, 2).train.instances);
}

TEST(Synthetic, ShapesFollowConfig) {
  SynthConfig cfg;
  cfg.n_train = 30;
  cfg.n_test = 10;
  cfg.context_len = 4;
  cfg.frames_per_segment = 3;
  cfg.feature_dim = 5;
  const auto split = gen_synthetic(cfg, 0);
  EXPECT_EQ(split.train.instances.size(), 30u);
  EXPECT_EQ(split.test.instances.size(), 10u);
  for (const auto& inst : split.train.instances) {
    EXPECT_EQ(inst.frames.rows(), 12);
    EXPECT_EQ(inst.frames.cols(), 5);
    EXPECT_EQ(inst.segments.steps.size(), 4u);
  }
  validate(split.train);
}

TEST(Synthetic, ContextLongerThanTrajectoryNamesTrajectory) {
  SynthConfig cfg;
  cfg.context_len = 10;
  cfg.trajectory_len = 10;
  try {
    static_cast<void>(gen_synthetic(cfg, 0));
    FAIL() << "expected an error";
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("trajectory train/0"), std::string::npos) << e.what();
  }
}

TEST(Synthetic, NoiselessDeterministicChainIsPerfectlyPredictable) {
  SynthConfig cfg;
  cfg.n_states = 12;
  cfg.n_actions = 12;
  cfg.branching = 1;
  cfg.emission_noise_sigma = 0.0;
  cfg.n_train = 10;
  cfg.n_test = 200;
  const auto world = make_world(cfg);
  const auto split = gen_synthetic(world, 5);

  // Bayes predictor: decode the last frame to an action, step the chain once.
  auto decode = [&](const kd::nn::Matrix& frames) {
    const auto last = frames.row(frames.rows() - 1);
    int best = 0;
    for (int a = 1; a < cfg.n_actions; ++a) {
      if ((world.embeddings.row(a) - last).norm() < (world.embeddings.row(best) - last).norm()) best = a;
    }
    return best;
  };
  int correct = 0;
  for (const auto& inst : split.test.instances) {
    const int a = decode(inst.frames);
    const auto state = std::find(world.emission.begin(), world.emission.end(), a) - world.emission.begin();
    const auto& row = world.transition[static_cast<std::size_t>(state)];
    const auto next = std::max_element(row.begin(), row.end()) - row.begin();
    correct += world.actions[static_cast<std::size_t>(world.emission[static_cast<std::size_t>(next)])] == inst.target;
  }
  EXPECT_EQ(correct, static_cast<int>(split.test.instances.size()));
}

TEST(Synthetic, StationaryDistributionIsFixedPoint) {
  SynthConfig cfg;
  cfg.n_states = 25;
  cfg.branching = 4;
  const auto world = make_world(cfg);
  const auto& pi = world.stationary;
  for (std::size_t j = 0; j < pi.size(); ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < pi.size(); ++i) s += pi[i] * world.transition[i][j];
    EXPECT_NEAR(s, pi[j], 1e-10);
  }
}

TEST(Synthetic, TargetHistogramMatchesStationaryDistribution) {
  SynthConfig cfg;
  cfg.n_actions = 20;
  cfg.n_states = 40;
  cfg.branching = 4;
  cfg.context_len = 2;
  cfg.trajectory_len = 3;  // one window per trajectory: independent draws
  cfg.n_train = 500;
  cfg.n_test = 1;
  const auto world = make_world(cfg);

  // Oracle: plain power iteration on the transition matrix.
  const auto n = world.transition.size();
  std::vector<double> pi(n, 1.0 / static_cast<double>(n));
  for (int it = 0; it < 20000; ++it) {
    std::vector<double> next(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) next[j] += 0.5 * pi[i] * (world.transition[i][j] + (i == j ? 1.0 : 0.0));
    }
    pi = next;
  }
  std::vector<double> expected(static_cast<std::size_t>(cfg.n_actions), 0.0);
  for (std::size_t s = 0; s < n; ++s) expected[static_cast<std::size_t>(world.emission[s])] += pi[s];

  const auto split = gen_synthetic(world, 17);
  std::vector<double> observed(expected.size(), 0.0);
  for (const auto& inst : split.train.instances) {
    const auto it = std::find(world.actions.begin(), world.actions.end(), inst.target);
    observed[static_cast<std::size_t>(it - world.actions.begin())] += 1.0;
  }
  // Pool classes with expected count < 5 into one bin.
  double chi2 = 0.0, pooled_o = 0.0, pooled_e = 0.0;
  int bins = 0;
  for (std::size_t c = 0; c < expected.size(); ++c) {
    const double e = expected[c] * cfg.n_train;
    if (e < 5.0) {
      pooled_o += observed[c];
      pooled_e += e;
      continue;
    }
    chi2 += (observed[c] - e) * (observed[c] - e) / e;
    ++bins;
  }
  if (pooled_e > 0.0) {
    chi2 += (pooled_o - pooled_e) * (pooled_o - pooled_e) / pooled_e;
    ++bins;
  }
  const boost::math::chi_squared dist(bins - 1);
  EXPECT_GT(boost::math::cdf(boost::math::complement(dist, chi2)), 0.01) << "chi2 " << chi2 << " bins " << bins;
}

TEST(DatasetIo, RoundTripIsExact) {
  SynthConfig cfg;
  cfg.n_train = 25;
  cfg.n_test = 5;
  const auto split = gen_synthetic(cfg, 4);
  std::stringstream ss;
  write_dataset(split.train, ss);
  const auto back = read_dataset(ss);
  EXPECT_EQ(back.instances, split.train.instances);
  EXPECT_EQ(back.tau, split.train.tau);
}

TEST(DatasetIo, EmptyFileIsAnError) {
  std::istringstream in("");
  try {
    static_cast<void>(read_dataset(in));
    FAIL();
  } catch (const std::exception& e) {
    EXPECT_NE(std::string(e.what()).find("no instances"), std::string::npos);
  }
}

TEST(DatasetIo, MissingTargetNamesLineAndField) {
  std::istringstream in(
      "{\"id\":\"a\",\"frames\":[[1]],\"segments\":[{\"verb\":\"cut\",\"object\":\"onion\"}],"
      "\"target\":{\"verb\":\"eat\",\"object\":\"onion\"}}\n"
      "{\"id\":\"b\",\"frames\":[[1]],\"segments\":[{\"verb\":\"cut\",\"object\":\"onion\"}]}\n");
  try {
    static_cast<void>(read_dataset(in));
    FAIL();
  } catch (const DatasetError& e) {
    EXPECT_EQ(e.line(), 2u);
    EXPECT_EQ(e.field(), "target");
  }
}

TEST(DatasetIo, FeatureDimMismatchIsSchemaError) {
  std::istringstream in(
      "{\"id\":\"a\",\"frames\":[[1,2]],\"segments\":[{\"verb\":\"cut\",\"object\":\"x\"}],"
      "\"target\":{\"verb\":\"eat\",\"object\":\"x\"}}\n"
      "{\"id\":\"b\",\"frames\":[[1]],\"segments\":[{\"verb\":\"cut\",\"object\":\"x\"}],"
      "\"target\":{\"verb\":\"eat\",\"object\":\"x\"}}\n");
  try {
    static_cast<void>(read_dataset(in));
    FAIL();
  } catch (const DatasetError& e) {
    EXPECT_EQ(e.line(), 2u);
    EXPECT_EQ(e.field(), "frames");
  }
}

TEST(Types, FrameLabelsAlignToSegments) {
  Instance inst;
  inst.frames = kd::nn::Matrix::Zero(6, 1);
  inst.segments = seq({{"a", "x"}, {"b", "y"}, {"c", "z"}});
  inst.target = {"d", "w"};
  const auto cur = frame_segment_labels(inst);
  const auto next = frame_next_labels(inst);
  ASSERT_EQ(cur.size(), 6u);
  EXPECT_EQ(cur[0].verb, "a");
  EXPECT_EQ(cur[1].verb, "a");
  EXPECT_EQ(cur[2].verb, "b");
  EXPECT_EQ(cur[5].verb, "c");
  EXPECT_EQ(next[0].verb, "b");
  EXPECT_EQ(next[5].verb, "d");
}

TEST(Types, ValidateRejectsEmptySegments) {
  Dataset ds;
  Instance inst;
  inst.id = "bad";
  inst.frames = kd::nn::Matrix::Zero(2, 2);
  inst.target = {"cut", "onion"};
  ds.instances.push_back(inst);
  try {
    validate(ds);
    FAIL();
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("bad"), std::string::npos);
  }
}

}  // namespace
