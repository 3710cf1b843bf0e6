#include <gtest/gtest.h>

#include <cstdlib>

#include "swarmlearn/training.hpp"
#include "test_util.hpp"

using namespace swarmlearn;
using swarmlearn::testing::random_matrix;

namespace {

TrainConfig tiny_config() {
  TrainConfig c;
  c.n = 2;
  c.k = 2;
  c.iterations = 4;
  c.window = 2;
  c.epochs = 3;
  c.batch = 3;
  c.model.hidden = 4;
  c.loss.mc_samples = 100;
  c.seed = 17;
  return c;
}

}  // namespace

TEST(Adam, ZeroGradientKeepsParameters) {
  std::vector<Matrix> p = {random_matrix(2, 3, 1)};
  const std::vector<Matrix> before = p;
  AdamState s = AdamState::for_shapes(p);
  EXPECT_TRUE(adam_update(p, {Matrix(2, 3)}, s));
  EXPECT_EQ(p, before);
  EXPECT_EQ(s.step, 1u);
  EXPECT_EQ(s.m[0], Matrix(2, 3));
  EXPECT_EQ(s.v[0], Matrix(2, 3));
}

TEST(Adam, ConstantGradientGivesUnitSteps) {
  std::vector<Matrix> p = {Matrix(1, 2, 0.0)};
  AdamState s;
  AdamConfig cfg;
  cfg.lr = 0.01;
  for (int i = 0; i < 500; ++i) {
    const double before = p[0][0];
    adam_update(p, {Matrix(1, 2, std::vector<double>{3.0, -0.2})}, s, cfg);
    EXPECT_NEAR(before - p[0][0], cfg.lr, 1e-8);
  }
  EXPECT_NEAR(p[0][1], 500 * cfg.lr, 1e-5);
}

TEST(Adam, MinimizesBowl) {
  std::vector<Matrix> p = {Matrix(2, 1, std::vector<double>{1.5, -2.0})};
  AdamState s;
  AdamConfig cfg;
  cfg.lr = 0.01;
  for (int i = 0; i < 2000; ++i) {
    Matrix g = p[0];
    for (double& v : g.data()) v *= 2.0;
    adam_update(p, {g}, s, cfg);
  }
  EXPECT_LT(std::hypot(p[0][0], p[0][1]), 1e-2);
}

TEST(Adam, NonFiniteGradientIsSkipped) {
  std::vector<Matrix> p = {Matrix(1, 1, 1.0)};
  const std::vector<Matrix> before = p;
  AdamState s = AdamState::for_shapes(p);
  EXPECT_FALSE(adam_update(p, {Matrix(1, 1, NAN)}, s));
  EXPECT_EQ(p, before);
  EXPECT_EQ(s.step, 0u);
  EXPECT_EQ(s.skipped, 1u);
  EXPECT_THROW(adam_update(p, {Matrix(2, 1)}, s), shape_error);
}

TEST(Adam, GlobalNormClipping) {
  std::vector<Matrix> g = {Matrix(1, 2, std::vector<double>{3.0, 0.0}), Matrix(1, 1, 4.0)};
  EXPECT_TRUE(clip_global_norm(g, 1.0));
  EXPECT_NEAR(global_norm(g), 1.0, 1e-15);
  EXPECT_NEAR(g[0][0], 0.6, 1e-15);
  EXPECT_FALSE(clip_global_norm(g, 5.0));
}

TEST(Training, MergeIsOrderIndependent) {
  std::vector<std::vector<Matrix>> grads;
  std::vector<std::uint64_t> keys;
  for (std::uint64_t q = 0; q < 6; ++q) {
    grads.push_back({random_matrix(3, 3, q, 1e3), random_matrix(1, 4, q + 50, 1e-3)});
    keys.push_back(derive_seed(9, {q}));
  }
  const auto a = merge_gradients(grads, keys);
  std::vector<std::vector<Matrix>> g2(grads.rbegin(), grads.rend());
  std::vector<std::uint64_t> k2(keys.rbegin(), keys.rend());
  std::swap(g2[1], g2[4]);
  std::swap(k2[1], k2[4]);
  EXPECT_EQ(a, merge_gradients(g2, k2));
  EXPECT_THROW(merge_gradients(grads, {1}), shape_error);
}

TEST(Training, ZeroEpochsReturnInitialization) {
  TrainConfig c = tiny_config();
  c.epochs = 0;
  const TrainResult r = train(c);
  EXPECT_TRUE(r.log.empty());
  EXPECT_EQ(to_text(r.checkpoint), to_text(initial_checkpoint(c)));
}

TEST(Training, IdenticalConfigsGiveIdenticalCheckpoints) {
  const TrainConfig c = tiny_config();
  EXPECT_EQ(to_text(train(c).checkpoint), to_text(train(c).checkpoint));
}

TEST(Training, ThreadCountDoesNotChangeResults) {
  TrainConfig c = tiny_config();
  const std::string serial = to_text(train(c).checkpoint);
  c.threads = 3;
  EXPECT_EQ(to_text(train(c).checkpoint), serial);
}

TEST(Training, ResumeMatchesUninterruptedRun) {
  TrainConfig c = tiny_config();
  const TrainResult full = train(c);
  c.epochs = 1;
  const TrainResult first = train(c);
  c.epochs = 3;
  const TrainResult rest = train(c, from_text(to_text(first.checkpoint)));
  EXPECT_EQ(to_text(rest.checkpoint), to_text(full.checkpoint));
  ASSERT_EQ(rest.log.size(), 2u);
  EXPECT_EQ(rest.log.front().epoch, 2u);
  EXPECT_EQ(rest.log.back().loss, full.log.back().loss);
}

TEST(Training, SingleWindowUpdateMatchesManualComputation) {
  TrainConfig c = tiny_config();
  c.iterations = 3;
  c.window = 20;
  c.epochs = 1;
  const TrainResult r = train(c);

  Checkpoint ck = initial_checkpoint(c);
  const SearchSpace space = SearchSpace::box(c.n);
  LossConfig loss = c.loss;
  loss.h0 = compute_h0(c, ck.params);
  EXPECT_EQ(r.checkpoint.h0, loss.h0);
  std::vector<std::vector<Matrix>> grads;
  std::vector<std::uint64_t> keys;
  for (std::size_t q = 0; q < c.batch; ++q) {
    const std::uint64_t is = derive_seed(c.seed, {1, 0, q});
    const FunctionInstance f = sample_instance(c.family, space, is, c.alpha);
    ad::Tape tape;
    const MetaParamVars vars = bind(ck.params, &tape);
    SwarmRunner runner(f, c.model_config(), uniform_positions(space, c.k, derive_seed(c.seed, {2, 0, q})));
    for (std::size_t t = 0; t < c.iterations; ++t) runner.step(vars);
    const FunctionLoss fl = function_loss(runner.record(), space, loss, derive_seed(c.seed, {3, 0, is, 0}));
    grads.push_back(tape.backward(fl.total).parameters());
    keys.push_back(is);
  }
  std::vector<Matrix> g = merge_gradients(grads, keys);
  const std::vector<Matrix> values = ck.params.tensor_values();
  for (std::size_t i = 0; i < g.size(); ++i)
    for (std::size_t j = 0; j < g[i].size(); ++j) g[i][j] = g[i][j] / 3.0 + 2.0 * c.loss.l2 * values[i][j];
  clip_global_norm(g, c.clip_norm);
  std::vector<Matrix> p = values;
  adam_update(p, g, ck.adam, c.adam);
  const std::vector<Matrix> trained = r.checkpoint.params.tensor_values();
  for (std::size_t i = 0; i < p.size(); ++i)
    for (std::size_t j = 0; j < p[i].size(); ++j) EXPECT_NEAR(trained[i][j], p[i][j], 1e-15);
}

TEST(Training, LogRowsAreFinite) {
  const TrainResult r = train(tiny_config());
  ASSERT_EQ(r.log.size(), 3u);
  for (std::size_t e = 0; e < 3; ++e) {
    EXPECT_EQ(r.log[e].epoch, e + 1);
    EXPECT_TRUE(std::isfinite(r.log[e].loss));
    EXPECT_GT(r.log[e].mean_entropy, 0.0);
    EXPECT_EQ(r.log[e].wall_ms, 0.0);
  }
}

TEST(Training, LambdaZeroSkipsEntropy) {
  TrainConfig c = tiny_config();
  c.level = AblationLevel::b3;
  const TrainResult r = train(c);
  EXPECT_TRUE(std::isnan(r.checkpoint.h0));
  EXPECT_EQ(r.checkpoint.lambda, 0.0);
  for (const TrainLogRow& row : r.log) EXPECT_EQ(row.mean_entropy, 0.0);
}

TEST(Training, SingleParticleBaseline) {
  TrainConfig c = tiny_config();
  c.level = AblationLevel::b0;
  EXPECT_EQ(c.particles(), 1u);
  const TrainResult r = train(c);
  EXPECT_EQ(r.checkpoint.level, AblationLevel::b0);
  EXPECT_EQ(r.checkpoint.params.config.arch, architecture_for(AblationLevel::b0));
}

TEST(Training, ConfigValidation) {
  TrainConfig c = tiny_config();
  c.level = AblationLevel::b1;
  EXPECT_THROW(train(c), config_error);
  c = tiny_config();
  c.batch = 0;
  EXPECT_THROW(c.validate(), config_error);
  c = tiny_config();
  c.loss.mc_samples = 50;
  EXPECT_THROW(c.validate(), config_error);
}

TEST(Training, ResumeRejectsMismatchedArchitecture) {
  TrainConfig c = tiny_config();
  c.epochs = 1;
  Checkpoint ck = train(c).checkpoint;
  c.level = AblationLevel::b2;
  c.epochs = 2;
  EXPECT_THROW(train(c, ck), config_error);
}

TEST(Checkpoint, TextRoundTripIsExact) {
  const Checkpoint ck = train(tiny_config()).checkpoint;
  const std::string text = to_text(ck);
  const Checkpoint back = from_text(text);
  EXPECT_EQ(to_text(back), text);
  EXPECT_EQ(back.params.tensor_values(), ck.params.tensor_values());
  EXPECT_EQ(back.adam.step, ck.adam.step);
  EXPECT_EQ(back.h0, ck.h0);
}

TEST(Checkpoint, MalformedTextIsRejected) {
  const std::string text = to_text(initial_checkpoint(tiny_config()));
  EXPECT_THROW(from_text("not a checkpoint\n"), config_error);
  std::string missing = text;
  missing.erase(missing.find("level"), missing.find('\n', missing.find("level")) - missing.find("level") + 1);
  EXPECT_THROW(from_text(missing), config_error);
  std::string truncated = text.substr(0, text.size() / 2);
  EXPECT_THROW(from_text(truncated), config_error);
}

TEST(Parallel, RunsEveryIndexOnce) {
  std::vector<int> hits(50, 0);
  parallel_for(50, 4, [&](std::size_t i) { hits[i] += 1; });
  for (int h : hits) EXPECT_EQ(h, 1);
}

TEST(Parallel, RethrowsLowestIndexError) {
  try {
    parallel_for(20, 4, [](std::size_t i) {
      if (i == 7 || i == 13) throw numeric_error("index " + std::to_string(i));
    });
    FAIL();
  } catch (const numeric_error& e) {
    EXPECT_STREQ(e.what(), "index 7");
  }
}

TEST(Parallel, ThreadCountFromEnvironment) {
  ::setenv("SWARMLEARN_THREADS", "3", 1);
  EXPECT_EQ(thread_count_from_env(), 3u);
  ::setenv("SWARMLEARN_THREADS", "zero", 1);
  EXPECT_THROW(thread_count_from_env(), config_error);
  ::unsetenv("SWARMLEARN_THREADS");
  EXPECT_EQ(thread_count_from_env(), 1u);
}
