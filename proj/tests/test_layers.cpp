#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "oracles.hpp"
#include "pamm/error.hpp"
#include "pamm/layers.hpp"
#include "pamm/linalg.hpp"
#include "pamm/model.hpp"
#include "pamm/pamm.hpp"

using namespace pamm;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

ToyModelConfig small_model(std::optional<PammConfig> pamm = std::nullopt) {
  ToyModelConfig c;
  c.vocab = 8;
  c.seq_len = 6;
  c.d_model = 12;
  c.pamm = pamm;
  return c;
}

}  // namespace

TEST(LinearLayer, IdentityInputReturnsWeight) {
  const auto w = oracle::random_matrix(5, 3, 1);
  PammLinearLayer<float> plain(w);
  PammLinearLayer<float> compressed(w, PammConfig::with_k(2));
  EXPECT_EQ(linear_forward(plain, DenseMatrix::identity(5)), w);
  EXPECT_EQ(linear_forward(compressed, DenseMatrix::identity(5)), w);
}

TEST(LinearLayer, ForwardUntouchedByCompression) {
  const auto w = oracle::random_matrix(6, 4, 2);
  const auto x = oracle::random_matrix(20, 6, 3);
  PammLinearLayer<float> plain(w);
  PammLinearLayer<float> compressed(w, PammConfig::with_ratio(0.1, 0.5, 1));
  const auto z = linear_forward(plain, x);
  EXPECT_EQ(z, linear_forward(compressed, x));
  oracle::Mat ref(20, std::vector<double>(4, 0.0));
  for (std::size_t i = 0; i < 20; ++i)
    for (std::size_t j = 0; j < 4; ++j)
      for (std::size_t p = 0; p < 6; ++p) ref[i][j] += double(x(i, p)) * w(p, j);
  EXPECT_LT(oracle::rel_frob(ref, z), 1e-6);
}

TEST(LinearLayer, FullSampleGradientIsExact) {
  const auto w = oracle::random_matrix(5, 3, 4);
  const auto x = oracle::random_matrix(16, 5, 5);
  const auto dz = oracle::random_matrix(16, 3, 6);
  PammLinearLayer<float> layer(w, PammConfig::with_k(16, kInf, 2));
  linear_forward(layer, x);
  const auto g = linear_backward(layer, dz);
  EXPECT_LT(oracle::rel_frob(oracle::matmul_tn(x, dz), g.grad_weight), 1e-4);
}

TEST(LinearLayer, InputGradientMatchesPlainPath) {
  const auto w = oracle::random_matrix(5, 3, 7);
  const auto x = oracle::random_matrix(16, 5, 8);
  const auto dz = oracle::random_matrix(16, 3, 9);
  PammLinearLayer<float> plain(w);
  PammLinearLayer<float> compressed(w, PammConfig::with_ratio(0.125, 0.2, 3));
  linear_forward(plain, x);
  linear_forward(compressed, x);
  const auto gp = linear_backward(plain, dz);
  const auto gc = linear_backward(compressed, dz);
  EXPECT_EQ(gp.grad_input, gc.grad_input);
  EXPECT_LT(oracle::rel_frob(oracle::matmul_tn(x, dz), gp.grad_weight), 1e-6);
}

TEST(LinearLayer, WeightGradientIsBetaScaledReconstruction) {
  const auto w = oracle::random_matrix(6, 4, 10);
  const auto x = oracle::random_matrix(32, 6, 11);
  const auto dz = oracle::random_matrix(32, 4, 12);
  PammLinearLayer<float> layer(w, PammConfig::with_k(8, kInf, 4));
  linear_forward(layer, x);
  ASSERT_NE(layer.saved_compressed(), nullptr);
  EXPECT_FALSE(layer.holds_full_activation());
  const auto saved = *layer.saved_compressed();
  EXPECT_EQ(layer.retained_scalars(), saved.stored_scalars());
  const auto g = linear_backward(layer, dz);
  auto ref = oracle::matmul_tn(reconstruct(saved), dz);
  for (auto& r : ref)
    for (auto& v : r) v *= *saved.beta;
  EXPECT_LT(oracle::rel_frob(ref, g.grad_weight), 1e-4);
  EXPECT_EQ(layer.retained_scalars(), 0u);
  EXPECT_EQ(layer.peak_retained_scalars(), saved.stored_scalars());
}

TEST(LinearLayer, FreshGeneratorsPerCall) {
  const auto x = oracle::random_matrix(64, 4, 13);
  PammLinearLayer<float> layer(oracle::random_matrix(4, 2, 14), PammConfig::with_k(4, kInf, 5));
  linear_forward(layer, x);
  const auto first = layer.saved_compressed()->generators;
  linear_backward(layer, DenseMatrix(64, 2));
  linear_forward(layer, x);
  EXPECT_NE(first, layer.saved_compressed()->generators);
}

TEST(LinearLayer, BackwardWithoutForwardThrows) {
  PammLinearLayer<float> layer(DenseMatrix(2, 2));
  EXPECT_THROW(linear_backward(layer, DenseMatrix(3, 2)), StateError);
  linear_forward(layer, DenseMatrix(3, 2));
  EXPECT_TRUE(layer.holds_full_activation());
  linear_backward(layer, DenseMatrix(3, 2));
  EXPECT_THROW(linear_backward(layer, DenseMatrix(3, 2)), StateError);
}

TEST(Optimizer, SgdStep) {
  DenseMatrix w(3, 3);
  Optimizer<float> opt({OptimizerKind::sgd, 1.0});
  opt.begin_step();
  opt.update(0, w, DenseMatrix::identity(3), 1.0);
  DenseMatrix expect = DenseMatrix::identity(3);
  for (auto& v : expect.data()) v = -v;
  EXPECT_EQ(w, expect);
}

TEST(Optimizer, LrScaleMultipliesUpdate) {
  const auto g = oracle::random_matrix(4, 4, 15);
  for (auto kind : {OptimizerKind::sgd, OptimizerKind::adam}) {
    DenseMatrix64 plain(4, 4), scaled(4, 4);
    Optimizer<double> opt({kind, 0.1});
    opt.begin_step();
    opt.update(0, plain, g.cast<double>(), 1.0);
    opt.update(1, scaled, g.cast<double>(), 0.25);
    for (std::size_t i = 0; i < 16; ++i) {
      EXPECT_DOUBLE_EQ(scaled.data()[i], 0.25 * plain.data()[i]);
    }
  }
}

TEST(Optimizer, AdamFirstStepClosedForm) {
  const DenseMatrix64 g{{0.5, -2.0}, {1e-3, 0.0}};
  DenseMatrix64 w(2, 2);
  OptimizerConfig cfg;
  cfg.base_lr = 0.01;
  Optimizer<double> opt(cfg);
  opt.begin_step();
  opt.update(0, w, g, 1.0);
  // bias-corrected moments give m = g, v = g^2 on the first step
  for (std::size_t i = 0; i < 4; ++i) {
    const double gi = g.data()[i];
    EXPECT_NEAR(w.data()[i], -0.01 * gi / (std::abs(gi) + 1e-8), 1e-12);
  }
}

TEST(ToyModel, ZeroHeadGivesUniformLoss) {
  auto cfg = small_model();
  cfg.zero_head = true;
  ToyModel<float> model(cfg);
  const auto batch = make_batch(ToyTask::copy_previous, 4, 6, 8, 3);
  EXPECT_NEAR(model.forward(batch), std::log(8.0), 1e-3);
}

TEST(ToyModel, MemorisesSingleExample) {
  ToyModel<float> model(small_model());
  const auto batch = make_batch(ToyTask::reverse, 1, 6, 8, 4);
  OptimizerConfig oc;
  oc.base_lr = 0.01;
  Optimizer<float> opt(oc);
  double loss = 0.0;
  for (int s = 0; s < 200; ++s) {
    loss = model.forward(batch);
    auto grads = model.backward();
    optimizer_step(model, grads, opt);
  }
  EXPECT_LT(model.loss(batch), 0.05) << "last training loss " << loss;
}

TEST(ToyModel, PammLearningRateScaleOnlyOnProjections) {
  ToyModel<float> with(small_model(PammConfig::with_ratio(0.125)));
  for (auto& p : with.parameters()) {
    const bool proj = p.name.find(".wq") != std::string::npos ||
                      p.name.find(".wk") != std::string::npos ||
                      p.name.find(".wv") != std::string::npos;
    EXPECT_EQ(p.lr_scale, proj ? kPammLrScale : 1.0) << p.name;
  }
  ToyModel<float> without(small_model());
  for (auto& p : without.parameters()) EXPECT_EQ(p.lr_scale, 1.0) << p.name;
}

TEST(ToyModel, ForwardAndInputGradsUnchangedByPamm) {
  ToyModel<float> plain(small_model());
  ToyModel<float> comp(small_model(PammConfig::with_ratio(0.125, kInf, 9)));
  const auto batch = make_batch(ToyTask::copy_previous, 4, 6, 8, 5);
  EXPECT_EQ(plain.forward(batch), comp.forward(batch));
  EXPECT_EQ(plain.last_projection_outputs(), comp.last_projection_outputs());
  const auto gp = plain.backward();
  const auto gc = comp.backward();
  ASSERT_EQ(plain.last_projection_input_grads().size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_LE(relative_error(plain.last_projection_input_grads()[i],
                             comp.last_projection_input_grads()[i]),
              1e-6);
  }
  // gradients of parameters outside the projections agree as well
  const auto params = plain.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].lr_scale == 1.0 && params[i].name.find(".w") == std::string::npos) {
      EXPECT_LE(relative_error(gp[i], gc[i]), 1e-6) << params[i].name;
    }
  }
}

TEST(ToyModel, FullSampleTrajectoryMatches) {
  auto pcfg = small_model(PammConfig::with_k(4 * 6, kInf, 1));
  pcfg.pamm_lr_scale = 1.0;
  ToyModel<float> plain(small_model());
  ToyModel<float> comp(pcfg);
  Optimizer<float> o1({}), o2({});
  for (std::size_t s = 0; s < 50; ++s) {
    const auto batch = make_batch(ToyTask::copy_previous, 4, 6, 8, 100 + s);
    const double l1 = plain.forward(batch);
    const double l2 = comp.forward(batch);
    EXPECT_NEAR(l2 / l1, 1.0, 1e-3) << "step " << s;
    auto g1 = plain.backward();
    auto g2 = comp.backward();
    optimizer_step(plain, g1, o1);
    optimizer_step(comp, g2, o2);
  }
}

TEST(ToyModel, LossHasNoSideEffects) {
  ToyModel<float> model(small_model(PammConfig::with_ratio(0.25)));
  const auto batch = make_batch(ToyTask::copy_previous, 2, 6, 8, 6);
  const double l = model.forward(batch);
  EXPECT_NEAR(model.loss(batch), l, 1e-6);
  EXPECT_NO_THROW(model.backward());
}

TEST(ToyModel, RejectsBadBatches) {
  ToyModel<float> model(small_model());
  EXPECT_THROW(model.forward(make_batch(ToyTask::copy_previous, 2, 5, 8, 1)), ShapeError);
  EXPECT_THROW(model.forward(make_batch(ToyTask::copy_previous, 2, 6, 9, 1)), ArgumentError);
  EXPECT_THROW(model.backward(), StateError);
}

TEST(FiniteDifference, LinearOnlyModel) {
  auto cfg = small_model();
  cfg.blocks = 0;
  ToyModel<double> model(cfg);
  const auto batch = make_batch(ToyTask::copy_previous, 3, 6, 8, 7);
  FiniteDifferenceOptions o;
  o.probes = 64;
  EXPECT_LT(finite_difference_check(model, batch, o).max_relative_deviation, 1e-4);
}

TEST(FiniteDifference, AttentionModel) {
  const auto batch = make_batch(ToyTask::reverse, 3, 6, 8, 8);
  ToyModel<double> m64(small_model());
  EXPECT_LT(finite_difference_check(m64, batch).max_relative_deviation, 1e-4);
  // single precision needs a wider step: loss rounding noise scales like eps / h
  ToyModel<float> m32(small_model());
  FiniteDifferenceOptions wide;
  wide.h = 1e-2;
  EXPECT_LT(finite_difference_check(m32, batch, wide).max_relative_deviation, 1e-2);
  for (const char* name : {"block0.wq", "block0.wk", "block0.wv", "block0.wo", "head"}) {
    FiniteDifferenceOptions o;
    o.parameter = name;
    o.probes = 16;
    EXPECT_LT(finite_difference_check(m64, batch, o).max_relative_deviation, 1e-4) << name;
  }
}

TEST(FiniteDifference, ZeroGradientCoordinate) {
  ToyModel<double> model(small_model());
  // token 7 never occurs, so its embedding row has no influence
  auto batch = make_batch(ToyTask::copy_previous, 2, 6, 8, 9);
  for (auto& t : batch.tokens) t %= 7;
  model.forward(batch);
  const auto grads = model.backward();
  const double h = 1e-3;
  for (std::size_t c = 0; c < 12; ++c) {
    EXPECT_LT(std::abs(grads[0](7, c)), 1e-6);
    const double orig = model.embedding()(7, c);
    model.embedding()(7, c) = orig + h;
    const double up = model.loss(batch);
    model.embedding()(7, c) = orig - h;
    const double down = model.loss(batch);
    model.embedding()(7, c) = orig;
    EXPECT_LT(std::abs(up - down) / (2 * h), 1e-6);
  }
  EXPECT_THROW(finite_difference_check(model, batch, {std::string("nope")}), ArgumentError);
}

TEST(FiniteDifference, RefusesPammModels) {
  ToyModel<double> model(small_model(PammConfig::with_ratio(0.5)));
  EXPECT_THROW(finite_difference_check(model, make_batch(ToyTask::reverse, 2, 6, 8, 1)),
               ArgumentError);
}

TEST(Batches, TaskTargets) {
  const auto c = make_batch(ToyTask::copy_previous, 3, 5, 10, 1);
  const auto r = make_batch(ToyTask::reverse, 3, 5, 10, 1);
  for (std::size_t s = 0; s < 3; ++s)
    for (std::size_t t = 0; t < 5; ++t) {
      if (t > 0) EXPECT_EQ(c.targets[s * 5 + t], c.tokens[s * 5 + t - 1]);
      EXPECT_EQ(r.targets[s * 5 + t], r.tokens[s * 5 + 4 - t]);
      EXPECT_LT(c.tokens[s * 5 + t], 10u);
    }
  EXPECT_EQ(make_batch(ToyTask::reverse, 3, 5, 10, 1).tokens, r.tokens);
}
