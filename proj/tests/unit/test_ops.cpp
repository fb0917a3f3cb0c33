/* Copyright 2026 The Omni-AD Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include <gtest/gtest.h>

#include <cmath>

#include "../common/helpers.hpp"
#include "../common/oracles.hpp"
#include "omniad/errors.hpp"
#include "omniad/gradcheck.hpp"
#include "omniad/ops.hpp"

using namespace omniad;
using testing_util::max_abs_diff;
using testing_util::random_tensor;

TEST(Tensor, RejectsZeroExtentsAndSharesStorage) {
  EXPECT_THROW(Tensor(Shape{2, 0}), DimensionError);
  Tensor a = Tensor::ones({2, 2});
  Tensor b = a;
  b.mutable_data()[0] = 5.0;
  EXPECT_EQ(a[0], 5.0);
  EXPECT_TRUE(a.same_storage(b));
  EXPECT_FALSE(a.detach().same_storage(a));
  EXPECT_EQ(shape_string({2, 3}), "[2x3]");
}

TEST(Tensor, BackwardRequiresScalarLoss) {
  Tensor x = Tensor::ones({3});
  x.set_requires_grad();
  Tape tape;
  Tensor y;
  {
    Tape::Recording rec(tape);
    y = ops::scale(x, 2.0);
  }
  EXPECT_THROW(backward(y, tape), ContractError);
}

TEST(Tensor, LeafGradientsAccumulateAcrossBackwardCalls) {
  Tensor x = Tensor::from({2}, {1.0, -2.0});
  x.set_requires_grad();
  for (int round = 0; round < 2; ++round) {
    Tape tape;
    Tensor loss;
    {
      Tape::Recording rec(tape);
      loss = ops::sum_squares(x);
    }
    backward(loss, tape);
  }
  EXPECT_DOUBLE_EQ(x.grad()[0], 4.0);
  EXPECT_DOUBLE_EQ(x.grad()[1], -8.0);
}

TEST(Tensor, NoGradGuardSuppressesRecording) {
  Tensor x = Tensor::ones({2});
  x.set_requires_grad();
  Tape tape;
  Tape::Recording rec(tape);
  {
    NoGradGuard guard;
    ops::relu(x);
  }
  EXPECT_EQ(tape.size(), 0u);
  ops::relu(x);
  EXPECT_EQ(tape.size(), 1u);
}

TEST(Ops, MatmulMatchesLoopOracle) {
  Rng rng(1);
  const Tensor a = random_tensor({5, 7}, rng);
  const Tensor b = random_tensor({7, 3}, rng);
  EXPECT_LT(max_abs_diff(ops::matmul(a, b), oracle::matmul(a.values(), b.values(), 5, 7, 3)), 1e-12);
}

TEST(Ops, MatmulShapeErrorNamesBothOperands) {
  try {
    ops::matmul(Tensor({2, 3}), Tensor({4, 5}));
    FAIL();
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2x3]"), std::string::npos);
    EXPECT_NE(msg.find("[4x5]"), std::string::npos);
  }
}

TEST(Ops, SoftmaxRowsSumToOneAndResistOverflow) {
  const Tensor x = Tensor::from({2, 3}, {1000.0, 1001.0, 1002.0, -5.0, 0.0, 5.0});
  const Tensor s = ops::softmax_rows(x);
  for (std::size_t r = 0; r < 2; ++r) {
    EXPECT_NEAR(s[r * 3] + s[r * 3 + 1] + s[r * 3 + 2], 1.0, 1e-15);
  }
  const auto want = oracle::softmax({1000.0, 1001.0, 1002.0});
  for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(s[j], want[j], 1e-15);
}

TEST(Ops, LayerNormMatchesOracle) {
  Rng rng(2);
  const Tensor x = random_tensor({4, 6}, rng, 3.0);
  const Tensor g = random_tensor({6}, rng);
  const Tensor b = random_tensor({6}, rng);
  EXPECT_LT(max_abs_diff(ops::layer_norm(x, g, b), oracle::layer_norm(x.values(), g.values(), b.values(), 4, 6)),
            1e-12);
}

TEST(Ops, DepthwiseIsBitwiseEqualToLoopOracle) {
  Rng rng(3);
  for (std::size_t k : {3u, 5u}) {
    const Tensor x = random_tensor({6, 7, 4}, rng);
    const Tensor w = random_tensor({k, k, 4}, rng);
    const Tensor y = ops::depthwise_conv2d(x, w);
    EXPECT_EQ(y.values(), oracle::depthwise(x.values(), w.values(), 6, 7, 4, k));
  }
}

TEST(Ops, DepthwiseIdentityKernelAndEvenKernelRejected) {
  Rng rng(4);
  const Tensor x = random_tensor({5, 5, 3}, rng);
  Tensor w = Tensor::zeros({3, 3, 3});
  for (std::size_t c = 0; c < 3; ++c) w.mutable_data()[(1 * 3 + 1) * 3 + c] = 1.0;
  EXPECT_EQ(ops::depthwise_conv2d(x, w).values(), x.values());
  EXPECT_THROW(ops::depthwise_conv2d(x, Tensor({4, 4, 3})), ConfigError);
}

TEST(Ops, Conv2dMatchesOracleForBothStrides) {
  Rng rng(5);
  for (std::size_t stride : {1u, 2u}) {
    const Tensor x = random_tensor({8, 6, 3}, rng);
    const Tensor w = random_tensor({3, 3, 3, 5}, rng);
    const Tensor b = random_tensor({5}, rng);
    std::size_t oh = 0, ow = 0;
    const auto want = oracle::conv2d(x.values(), w.values(), b.values(), 8, 6, 3, 5, 3, stride, oh, ow);
    const Tensor y = ops::conv2d(x, w, b, stride);
    EXPECT_EQ(y.shape(), (Shape{oh, ow, 5}));
    EXPECT_LT(max_abs_diff(y, want), 1e-12);
  }
}

TEST(Ops, BilinearResizeMatchesOracleAndKeepsConstants) {
  Rng rng(6);
  const Tensor x = random_tensor({3, 4, 2}, rng);
  EXPECT_LT(max_abs_diff(ops::bilinear_resize(x, 7, 9), oracle::bilinear(x.values(), 3, 4, 2, 7, 9)), 1e-12);
  EXPECT_LT(max_abs_diff(ops::bilinear_resize(x, 2, 2), oracle::bilinear(x.values(), 3, 4, 2, 2, 2)), 1e-12);
  EXPECT_EQ(ops::bilinear_resize(x, 3, 4).values(), x.values());
  const Tensor c(Shape{2, 2, 1}, 0.75);
  const Tensor up = ops::bilinear_resize(c, 32, 32);
  for (double v : up.values()) EXPECT_DOUBLE_EQ(v, 0.75);
}

TEST(Ops, BatchNormTrainingUsesBatchStatsAndUpdatesRunningBuffers) {
  Rng rng(7);
  const Tensor x = random_tensor({2, 3, 3, 2}, rng, 2.0);
  const Tensor g = Tensor::ones({2});
  const Tensor b = Tensor::zeros({2});
  Tensor rm = Tensor::zeros({2});
  Tensor rv = Tensor::ones({2});
  const Tensor y = ops::batch_norm(x, g, b, rm, rv, true, 0.1);
  const std::size_t rows = 18;
  for (std::size_t c = 0; c < 2; ++c) {
    double mean = 0.0, sq = 0.0;
    for (std::size_t r = 0; r < rows; ++r) mean += x[r * 2 + c];
    mean /= rows;
    for (std::size_t r = 0; r < rows; ++r) sq += (x[r * 2 + c] - mean) * (x[r * 2 + c] - mean);
    EXPECT_NEAR(rm[c], 0.1 * mean, 1e-12);
    EXPECT_NEAR(rv[c], 0.9 + 0.1 * sq / (rows - 1), 1e-12);
    for (std::size_t r = 0; r < rows; ++r) {
      EXPECT_NEAR(y[r * 2 + c], (x[r * 2 + c] - mean) / std::sqrt(sq / rows + 1e-5), 1e-12);
    }
  }
  Tensor rm2 = rm.detach(), rv2 = rv.detach();
  const Tensor z = ops::batch_norm(x, g, b, rm2, rv2, false);
  EXPECT_EQ(rm2.values(), rm.values());
  EXPECT_NEAR(z[0], (x[0] - rm[0]) / std::sqrt(rv[0] + 1e-5), 1e-12);
}

TEST(Ops, GeluUsesErf) {
  const Tensor x = Tensor::from({3}, {-1.0, 0.0, 2.0});
  const Tensor y = ops::gelu(x);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_NEAR(y[i], 0.5 * x[i] * (1.0 + std::erf(x[i] / std::sqrt(2.0))), 1e-15);
  }
}

TEST(Ops, ConcatChannelsInterleavesPerPosition) {
  const Tensor a = Tensor::from({2, 1}, {1.0, 2.0});
  const Tensor b = Tensor::from({2, 2}, {3.0, 4.0, 5.0, 6.0});
  EXPECT_EQ(ops::concat_channels(a, b).values(), (std::vector<double>{1, 3, 4, 2, 5, 6}));
  EXPECT_THROW(ops::concat_channels(a, Tensor({3, 2})), DimensionError);
}

// ---- gradients -----------------------------------------------------------------

class OpGradients : public ::testing::Test {
 protected:
  Rng rng{11};
  static constexpr double kTol = 1e-4;
};

TEST_F(OpGradients, Elementwise) {
  Tensor x = random_tensor({3, 4}, rng);
  const Tensor y = random_tensor({3, 4}, rng);
  EXPECT_LT(grad_check([&] { return ops::sum(ops::mul(ops::add(x, y), ops::sub(x, y))); }, x), kTol);
  EXPECT_LT(grad_check([&] { return ops::sum_squares(ops::gelu(x)); }, x), kTol);
  EXPECT_LT(grad_check([&] { return ops::sum(ops::scale(ops::relu(ops::add(x, y)), 3.0)); }, x), kTol);
}

TEST_F(OpGradients, LinearAndPointwise) {
  Tensor x = random_tensor({2, 3, 3, 4}, rng);
  Tensor w = random_tensor({4, 5}, rng);
  Tensor b = random_tensor({5}, rng);
  auto f = [&] { return ops::sum_squares(ops::pointwise_conv(x, w, b)); };
  EXPECT_LT(grad_check(f, x), kTol);
  EXPECT_LT(grad_check(f, w), kTol);
  EXPECT_LT(grad_check(f, b), kTol);
}

TEST_F(OpGradients, LayerNorm) {
  Tensor x = random_tensor({3, 6}, rng);
  Tensor g = random_tensor({6}, rng);
  Tensor b = random_tensor({6}, rng);
  const Tensor t = random_tensor({3, 6}, rng);
  auto f = [&] { return ops::sum(ops::mul(ops::layer_norm(x, g, b), t)); };
  EXPECT_LT(grad_check(f, x), kTol);
  EXPECT_LT(grad_check(f, g), kTol);
  EXPECT_LT(grad_check(f, b), kTol);
}

TEST_F(OpGradients, Depthwise) {
  Tensor x = random_tensor({5, 4, 3}, rng);
  Tensor w = random_tensor({3, 3, 3}, rng);
  auto f = [&] { return ops::sum_squares(ops::depthwise_conv2d(x, w)); };
  EXPECT_LT(grad_check(f, x), kTol);
  EXPECT_LT(grad_check(f, w), kTol);
}

TEST_F(OpGradients, Conv2dStrided) {
  Tensor x = random_tensor({6, 5, 2}, rng);
  Tensor w = random_tensor({3, 3, 2, 3}, rng);
  Tensor b = random_tensor({3}, rng);
  auto f = [&] { return ops::sum_squares(ops::conv2d(x, w, b, 2)); };
  EXPECT_LT(grad_check(f, x), kTol);
  EXPECT_LT(grad_check(f, w), kTol);
  EXPECT_LT(grad_check(f, b), kTol);
}

TEST_F(OpGradients, BatchNormTraining) {
  Tensor x = random_tensor({2, 3, 3, 2}, rng);
  Tensor g = random_tensor({2}, rng);
  Tensor b = random_tensor({2}, rng);
  const Tensor t = random_tensor({2, 3, 3, 2}, rng);
  auto f = [&] {
    Tensor rm = Tensor::zeros({2}), rv = Tensor::ones({2});
    return ops::sum(ops::mul(ops::batch_norm(x, g, b, rm, rv, true), t));
  };
  EXPECT_LT(grad_check(f, x), kTol);
  EXPECT_LT(grad_check(f, g), kTol);
  EXPECT_LT(grad_check(f, b), kTol);
}

TEST_F(OpGradients, BilinearAndConcat) {
  Tensor x = random_tensor({3, 2, 2}, rng);
  Tensor y = random_tensor({6, 4, 1}, rng);
  auto f = [&] { return ops::sum_squares(ops::concat_channels(ops::bilinear_resize(x, 6, 4), y)); };
  EXPECT_LT(grad_check(f, x), kTol);
  EXPECT_LT(grad_check(f, y), kTol);
}

TEST_F(OpGradients, SoftmaxAndReshape) {
  Tensor x = random_tensor({2, 5}, rng);
  const Tensor t = random_tensor({5, 2}, rng);
  auto f = [&] { return ops::sum(ops::mul(ops::reshape(ops::softmax_rows(x), {5, 2}), t)); };
  EXPECT_LT(grad_check(f, x), kTol);
}
