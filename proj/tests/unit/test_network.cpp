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

#include <filesystem>

#include "../common/helpers.hpp"
#include "omniad/errors.hpp"
#include "omniad/gradcheck.hpp"
#include "omniad/network.hpp"

using namespace omniad;
using testing_util::random_tensor;

namespace {

NetworkConfig tiny_config() {
  NetworkConfig c;
  c.height = 64;
  c.width = 64;
  c.channels = 4;
  c.depths = {1, 1, 1, 1};
  c.tokens = 4;
  c.heads = 2;
  return c;
}

FeaturePyramid random_pyramid(const NetworkConfig& c, Rng& rng, std::size_t batch = 0) {
  FeaturePyramid p;
  for (std::size_t k = 0; k < 3; ++k) {
    Shape s = c.level_shape(k);
    if (batch) s.insert(s.begin(), batch);
    p.levels[k] = random_tensor(s, rng);
  }
  return p;
}

}  // namespace

TEST(NetworkConfig, LevelAndFusedShapes) {
  NetworkConfig c;
  c.channels = 64;
  for (std::size_t side : {64u, 128u, 256u}) {
    c.height = c.width = side;
    EXPECT_EQ(c.level_shape(0), (Shape{side / 4, side / 4, 64}));
    EXPECT_EQ(c.level_shape(1), (Shape{side / 8, side / 8, 128}));
    EXPECT_EQ(c.level_shape(2), (Shape{side / 16, side / 16, 256}));
    EXPECT_EQ(c.fused_shape(), (Shape{side / 32, side / 32, 512}));
  }
  c.height = 100;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(NetworkConfig, DecoderStagesHalveWidthAndDoubleResolution) {
  const NetworkConfig c = tiny_config();
  for (std::size_t s = 0; s < 4; ++s) {
    const BlockConfig b = c.block_config(s);
    EXPECT_EQ(b.dim, 32u >> s);
    EXPECT_EQ(b.height, 2u << s);
  }
}

TEST(FeatureProvider, SyntheticCnnShapesAndDeterminism) {
  const NetworkConfig c = tiny_config();
  Rng rng(41);
  const Tensor image = uniform({64, 64, 3}, 0.0, 1.0, rng);
  const SyntheticCnnProvider a(c, 7), b(c, 7), other(c, 8);
  const FeaturePyramid pa = a.extract(image);
  for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(pa.levels[k].shape(), c.level_shape(k));
  EXPECT_EQ(pa.levels[2].values(), b.extract(image).levels[2].values());
  EXPECT_EQ(a.fingerprint(), b.fingerprint());
  EXPECT_NE(a.fingerprint(), other.fingerprint());
  EXPECT_THROW(a.extract(Tensor({32, 32, 3})), DimensionError);
}

TEST(FeatureProvider, FileProviderRoundTripAndShapeReport) {
  const NetworkConfig c = tiny_config();
  Rng rng(42);
  const auto dir = std::filesystem::temp_directory_path() / "omniad_fp_test";
  std::filesystem::remove_all(dir);
  const FeaturePyramid p = random_pyramid(c, rng);
  FileFeatureProvider::write_pyramid(dir, "rec", p);
  NetworkConfig fc = c;
  fc.provider = ProviderKind::kFile;
  fc.feature_dir = dir.string();
  const auto provider = make_feature_provider(fc);
  const FeaturePyramid q = provider->extract_record("rec");
  for (std::size_t k = 0; k < 3; ++k) {
    ASSERT_EQ(q.levels[k].shape(), p.levels[k].shape());
    for (std::size_t i = 0; i < p.levels[k].numel(); ++i) {
      EXPECT_EQ(q.levels[k][i], static_cast<double>(static_cast<float>(p.levels[k][i])));
    }
  }
  NetworkConfig wrong = fc;
  wrong.channels = 8;
  try {
    FileFeatureProvider(wrong, dir).extract_record("rec");
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("[16x16x8]"), std::string::npos);
  }
  std::filesystem::remove_all(dir);
}

TEST(Pyramid, StackAndSplit) {
  const NetworkConfig c = tiny_config();
  Rng rng(43);
  std::vector<FeaturePyramid> items{random_pyramid(c, rng), random_pyramid(c, rng)};
  const FeaturePyramid batch = stack_pyramids(items);
  EXPECT_EQ(batch.levels[0].shape(), (Shape{2, 16, 16, 4}));
  EXPECT_EQ(pyramid_at(batch, 1).levels[2].values(), items[1].levels[2].values());
}

TEST(Model, ForwardMirrorsPyramidShapes) {
  const NetworkConfig c = tiny_config();
  Rng rng(44);
  const OmniAdModel model(c, 0);
  const FeaturePyramid in = random_pyramid(c, rng, 2);
  EXPECT_EQ(model.fuse(in, false).shape(), (Shape{2, 2, 2, 32}));
  const FeaturePyramid out = model.forward(in, false);
  for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(out.levels[k].shape(), in.levels[k].shape());
  const FeaturePyramid single = model.forward(random_pyramid(c, rng), false);
  for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(single.levels[k].shape(), c.level_shape(k));
}

TEST(Model, DecoderParameterCountMatchesFormula) {
  NetworkConfig c = tiny_config();
  for (std::size_t t : {4u, 16u}) {
    for (auto order : {DecoupleOrder::kQueryThenKeyValue, DecoupleOrder::kKeyValueThenKeyValue}) {
      c.tokens = t;
      c.order = order;
      c.depths = {2, 1, 1, 3};
      EXPECT_EQ(OmniAdModel(c, 0).decoder_parameter_count(), decoder_parameter_count_formula(c));
    }
  }
}

TEST(Model, ParameterNamesAreUniqueAndSeedDeterministic) {
  const NetworkConfig c = tiny_config();
  const OmniAdModel a(c, 3), b(c, 3);
  const auto na = a.named_parameters();
  std::set<std::string> names;
  for (const auto& [n, t] : na) names.insert(n);
  EXPECT_EQ(names.size(), na.size());
  const auto nb = b.named_parameters();
  for (std::size_t i = 0; i < na.size(); ++i) EXPECT_EQ(na[i].second.values(), nb[i].second.values());
}

TEST(Loss, AllOnesDifferenceGivesChannelCount) {
  const NetworkConfig c = tiny_config();
  Rng rng(45);
  for (std::size_t k = 0; k < 3; ++k) {
    const FeaturePyramid a = random_pyramid(c, rng, 2);
    FeaturePyramid b;
    for (std::size_t j = 0; j < 3; ++j) b.levels[j] = a.levels[j].detach();
    for (double& v : b.levels[k].mutable_data()) v -= 1.0;
    const double want = static_cast<double>(c.level_shape(k)[2]);
    EXPECT_NEAR(reconstruction_loss(a, b).item(), want, 1e-12 * want);
  }
}

TEST(Neck, CbrGradientsMatchFiniteDifferences) {
  Rng rng(46);
  CbrParams p;
  p.weight = random_tensor({3, 3, 2, 3}, rng);
  p.bias = random_tensor({3}, rng);
  p.gamma = random_tensor({3}, rng);
  p.beta = random_tensor({3}, rng);
  p.running_mean = Tensor::zeros({3});
  p.running_var = Tensor::ones({3});
  p.stride = 2;
  Tensor x = random_tensor({2, 6, 6, 2}, rng);
  const Tensor t = random_tensor({2, 3, 3, 3}, rng);
  auto f = [&] { return ops::sum(ops::mul(cbr_forward(x, p, true, 0.1), t)); };
  EXPECT_LT(grad_check(f, x), 1e-4);
  EXPECT_LT(grad_check(f, p.weight), 1e-4);
  EXPECT_LT(grad_check(f, p.gamma), 1e-4);
  EXPECT_LT(grad_check(f, p.beta), 1e-4);
}
