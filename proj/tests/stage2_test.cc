// Copyright 2026 The NHSG Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "nhsg/errors.h"
#include "nhsg/numerics/ops.h"
#include "nhsg/stage2/stage2.h"
#include "signals.h"
#include "vocoder_fixtures.h"

namespace nhsg::stage2 {
namespace {

using testing::MakeExample;
using testing::RandomEmbedding;
using testing::RandomZ;
using testing::TempFile;
using testing::TinyDiscriminator;
using testing::TinyGenerator;
using testing::TinyTraining;

TEST(Generator, LengthLawOverRandomShapes) {
  std::mt19937_64 rng(11);
  const std::vector<std::vector<int>> factor_sets = {
      {8, 5, 4, 2}, {7, 7, 3, 3, 2}, {2, 3}, {5}, {4, 4, 2}, {3, 2, 2}};
  for (int trial = 0; trial < 100; ++trial) {
    GeneratorConfig c = TinyGenerator(factor_sets[trial % factor_sets.size()]);
    c.base_channels = 4;
    c.seed = trial;
    if (trial % 7 == 0) c.upsample_factors = {7, 7, 3, 3, 2};  // 882
    Generator g(c);
    const int frames = std::uniform_int_distribution<int>(1, 6)(rng);
    Conditioning cond = MakeConditioning(RandomZ(frames, c, rng), RandomEmbedding(rng));
    dsp::Waveform w = g.Vocode(cond);
    ASSERT_EQ(w.samples.size(), static_cast<size_t>(frames) * c.hop()) << trial;
    for (float s : w.samples) {
      ASSERT_TRUE(std::isfinite(s));
      ASSERT_LT(std::abs(s), 1.0f);
    }
  }
}

TEST(Generator, UpsampleGeometryIsExact) {
  for (int u = 1; u <= 11; ++u) {
    UpsampleGeometry g = UpsampleFor(u);
    for (int len = 1; len < 9; ++len) {
      EXPECT_EQ((len - 1) * u - 2 * g.padding + g.kernel, len * u);
    }
  }
}

TEST(Generator, ParameterCountsFollowFormula) {
  for (const auto& f : std::vector<std::vector<int>>{{8, 5, 4, 2}, {7, 7, 3, 3, 2}}) {
    GeneratorConfig c = TinyGenerator(f);
    EXPECT_EQ(Generator(c).params().NumScalars(), GeneratorParamCount(c));
  }
  GeneratorConfig defaults;
  EXPECT_EQ(Generator(defaults).params().NumScalars(), GeneratorParamCount(defaults));
  DiscriminatorConfig dc;
  EXPECT_EQ(Discriminator(dc).params().NumScalars(), DiscriminatorParamCount(dc));
  EXPECT_EQ(Discriminator(TinyDiscriminator()).params().NumScalars(),
            DiscriminatorParamCount(TinyDiscriminator()));
}

TEST(Generator, ConditioningShapeWeightsAndTimbre) {
  std::mt19937_64 rng(3);
  GeneratorConfig c = TinyGenerator();
  Generator g(c);
  Conditioning cond = MakeConditioning(RandomZ(5, c, rng), RandomEmbedding(rng));
  Tensor h = g.Condition(cond);
  EXPECT_EQ(h.shape(), (Shape{5, c.cond_dim()}));
  double sum = 0;
  for (float w : g.LayerWeights()) sum += w;
  EXPECT_NEAR(sum, 1.0, 1e-6);

  dsp::Waveform a = g.Vocode(cond);
  cond.embedding = RandomEmbedding(rng);
  dsp::Waveform b = g.Vocode(cond);
  double diff = 0;
  for (size_t i = 0; i < a.samples.size(); ++i) diff += std::abs(a.samples[i] - b.samples[i]);
  EXPECT_GT(diff / a.samples.size(), 1e-5);
  // Deterministic for fixed inputs.
  dsp::Waveform b2 = g.Vocode(cond);
  EXPECT_EQ(b.samples, b2.samples);

  cond.embedding.pop_back();
  EXPECT_THROW(g.Condition(cond), ShapeError);
}

TEST(Generator, RejectsBadConfig) {
  GeneratorConfig c = TinyGenerator();
  c.resblock_kernels = {4};
  EXPECT_THROW(Generator{c}, ConfigError);
  c = TinyGenerator();
  c.token_vocab = {8};
  EXPECT_THROW(Generator{c}, ConfigError);
}

TEST(Generator, MelGradientReachesTimbreProjection) {
  std::mt19937_64 rng(4);
  GeneratorConfig c = TinyGenerator({4, 2});
  Generator g(c);
  Conditioning cond = MakeConditioning(RandomZ(70, c, rng), RandomEmbedding(rng));
  Tensor real = Tensor({70 * 8}, testing::Noise(70.0 * 8 / 16000, 2).samples);
  MelLossConfig mel;
  mel.scales = {{128, 16}};
  auto loss = [&] {
    NoGradGuard guard;
    return static_cast<double>(MultiScaleMelLoss(real, g.Forward(cond), mel).item());
  };
  g.params().ZeroGrad();
  MultiScaleMelLoss(real, g.Forward(cond), mel).Backward();
  Tensor w = g.params().Get("timbre.w");
  // Largest-gradient entries are well above the float noise floor.
  std::vector<size_t> order(w.numel());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return std::abs(w.grad()[a]) > std::abs(w.grad()[b]);
  });
  ASSERT_GT(std::abs(w.grad()[order[0]]), 1e-4);
  for (int k = 0; k < 3; ++k) {
    const size_t i = order[k];
    const float analytic = w.grad()[i];
    const float orig = w.storage()[i];
    const float h = 3e-3f;
    w.storage()[i] = orig + h;
    const double up = loss();
    w.storage()[i] = orig - h;
    const double down = loss();
    w.storage()[i] = orig;
    const double numeric = (up - down) / (2 * h);
    EXPECT_NEAR(analytic, numeric, 0.05 * std::abs(numeric) + 1e-4) << i;
  }
}

TEST(Discriminator, BranchesDeterminismAndLength) {
  Discriminator d(TinyDiscriminator());
  EXPECT_EQ(d.num_branches(), 2u + 1u * 2u);
  DiscriminatorConfig full;
  EXPECT_EQ(Discriminator(full).num_branches(), 5u + 3u * 4u);
  Tensor x({2000}, testing::Noise(2000.0 / 16000, 7).samples);
  DiscOutput a = d.Forward(x), b = d.Forward(x);
  ASSERT_EQ(a.num_branches(), 4u);
  for (size_t i = 0; i < a.num_branches(); ++i) {
    EXPECT_EQ(a.scores[i].storage(), b.scores[i].storage());
    EXPECT_FALSE(a.features[i].empty());
  }
  EXPECT_THROW(d.Forward(Tensor({100}, 0.1f)), TooShortError);
  DiscriminatorConfig bad = TinyDiscriminator();
  bad.periods = {2, 4};
  EXPECT_THROW(Discriminator{bad}, ConfigError);
  bad.periods = {3, 3};
  EXPECT_THROW(Discriminator{bad}, ConfigError);
}

TEST(GanLosses, RealAgainstItselfAndZeroWeights) {
  Discriminator d(TinyDiscriminator());
  Tensor x({2000}, testing::Noise(2000.0 / 16000, 8, 16000).samples);
  MelLossConfig mel;
  GanLossWeights w;
  GanLossTerms t = GanLosses(x, x, d, mel, w);
  EXPECT_EQ(t.fm, 0.0);
  EXPECT_EQ(t.mel, 0.0);
  Tensor y({2000}, testing::Noise(2000.0 / 16000, 9, 16000).samples);
  GanLossWeights zero{GanObjective::kLeastSquares, 0.0, 0.0, 0.0};
  EXPECT_EQ(GanLosses(x, y, d, mel, zero).generator.item(), 0.0f);
  EXPECT_THROW(GanLosses(x, Tensor({1999}, 0.0f), d, mel, w), ShapeError);
  GanLossWeights negative;
  negative.fm = -1;
  EXPECT_THROW(ValidateGanLossWeights(negative), ConfigError);
}

TEST(GanLosses, StubDiscriminatorMatchesHandComputation) {
  DiscOutput real, fake;
  real.scores = {Tensor({2}, {0.5f, 1.5f}), Tensor({1}, {0.2f})};
  fake.scores = {Tensor({2}, {0.1f, -0.3f}), Tensor({1}, {0.8f})};
  real.features = {{Tensor({2}, {1.0f, 2.0f})},
                   {Tensor({3}, {0.0f, 0.0f, 0.0f}), Tensor({1}, {3.0f})}};
  fake.features = {{Tensor({2}, {1.5f, 1.0f})},
                   {Tensor({3}, {1.0f, -1.0f, 2.0f}), Tensor({1}, {2.0f})}};
  Tensor mel({1}, {0.4f});
  const double adv_g = (0.81 + 1.69) / 2 + 0.04;
  const double adv_d = (0.25 + 0.25) / 2 + (0.01 + 0.09) / 2 + 0.64 + 0.64;
  const double fm = (0.75 + 4.0 / 3.0 + 1.0) / 3.0;
  GanLossTerms t = CombineGanLosses(real, fake, mel, GanLossWeights{});
  EXPECT_NEAR(t.adv_g, adv_g, 1e-6);
  EXPECT_NEAR(t.adv_d, adv_d, 1e-6);
  EXPECT_NEAR(t.fm, fm, 1e-6);
  EXPECT_NEAR(t.generator.item(), 1.0 * adv_g + 2.0 * fm + 15.0 * 0.4, 1e-6);

  GanLossWeights hinge;
  hinge.objective = GanObjective::kHinge;
  GanLossTerms h = CombineGanLosses(real, fake, mel, hinge);
  // G: -mean(fake); D: mean(relu(1 - real)) + mean(relu(1 + fake)).
  EXPECT_NEAR(h.adv_g, -((0.1 - 0.3) / 2 + 0.8), 1e-6);
  EXPECT_NEAR(h.adv_d, (0.5 + 0.0) / 2 + 0.8 + (1.1 + 0.7) / 2 + 1.8, 1e-6);
}

TEST(Training, SeededTrajectoryAndCropLength) {
  std::mt19937_64 rng(21);
  GeneratorConfig gc = TinyGenerator();
  std::vector<VocoderExample> data;
  for (int i = 0; i < 3; ++i) data.push_back(MakeExample("c" + std::to_string(i), 12, gc, rng));
  Stage2TrainConfig tc = TinyTraining();
  EXPECT_EQ(CropFrames(tc.segment_samples, gc.hop()), 4);

  auto run = [&] {
    Generator g(gc);
    Discriminator d(TinyDiscriminator());
    return TrainStage2(g, d, data, tc);
  };
  auto a = run(), b = run();
  ASSERT_EQ(a.size(), 10u);
  for (size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].mel, b[i].mel);
    EXPECT_EQ(a[i].adv_g, b[i].adv_g);
    EXPECT_EQ(a[i].adv_d, b[i].adv_d);
    EXPECT_EQ(a[i].fm, b[i].fm);
    EXPECT_EQ(a[i].step, static_cast<int64_t>(i + 1));
  }

  BatchPlan plan = UniformBatchPlan(data, tc, gc.hop());
  for (int64_t s = 0; s < 20; ++s) {
    for (const BatchItem& it : plan(s)) {
      EXPECT_GE(it.start_frame, 0);
      EXPECT_LE(it.start_frame + 4, 12);
    }
  }
}

TEST(Training, ResumeMatchesStraightRun) {
  std::mt19937_64 rng(22);
  GeneratorConfig gc = TinyGenerator();
  std::vector<VocoderExample> data;
  for (int i = 0; i < 2; ++i) data.push_back(MakeExample("c" + std::to_string(i), 10, gc, rng));
  Stage2TrainConfig tc = TinyTraining();
  tc.steps = 6;

  Generator g1(gc);
  Discriminator d1(TinyDiscriminator());
  auto straight = TrainStage2(g1, d1, data, tc);

  const std::string dir = TempFile("s2ck");
  std::filesystem::remove_all(dir);
  Stage2TrainConfig first = tc;
  first.steps = 3;
  first.checkpoint_dir = dir;
  Generator g2(gc);
  Discriminator d2(TinyDiscriminator());
  TrainStage2(g2, d2, data, first);
  Stage2Checkpoint ck = LoadStage2(dir + "/stage2_last.ckpt");
  EXPECT_EQ(ck.gen.params().step, 3);
  auto rest = TrainStage2(ck.gen, ck.disc, data, tc, &ck.opt);
  ASSERT_EQ(rest.size(), 3u);
  for (size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(rest[i].mel, straight[i + 3].mel);
    EXPECT_EQ(rest[i].adv_d, straight[i + 3].adv_d);
  }
  const auto& p1 = g1.params().entries();
  const auto& p2 = ck.gen.params().entries();
  for (size_t i = 0; i < p1.size(); ++i) EXPECT_EQ(p1[i].second.storage(), p2[i].second.storage());

  EXPECT_TRUE(std::filesystem::exists(dir + "/stage2_losses.csv"));
  std::filesystem::remove_all(dir);
}

TEST(Training, ShortSegmentsSkippedAndMismatchesRejected) {
  std::mt19937_64 rng(23);
  GeneratorConfig gc = TinyGenerator();
  std::vector<VocoderExample> data = {MakeExample("long", 8, gc, rng),
                                      MakeExample("short", 2, gc, rng)};
  Stage2TrainConfig tc = TinyTraining();
  tc.steps = 4;
  BatchPlan plan = UniformBatchPlan(data, tc, gc.hop());
  for (int64_t s = 0; s < 10; ++s) {
    for (const BatchItem& it : plan(s)) EXPECT_EQ(it.example, 0u);
  }
  Generator g(gc);
  Discriminator d(TinyDiscriminator());
  EXPECT_EQ(TrainStage2(g, d, data, tc).size(), 4u);

  std::vector<VocoderExample> too_short = {data[1]};
  EXPECT_THROW(UniformBatchPlan(too_short, tc, gc.hop()), DataError);

  std::vector<VocoderExample> wrong_hop = {data[0]};
  wrong_hop[0].z.f0.frame_spec.hop_samples = 256;
  Generator g2(gc);
  EXPECT_THROW(TrainStage2(g2, d, wrong_hop, tc), ConfigError);
}

TEST(Vocode, CheckpointRoundTripIsBitExact) {
  std::mt19937_64 rng(24);
  GeneratorConfig gc = TinyGenerator();
  Generator g(gc);
  Discriminator d(TinyDiscriminator());
  const std::string path = TempFile("vocoder.ckpt");
  SaveStage2(g, d, nullptr, path);
  Stage2Checkpoint ck = LoadStage2(path);
  auto z = RandomZ(6, gc, rng);
  auto e = RandomEmbedding(rng);
  EXPECT_EQ(Vocode(g, z, e).samples, Vocode(ck.gen, z, e).samples);
  std::filesystem::remove(path);
  std::filesystem::remove(path + ".json");
}

}  // namespace
}  // namespace nhsg::stage2
