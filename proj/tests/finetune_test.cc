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
#include "nhsg/finetune/finetune.h"
#include "nhsg/numerics/ops.h"
#include "signals.h"
#include "vocoder_fixtures.h"

namespace nhsg::finetune {
namespace {

using stage2::VocoderExample;
using testing::MakeExample;
using testing::RandomEmbedding;
using testing::TempFile;
using testing::TinyDiscriminator;
using testing::TinyGenerator;
using testing::TinyTraining;

PredictorConfig TinyPredictor() {
  PredictorConfig c = ToyPredictorConfig();
  c.channels = {4, 4, 4, 4, 4, 4, 4};
  c.layer_ids = {5, 8};
  c.token_vocab = {8, 6};
  return c;
}

Tensor RandomSignal(int len, uint64_t seed) {
  return Tensor({len}, testing::Noise(static_cast<double>(len) / 16000, seed).samples);
}

struct Corpus {
  std::vector<VocoderExample> human, nonhuman;
};

Corpus MakeCorpus(uint64_t seed) {
  std::mt19937_64 rng(seed);
  Corpus c;
  const auto g = TinyGenerator();
  for (int i = 0; i < 2; ++i) c.human.push_back(MakeExample("h" + std::to_string(i), 10, g, rng));
  for (int i = 0; i < 2; ++i) c.nonhuman.push_back(MakeExample("n" + std::to_string(i), 10, g, rng));
  return c;
}

TEST(Predictor, StridesMatchHop) {
  EXPECT_EQ(PredictorConfig{}.total_stride(), 882);
  EXPECT_EQ(ToyPredictorConfig().total_stride(), 320);
  EXPECT_NO_THROW(ValidatePredictorConfig(PredictorConfig{}, 882));
  EXPECT_THROW(ValidatePredictorConfig(PredictorConfig{}, 320), ConfigError);
  PredictorConfig bad = ToyPredictorConfig();
  bad.paddings.pop_back();
  EXPECT_THROW(Predictor{bad}, ConfigError);
}

TEST(Predictor, FrameCountFollowsStrideArithmetic) {
  Predictor p(TinyPredictor());
  const int stride = p.config().total_stride();
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const int len = std::uniform_int_distribution<int>(400, 4000)(rng);
    NoGradGuard guard;
    PredictorOutput out = p.Forward(RandomSignal(len, trial));
    EXPECT_EQ(out.num_frames(), PredictorFrames(p.config(), len));
    const int ceil_frames = (len + stride - 1) / stride;
    EXPECT_LE(std::abs(out.num_frames() - ceil_frames), 2) << len;
    ASSERT_EQ(out.token_logits.size(), 2u);
    EXPECT_EQ(out.token_logits[0].dim(1), 9);
    EXPECT_EQ(out.token_logits[1].dim(1), 7);
    EXPECT_EQ(out.timbre.numel(), representation::kEmbeddingDim);
    for (int t = 0; t < out.num_frames(); ++t) {
      const float* row = out.token_logits[0].storage().data() + t * 9;
      const int arg = static_cast<int>(std::max_element(row, row + 9) - row);
      EXPECT_GE(arg, 0);
      EXPECT_LE(arg, 8);
    }
  }
  EXPECT_THROW(p.Forward(RandomSignal(3, 1)), TooShortError);
}

TEST(Predictor, AlignmentIsNearestFrame) {
  const PredictorConfig c = ToyPredictorConfig();
  // 12 frames of 320 samples give 14 predictor frames, shifted by one.
  EXPECT_EQ(PredictorFrames(c, 3840), 14);
  auto idx = AlignFrames(c, 14, 12, 320);
  for (int t = 0; t < 12; ++t) EXPECT_EQ(idx[t], t + 1);
  // One frame short at the end is clamped; more is an error.
  EXPECT_EQ(AlignFrames(c, 12, 12, 320).back(), 11);
  EXPECT_THROW(AlignFrames(c, 11, 12, 320), ShapeError);
}

TEST(Predictor, ReducedStubGradientCheck) {
  PredictorConfig c;
  c.kernels = {4};
  c.strides = {2};
  c.paddings = {1};
  c.channels = {3};
  c.layer_ids = {5};
  c.token_vocab = {3};
  c.timbre_dim = 4;
  Predictor p(c);
  Tensor x = RandomSignal(16, 3);
  representation::FrameRepresentation z;
  z.tokens.layer_ids = {5};
  z.tokens.vocab = {3};
  z.tokens.tokens = {{0, 2, 1, 1, 0, 2, 2, 1}};
  z.f0.f0_hz = {100, 0, 120, 130, 0, 150, 160, 170};
  z.f0.voiced = {true, false, true, true, false, true, true, true};
  const std::vector<float> e = {0.5f, -0.2f, 0.1f, 0.8f};
  const auto frames = AlignFrames(c, PredictorFrames(c, 16), 8, 2);
  auto loss = [&] {
    return AuxiliaryLosses(p.Forward(x), z, e, frames).Weighted(AuxWeights{});
  };
  p.params().ZeroGrad();
  loss().Backward();
  int checked = 0;
  for (const auto& [name, t] : p.params().entries()) {
    Tensor param = t;
    for (int64_t i = 0; i < param.numel(); i += 3) {
      const float analytic = param.grad()[i];
      const float orig = param.storage()[i];
      const float h = 1e-3f;
      double up, down;
      {
        NoGradGuard guard;
        param.storage()[i] = orig + h;
        up = loss().item();
        param.storage()[i] = orig - h;
        down = loss().item();
        param.storage()[i] = orig;
      }
      const double numeric = (up - down) / (2.0 * h);
      EXPECT_NEAR(analytic, numeric, 2e-4 + 1e-2 * std::max(std::abs(numeric), std::abs(static_cast<double>(analytic))))
          << name << "[" << i << "]";
      ++checked;
    }
  }
  EXPECT_GT(checked, 10);
}

// Independent scalar evaluation of the three losses.
TEST(AuxLosses, MatchScalarOracle) {
  representation::FrameRepresentation z;
  z.tokens.layer_ids = {5, 8};
  z.tokens.vocab = {2, 3};
  z.tokens.tokens = {{0, 1, 1}, {3, 0, 1}};
  z.f0.f0_hz = {110.0f, 0.0f, 220.0f};
  z.f0.voiced = {true, false, true};
  const std::vector<std::vector<float>> l0 = {{0.1f, 0.5f, -0.3f}, {1.0f, -1.0f, 0.2f},
                                              {0.0f, 0.3f, 0.7f}};
  const std::vector<std::vector<float>> l1 = {{0.2f, -0.1f, 0.4f, 0.0f},
                                              {0.5f, 0.5f, -0.5f, 1.0f},
                                              {-0.2f, 0.9f, 0.1f, 0.3f}};
  const std::vector<float> f0 = {4.5f, 5.0f, 5.5f};
  const std::vector<float> e_pred = {1.0f, 2.0f, -1.0f};
  const std::vector<float> e_tgt = {0.5f, 1.0f, 1.0f};

  PredictorOutput pred;
  pred.log_f0 = Tensor({3}, f0);
  std::vector<float> flat0, flat1;
  for (const auto& r : l0) flat0.insert(flat0.end(), r.begin(), r.end());
  for (const auto& r : l1) flat1.insert(flat1.end(), r.begin(), r.end());
  pred.token_logits = {Tensor({3, 3}, flat0), Tensor({3, 4}, flat1)};
  pred.timbre = Tensor({3}, e_pred);
  AuxLosses a = AuxiliaryLosses(pred, z, e_tgt, {0, 1, 2});

  auto ce = [](const std::vector<float>& row, int target) {
    double m = -1e30, s = 0;
    for (float v : row) m = std::max(m, static_cast<double>(v));
    for (float v : row) s += std::exp(v - m);
    return m + std::log(s) - row[target];
  };
  double token = 0;
  for (int t = 0; t < 3; ++t) token += ce(l0[t], z.tokens.tokens[0][t]) / 3.0;
  // Layer 1, frame 0 carries the padding index (K = 3) and is ignored.
  token += (ce(l1[1], 0) + ce(l1[2], 1)) / 2.0;
  const double f0_loss =
      (std::pow(4.5 - std::log(110.0), 2) + std::pow(5.5 - std::log(220.0), 2)) / 2.0;
  const double dot = 0.5 + 2.0 - 1.0;
  const double cos = dot / (std::sqrt(1.0 + 4.0 + 1.0) * std::sqrt(0.25 + 1.0 + 1.0));
  EXPECT_NEAR(a.token.item(), token, 1e-6);
  EXPECT_NEAR(a.f0.item(), f0_loss, 1e-6);
  EXPECT_NEAR(a.timbre.item(), 1.0 - cos, 1e-6);

  pred.timbre = Tensor({3}, e_tgt);
  EXPECT_NEAR(AuxiliaryLosses(pred, z, e_tgt, {0, 1, 2}).timbre.item(), 0.0, 1e-6);
  pred.timbre = Tensor({3}, {-0.5f, -1.0f, -1.0f});
  EXPECT_NEAR(AuxiliaryLosses(pred, z, e_tgt, {0, 1, 2}).timbre.item(), 2.0, 1e-6);
  EXPECT_THROW(AuxiliaryLosses(pred, z, e_tgt, {0, 1}), ShapeError);
}

TEST(Pairing, DerangementUniformAndSeeded) {
  std::mt19937_64 rng(1);
  EXPECT_EQ(UnpairedBatch(2, PairingMode::kDerangement, rng), (std::vector<size_t>{1, 0}));
  EXPECT_EQ(UnpairedBatch(1, PairingMode::kUniform, rng), (std::vector<size_t>{0}));
  std::mt19937_64 a(7), b(7);
  EXPECT_EQ(UnpairedBatch(6, PairingMode::kUniform, a), UnpairedBatch(6, PairingMode::kUniform, b));
  for (int i = 0; i < 100; ++i) {
    auto p = UnpairedBatch(5, PairingMode::kDerangement, rng);
    for (size_t k = 0; k < p.size(); ++k) EXPECT_NE(p[k], k);
  }
  const int batch = 4, draws = 10000;
  int self = 0;
  for (int i = 0; i < draws; ++i) {
    auto p = UnpairedBatch(batch, PairingMode::kUniform, rng);
    for (size_t k = 0; k < p.size(); ++k) self += p[k] == k;
  }
  EXPECT_NEAR(static_cast<double>(self) / (draws * batch), 1.0 / batch, 0.01);
}

TEST(Sampler, OversamplingRatioAndErrors) {
  Corpus c = MakeCorpus(2);
  FinetuneConfig fc;
  fc.train = TinyTraining();
  fc.oversampling = 0.9;
  const int hop = TinyGenerator().hop();
  auto plan = FinetuneBatchPlan(c.human, c.nonhuman, fc, hop);
  int human = 0, nonhuman = 0;
  for (int64_t s = 0; s < 1000; ++s) {
    for (const auto& it : plan(s)) (it.example < c.human.size() ? human : nonhuman)++;
  }
  EXPECT_NEAR(static_cast<double>(nonhuman) / human, 0.9, 0.9 * 0.05);
  EXPECT_EQ(plan(17).size(), 2u);
  auto again = FinetuneBatchPlan(c.human, c.nonhuman, fc, hop)(17);
  EXPECT_EQ(plan(17)[0].example, again[0].example);
  EXPECT_EQ(plan(17)[1].start_frame, again[1].start_frame);

  EXPECT_THROW(FinetuneBatchPlan(c.human, {}, fc, hop), ConfigError);
  fc.oversampling = 0;
  EXPECT_THROW(FinetuneBatchPlan(c.human, c.nonhuman, fc, hop), ConfigError);
}

TEST(Finetune, ReducesToStage2WithSelfPairing) {
  Corpus c = MakeCorpus(3);
  FinetuneConfig fc;
  fc.train = TinyTraining();
  fc.unpaired_weight = 0.0;
  fc.force_self_pairing = true;
  const auto gc = TinyGenerator();

  stage2::Generator g1(gc), g2(gc);
  stage2::Discriminator d1(TinyDiscriminator()), d2(TinyDiscriminator());
  Predictor p(TinyPredictor());
  auto ft = Finetune(g1, d1, p, c.human, c.nonhuman, fc);
  auto s2 = stage2::TrainStage2(g2, d2, MergeManifests(c.human, c.nonhuman), fc.train, nullptr,
                                FinetuneBatchPlan(c.human, c.nonhuman, fc, gc.hop()));
  ASSERT_EQ(ft.size(), 10u);
  ASSERT_EQ(s2.size(), 10u);
  for (size_t i = 0; i < 10; ++i) {
    EXPECT_EQ(ft[i].gan.mel, s2[i].mel) << i;
    EXPECT_EQ(ft[i].gan.adv_g, s2[i].adv_g) << i;
    EXPECT_EQ(ft[i].gan.adv_d, s2[i].adv_d) << i;
    EXPECT_EQ(ft[i].gan.fm, s2[i].fm) << i;
    EXPECT_EQ(ft[i].gan.unpaired, 0);
  }
  for (size_t i = 0; i < g1.params().size(); ++i) {
    EXPECT_EQ(g1.params().entries()[i].second.storage(),
              g2.params().entries()[i].second.storage());
  }
}

TEST(Finetune, UnpairedStepsRecordAuxLossesAndResume) {
  Corpus c = MakeCorpus(4);
  FinetuneConfig fc;
  fc.train = TinyTraining();
  fc.train.steps = 6;
  fc.pairing = PairingMode::kDerangement;
  const auto gc = TinyGenerator();

  stage2::Generator g1(gc);
  stage2::Discriminator d1(TinyDiscriminator());
  Predictor p1(TinyPredictor());
  auto straight = Finetune(g1, d1, p1, c.human, c.nonhuman, fc);
  int unpaired_steps = 0;
  for (const auto& l : straight) {
    if (l.gan.unpaired > 0) {
      ++unpaired_steps;
      EXPECT_TRUE(std::isfinite(l.token));
      EXPECT_GE(l.timbre, 0.0);
      EXPECT_LE(l.timbre, 2.0);
      EXPECT_GE(l.f0, 0.0);
    }
    EXPECT_EQ(l.human + l.nonhuman, 2);
  }
  EXPECT_GT(unpaired_steps, 0);

  const std::string dir = TempFile("ftck");
  std::filesystem::remove_all(dir);
  FinetuneConfig first = fc;
  first.train.steps = 3;
  first.train.checkpoint_dir = dir;
  stage2::Generator g2(gc);
  stage2::Discriminator d2(TinyDiscriminator());
  Predictor p2(TinyPredictor());
  Finetune(g2, d2, p2, c.human, c.nonhuman, first);

  stage2::Stage2Checkpoint ck = stage2::LoadStage2(dir + "/finetune_last.ckpt");
  Predictor p3(PredictorConfigFromJson(ck.extra_json));
  p3.params().AssignFrom(ck.extra);
  p3.params().step = ck.extra.step;
  FinetuneState state{ck.opt, ck.extra_opt};
  auto rest = Finetune(ck.gen, ck.disc, p3, c.human, c.nonhuman, fc, &state);
  ASSERT_EQ(rest.size(), 3u);
  for (size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(rest[i].gan.mel, straight[i + 3].gan.mel);
    EXPECT_EQ(rest[i].real_token, straight[i + 3].real_token);
  }
  for (size_t i = 0; i < p1.params().size(); ++i) {
    EXPECT_EQ(p1.params().entries()[i].second.storage(),
              p3.params().entries()[i].second.storage());
  }
  EXPECT_TRUE(std::filesystem::exists(dir + "/finetune_losses.csv"));
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace nhsg::finetune
