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

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include <gtest/gtest.h>

#include "nhsg/errors.h"
#include "nhsg/numerics/ops.h"
#include "nhsg/stage1/stage1.h"
#include "nhsg/toy/toy_corpus.h"
#include "signals.h"

namespace nhsg::stage1 {
namespace {

using nhsg::testing::TempFile;

Stage1Config TinyConfig() {
  Stage1Config cfg;
  cfg.dim = 16;
  cfg.heads = 2;
  cfg.encoder_layers = 1;
  cfg.decoder_layers = 1;
  cfg.ffn_dim = 16;
  cfg.duration_hidden = 8;
  cfg.pitch_hidden = 8;
  cfg.max_relative = 4;
  cfg.phonemes = {"a", "e", "i"};
  cfg.layer_ids = {1, 2};
  cfg.token_vocab = {5, 3};
  return cfg;
}

Score TwoNotes() {
  Score s;
  s.entries = {{"a", 60, 2}, {"i", 64, 3}};
  return s;
}

TEST(LengthRegulate, RepeatsRows) {
  Tensor h({2, 2}, {1, 2, 3, 4});
  Tensor y = LengthRegulate(h, {2, 3});
  EXPECT_EQ(y.shape(), (Shape{5, 2}));
  EXPECT_EQ(y.storage(), (std::vector<float>{1, 2, 1, 2, 3, 4, 3, 4, 3, 4}));
  EXPECT_EQ(LengthRegulate(h, {1, 1}).storage(), h.storage());
  EXPECT_THROW(LengthRegulate(h, {0, 2}), ConfigError);
}

TEST(LengthRegulate, GradientAggregatesCopies) {
  Tensor h({2, 3}, 0.5f, true);
  Tensor w({6, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9, 1, 1, 1, 2, 2, 2, 3, 3, 3});
  ops::Sum(ops::Mul(LengthRegulate(h, {2, 4}), w)).Backward();
  // Row 0 collects rows 0-1 of w, row 1 collects rows 2-5.
  EXPECT_FLOAT_EQ(h.grad()[0], 1 + 4);
  EXPECT_FLOAT_EQ(h.grad()[2], 3 + 6);
  EXPECT_FLOAT_EQ(h.grad()[3], 7 + 1 + 2 + 3);
  EXPECT_FLOAT_EQ(h.grad()[5], 9 + 1 + 2 + 3);
}

TEST(Model, ShapesAndRanges) {
  Stage1Model m(TinyConfig());
  Stage1Output out = m.Forward(TwoNotes());
  EXPECT_EQ(out.log_durations.shape(), (Shape{2}));
  EXPECT_EQ(out.log_f0.shape(), (Shape{5}));
  ASSERT_EQ(out.token_logits.size(), 2u);
  EXPECT_EQ(out.token_logits[0].shape(), (Shape{5, 6}));
  EXPECT_EQ(out.token_logits[1].shape(), (Shape{5, 4}));
  for (float v : out.log_durations.storage()) EXPECT_TRUE(std::isfinite(v));
  EXPECT_THROW(m.DecodeTokens(m.Encode(TwoNotes()), out.log_f0), ShapeError);
}

TEST(Model, FullSizeEncoderWidth) {
  Stage1Config cfg = TinyConfig();
  cfg.dim = 384;
  cfg.heads = 2;
  cfg.encoder_layers = 6;
  cfg.decoder_layers = 0;
  cfg.ffn_dim = 384;
  Stage1Model m(cfg);
  EXPECT_EQ(m.Encode(TwoNotes()).shape(), (Shape{2, 384}));
}

TEST(Model, DeterministicAndOrderSensitive) {
  Stage1Model a(TinyConfig());
  Stage1Model b(TinyConfig());
  Score s = TwoNotes();
  EXPECT_EQ(a.Encode(s).storage(), b.Encode(s).storage());
  Score swapped = s;
  std::swap(swapped.entries[0].phoneme, swapped.entries[1].phoneme);
  EXPECT_NE(a.Encode(s).storage(), a.Encode(swapped).storage());
  Score bad = s;
  bad.entries[0].phoneme = "zz";
  EXPECT_THROW(a.Encode(bad), VocabError);
}

Stage1Output FixedOutput() {
  Stage1Output out;
  out.token_logits.push_back(
      Tensor({3, 4}, {2, 0, -1, 0.2f, 0.5f, 0.5f, 0, 1, -1, 3, 1, 0}));
  out.token_logits.push_back(
      Tensor({3, 3}, {1, 0, 0.4f, 0, 1, -1, 0.3f, -0.2f, 0.1f}));
  out.log_f0 = Tensor({3}, {5.0f, 5.5f, 4.0f});
  out.log_durations = Tensor({2}, {0.5f, 1.0f});
  return out;
}

Stage1Targets FixedTargets() {
  Stage1Targets t;
  t.tokens = {{0, 1, 2}, {1, 1, 0}};
  t.log_f0 = {5.2f, 5.0f, 0.0f};
  t.voiced = {true, true, false};
  t.durations = {1, 2};
  return t;
}

double LogSoftmaxAt(const std::vector<double>& row, int k) {
  double m = row[0];
  for (double v : row) m = std::max(m, v);
  double s = 0.0;
  for (double v : row) s += std::exp(v - m);
  return row[k] - m - std::log(s);
}

TEST(Loss, MatchesScalarOracle) {
  Stage1Config cfg = TinyConfig();
  cfg.lambda_out = 0.7;
  cfg.lambda_dur = 1.3;
  cfg.lambda_pitch = 2.0;
  Stage1Loss loss = ComputeStage1Loss(FixedOutput(), FixedTargets(), cfg);
  const double ce0 = -(LogSoftmaxAt({2, 0, -1, 0.2}, 0) +
                       LogSoftmaxAt({0.5, 0.5, 0, 1}, 1) +
                       LogSoftmaxAt({-1, 3, 1, 0}, 2)) / 3;
  const double ce1 = -(LogSoftmaxAt({1, 0, 0.4}, 1) + LogSoftmaxAt({0, 1, -1}, 1) +
                       LogSoftmaxAt({0.3, -0.2, 0.1}, 0)) / 3;
  const double out = (ce0 + ce1) / 2;
  const double dur = (std::abs(0.5 - std::log(1.0)) + std::abs(1.0 - std::log(2.0))) / 2;
  const double pitch = (std::abs(5.0 - 5.2) + std::abs(5.5 - 5.0)) / 2;
  EXPECT_NEAR(loss.out, out, 1e-6);
  EXPECT_NEAR(loss.dur, dur, 1e-6);
  EXPECT_NEAR(loss.pitch, pitch, 1e-6);
  EXPECT_NEAR(loss.total.item(), 0.7 * out + 1.3 * dur + 2.0 * pitch, 1e-5);
}

TEST(Loss, ZeroWeightsAndPerfectPrediction) {
  Stage1Config cfg = TinyConfig();
  cfg.lambda_out = cfg.lambda_dur = cfg.lambda_pitch = 0.0;
  EXPECT_EQ(ComputeStage1Loss(FixedOutput(), FixedTargets(), cfg).total.item(), 0.0f);

  Stage1Targets t = FixedTargets();
  Stage1Output perfect;
  for (size_t l = 0; l < t.tokens.size(); ++l) {
    const int k = l == 0 ? 4 : 3;
    Tensor logits({3, k}, -30.0f);
    for (int i = 0; i < 3; ++i) logits.storage()[i * k + t.tokens[l][i]] = 30.0f;
    perfect.token_logits.push_back(logits);
  }
  perfect.log_f0 = Tensor({3}, t.log_f0);
  perfect.log_durations = Tensor({2}, {0.0f, std::log(2.0f)});
  Stage1Loss loss = ComputeStage1Loss(perfect, t, TinyConfig());
  EXPECT_LE(loss.total.item(), 1e-3);
}

TEST(Loss, NoVoicedFramesFlagged) {
  Stage1Targets t = FixedTargets();
  t.voiced = {false, false, false};
  Stage1Loss loss = ComputeStage1Loss(FixedOutput(), t, TinyConfig());
  EXPECT_TRUE(loss.no_voiced_frames);
  EXPECT_EQ(loss.pitch, 0.0);
}

TEST(Loss, EndToEndGradientCheck) {
  Stage1Config cfg = TinyConfig();
  Stage1Model m(cfg);
  Score s;
  s.entries = {{"a", 60, 1}, {"e", 62, 3}};
  Stage1Targets t;
  t.tokens = {{0, 4, 4, 1}, {2, 2, 0, 1}};
  t.log_f0 = {5.5f, 5.6f, 5.4f, 5.0f};
  t.voiced = {true, true, false, true};
  t.durations = {1, 3};
  auto loss_value = [&] {
    return static_cast<double>(ComputeStage1Loss(m.Forward(s), t, cfg).total.item());
  };
  m.params().ZeroGrad();
  ComputeStage1Loss(m.Forward(s), t, cfg).total.Backward();
  std::mt19937_64 rng(3);
  int checked = 0;
  const auto& entries = m.params().entries();
  std::uniform_int_distribution<size_t> pick(0, entries.size() - 1);
  while (checked < 10) {
    Tensor p = entries[pick(rng)].second;
    std::uniform_int_distribution<int64_t> at(0, p.numel() - 1);
    const int64_t i = at(rng);
    const double analytic = p.grad()[i];
    if (std::abs(analytic) < 1e-2) continue;  // too small for float differences
    const float orig = p.storage()[i];
    const float h = 1e-3f;
    double up, down;
    {
      NoGradGuard guard;
      p.storage()[i] = orig + h;
      up = loss_value();
      p.storage()[i] = orig - h;
      down = loss_value();
      p.storage()[i] = orig;
    }
    const double numeric = (up - down) / (2 * h);
    EXPECT_LT(std::abs(numeric - analytic) / std::abs(analytic), 1e-2)
        << " analytic " << analytic << " numeric " << numeric;
    ++checked;
  }
}

TEST(ScoreFile, RoundTripAndErrors) {
  const std::string path = TempFile("score.txt");
  Score s = TwoNotes();
  s.entries.push_back({kRestPhoneme, kRestMidi, 4});
  WriteScore(s, path);
  Score back = ReadScore(path);
  ASSERT_EQ(back.size(), 3u);
  EXPECT_EQ(back.entries[2].midi, kRestMidi);
  EXPECT_EQ(back.total_frames(), 9);
  std::ofstream(path) << "a\t60\n";
  EXPECT_THROW(ReadScore(path), FormatError);
  std::ofstream(path) << "a\t60\t0\n";
  EXPECT_THROW(ReadScore(path), FormatError);
  std::filesystem::remove(path);
  EXPECT_THROW(ReadScore(path), IoError);
}

std::vector<Stage1Example> ToyData(int n, Stage1Config* cfg) {
  std::mt19937_64 rng(5);
  std::vector<Score> scores;
  std::vector<dsp::Waveform> wavs;
  for (int i = 0; i < n; ++i) {
    scores.push_back(toy::RandomScore(rng));
    wavs.push_back(toy::Render(scores.back(), toy::VoiceTimbre(), 16000, i));
  }
  representation::ExtractorConfig ec;
  ec.layer_ids = {1, 2};
  ec.hidden_dim = 16;
  representation::ContentExtractor ex(ec);
  std::vector<representation::ContentFeatures> feats;
  for (const auto& w : wavs) feats.push_back(ex.Extract(w));
  representation::KMeansConfig kc;
  kc.k_per_layer = {8};
  representation::Codebook cb = representation::FitKMeans(feats, kc);
  std::vector<Stage1Example> data;
  for (int i = 0; i < n; ++i) {
    data.push_back({std::to_string(i), scores[i],
                    representation::BuildRepresentation(wavs[i], ex, cb, {})});
  }
  *cfg = TinyConfig();
  cfg->phonemes = PhonemeVocab::FromScores(scores).symbols();
  cfg->token_vocab = {8, 8};
  return data;
}

TEST(Training, LossFallsAndIsSeeded) {
  Stage1Config cfg;
  auto data = ToyData(4, &cfg);
  Stage1TrainConfig tc;
  tc.epochs = 5;
  tc.batch_size = 1;
  tc.lr = 3e-3;
  Stage1Model a(cfg);
  auto la = TrainStage1(a, data, tc);
  Stage1Model b(cfg);
  auto lb = TrainStage1(b, data, tc);
  ASSERT_EQ(la.size(), 20u);
  for (size_t i = 0; i < 10; ++i) EXPECT_EQ(la[i].total, lb[i].total);
  double first = 0, last = 0;
  for (int i = 0; i < 4; ++i) {
    first += la[i].total;
    last += la[la.size() - 1 - i].total;
  }
  EXPECT_LT(last, first);
}

TEST(Training, ResumeMatchesStraightRun) {
  Stage1Config cfg;
  auto data = ToyData(3, &cfg);
  Stage1TrainConfig tc;
  tc.epochs = 4;
  tc.batch_size = 2;
  tc.lr = 3e-3;
  Stage1Model straight(cfg);
  auto ls = TrainStage1(straight, data, tc);

  const std::string dir = TempFile("s1ck");
  std::filesystem::remove_all(dir);
  Stage1TrainConfig first = tc;
  first.epochs = 2;
  first.checkpoint_dir = dir;
  Stage1Model part(cfg);
  TrainStage1(part, data, first);
  ParameterStore opt_state;
  Stage1Model resumed = LoadStage1(dir + "/stage1_last.ckpt", &opt_state);
  EXPECT_EQ(resumed.params().step, 4);
  auto lr = TrainStage1(resumed, data, tc, &opt_state);
  ASSERT_EQ(lr.size(), 4u);
  for (size_t i = 0; i < lr.size(); ++i) EXPECT_EQ(lr[i].total, ls[4 + i].total);
  for (size_t k = 0; k < straight.params().size(); ++k) {
    EXPECT_EQ(straight.params().entries()[k].second.storage(),
              resumed.params().entries()[k].second.storage());
  }
  EXPECT_TRUE(std::filesystem::exists(dir + "/stage1_losses.tsv"));

  Stage1Config other = cfg;
  other.dim = 32;
  Stage1Model wrong(other);
  EXPECT_THROW(wrong.params().AssignFrom(LoadParams(dir + "/stage1_last.ckpt")),
               StructureError);
  std::filesystem::remove_all(dir);
}

TEST(Training, MismatchedExampleRejected) {
  Stage1Config cfg;
  auto data = ToyData(1, &cfg);
  data[0].score.entries.back().duration_frames += 1;
  Stage1Model m(cfg);
  EXPECT_THROW(TrainStage1(m, data, {}), DataError);
}

TEST(Inference, LengthFollowsPredictedDurations) {
  Stage1Config cfg = TinyConfig();
  cfg.silence_tokens = {0};
  Stage1Model m(cfg);
  Score s = TwoNotes();
  representation::FrameRepresentation z = InferStage1(m, s);
  NoGradGuard guard;
  Tensor d = m.PredictDurations(m.Encode(s));
  int expected = 0;
  for (float v : d.storage()) {
    expected += std::max(1, static_cast<int>(std::lround(std::exp(v))));
  }
  EXPECT_EQ(z.tokens.num_frames(), expected);
  EXPECT_EQ(z.f0.num_frames(), expected);
  for (size_t l = 0; l < z.tokens.tokens.size(); ++l) {
    for (int tok : z.tokens.tokens[l]) {
      EXPECT_GE(tok, 0);
      EXPECT_LT(tok, cfg.token_vocab[l]);
    }
  }
  for (int t = 0; t < z.f0.num_frames(); ++t) {
    if (z.tokens.tokens[0][t] == 0) EXPECT_FALSE(z.f0.voiced[t]);
  }
  EXPECT_THROW(InferStage1(m, Score{}), ConfigError);
}

}  // namespace
}  // namespace nhsg::stage1
