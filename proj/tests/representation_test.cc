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

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <random>

#include <gtest/gtest.h>

#include "nhsg/binary_io.h"
#include "nhsg/errors.h"
#include "nhsg/representation/representation.h"
#include "signals.h"

namespace nhsg::representation {
namespace {

using nhsg::testing::Noise;
using nhsg::testing::Sawtooth;
using nhsg::testing::Silence;
using nhsg::testing::Sine;
using nhsg::testing::TempFile;

ExtractorConfig SmallExtractor() {
  ExtractorConfig cfg;
  cfg.layer_ids = {2, 3};
  cfg.hidden_dim = 8;
  cfg.n_mels = 20;
  return cfg;
}

Matrix Blobs(int per_blob, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 0.3);
  Matrix m(2 * per_blob, 2);
  for (int i = 0; i < 2 * per_blob; ++i) {
    const double cx = i < per_blob ? -3.0 : 4.0;
    const double cy = i < per_blob ? 1.0 : -2.0;
    m(i, 0) = cx + nd(rng);
    m(i, 1) = cy + nd(rng);
  }
  return m;
}

TEST(FrameGrid, OneSecondGivesFiftyFrames) {
  EXPECT_EQ(NumTokenFrames(16000, 16000), 50);
  EXPECT_EQ(NumTokenFrames(44100, 44100), 50);
  EXPECT_EQ(TokenHop(44100), 882);
  ContentExtractor ex(ExtractorConfig{});
  ContentFeatures f = ex.Extract(Sine(220, 1.0));
  EXPECT_EQ(f.num_frames(), 50);
  EXPECT_EQ(f.layers.size(), 4u);
  ContentFeatures g = ex.Extract(Sine(220, 1.0, 44100));
  EXPECT_EQ(g.num_frames(), 50);
}

TEST(Extractor, Deterministic) {
  ContentExtractor a(SmallExtractor());
  ContentExtractor b(SmallExtractor());
  dsp::Waveform w = Sawtooth(180, 0.5);
  ContentFeatures fa = a.Extract(w);
  ContentFeatures fb = b.Extract(w);
  for (size_t l = 0; l < fa.layers.size(); ++l) {
    EXPECT_EQ(fa.layers[l], fb.layers[l]);
  }
}

TEST(Extractor, FeatureFileRoundTripAndMismatch) {
  ContentExtractor ex(SmallExtractor());
  ContentFeatures f = ex.Extract(Sine(300, 0.4));
  const std::string dir = TempFile("ingest");
  std::filesystem::create_directories(dir);
  WriteFeatures(f, dir + "/clip.nhft");
  ExtractorConfig icfg = SmallExtractor();
  icfg.backend = ExtractorBackend::kFileIngest;
  icfg.ingest_dir = dir;
  ContentFeatures g = ContentExtractor(icfg).Extract({}, "clip");
  ASSERT_EQ(g.layers.size(), f.layers.size());
  for (size_t l = 0; l < f.layers.size(); ++l) {
    EXPECT_TRUE(g.layers[l].isApprox(f.layers[l], 1e-6));
  }
  EXPECT_THROW(ContentExtractor(icfg).Extract({}, "absent"), IoError);

  // Two layers with different frame counts.
  io::BinaryWriter w(dir + "/bad.nhft");
  w.Magic("NHFT");
  w.Pod<uint32_t>(1);
  w.Pod<uint32_t>(2);
  for (uint32_t v : {2u, 3u, 1u, 3u, 4u, 1u}) w.Pod<uint32_t>(v);
  std::vector<float> zeros(7, 0.0f);
  w.Array(zeros.data(), zeros.size());
  w.Close();
  EXPECT_THROW(ReadFeatures(dir + "/bad.nhft"), FormatError);
  std::filesystem::remove_all(dir);
}

TEST(KMeans, SingleClusterIsMean) {
  Matrix data = Blobs(50, 1);
  KMeansResult r = FitKMeansLayer(data, 1, 20, 1e-4, 3);
  Vector mean = data.colwise().mean().transpose();
  EXPECT_NEAR(r.centroids(0, 0), mean[0], 1e-6);
  EXPECT_NEAR(r.centroids(0, 1), mean[1], 1e-6);
}

TEST(KMeans, SeparatesTwoBlobs) {
  Matrix data = Blobs(200, 2);
  KMeansResult r = FitKMeansLayer(data, 2, 50, 1e-4, 9);
  Matrix c = r.centroids;
  if (c(0, 0) > c(1, 0)) c.row(0).swap(c.row(1));
  EXPECT_NEAR(c(0, 0), -3.0, 0.1);
  EXPECT_NEAR(c(0, 1), 1.0, 0.1);
  EXPECT_NEAR(c(1, 0), 4.0, 0.1);
  EXPECT_NEAR(c(1, 1), -2.0, 0.1);
}

TEST(KMeans, InertiaNonIncreasingAndFixedPoint) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> nd;
  Matrix data(600, 3);
  for (Eigen::Index i = 0; i < data.size(); ++i) data.data()[i] = nd(rng);
  KMeansResult r = FitKMeansLayer(data, 12, 300, 0.0, 5);
  ASSERT_GE(r.inertia_history.size(), 2u);
  for (size_t i = 1; i < r.inertia_history.size(); ++i) {
    EXPECT_LE(r.inertia_history[i], r.inertia_history[i - 1] * (1 + 1e-12));
  }
  // One more Lloyd update leaves the centroids where they are.
  Matrix next = Matrix::Zero(12, 3);
  std::vector<int> count(12, 0);
  for (Eigen::Index i = 0; i < data.rows(); ++i) {
    const int k = NearestCentroid(r.centroids, data.row(i).data());
    next.row(k) += data.row(i);
    ++count[k];
  }
  for (int k = 0; k < 12; ++k) {
    ASSERT_GT(count[k], 0);
    next.row(k) /= count[k];
    EXPECT_LT((next.row(k) - r.centroids.row(k)).norm(), 1e-5);
  }
}

TEST(KMeans, TooFewVectors) {
  EXPECT_THROW(FitKMeansLayer(Matrix::Zero(3, 2), 4, 10, 1e-4, 0), ConfigError);
}

Codebook RandomCodebook(int k, int d, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  Codebook cb;
  cb.layer_ids = {1};
  Matrix c(k, d);
  for (Eigen::Index i = 0; i < c.size(); ++i) c.data()[i] = nd(rng);
  cb.centroids.push_back(c);
  return cb;
}

TEST(Quantize, CentroidMapsToItself) {
  Codebook cb = RandomCodebook(10, 4, 1);
  ContentFeatures f;
  f.layer_ids = {1};
  f.layers.push_back(cb.centroids[0].row(7));
  EXPECT_EQ(Quantize(f, cb).tokens[0][0], 7);
}

TEST(Quantize, TieGoesToLowestIndex) {
  Codebook cb;
  cb.layer_ids = {1};
  Matrix c = Matrix::Zero(6, 1);
  for (int k = 0; k < 6; ++k) c(k, 0) = 10.0 + k;
  c(2, 0) = -1.0;
  c(5, 0) = 1.0;
  cb.centroids.push_back(c);
  ContentFeatures f;
  f.layer_ids = {1};
  f.layers.push_back(Matrix::Zero(1, 1));
  EXPECT_EQ(Quantize(f, cb).tokens[0][0], 2);
}

TEST(Quantize, DimensionMismatch) {
  Codebook cb = RandomCodebook(4, 3, 2);
  ContentFeatures f;
  f.layer_ids = {1};
  f.layers.push_back(Matrix::Zero(2, 5));
  EXPECT_THROW(Quantize(f, cb), ShapeError);
}

TEST(Codebook, RoundTripBitExact) {
  ContentExtractor ex(SmallExtractor());
  std::vector<ContentFeatures> feats = {ex.Extract(Sawtooth(150, 0.6)),
                                        ex.Extract(Sine(400, 0.6))};
  KMeansConfig kc;
  kc.k_per_layer = {5, 7};
  kc.seed = 3;
  Codebook cb = FitKMeans(feats, kc);
  const std::string path = TempFile("cb.nhcb");
  WriteCodebook(cb, path);
  Codebook back = ReadCodebook(path);
  ASSERT_EQ(back.layer_ids, cb.layer_ids);
  for (size_t l = 0; l < cb.centroids.size(); ++l) {
    ASSERT_EQ(back.centroids[l].rows(), cb.centroids[l].rows());
    EXPECT_EQ(0, std::memcmp(back.centroids[l].data(), cb.centroids[l].data(),
                             sizeof(double) * cb.centroids[l].size()));
  }
  EXPECT_EQ(back.inertia, cb.inertia);
  EXPECT_EQ(back.iterations, cb.iterations);
  std::filesystem::resize_file(path, std::filesystem::file_size(path) - 20);
  EXPECT_THROW(ReadCodebook(path), FormatError);
  std::filesystem::remove(path);
}

TEST(Representation, TokensAndPitchShareFrames) {
  ContentExtractor ex(SmallExtractor());
  std::vector<ContentFeatures> feats = {ex.Extract(Sawtooth(150, 0.6))};
  KMeansConfig kc;
  kc.k_per_layer = {6};
  Codebook cb = FitKMeans(feats, kc);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> len(0.15, 1.3), hz(90, 600);
  for (int i = 0; i < 50; ++i) {
    dsp::Waveform w = Sawtooth(hz(rng), len(rng), i % 2 ? 16000 : 22050);
    FrameRepresentation z = BuildRepresentation(w, ex, cb, {});
    EXPECT_EQ(z.tokens.num_frames(), z.f0.num_frames());
    EXPECT_EQ(z.tokens.num_frames(), NumTokenFrames(w.size(), w.sample_rate));
  }
}

TEST(Representation, SineFullyVoicedAndSilenceRejected) {
  ContentExtractor ex(SmallExtractor());
  KMeansConfig kc;
  kc.k_per_layer = {4};
  Codebook cb = FitKMeans({ex.Extract(Sine(220, 0.5))}, kc);
  FrameRepresentation z = BuildRepresentation(Sine(220, 1.0), ex, cb, {});
  EXPECT_TRUE(std::all_of(z.f0.voiced.begin(), z.f0.voiced.end(),
                          [](bool v) { return v; }));
  EXPECT_THROW(BuildRepresentation(Silence(1.0), ex, cb, {}),
               InvalidSegmentError);

  const std::string path = TempFile("z.nhrz");
  WriteRepresentation(z, path);
  FrameRepresentation back = ReadRepresentation(path);
  EXPECT_EQ(back.tokens.tokens, z.tokens.tokens);
  EXPECT_EQ(back.f0.f0_hz, z.f0.f0_hz);
  EXPECT_EQ(back.f0.voiced, z.f0.voiced);
  std::filesystem::remove(path);
}

TEST(Timbre, SelfCosineIsOne) {
  TimbreEmbedder emb({});
  TimbreEmbedding a = emb.Embed(Sawtooth(220, 1.0));
  TimbreEmbedding b = emb.Embed(Sawtooth(220, 1.0));
  EXPECT_EQ(a.values.size(), 192u);
  EXPECT_NEAR(Cosine(a.values, b.values), 1.0, 1e-12);
}

TEST(Timbre, SawtoothAndNoiseDiffer) {
  TimbreEmbedder emb({});
  const double c = Cosine(emb.Embed(Sawtooth(220, 1.0)).values,
                          emb.Embed(Noise(1.0, 5)).values);
  RecordProperty("saw_noise_cosine", std::to_string(c));
  EXPECT_LT(c, 0.9);
}

TEST(Timbre, PitchShiftCloserThanTimbreChange) {
  TimbreEmbedder emb({});
  auto saw = emb.Embed(Sawtooth(220, 1.0)).values;
  auto saw_up = emb.Embed(Sawtooth(247, 1.0)).values;
  auto sine = emb.Embed(Sine(220, 1.0)).values;
  EXPECT_GT(Cosine(saw, saw_up), Cosine(saw, sine));
}

TEST(Timbre, IngestValidation) {
  const std::string dir = TempFile("emb");
  std::filesystem::create_directories(dir);
  WriteEmbedding({std::vector<float>(192, 0.0f), "z"}, dir + "/zero.nhte");
  WriteEmbedding({std::vector<float>(100, 1.0f), "s"}, dir + "/short.nhte");
  EXPECT_THROW(ReadEmbedding(dir + "/zero.nhte"), InvalidEmbeddingError);
  EXPECT_THROW(ReadEmbedding(dir + "/short.nhte"), FormatError);
  EmbedderConfig cfg;
  cfg.backend = EmbedderBackend::kFileIngest;
  cfg.ingest_dir = dir;
  WriteEmbedding({std::vector<float>(192, 0.5f), "ok"}, dir + "/ok.nhte");
  EXPECT_FLOAT_EQ(TimbreEmbedder(cfg).Embed({}, "ok").values[3], 0.5f);
  EXPECT_THROW(TimbreEmbedder({}).Embed(Silence(1.0)), InvalidEmbeddingError);
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace nhsg::representation
