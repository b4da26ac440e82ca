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

#include "nhsg/eval/eval.h"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <unistd.h>

#include "nhsg/errors.h"
#include "signals.h"

namespace nhsg::eval {
namespace {

pitch::F0Contour Contour(std::vector<float> f0, std::vector<bool> voiced) {
  pitch::F0Contour c;
  c.f0_hz = std::move(f0);
  c.voiced = std::move(voiced);
  return c;
}

pitch::F0Contour RandomContour(int n, std::mt19937_64& rng) {
  std::uniform_real_distribution<float> hz(80.f, 600.f);
  std::bernoulli_distribution v(0.7);
  pitch::F0Contour c;
  for (int t = 0; t < n; ++t) {
    const bool on = v(rng);
    c.voiced.push_back(on);
    c.f0_hz.push_back(on ? hz(rng) : 0.f);
  }
  return c;
}

TEST(Lf0Rmse, IdentityIsZero) {
  std::mt19937_64 rng(1);
  auto c = RandomContour(40, rng);
  EXPECT_DOUBLE_EQ(*Lf0Rmse(c, c), 0.0);
}

TEST(Lf0Rmse, ScaledByEIsOne) {
  std::mt19937_64 rng(2);
  auto ref = RandomContour(30, rng);
  auto hyp = ref;
  for (int t = 0; t < hyp.num_frames(); ++t) {
    if (hyp.voiced[t]) hyp.f0_hz[t] = static_cast<float>(hyp.f0_hz[t] * std::exp(1.0));
  }
  EXPECT_NEAR(*Lf0Rmse(ref, hyp), 1.0, 1e-6);  // float storage of f0
}

TEST(Lf0Rmse, MatchesScalarOracle) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    auto a = RandomContour(10, rng);
    auto b = RandomContour(10, rng);
    double s = 0;
    int n = 0;
    for (int t = 0; t < 10; ++t) {
      if (a.voiced[t] && b.voiced[t]) {
        double d = std::log(double(a.f0_hz[t])) - std::log(double(b.f0_hz[t]));
        s += d * d;
        ++n;
      }
    }
    auto got = Lf0Rmse(a, b);
    if (n == 0) {
      EXPECT_FALSE(got.has_value());
    } else {
      ASSERT_TRUE(got.has_value());
      EXPECT_NEAR(*got, std::sqrt(s / n), 1e-9);
      EXPECT_NEAR(*Lf0Rmse(b, a), *got, 1e-12);
    }
  }
}

TEST(Lf0Rmse, NoCoVoicedIsFlagged) {
  auto ref = Contour({100, 110, 0}, {true, true, false});
  auto hyp = Contour({0, 0, 0}, {false, false, false});
  EXPECT_FALSE(Lf0Rmse(ref, hyp).has_value());
  auto disjoint = Contour({0, 0, 120}, {false, false, true});
  EXPECT_FALSE(Lf0Rmse(ref, disjoint).has_value());
}

TEST(Lf0Rmse, TruncatesToShorter) {
  auto ref = Contour({100, 200, 300}, {true, true, true});
  auto hyp = Contour({100, 200}, {true, true});
  EXPECT_DOUBLE_EQ(*Lf0Rmse(ref, hyp), 0.0);
}

TEST(VuvError, TrivialCases) {
  std::mt19937_64 rng(4);
  auto c = RandomContour(25, rng);
  EXPECT_DOUBLE_EQ(VuvError(c, c), 0.0);
  auto inv = c;
  for (int t = 0; t < inv.num_frames(); ++t) inv.voiced[t] = !inv.voiced[t];
  EXPECT_DOUBLE_EQ(VuvError(c, inv), 100.0);
}

TEST(VuvError, MatchesCountingOracle) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    auto a = RandomContour(17, rng);
    auto b = RandomContour(17, rng);
    int diff = 0;
    for (int t = 0; t < 17; ++t) diff += a.voiced[t] != b.voiced[t];
    EXPECT_DOUBLE_EQ(VuvError(a, b), 100.0 * diff / 17);
    EXPECT_DOUBLE_EQ(VuvError(b, a), VuvError(a, b));
  }
}

TEST(Sim, TrivialCases) {
  std::vector<float> e = {0.3f, -1.2f, 2.f, 0.5f};
  std::vector<float> neg = e;
  for (float& x : neg) x = -x;
  EXPECT_NEAR(Sim(e, e), 1.0, 1e-12);
  EXPECT_NEAR(Sim(e, neg), -1.0, 1e-12);
  EXPECT_NEAR(Sim({1, 0, 0}, {0, 1, 0}), 0.0, 1e-12);
}

TEST(Sim, MatchesScalarOracle) {
  std::mt19937_64 rng(6);
  std::normal_distribution<float> nd;
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<float> a(192), b(192);
    for (auto& x : a) x = nd(rng);
    for (auto& x : b) x = nd(rng);
    double dot = 0, na = 0, nb = 0;
    for (int i = 0; i < 192; ++i) {
      dot += double(a[i]) * b[i];
      na += double(a[i]) * a[i];
      nb += double(b[i]) * b[i];
    }
    EXPECT_NEAR(Sim(a, b), dot / std::sqrt(na) / std::sqrt(nb), 1e-9);
  }
}

TEST(Sim, Errors) {
  EXPECT_THROW(Sim({0, 0}, {1, 0}), InvalidEmbeddingError);
  EXPECT_THROW(Sim({1, 0}, {1, 0, 0}), ShapeError);
}

TEST(Mcd, IdentityIsZero) {
  auto w = testing::Noise(0.5, 11);
  EXPECT_DOUBLE_EQ(Mcd(w, w), 0.0);
}

TEST(Mcd, AmplitudeOnlyMovesC0) {
  auto w = testing::Noise(0.5, 12, 16000, 0.1);
  auto loud = w;
  for (float& s : loud.samples) s *= 2.f;
  const Matrix a = MelCepstrum(w);
  const Matrix b = MelCepstrum(loud);
  // c0 carries the whole log-gain shift
  EXPECT_NEAR(b(0, 0) - a(0, 0), std::log(2.0) * std::sqrt(80.0), 1e-3);
  EXPECT_NEAR(Mcd(w, loud), 0.0, 1e-3);
}

TEST(Mcd, MatchesScalarOracleOnSyntheticCepstra) {
  std::mt19937_64 rng(13);
  std::normal_distribution<double> nd;
  Matrix a(3, 30), b(4, 30);
  for (int i = 0; i < a.size(); ++i) a.data()[i] = nd(rng);
  for (int i = 0; i < b.size(); ++i) b.data()[i] = nd(rng);
  double total = 0;
  for (int t = 0; t < 3; ++t) {
    double s = 0;
    for (int d = 1; d <= 24; ++d) s += (a(t, d) - b(t, d)) * (a(t, d) - b(t, d));
    total += std::sqrt(s);
  }
  const double want = 10.0 / std::log(10.0) * std::sqrt(2.0) * total / 3.0;
  EXPECT_NEAR(McdFromCepstra(a, b), want, 1e-9);
  EXPECT_NEAR(McdFromCepstra(b, a), want, 1e-9);
}

TEST(Mcd, TooShort) {
  auto w = testing::Noise(0.01, 1);
  EXPECT_THROW(MelCepstrum(w), TooShortError);
}

class ManifestTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = std::filesystem::temp_directory_path() /
           ("nhsg_eval_" + std::to_string(::getpid()));
    std::filesystem::create_directories(dir_);
  }
  void TearDown() override { std::filesystem::remove_all(dir_); }

  std::string Put(const std::string& name, const dsp::Waveform& w) {
    dsp::WriteWav(w, (dir_ / name).string());
    return name;
  }

  std::filesystem::path dir_;
};

TEST_F(ManifestTest, SelfEvaluationGivesIdentityScores) {
  std::ofstream m(dir_ / "pairs.jsonl");
  for (int i = 0; i < 4; ++i) {
    auto w = testing::Sawtooth(120.0 + 50 * i, 0.6);
    const std::string f = Put("c" + std::to_string(i) + ".wav", w);
    m << R"({"id":"c)" << i << R"(","hyp_path":")" << f << R"(","ref_path":")" << f
      << "\"}\n";
  }
  m.close();
  representation::TimbreEmbedder emb({});
  EvalContext ctx;
  ctx.embedder = &emb;
  auto report = EvaluateManifest(ReadPairsManifest((dir_ / "pairs.jsonl").string()), ctx);
  ASSERT_EQ(report.rows.size(), 4u);
  for (const auto& r : report.rows) {
    EXPECT_FALSE(r.failed) << r.error;
    EXPECT_DOUBLE_EQ(r.lf0_rmse, 0.0);
    EXPECT_DOUBLE_EQ(r.vuv_pct, 0.0);
    EXPECT_NEAR(r.sim, 1.0, 1e-9);
    EXPECT_DOUBLE_EQ(r.mcd, 0.0);
  }
  EXPECT_EQ(report.rows[2].id, "c2");
  EXPECT_EQ(report.lf0_rmse.count, 4);
  EXPECT_DOUBLE_EQ(report.f0_nan_pct(), 0.0);
}

TEST_F(ManifestTest, NanRateCountsSilentHyps) {
  std::ofstream m(dir_ / "pairs.jsonl");
  const int total = 5, silent = 2;
  for (int i = 0; i < total; ++i) {
    const std::string ref = Put("r" + std::to_string(i) + ".wav", testing::Sawtooth(200, 0.5));
    const std::string hyp = Put("h" + std::to_string(i) + ".wav",
                                i < silent ? testing::Silence(0.5) : testing::Sawtooth(210, 0.5));
    m << R"({"id":"p)" << i << R"(","hyp_path":")" << hyp << R"(","ref_path":")" << ref
      << R"(","metrics":["lf0_rmse","vuv"]})" << "\n";
  }
  m.close();
  auto report = EvaluateManifest(ReadPairsManifest((dir_ / "pairs.jsonl").string()), {});
  EXPECT_EQ(report.f0_nan_count, silent);
  EXPECT_DOUBLE_EQ(report.f0_nan_pct(), 100.0 * silent / total);
  EXPECT_EQ(report.lf0_rmse.count, total - silent);
  for (int i = 0; i < total; ++i) EXPECT_EQ(std::isnan(report.rows[i].lf0_rmse), i < silent);
}

TEST_F(ManifestTest, MissingFileMarksRowFailed) {
  std::ofstream m(dir_ / "pairs.jsonl");
  const std::string ok = Put("ok.wav", testing::Sawtooth(150, 0.5));
  m << R"({"id":"a","hyp_path":"missing.wav","ref_path":")" << ok << "\"}\n";
  m << R"({"id":"b","hyp_path":")" << ok << R"(","ref_path":")" << ok
    << R"(","metrics":["mcd"]})" << "\n";
  m.close();
  auto report = EvaluateManifest(ReadPairsManifest((dir_ / "pairs.jsonl").string()), {});
  ASSERT_EQ(report.rows.size(), 2u);
  EXPECT_TRUE(report.rows[0].failed);
  EXPECT_FALSE(report.rows[1].failed);
  EXPECT_EQ(report.failed, 1);
  EXPECT_DOUBLE_EQ(report.rows[1].mcd, 0.0);
}

TEST_F(ManifestTest, CsvRoundTrip) {
  PairRecord a;
  a.id = "x";
  a.lf0_rmse = 0.123456789012345;
  a.vuv_pct = 12.5;
  a.sim = -0.25;
  a.mcd = 4.75;
  PairRecord b;
  b.id = "y";
  b.f0_nan = true;
  b.vuv_pct = 100;
  PairRecord c;
  c.id = "z";
  c.failed = true;
  c.error = "cannot open z.wav, gone";
  auto report = Summarize({a, b, c});
  const std::string path = (dir_ / "report.csv").string();
  WriteReportCsv(report, path);
  auto back = ReadReportCsv(path);
  ASSERT_EQ(back.rows.size(), 3u);
  EXPECT_EQ(back.rows[0].lf0_rmse, a.lf0_rmse);
  EXPECT_EQ(back.rows[0].sim, a.sim);
  EXPECT_TRUE(std::isnan(back.rows[1].lf0_rmse));
  EXPECT_TRUE(back.rows[1].f0_nan);
  EXPECT_TRUE(back.rows[2].failed);
  EXPECT_EQ(back.failed, 1);
  EXPECT_DOUBLE_EQ(back.f0_nan_pct(), report.f0_nan_pct());
  EXPECT_DOUBLE_EQ(back.vuv_pct.mean, 56.25);
  WriteReportCsv(back, (dir_ / "again.csv").string());
  std::ifstream r1(path), r2(dir_ / "again.csv");
  std::string s1((std::istreambuf_iterator<char>(r1)), {}), s2((std::istreambuf_iterator<char>(r2)), {});
  EXPECT_EQ(s1, s2);
}

TEST(Metric, NamesRoundTrip) {
  for (Metric m : {Metric::kLf0Rmse, Metric::kVuv, Metric::kSim, Metric::kMcd}) {
    EXPECT_EQ(ParseMetric(MetricName(m)), m);
  }
  EXPECT_THROW(ParseMetric("pesq"), FormatError);
}

}  // namespace
}  // namespace nhsg::eval
