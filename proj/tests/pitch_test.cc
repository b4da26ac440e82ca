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
#include <filesystem>
#include <numbers>
#include <random>
#include <vector>

#include "gtest/gtest.h"
#include "nhsg/errors.h"
#include "nhsg/pitch/pitch.h"

namespace nhsg::pitch {
namespace {

dsp::Waveform Harmonic(double f0, double seconds, int sr, int harmonics,
                       uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  std::vector<double> phases(harmonics);
  for (double& p : phases) p = phase(rng);
  dsp::Waveform w;
  w.sample_rate = sr;
  const int n = static_cast<int>(seconds * sr);
  for (int i = 0; i < n; ++i) {
    double v = 0.0;
    for (int k = 1; k <= harmonics && k * f0 < sr / 2.0; ++k) {
      v += std::sin(2.0 * std::numbers::pi * k * f0 * i / sr + phases[k - 1]) /
           k;
    }
    w.samples.push_back(static_cast<float>(0.3 * v));
  }
  return w;
}

double Median(std::vector<float> v) {
  std::nth_element(v.begin(), v.begin() + v.size() / 2, v.end());
  return v[v.size() / 2];
}

TEST(EstimateF0Test, SineAt220) {
  F0Contour c = EstimateF0(Harmonic(220.0, 1.0, 16000, 1, 1), PitchConfig{});
  EXPECT_EQ(c.num_frames(), 51);
  std::vector<float> voiced;
  for (int t = 0; t < c.num_frames(); ++t) {
    EXPECT_TRUE(c.voiced[t]) << t;
    if (c.voiced[t]) voiced.push_back(c.f0_hz[t]);
  }
  ASSERT_FALSE(voiced.empty());
  EXPECT_NEAR(Median(voiced), 220.0, 2.0);
}

TEST(EstimateF0Test, WhiteNoiseMostlyUnvoiced) {
  std::mt19937_64 rng(42);
  std::normal_distribution<double> noise(0.0, 0.3);
  dsp::Waveform w;
  for (int i = 0; i < 16000; ++i) w.samples.push_back(noise(rng));
  F0Contour c = EstimateF0(w, PitchConfig{});
  const int unvoiced = static_cast<int>(
      std::count(c.voiced.begin(), c.voiced.end(), false));
  EXPECT_GE(unvoiced, 0.9 * c.num_frames());
}

TEST(EstimateF0Test, SilenceAllUnvoiced) {
  dsp::Waveform w{std::vector<float>(16000, 0.0f), 16000};
  F0Contour c = EstimateF0(w, PitchConfig{});
  for (int t = 0; t < c.num_frames(); ++t) {
    EXPECT_FALSE(c.voiced[t]);
    EXPECT_EQ(c.f0_hz[t], 0.0f);
  }
  EXPECT_FALSE(IsValidF0(c));
}

TEST(EstimateF0Test, HarmonicSuiteWithinThreePercent) {
  for (double f : {80.0, 110.0, 150.0, 233.0, 330.0, 440.0, 523.0, 659.0,
                   800.0}) {
    F0Contour c = EstimateF0(Harmonic(f, 0.5, 16000, 12, 5), PitchConfig{});
    int voiced = 0, good = 0;
    for (int t = 0; t < c.num_frames(); ++t) {
      if (!c.voiced[t]) continue;
      ++voiced;
      if (std::abs(c.f0_hz[t] - f) <= 0.03 * f) ++good;
    }
    ASSERT_GT(voiced, 0) << f;
    EXPECT_GE(good, 0.95 * voiced) << f;
  }
}

TEST(EstimateF0Test, Deterministic) {
  dsp::Waveform w = Harmonic(300.0, 0.4, 16000, 6, 9);
  F0Contour a = EstimateF0(w, PitchConfig{});
  F0Contour b = EstimateF0(w, PitchConfig{});
  EXPECT_EQ(a.f0_hz, b.f0_hz);
  EXPECT_EQ(a.voiced, b.voiced);
}

TEST(EstimateF0Test, TooShort) {
  dsp::Waveform w{std::vector<float>(1000, 0.1f), 16000};
  EXPECT_THROW(EstimateF0(w, PitchConfig{}), TooShortError);
}

TEST(EstimateF0Test, VoicedIffPositive) {
  F0Contour c = EstimateF0(Harmonic(180.0, 0.6, 16000, 5, 2), PitchConfig{});
  for (int t = 0; t < c.num_frames(); ++t) {
    EXPECT_EQ(c.voiced[t], c.f0_hz[t] > 0.0f);
    EXPECT_LT(c.f0_hz[t], 8000.0f);
  }
}

F0Contour Contour(std::vector<float> f0) {
  F0Contour c;
  for (float v : f0) {
    c.f0_hz.push_back(v);
    c.voiced.push_back(v > 0.0f);
  }
  return c;
}

TEST(AlignF0Test, IdentityAtSameLength) {
  F0Contour c = Contour({100, 0, 120, 130});
  F0Contour a = AlignF0(c, 4);
  EXPECT_EQ(a.f0_hz, c.f0_hz);
  EXPECT_EQ(a.voiced, c.voiced);
}

TEST(AlignF0Test, NearestIndexDownsample) {
  F0Contour a = AlignF0(Contour({100, 100, 200, 200}), 2);
  EXPECT_EQ(a.f0_hz, (std::vector<float>{100, 200}));
}

TEST(AlignF0Test, RandomContoursKeepInvariantAndIdempotent) {
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<int> len(1, 80);
  std::bernoulli_distribution voiced(0.6);
  std::uniform_real_distribution<float> hz(60.0f, 900.0f);
  for (int i = 0; i < 100; ++i) {
    std::vector<float> f0(len(rng));
    for (float& v : f0) v = voiced(rng) ? hz(rng) : 0.0f;
    const int target = len(rng);
    F0Contour a = AlignF0(Contour(f0), target);
    ASSERT_EQ(a.num_frames(), target);
    for (int t = 0; t < target; ++t) {
      EXPECT_EQ(a.voiced[t], a.f0_hz[t] > 0.0f);
    }
    F0Contour b = AlignF0(a, target);
    EXPECT_EQ(a.f0_hz, b.f0_hz);
  }
}

TEST(IsValidF0Test, Cases) {
  EXPECT_FALSE(IsValidF0(Contour({0, 0, 0})));
  EXPECT_TRUE(IsValidF0(Contour({0, 150, 0})));
  EXPECT_TRUE(IsValidF0(EstimateF0(Harmonic(250, 0.3, 16000, 1, 3),
                                   PitchConfig{})));
}

TEST(LogF0Test, Values) {
  F0Contour c = Contour({static_cast<float>(std::numbers::e), 0.0f, 440.0f});
  std::vector<float> l = LogF0(c);
  EXPECT_NEAR(l[0], 1.0f, 1e-6);
  EXPECT_EQ(l[1], 0.0f);
  EXPECT_FALSE(c.voiced[1]);
  EXPECT_NEAR(std::exp(l[2]), 440.0f, 440.0f * 1e-6);
}

TEST(SidecarTest, RoundTrip) {
  const std::string path =
      (std::filesystem::temp_directory_path() / "nhsg_f0.txt").string();
  F0Contour c = Contour({0.0f, 123.5f, 440.25f, 0.0f});
  WriteF0Sidecar(c, path);
  F0Contour back = ReadF0Sidecar(path, dsp::FrameSpec{});
  EXPECT_EQ(back.f0_hz, c.f0_hz);
  EXPECT_EQ(back.voiced, c.voiced);
}

}  // namespace
}  // namespace nhsg::pitch
