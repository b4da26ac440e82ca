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

#ifndef NHSG_TESTS_SIGNALS_H_
#define NHSG_TESTS_SIGNALS_H_

#include <cmath>
#include <filesystem>
#include <random>
#include <string>

#include "nhsg/dsp/waveform.h"

namespace nhsg::testing {

inline dsp::Waveform Sine(double hz, double seconds, int sr = 16000,
                          double amp = 0.5) {
  dsp::Waveform w;
  w.sample_rate = sr;
  w.samples.resize(static_cast<size_t>(seconds * sr));
  for (size_t i = 0; i < w.size(); ++i) {
    w.samples[i] = static_cast<float>(amp * std::sin(2 * M_PI * hz * i / sr));
  }
  return w;
}

// Band-limited sawtooth, harmonics below Nyquist.
inline dsp::Waveform Sawtooth(double hz, double seconds, int sr = 16000,
                              double amp = 0.3) {
  dsp::Waveform w;
  w.sample_rate = sr;
  w.samples.assign(static_cast<size_t>(seconds * sr), 0.0f);
  for (int h = 1; h * hz < sr / 2.0; ++h) {
    for (size_t i = 0; i < w.size(); ++i) {
      w.samples[i] += static_cast<float>(
          amp / h * std::sin(2 * M_PI * h * hz * i / sr));
    }
  }
  return w;
}

inline dsp::Waveform Noise(double seconds, uint64_t seed, int sr = 16000,
                           double amp = 0.2) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, amp);
  dsp::Waveform w;
  w.sample_rate = sr;
  w.samples.resize(static_cast<size_t>(seconds * sr));
  for (float& s : w.samples) s = static_cast<float>(std::clamp(nd(rng), -0.99, 0.99));
  return w;
}

inline dsp::Waveform Silence(double seconds, int sr = 16000) {
  dsp::Waveform w;
  w.sample_rate = sr;
  w.samples.assign(static_cast<size_t>(seconds * sr), 0.0f);
  return w;
}

inline std::string TempFile(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("nhsg_" + name)).string();
}

}  // namespace nhsg::testing

#endif  // NHSG_TESTS_SIGNALS_H_
