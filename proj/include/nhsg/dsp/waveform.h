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

#ifndef NHSG_DSP_WAVEFORM_H_
#define NHSG_DSP_WAVEFORM_H_

#include <string>
#include <vector>

namespace nhsg::dsp {

// Mono audio carrier. Samples nominally lie in [-1, 1].
struct Waveform {
  std::vector<float> samples;
  int sample_rate = 16000;

  size_t size() const { return samples.size(); }
  double duration_s() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
};

// Throws FormatError when the waveform is empty, has a non-positive rate or
// holds a non-finite sample.
void ValidateWaveform(const Waveform& w);

// Accepts RIFF/WAVE PCM-16 or IEEE float-32, any channel count; channels are
// averaged to mono.
Waveform ReadWav(const std::string& path);

// Writes 16-bit PCM mono. Samples are clipped to [-1, 1 - 2^-15].
void WriteWav(const Waveform& w, const std::string& path);

// Integer-factor decimation by block averaging.
Waveform DecimateByAveraging(const Waveform& w, int factor);

}  // namespace nhsg::dsp

#endif  // NHSG_DSP_WAVEFORM_H_
