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

#ifndef NHSG_PITCH_PITCH_H_
#define NHSG_PITCH_PITCH_H_

#include <string>
#include <vector>

#include "nhsg/dsp/spectral.h"
#include "nhsg/dsp/waveform.h"

namespace nhsg::pitch {

// Frame-level F0. Unvoiced frames carry f0 = 0 and voiced[t] == (f0[t] > 0).
struct F0Contour {
  std::vector<float> f0_hz;
  std::vector<bool> voiced;
  dsp::FrameSpec frame_spec;

  int num_frames() const { return static_cast<int>(f0_hz.size()); }
};

struct PitchConfig {
  double fmin = 50.0;
  double fmax = 1100.0;
  // Upper bound on the normalized difference minimum for a voiced frame.
  double harmonicity_threshold = 0.1;
  double frame_period_ms = 20.0;
};

void ValidatePitchConfig(const PitchConfig& cfg, int sample_rate);

// Minimum input length: four periods of the lowest searchable pitch.
long MinimumPitchInput(const PitchConfig& cfg, int sample_rate);

// YIN-style estimator. Frame t is centered at t * hop (windows are shifted
// inward at the edges); there are floor(len / hop) + 1 frames.
F0Contour EstimateF0(const dsp::Waveform& w, const PitchConfig& cfg);

// Nearest-frame resampling to exactly `target_frames` frames.
F0Contour AlignF0(const F0Contour& c, int target_frames);

bool IsValidF0(const F0Contour& c);

// ln(f0) on voiced frames, 0.0 on unvoiced frames.
std::vector<float> LogF0(const F0Contour& c);

// Sidecar text format: one "frame_index<TAB>f0_hz" line per frame.
F0Contour ReadF0Sidecar(const std::string& path, const dsp::FrameSpec& spec);
void WriteF0Sidecar(const F0Contour& c, const std::string& path);

}  // namespace nhsg::pitch

#endif  // NHSG_PITCH_PITCH_H_
