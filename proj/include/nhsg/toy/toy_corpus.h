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

#ifndef NHSG_TOY_TOY_CORPUS_H_
#define NHSG_TOY_TOY_CORPUS_H_

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "nhsg/dsp/waveform.h"
#include "nhsg/stage1/score.h"

namespace nhsg::toy {

// Synthetic vowels, each a pair of formant centres.
const std::vector<std::string>& ToyPhonemes();

struct ToyTimbre {
  std::string name = "voice";
  double tilt_db_per_octave = -6.0;
  bool odd_harmonics_only = false;
  double formant_scale = 1.0;
  double breath = 0.0;  // relative noise level
  double noise_floor = 1e-3;  // absolute background noise, also in rests
};

ToyTimbre VoiceTimbre();
ToyTimbre ReedTimbre();  // hollow, odd-harmonic, brighter
ToyTimbre ChipTimbre();  // flat spectrum, square-ish

struct ScoreSpec {
  int min_notes = 4;
  int max_notes = 8;
  int min_frames = 6;
  int max_frames = 18;
  int min_midi = 55;
  int max_midi = 74;
  double rest_probability = 0.15;
};

stage1::Score RandomScore(std::mt19937_64& rng, const ScoreSpec& spec = {});

// Renders `score` at `sample_rate` with a 20 ms frame; output length is
// total_frames * hop exactly.
dsp::Waveform Render(const stage1::Score& score, const ToyTimbre& timbre,
                     int sample_rate, uint64_t seed);

}  // namespace nhsg::toy

#endif  // NHSG_TOY_TOY_CORPUS_H_
