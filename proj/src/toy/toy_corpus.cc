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

#include "nhsg/toy/toy_corpus.h"

#include <algorithm>
#include <cmath>
#include <map>

#include "nhsg/errors.h"

namespace nhsg::toy {
namespace {

struct Formants {
  double f1, f2;
};

const std::map<std::string, Formants>& FormantTable() {
  static const std::map<std::string, Formants> table = {
      {"a", {800, 1200}}, {"i", {300, 2300}}, {"u", {350, 800}},
      {"e", {500, 1900}}, {"o", {500, 900}}};
  return table;
}

double MidiToHz(double midi) { return 440.0 * std::pow(2.0, (midi - 69) / 12.0); }

double Resonance(double f, double centre, double bw) {
  const double x = (f - centre) / bw;
  return 1.0 / (1.0 + x * x);
}

}  // namespace

const std::vector<std::string>& ToyPhonemes() {
  static const std::vector<std::string> names = {"a", "e", "i", "o", "u"};
  return names;
}

ToyTimbre VoiceTimbre() { return {}; }

ToyTimbre ReedTimbre() {
  ToyTimbre t;
  t.name = "reed";
  t.tilt_db_per_octave = -3.0;
  t.odd_harmonics_only = true;
  t.formant_scale = 1.25;
  return t;
}

ToyTimbre ChipTimbre() {
  ToyTimbre t;
  t.name = "chip";
  t.tilt_db_per_octave = -1.5;
  t.odd_harmonics_only = true;
  t.formant_scale = 0.8;
  t.breath = 0.02;
  return t;
}

stage1::Score RandomScore(std::mt19937_64& rng, const ScoreSpec& spec) {
  std::uniform_int_distribution<int> notes(spec.min_notes, spec.max_notes);
  std::uniform_int_distribution<int> frames(spec.min_frames, spec.max_frames);
  std::uniform_int_distribution<int> midi(spec.min_midi, spec.max_midi);
  std::uniform_int_distribution<size_t> ph(0, ToyPhonemes().size() - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  stage1::Score s;
  const int n = notes(rng);
  // Short leading and trailing rests.
  s.entries.push_back({stage1::kRestPhoneme, stage1::kRestMidi, 4});
  for (int i = 0; i < n; ++i) {
    if (i > 0 && unit(rng) < spec.rest_probability) {
      s.entries.push_back({stage1::kRestPhoneme, stage1::kRestMidi, frames(rng) / 2 + 2});
    }
    s.entries.push_back({ToyPhonemes()[ph(rng)], midi(rng), frames(rng)});
  }
  s.entries.push_back({stage1::kRestPhoneme, stage1::kRestMidi, 4});
  return s;
}

dsp::Waveform Render(const stage1::Score& score, const ToyTimbre& timbre,
                     int sample_rate, uint64_t seed) {
  stage1::ValidateScore(score);
  const int hop = static_cast<int>(std::lround(sample_rate * 0.02));
  dsp::Waveform w;
  w.sample_rate = sample_rate;
  w.samples.assign(static_cast<size_t>(score.total_frames()) * hop, 0.0f);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  const double nyquist = sample_rate / 2.0;
  std::vector<double> phase(64, 0.0);
  size_t at = 0;
  double prev_hz = 0.0;
  for (const auto& e : score.entries) {
    const size_t len = static_cast<size_t>(e.duration_frames) * hop;
    if (e.midi == stage1::kRestMidi || e.phoneme == stage1::kRestPhoneme) {
      at += len;
      prev_hz = 0.0;
      continue;
    }
    auto it = FormantTable().find(e.phoneme);
    if (it == FormantTable().end()) throw VocabError("toy phoneme " + e.phoneme);
    const double f1 = it->second.f1 * timbre.formant_scale;
    const double f2 = it->second.f2 * timbre.formant_scale;
    const double target = MidiToHz(e.midi);
    const double start = prev_hz > 0.0 ? prev_hz : target;
    const size_t ramp = std::min<size_t>(len / 4, static_cast<size_t>(hop) * 2);
    for (size_t i = 0; i < len; ++i) {
      // Short glide from the previous note plus a slow vibrato.
      const double glide = std::min(1.0, static_cast<double>(i) / (hop * 3));
      const double t = static_cast<double>(at + i) / sample_rate;
      const double hz = (start + (target - start) * glide) *
                        (1.0 + 0.006 * std::sin(2 * M_PI * 5.5 * t));
      double env = 1.0;
      if (i < ramp) env = static_cast<double>(i) / ramp;
      if (len - i <= ramp) env = std::min(env, static_cast<double>(len - i) / ramp);
      double v = 0.0;
      for (int h = 1; h <= 64; ++h) {
        const double fh = h * hz;
        if (fh >= nyquist * 0.95) break;
        phase[h - 1] += 2 * M_PI * fh / sample_rate;
        if (timbre.odd_harmonics_only && h % 2 == 0) continue;
        const double tilt =
            std::pow(10.0, timbre.tilt_db_per_octave * std::log2(h) / 20.0);
        const double shape = 0.08 + Resonance(fh, f1, 90.0) +
                             0.6 * Resonance(fh, f2, 140.0);
        v += tilt * shape * std::sin(phase[h - 1]);
      }
      v += timbre.breath * nd(rng);
      w.samples[at + i] = static_cast<float>(0.25 * env * v);
    }
    for (double& p : phase) p = std::fmod(p, 2 * M_PI);
    prev_hz = target;
    at += len;
  }
  for (float& s : w.samples) {
    if (timbre.noise_floor > 0) s += static_cast<float>(timbre.noise_floor * nd(rng));
    s = std::clamp(s, -0.95f, 0.95f);
  }
  return w;
}

}  // namespace nhsg::toy
