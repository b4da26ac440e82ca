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

#include "cli/toy_files.h"

#include <filesystem>
#include <random>

#include "cli/manifest.h"
#include "nhsg/errors.h"
#include "nhsg/numerics/seeding.h"
#include "nhsg/toy/toy_corpus.h"

namespace nhsg::cli {

std::string WriteToyCorpus(const std::string& dir, const ToyCorpusOptions& o) {
  namespace fs = std::filesystem;
  if (o.clips < 2) throw ConfigError("toy corpus needs at least 2 clips");
  fs::create_directories(dir);
  const fs::path root = fs::absolute(dir);
  const int n_human = o.clips / 2;
  std::mt19937_64 rng(o.seed);
  std::vector<ManifestRow> rows;
  for (int i = 0; i < o.clips; ++i) {
    ManifestRow r;
    const bool human = i < n_human;
    const uint64_t render_seed = Mix64(o.seed, static_cast<uint64_t>(i));
    if (human) {
      r.id = "human_" + std::to_string(i);
      const auto score = toy::RandomScore(rng);
      const auto w = toy::Render(score, toy::VoiceTimbre(), o.sample_rate, render_seed);
      r.audio_path = (root / (r.id + ".wav")).string();
      r.score_path = (root / (r.id + ".score")).string();
      r.annotated = true;
      r.domain = "human";
      const int k = i % 10;
      r.split = k == 8 ? "dev" : k == 9 ? "test" : "train";
      dsp::WriteWav(w, r.audio_path);
      stage1::WriteScore(score, r.score_path);
    } else {
      const bool reed = (i - n_human) % 2 == 0;
      r.id = std::string(reed ? "reed_" : "chip_") + std::to_string(i);
      r.domain = reed ? "instrumental" : "general";
      const auto timbre = reed ? toy::ReedTimbre() : toy::ChipTimbre();
      auto a = toy::Render(toy::RandomScore(rng), timbre, o.sample_rate, render_seed);
      const auto b = toy::Render(toy::RandomScore(rng), timbre, o.sample_rate, render_seed + 1);
      std::normal_distribution<double> nd(0.0, timbre.noise_floor);
      std::mt19937_64 noise(render_seed ^ 0x5157ull);
      const size_t gap = static_cast<size_t>(o.gap_s * o.sample_rate);
      for (size_t s = 0; s < gap; ++s) a.samples.push_back(static_cast<float>(nd(noise)));
      a.samples.insert(a.samples.end(), b.samples.begin(), b.samples.end());
      r.audio_path = (root / (r.id + ".wav")).string();
      r.split = (i - n_human) % 10 == 9 ? "test" : "train";
      dsp::WriteWav(a, r.audio_path);
    }
    rows.push_back(std::move(r));
  }
  const std::string manifest = (root / "manifest.jsonl").string();
  WriteManifest(rows, manifest);
  return manifest;
}

}  // namespace nhsg::cli
