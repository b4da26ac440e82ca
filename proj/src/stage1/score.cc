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

#include "nhsg/stage1/score.h"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "nhsg/errors.h"

namespace nhsg::stage1 {

int Score::total_frames() const {
  int total = 0;
  for (const auto& e : entries) total += e.duration_frames;
  return total;
}

void ValidateScore(const Score& s) {
  if (s.entries.empty()) throw ConfigError("empty score");
  for (size_t i = 0; i < s.entries.size(); ++i) {
    const auto& e = s.entries[i];
    if (e.duration_frames < 1) {
      throw ConfigError("score entry " + std::to_string(i) + ": duration < 1");
    }
    if (e.midi != kRestMidi && (e.midi < 0 || e.midi > 127)) {
      throw ConfigError("score entry " + std::to_string(i) + ": midi " +
                        std::to_string(e.midi) + " out of range");
    }
    if (e.phoneme.empty()) {
      throw ConfigError("score entry " + std::to_string(i) + ": no phoneme");
    }
  }
}

int MidiIndex(int midi) {
  if (midi == kRestMidi) return 128;
  if (midi < 0 || midi > 127) throw VocabError("midi " + std::to_string(midi));
  return midi;
}

Score ReadScore(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open score: " + path);
  Score s;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::istringstream fields(line);
    std::string phoneme, midi, dur;
    if (!std::getline(fields, phoneme, '\t') || !std::getline(fields, midi, '\t') ||
        !std::getline(fields, dur, '\t')) {
      throw FormatError(path + ":" + std::to_string(lineno) +
                        ": expected three tab-separated fields");
    }
    ScoreEntry e;
    e.phoneme = phoneme;
    try {
      size_t used = 0;
      e.midi = std::stoi(midi, &used);
      if (used != midi.size()) throw std::invalid_argument(midi);
      e.duration_frames = std::stoi(dur, &used);
      if (used != dur.size()) throw std::invalid_argument(dur);
    } catch (const std::logic_error&) {
      throw FormatError(path + ":" + std::to_string(lineno) + ": bad number");
    }
    s.entries.push_back(std::move(e));
  }
  try {
    ValidateScore(s);
  } catch (const ConfigError& e) {
    throw FormatError(path + ": " + e.what());
  }
  return s;
}

void WriteScore(const Score& s, const std::string& path) {
  ValidateScore(s);
  std::ofstream out(path);
  if (!out) throw IoError("cannot write score: " + path);
  for (const auto& e : s.entries) {
    out << e.phoneme << '\t' << e.midi << '\t' << e.duration_frames << '\n';
  }
  if (!out) throw IoError("write failed: " + path);
}

PhonemeVocab::PhonemeVocab() : PhonemeVocab(std::vector<std::string>{}) {}

PhonemeVocab::PhonemeVocab(std::vector<std::string> symbols) {
  std::set<std::string> uniq(symbols.begin(), symbols.end());
  uniq.insert(kRestPhoneme);
  symbols_.assign(uniq.begin(), uniq.end());
  for (size_t i = 0; i < symbols_.size(); ++i) {
    ids_[symbols_[i]] = static_cast<int>(i);
  }
}

PhonemeVocab PhonemeVocab::FromScores(const std::vector<Score>& scores) {
  std::vector<std::string> all;
  for (const auto& s : scores) {
    for (const auto& e : s.entries) all.push_back(e.phoneme);
  }
  return PhonemeVocab(std::move(all));
}

int PhonemeVocab::Id(const std::string& symbol) const {
  auto it = ids_.find(symbol);
  if (it == ids_.end()) throw VocabError("unknown phoneme: " + symbol);
  return it->second;
}

std::vector<int> PhonemeVocab::Encode(const Score& s) const {
  std::vector<int> ids;
  ids.reserve(s.size());
  for (const auto& e : s.entries) ids.push_back(Id(e.phoneme));
  return ids;
}

}  // namespace nhsg::stage1
