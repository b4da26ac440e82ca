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

#ifndef NHSG_STAGE1_SCORE_H_
#define NHSG_STAGE1_SCORE_H_

#include <map>
#include <string>
#include <vector>

namespace nhsg::stage1 {

constexpr int kRestMidi = -1;
constexpr int kMidiVocab = 129;  // 0..127 plus the rest slot
inline const char kRestPhoneme[] = "SP";

struct ScoreEntry {
  std::string phoneme;
  int midi = kRestMidi;
  int duration_frames = 1;
};

struct Score {
  std::vector<ScoreEntry> entries;

  int total_frames() const;
  size_t size() const { return entries.size(); }
};

// Non-empty, durations >= 1, midi in 0..127 or the rest sentinel.
void ValidateScore(const Score& s);

// Embedding row of a midi value; rest maps to 128.
int MidiIndex(int midi);

// Text lines "phoneme<TAB>midi<TAB>duration_frames"; '#' starts a comment.
Score ReadScore(const std::string& path);
void WriteScore(const Score& s, const std::string& path);

// Sorted phoneme inventory; the rest symbol is always present.
class PhonemeVocab {
 public:
  PhonemeVocab();
  explicit PhonemeVocab(std::vector<std::string> symbols);
  static PhonemeVocab FromScores(const std::vector<Score>& scores);

  // Throws VocabError for unknown symbols.
  int Id(const std::string& symbol) const;
  std::vector<int> Encode(const Score& s) const;
  int size() const { return static_cast<int>(symbols_.size()); }
  const std::vector<std::string>& symbols() const { return symbols_; }

 private:
  std::vector<std::string> symbols_;
  std::map<std::string, int> ids_;
};

}  // namespace nhsg::stage1

#endif  // NHSG_STAGE1_SCORE_H_
