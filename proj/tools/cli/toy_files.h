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

#ifndef NHSG_TOOLS_CLI_TOY_FILES_H_
#define NHSG_TOOLS_CLI_TOY_FILES_H_

#include <cstdint>
#include <string>

namespace nhsg::cli {

struct ToyCorpusOptions {
  int clips = 20;         // half annotated human, half non-human
  uint64_t seed = 1;
  int sample_rate = 16000;
  double gap_s = 0.8;     // silence joining the two phrases of a non-human clip
};

// Writes WAVs, scores and manifest.jsonl under `dir`. Human clips are
// annotated single phrases (split train/dev/test 8:1:1); non-human clips
// alternate reed ("instrumental") and chip ("general") timbres and hold two
// phrases around a silent gap. Returns the manifest path.
std::string WriteToyCorpus(const std::string& dir, const ToyCorpusOptions& o);

}  // namespace nhsg::cli

#endif  // NHSG_TOOLS_CLI_TOY_FILES_H_
