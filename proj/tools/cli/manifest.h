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

#ifndef NHSG_TOOLS_CLI_MANIFEST_H_
#define NHSG_TOOLS_CLI_MANIFEST_H_

#include <string>
#include <vector>

namespace nhsg::cli {

struct ManifestRow {
  std::string id;
  std::string audio_path;
  std::string domain = "human";  // human, instrumental, bird, general, ...
  bool annotated = false;
  std::string score_path;      // required when annotated
  std::string embedding_path;  // optional precomputed timbre embedding
  std::string split = "train";

  bool human() const { return domain == "human"; }
};

// JSON lines. Relative paths resolve against the manifest's directory.
// Throws DataError on duplicate ids, a bad split or an annotated row
// without a score.
std::vector<ManifestRow> ReadManifest(const std::string& path);
void WriteManifest(const std::vector<ManifestRow>& rows, const std::string& path);

std::vector<ManifestRow> FilterSplit(const std::vector<ManifestRow>& rows,
                                     const std::string& split);

}  // namespace nhsg::cli

#endif  // NHSG_TOOLS_CLI_MANIFEST_H_
