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

#include "cli/manifest.h"

#include <filesystem>
#include <fstream>
#include <set>

#include "json.hpp"
#include "nhsg/errors.h"

namespace nhsg::cli {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<ManifestRow> ReadManifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path);
  const fs::path base = fs::path(path).parent_path();
  auto resolve = [&](const std::string& p) {
    if (p.empty() || fs::path(p).is_absolute()) return p;
    return (base / p).lexically_normal().string();
  };
  std::vector<ManifestRow> rows;
  std::set<std::string> ids;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path + ":" + std::to_string(lineno);
    ManifestRow r;
    try {
      const json j = json::parse(line);
      r.id = j.at("id").get<std::string>();
      r.audio_path = resolve(j.at("audio_path").get<std::string>());
      r.domain = j.value("domain", r.domain);
      r.annotated = j.value("annotated", false);
      r.score_path = resolve(j.value("score_path", ""));
      r.embedding_path = resolve(j.value("embedding_path", ""));
      r.split = j.value("split", r.split);
    } catch (const json::exception& e) {
      throw FormatError(where + ": " + e.what());
    }
    if (r.id.empty()) throw DataError(where + ": empty id");
    if (!ids.insert(r.id).second) throw DataError(where + ": duplicate id '" + r.id + "'");
    if (r.annotated && r.score_path.empty()) {
      throw DataError(where + ": annotated row '" + r.id + "' has no score_path");
    }
    if (r.split != "train" && r.split != "dev" && r.split != "test") {
      throw DataError(where + ": split must be train, dev or test");
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

void WriteManifest(const std::vector<ManifestRow>& rows, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  for (const auto& r : rows) {
    json j = {{"id", r.id},
              {"audio_path", r.audio_path},
              {"domain", r.domain},
              {"annotated", r.annotated},
              {"split", r.split}};
    if (!r.score_path.empty()) j["score_path"] = r.score_path;
    if (!r.embedding_path.empty()) j["embedding_path"] = r.embedding_path;
    out << j.dump() << '\n';
  }
}

std::vector<ManifestRow> FilterSplit(const std::vector<ManifestRow>& rows,
                                     const std::string& split) {
  if (split.empty() || split == "all") return rows;
  std::vector<ManifestRow> out;
  for (const auto& r : rows) {
    if (r.split == split) out.push_back(r);
  }
  return out;
}

}  // namespace nhsg::cli
