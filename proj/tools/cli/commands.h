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

#ifndef NHSG_TOOLS_CLI_COMMANDS_H_
#define NHSG_TOOLS_CLI_COMMANDS_H_

#include <ostream>
#include <string>

#include "cli/config.h"

namespace nhsg::cli {

// Cache layout: <cache>/<id>.nhft features, <id>.nhte embedding,
// <id>.nhrz representation.
std::string CachePath(const std::string& cache_dir, const std::string& id,
                      const std::string& ext);

// Reads a WAV at the configured rate; integer multiples are decimated.
dsp::Waveform LoadAudio(const std::string& path, int sample_rate);

struct SegmentOptions {
  std::string manifest;
  std::string out_dir;
  std::string out_manifest;
};
// Annotated rows pass through unchanged (their scores cover the whole clip).
void RunSegment(const PipelineConfig& cfg, const SegmentOptions& o);

struct ExtractOptions {
  std::string manifest;
  std::string cache_dir;
  std::string codebook;  // when set, also writes representations
  std::string split = "all";
};
void RunExtract(const PipelineConfig& cfg, const ExtractOptions& o);

struct KMeansOptions {
  std::string manifest;
  std::string cache_dir;
  std::string out;
  std::string rows = "annotated";  // annotated (human), human, all
};
void RunTrainKMeans(const PipelineConfig& cfg, const KMeansOptions& o);

struct TrainOptions {
  std::string manifest;
  std::string cache_dir;
  std::string out;
  std::string work_dir;  // logs and rolling checkpoints; default <out>.work
  std::string init;      // finetune: pretrained vocoder
  std::string resume;
  std::string split = "train";
  std::string domains = "human";  // stage 2 pretraining rows: human or all
};
void RunTrainStage1(const PipelineConfig& cfg, const TrainOptions& o);
void RunTrainStage2(const PipelineConfig& cfg, const TrainOptions& o);
void RunFinetune(const PipelineConfig& cfg, const TrainOptions& o);

struct TimbreSource {
  std::string audio;
  std::string embedding;
};

struct SynthesizeOptions {
  std::string score;
  std::string stage1;
  std::string vocoder;
  TimbreSource timbre;
  std::string out;
};
void RunSynthesize(const PipelineConfig& cfg, const SynthesizeOptions& o);

struct ConvertOptions {
  std::string source;
  std::string codebook;  // default: cfg.codebook
  std::string vocoder;
  TimbreSource timbre;
  std::string out;
};
void RunConvert(const PipelineConfig& cfg, const ConvertOptions& o);

struct EvaluateOptions {
  std::string pairs;
  std::string out_dir;
};
// Returns the number of failed rows.
int RunEvaluate(const PipelineConfig& cfg, const EvaluateOptions& o);

// Human-readable dump of any artifact (representation, features,
// embedding, codebook or parameter file).
void RunInspect(const std::string& path, std::ostream& out);

}  // namespace nhsg::cli

#endif  // NHSG_TOOLS_CLI_COMMANDS_H_
