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

#ifndef NHSG_TOOLS_CLI_CONFIG_H_
#define NHSG_TOOLS_CLI_CONFIG_H_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "nhsg/eval/eval.h"
#include "nhsg/finetune/finetune.h"
#include "nhsg/pitch/pitch.h"
#include "nhsg/representation/representation.h"
#include "nhsg/segmentation/segmentation.h"
#include "nhsg/stage1/stage1.h"
#include "nhsg/stage2/stage2.h"

namespace nhsg::cli {

constexpr int kConfigVersion = 1;

// Everything one run needs. Defaults are the desk-scale toy settings.
struct PipelineConfig {
  int version = kConfigVersion;
  uint64_t seed = 1;

  int sample_rate = 16000;
  pitch::PitchConfig pitch;

  segmentation::SegmentationConfig segmentation;
  bool filter_unvoiced = true;

  representation::ExtractorConfig extractor;
  representation::KMeansConfig kmeans;
  representation::EmbedderConfig embedder;
  std::string codebook;  // default codebook for convert

  stage1::Stage1Config stage1;
  stage1::Stage1TrainConfig stage1_train;

  stage2::GeneratorConfig generator;
  stage2::DiscriminatorConfig discriminator;
  stage2::Stage2TrainConfig stage2_train;

  finetune::PredictorConfig predictor = finetune::ToyPredictorConfig();
  finetune::FinetuneConfig finetune;

  eval::McdConfig mcd;
  std::vector<eval::Metric> metrics = {eval::Metric::kLf0Rmse, eval::Metric::kVuv,
                                       eval::Metric::kSim, eval::Metric::kMcd};
};

PipelineConfig DefaultConfig();

// "section.key" names accepted in config files and --set overrides.
std::vector<std::string> ConfigKeys();

struct ConfigSources {
  std::string path;                    // empty: defaults only
  std::vector<std::string> overrides;  // "section.key=value"
  std::optional<uint64_t> seed_flag;
  bool use_env_seed = true;            // NHSG_SEED
};

// Precedence: flag > NHSG_SEED (seed only) > file > default. Every
// unknown, malformed or invalid key is collected into one ConfigError.
PipelineConfig LoadPipelineConfig(const ConfigSources& src);

// Pushes the run seed and the sample rate into every component config.
void DeriveComponentSettings(PipelineConfig& cfg);

// Module validators; collects all failures into one ConfigError.
void ValidatePipelineConfig(const PipelineConfig& cfg);

}  // namespace nhsg::cli

#endif  // NHSG_TOOLS_CLI_CONFIG_H_
