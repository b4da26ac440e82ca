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

#ifndef NHSG_STAGE2_STAGE2_H_
#define NHSG_STAGE2_STAGE2_H_

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "nhsg/dsp/waveform.h"
#include "nhsg/numerics/optimizer.h"
#include "nhsg/numerics/parameters.h"
#include "nhsg/representation/representation.h"
#include "nhsg/stage2/discriminator.h"
#include "nhsg/stage2/generator.h"
#include "nhsg/stage2/losses.h"

namespace nhsg::stage2 {

// One training segment: precomputed representation, its audio and the
// source's own timbre embedding.
struct VocoderExample {
  std::string id;
  representation::FrameRepresentation z;
  dsp::Waveform audio;
  std::vector<float> embedding;
  bool human = true;
};

// AdamW at 2e-4, betas (0.8, 0.99), no warmup, clip 500.
OptimizerConfig ToyVocoderOptimizer();

struct Stage2TrainConfig {
  int64_t steps = 2000;
  int batch_size = 1;
  int segment_samples = 3840;
  OptimizerConfig gen_opt = ToyVocoderOptimizer();
  OptimizerConfig disc_opt = ToyVocoderOptimizer();
  GanLossWeights weights;
  MelLossConfig mel;
  uint64_t seed = 1;
  std::string checkpoint_dir;  // empty: no files
  int64_t checkpoint_every = 0;
  std::string log_name = "stage2_losses.csv";
};

// Toy defaults above use AdamW at 2e-4 without warmup; this returns the
// long-schedule settings (AdamW 1e-4, 40k warmup clipped at 100, then 500,
// exponential decay).
Stage2TrainConfig FullStage2TrainConfig();
void ValidateStage2TrainConfig(const Stage2TrainConfig& cfg, int hop);

// Frames a crop needs so that frames * hop covers segment_samples.
int CropFrames(int segment_samples, int hop);

// A sample of one step. Unpaired items carry a foreign e_tgt and receive
// only the auxiliary generator loss.
struct BatchItem {
  size_t example = 0;
  int start_frame = 0;
  std::vector<float> e_tgt;
  bool paired = true;
};

// Step -> batch. Must be deterministic in the step for resumption.
using BatchPlan = std::function<std::vector<BatchItem>(int64_t step)>;

// Uniform sampler over examples long enough for the crop; logs and skips
// the rest. Throws DataError when nothing is long enough.
BatchPlan UniformBatchPlan(const std::vector<VocoderExample>& data,
                           const Stage2TrainConfig& cfg, int hop);

struct Stage2StepLog {
  int64_t step = 0;
  double adv_g = 0, adv_d = 0, fm = 0, mel = 0;
  int paired = 0, unpaired = 0;
};

// Extra generator loss for an unpaired item given the generated crop.
using AuxLossFn = std::function<Tensor(const BatchItem& item, const VocoderExample& ex,
                                       const Tensor& fake)>;

// Alternating D/G updates over two parameter stores.
class VocoderTrainer {
 public:
  VocoderTrainer(Generator* gen, Discriminator* disc, Stage2TrainConfig cfg);

  Stage2StepLog Step(const std::vector<VocoderExample>& data,
                     const std::vector<BatchItem>& batch, const AuxLossFn& aux = nullptr);

  Optimizer& gen_opt() { return gen_opt_; }
  Optimizer& disc_opt() { return disc_opt_; }
  const Optimizer& gen_opt() const { return gen_opt_; }
  const Optimizer& disc_opt() const { return disc_opt_; }
  const Stage2TrainConfig& config() const { return cfg_; }

 private:
  Generator* gen_;
  Discriminator* disc_;
  Stage2TrainConfig cfg_;
  Optimizer gen_opt_;
  Optimizer disc_opt_;
};

using Stage2Callback = std::function<void(const Stage2StepLog&)>;

// Hop, embedding size and audio length checks shared by the training loops.
void ValidateExamples(const std::vector<VocoderExample>& data, const Generator& gen);

// Exported optimizer moments ("__opt/m/...", "__opt/v/...").
struct OptimizerStates {
  ParameterStore gen;
  ParameterStore disc;
};

// Runs until the generator's step counter reaches cfg.steps; a resumed
// model continues from its counter. Without a plan, UniformBatchPlan.
std::vector<Stage2StepLog> TrainStage2(Generator& gen, Discriminator& disc,
                                       const std::vector<VocoderExample>& data,
                                       const Stage2TrainConfig& cfg,
                                       const OptimizerStates* resume = nullptr,
                                       const BatchPlan& plan = nullptr,
                                       const Stage2Callback& on_step = nullptr);

// Appends one CSV row, writing the header first when the file is new.
void AppendCsvRow(const std::string& path, const std::string& header,
                  const std::string& row);

// Checkpoint bundle: generator, discriminator and an optional third store
// (the finetune predictor), each with its own step counter and moments.
struct VocoderBundle {
  GeneratorConfig gen_cfg;
  DiscriminatorConfig disc_cfg;
  std::string extra_json;  // opaque config of the extra store
  ParameterStore gen;
  ParameterStore disc;
  ParameterStore extra;
  ParameterStore gen_opt;
  ParameterStore disc_opt;
  ParameterStore extra_opt;
};

void SaveVocoderBundle(const VocoderBundle& b, const std::string& path);
VocoderBundle LoadVocoderBundle(const std::string& path);

// Plain Stage-2 checkpoint (no extra store). `trainer` may be null.
void SaveStage2(const Generator& gen, const Discriminator& disc,
                const VocoderTrainer* trainer, const std::string& path);
struct Stage2Checkpoint {
  Generator gen;
  Discriminator disc;
  OptimizerStates opt;
  std::string extra_json;
  ParameterStore extra;
  ParameterStore extra_opt;
};
Stage2Checkpoint LoadStage2(const std::string& path);

// Inference: generate() without a graph.
dsp::Waveform Vocode(const Generator& gen, const representation::FrameRepresentation& z,
                     const std::vector<float>& embedding);

std::string GeneratorConfigToJson(const GeneratorConfig& c);
GeneratorConfig GeneratorConfigFromJson(const std::string& text);
std::string DiscriminatorConfigToJson(const DiscriminatorConfig& c);
DiscriminatorConfig DiscriminatorConfigFromJson(const std::string& text);

}  // namespace nhsg::stage2

#endif  // NHSG_STAGE2_STAGE2_H_
