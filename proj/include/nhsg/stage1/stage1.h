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

#ifndef NHSG_STAGE1_STAGE1_H_
#define NHSG_STAGE1_STAGE1_H_

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "nhsg/numerics/parameters.h"
#include "nhsg/numerics/tensor.h"
#include "nhsg/representation/representation.h"
#include "nhsg/stage1/score.h"

namespace nhsg::stage1 {

enum class OutputLoss { kCrossEntropy, kL1OneHot };

struct Stage1Config {
  int dim = 64;
  int heads = 2;
  int encoder_layers = 2;
  int decoder_layers = 2;
  int ffn_dim = 128;
  int conv_kernel = 3;
  int max_relative = 16;
  int duration_hidden = 64;
  int pitch_hidden = 64;
  std::vector<std::string> phonemes;  // inventory, rest symbol included
  std::vector<int> layer_ids = {5, 8, 9, 12};
  std::vector<int> token_vocab = {64, 64, 64, 64};  // K_l per layer
  double lambda_out = 1.0;
  double lambda_dur = 1.0;
  double lambda_pitch = 1.0;
  OutputLoss output_loss = OutputLoss::kCrossEntropy;
  // Inference voicing: f0 above this and layer-0 token not in the set.
  double vuv_min_hz = 50.0;
  std::vector<int> silence_tokens;
  uint64_t seed = 1;
};

void ValidateStage1Config(const Stage1Config& cfg);
std::string Stage1ConfigToJson(const Stage1Config& cfg);
Stage1Config Stage1ConfigFromJson(const std::string& text);

struct Stage1Output {
  std::vector<Tensor> token_logits;  // per layer [T, K_l + 1]
  Tensor log_f0;                     // [T]
  Tensor log_durations;              // [N]
};

// Repeats row i of hidden [N, D] durations[i] times -> [sum d, D].
Tensor LengthRegulate(const Tensor& hidden, const std::vector<int>& durations);

// Per frame: [sin(pi f), cos(pi f), f, 1/d] with f the position inside its
// phoneme.
Tensor PhonemePositionFeatures(const std::vector<int>& durations);

class Stage1Model {
 public:
  explicit Stage1Model(Stage1Config cfg);

  Tensor Encode(const Score& score) const;
  Tensor PredictDurations(const Tensor& hidden) const;
  Tensor PredictPitch(const Tensor& frame_states) const;
  std::vector<Tensor> DecodeTokens(const Tensor& frame_states,
                                   const Tensor& log_f0) const;

  // Teacher-forced pass with the score's own durations.
  Stage1Output Forward(const Score& score) const;
  // Same with explicit durations for length regulation.
  Stage1Output Forward(const Score& score,
                       const std::vector<int>& durations) const;

  ParameterStore& params() { return params_; }
  const ParameterStore& params() const { return params_; }
  const Stage1Config& config() const { return cfg_; }
  const PhonemeVocab& vocab() const { return vocab_; }

 private:
  Tensor Block(const std::string& prefix, const Tensor& x) const;
  Tensor FrameStates(const Tensor& hidden,
                     const std::vector<int>& durations) const;

  Stage1Config cfg_;
  PhonemeVocab vocab_;
  ParameterStore params_;
};

struct Stage1Targets {
  std::vector<std::vector<int>> tokens;  // per layer, length T
  std::vector<float> log_f0;             // length T, ignored when unvoiced
  std::vector<bool> voiced;
  std::vector<int> durations;            // length N
};

Stage1Targets MakeTargets(const Score& score,
                          const representation::FrameRepresentation& z);

struct Stage1Loss {
  Tensor total;
  double out = 0.0;
  double dur = 0.0;
  double pitch = 0.0;
  bool no_voiced_frames = false;
};

Stage1Loss ComputeStage1Loss(const Stage1Output& out, const Stage1Targets& t,
                             const Stage1Config& cfg);

struct Stage1Example {
  std::string id;
  Score score;
  representation::FrameRepresentation z;
};

// Throws DataError when the score length or token layout disagrees with the
// representation or the model configuration.
void CheckExample(const Stage1Example& ex, const Stage1Config& cfg);

struct Stage1TrainConfig {
  int epochs = 70;
  int batch_size = 16;
  double lr = 5e-4;
  double clip_norm = 1.0;
  double decay_gamma = 1.0;  // lr multiplier per decay_every steps
  int decay_every = 1000;
  uint64_t seed = 1;
  std::string checkpoint_dir;  // empty: no checkpoints
  int checkpoint_every_epochs = 1;
  int max_steps = -1;          // stop early when >= 0
};

struct StepLog {
  int64_t step;
  int epoch;
  double total;
  double out;
  double dur;
  double pitch;
};

using StepCallback = std::function<void(const StepLog&)>;

// Teacher-forced training; resumes from `model`'s step counter, with
// optimizer moments restored from `resume_state` when given.
std::vector<StepLog> TrainStage1(Stage1Model& model,
                                 const std::vector<Stage1Example>& data,
                                 const Stage1TrainConfig& train,
                                 const ParameterStore* resume_state = nullptr,
                                 const StepCallback& on_step = {});

// Checkpoint = NHCK parameter file plus "<path>.json" with the config.
void SaveStage1(const Stage1Model& model, const std::string& path,
                const ParameterStore* optimizer_state = nullptr);
Stage1Model LoadStage1(const std::string& path,
                       ParameterStore* optimizer_state = nullptr);

// Score to Z: per-layer argmax tokens, f0 = exp(log f0) with the voicing
// rule, T = sum of max(1, round(exp(log duration))).
representation::FrameRepresentation InferStage1(const Stage1Model& model,
                                                const Score& score,
                                                int hop_samples = 320,
                                                int sample_rate = 16000);

}  // namespace nhsg::stage1

#endif  // NHSG_STAGE1_STAGE1_H_
