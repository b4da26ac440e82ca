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

#ifndef NHSG_FINETUNE_FINETUNE_H_
#define NHSG_FINETUNE_FINETUNE_H_

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "nhsg/numerics/optimizer.h"
#include "nhsg/numerics/parameters.h"
#include "nhsg/numerics/tensor.h"
#include "nhsg/representation/representation.h"
#include "nhsg/stage2/stage2.h"

namespace nhsg::finetune {

// Strided conv stack with weight-normalized layers and three heads.
struct PredictorConfig {
  std::vector<int> kernels = {10, 3, 3, 3, 3, 2, 2};
  std::vector<int> strides = {7, 7, 3, 3, 2, 1, 1};
  std::vector<int> paddings = {4, 1, 1, 1, 1, 1, 1};
  std::vector<int> channels = {512, 512, 512, 512, 512, 512, 512};
  float slope = 0.1f;
  std::vector<int> layer_ids = {5, 8, 9, 12};
  std::vector<int> token_vocab = {1024, 1024, 1024, 1024};  // heads emit K+1
  int timbre_dim = representation::kEmbeddingDim;
  uint64_t seed = 3;

  int total_stride() const;
};

// Same stack adjusted to a 320-sample hop at 16 kHz.
PredictorConfig ToyPredictorConfig();

void ValidatePredictorConfig(const PredictorConfig& cfg);
// Also checks total stride == hop.
void ValidatePredictorConfig(const PredictorConfig& cfg, int hop);

// Output frames for an input of `length` samples; 0 when the stack
// cannot fill a single frame.
int PredictorFrames(const PredictorConfig& cfg, int length);

// Sample position the receptive field of output frame j is centered on:
// j * total_stride + offset.
double PredictorCenterOffset(const PredictorConfig& cfg);

struct PredictorOutput {
  Tensor log_f0;                    // [T']
  std::vector<Tensor> token_logits;  // per layer [T', K+1]
  Tensor timbre;                    // [timbre_dim]
  int num_frames() const { return log_f0.dim(0); }
};

class Predictor {
 public:
  explicit Predictor(PredictorConfig cfg);

  // signal [L]; throws TooShortError when no frame fits.
  PredictorOutput Forward(const Tensor& signal) const;

  ParameterStore& params() { return params_; }
  const ParameterStore& params() const { return params_; }
  const PredictorConfig& config() const { return cfg_; }

 private:
  PredictorConfig cfg_;
  ParameterStore params_;
};

// For each of `target_frames` frames of hop `hop`, the nearest predictor
// frame by center position. A target frame whose nearest frame falls more
// than one frame outside [0, predictor_frames) throws ShapeError; within
// that slack the index is clamped.
std::vector<int> AlignFrames(const PredictorConfig& cfg, int predictor_frames,
                             int target_frames, int hop);

struct AuxWeights {
  double token = 1.0;
  double f0 = 1.0;
  double timbre = 1.0;
};

struct AuxLosses {
  Tensor token;   // sum over layers of the mean per-frame CE
  Tensor f0;      // MSE of log-f0 over voiced frames
  Tensor timbre;  // 1 - cos(e_tgt, e_pred)
  Tensor Weighted(const AuxWeights& w) const;
};

// `frames[t]` selects the predictor row used for target frame t.
AuxLosses AuxiliaryLosses(const PredictorOutput& pred,
                          const representation::FrameRepresentation& z,
                          const std::vector<float>& e_tgt,
                          const std::vector<int>& frames);

enum class PairingMode { kUniform, kDerangement };

// Donor index for every batch position. Uniform: a random permutation (self
// possible by chance). Derangement: no fixed points. A batch of one pairs
// with itself.
std::vector<size_t> UnpairedBatch(size_t batch_size, PairingMode mode,
                                  std::mt19937_64& rng);

// Vocoder toy optimizer with lr 1e-3.
OptimizerConfig ToyPredictorOptimizer();

struct FinetuneConfig {
  stage2::Stage2TrainConfig train;  // steps, batch, crop, optimizers, GAN terms
  OptimizerConfig predictor_opt = ToyPredictorOptimizer();
  double oversampling = 0.9;        // non-human draws per human draw
  AuxWeights aux;
  double unpaired_weight = 1.0;     // scales the auxiliary group
  PairingMode pairing = PairingMode::kUniform;
  bool force_self_pairing = false;
  std::string log_name = "finetune_losses.csv";
};

// Long-schedule settings (32,768-sample crops).
FinetuneConfig FullFinetuneConfig();
void ValidateFinetuneConfig(const FinetuneConfig& cfg, int hop);

// Step-seeded sampler over the merged list (human first, then non-human).
// The domain of every draw follows a deterministic error-diffusion
// sequence, so non-human / human counts track the configured ratio.
stage2::BatchPlan FinetuneBatchPlan(const std::vector<stage2::VocoderExample>& human,
                                    const std::vector<stage2::VocoderExample>& nonhuman,
                                    const FinetuneConfig& cfg, int hop);

std::vector<stage2::VocoderExample> MergeManifests(
    const std::vector<stage2::VocoderExample>& human,
    const std::vector<stage2::VocoderExample>& nonhuman);

struct FinetuneStepLog {
  stage2::Stage2StepLog gan;
  // Auxiliary losses on unpaired generations (NaN when a step had none).
  double token = 0, f0 = 0, timbre = 0;
  // Predictor losses on the real crops.
  double real_token = 0, real_f0 = 0, real_timbre = 0;
  int nonhuman = 0, human = 0;
};

struct FinetuneState {
  stage2::OptimizerStates vocoder;
  ParameterStore predictor;
};

using FinetuneCallback = std::function<void(const FinetuneStepLog&)>;

// Runs until the generator step counter reaches cfg.train.steps.
std::vector<FinetuneStepLog> Finetune(stage2::Generator& gen, stage2::Discriminator& disc,
                                      Predictor& predictor,
                                      const std::vector<stage2::VocoderExample>& human,
                                      const std::vector<stage2::VocoderExample>& nonhuman,
                                      const FinetuneConfig& cfg,
                                      const FinetuneState* resume = nullptr,
                                      const FinetuneCallback& on_step = nullptr);

// Checkpoint with the predictor in the bundle's extra slot.
void SaveFinetune(const stage2::Generator& gen, const stage2::Discriminator& disc,
                  const Predictor& predictor, const stage2::VocoderTrainer* trainer,
                  const Optimizer* predictor_opt, const std::string& path);

std::string PredictorConfigToJson(const PredictorConfig& c);
PredictorConfig PredictorConfigFromJson(const std::string& text);

}  // namespace nhsg::finetune

#endif  // NHSG_FINETUNE_FINETUNE_H_
