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

#ifndef NHSG_STAGE2_GENERATOR_H_
#define NHSG_STAGE2_GENERATOR_H_

#include <cstdint>
#include <string>
#include <vector>

#include "nhsg/dsp/waveform.h"
#include "nhsg/numerics/parameters.h"
#include "nhsg/numerics/tensor.h"
#include "nhsg/representation/representation.h"

namespace nhsg::stage2 {

struct GeneratorConfig {
  std::vector<int> layer_ids = {5, 8, 9, 12};
  std::vector<int> token_vocab = {64, 64, 64, 64};
  int token_dim = 64;
  int f0_dim = 32;
  int timbre_dim = representation::kEmbeddingDim;
  std::vector<int> upsample_factors = {8, 5, 4, 2};
  std::vector<int> resblock_kernels = {3, 7, 11};
  std::vector<int> resblock_dilations = {1, 3, 5};
  int base_channels = 64;  // halved after every upsampling stage
  int min_channels = 4;
  int sample_rate = 16000;
  uint64_t seed = 1;

  int hop() const;
  int cond_dim() const { return token_dim + f0_dim; }
  // Channels entering upsampling stage i (i = 0..n) ; index n is the output
  // of the last stage.
  int channels(size_t stage) const;
};

void ValidateGeneratorConfig(const GeneratorConfig& cfg);

// Transposed-conv geometry for an exact factor-u upsampling.
struct UpsampleGeometry {
  int kernel;
  int padding;
};
UpsampleGeometry UpsampleFor(int factor);

// Analytic parameter count for a configuration.
int64_t GeneratorParamCount(const GeneratorConfig& cfg);

// Frame-level inputs of the vocoder.
struct Conditioning {
  std::vector<std::vector<int>> tokens;  // per layer, length T
  std::vector<float> log_f0;             // 0 where unvoiced
  std::vector<bool> voiced;
  std::vector<float> embedding;          // D_e
  int num_frames() const { return static_cast<int>(log_f0.size()); }
};

Conditioning MakeConditioning(const representation::FrameRepresentation& z,
                              const std::vector<float>& embedding);
// Frames [start, start + count).
Conditioning SliceConditioning(const Conditioning& c, int start, int count);

class Generator {
 public:
  explicit Generator(GeneratorConfig cfg);

  // h [T, token_dim + f0_dim].
  Tensor Condition(const Conditioning& c) const;
  // Waveform samples [T * hop] in (-1, 1).
  Tensor Forward(const Conditioning& c) const;
  // Inference without graph construction.
  dsp::Waveform Vocode(const Conditioning& c) const;

  // Softmax of the learned layer weights.
  std::vector<float> LayerWeights() const;

  ParameterStore& params() { return params_; }
  const ParameterStore& params() const { return params_; }
  const GeneratorConfig& config() const { return cfg_; }

 private:
  Tensor ResBlock(const std::string& prefix, const Tensor& x) const;

  GeneratorConfig cfg_;
  ParameterStore params_;
};

}  // namespace nhsg::stage2

#endif  // NHSG_STAGE2_GENERATOR_H_
