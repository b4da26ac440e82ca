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

#ifndef NHSG_STAGE2_LOSSES_H_
#define NHSG_STAGE2_LOSSES_H_

#include <vector>


#include "nhsg/numerics/tensor.h"
#include "nhsg/stage2/discriminator.h"

namespace nhsg::stage2 {

enum class GanObjective { kLeastSquares, kHinge };

struct GanLossWeights {
  GanObjective objective = GanObjective::kLeastSquares;
  double adv = 1.0;
  double fm = 2.0;
  double mel = 15.0;
};

struct MelScale {
  int fft_size;
  int n_mels;
};

struct MelLossConfig {
  int sample_rate = 16000;
  std::vector<MelScale> scales = {{256, 32}, {512, 64}, {1024, 80}};
};

// Sum over scales of the mean |log-mel(real) - log-mel(fake)|; hop is
// fft/4. Gradient flows into `fake` only.
Tensor MultiScaleMelLoss(const Tensor& real, const Tensor& fake,
                         const MelLossConfig& cfg);

void ValidateGanLossWeights(const GanLossWeights& w);

// Adversarial terms summed over branches. Least squares: D pushes real to 1
// and fake to 0, G pushes fake to 1.
Tensor DiscriminatorAdvLoss(const DiscOutput& real, const DiscOutput& fake,
                            GanObjective objective = GanObjective::kLeastSquares);
Tensor GeneratorAdvLoss(const DiscOutput& fake,
                        GanObjective objective = GanObjective::kLeastSquares);
// Mean over every feature map of the map's mean L1 distance.
Tensor FeatureMatchingLoss(const DiscOutput& real, const DiscOutput& fake);

struct GanLossTerms {
  Tensor generator;      // adv*adv_g + fm*fm + mel*mel
  Tensor discriminator;  // adv_d
  double adv_g = 0, adv_d = 0, fm = 0, mel = 0;
};

// Combines discriminator outputs and a precomputed mel term.
GanLossTerms CombineGanLosses(const DiscOutput& real, const DiscOutput& fake,
                              const Tensor& mel, const GanLossWeights& w);

// Runs the discriminator on both waveforms and combines every term.
GanLossTerms GanLosses(const Tensor& real, const Tensor& fake,
                       const Discriminator& disc, const MelLossConfig& mel_cfg,
                       const GanLossWeights& w);

}  // namespace nhsg::stage2

#endif  // NHSG_STAGE2_LOSSES_H_
