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

#ifndef NHSG_STAGE2_DISCRIMINATOR_H_
#define NHSG_STAGE2_DISCRIMINATOR_H_

#include <cstdint>
#include <string>
#include <vector>

#include "nhsg/numerics/parameters.h"
#include "nhsg/numerics/tensor.h"

namespace nhsg::stage2 {

struct DiscriminatorConfig {
  std::vector<int> periods = {2, 3, 5, 7, 11};
  std::vector<int> period_channels = {8, 16, 32, 32};
  int period_kernel = 5;
  int period_stride = 3;
  std::vector<int> stft_sizes = {256, 512, 1024};
  int n_bands = 4;
  int band_channels = 16;
  uint64_t seed = 2;
};

void ValidateDiscriminatorConfig(const DiscriminatorConfig& cfg);

// Analytic parameter count for a configuration.
int64_t DiscriminatorParamCount(const DiscriminatorConfig& cfg);

// One entry per branch: periods first, then (fft size, band) pairs.
struct DiscOutput {
  std::vector<Tensor> scores;
  std::vector<std::vector<Tensor>> features;  // pre-activation maps
  size_t num_branches() const { return scores.size(); }
};

DiscOutput DetachOutput(const DiscOutput& d);

class Discriminator {
 public:
  explicit Discriminator(DiscriminatorConfig cfg);

  // signal [L]; throws TooShortError when L cannot fill every branch.
  DiscOutput Forward(const Tensor& signal) const;
  int min_length() const;
  size_t num_branches() const;

  ParameterStore& params() { return params_; }
  const ParameterStore& params() const { return params_; }
  const DiscriminatorConfig& config() const { return cfg_; }

 private:
  void PeriodBranch(size_t index, const Tensor& signal, DiscOutput& out) const;
  void BandBranches(size_t scale, const Tensor& signal, DiscOutput& out) const;

  DiscriminatorConfig cfg_;
  ParameterStore params_;
};

}  // namespace nhsg::stage2

#endif  // NHSG_STAGE2_DISCRIMINATOR_H_
