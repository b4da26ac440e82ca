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

#ifndef NHSG_NUMERICS_LAYERS_H_
#define NHSG_NUMERICS_LAYERS_H_

#include <random>
#include <string>

#include "nhsg/numerics/parameters.h"
#include "nhsg/numerics/tensor.h"

namespace nhsg::nn {

// Registers a N(0, stddev^2) trainable tensor.
Tensor Normal(ParameterStore& store, const std::string& name, Shape shape,
              float stddev, std::mt19937_64& rng);
Tensor Constant(ParameterStore& store, const std::string& name, Shape shape,
                float value);
// Fan-in scaled weight for Linear ([out, in]) or Conv1d ([out, in, k]).
Tensor FanIn(ParameterStore& store, const std::string& name, Shape shape,
             std::mt19937_64& rng, float gain = 1.0f);

// Linear layer "<prefix>.w" / "<prefix>.b".
void AddLinear(ParameterStore& store, const std::string& prefix, int in,
               int out, std::mt19937_64& rng, float gain = 1.0f);
Tensor ApplyLinear(const ParameterStore& store, const std::string& prefix,
                   const Tensor& x);

void AddLayerNorm(ParameterStore& store, const std::string& prefix, int dim);
Tensor ApplyLayerNorm(const ParameterStore& store, const std::string& prefix,
                      const Tensor& x);

// [T, D] sequence convolution with "same" padding (odd kernels).
void AddSeqConv(ParameterStore& store, const std::string& prefix, int in,
                int out, int kernel, std::mt19937_64& rng, float gain = 1.0f);
Tensor ApplySeqConv(const ParameterStore& store, const std::string& prefix,
                    const Tensor& x);

// [T, D] <-> [1, D, T]
Tensor SeqToChannels(const Tensor& x);
Tensor ChannelsToSeq(const Tensor& x);

}  // namespace nhsg::nn

#endif  // NHSG_NUMERICS_LAYERS_H_
