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

#include "nhsg/numerics/layers.h"

#include <cmath>

#include "nhsg/errors.h"
#include "nhsg/numerics/ops.h"

namespace nhsg::nn {

Tensor Normal(ParameterStore& store, const std::string& name, Shape shape,
              float stddev, std::mt19937_64& rng) {
  return store.Add(name, Tensor::Randn(std::move(shape), stddev, rng));
}

Tensor Constant(ParameterStore& store, const std::string& name, Shape shape,
                float value) {
  return store.Add(name, Tensor(std::move(shape), value));
}

Tensor FanIn(ParameterStore& store, const std::string& name, Shape shape,
             std::mt19937_64& rng, float gain) {
  int64_t fan_in = 1;
  for (size_t i = 1; i < shape.size(); ++i) fan_in *= shape[i];
  const float stddev = gain / std::sqrt(static_cast<float>(fan_in));
  return Normal(store, name, std::move(shape), stddev, rng);
}

void AddLinear(ParameterStore& store, const std::string& prefix, int in,
               int out, std::mt19937_64& rng, float gain) {
  FanIn(store, prefix + ".w", {out, in}, rng, gain);
  Constant(store, prefix + ".b", {out}, 0.0f);
}

Tensor ApplyLinear(const ParameterStore& store, const std::string& prefix,
                   const Tensor& x) {
  return ops::Linear(x, store.Get(prefix + ".w"), store.Get(prefix + ".b"));
}

void AddLayerNorm(ParameterStore& store, const std::string& prefix, int dim) {
  Constant(store, prefix + ".g", {dim}, 1.0f);
  Constant(store, prefix + ".b", {dim}, 0.0f);
}

Tensor ApplyLayerNorm(const ParameterStore& store, const std::string& prefix,
                      const Tensor& x) {
  return ops::LayerNorm(x, store.Get(prefix + ".g"), store.Get(prefix + ".b"));
}

void AddSeqConv(ParameterStore& store, const std::string& prefix, int in,
                int out, int kernel, std::mt19937_64& rng, float gain) {
  if (kernel % 2 == 0) throw ConfigError(prefix + ": kernel must be odd");
  FanIn(store, prefix + ".w", {out, in, kernel}, rng, gain);
  Constant(store, prefix + ".b", {out}, 0.0f);
}

Tensor SeqToChannels(const Tensor& x) {
  Tensor t = ops::Transpose(x);
  return ops::Reshape(t, {1, t.dim(0), t.dim(1)});
}

Tensor ChannelsToSeq(const Tensor& x) {
  if (x.rank() != 3 || x.dim(0) != 1) {
    throw ShapeError("expected [1, C, T], got " + ShapeToString(x.shape()));
  }
  return ops::Transpose(ops::Reshape(x, {x.dim(1), x.dim(2)}));
}

Tensor ApplySeqConv(const ParameterStore& store, const std::string& prefix,
                    const Tensor& x) {
  const Tensor& w = store.Get(prefix + ".w");
  const int pad = w.dim(2) / 2;
  return ChannelsToSeq(
      ops::Conv1d(SeqToChannels(x), w, store.Get(prefix + ".b"), 1, pad, 1));
}

}  // namespace nhsg::nn
