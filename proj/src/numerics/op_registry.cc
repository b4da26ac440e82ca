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

#include "nhsg/numerics/op_registry.h"

#include <algorithm>
#include <cmath>

#include "nhsg/numerics/ops.h"

namespace nhsg::ops {
namespace {

Tensor Leaf(Shape shape, std::mt19937_64& rng, float scale = 1.0f) {
  return Tensor::Randn(std::move(shape), scale, rng, true);
}

// Normal samples pushed at least `margin` away from zero.
Tensor AwayFromZero(Shape shape, std::mt19937_64& rng, float margin) {
  Tensor t = Tensor::Randn(std::move(shape), 1.0f, rng, true);
  for (float& v : t.storage()) v = v >= 0.0f ? v + margin : v - margin;
  return t;
}

Tensor Positive(Shape shape, std::mt19937_64& rng, float lo, float hi) {
  return Tensor::Uniform(std::move(shape), lo, hi, rng, true);
}

std::vector<OpProbe> BuildRegistry() {
  std::vector<OpProbe> r;
  auto add = [&r](std::string name, auto make, auto apply) {
    r.push_back({std::move(name), make, apply});
  };
  using In = std::vector<Tensor>;
  using Rng = std::mt19937_64;

  add("add", [](Rng& g) { return In{Leaf({2, 3}, g), Leaf({1, 3}, g)}; },
      [](const In& x) { return Add(x[0], x[1]); });
  add("sub", [](Rng& g) { return In{Leaf({2, 3}, g), Leaf({2, 1}, g)}; },
      [](const In& x) { return Sub(x[0], x[1]); });
  add("mul", [](Rng& g) { return In{Leaf({3, 4}, g), Leaf({4}, g)}; },
      [](const In& x) { return Mul(x[0], x[1]); });
  add("scale", [](Rng& g) { return In{Leaf({5}, g)}; },
      [](const In& x) { return Scale(x[0], -1.7f); });
  add("add_scalar", [](Rng& g) { return In{Leaf({5}, g)}; },
      [](const In& x) { return AddScalar(x[0], 0.3f); });
  add("tanh", [](Rng& g) { return In{Leaf({6}, g)}; },
      [](const In& x) { return Tanh(x[0]); });
  add("leaky_relu", [](Rng& g) { return In{AwayFromZero({8}, g, 0.05f)}; },
      [](const In& x) { return LeakyRelu(x[0], 0.1f); });
  add("softmax", [](Rng& g) { return In{Leaf({3, 5}, g)}; },
      [](const In& x) { return Softmax(x[0]); });
  add("log_clamp",
      [](Rng& g) {
        Tensor t = Positive({6}, g, 0.2f, 2.0f);
        t.storage()[0] = 0.01f;  // below the floor
        return In{t};
      },
      [](const In& x) { return LogClamp(x[0], 0.05f); });
  add("reshape", [](Rng& g) { return In{Leaf({2, 6}, g)}; },
      [](const In& x) { return Reshape(x[0], {3, 4}); });
  add("transpose", [](Rng& g) { return In{Leaf({2, 5}, g)}; },
      [](const In& x) { return Transpose(x[0]); });
  add("concat",
      [](Rng& g) { return In{Leaf({2, 3}, g), Leaf({2, 2}, g)}; },
      [](const In& x) { return Concat({x[0], x[1]}, 1); });
  add("gather", [](Rng& g) { return In{Leaf({6}, g)}; },
      [](const In& x) { return Gather(x[0], {5, 0, 0, 2, 3, 3, 1, 4}, {2, 4}); });
  add("embedding_lookup", [](Rng& g) { return In{Leaf({4, 3}, g)}; },
      [](const In& x) { return EmbeddingLookup(x[0], {3, 1, 1, 0}); });
  add("linear",
      [](Rng& g) {
        return In{Leaf({3, 4}, g, 0.5f), Leaf({5, 4}, g, 0.5f),
                  Leaf({5}, g, 0.2f)};
      },
      [](const In& x) { return Linear(x[0], x[1], x[2]); });
  add("matmul", [](Rng& g) { return In{Leaf({3, 4}, g), Leaf({4, 2}, g)}; },
      [](const In& x) { return MatMul(x[0], x[1]); });
  add("sum", [](Rng& g) { return In{Leaf({7}, g)}; },
      [](const In& x) { return Sum(x[0]); });
  add("mean", [](Rng& g) { return In{Leaf({7}, g)}; },
      [](const In& x) { return Mean(x[0]); });
  add("mean_rows", [](Rng& g) { return In{Leaf({4, 3}, g)}; },
      [](const In& x) { return MeanRows(x[0]); });
  add("layer_norm",
      [](Rng& g) {
        return In{Leaf({3, 6}, g), Leaf({6}, g, 0.5f), Leaf({6}, g, 0.2f)};
      },
      [](const In& x) { return LayerNorm(x[0], x[1], x[2]); });
  add("scaled_dot_attention",
      [](Rng& g) {
        return In{Leaf({4, 6}, g, 0.5f), Leaf({5, 6}, g, 0.5f),
                  Leaf({5, 6}, g, 0.5f), Leaf({2, 5}, g, 0.5f)};
      },
      [](const In& x) { return ScaledDotAttention(x[0], x[1], x[2], 2, x[3]); });
  add("conv1d",
      [](Rng& g) {
        return In{Leaf({2, 3, 10}, g, 0.5f), Leaf({4, 3, 3}, g, 0.5f),
                  Leaf({4}, g, 0.2f)};
      },
      [](const In& x) { return Conv1d(x[0], x[1], x[2], 2, 1, 2); });
  add("conv_transpose1d",
      [](Rng& g) {
        return In{Leaf({2, 3, 5}, g, 0.5f), Leaf({3, 2, 4}, g, 0.5f),
                  Leaf({2}, g, 0.2f)};
      },
      [](const In& x) { return ConvTranspose1d(x[0], x[1], x[2], 2, 1); });
  add("snake_beta",
      [](Rng& g) {
        return In{Leaf({2, 2, 6}, g), Leaf({2}, g, 0.3f), Leaf({2}, g, 0.3f)};
      },
      [](const In& x) { return SnakeBeta(x[0], x[1], x[2]); });
  add("weight_norm",
      [](Rng& g) { return In{Leaf({3, 2, 2}, g), Positive({3}, g, 0.5f, 1.5f)}; },
      [](const In& x) { return WeightNorm(x[0], x[1]); });
  add("mix",
      [](Rng& g) {
        return In{Leaf({2, 3}, g), Leaf({2, 3}, g), Leaf({2, 3}, g), Leaf({3}, g)};
      },
      [](const In& x) { return Mix({x[0], x[1], x[2]}, x[3]); });
  add("l1_loss",
      [](Rng& g) {
        Tensor a = Leaf({2, 4}, g);
        Tensor d = AwayFromZero({2, 4}, g, 0.05f);
        Tensor b(a.shape(), a.storage(), true);
        for (int64_t i = 0; i < b.numel(); ++i) b.storage()[i] += d.at(i);
        return In{a, b};
      },
      [](const In& x) {
        return L1Loss(x[0], x[1], {1, 1, 0, 1, 1, 1, 0, 1});
      });
  add("mse_loss", [](Rng& g) { return In{Leaf({2, 4}, g), Leaf({2, 4}, g)}; },
      [](const In& x) {
        return MseLoss(x[0], x[1], {1, 0, 1, 1, 1, 1, 1, 0});
      });
  add("cross_entropy", [](Rng& g) { return In{Leaf({4, 5}, g)}; },
      [](const In& x) { return CrossEntropy(x[0], {2, 4, 0, 1}, 4); });
  add("cosine_similarity",
      [](Rng& g) { return In{Leaf({6}, g), Leaf({6}, g)}; },
      [](const In& x) { return CosineSimilarity(x[0], x[1]); });
  add("stft_magnitude",
      [](Rng& g) {
        // redraw until no bin sits near the |.| kink
        for (;;) {
          Tensor t = Leaf({40}, g, 0.4f);
          NoGradGuard guard;
          Tensor m = StftMagnitude(t, 16, 4, 12);
          float lo = m.at(0);
          for (float v : m.storage()) lo = std::min(lo, v);
          if (lo > 0.1f) return In{t};
        }
      },
      [](const In& x) { return StftMagnitude(x[0], 16, 4, 12); });
  return r;
}

}  // namespace

const std::vector<OpProbe>& OpRegistry() {
  static const std::vector<OpProbe> registry = BuildRegistry();
  return registry;
}

}  // namespace nhsg::ops
