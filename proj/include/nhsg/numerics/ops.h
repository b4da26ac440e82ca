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

#ifndef NHSG_NUMERICS_OPS_H_
#define NHSG_NUMERICS_OPS_H_

#include <vector>

#include "nhsg/numerics/tensor.h"

// Differentiable operators. Every op validates shapes (ShapeError), rejects
// non-finite forward values (NumericsError) and registers an exact analytic
// backward. Sequence tensors are [T, D]; convolution tensors are [B, C, L].
namespace nhsg::ops {

// Numpy-style broadcasting.
Tensor Add(const Tensor& a, const Tensor& b);
Tensor Sub(const Tensor& a, const Tensor& b);
Tensor Mul(const Tensor& a, const Tensor& b);

Tensor Scale(const Tensor& x, float factor);
Tensor AddScalar(const Tensor& x, float value);

Tensor Tanh(const Tensor& x);
Tensor LeakyRelu(const Tensor& x, float slope);
// Softmax over the last axis.
Tensor Softmax(const Tensor& x);
// log(max(x, floor)); zero gradient where clamped.
Tensor LogClamp(const Tensor& x, float floor);

Tensor Reshape(const Tensor& x, Shape shape);
// 2-D transpose.
Tensor Transpose(const Tensor& x);
Tensor Concat(const std::vector<Tensor>& xs, int axis);
// out.flat[i] = x.flat[indices[i]]; scatter-add backward.
Tensor Gather(const Tensor& x, const std::vector<int>& indices, Shape shape);
// Rows of `table` [V, D] selected by `ids` -> [N, D].
Tensor EmbeddingLookup(const Tensor& table, const std::vector<int>& ids);

// x [N, in] * weight[out, in]^T + bias[out].
Tensor Linear(const Tensor& x, const Tensor& weight, const Tensor& bias = {});
Tensor MatMul(const Tensor& a, const Tensor& b);

Tensor Sum(const Tensor& x);
Tensor Mean(const Tensor& x);
// [N, D] -> [1, D]
Tensor MeanRows(const Tensor& x);

// Normalizes the last axis of [N, D].
Tensor LayerNorm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                 float eps = 1e-5f);

// Multi-head attention over pre-projected q [T, D], k [S, D], v [S, D].
// rel_bias, if given, is [heads, 2R+1] and adds rel_bias[h, clip(j-i)+R] to
// the score of query i against key j.
Tensor ScaledDotAttention(const Tensor& q, const Tensor& k, const Tensor& v,
                          int heads, const Tensor& rel_bias = {});

// x [B, Cin, L], weight [Cout, Cin, K], bias [Cout]; zero padding.
Tensor Conv1d(const Tensor& x, const Tensor& weight, const Tensor& bias,
              int stride = 1, int padding = 0, int dilation = 1);
int Conv1dOutputLength(int length, int kernel, int stride, int padding,
                       int dilation = 1);

// x [B, Cin, L], weight [Cin, Cout, K] -> [B, Cout, (L-1)*stride-2p+K].
Tensor ConvTranspose1d(const Tensor& x, const Tensor& weight,
                       const Tensor& bias, int stride, int padding);

// x + 1/(exp(log_beta)+1e-9) * sin^2(exp(log_alpha) * x), per channel of
// x [B, C, L].
Tensor SnakeBeta(const Tensor& x, const Tensor& log_alpha,
                 const Tensor& log_beta);

// Per output row o: g[o] * v[o] / ||v[o]||.
Tensor WeightNorm(const Tensor& v, const Tensor& g);

// sum_i weights[i] * xs[i] for equally shaped xs.
Tensor Mix(const std::vector<Tensor>& xs, const Tensor& weights);

// Losses reduce to a [1] tensor. `mask` (optional, one weight per element
// of a) selects the elements averaged over.
Tensor L1Loss(const Tensor& a, const Tensor& b,
              const std::vector<float>& mask = {});
Tensor MseLoss(const Tensor& a, const Tensor& b,
               const std::vector<float>& mask = {});
// Mean over rows whose target != ignore_index.
Tensor CrossEntropy(const Tensor& logits, const std::vector<int>& targets,
                    int ignore_index = -1);
// Cosine of two flattened tensors.
Tensor CosineSimilarity(const Tensor& a, const Tensor& b);

// Hann-windowed magnitude STFT of a flattened signal with centered
// reflection padding; [T, fft/2+1] with T = floor(len/hop) + 1.
Tensor StftMagnitude(const Tensor& signal, int fft_size, int hop, int win);

}  // namespace nhsg::ops

#endif  // NHSG_NUMERICS_OPS_H_
