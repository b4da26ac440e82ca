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

#include <algorithm>
#include <cmath>
#include <numeric>

#include "nhsg/numerics/ops.h"
#include "src/numerics/op_util.h"

namespace nhsg::ops {
namespace internal {

Tensor Finish(const char* op, Shape shape, std::vector<float> data,
              const std::vector<Tensor>& inputs, BackwardFn backward) {
  for (float v : data) {
    if (!std::isfinite(v)) {
      throw NumericsError(std::string(op) + ": non-finite forward value");
    }
  }
  Tensor out(std::move(shape), std::move(data));
  if (!GradEnabled()) return out;
  bool needs = false;
  for (const Tensor& t : inputs) needs = needs || t.requires_grad();
  if (!needs) return out;
  TensorNode* node = out.node();
  node->requires_grad = true;
  node->op = op;
  for (const Tensor& t : inputs) node->inputs.push_back(t.node_ptr());
  node->backward = std::move(backward);
  return out;
}

}  // namespace internal

using namespace internal;  // NOLINT

namespace {

struct Broadcast {
  Shape shape;
  std::vector<int64_t> a_index;
  std::vector<int64_t> b_index;
};

Broadcast MakeBroadcast(const char* op, const Shape& a, const Shape& b) {
  const size_t rank = std::max(a.size(), b.size());
  Shape out(rank);
  std::vector<int64_t> a_stride(rank, 0), b_stride(rank, 0);
  int64_t as = 1, bs = 1;
  for (size_t i = 0; i < rank; ++i) {
    const size_t ax = rank - 1 - i;
    const int da = i < a.size() ? a[a.size() - 1 - i] : 1;
    const int db = i < b.size() ? b[b.size() - 1 - i] : 1;
    if (da != db && da != 1 && db != 1) {
      ShapeFail(op, "cannot broadcast " + ShapeToString(a) + " with " +
                        ShapeToString(b));
    }
    out[ax] = std::max(da, db);
    a_stride[ax] = da == 1 ? 0 : as;
    b_stride[ax] = db == 1 ? 0 : bs;
    as *= da;
    bs *= db;
  }
  Broadcast bc;
  bc.shape = out;
  const int64_t n = NumElements(out);
  bc.a_index.resize(n);
  bc.b_index.resize(n);
  std::vector<int> counter(rank, 0);
  int64_t ai = 0, bi = 0;
  for (int64_t i = 0; i < n; ++i) {
    bc.a_index[i] = ai;
    bc.b_index[i] = bi;
    for (int ax = static_cast<int>(rank) - 1; ax >= 0; --ax) {
      ai += a_stride[ax];
      bi += b_stride[ax];
      if (++counter[ax] < out[ax]) break;
      ai -= a_stride[ax] * out[ax];
      bi -= b_stride[ax] * out[ax];
      counter[ax] = 0;
    }
  }
  return bc;
}

enum class BinaryKind { kAdd, kSub, kMul };

Tensor Binary(const char* op, BinaryKind kind, const Tensor& a,
              const Tensor& b) {
  auto bc = std::make_shared<Broadcast>(MakeBroadcast(op, a.shape(), b.shape()));
  const int64_t n = static_cast<int64_t>(bc->a_index.size());
  std::vector<float> out(n);
  const auto& ad = a.storage();
  const auto& bd = b.storage();
  for (int64_t i = 0; i < n; ++i) {
    const float x = ad[bc->a_index[i]], y = bd[bc->b_index[i]];
    out[i] = kind == BinaryKind::kAdd   ? x + y
             : kind == BinaryKind::kSub ? x - y
                                        : x * y;
  }
  return Finish(op, bc->shape, std::move(out), {a, b},
                [bc, kind](TensorNode& o) {
                  const int64_t n = static_cast<int64_t>(bc->a_index.size());
                  if (Needs(o, 0)) {
                    auto& ga = GradOf(o, 0);
                    const auto& bd = DataOf(o, 1);
                    for (int64_t i = 0; i < n; ++i) {
                      ga[bc->a_index[i]] +=
                          kind == BinaryKind::kMul
                              ? o.grad[i] * bd[bc->b_index[i]]
                              : o.grad[i];
                    }
                  }
                  if (Needs(o, 1)) {
                    auto& gb = GradOf(o, 1);
                    const auto& ad = DataOf(o, 0);
                    for (int64_t i = 0; i < n; ++i) {
                      const float g = o.grad[i];
                      gb[bc->b_index[i]] +=
                          kind == BinaryKind::kAdd   ? g
                          : kind == BinaryKind::kSub ? -g
                                                     : g * ad[bc->a_index[i]];
                    }
                  }
                });
}

// Shared shape for unary elementwise ops whose derivative depends only on
// the input value and output value.
template <typename Forward, typename Derivative>
Tensor Unary(const char* op, const Tensor& x, Forward f, Derivative df) {
  std::vector<float> out(x.numel());
  const auto& xd = x.storage();
  for (size_t i = 0; i < out.size(); ++i) out[i] = f(xd[i]);
  return Finish(op, x.shape(), std::move(out), {x}, [df](TensorNode& o) {
    auto& g = GradOf(o, 0);
    const auto& xd = DataOf(o, 0);
    for (size_t i = 0; i < g.size(); ++i) {
      g[i] += o.grad[i] * df(xd[i], o.data[i]);
    }
  });
}

}  // namespace

Tensor Add(const Tensor& a, const Tensor& b) {
  return Binary("add", BinaryKind::kAdd, a, b);
}

Tensor Sub(const Tensor& a, const Tensor& b) {
  return Binary("sub", BinaryKind::kSub, a, b);
}

Tensor Mul(const Tensor& a, const Tensor& b) {
  return Binary("mul", BinaryKind::kMul, a, b);
}

Tensor Scale(const Tensor& x, float factor) {
  return Unary(
      "scale", x, [factor](float v) { return v * factor; },
      [factor](float, float) { return factor; });
}

Tensor AddScalar(const Tensor& x, float value) {
  return Unary(
      "add_scalar", x, [value](float v) { return v + value; },
      [](float, float) { return 1.0f; });
}

Tensor Tanh(const Tensor& x) {
  return Unary(
      "tanh", x, [](float v) { return std::tanh(v); },
      [](float, float y) { return 1.0f - y * y; });
}

Tensor LeakyRelu(const Tensor& x, float slope) {
  return Unary(
      "leaky_relu", x, [slope](float v) { return v > 0.0f ? v : slope * v; },
      [slope](float v, float) { return v > 0.0f ? 1.0f : slope; });
}

Tensor LogClamp(const Tensor& x, float floor) {
  return Unary(
      "log_clamp", x, [floor](float v) { return std::log(std::max(v, floor)); },
      [floor](float v, float) { return v > floor ? 1.0f / v : 0.0f; });
}

Tensor Softmax(const Tensor& x) {
  const int cols = x.dim(-1);
  const int64_t rows = x.numel() / cols;
  std::vector<float> out(x.numel());
  const auto& xd = x.storage();
  for (int64_t r = 0; r < rows; ++r) {
    const float* in = xd.data() + r * cols;
    float* y = out.data() + r * cols;
    const float mx = *std::max_element(in, in + cols);
    double sum = 0.0;
    for (int c = 0; c < cols; ++c) sum += (y[c] = std::exp(in[c] - mx));
    for (int c = 0; c < cols; ++c) y[c] = static_cast<float>(y[c] / sum);
  }
  return Finish("softmax", x.shape(), std::move(out), {x},
                [cols, rows](TensorNode& o) {
                  auto& g = GradOf(o, 0);
                  for (int64_t r = 0; r < rows; ++r) {
                    const float* y = o.data.data() + r * cols;
                    const float* gy = o.grad.data() + r * cols;
                    double dot = 0.0;
                    for (int c = 0; c < cols; ++c) dot += y[c] * gy[c];
                    for (int c = 0; c < cols; ++c) {
                      g[r * cols + c] += y[c] * (gy[c] - static_cast<float>(dot));
                    }
                  }
                });
}

Tensor Reshape(const Tensor& x, Shape shape) {
  if (NumElements(shape) != x.numel()) {
    ShapeFail("reshape", ShapeToString(x.shape()) + " -> " +
                             ShapeToString(shape));
  }
  return Finish("reshape", std::move(shape), x.storage(), {x},
                [](TensorNode& o) {
                  auto& g = GradOf(o, 0);
                  for (size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
                });
}

Tensor Transpose(const Tensor& x) {
  RequireRank("transpose", x, 2);
  const int rows = x.dim(0), cols = x.dim(1);
  std::vector<float> out(x.numel());
  MapF(out.data(), cols, rows) = ConstMapF(x.storage().data(), rows, cols).transpose();
  return Finish("transpose", {cols, rows}, std::move(out), {x},
                [rows, cols](TensorNode& o) {
                  auto& g = GradOf(o, 0);
                  MapF(g.data(), rows, cols) +=
                      ConstMapF(o.grad.data(), cols, rows).transpose();
                });
}

Tensor Concat(const std::vector<Tensor>& xs, int axis) {
  if (xs.empty()) ShapeFail("concat", "no inputs");
  const int rank = xs[0].rank();
  if (axis < 0) axis += rank;
  if (axis < 0 || axis >= rank) ShapeFail("concat", "axis out of range");
  Shape shape = xs[0].shape();
  shape[axis] = 0;
  for (const Tensor& t : xs) {
    if (t.rank() != rank) ShapeFail("concat", "rank mismatch");
    for (int d = 0; d < rank; ++d) {
      if (d != axis && t.dim(d) != xs[0].dim(d)) {
        ShapeFail("concat", "dimension mismatch off the concat axis");
      }
    }
    shape[axis] += t.dim(axis);
  }
  int64_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= shape[d];
  for (int d = axis + 1; d < rank; ++d) inner *= shape[d];
  std::vector<int64_t> widths;  // per-input contiguous chunk per outer index
  for (const Tensor& t : xs) widths.push_back(t.dim(axis) * inner);
  const int64_t total = shape[axis] * inner;

  std::vector<float> out(NumElements(shape));
  int64_t offset = 0;
  for (size_t i = 0; i < xs.size(); ++i) {
    const auto& d = xs[i].storage();
    for (int64_t o = 0; o < outer; ++o) {
      std::copy_n(d.data() + o * widths[i], widths[i],
                  out.data() + o * total + offset);
    }
    offset += widths[i];
  }
  return Finish("concat", shape, std::move(out), xs,
                [widths, outer, total](TensorNode& o) {
                  int64_t offset = 0;
                  for (size_t i = 0; i < widths.size(); ++i) {
                    if (Needs(o, i)) {
                      auto& g = GradOf(o, i);
                      for (int64_t r = 0; r < outer; ++r) {
                        for (int64_t c = 0; c < widths[i]; ++c) {
                          g[r * widths[i] + c] += o.grad[r * total + offset + c];
                        }
                      }
                    }
                    offset += widths[i];
                  }
                });
}

Tensor Gather(const Tensor& x, const std::vector<int>& indices, Shape shape) {
  if (NumElements(shape) != static_cast<int64_t>(indices.size())) {
    ShapeFail("gather", "index count does not match output shape");
  }
  const int64_t n = x.numel();
  std::vector<float> out(indices.size());
  const auto& xd = x.storage();
  for (size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] < 0 || indices[i] >= n) ShapeFail("gather", "index out of range");
    out[i] = xd[indices[i]];
  }
  auto idx = std::make_shared<std::vector<int>>(indices);
  return Finish("gather", std::move(shape), std::move(out), {x},
                [idx](TensorNode& o) {
                  auto& g = GradOf(o, 0);
                  for (size_t i = 0; i < idx->size(); ++i) {
                    g[(*idx)[i]] += o.grad[i];
                  }
                });
}

Tensor EmbeddingLookup(const Tensor& table, const std::vector<int>& ids) {
  RequireRank("embedding_lookup", table, 2);
  if (ids.empty()) ShapeFail("embedding_lookup", "no ids");
  const int vocab = table.dim(0), dim = table.dim(1);
  std::vector<int> flat;
  flat.reserve(ids.size() * dim);
  for (int id : ids) {
    if (id < 0 || id >= vocab) {
      throw VocabError("embedding id " + std::to_string(id) +
                       " outside vocabulary of " + std::to_string(vocab));
    }
    for (int c = 0; c < dim; ++c) flat.push_back(id * dim + c);
  }
  return Gather(table, flat, {static_cast<int>(ids.size()), dim});
}

Tensor Linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  RequireRank("linear", x, 2);
  RequireRank("linear", weight, 2);
  const int n = x.dim(0), in = x.dim(1), out_dim = weight.dim(0);
  if (weight.dim(1) != in) {
    ShapeFail("linear", "input " + ShapeToString(x.shape()) + " vs weight " +
                            ShapeToString(weight.shape()));
  }
  const bool has_bias = bias.defined();
  if (has_bias && bias.numel() != out_dim) ShapeFail("linear", "bias size");
  std::vector<float> out(static_cast<size_t>(n) * out_dim);
  MapF y(out.data(), n, out_dim);
  y.noalias() = ConstMapF(x.storage().data(), n, in) *
                ConstMapF(weight.storage().data(), out_dim, in).transpose();
  if (has_bias) {
    y.rowwise() += Eigen::Map<const Eigen::RowVectorXf>(bias.storage().data(), out_dim);
  }
  std::vector<Tensor> inputs{x, weight};
  if (has_bias) inputs.push_back(bias);
  return Finish("linear", {n, out_dim}, std::move(out), inputs,
                [n, in, out_dim, has_bias](TensorNode& o) {
                  ConstMapF gy(o.grad.data(), n, out_dim);
                  if (Needs(o, 0)) {
                    MapF(GradOf(o, 0).data(), n, in).noalias() +=
                        gy * ConstMapF(DataOf(o, 1).data(), out_dim, in);
                  }
                  if (Needs(o, 1)) {
                    MapF(GradOf(o, 1).data(), out_dim, in).noalias() +=
                        gy.transpose() * ConstMapF(DataOf(o, 0).data(), n, in);
                  }
                  if (has_bias && Needs(o, 2)) {
                    Eigen::Map<Eigen::RowVectorXf>(GradOf(o, 2).data(), out_dim) +=
                        gy.colwise().sum();
                  }
                });
}

Tensor MatMul(const Tensor& a, const Tensor& b) {
  RequireRank("matmul", a, 2);
  RequireRank("matmul", b, 2);
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) ShapeFail("matmul", "inner dimensions differ");
  std::vector<float> out(static_cast<size_t>(m) * n);
  MapF(out.data(), m, n).noalias() =
      ConstMapF(a.storage().data(), m, k) * ConstMapF(b.storage().data(), k, n);
  return Finish("matmul", {m, n}, std::move(out), {a, b},
                [m, k, n](TensorNode& o) {
                  ConstMapF gy(o.grad.data(), m, n);
                  if (Needs(o, 0)) {
                    MapF(GradOf(o, 0).data(), m, k).noalias() +=
                        gy * ConstMapF(DataOf(o, 1).data(), k, n).transpose();
                  }
                  if (Needs(o, 1)) {
                    MapF(GradOf(o, 1).data(), k, n).noalias() +=
                        ConstMapF(DataOf(o, 0).data(), m, k).transpose() * gy;
                  }
                });
}

Tensor Sum(const Tensor& x) {
  double s = 0.0;
  for (float v : x.storage()) s += v;
  return Finish("sum", {1}, {static_cast<float>(s)}, {x}, [](TensorNode& o) {
    auto& g = GradOf(o, 0);
    for (float& v : g) v += o.grad[0];
  });
}

Tensor Mean(const Tensor& x) {
  double s = 0.0;
  for (float v : x.storage()) s += v;
  const double n = static_cast<double>(x.numel());
  return Finish("mean", {1}, {static_cast<float>(s / n)}, {x},
                [n](TensorNode& o) {
                  auto& g = GradOf(o, 0);
                  const float d = static_cast<float>(o.grad[0] / n);
                  for (float& v : g) v += d;
                });
}

Tensor MeanRows(const Tensor& x) {
  RequireRank("mean_rows", x, 2);
  const int rows = x.dim(0), cols = x.dim(1);
  std::vector<float> out(cols);
  Eigen::Map<Eigen::RowVectorXf>(out.data(), cols) =
      ConstMapF(x.storage().data(), rows, cols).colwise().mean();
  return Finish("mean_rows", {1, cols}, std::move(out), {x},
                [rows, cols](TensorNode& o) {
                  MapF g(GradOf(o, 0).data(), rows, cols);
                  Eigen::Map<const Eigen::RowVectorXf> gy(o.grad.data(), cols);
                  g.rowwise() += gy / static_cast<float>(rows);
                });
}

Tensor Mix(const std::vector<Tensor>& xs, const Tensor& weights) {
  if (xs.empty() || weights.numel() != static_cast<int64_t>(xs.size())) {
    ShapeFail("mix", "need one weight per input");
  }
  for (const Tensor& t : xs) {
    if (t.shape() != xs[0].shape()) ShapeFail("mix", "inputs differ in shape");
  }
  const size_t count = xs.size();
  const int64_t n = xs[0].numel();
  std::vector<float> out(n, 0.0f);
  for (size_t i = 0; i < count; ++i) {
    const float w = weights.at(static_cast<int64_t>(i));
    const auto& d = xs[i].storage();
    for (int64_t j = 0; j < n; ++j) out[j] += w * d[j];
  }
  std::vector<Tensor> inputs = xs;
  inputs.push_back(weights);
  return Finish("mix", xs[0].shape(), std::move(out), inputs,
                [count, n](TensorNode& o) {
                  const auto& w = DataOf(o, count);
                  for (size_t i = 0; i < count; ++i) {
                    if (Needs(o, i)) {
                      auto& g = GradOf(o, i);
                      for (int64_t j = 0; j < n; ++j) g[j] += w[i] * o.grad[j];
                    }
                  }
                  if (Needs(o, count)) {
                    auto& gw = GradOf(o, count);
                    for (size_t i = 0; i < count; ++i) {
                      const auto& d = DataOf(o, i);
                      double s = 0.0;
                      for (int64_t j = 0; j < n; ++j) s += d[j] * o.grad[j];
                      gw[i] += static_cast<float>(s);
                    }
                  }
                });
}

}  // namespace nhsg::ops
