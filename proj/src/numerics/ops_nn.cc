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

#include "nhsg/numerics/ops.h"
#include "src/numerics/op_util.h"

namespace nhsg::ops {

using namespace internal;  // NOLINT

Tensor LayerNorm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                 float eps) {
  RequireRank("layer_norm", x, 2);
  const int rows = x.dim(0), cols = x.dim(1);
  if (gamma.numel() != cols || beta.numel() != cols) {
    ShapeFail("layer_norm", "affine parameters must match the last axis");
  }
  auto xhat = std::make_shared<std::vector<float>>(x.numel());
  auto inv_std = std::make_shared<std::vector<float>>(rows);
  std::vector<float> out(x.numel());
  const auto& xd = x.storage();
  const auto& gd = gamma.storage();
  const auto& bd = beta.storage();
  for (int r = 0; r < rows; ++r) {
    const float* in = xd.data() + static_cast<size_t>(r) * cols;
    double mean = 0.0, var = 0.0;
    for (int c = 0; c < cols; ++c) mean += in[c];
    mean /= cols;
    for (int c = 0; c < cols; ++c) var += (in[c] - mean) * (in[c] - mean);
    var /= cols;
    const float is = static_cast<float>(1.0 / std::sqrt(var + eps));
    (*inv_std)[r] = is;
    for (int c = 0; c < cols; ++c) {
      const size_t i = static_cast<size_t>(r) * cols + c;
      (*xhat)[i] = static_cast<float>((in[c] - mean) * is);
      out[i] = (*xhat)[i] * gd[c] + bd[c];
    }
  }
  return Finish(
      "layer_norm", x.shape(), std::move(out), {x, gamma, beta},
      [rows, cols, xhat, inv_std](TensorNode& o) {
        const auto& gd = DataOf(o, 1);
        if (Needs(o, 0)) {
          auto& gx = GradOf(o, 0);
          std::vector<float> dxhat(cols);
          for (int r = 0; r < rows; ++r) {
            const size_t base = static_cast<size_t>(r) * cols;
            double m1 = 0.0, m2 = 0.0;
            for (int c = 0; c < cols; ++c) {
              dxhat[c] = o.grad[base + c] * gd[c];
              m1 += dxhat[c];
              m2 += dxhat[c] * (*xhat)[base + c];
            }
            m1 /= cols;
            m2 /= cols;
            for (int c = 0; c < cols; ++c) {
              gx[base + c] += (*inv_std)[r] *
                              static_cast<float>(dxhat[c] - m1 -
                                                 (*xhat)[base + c] * m2);
            }
          }
        }
        if (Needs(o, 1) || Needs(o, 2)) {
          for (int r = 0; r < rows; ++r) {
            for (int c = 0; c < cols; ++c) {
              const size_t i = static_cast<size_t>(r) * cols + c;
              if (Needs(o, 1)) GradOf(o, 1)[c] += o.grad[i] * (*xhat)[i];
              if (Needs(o, 2)) GradOf(o, 2)[c] += o.grad[i];
            }
          }
        }
      });
}

Tensor ScaledDotAttention(const Tensor& q, const Tensor& k, const Tensor& v,
                          int heads, const Tensor& rel_bias) {
  RequireRank("attention", q, 2);
  RequireRank("attention", k, 2);
  RequireRank("attention", v, 2);
  const int tq = q.dim(0), ts = k.dim(0), d = q.dim(1);
  if (k.dim(1) != d || v.dim(1) != d || v.dim(0) != ts) {
    ShapeFail("attention", "q/k/v shapes disagree");
  }
  if (heads < 1 || d % heads != 0) {
    ShapeFail("attention", "model dim not divisible by heads");
  }
  const bool has_bias = rel_bias.defined();
  int max_rel = 0;
  if (has_bias) {
    RequireRank("attention", rel_bias, 2);
    if (rel_bias.dim(0) != heads || rel_bias.dim(1) % 2 == 0) {
      ShapeFail("attention", "rel_bias must be [heads, 2R+1]");
    }
    max_rel = rel_bias.dim(1) / 2;
  }
  const int dh = d / heads;
  const float scale = 1.0f / std::sqrt(static_cast<float>(dh));
  auto rel_index = [max_rel](int i, int j) {
    return std::clamp(j - i, -max_rel, max_rel) + max_rel;
  };

  // probs[h] is tq x ts.
  auto probs = std::make_shared<std::vector<MatrixF>>(heads);
  std::vector<float> out(static_cast<size_t>(tq) * d);
  const auto& qd = q.storage();
  const auto& kd = k.storage();
  const auto& vd = v.storage();
  for (int h = 0; h < heads; ++h) {
    Eigen::Map<const MatrixF, 0, Eigen::OuterStride<>> qh(
        qd.data() + h * dh, tq, dh, Eigen::OuterStride<>(d));
    Eigen::Map<const MatrixF, 0, Eigen::OuterStride<>> kh(
        kd.data() + h * dh, ts, dh, Eigen::OuterStride<>(d));
    Eigen::Map<const MatrixF, 0, Eigen::OuterStride<>> vh(
        vd.data() + h * dh, ts, dh, Eigen::OuterStride<>(d));
    MatrixF s = (qh * kh.transpose()) * scale;
    if (has_bias) {
      const float* bias = rel_bias.storage().data() + h * rel_bias.dim(1);
      for (int i = 0; i < tq; ++i) {
        for (int j = 0; j < ts; ++j) s(i, j) += bias[rel_index(i, j)];
      }
    }
    for (int i = 0; i < tq; ++i) {
      const float mx = s.row(i).maxCoeff();
      s.row(i) = (s.row(i).array() - mx).exp();
      s.row(i) /= s.row(i).sum();
    }
    Eigen::Map<MatrixF, 0, Eigen::OuterStride<>> oh(
        out.data() + h * dh, tq, dh, Eigen::OuterStride<>(d));
    oh.noalias() = s * vh;
    (*probs)[h] = std::move(s);
  }

  std::vector<Tensor> inputs{q, k, v};
  if (has_bias) inputs.push_back(rel_bias);
  return Finish(
      "attention", {tq, d}, std::move(out), inputs,
      [=](TensorNode& o) {
        const auto& qd = DataOf(o, 0);
        const auto& kd = DataOf(o, 1);
        const auto& vd = DataOf(o, 2);
        using StridedConst = Eigen::Map<const MatrixF, 0, Eigen::OuterStride<>>;
        using Strided = Eigen::Map<MatrixF, 0, Eigen::OuterStride<>>;
        for (int h = 0; h < heads; ++h) {
          const MatrixF& p = (*probs)[h];
          StridedConst qh(qd.data() + h * dh, tq, dh, Eigen::OuterStride<>(d));
          StridedConst kh(kd.data() + h * dh, ts, dh, Eigen::OuterStride<>(d));
          StridedConst vh(vd.data() + h * dh, ts, dh, Eigen::OuterStride<>(d));
          StridedConst go(o.grad.data() + h * dh, tq, dh,
                          Eigen::OuterStride<>(d));
          if (Needs(o, 2)) {
            Strided gv(GradOf(o, 2).data() + h * dh, ts, dh,
                       Eigen::OuterStride<>(d));
            gv.noalias() += p.transpose() * go;
          }
          MatrixF dp = go * vh.transpose();
          // Softmax backward, row by row.
          MatrixF ds = p.array() *
                       (dp.colwise() - (dp.array() * p.array())
                                           .rowwise()
                                           .sum()
                                           .matrix())
                           .array();
          if (has_bias && Needs(o, 3)) {
            float* gb = GradOf(o, 3).data() + h * (2 * max_rel + 1);
            for (int i = 0; i < tq; ++i) {
              for (int j = 0; j < ts; ++j) {
                gb[std::clamp(j - i, -max_rel, max_rel) + max_rel] += ds(i, j);
              }
            }
          }
          if (Needs(o, 0)) {
            Strided gq(GradOf(o, 0).data() + h * dh, tq, dh,
                       Eigen::OuterStride<>(d));
            gq.noalias() += (ds * kh) * scale;
          }
          if (Needs(o, 1)) {
            Strided gk(GradOf(o, 1).data() + h * dh, ts, dh,
                       Eigen::OuterStride<>(d));
            gk.noalias() += (ds.transpose() * qh) * scale;
          }
        }
      });
}

int Conv1dOutputLength(int length, int kernel, int stride, int padding,
                       int dilation) {
  const int span = dilation * (kernel - 1) + 1;
  const int padded = length + 2 * padding;
  if (padded < span) return 0;
  return (padded - span) / stride + 1;
}

Tensor Conv1d(const Tensor& x, const Tensor& weight, const Tensor& bias,
              int stride, int padding, int dilation) {
  RequireRank("conv1d", x, 3);
  RequireRank("conv1d", weight, 3);
  const int batch = x.dim(0), cin = x.dim(1), len = x.dim(2);
  const int cout = weight.dim(0), kernel = weight.dim(2);
  if (weight.dim(1) != cin) {
    ShapeFail("conv1d", "input channels " + std::to_string(cin) +
                            " vs weight " + ShapeToString(weight.shape()));
  }
  if (stride < 1 || dilation < 1 || padding < 0) {
    ShapeFail("conv1d", "invalid stride/padding/dilation");
  }
  const bool has_bias = bias.defined();
  if (has_bias && bias.numel() != cout) ShapeFail("conv1d", "bias size");
  const int lout = Conv1dOutputLength(len, kernel, stride, padding, dilation);
  if (lout < 1) ShapeFail("conv1d", "input too short for kernel");

  const int rows = cin * kernel;
  // col[(c*K + k), j] = x[c, j*stride - padding + k*dilation]
  auto im2col = [=](const float* xb, MatrixF* col) {
    col->setZero(rows, lout);
    for (int c = 0; c < cin; ++c) {
      for (int k = 0; k < kernel; ++k) {
        float* dst = col->data() + static_cast<size_t>(c * kernel + k) * lout;
        const float* src = xb + static_cast<size_t>(c) * len;
        const int offset = k * dilation - padding;
        for (int j = 0; j < lout; ++j) {
          const int idx = j * stride + offset;
          if (idx >= 0 && idx < len) dst[j] = src[idx];
        }
      }
    }
  };

  std::vector<float> out(static_cast<size_t>(batch) * cout * lout);
  ConstMapF w(weight.storage().data(), cout, rows);
  MatrixF col;
  for (int b = 0; b < batch; ++b) {
    im2col(x.storage().data() + static_cast<size_t>(b) * cin * len, &col);
    MapF y(out.data() + static_cast<size_t>(b) * cout * lout, cout, lout);
    y.noalias() = w * col;
    if (has_bias) {
      y.colwise() += Eigen::Map<const Eigen::VectorXf>(bias.storage().data(), cout);
    }
  }

  std::vector<Tensor> inputs{x, weight};
  if (has_bias) inputs.push_back(bias);
  return Finish(
      "conv1d", {batch, cout, lout}, std::move(out), inputs,
      [=](TensorNode& o) {
        const auto& xd = DataOf(o, 0);
        ConstMapF w(DataOf(o, 1).data(), cout, rows);
        MatrixF col, dcol;
        for (int b = 0; b < batch; ++b) {
          ConstMapF gy(o.grad.data() + static_cast<size_t>(b) * cout * lout,
                       cout, lout);
          if (Needs(o, 1)) {
            im2col(xd.data() + static_cast<size_t>(b) * cin * len, &col);
            MapF(GradOf(o, 1).data(), cout, rows).noalias() +=
                gy * col.transpose();
          }
          if (has_bias && Needs(o, 2)) {
            Eigen::Map<Eigen::VectorXf>(GradOf(o, 2).data(), cout) +=
                gy.rowwise().sum();
          }
          if (Needs(o, 0)) {
            dcol.noalias() = w.transpose() * gy;
            float* gx = GradOf(o, 0).data() + static_cast<size_t>(b) * cin * len;
            for (int c = 0; c < cin; ++c) {
              for (int k = 0; k < kernel; ++k) {
                const float* src =
                    dcol.data() + static_cast<size_t>(c * kernel + k) * lout;
                float* dst = gx + static_cast<size_t>(c) * len;
                const int offset = k * dilation - padding;
                for (int j = 0; j < lout; ++j) {
                  const int idx = j * stride + offset;
                  if (idx >= 0 && idx < len) dst[idx] += src[j];
                }
              }
            }
          }
        }
      });
}

Tensor ConvTranspose1d(const Tensor& x, const Tensor& weight,
                       const Tensor& bias, int stride, int padding) {
  RequireRank("conv_transpose1d", x, 3);
  RequireRank("conv_transpose1d", weight, 3);
  const int batch = x.dim(0), cin = x.dim(1), len = x.dim(2);
  const int cout = weight.dim(1), kernel = weight.dim(2);
  if (weight.dim(0) != cin) ShapeFail("conv_transpose1d", "input channels");
  if (stride < 1 || padding < 0) ShapeFail("conv_transpose1d", "stride/padding");
  const bool has_bias = bias.defined();
  if (has_bias && bias.numel() != cout) ShapeFail("conv_transpose1d", "bias");
  const int lout = (len - 1) * stride - 2 * padding + kernel;
  if (lout < 1) ShapeFail("conv_transpose1d", "non-positive output length");
  const int rows = cout * kernel;

  std::vector<float> out(static_cast<size_t>(batch) * cout * lout, 0.0f);
  ConstMapF w(weight.storage().data(), cin, rows);
  MatrixF col;
  for (int b = 0; b < batch; ++b) {
    ConstMapF xb(x.storage().data() + static_cast<size_t>(b) * cin * len, cin,
                 len);
    col.noalias() = w.transpose() * xb;  // [Cout*K, L]
    float* y = out.data() + static_cast<size_t>(b) * cout * lout;
    for (int co = 0; co < cout; ++co) {
      for (int k = 0; k < kernel; ++k) {
        const float* src = col.data() + static_cast<size_t>(co * kernel + k) * len;
        float* dst = y + static_cast<size_t>(co) * lout;
        for (int i = 0; i < len; ++i) {
          const int idx = i * stride - padding + k;
          if (idx >= 0 && idx < lout) dst[idx] += src[i];
        }
      }
      if (has_bias) {
        const float bv = bias.storage()[co];
        for (int t = 0; t < lout; ++t) y[co * lout + t] += bv;
      }
    }
  }

  std::vector<Tensor> inputs{x, weight};
  if (has_bias) inputs.push_back(bias);
  return Finish(
      "conv_transpose1d", {batch, cout, lout}, std::move(out), inputs,
      [=](TensorNode& o) {
        ConstMapF w(DataOf(o, 1).data(), cin, rows);
        MatrixF dcol(rows, len);
        for (int b = 0; b < batch; ++b) {
          const float* gy = o.grad.data() + static_cast<size_t>(b) * cout * lout;
          for (int co = 0; co < cout; ++co) {
            for (int k = 0; k < kernel; ++k) {
              float* dst = dcol.data() + static_cast<size_t>(co * kernel + k) * len;
              const float* src = gy + static_cast<size_t>(co) * lout;
              for (int i = 0; i < len; ++i) {
                const int idx = i * stride - padding + k;
                dst[i] = (idx >= 0 && idx < lout) ? src[idx] : 0.0f;
              }
            }
          }
          if (Needs(o, 0)) {
            MapF(GradOf(o, 0).data() + static_cast<size_t>(b) * cin * len, cin,
                 len)
                .noalias() += w * dcol;
          }
          if (Needs(o, 1)) {
            ConstMapF xb(DataOf(o, 0).data() + static_cast<size_t>(b) * cin * len,
                         cin, len);
            MapF(GradOf(o, 1).data(), cin, rows).noalias() +=
                xb * dcol.transpose();
          }
          if (has_bias && Needs(o, 2)) {
            auto& gb = GradOf(o, 2);
            for (int co = 0; co < cout; ++co) {
              double s = 0.0;
              for (int t = 0; t < lout; ++t) s += gy[co * lout + t];
              gb[co] += static_cast<float>(s);
            }
          }
        }
      });
}

Tensor SnakeBeta(const Tensor& x, const Tensor& log_alpha,
                 const Tensor& log_beta) {
  RequireRank("snake_beta", x, 3);
  const int batch = x.dim(0), channels = x.dim(1), len = x.dim(2);
  if (log_alpha.numel() != channels || log_beta.numel() != channels) {
    ShapeFail("snake_beta", "need one alpha/beta per channel");
  }
  constexpr float kEps = 1e-9f;
  std::vector<float> out(x.numel());
  const auto& xd = x.storage();
  for (int b = 0; b < batch; ++b) {
    for (int c = 0; c < channels; ++c) {
      const float a = std::exp(log_alpha.storage()[c]);
      const float inv_b = 1.0f / (std::exp(log_beta.storage()[c]) + kEps);
      const size_t base = (static_cast<size_t>(b) * channels + c) * len;
      for (int t = 0; t < len; ++t) {
        const float s = std::sin(a * xd[base + t]);
        out[base + t] = xd[base + t] + inv_b * s * s;
      }
    }
  }
  return Finish(
      "snake_beta", x.shape(), std::move(out), {x, log_alpha, log_beta},
      [=](TensorNode& o) {
        const auto& xd = DataOf(o, 0);
        const auto& la = DataOf(o, 1);
        const auto& lb = DataOf(o, 2);
        for (int c = 0; c < channels; ++c) {
          const float a = std::exp(la[c]);
          const float beta = std::exp(lb[c]);
          const float inv_b = 1.0f / (beta + kEps);
          double ga = 0.0, gb = 0.0;
          for (int b = 0; b < batch; ++b) {
            const size_t base = (static_cast<size_t>(b) * channels + c) * len;
            for (int t = 0; t < len; ++t) {
              const float xv = xd[base + t];
              const float g = o.grad[base + t];
              const float s = std::sin(a * xv);
              const float s2 = std::sin(2.0f * a * xv);
              if (Needs(o, 0)) GradOf(o, 0)[base + t] += g * (1.0f + inv_b * a * s2);
              ga += g * inv_b * s2 * xv * a;
              gb -= g * s * s * beta * inv_b * inv_b;
            }
          }
          if (Needs(o, 1)) GradOf(o, 1)[c] += static_cast<float>(ga);
          if (Needs(o, 2)) GradOf(o, 2)[c] += static_cast<float>(gb);
        }
      });
}

Tensor WeightNorm(const Tensor& v, const Tensor& g) {
  const int rows = v.dim(0);
  const int64_t cols = v.numel() / rows;
  if (g.numel() != rows) ShapeFail("weight_norm", "need one gain per row");
  auto norms = std::make_shared<std::vector<float>>(rows);
  std::vector<float> out(v.numel());
  const auto& vd = v.storage();
  for (int r = 0; r < rows; ++r) {
    double s = 0.0;
    for (int64_t c = 0; c < cols; ++c) s += vd[r * cols + c] * vd[r * cols + c];
    const float norm = static_cast<float>(std::sqrt(s));
    if (norm <= 0.0f) throw NumericsError("weight_norm: zero row norm");
    (*norms)[r] = norm;
    const float k = g.storage()[r] / norm;
    for (int64_t c = 0; c < cols; ++c) out[r * cols + c] = k * vd[r * cols + c];
  }
  return Finish("weight_norm", v.shape(), std::move(out), {v, g},
                [rows, cols, norms](TensorNode& o) {
                  const auto& vd = DataOf(o, 0);
                  const auto& gd = DataOf(o, 1);
                  for (int r = 0; r < rows; ++r) {
                    const float norm = (*norms)[r];
                    double dot = 0.0;  // dw . vhat
                    for (int64_t c = 0; c < cols; ++c) {
                      dot += o.grad[r * cols + c] * vd[r * cols + c] / norm;
                    }
                    if (Needs(o, 1)) GradOf(o, 1)[r] += static_cast<float>(dot);
                    if (Needs(o, 0)) {
                      auto& gv = GradOf(o, 0);
                      const float k = gd[r] / norm;
                      for (int64_t c = 0; c < cols; ++c) {
                        const float vhat = vd[r * cols + c] / norm;
                        gv[r * cols + c] +=
                            k * (o.grad[r * cols + c] -
                                 static_cast<float>(dot) * vhat);
                      }
                    }
                  }
                });
}

}  // namespace nhsg::ops
