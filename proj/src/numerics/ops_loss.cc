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
#include <complex>
#include <map>
#include <memory>

#include "nhsg/dsp/spectral.h"
#include "nhsg/numerics/ops.h"
#include "src/numerics/op_util.h"

namespace nhsg::ops {

using namespace internal;  // NOLINT

namespace {

std::vector<float> CheckMask(const char* op, const Tensor& a,
                             const std::vector<float>& mask, double* count) {
  std::vector<float> m = mask;
  if (m.empty()) m.assign(a.numel(), 1.0f);
  if (static_cast<int64_t>(m.size()) != a.numel()) {
    ShapeFail(op, "mask length differs from input");
  }
  *count = 0.0;
  for (float v : m) *count += v;
  return m;
}

template <typename Loss, typename Derivative>
Tensor Elementwise(const char* op, const Tensor& a, const Tensor& b,
                   const std::vector<float>& mask, Loss loss, Derivative dloss) {
  if (a.shape() != b.shape()) {
    ShapeFail(op, ShapeToString(a.shape()) + " vs " + ShapeToString(b.shape()));
  }
  double count = 0.0;
  auto m = std::make_shared<std::vector<float>>(CheckMask(op, a, mask, &count));
  double total = 0.0;
  const auto& ad = a.storage();
  const auto& bd = b.storage();
  for (size_t i = 0; i < ad.size(); ++i) {
    if ((*m)[i] != 0.0f) total += (*m)[i] * loss(ad[i] - bd[i]);
  }
  const float value = count > 0.0 ? static_cast<float>(total / count) : 0.0f;
  return Finish(op, {1}, {value}, {a, b}, [m, count, dloss](TensorNode& o) {
    if (count <= 0.0) return;
    const auto& ad = DataOf(o, 0);
    const auto& bd = DataOf(o, 1);
    const float scale = static_cast<float>(o.grad[0] / count);
    for (size_t i = 0; i < ad.size(); ++i) {
      if ((*m)[i] == 0.0f) continue;
      const float d = (*m)[i] * scale * dloss(ad[i] - bd[i]);
      if (Needs(o, 0)) GradOf(o, 0)[i] += d;
      if (Needs(o, 1)) GradOf(o, 1)[i] -= d;
    }
  });
}

// One cached FFT per size and thread.
dsp::RealFft& CachedFft(int size) {
  thread_local std::map<int, std::unique_ptr<dsp::RealFft>> cache;
  auto& slot = cache[size];
  if (!slot) slot = std::make_unique<dsp::RealFft>(size);
  return *slot;
}

}  // namespace

Tensor L1Loss(const Tensor& a, const Tensor& b, const std::vector<float>& mask) {
  return Elementwise(
      "l1_loss", a, b, mask, [](double d) { return std::abs(d); },
      [](float d) { return d > 0.0f ? 1.0f : (d < 0.0f ? -1.0f : 0.0f); });
}

Tensor MseLoss(const Tensor& a, const Tensor& b,
               const std::vector<float>& mask) {
  return Elementwise(
      "mse_loss", a, b, mask, [](double d) { return d * d; },
      [](float d) { return 2.0f * d; });
}

Tensor CrossEntropy(const Tensor& logits, const std::vector<int>& targets,
                    int ignore_index) {
  RequireRank("cross_entropy", logits, 2);
  const int rows = logits.dim(0), classes = logits.dim(1);
  if (static_cast<int>(targets.size()) != rows) {
    ShapeFail("cross_entropy", "one target per row required");
  }
  auto probs = std::make_shared<std::vector<float>>(logits.numel());
  double total = 0.0;
  int count = 0;
  const auto& ld = logits.storage();
  for (int r = 0; r < rows; ++r) {
    const float* z = ld.data() + static_cast<size_t>(r) * classes;
    float* p = probs->data() + static_cast<size_t>(r) * classes;
    const float mx = *std::max_element(z, z + classes);
    double sum = 0.0;
    for (int c = 0; c < classes; ++c) sum += std::exp(static_cast<double>(z[c] - mx));
    for (int c = 0; c < classes; ++c) {
      p[c] = static_cast<float>(std::exp(static_cast<double>(z[c] - mx)) / sum);
    }
    const int t = targets[r];
    if (t == ignore_index) continue;
    if (t < 0 || t >= classes) ShapeFail("cross_entropy", "target out of range");
    total += std::log(sum) + mx - z[t];
    ++count;
  }
  const float value = count ? static_cast<float>(total / count) : 0.0f;
  auto tg = std::make_shared<std::vector<int>>(targets);
  return Finish("cross_entropy", {1}, {value}, {logits},
                [=](TensorNode& o) {
                  if (count == 0) return;
                  auto& g = GradOf(o, 0);
                  const float scale = o.grad[0] / count;
                  for (int r = 0; r < rows; ++r) {
                    const int t = (*tg)[r];
                    if (t == ignore_index) continue;
                    for (int c = 0; c < classes; ++c) {
                      const size_t i = static_cast<size_t>(r) * classes + c;
                      g[i] += scale * ((*probs)[i] - (c == t ? 1.0f : 0.0f));
                    }
                  }
                });
}

Tensor CosineSimilarity(const Tensor& a, const Tensor& b) {
  if (a.numel() != b.numel()) ShapeFail("cosine_similarity", "size mismatch");
  const auto& ad = a.storage();
  const auto& bd = b.storage();
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (size_t i = 0; i < ad.size(); ++i) {
    dot += static_cast<double>(ad[i]) * bd[i];
    na += static_cast<double>(ad[i]) * ad[i];
    nb += static_cast<double>(bd[i]) * bd[i];
  }
  na = std::sqrt(na);
  nb = std::sqrt(nb);
  if (na <= 0.0 || nb <= 0.0) {
    throw NumericsError("cosine_similarity: zero-norm input");
  }
  const double cosv = dot / (na * nb);
  return Finish("cosine_similarity", {1}, {static_cast<float>(cosv)}, {a, b},
                [na, nb, cosv](TensorNode& o) {
                  const auto& ad = DataOf(o, 0);
                  const auto& bd = DataOf(o, 1);
                  const double g = o.grad[0];
                  for (size_t i = 0; i < ad.size(); ++i) {
                    if (Needs(o, 0)) {
                      GradOf(o, 0)[i] += static_cast<float>(
                          g * (bd[i] / (na * nb) - cosv * ad[i] / (na * na)));
                    }
                    if (Needs(o, 1)) {
                      GradOf(o, 1)[i] += static_cast<float>(
                          g * (ad[i] / (na * nb) - cosv * bd[i] / (nb * nb)));
                    }
                  }
                });
}

Tensor StftMagnitude(const Tensor& signal, int fft_size, int hop, int win) {
  if (hop < 1 || win < hop || fft_size < win) {
    ShapeFail("stft_magnitude", "need 1 <= hop <= win <= fft_size");
  }
  const long len = static_cast<long>(signal.numel());
  const int frames = static_cast<int>(len / hop) + 1;
  const int bins = fft_size / 2 + 1;
  const int offset = (fft_size - win) / 2;
  auto window = std::make_shared<std::vector<double>>(dsp::HannWindow(win));
  // Keep complex spectra for the backward pass.
  auto spectra = std::make_shared<std::vector<std::complex<double>>>(
      static_cast<size_t>(frames) * bins);

  dsp::RealFft& fft = CachedFft(fft_size);
  std::vector<double> buf(fft_size);
  std::vector<float> out(static_cast<size_t>(frames) * bins);
  const auto& xd = signal.storage();
  for (int t = 0; t < frames; ++t) {
    const long start = static_cast<long>(t) * hop - fft_size / 2 + offset;
    std::fill(buf.begin(), buf.end(), 0.0);
    for (int n = 0; n < win; ++n) {
      buf[offset + n] = (*window)[n] * xd[dsp::ReflectIndex(start + n, len)];
    }
    std::span<std::complex<double>> frame(
        spectra->data() + static_cast<size_t>(t) * bins, bins);
    fft.Forward(buf, frame);
    for (int k = 0; k < bins; ++k) {
      out[static_cast<size_t>(t) * bins + k] = static_cast<float>(std::abs(frame[k]));
    }
  }
  return Finish(
      "stft_magnitude", {frames, bins}, std::move(out), {signal},
      [=](TensorNode& o) {
        dsp::RealFft& fft = CachedFft(fft_size);
        auto& g = GradOf(o, 0);
        std::vector<std::complex<double>> half(bins);
        std::vector<double> du(fft_size);
        for (int t = 0; t < frames; ++t) {
          for (int k = 0; k < bins; ++k) {
            const std::complex<double> x =
                (*spectra)[static_cast<size_t>(t) * bins + k];
            const double m = std::abs(x);
            const double gk = o.grad[static_cast<size_t>(t) * bins + k];
            std::complex<double> y = m > 1e-12 ? gk * x / m : 0.0;
            if (k == 0 || k == fft_size / 2) {
              y = y.real();
            } else {
              y *= 0.5;
            }
            half[k] = y;
          }
          fft.Inverse(half, du);
          const long start = static_cast<long>(t) * hop - fft_size / 2 + offset;
          for (int n = 0; n < win; ++n) {
            g[dsp::ReflectIndex(start + n, len)] +=
                static_cast<float>((*window)[n] * du[offset + n]);
          }
        }
      });
}

}  // namespace nhsg::ops
