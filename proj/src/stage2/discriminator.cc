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

#include "nhsg/stage2/discriminator.h"

#include <algorithm>
#include <random>

#include "nhsg/dsp/spectral.h"
#include "nhsg/errors.h"
#include "nhsg/numerics/layers.h"
#include "nhsg/numerics/ops.h"

namespace nhsg::stage2 {
namespace {

constexpr float kSlope = 0.1f;
constexpr float kLogFloor = 1e-5f;

std::string PeriodName(size_t p, size_t layer) {
  return "mpd." + std::to_string(p) + "." + std::to_string(layer);
}
std::string BandName(size_t s, size_t b, size_t layer) {
  return "mbd." + std::to_string(s) + "." + std::to_string(b) + "." +
         std::to_string(layer);
}

void AddConv(ParameterStore& p, const std::string& prefix, int out, int in,
             int k, std::mt19937_64& rng) {
  nn::FanIn(p, prefix + ".w", {out, in, k}, rng);
  nn::Constant(p, prefix + ".b", {out}, 0.0f);
}

struct BandLayer {
  int stride, dilation;
};
// Kernel 3 everywhere.
constexpr BandLayer kBandLayers[] = {{1, 1}, {1, 2}, {2, 1}, {1, 1}};

}  // namespace

void ValidateDiscriminatorConfig(const DiscriminatorConfig& c) {
  if (c.periods.empty() && c.stft_sizes.empty()) {
    throw ConfigError("discriminator: no branches");
  }
  for (size_t i = 0; i < c.periods.size(); ++i) {
    const int p = c.periods[i];
    bool prime = p >= 2;
    for (int d = 2; d * d <= p && prime; ++d) prime = p % d != 0;
    if (!prime) throw ConfigError("discriminator: period " + std::to_string(p) + " is not prime");
    for (size_t j = 0; j < i; ++j) {
      if (c.periods[j] == p) throw ConfigError("discriminator: repeated period");
    }
  }
  for (int n : c.stft_sizes) {
    if (n < 8 || (n & (n - 1)) != 0) {
      throw ConfigError("discriminator: stft sizes must be powers of two >= 8");
    }
  }
  if (c.period_channels.empty() || c.period_kernel < 1 || c.period_stride < 1) {
    throw ConfigError("discriminator: bad period branch geometry");
  }
  if (c.n_bands < 1 || c.band_channels < 1) {
    throw ConfigError("discriminator: bad band branch geometry");
  }
}

int64_t DiscriminatorParamCount(const DiscriminatorConfig& c) {
  int64_t n = 0;
  for (size_t p = 0; p < c.periods.size(); ++p) {
    int64_t in = 1;
    for (int out : c.period_channels) {
      n += out * in * c.period_kernel + out;
      in = out;
    }
    n += in * 3 + 1;
  }
  const int64_t ch = c.band_channels;
  for (int fft : c.stft_sizes) {
    const auto edges = dsp::SubbandEdges(fft / 2 + 1, c.n_bands);
    for (int b = 0; b < c.n_bands; ++b) {
      const int64_t width = edges[b + 1] - edges[b];
      n += ch * width * 3 + ch;
      n += 2 * (ch * ch * 3 + ch);
      n += ch * 3 + 1;
    }
  }
  return n;
}

DiscOutput DetachOutput(const DiscOutput& d) {
  DiscOutput out;
  for (const auto& s : d.scores) out.scores.push_back(s.Detach());
  for (const auto& fs : d.features) {
    std::vector<Tensor> row;
    for (const auto& f : fs) row.push_back(f.Detach());
    out.features.push_back(std::move(row));
  }
  return out;
}

Discriminator::Discriminator(DiscriminatorConfig cfg) : cfg_(std::move(cfg)) {
  ValidateDiscriminatorConfig(cfg_);
  std::mt19937_64 rng(cfg_.seed);
  for (size_t p = 0; p < cfg_.periods.size(); ++p) {
    int in = 1;
    for (size_t l = 0; l < cfg_.period_channels.size(); ++l) {
      AddConv(params_, PeriodName(p, l), cfg_.period_channels[l], in,
              cfg_.period_kernel, rng);
      in = cfg_.period_channels[l];
    }
    AddConv(params_, PeriodName(p, cfg_.period_channels.size()), 1, in, 3, rng);
  }
  for (size_t s = 0; s < cfg_.stft_sizes.size(); ++s) {
    const auto edges = dsp::SubbandEdges(cfg_.stft_sizes[s] / 2 + 1, cfg_.n_bands);
    for (int b = 0; b < cfg_.n_bands; ++b) {
      int in = edges[b + 1] - edges[b];
      const size_t n = std::size(kBandLayers);
      for (size_t l = 0; l < n; ++l) {
        const int out = l + 1 == n ? 1 : cfg_.band_channels;
        AddConv(params_, BandName(s, b, l), out, in, 3, rng);
        in = out;
      }
    }
  }
}

size_t Discriminator::num_branches() const {
  return cfg_.periods.size() + cfg_.stft_sizes.size() * cfg_.n_bands;
}

int Discriminator::min_length() const {
  int m = 1;
  for (int p : cfg_.periods) m = std::max(m, p);
  for (int n : cfg_.stft_sizes) m = std::max(m, n / 2 + 1);
  return m;
}

void Discriminator::PeriodBranch(size_t index, const Tensor& signal,
                                 DiscOutput& out) const {
  const int p = cfg_.periods[index];
  const int len = signal.dim(0);
  const int rows = (len + p - 1) / p;
  // Reflect the tail up to a multiple of p, then lay columns out as batch.
  std::vector<int> idx(static_cast<size_t>(rows) * p);
  for (int j = 0; j < p; ++j) {
    for (int i = 0; i < rows; ++i) {
      int n = i * p + j;
      if (n >= len) n = 2 * (len - 1) - n;
      idx[static_cast<size_t>(j) * rows + i] = std::max(n, 0);
    }
  }
  Tensor x = ops::Gather(signal, idx, {p, 1, rows});
  std::vector<Tensor> feats;
  const size_t n = cfg_.period_channels.size();
  for (size_t l = 0; l <= n; ++l) {
    const std::string name = PeriodName(index, l);
    const bool last = l == n;
    const int k = last ? 3 : cfg_.period_kernel;
    const int stride = (last || l + 1 == n) ? 1 : cfg_.period_stride;
    x = ops::Conv1d(x, params_.Get(name + ".w"), params_.Get(name + ".b"), stride,
                    (k - 1) / 2);
    feats.push_back(x);
    if (!last) x = ops::LeakyRelu(x, kSlope);
  }
  out.scores.push_back(ops::Reshape(x, {static_cast<int>(x.numel())}));
  out.features.push_back(std::move(feats));
}

void Discriminator::BandBranches(size_t scale, const Tensor& signal,
                                 DiscOutput& out) const {
  const int fft = cfg_.stft_sizes[scale];
  Tensor mag = ops::LogClamp(ops::StftMagnitude(signal, fft, fft / 4, fft), kLogFloor);
  const int frames = mag.dim(0), bins = mag.dim(1);
  const auto edges = dsp::SubbandEdges(bins, cfg_.n_bands);
  for (int b = 0; b < cfg_.n_bands; ++b) {
    const int lo = edges[b], width = edges[b + 1] - edges[b];
    // [1, width, frames] taken straight from [frames, bins].
    std::vector<int> idx(static_cast<size_t>(width) * frames);
    for (int c = 0; c < width; ++c) {
      for (int t = 0; t < frames; ++t) {
        idx[static_cast<size_t>(c) * frames + t] = t * bins + lo + c;
      }
    }
    Tensor x = ops::Gather(mag, idx, {1, width, frames});
    std::vector<Tensor> feats;
    const size_t n = std::size(kBandLayers);
    for (size_t l = 0; l < n; ++l) {
      const std::string name = BandName(scale, b, l);
      const BandLayer g = kBandLayers[l];
      x = ops::Conv1d(x, params_.Get(name + ".w"), params_.Get(name + ".b"), g.stride,
                      g.dilation, g.dilation);
      feats.push_back(x);
      if (l + 1 < n) x = ops::LeakyRelu(x, kSlope);
    }
    out.scores.push_back(ops::Reshape(x, {static_cast<int>(x.numel())}));
    out.features.push_back(std::move(feats));
  }
}

DiscOutput Discriminator::Forward(const Tensor& signal) const {
  if (signal.shape().size() != 1) throw ShapeError("discriminator expects a 1-D signal");
  if (signal.dim(0) < min_length()) {
    throw TooShortError("discriminator input has " + std::to_string(signal.dim(0)) +
                        " samples, needs at least " + std::to_string(min_length()));
  }
  DiscOutput out;
  for (size_t p = 0; p < cfg_.periods.size(); ++p) PeriodBranch(p, signal, out);
  for (size_t s = 0; s < cfg_.stft_sizes.size(); ++s) BandBranches(s, signal, out);
  return out;
}

}  // namespace nhsg::stage2
