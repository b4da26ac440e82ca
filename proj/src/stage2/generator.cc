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

#include "nhsg/stage2/generator.h"

#include <algorithm>
#include <cmath>
#include <random>

#include "nhsg/errors.h"
#include "nhsg/numerics/layers.h"
#include "nhsg/numerics/ops.h"

namespace nhsg::stage2 {
namespace {

constexpr float kLogF0Center = 5.3f;
constexpr int kPrePostKernel = 7;

std::string Name(const std::string& a, size_t i) { return a + "." + std::to_string(i); }

void AddSnake(ParameterStore& p, const std::string& prefix, int channels) {
  nn::Constant(p, prefix + ".la", {channels}, 0.0f);
  nn::Constant(p, prefix + ".lb", {channels}, 0.0f);
}

Tensor Snake(const ParameterStore& p, const std::string& prefix, const Tensor& x) {
  return ops::SnakeBeta(x, p.Get(prefix + ".la"), p.Get(prefix + ".lb"));
}

void AddConv(ParameterStore& p, const std::string& prefix, int out, int in,
             int kernel, std::mt19937_64& rng, float gain) {
  nn::FanIn(p, prefix + ".w", {out, in, kernel}, rng, gain);
  nn::Constant(p, prefix + ".b", {out}, 0.0f);
}

Tensor Conv(const ParameterStore& p, const std::string& prefix, const Tensor& x,
            int dilation = 1) {
  const Tensor& w = p.Get(prefix + ".w");
  const int pad = dilation * (w.dim(2) - 1) / 2;
  return ops::Conv1d(x, w, p.Get(prefix + ".b"), 1, pad, dilation);
}

}  // namespace

int GeneratorConfig::hop() const {
  int h = 1;
  for (int u : upsample_factors) h *= u;
  return h;
}

int GeneratorConfig::channels(size_t stage) const {
  int c = base_channels;
  for (size_t i = 0; i < stage; ++i) c = std::max(min_channels, c / 2);
  return c;
}

void ValidateGeneratorConfig(const GeneratorConfig& c) {
  if (c.layer_ids.empty() || c.layer_ids.size() != c.token_vocab.size()) {
    throw ConfigError("generator: token_vocab must match layer_ids");
  }
  for (int k : c.token_vocab) {
    if (k < 1) throw ConfigError("generator: token vocab < 1");
  }
  if (c.token_dim < 1 || c.f0_dim < 1 || c.timbre_dim < 1) {
    throw ConfigError("generator: embedding dims must be positive");
  }
  if (c.upsample_factors.empty()) throw ConfigError("generator: no upsampling");
  for (int u : c.upsample_factors) {
    if (u < 1) throw ConfigError("generator: upsample factor < 1");
  }
  for (int k : c.resblock_kernels) {
    if (k < 1 || k % 2 == 0) throw ConfigError("generator: kernels must be odd");
  }
  for (int d : c.resblock_dilations) {
    if (d < 1) throw ConfigError("generator: dilation < 1");
  }
  if (c.base_channels < 1 || c.min_channels < 1) {
    throw ConfigError("generator: channels must be positive");
  }
  if (c.sample_rate < 1) throw ConfigError("generator: sample_rate < 1");
}

UpsampleGeometry UpsampleFor(int factor) {
  const int p = (factor + 1) / 2;
  return {factor + 2 * p, p};
}

int64_t GeneratorParamCount(const GeneratorConfig& c) {
  int64_t n = 0;
  for (int k : c.token_vocab) n += static_cast<int64_t>(k + 1) * c.token_dim;
  n += static_cast<int64_t>(c.layer_ids.size());
  n += static_cast<int64_t>(c.f0_dim) * 2 + c.f0_dim;
  n += static_cast<int64_t>(c.cond_dim()) * c.timbre_dim + c.cond_dim();
  n += static_cast<int64_t>(c.channels(0)) * c.cond_dim() * kPrePostKernel +
       c.channels(0);
  for (size_t i = 0; i < c.upsample_factors.size(); ++i) {
    const int64_t cin = c.channels(i), cout = c.channels(i + 1);
    n += cin * cout * UpsampleFor(c.upsample_factors[i]).kernel + cout;
    for (int k : c.resblock_kernels) {
      const int64_t per_dilation = 2 * (cout * cout * k + cout) + 4 * cout;
      n += per_dilation * static_cast<int64_t>(c.resblock_dilations.size());
    }
  }
  const int64_t last = c.channels(c.upsample_factors.size());
  n += 2 * last + last * kPrePostKernel + 1;
  return n;
}

Conditioning MakeConditioning(const representation::FrameRepresentation& z,
                              const std::vector<float>& embedding) {
  Conditioning c;
  c.tokens = z.tokens.tokens;
  c.voiced = z.f0.voiced;
  c.log_f0.resize(z.f0.num_frames(), 0.0f);
  for (int t = 0; t < z.f0.num_frames(); ++t) {
    if (c.voiced[t] && z.f0.f0_hz[t] > 0.0f) {
      c.log_f0[t] = std::log(z.f0.f0_hz[t]);
    } else {
      c.voiced[t] = false;
    }
  }
  c.embedding = embedding;
  return c;
}

Conditioning SliceConditioning(const Conditioning& c, int start, int count) {
  if (start < 0 || count < 1 || start + count > c.num_frames()) {
    throw ShapeError("conditioning slice out of range");
  }
  Conditioning s;
  for (const auto& seq : c.tokens) {
    s.tokens.emplace_back(seq.begin() + start, seq.begin() + start + count);
  }
  s.log_f0.assign(c.log_f0.begin() + start, c.log_f0.begin() + start + count);
  s.voiced.assign(c.voiced.begin() + start, c.voiced.begin() + start + count);
  s.embedding = c.embedding;
  return s;
}

Generator::Generator(GeneratorConfig cfg) : cfg_(std::move(cfg)) {
  ValidateGeneratorConfig(cfg_);
  std::mt19937_64 rng(cfg_.seed);
  auto& p = params_;
  for (size_t l = 0; l < cfg_.token_vocab.size(); ++l) {
    nn::Normal(p, Name("emb", l), {cfg_.token_vocab[l] + 1, cfg_.token_dim}, 1.0f, rng);
  }
  nn::Constant(p, "layer_w", {static_cast<int>(cfg_.layer_ids.size())}, 0.0f);
  nn::AddLinear(p, "f0", 2, cfg_.f0_dim, rng);
  nn::AddLinear(p, "timbre", cfg_.timbre_dim, cfg_.cond_dim(), rng, 0.5f);
  AddConv(p, "pre", cfg_.channels(0), cfg_.cond_dim(), kPrePostKernel, rng, 1.0f);
  for (size_t i = 0; i < cfg_.upsample_factors.size(); ++i) {
    const int cin = cfg_.channels(i), cout = cfg_.channels(i + 1);
    const UpsampleGeometry g = UpsampleFor(cfg_.upsample_factors[i]);
    // Transposed-conv fan-in is cin * kernel / factor.
    const float stddev =
        1.0f / std::sqrt(static_cast<float>(cin) * g.kernel / cfg_.upsample_factors[i]);
    nn::Normal(p, Name("up", i) + ".w", {cin, cout, g.kernel}, stddev, rng);
    nn::Constant(p, Name("up", i) + ".b", {cout}, 0.0f);
    for (size_t j = 0; j < cfg_.resblock_kernels.size(); ++j) {
      for (size_t m = 0; m < cfg_.resblock_dilations.size(); ++m) {
        const std::string r = Name(Name(Name("res", i), j), m);
        AddSnake(p, r + ".a1", cout);
        AddConv(p, r + ".c1", cout, cout, cfg_.resblock_kernels[j], rng, 0.5f);
        AddSnake(p, r + ".a2", cout);
        AddConv(p, r + ".c2", cout, cout, cfg_.resblock_kernels[j], rng, 0.5f);
      }
    }
  }
  const int last = cfg_.channels(cfg_.upsample_factors.size());
  AddSnake(p, "post.a", last);
  AddConv(p, "post", 1, last, kPrePostKernel, rng, 1.0f);
}

std::vector<float> Generator::LayerWeights() const {
  NoGradGuard guard;
  const Tensor& w = params_.Get("layer_w");
  Tensor s = ops::Softmax(ops::Reshape(w, {1, w.dim(0)}));
  return s.storage();
}

Tensor Generator::Condition(const Conditioning& c) const {
  const int frames = c.num_frames();
  if (frames < 1) throw ShapeError("conditioning has no frames");
  if (c.tokens.size() != cfg_.token_vocab.size()) {
    throw ShapeError("conditioning has " + std::to_string(c.tokens.size()) +
                     " token layers, generator expects " +
                     std::to_string(cfg_.token_vocab.size()));
  }
  if (static_cast<int>(c.embedding.size()) != cfg_.timbre_dim) {
    throw ShapeError("timbre embedding has " + std::to_string(c.embedding.size()) +
                     " dims, expected " + std::to_string(cfg_.timbre_dim));
  }
  if (static_cast<int>(c.voiced.size()) != frames) {
    throw ShapeError("voicing length differs from f0 length");
  }
  std::vector<Tensor> per_layer;
  for (size_t l = 0; l < c.tokens.size(); ++l) {
    if (static_cast<int>(c.tokens[l].size()) != frames) {
      throw ShapeError("token layer length differs from f0 length");
    }
    per_layer.push_back(ops::EmbeddingLookup(params_.Get(Name("emb", l)), c.tokens[l]));
  }
  const Tensor& w = params_.Get("layer_w");
  Tensor weights = ops::Reshape(ops::Softmax(ops::Reshape(w, {1, w.dim(0)})), {w.dim(0)});
  Tensor content = ops::Mix(per_layer, weights);

  std::vector<float> f0_in(static_cast<size_t>(frames) * 2);
  for (int t = 0; t < frames; ++t) {
    f0_in[2 * t] = c.voiced[t] ? c.log_f0[t] - kLogF0Center : 0.0f;
    f0_in[2 * t + 1] = c.voiced[t] ? 1.0f : 0.0f;
  }
  Tensor pitch = nn::ApplyLinear(params_, "f0", Tensor({frames, 2}, std::move(f0_in)));
  Tensor h = ops::Concat({content, pitch}, 1);
  Tensor e({1, cfg_.timbre_dim}, c.embedding);
  return ops::Add(h, nn::ApplyLinear(params_, "timbre", e));
}

Tensor Generator::ResBlock(const std::string& prefix, const Tensor& x) const {
  Tensor y = x;
  for (size_t m = 0; m < cfg_.resblock_dilations.size(); ++m) {
    const std::string r = Name(prefix, m);
    Tensor t = Snake(params_, r + ".a1", y);
    t = Conv(params_, r + ".c1", t, cfg_.resblock_dilations[m]);
    t = Snake(params_, r + ".a2", t);
    t = Conv(params_, r + ".c2", t, 1);
    y = ops::Add(y, t);
  }
  return y;
}

Tensor Generator::Forward(const Conditioning& c) const {
  Tensor h = nn::SeqToChannels(Condition(c));
  Tensor x = Conv(params_, "pre", h);
  for (size_t i = 0; i < cfg_.upsample_factors.size(); ++i) {
    const UpsampleGeometry g = UpsampleFor(cfg_.upsample_factors[i]);
    x = ops::ConvTranspose1d(ops::LeakyRelu(x, 0.1f), params_.Get(Name("up", i) + ".w"),
                             params_.Get(Name("up", i) + ".b"),
                             cfg_.upsample_factors[i], g.padding);
    std::vector<Tensor> branches;
    for (size_t j = 0; j < cfg_.resblock_kernels.size(); ++j) {
      branches.push_back(ResBlock(Name(Name("res", i), j), x));
    }
    const int nb = static_cast<int>(branches.size());
    x = ops::Mix(branches, Tensor({nb}, 1.0f / static_cast<float>(nb)));
  }
  x = Snake(params_, "post.a", x);
  x = ops::Tanh(Conv(params_, "post", x));
  return ops::Reshape(x, {x.dim(2)});
}

dsp::Waveform Generator::Vocode(const Conditioning& c) const {
  NoGradGuard guard;
  Tensor y = Forward(c);
  dsp::Waveform w;
  w.sample_rate = cfg_.sample_rate;
  w.samples = y.storage();
  return w;
}

}  // namespace nhsg::stage2
