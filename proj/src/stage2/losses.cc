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

#include "nhsg/stage2/losses.h"

#include <map>
#include <mutex>
#include <tuple>
#include <utility>

#include "nhsg/dsp/spectral.h"
#include "nhsg/errors.h"
#include "nhsg/numerics/ops.h"

namespace nhsg::stage2 {
namespace {

// Filterbanks are fixed per (rate, fft, mels); build each once.
const Tensor& MelBank(int sr, int fft, int mels) {
  static std::mutex mu;
  static std::map<std::tuple<int, int, int>, Tensor> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto key = std::make_tuple(sr, fft, mels);
  auto it = cache.find(key);
  if (it == cache.end()) {
    Matrix m = dsp::MelFilterbank(sr, fft, mels, 0.0, sr / 2.0);
    std::vector<float> data(m.rows() * m.cols());
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        data[r * m.cols() + c] = static_cast<float>(m(r, c));
      }
    }
    it = cache.emplace(key, Tensor({static_cast<int>(m.rows()), static_cast<int>(m.cols())},
                                   std::move(data)))
             .first;
  }
  return it->second;
}

Tensor LogMel(const Tensor& x, int sr, const MelScale& s) {
  Tensor mag = ops::StftMagnitude(x, s.fft_size, s.fft_size / 4, s.fft_size);
  return ops::LogClamp(ops::Linear(mag, MelBank(sr, s.fft_size, s.n_mels)),
                       static_cast<float>(dsp::kLogMelFloor));
}

void CheckPaired(const DiscOutput& a, const DiscOutput& b) {
  if (a.scores.size() != b.scores.size() || a.features.size() != b.features.size() ||
      a.features.size() != a.scores.size()) {
    throw ShapeError("discriminator outputs differ in branch count");
  }
}

}  // namespace

Tensor MultiScaleMelLoss(const Tensor& real, const Tensor& fake,
                         const MelLossConfig& cfg) {
  if (real.shape() != fake.shape()) throw ShapeError("mel loss: length mismatch");
  if (cfg.scales.empty()) throw ConfigError("mel loss: no scales");
  Tensor total;
  for (const MelScale& s : cfg.scales) {
    Tensor target;
    {
      NoGradGuard guard;
      target = LogMel(real.Detach(), cfg.sample_rate, s);
    }
    Tensor term = ops::L1Loss(LogMel(fake, cfg.sample_rate, s), target);
    total = total.defined() ? ops::Add(total, term) : term;
  }
  return total;
}

void ValidateGanLossWeights(const GanLossWeights& w) {
  if (!(w.adv >= 0) || !(w.fm >= 0) || !(w.mel >= 0)) {
    throw ConfigError("gan loss weights must be non-negative");
  }
}

Tensor DiscriminatorAdvLoss(const DiscOutput& real, const DiscOutput& fake,
                            GanObjective objective) {
  CheckPaired(real, fake);
  Tensor total({1}, 0.0f);
  for (size_t b = 0; b < real.scores.size(); ++b) {
    const Tensor& r = real.scores[b];
    const Tensor& f = fake.scores[b];
    if (objective == GanObjective::kHinge) {
      // mean(relu(1 - r)) + mean(relu(1 + f))
      Tensor lr = ops::LeakyRelu(ops::AddScalar(ops::Scale(r, -1.0f), 1.0f), 0.0f);
      Tensor lf = ops::LeakyRelu(ops::AddScalar(f, 1.0f), 0.0f);
      total = ops::Add(ops::Add(total, ops::Mean(lr)), ops::Mean(lf));
    } else {
      total = ops::Add(total, ops::MseLoss(r, Tensor(r.shape(), 1.0f)));
      total = ops::Add(total, ops::MseLoss(f, Tensor(f.shape(), 0.0f)));
    }
  }
  return total;
}

Tensor GeneratorAdvLoss(const DiscOutput& fake, GanObjective objective) {
  Tensor total({1}, 0.0f);
  for (const Tensor& f : fake.scores) {
    if (objective == GanObjective::kHinge) {
      total = ops::Sub(total, ops::Mean(f));
    } else {
      total = ops::Add(total, ops::MseLoss(f, Tensor(f.shape(), 1.0f)));
    }
  }
  return total;
}

Tensor FeatureMatchingLoss(const DiscOutput& real, const DiscOutput& fake) {
  CheckPaired(real, fake);
  Tensor total({1}, 0.0f);
  int maps = 0;
  for (size_t b = 0; b < real.features.size(); ++b) {
    if (real.features[b].size() != fake.features[b].size()) {
      throw ShapeError("discriminator outputs differ in feature maps");
    }
    for (size_t l = 0; l < real.features[b].size(); ++l) {
      total = ops::Add(total, ops::L1Loss(fake.features[b][l], real.features[b][l].Detach()));
      ++maps;
    }
  }
  return maps == 0 ? total : ops::Scale(total, 1.0f / static_cast<float>(maps));
}

GanLossTerms CombineGanLosses(const DiscOutput& real, const DiscOutput& fake,
                              const Tensor& mel, const GanLossWeights& w) {
  ValidateGanLossWeights(w);
  GanLossTerms t;
  Tensor adv_g = GeneratorAdvLoss(fake, w.objective);
  Tensor fm = FeatureMatchingLoss(real, fake);
  t.generator = ops::Add(ops::Add(ops::Scale(adv_g, static_cast<float>(w.adv)),
                                  ops::Scale(fm, static_cast<float>(w.fm))),
                         ops::Scale(mel, static_cast<float>(w.mel)));
  t.discriminator = DiscriminatorAdvLoss(real, fake, w.objective);
  t.adv_g = adv_g.item();
  t.adv_d = t.discriminator.item();
  t.fm = fm.item();
  t.mel = mel.item();
  return t;
}

GanLossTerms GanLosses(const Tensor& real, const Tensor& fake,
                       const Discriminator& disc, const MelLossConfig& mel_cfg,
                       const GanLossWeights& w) {
  DiscOutput d_real = disc.Forward(real);
  DiscOutput d_fake = disc.Forward(fake);
  return CombineGanLosses(d_real, d_fake, MultiScaleMelLoss(real, fake, mel_cfg), w);
}

}  // namespace nhsg::stage2
