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

#include "nhsg/numerics/optimizer.h"

#include <cmath>
#include <string>

#include "nhsg/errors.h"

namespace nhsg {

void ValidateOptimizerConfig(const OptimizerConfig& c) {
  if (!(c.lr >= 0.0) || !std::isfinite(c.lr)) throw ConfigError("lr < 0");
  if (!(c.beta1 >= 0.0 && c.beta1 < 1.0)) throw ConfigError("beta1 not in [0,1)");
  if (!(c.beta2 >= 0.0 && c.beta2 < 1.0)) throw ConfigError("beta2 not in [0,1)");
  if (!(c.eps > 0.0)) throw ConfigError("eps must be > 0");
  if (!(c.weight_decay >= 0.0)) throw ConfigError("weight_decay < 0");
  if (c.warmup_steps < 0) throw ConfigError("warmup_steps < 0");
  if (!(c.decay_gamma > 0.0 && c.decay_gamma <= 1.0)) {
    throw ConfigError("decay_gamma not in (0,1]");
  }
  if (c.decay_every < 1) throw ConfigError("decay_every < 1");
}

Optimizer::Optimizer(ParameterStore* store, OptimizerConfig config)
    : store_(store), config_(config) {
  ValidateOptimizerConfig(config_);
  for (const auto& [name, t] : store_->entries()) {
    m_.emplace_back(t.numel(), 0.0f);
    v_.emplace_back(t.numel(), 0.0f);
  }
}

double Optimizer::LrAt(int64_t step) const {
  if (step < config_.warmup_steps) {
    return config_.lr * static_cast<double>(step + 1) /
           static_cast<double>(config_.warmup_steps);
  }
  const int64_t decays = (step - config_.warmup_steps) / config_.decay_every;
  return config_.lr * std::pow(config_.decay_gamma, static_cast<double>(decays));
}

double Optimizer::ClipAt(int64_t step) const {
  if (step < config_.warmup_steps && config_.warmup_clip_norm > 0.0) {
    return config_.warmup_clip_norm;
  }
  return config_.clip_norm;
}

double Optimizer::CurrentLr() const { return LrAt(store_->step); }

double Optimizer::Step() {
  const auto& entries = store_->entries();
  if (entries.size() != m_.size()) {
    throw StructureError("parameter store changed after optimizer creation");
  }
  double sq = 0.0;
  for (const auto& [name, t] : entries) {
    for (float g : t.grad()) sq += static_cast<double>(g) * g;
  }
  const double norm = std::sqrt(sq);
  if (!std::isfinite(norm)) {
    ++skipped_;
    throw NumericsError("non-finite gradient norm at step " +
                        std::to_string(store_->step) + " (skipped " +
                        std::to_string(skipped_) + ")");
  }
  const double clip = ClipAt(store_->step);
  const double coef = (clip > 0.0 && norm > clip) ? clip / norm : 1.0;
  const double lr = LrAt(store_->step);
  const double t = static_cast<double>(store_->step + 1);
  const double bc1 = 1.0 - std::pow(config_.beta1, t);
  const double bc2 = 1.0 - std::pow(config_.beta2, t);
  const bool decoupled = config_.kind == OptimizerKind::kAdamW;
  const double wd = config_.weight_decay;

  // Stage everything first so a bad update leaves the store untouched.
  std::vector<std::vector<float>> new_p(entries.size()), new_m(entries.size()),
      new_v(entries.size());
  for (size_t k = 0; k < entries.size(); ++k) {
    const Tensor& p = entries[k].second;
    const auto& data = p.storage();
    auto grad = p.grad();
    const size_t n = data.size();
    new_p[k].resize(n);
    new_m[k].resize(n);
    new_v[k].resize(n);
    for (size_t i = 0; i < n; ++i) {
      const double w = data[i];
      double g = grad.empty() ? 0.0 : grad[i] * coef;
      if (!decoupled && wd > 0.0) g += wd * w;
      const double m = config_.beta1 * m_[k][i] + (1.0 - config_.beta1) * g;
      const double v = config_.beta2 * v_[k][i] + (1.0 - config_.beta2) * g * g;
      double nw = w;
      if (decoupled && wd > 0.0) nw -= lr * wd * w;
      nw -= lr * (m / bc1) / (std::sqrt(v / bc2) + config_.eps);
      if (!std::isfinite(nw)) {
        ++skipped_;
        throw NumericsError("non-finite update for " + entries[k].first);
      }
      new_p[k][i] = static_cast<float>(nw);
      new_m[k][i] = static_cast<float>(m);
      new_v[k][i] = static_cast<float>(v);
    }
  }
  for (size_t k = 0; k < entries.size(); ++k) {
    Tensor p = entries[k].second;
    p.storage() = std::move(new_p[k]);
    m_[k] = std::move(new_m[k]);
    v_[k] = std::move(new_v[k]);
  }
  ++store_->step;
  return norm;
}

void Optimizer::ExportState(ParameterStore* out) const {
  const auto& entries = store_->entries();
  for (size_t k = 0; k < entries.size(); ++k) {
    const Shape& shape = entries[k].second.shape();
    out->AddBuffer("__opt/m/" + entries[k].first, Tensor(shape, m_[k]));
    out->AddBuffer("__opt/v/" + entries[k].first, Tensor(shape, v_[k]));
  }
}

void Optimizer::ImportState(const ParameterStore& in) {
  const auto& entries = store_->entries();
  for (size_t k = 0; k < entries.size(); ++k) {
    const std::string mk = "__opt/m/" + entries[k].first;
    const std::string vk = "__opt/v/" + entries[k].first;
    if (!in.Has(mk) || !in.Has(vk)) continue;
    const Tensor& m = in.Get(mk);
    const Tensor& v = in.Get(vk);
    if (m.shape() != entries[k].second.shape() ||
        v.shape() != entries[k].second.shape()) {
      throw StructureError("optimizer state shape mismatch for " +
                           entries[k].first);
    }
    m_[k] = m.storage();
    v_[k] = v.storage();
  }
}

}  // namespace nhsg
