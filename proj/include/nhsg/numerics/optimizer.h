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

#ifndef NHSG_NUMERICS_OPTIMIZER_H_
#define NHSG_NUMERICS_OPTIMIZER_H_

#include <cstdint>
#include <vector>

#include "nhsg/numerics/parameters.h"

namespace nhsg {

enum class OptimizerKind { kAdam, kAdamW };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::kAdam;
  double lr = 5e-4;  // peak
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  // Adam: L2 term added to the gradient. AdamW: decoupled, p -= lr*wd*p.
  double weight_decay = 0.0;
  int64_t warmup_steps = 0;
  double decay_gamma = 0.999;  // applied once per decay_every steps
  int64_t decay_every = 1000;
  double clip_norm = 0.0;         // <= 0 disables
  double warmup_clip_norm = 0.0;  // used during warmup; <= 0 means clip_norm
};

void ValidateOptimizerConfig(const OptimizerConfig& config);

// Adam / AdamW over every tensor in a ParameterStore. The store's step
// counter drives the schedule and bias correction.
class Optimizer {
 public:
  Optimizer(ParameterStore* store, OptimizerConfig config);

  // Global-norm clip, update, schedule advance. Returns the pre-clip norm.
  // Non-finite gradients (or an update that would produce non-finite
  // values) throw NumericsError with parameters untouched and the step
  // counted as skipped.
  double Step();

  // Learning rate the next Step() will use.
  double CurrentLr() const;
  double LrAt(int64_t step) const;
  double ClipAt(int64_t step) const;
  int64_t skipped() const { return skipped_; }
  const OptimizerConfig& config() const { return config_; }

  // Moment buffers as "__opt/m/<name>" and "__opt/v/<name>" entries, for
  // writing next to the model parameters.
  void ExportState(ParameterStore* out) const;
  // Restores moments when present; missing state leaves zeros.
  void ImportState(const ParameterStore& in);

 private:
  ParameterStore* store_;
  OptimizerConfig config_;
  std::vector<std::vector<float>> m_;
  std::vector<std::vector<float>> v_;
  int64_t skipped_ = 0;
};

}  // namespace nhsg

#endif  // NHSG_NUMERICS_OPTIMIZER_H_
