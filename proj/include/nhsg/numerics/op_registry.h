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

#ifndef NHSG_NUMERICS_OP_REGISTRY_H_
#define NHSG_NUMERICS_OP_REGISTRY_H_

#include <functional>
#include <random>
#include <string>
#include <vector>

#include "nhsg/numerics/tensor.h"

namespace nhsg::ops {

// A small, well-conditioned instance of one differentiable op. Inputs are
// kept away from the op's kinks so central differences are meaningful.
struct OpProbe {
  std::string name;
  std::function<std::vector<Tensor>(std::mt19937_64&)> make_inputs;
  std::function<Tensor(const std::vector<Tensor>&)> apply;
};

// Every differentiable op exposed by ops.h, one probe each.
const std::vector<OpProbe>& OpRegistry();

}  // namespace nhsg::ops

#endif  // NHSG_NUMERICS_OP_REGISTRY_H_
