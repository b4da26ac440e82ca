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

#ifndef NHSG_NUMERICS_OP_UTIL_H_
#define NHSG_NUMERICS_OP_UTIL_H_

#include <Eigen/Core>

#include <functional>
#include <string>
#include <vector>

#include "nhsg/errors.h"
#include "nhsg/numerics/tensor.h"

namespace nhsg::ops::internal {

using BackwardFn = std::function<void(TensorNode&)>;
using MatrixF =
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapF = Eigen::Map<MatrixF>;
using ConstMapF = Eigen::Map<const MatrixF>;

// Wraps forward values in a tensor, wiring the backward closure when any
// defined input requires a gradient and grad mode is on.
Tensor Finish(const char* op, Shape shape, std::vector<float> data,
              const std::vector<Tensor>& inputs, BackwardFn backward);

inline bool Needs(const TensorNode& out, size_t i) {
  return out.inputs[i]->requires_grad;
}

inline std::vector<float>& GradOf(TensorNode& out, size_t i) {
  out.inputs[i]->EnsureGrad();
  return out.inputs[i]->grad;
}

inline const std::vector<float>& DataOf(const TensorNode& out, size_t i) {
  return out.inputs[i]->data;
}

[[noreturn]] inline void ShapeFail(const char* op, const std::string& what) {
  throw ShapeError(std::string(op) + ": " + what);
}

inline void RequireRank(const char* op, const Tensor& t, int rank) {
  if (!t.defined() || t.rank() != rank) {
    ShapeFail(op, "expected rank " + std::to_string(rank) + ", got " +
                      (t.defined() ? ShapeToString(t.shape()) : "undefined"));
  }
}

}  // namespace nhsg::ops::internal

#endif  // NHSG_NUMERICS_OP_UTIL_H_
