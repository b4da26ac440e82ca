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

#ifndef NHSG_NUMERICS_TENSOR_H_
#define NHSG_NUMERICS_TENSOR_H_

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace nhsg {

using Shape = std::vector<int>;

int64_t NumElements(const Shape& shape);
std::string ShapeToString(const Shape& shape);

// Graph node. Non-leaf nodes keep their inputs alive until the output is
// released.
struct TensorNode {
  Shape shape;
  std::vector<float> data;
  std::vector<float> grad;  // empty until first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorNode>> inputs;
  // Reads this node's grad and accumulates into the inputs' grads.
  std::function<void(TensorNode&)> backward;
  const char* op = "leaf";

  void EnsureGrad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0f);
  }
};

// Shared-handle tensor: copies alias the same storage and graph node.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, float fill = 0.0f, bool requires_grad = false);
  Tensor(Shape shape, std::vector<float> data, bool requires_grad = false);
  explicit Tensor(std::shared_ptr<TensorNode> node) : node_(std::move(node)) {}

  static Tensor Scalar(float value, bool requires_grad = false);
  static Tensor Randn(Shape shape, float stddev, std::mt19937_64& rng,
                      bool requires_grad = false);
  static Tensor Uniform(Shape shape, float lo, float hi, std::mt19937_64& rng,
                        bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  // Negative axes count from the back.
  int dim(int axis) const;
  int64_t numel() const { return static_cast<int64_t>(node_->data.size()); }

  std::span<float> data() { return node_->data; }
  std::span<const float> data() const { return node_->data; }
  std::vector<float>& storage() { return node_->data; }
  const std::vector<float>& storage() const { return node_->data; }
  float item() const;
  float at(int64_t flat_index) const { return node_->data[flat_index]; }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool value) { node_->requires_grad = value; }
  bool has_grad() const { return !node_->grad.empty(); }
  // Zero-filled view allocation on first access.
  std::span<float> grad();
  std::span<const float> grad() const { return node_->grad; }
  void ZeroGrad();

  // Reverse-mode sweep from a scalar output (seed 1).
  void Backward();

  // Same values, no graph history, no gradient requirement.
  Tensor Detach() const;
  Tensor Clone(bool requires_grad = false) const;

  TensorNode* node() const { return node_.get(); }
  const std::shared_ptr<TensorNode>& node_ptr() const { return node_; }

 private:
  std::shared_ptr<TensorNode> node_;
};

// Graph construction is suppressed while an instance is alive on this
// thread.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool GradEnabled();

}  // namespace nhsg

#endif  // NHSG_NUMERICS_TENSOR_H_
