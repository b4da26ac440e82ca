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

#include "nhsg/numerics/tensor.h"

#include <numeric>
#include <sstream>
#include <unordered_set>

#include "nhsg/errors.h"

namespace nhsg {
namespace {

thread_local bool g_grad_enabled = true;

}  // namespace

int64_t NumElements(const Shape& shape) {
  int64_t n = 1;
  for (int d : shape) n *= d;
  return n;
}

std::string ShapeToString(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, float fill, bool requires_grad)
    : node_(std::make_shared<TensorNode>()) {
  for (int d : shape) {
    if (d <= 0) throw ShapeError("non-positive dimension in " +
                                 ShapeToString(shape));
  }
  node_->data.assign(NumElements(shape), fill);
  node_->shape = std::move(shape);
  node_->requires_grad = requires_grad;
}

Tensor::Tensor(Shape shape, std::vector<float> data, bool requires_grad)
    : node_(std::make_shared<TensorNode>()) {
  if (NumElements(shape) != static_cast<int64_t>(data.size())) {
    throw ShapeError("data length " + std::to_string(data.size()) +
                     " does not match shape " + ShapeToString(shape));
  }
  node_->shape = std::move(shape);
  node_->data = std::move(data);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::Scalar(float value, bool requires_grad) {
  return Tensor(Shape{1}, std::vector<float>{value}, requires_grad);
}

Tensor Tensor::Randn(Shape shape, float stddev, std::mt19937_64& rng,
                     bool requires_grad) {
  Tensor t(std::move(shape), 0.0f, requires_grad);
  std::normal_distribution<float> dist(0.0f, stddev);
  for (float& v : t.storage()) v = dist(rng);
  return t;
}

Tensor Tensor::Uniform(Shape shape, float lo, float hi, std::mt19937_64& rng,
                       bool requires_grad) {
  Tensor t(std::move(shape), 0.0f, requires_grad);
  std::uniform_real_distribution<float> dist(lo, hi);
  for (float& v : t.storage()) v = dist(rng);
  return t;
}

int Tensor::dim(int axis) const {
  const int r = rank();
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) throw ShapeError("axis out of range");
  return node_->shape[axis];
}

float Tensor::item() const {
  if (numel() != 1) {
    throw ShapeError("item() on tensor of shape " + ShapeToString(shape()));
  }
  return node_->data[0];
}

std::span<float> Tensor::grad() {
  node_->EnsureGrad();
  return node_->grad;
}

void Tensor::ZeroGrad() {
  if (!node_->grad.empty()) {
    std::fill(node_->grad.begin(), node_->grad.end(), 0.0f);
  }
}

void Tensor::Backward() {
  if (numel() != 1) throw ShapeError("Backward() needs a scalar output");
  if (!node_->requires_grad) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<TensorNode*> order;
  std::unordered_set<TensorNode*> visited;
  std::vector<std::pair<TensorNode*, size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      TensorNode* child = node->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) {
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  node_->EnsureGrad();
  node_->grad[0] += 1.0f;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorNode* node = *it;
    if (node->backward && !node->grad.empty()) node->backward(*node);
  }
}

Tensor Tensor::Detach() const { return Clone(false); }

Tensor Tensor::Clone(bool requires_grad) const {
  return Tensor(node_->shape, node_->data, requires_grad);
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) {
  g_grad_enabled = false;
}

NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool GradEnabled() { return g_grad_enabled; }

}  // namespace nhsg
