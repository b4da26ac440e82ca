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

#ifndef NHSG_NUMERICS_PARAMETERS_H_
#define NHSG_NUMERICS_PARAMETERS_H_

#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "nhsg/numerics/tensor.h"

namespace nhsg {

// Insertion-ordered named parameters plus the global step counter.
class ParameterStore {
 public:
  // Registers a trainable tensor (requires_grad is forced on). Duplicate
  // names throw ConfigError.
  Tensor Add(const std::string& name, Tensor value);
  // Same, but the tensor keeps its requires_grad flag (optimizer state,
  // buffers).
  Tensor AddBuffer(const std::string& name, Tensor value);

  bool Has(const std::string& name) const;
  // Throws StructureError when missing.
  const Tensor& Get(const std::string& name) const;

  const std::vector<std::pair<std::string, Tensor>>& entries() const {
    return entries_;
  }
  size_t size() const { return entries_.size(); }
  int64_t NumScalars() const;
  void ZeroGrad();
  bool AllFinite() const;

  // Copies values from `other`, which must hold exactly the same names and
  // shapes (entries whose name starts with `skip_prefix` are ignored on
  // both sides). Mismatch throws StructureError and leaves this untouched.
  void AssignFrom(const ParameterStore& other,
                  const std::string& skip_prefix = "__");

  int64_t step = 0;

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
  std::unordered_map<std::string, size_t> index_;
};

// Binary checkpoint ("NHCK"): header, then per parameter the name, rank,
// dims and float32 data. Values round-trip bit-exactly.
void SaveParams(const ParameterStore& store, const std::string& path);
ParameterStore LoadParams(const std::string& path);

}  // namespace nhsg

#endif  // NHSG_NUMERICS_PARAMETERS_H_
