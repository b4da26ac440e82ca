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

#include "nhsg/numerics/parameters.h"

#include <cmath>
#include <unordered_map>

#include "nhsg/binary_io.h"
#include "nhsg/errors.h"

namespace nhsg {
namespace {

constexpr char kMagic[] = "NHCK";
constexpr uint32_t kVersion = 1;
constexpr uint32_t kMaxRank = 8;

}  // namespace

Tensor ParameterStore::Add(const std::string& name, Tensor value) {
  value.set_requires_grad(true);
  return AddBuffer(name, std::move(value));
}

Tensor ParameterStore::AddBuffer(const std::string& name, Tensor value) {
  if (name.empty()) throw ConfigError("parameter name is empty");
  if (Has(name)) throw ConfigError("duplicate parameter name: " + name);
  index_.emplace(name, entries_.size());
  entries_.emplace_back(name, value);
  return value;
}

bool ParameterStore::Has(const std::string& name) const {
  return index_.count(name) > 0;
}

const Tensor& ParameterStore::Get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw StructureError("missing parameter: " + name);
  return entries_[it->second].second;
}

int64_t ParameterStore::NumScalars() const {
  int64_t n = 0;
  for (const auto& [name, t] : entries_) n += t.numel();
  return n;
}

void ParameterStore::ZeroGrad() {
  for (auto& [name, t] : entries_) t.ZeroGrad();
}

bool ParameterStore::AllFinite() const {
  for (const auto& [name, t] : entries_) {
    for (float v : t.storage()) {
      if (!std::isfinite(v)) return false;
    }
  }
  return true;
}

void ParameterStore::AssignFrom(const ParameterStore& other,
                                const std::string& skip_prefix) {
  auto skipped = [&](const std::string& n) {
    return !skip_prefix.empty() && n.rfind(skip_prefix, 0) == 0;
  };
  std::unordered_map<std::string, const Tensor*> theirs;
  for (const auto& [n, t] : other.entries()) {
    if (!skipped(n)) theirs[n] = &t;
  }
  size_t ours = 0;
  for (const auto& [n, t] : entries_) {
    if (skipped(n)) continue;
    ++ours;
    auto it = theirs.find(n);
    if (it == theirs.end()) throw StructureError("checkpoint lacks " + n);
    if (it->second->shape() != t.shape()) {
      throw StructureError(n + ": shape " + ShapeToString(it->second->shape()) +
                           " vs model " + ShapeToString(t.shape()));
    }
  }
  if (ours != theirs.size()) {
    throw StructureError("checkpoint has " + std::to_string(theirs.size()) +
                         " parameters, model has " + std::to_string(ours));
  }
  for (auto& [n, t] : entries_) {
    if (skipped(n)) continue;
    t.storage() = theirs[n]->storage();
  }
  step = other.step;
}

void SaveParams(const ParameterStore& store, const std::string& path) {
  io::BinaryWriter w(path);
  w.Magic(kMagic);
  w.Pod<uint32_t>(kVersion);
  w.Pod<uint32_t>(static_cast<uint32_t>(store.size()));
  w.Pod<int64_t>(store.step);
  for (const auto& [name, t] : store.entries()) {
    w.String(name);
    w.Pod<uint32_t>(static_cast<uint32_t>(t.rank()));
    for (int d : t.shape()) w.Pod<uint32_t>(static_cast<uint32_t>(d));
    w.Array(t.storage().data(), t.storage().size());
  }
  w.Close();
}

ParameterStore LoadParams(const std::string& path) {
  io::BinaryReader r(path);
  r.ExpectHeader(kMagic, kVersion);
  const uint32_t n = r.Pod<uint32_t>();
  ParameterStore store;
  store.step = r.Pod<int64_t>();
  for (uint32_t i = 0; i < n; ++i) {
    std::string name = r.String();
    const uint32_t rank = r.Pod<uint32_t>();
    if (rank == 0 || rank > kMaxRank) {
      throw FormatError(path + ": bad rank for " + name);
    }
    Shape shape(rank);
    for (auto& d : shape) {
      const uint32_t v = r.Pod<uint32_t>();
      if (v == 0 || v > (1u << 30)) throw FormatError(path + ": bad dim");
      d = static_cast<int>(v);
    }
    const int64_t count = NumElements(shape);
    if (count > (int64_t{1} << 31)) throw FormatError(path + ": too large");
    std::vector<float> data = r.Array<float>(static_cast<size_t>(count));
    try {
      store.AddBuffer(name, Tensor(std::move(shape), std::move(data)));
    } catch (const ConfigError& e) {
      throw FormatError(path + ": " + e.what());
    }
  }
  if (!r.AtEnd()) throw FormatError(path + ": trailing bytes");
  return store;
}

}  // namespace nhsg
