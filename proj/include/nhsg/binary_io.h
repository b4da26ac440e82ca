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

#ifndef NHSG_BINARY_IO_H_
#define NHSG_BINARY_IO_H_

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "nhsg/errors.h"

namespace nhsg::io {

// Little-endian primitive writer over an ofstream. All artifact formats use
// a four-byte magic followed by a u32 version.
class BinaryWriter {
 public:
  explicit BinaryWriter(const std::string& path)
      : path_(path), out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_) throw IoError("cannot open for writing: " + path);
  }

  void Magic(std::string_view magic) { out_.write(magic.data(), 4); }

  template <typename T>
  void Pod(T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    out_.write(reinterpret_cast<const char*>(&value), sizeof(T));
  }

  template <typename T>
  void Array(const T* data, size_t count) {
    static_assert(std::is_trivially_copyable_v<T>);
    out_.write(reinterpret_cast<const char*>(data),
               static_cast<std::streamsize>(count * sizeof(T)));
  }

  void String(const std::string& s) {
    Pod<uint32_t>(static_cast<uint32_t>(s.size()));
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }

  void Close() {
    out_.flush();
    if (!out_) throw IoError("write failed: " + path_);
    out_.close();
  }

 private:
  std::string path_;
  std::ofstream out_;
};

class BinaryReader {
 public:
  explicit BinaryReader(const std::string& path)
      : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw IoError("cannot open: " + path);
  }

  // Throws FormatError if the magic differs or the version is not `version`.
  void ExpectHeader(std::string_view magic, uint32_t version) {
    std::array<char, 4> got{};
    Read(got.data(), 4);
    if (std::string_view(got.data(), 4) != magic) {
      throw FormatError(path_ + ": bad magic, expected " + std::string(magic));
    }
    uint32_t v = Pod<uint32_t>();
    if (v != version) {
      throw FormatError(path_ + ": unsupported version " + std::to_string(v));
    }
  }

  template <typename T>
  T Pod() {
    T value;
    Read(reinterpret_cast<char*>(&value), sizeof(T));
    return value;
  }

  template <typename T>
  std::vector<T> Array(size_t count) {
    std::vector<T> values(count);
    Read(reinterpret_cast<char*>(values.data()), count * sizeof(T));
    return values;
  }

  std::string String(uint32_t max_len = 1u << 16) {
    uint32_t n = Pod<uint32_t>();
    if (n > max_len) throw FormatError(path_ + ": string length out of range");
    std::string s(n, '\0');
    Read(s.data(), n);
    return s;
  }

  bool AtEnd() { return in_.peek() == std::char_traits<char>::eof(); }

  const std::string& path() const { return path_; }

 private:
  void Read(char* dst, size_t n) {
    in_.read(dst, static_cast<std::streamsize>(n));
    if (static_cast<size_t>(in_.gcount()) != n) {
      throw FormatError(path_ + ": truncated file");
    }
  }

  std::string path_;
  std::ifstream in_;
};

}  // namespace nhsg::io

#endif  // NHSG_BINARY_IO_H_
