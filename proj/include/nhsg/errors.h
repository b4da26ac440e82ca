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

#ifndef NHSG_ERRORS_H_
#define NHSG_ERRORS_H_

#include <stdexcept>
#include <string>

namespace nhsg {

// Base of every error raised by the library. The CLI maps the category to a
// process exit code.
class Error : public std::runtime_error {
 public:
  enum class Category { kUsage, kData, kNumerics };

  Error(const std::string& what, Category category)
      : std::runtime_error(what), category_(category) {}

  Category category() const { return category_; }

 private:
  Category category_;
};

#define NHSG_DEFINE_ERROR(Name, Cat)                               \
  class Name : public Error {                                      \
   public:                                                         \
    explicit Name(const std::string& what)                         \
        : Error(std::string(#Name ": ") + what, Category::Cat) {}  \
  };

NHSG_DEFINE_ERROR(ConfigError, kUsage)
NHSG_DEFINE_ERROR(FormatError, kData)
NHSG_DEFINE_ERROR(UnsupportedError, kData)
NHSG_DEFINE_ERROR(IoError, kData)
NHSG_DEFINE_ERROR(TooShortError, kData)
NHSG_DEFINE_ERROR(DataError, kData)
NHSG_DEFINE_ERROR(InvalidSegmentError, kData)
NHSG_DEFINE_ERROR(InvalidEmbeddingError, kData)
NHSG_DEFINE_ERROR(VocabError, kData)
NHSG_DEFINE_ERROR(ShapeError, kNumerics)
NHSG_DEFINE_ERROR(NumericsError, kNumerics)
NHSG_DEFINE_ERROR(StructureError, kNumerics)

#undef NHSG_DEFINE_ERROR

}  // namespace nhsg

#endif  // NHSG_ERRORS_H_
