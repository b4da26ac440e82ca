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

#include <iostream>

#include "CLI11.hpp"
#include "cli/toy_files.h"
#include "nhsg/errors.h"

int main(int argc, char** argv) {
  CLI::App app{"Write the synthetic toy corpus"};
  std::string out;
  nhsg::cli::ToyCorpusOptions o;
  app.add_option("--out", out, "output directory")->required();
  app.add_option("--clips", o.clips, "number of clips");
  app.add_option("--seed", o.seed, "corpus seed");
  app.add_option("--sample-rate", o.sample_rate, "sample rate");
  CLI11_PARSE(app, argc, argv);
  try {
    std::cout << nhsg::cli::WriteToyCorpus(out, o) << '\n';
  } catch (const nhsg::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
