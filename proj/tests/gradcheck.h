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

#ifndef NHSG_TESTS_GRADCHECK_H_
#define NHSG_TESTS_GRADCHECK_H_

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "nhsg/numerics/op_registry.h"
#include "nhsg/numerics/ops.h"
#include "nhsg/numerics/tensor.h"

namespace nhsg {

// Random linear functional of the op output, summed in double.
inline double Project(const Tensor& out, const std::vector<double>& r) {
  double s = 0.0;
  for (int64_t i = 0; i < out.numel(); ++i) s += r[i] * out.at(i);
  return s;
}

struct CheckResult {
  int checked = 0;
  int failed = 0;
  double worst = 0.0;
  std::string first;
};

inline CheckResult CheckProbe(const ops::OpProbe& probe, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Tensor> inputs = probe.make_inputs(rng);
  Tensor out = probe.apply(inputs);
  std::vector<double> r(out.numel());
  std::normal_distribution<double> nd;
  for (double& v : r) v = nd(rng);
  Tensor weights(out.shape(), std::vector<float>(r.begin(), r.end()));
  Tensor loss = ops::Sum(ops::Mul(out, weights));
  loss.Backward();

  CheckResult res;
  const double eps = 1e-3;
  NoGradGuard guard;
  for (Tensor& in : inputs) {
    if (!in.requires_grad()) continue;
    std::vector<float> analytic(in.grad().begin(), in.grad().end());
    for (int64_t i = 0; i < in.numel(); ++i) {
      const float orig = in.storage()[i];
      in.storage()[i] = orig + static_cast<float>(eps);
      const double up = Project(probe.apply(inputs), r);
      in.storage()[i] = orig - static_cast<float>(eps);
      const double down = Project(probe.apply(inputs), r);
      in.storage()[i] = orig;
      const double numeric = (up - down) / (2 * eps);
      const double a = analytic[i];
      const double err = std::abs(a - numeric);
      const double tol = 1e-4 + 1e-2 * std::max(std::abs(a), std::abs(numeric));
      res.worst = std::max(res.worst, err / tol);
      ++res.checked;
      if (err > tol) {
        ++res.failed;
        if (res.first.empty()) {
          res.first = "[" + std::to_string(i) + "] analytic " +
                      std::to_string(a) + " numeric " + std::to_string(numeric);
        }
      }
    }
  }
  return res;
}

}  // namespace nhsg

#endif  // NHSG_TESTS_GRADCHECK_H_
