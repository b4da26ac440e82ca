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

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include <gtest/gtest.h>

#include "gradcheck.h"
#include "nhsg/errors.h"
#include "nhsg/numerics/op_registry.h"
#include "nhsg/numerics/optimizer.h"
#include "nhsg/numerics/parameters.h"
#include "nhsg/numerics/ops.h"
#include "nhsg/numerics/tensor.h"

namespace nhsg {
namespace {

TEST(GradCheck, EveryRegisteredOp) {
  ASSERT_GE(ops::OpRegistry().size(), 30u);
  for (const auto& probe : ops::OpRegistry()) {
    for (uint64_t seed = 1; seed <= 10; ++seed) {
      CheckResult res = CheckProbe(probe, seed);
      EXPECT_GT(res.checked, 0) << probe.name;
      EXPECT_EQ(res.failed, 0)
          << probe.name << " seed " << seed << " " << res.first;
    }
  }
}

TEST(Ops, LinearMatchesHandComputation) {
  Tensor x({1, 2}, {1.0f, 2.0f});
  Tensor w({2, 2}, {1.0f, -1.0f, 0.5f, 2.0f});
  Tensor b({2}, {0.25f, -0.5f});
  Tensor y = ops::Linear(x, w, b);
  EXPECT_FLOAT_EQ(y.at(0), 1.0f - 2.0f + 0.25f);
  EXPECT_FLOAT_EQ(y.at(1), 0.5f + 4.0f - 0.5f);
}

TEST(Ops, ConvOutputLengths) {
  EXPECT_EQ(ops::Conv1dOutputLength(100, 10, 7, 4, 1), 15);
  std::mt19937_64 rng(4);
  Tensor x = Tensor::Randn({1, 2, 7}, 1.0f, rng);
  Tensor w = Tensor::Randn({2, 3, 16}, 1.0f, rng);
  Tensor y = ops::ConvTranspose1d(x, w, {}, 8, 4);
  EXPECT_EQ(y.dim(2), 7 * 8);
}

TEST(Ops, CrossEntropyUniformLogits) {
  Tensor logits({2, 4}, 0.0f);
  EXPECT_NEAR(ops::CrossEntropy(logits, {1, 3}, -1).item(), std::log(4.0), 1e-6);
}

TEST(Ops, CosineOfZeroVectorThrows) {
  Tensor a({3}, 0.0f);
  Tensor b({3}, 1.0f);
  EXPECT_THROW(ops::CosineSimilarity(a, b), NumericsError);
}

TEST(Ops, EmbeddingOutOfRangeThrows) {
  Tensor table({4, 2}, 1.0f);
  EXPECT_THROW(ops::EmbeddingLookup(table, {4}), VocabError);
}

TEST(Ops, ShapeMismatchThrows) {
  EXPECT_THROW(ops::Add(Tensor({2, 3}), Tensor({3, 2})), ShapeError);
}

TEST(Ops, NoGradGuardSkipsGraph) {
  Tensor a({2}, 1.0f, true);
  NoGradGuard guard;
  Tensor b = ops::Scale(a, 2.0f);
  EXPECT_FALSE(b.requires_grad());
}

TEST(Ops, IdentityKernelConvIsIdentity) {
  std::mt19937_64 rng(5);
  Tensor x = Tensor::Randn({2, 1, 9}, 1.0f, rng);
  Tensor w({1, 1, 1}, 1.0f);
  Tensor y = ops::Conv1d(x, w, {}, 1, 0, 1);
  EXPECT_EQ(y.storage(), x.storage());
}

TEST(Ops, BackwardIsLinear) {
  std::mt19937_64 rng(6);
  Tensor x = Tensor::Randn({3, 4}, 1.0f, rng, true);
  Tensor w = Tensor::Randn({2, 4}, 1.0f, rng, true);
  auto f = [&] { return ops::Sum(ops::Tanh(ops::Linear(x, w))); };
  auto g = [&] { return ops::Mean(ops::Mul(x, x)); };
  f().Backward();
  std::vector<float> gf(x.grad().begin(), x.grad().end());
  x.ZeroGrad();
  g().Backward();
  std::vector<float> gg(x.grad().begin(), x.grad().end());
  x.ZeroGrad();
  ops::Add(f(), g()).Backward();
  for (size_t i = 0; i < gf.size(); ++i) {
    EXPECT_NEAR(x.grad()[i], gf[i] + gg[i], 1e-5);
  }
}

ParameterStore ScalarStore(float value) {
  ParameterStore store;
  store.Add("p", Tensor({1}, value));
  return store;
}

void QuadraticGrad(ParameterStore& store, float target) {
  store.ZeroGrad();
  Tensor p = store.Get("p");
  Tensor d = ops::AddScalar(p, -target);
  ops::Sum(ops::Mul(d, d)).Backward();
}

TEST(Optimizer, ScalarQuadraticConverges) {
  ParameterStore store = ScalarStore(0.0f);
  OptimizerConfig cfg;
  cfg.lr = 0.05;
  cfg.decay_every = 10;
  cfg.decay_gamma = 0.97;
  Optimizer opt(&store, cfg);
  for (int i = 0; i < 500; ++i) {
    QuadraticGrad(store, 3.0f);
    opt.Step();
  }
  EXPECT_NEAR(store.Get("p").item(), 3.0f, 1e-3);
}

TEST(Optimizer, ZeroGradientAdamUnchanged) {
  ParameterStore store = ScalarStore(2.0f);
  Tensor(store.Get("p")).grad();  // zero gradient
  Optimizer opt(&store, {});
  opt.Step();
  EXPECT_EQ(store.Get("p").item(), 2.0f);
}

TEST(Optimizer, ZeroGradientAdamWOnlyDecays) {
  ParameterStore store = ScalarStore(2.0f);
  Tensor(store.Get("p")).grad();
  OptimizerConfig cfg;
  cfg.kind = OptimizerKind::kAdamW;
  cfg.lr = 0.1;
  cfg.weight_decay = 0.5;
  Optimizer opt(&store, cfg);
  opt.Step();
  EXPECT_FLOAT_EQ(store.Get("p").item(), 2.0f * (1.0f - 0.1f * 0.5f));
}

TEST(Optimizer, ZeroLearningRateIsNoOp) {
  for (auto kind : {OptimizerKind::kAdam, OptimizerKind::kAdamW}) {
    ParameterStore store = ScalarStore(1.5f);
    OptimizerConfig cfg;
    cfg.kind = kind;
    cfg.lr = 0.0;
    cfg.weight_decay = 0.01;
    Optimizer opt(&store, cfg);
    QuadraticGrad(store, 0.0f);
    opt.Step();
    EXPECT_EQ(store.Get("p").item(), 1.5f);
  }
}

TEST(Optimizer, ClipScalesGradient) {
  ParameterStore store;
  store.Add("p", Tensor({2}, 0.0f));
  Tensor p = store.Get("p");
  auto g = p.grad();
  g[0] = 600.0f;
  g[1] = 800.0f;
  OptimizerConfig cfg;
  cfg.clip_norm = 100.0;
  Optimizer opt(&store, cfg);
  EXPECT_DOUBLE_EQ(opt.Step(), 1000.0);
  ParameterStore state;
  opt.ExportState(&state);
  const Tensor& m = state.Get("__opt/m/p");
  EXPECT_NEAR(m.at(0), 0.1 * 60.0, 1e-4);
  EXPECT_NEAR(m.at(1), 0.1 * 80.0, 1e-4);
}

TEST(Optimizer, WarmupThenExponentialDecay) {
  ParameterStore store = ScalarStore(0.0f);
  OptimizerConfig cfg;
  cfg.lr = 1.0;
  cfg.warmup_steps = 4;
  cfg.decay_gamma = 0.5;
  cfg.decay_every = 2;
  cfg.warmup_clip_norm = 100.0;
  cfg.clip_norm = 500.0;
  Optimizer opt(&store, cfg);
  EXPECT_DOUBLE_EQ(opt.LrAt(0), 0.25);
  EXPECT_DOUBLE_EQ(opt.LrAt(3), 1.0);
  EXPECT_DOUBLE_EQ(opt.LrAt(5), 1.0);
  EXPECT_DOUBLE_EQ(opt.LrAt(6), 0.5);
  EXPECT_DOUBLE_EQ(opt.ClipAt(3), 100.0);
  EXPECT_DOUBLE_EQ(opt.ClipAt(4), 500.0);
}

TEST(Optimizer, NonFiniteGradientSkipped) {
  ParameterStore store = ScalarStore(1.0f);
  Tensor p = store.Get("p");
  p.grad()[0] = std::nanf("");
  Optimizer opt(&store, {});
  EXPECT_THROW(opt.Step(), NumericsError);
  EXPECT_EQ(opt.skipped(), 1);
  EXPECT_EQ(store.step, 0);
  EXPECT_EQ(store.Get("p").item(), 1.0f);
}

class CheckpointTest : public ::testing::Test {
 protected:
  std::string Path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / ("nhsg_ck_" + name)).string();
  }
};

TEST_F(CheckpointTest, RoundTripBitExact) {
  std::mt19937_64 rng(7);
  ParameterStore store;
  store.Add("enc/w", Tensor::Randn({3, 4, 2}, 1.0f, rng));
  store.Add("enc/b", Tensor::Randn({3}, 1e-30f, rng));
  store.step = 1234567890123;
  const std::string path = Path("rt.bin");
  SaveParams(store, path);
  ParameterStore back = LoadParams(path);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back.step, store.step);
  for (size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(back.entries()[i].first, store.entries()[i].first);
    EXPECT_EQ(back.entries()[i].second.shape(), store.entries()[i].second.shape());
    EXPECT_EQ(0, std::memcmp(back.entries()[i].second.storage().data(),
                             store.entries()[i].second.storage().data(),
                             store.entries()[i].second.numel() * sizeof(float)));
  }
  std::filesystem::remove(path);
}

TEST_F(CheckpointTest, TruncatedFileIsFormatError) {
  ParameterStore store;
  store.Add("w", Tensor({64}, 1.0f));
  const std::string path = Path("trunc.bin");
  SaveParams(store, path);
  std::filesystem::resize_file(path, std::filesystem::file_size(path) - 5);
  EXPECT_THROW(LoadParams(path), FormatError);
  std::ofstream(path, std::ios::binary) << "XXXX";
  EXPECT_THROW(LoadParams(path), FormatError);
  std::filesystem::remove(path);
}

TEST_F(CheckpointTest, ForeignStructureRejected) {
  ParameterStore a;
  a.Add("stage1/w", Tensor({2, 2}, 1.0f));
  ParameterStore b;
  b.Add("stage2/w", Tensor({2, 2}, 0.0f));
  EXPECT_THROW(b.AssignFrom(a), StructureError);
  ParameterStore c;
  c.Add("stage1/w", Tensor({4}, 0.0f));
  EXPECT_THROW(c.AssignFrom(a), StructureError);
  ParameterStore d;
  d.Add("stage1/w", Tensor({2, 2}, 0.0f));
  d.AssignFrom(a);
  EXPECT_EQ(d.Get("stage1/w").at(3), 1.0f);
}

}  // namespace
}  // namespace nhsg
