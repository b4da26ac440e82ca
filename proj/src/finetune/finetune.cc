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

#include "nhsg/finetune/finetune.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <limits>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "nhsg/errors.h"
#include "nhsg/numerics/layers.h"
#include "nhsg/numerics/ops.h"
#include "nhsg/numerics/seeding.h"

namespace nhsg::finetune {
namespace {

using nlohmann::json;
using stage2::BatchItem;
using stage2::VocoderExample;

constexpr float kLogF0Center = 5.3f;
constexpr uint64_t kPairingSalt = 0x7061697273ull;

std::string ConvName(size_t i) { return "conv." + std::to_string(i); }

representation::FrameRepresentation SliceZ(const representation::FrameRepresentation& z,
                                           int start, int count) {
  representation::FrameRepresentation s;
  s.tokens.layer_ids = z.tokens.layer_ids;
  s.tokens.vocab = z.tokens.vocab;
  for (const auto& seq : z.tokens.tokens) {
    s.tokens.tokens.emplace_back(seq.begin() + start, seq.begin() + start + count);
  }
  s.f0.frame_spec = z.f0.frame_spec;
  s.f0.f0_hz.assign(z.f0.f0_hz.begin() + start, z.f0.f0_hz.begin() + start + count);
  s.f0.voiced.assign(z.f0.voiced.begin() + start, z.f0.voiced.begin() + start + count);
  return s;
}

std::vector<size_t> Eligible(const std::vector<VocoderExample>& data, size_t offset,
                             int crop) {
  std::vector<size_t> out;
  for (size_t i = 0; i < data.size(); ++i) {
    if (data[i].z.f0.num_frames() >= crop) {
      out.push_back(offset + i);
    } else {
      std::cerr << "skipping " << data[i].id << ": " << data[i].z.f0.num_frames()
                << " frames, crop needs " << crop << '\n';
    }
  }
  return out;
}

double Mean(double sum, int n) {
  return n > 0 ? sum / n : std::numeric_limits<double>::quiet_NaN();
}

}  // namespace

int PredictorConfig::total_stride() const {
  int s = 1;
  for (int v : strides) s *= v;
  return s;
}

PredictorConfig ToyPredictorConfig() {
  PredictorConfig c;
  c.kernels = {10, 8, 8, 4, 4, 2, 2};
  c.strides = {5, 4, 4, 2, 2, 1, 1};
  c.paddings = {4, 2, 2, 1, 1, 1, 1};
  c.channels = {64, 64, 64, 64, 64, 64, 64};
  c.token_vocab = {64, 64, 64, 64};
  return c;
}

void ValidatePredictorConfig(const PredictorConfig& c) {
  const size_t n = c.kernels.size();
  if (n == 0 || c.strides.size() != n || c.paddings.size() != n || c.channels.size() != n) {
    throw ConfigError("predictor: kernels, strides, paddings and channels differ in length");
  }
  for (size_t i = 0; i < n; ++i) {
    if (c.kernels[i] < 1 || c.strides[i] < 1 || c.paddings[i] < 0 || c.channels[i] < 1) {
      throw ConfigError("predictor: bad geometry in layer " + std::to_string(i));
    }
  }
  if (c.layer_ids.empty() || c.layer_ids.size() != c.token_vocab.size()) {
    throw ConfigError("predictor: token_vocab must match layer_ids");
  }
  for (int k : c.token_vocab) {
    if (k < 1) throw ConfigError("predictor: token vocab < 1");
  }
  if (c.timbre_dim < 1) throw ConfigError("predictor: timbre_dim < 1");
}

void ValidatePredictorConfig(const PredictorConfig& c, int hop) {
  ValidatePredictorConfig(c);
  if (c.total_stride() != hop) {
    throw ConfigError("predictor total stride " + std::to_string(c.total_stride()) +
                      " differs from the hop " + std::to_string(hop));
  }
}

int PredictorFrames(const PredictorConfig& c, int length) {
  int len = length;
  for (size_t i = 0; i < c.kernels.size(); ++i) {
    const int span = len + 2 * c.paddings[i] - c.kernels[i];
    if (len < 1 || span < 0) return 0;
    len = span / c.strides[i] + 1;
  }
  return len;
}

double PredictorCenterOffset(const PredictorConfig& c) {
  double x = 0.0;
  for (size_t i = c.kernels.size(); i-- > 0;) {
    x = x * c.strides[i] - c.paddings[i] + (c.kernels[i] - 1) / 2.0;
  }
  return x;
}

Predictor::Predictor(PredictorConfig cfg) : cfg_(std::move(cfg)) {
  ValidatePredictorConfig(cfg_);
  std::mt19937_64 rng(cfg_.seed);
  int in = 1;
  for (size_t i = 0; i < cfg_.kernels.size(); ++i) {
    const int out = cfg_.channels[i];
    Tensor v = nn::FanIn(params_, ConvName(i) + ".v", {out, in, cfg_.kernels[i]}, rng);
    std::vector<float> norms(out);
    const int64_t cols = static_cast<int64_t>(in) * cfg_.kernels[i];
    for (int r = 0; r < out; ++r) {
      double s = 0;
      for (int64_t c = 0; c < cols; ++c) s += v.storage()[r * cols + c] * v.storage()[r * cols + c];
      norms[r] = static_cast<float>(std::sqrt(s));
    }
    params_.Add(ConvName(i) + ".g", Tensor({out}, norms));
    nn::Constant(params_, ConvName(i) + ".b", {out}, 0.0f);
    in = out;
  }
  nn::AddLinear(params_, "f0", in, 1, rng, 0.1f);
  Tensor f0_bias = params_.Get("f0.b");
  f0_bias.storage()[0] = kLogF0Center;
  for (size_t l = 0; l < cfg_.token_vocab.size(); ++l) {
    nn::AddLinear(params_, "token." + std::to_string(l), in, cfg_.token_vocab[l] + 1, rng);
  }
  nn::AddLinear(params_, "timbre", in, cfg_.timbre_dim, rng);
}

PredictorOutput Predictor::Forward(const Tensor& signal) const {
  if (signal.shape().size() != 1) throw ShapeError("predictor expects a 1-D signal");
  const int len = signal.dim(0);
  if (PredictorFrames(cfg_, len) < 1) {
    throw TooShortError("predictor input of " + std::to_string(len) +
                        " samples yields no frame");
  }
  Tensor x = ops::Reshape(signal, {1, 1, len});
  for (size_t i = 0; i < cfg_.kernels.size(); ++i) {
    const std::string n = ConvName(i);
    Tensor w = ops::WeightNorm(params_.Get(n + ".v"), params_.Get(n + ".g"));
    x = ops::Conv1d(x, w, params_.Get(n + ".b"), cfg_.strides[i], cfg_.paddings[i]);
    x = ops::LeakyRelu(x, cfg_.slope);
  }
  Tensor h = nn::ChannelsToSeq(x);
  const int frames = h.dim(0);
  PredictorOutput out;
  out.log_f0 = ops::Reshape(nn::ApplyLinear(params_, "f0", h), {frames});
  for (size_t l = 0; l < cfg_.token_vocab.size(); ++l) {
    out.token_logits.push_back(nn::ApplyLinear(params_, "token." + std::to_string(l), h));
  }
  out.timbre = ops::Reshape(nn::ApplyLinear(params_, "timbre", ops::MeanRows(h)),
                            {cfg_.timbre_dim});
  return out;
}

std::vector<int> AlignFrames(const PredictorConfig& cfg, int predictor_frames,
                             int target_frames, int hop) {
  if (predictor_frames < 1 || target_frames < 1) throw ShapeError("align: no frames");
  const double stride = cfg.total_stride();
  const double offset = PredictorCenterOffset(cfg);
  std::vector<int> idx(target_frames);
  for (int t = 0; t < target_frames; ++t) {
    const double center = static_cast<double>(t) * hop + (hop - 1) / 2.0;
    const long j = std::lround((center - offset) / stride);
    if (j < -1 || j > predictor_frames) {
      throw ShapeError("predictor has " + std::to_string(predictor_frames) +
                       " frames, cannot cover target frame " + std::to_string(t) + " of " +
                       std::to_string(target_frames));
    }
    idx[t] = static_cast<int>(std::clamp<long>(j, 0, predictor_frames - 1));
  }
  return idx;
}

Tensor AuxLosses::Weighted(const AuxWeights& w) const {
  return ops::Add(ops::Add(ops::Scale(token, static_cast<float>(w.token)),
                           ops::Scale(f0, static_cast<float>(w.f0))),
                  ops::Scale(timbre, static_cast<float>(w.timbre)));
}

AuxLosses AuxiliaryLosses(const PredictorOutput& pred,
                          const representation::FrameRepresentation& z,
                          const std::vector<float>& e_tgt, const std::vector<int>& frames) {
  const int t_frames = z.f0.num_frames();
  if (static_cast<int>(frames.size()) != t_frames) {
    throw ShapeError("alignment covers " + std::to_string(frames.size()) + " frames, z has " +
                     std::to_string(t_frames));
  }
  if (pred.token_logits.size() != z.tokens.tokens.size()) {
    throw ShapeError("predictor emits " + std::to_string(pred.token_logits.size()) +
                     " token layers, z has " + std::to_string(z.tokens.tokens.size()));
  }
  const int rows = pred.num_frames();
  for (int f : frames) {
    if (f < 0 || f >= rows) throw ShapeError("alignment index out of range");
  }
  AuxLosses out;
  out.token = Tensor({1}, 0.0f);
  for (size_t l = 0; l < pred.token_logits.size(); ++l) {
    const Tensor& logits = pred.token_logits[l];
    const int classes = logits.dim(1);
    if (l < z.tokens.vocab.size() && classes != z.tokens.vocab[l] + 1) {
      throw ShapeError("token head " + std::to_string(l) + " has " + std::to_string(classes) +
                       " classes, vocab is " + std::to_string(z.tokens.vocab[l]));
    }
    std::vector<int> idx;
    idx.reserve(static_cast<size_t>(t_frames) * classes);
    for (int f : frames) {
      for (int c = 0; c < classes; ++c) idx.push_back(f * classes + c);
    }
    Tensor sel = ops::Gather(logits, idx, {t_frames, classes});
    out.token = ops::Add(out.token, ops::CrossEntropy(sel, z.tokens.tokens[l], classes - 1));
  }
  std::vector<float> target(t_frames, 0.0f), mask(t_frames, 0.0f);
  for (int t = 0; t < t_frames; ++t) {
    if (z.f0.voiced[t] && z.f0.f0_hz[t] > 0.0f) {
      target[t] = std::log(z.f0.f0_hz[t]);
      mask[t] = 1.0f;
    }
  }
  out.f0 = ops::MseLoss(ops::Gather(pred.log_f0, frames, {t_frames}),
                        Tensor({t_frames}, std::move(target)), mask);
  if (static_cast<int>(e_tgt.size()) != pred.timbre.numel()) {
    throw ShapeError("target embedding has " + std::to_string(e_tgt.size()) +
                     " dims, predictor emits " + std::to_string(pred.timbre.numel()));
  }
  Tensor e({static_cast<int>(e_tgt.size())}, e_tgt);
  out.timbre = ops::AddScalar(ops::Scale(ops::CosineSimilarity(e, pred.timbre), -1.0f), 1.0f);
  return out;
}

std::vector<size_t> UnpairedBatch(size_t batch_size, PairingMode mode, std::mt19937_64& rng) {
  std::vector<size_t> p(batch_size);
  std::iota(p.begin(), p.end(), 0);
  if (batch_size < 2) {
    if (batch_size == 1) std::cerr << "unpaired batch of one: pairing with itself\n";
    return p;
  }
  auto shuffle = [&] {
    for (size_t i = batch_size - 1; i > 0; --i) {
      std::swap(p[i], p[std::uniform_int_distribution<size_t>(0, i)(rng)]);
    }
  };
  shuffle();
  if (mode == PairingMode::kDerangement) {
    auto fixed = [&] {
      for (size_t i = 0; i < batch_size; ++i) {
        if (p[i] == i) return true;
      }
      return false;
    };
    while (fixed()) shuffle();
  }
  return p;
}

OptimizerConfig ToyPredictorOptimizer() {
  OptimizerConfig o = stage2::ToyVocoderOptimizer();
  o.lr = 1e-3;
  return o;
}

FinetuneConfig FullFinetuneConfig() {
  FinetuneConfig c;
  c.train = stage2::FullStage2TrainConfig();
  c.train.segment_samples = 32768;
  c.predictor_opt = c.train.gen_opt;
  return c;
}

void ValidateFinetuneConfig(const FinetuneConfig& c, int hop) {
  stage2::ValidateStage2TrainConfig(c.train, hop);
  ValidateOptimizerConfig(c.predictor_opt);
  if (!(c.oversampling > 0) || !std::isfinite(c.oversampling)) {
    throw ConfigError("finetune: oversampling ratio must be positive");
  }
  if (!(c.aux.token >= 0) || !(c.aux.f0 >= 0) || !(c.aux.timbre >= 0) ||
      !(c.unpaired_weight >= 0)) {
    throw ConfigError("finetune: loss weights must be non-negative");
  }
}

std::vector<VocoderExample> MergeManifests(const std::vector<VocoderExample>& human,
                                           const std::vector<VocoderExample>& nonhuman) {
  std::vector<VocoderExample> all = human;
  for (auto& ex : all) ex.human = true;
  for (const auto& ex : nonhuman) {
    all.push_back(ex);
    all.back().human = false;
  }
  return all;
}

stage2::BatchPlan FinetuneBatchPlan(const std::vector<VocoderExample>& human,
                                    const std::vector<VocoderExample>& nonhuman,
                                    const FinetuneConfig& cfg, int hop) {
  ValidateFinetuneConfig(cfg, hop);
  if (nonhuman.empty()) throw ConfigError("finetune: empty non-human manifest");
  if (human.empty()) throw ConfigError("finetune: empty human manifest");
  const int crop = stage2::CropFrames(cfg.train.segment_samples, hop);
  const std::vector<size_t> pools[2] = {Eligible(human, 0, crop),
                                        Eligible(nonhuman, human.size(), crop)};
  if (pools[0].empty() || pools[1].empty()) {
    throw DataError("finetune: a domain has no segment long enough for the crop");
  }
  std::vector<int> frames;
  std::vector<std::vector<float>> embeddings;
  for (const auto* m : {&human, &nonhuman}) {
    for (const auto& ex : *m) {
      frames.push_back(ex.z.f0.num_frames());
      embeddings.push_back(ex.embedding);
    }
  }
  const double share = cfg.oversampling / (1.0 + cfg.oversampling);
  const int batch = cfg.train.batch_size;
  const uint64_t seed = cfg.train.seed;
  const PairingMode mode = cfg.pairing;
  const bool self = cfg.force_self_pairing;
  return [=](int64_t step) {
    std::mt19937_64 rng(Mix64(seed, static_cast<uint64_t>(step)));
    std::vector<BatchItem> items;
    for (int b = 0; b < batch; ++b) {
      const double n = static_cast<double>(step) * batch + b;
      const bool nh = std::floor((n + 1) * share) > std::floor(n * share);
      const auto& pool = pools[nh ? 1 : 0];
      BatchItem it;
      it.example = pool[std::uniform_int_distribution<size_t>(0, pool.size() - 1)(rng)];
      it.start_frame = std::uniform_int_distribution<int>(0, frames[it.example] - crop)(rng);
      items.push_back(std::move(it));
    }
    std::vector<size_t> donor(items.size());
    std::iota(donor.begin(), donor.end(), 0);
    if (!self) {
      std::mt19937_64 pair_rng(Mix64(seed ^ kPairingSalt, static_cast<uint64_t>(step)));
      donor = UnpairedBatch(items.size(), mode, pair_rng);
    }
    for (size_t b = 0; b < items.size(); ++b) {
      const size_t from = items[donor[b]].example;
      items[b].paired = from == items[b].example;
      if (!items[b].paired) items[b].e_tgt = embeddings[from];
    }
    return items;
  };
}

std::vector<FinetuneStepLog> Finetune(stage2::Generator& gen, stage2::Discriminator& disc,
                                      Predictor& predictor,
                                      const std::vector<VocoderExample>& human,
                                      const std::vector<VocoderExample>& nonhuman,
                                      const FinetuneConfig& cfg, const FinetuneState* resume,
                                      const FinetuneCallback& on_step) {
  const int hop = gen.config().hop();
  ValidateFinetuneConfig(cfg, hop);
  ValidatePredictorConfig(predictor.config(), hop);
  if (nonhuman.empty()) throw ConfigError("finetune: empty non-human manifest");
  const std::vector<VocoderExample> data = MergeManifests(human, nonhuman);
  stage2::ValidateExamples(data, gen);
  stage2::BatchPlan plan = FinetuneBatchPlan(human, nonhuman, cfg, hop);
  const int crop = stage2::CropFrames(cfg.train.segment_samples, hop);
  const int seg = cfg.train.segment_samples;

  stage2::VocoderTrainer trainer(&gen, &disc, cfg.train);
  Optimizer popt(&predictor.params(), cfg.predictor_opt);
  if (resume) {
    trainer.gen_opt().ImportState(resume->vocoder.gen);
    trainer.disc_opt().ImportState(resume->vocoder.disc);
    popt.ImportState(resume->predictor);
  }
  std::string csv;
  if (!cfg.train.checkpoint_dir.empty()) {
    std::filesystem::create_directories(cfg.train.checkpoint_dir);
    csv = cfg.train.checkpoint_dir + "/" + cfg.log_name;
  }

  std::vector<FinetuneStepLog> logs;
  for (int64_t s = gen.params().step; s < cfg.train.steps; ++s) {
    const std::vector<BatchItem> batch = plan(s);
    FinetuneStepLog log;
    double sums[3] = {0, 0, 0};
    int unpaired = 0;
    stage2::AuxLossFn aux;
    if (cfg.unpaired_weight > 0) {
      aux = [&](const BatchItem& it, const VocoderExample& ex, const Tensor& fake) {
        PredictorOutput pred = predictor.Forward(fake);
        const auto frames = AlignFrames(predictor.config(), pred.num_frames(), crop, hop);
        AuxLosses a = AuxiliaryLosses(pred, SliceZ(ex.z, it.start_frame, crop), it.e_tgt, frames);
        sums[0] += a.token.item();
        sums[1] += a.f0.item();
        sums[2] += a.timbre.item();
        ++unpaired;
        return ops::Scale(a.Weighted(cfg.aux), static_cast<float>(cfg.unpaired_weight));
      };
    }
    log.gan = trainer.Step(data, batch, aux);
    log.token = Mean(sums[0], unpaired);
    log.f0 = Mean(sums[1], unpaired);
    log.timbre = Mean(sums[2], unpaired);

    // The predictor learns from real crops with their own targets.
    predictor.params().ZeroGrad();
    const float inv_b = 1.0f / static_cast<float>(batch.size());
    for (const BatchItem& it : batch) {
      const VocoderExample& ex = data[it.example];
      (ex.human ? log.human : log.nonhuman)++;
      const size_t first = static_cast<size_t>(it.start_frame) * hop;
      Tensor real({seg}, std::vector<float>(ex.audio.samples.begin() + first,
                                            ex.audio.samples.begin() + first + seg));
      PredictorOutput pred = predictor.Forward(real);
      const auto frames = AlignFrames(predictor.config(), pred.num_frames(), crop, hop);
      AuxLosses a = AuxiliaryLosses(pred, SliceZ(ex.z, it.start_frame, crop), ex.embedding,
                                    frames);
      log.real_token += a.token.item() / batch.size();
      log.real_f0 += a.f0.item() / batch.size();
      log.real_timbre += a.timbre.item() / batch.size();
      ops::Scale(a.Weighted(cfg.aux), inv_b).Backward();
    }
    try {
      popt.Step();
    } catch (const NumericsError& e) {
      std::cerr << "step " << s << ": predictor update skipped: " << e.what() << '\n';
    }
    gen.params().step = s + 1;
    predictor.params().step = s + 1;
    log.gan.step = s + 1;
    logs.push_back(log);
    if (!csv.empty()) {
      std::ostringstream row;
      row.precision(17);
      row << log.gan.step << ',' << log.gan.adv_g << ',' << log.gan.adv_d << ',' << log.gan.fm
          << ',' << log.gan.mel << ',' << log.token << ',' << log.f0 << ',' << log.timbre;
      stage2::AppendCsvRow(csv, "step,adv_g,adv_d,fm,mel,token,f0,timbre", row.str());
    }
    if (on_step) on_step(log);
    const bool last = s + 1 == cfg.train.steps;
    if (!csv.empty() && (last || (cfg.train.checkpoint_every > 0 &&
                                  (s + 1) % cfg.train.checkpoint_every == 0))) {
      SaveFinetune(gen, disc, predictor, &trainer, &popt,
                   cfg.train.checkpoint_dir + "/finetune_last.ckpt");
    }
  }
  return logs;
}

void SaveFinetune(const stage2::Generator& gen, const stage2::Discriminator& disc,
                  const Predictor& predictor, const stage2::VocoderTrainer* trainer,
                  const Optimizer* predictor_opt, const std::string& path) {
  stage2::VocoderBundle b;
  b.gen_cfg = gen.config();
  b.disc_cfg = disc.config();
  b.extra_json = PredictorConfigToJson(predictor.config());
  for (const auto& [n, t] : gen.params().entries()) b.gen.AddBuffer(n, t);
  for (const auto& [n, t] : disc.params().entries()) b.disc.AddBuffer(n, t);
  for (const auto& [n, t] : predictor.params().entries()) b.extra.AddBuffer(n, t);
  b.gen.step = gen.params().step;
  b.disc.step = disc.params().step;
  b.extra.step = predictor.params().step;
  if (trainer) {
    trainer->gen_opt().ExportState(&b.gen_opt);
    trainer->disc_opt().ExportState(&b.disc_opt);
  }
  if (predictor_opt) predictor_opt->ExportState(&b.extra_opt);
  stage2::SaveVocoderBundle(b, path);
}

std::string PredictorConfigToJson(const PredictorConfig& c) {
  json j = {{"kernels", c.kernels},     {"strides", c.strides},
            {"paddings", c.paddings},   {"channels", c.channels},
            {"slope", c.slope},         {"layer_ids", c.layer_ids},
            {"token_vocab", c.token_vocab}, {"timbre_dim", c.timbre_dim},
            {"seed", c.seed}};
  return j.dump(2);
}

PredictorConfig PredictorConfigFromJson(const std::string& text) {
  PredictorConfig c;
  try {
    json j = json::parse(text);
    c.kernels = j.at("kernels").get<std::vector<int>>();
    c.strides = j.at("strides").get<std::vector<int>>();
    c.paddings = j.at("paddings").get<std::vector<int>>();
    c.channels = j.at("channels").get<std::vector<int>>();
    c.slope = j.at("slope");
    c.layer_ids = j.at("layer_ids").get<std::vector<int>>();
    c.token_vocab = j.at("token_vocab").get<std::vector<int>>();
    c.timbre_dim = j.at("timbre_dim");
    c.seed = j.at("seed");
  } catch (const json::exception& e) {
    throw FormatError(std::string("predictor config: ") + e.what());
  }
  ValidatePredictorConfig(c);
  return c;
}

}  // namespace nhsg::finetune
