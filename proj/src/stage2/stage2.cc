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

#include "nhsg/stage2/stage2.h"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include "json.hpp"
#include "nhsg/errors.h"
#include "nhsg/numerics/ops.h"
#include "nhsg/numerics/seeding.h"

namespace nhsg::stage2 {
namespace {

using nlohmann::json;

}  // namespace

OptimizerConfig ToyVocoderOptimizer() {
  OptimizerConfig o;
  o.kind = OptimizerKind::kAdamW;
  o.lr = 2e-4;
  o.beta1 = 0.8;
  o.beta2 = 0.99;
  o.weight_decay = 0.01;
  o.decay_gamma = 0.999;
  o.decay_every = 1000;
  o.clip_norm = 500.0;
  return o;
}

namespace {

// Exact for counters below 2^48.
void PutStep(std::vector<float>& v, int64_t step) {
  v.push_back(static_cast<float>(step >> 24));
  v.push_back(static_cast<float>(step & 0xFFFFFF));
}
int64_t GetStep(const std::vector<float>& v, size_t i) {
  return (static_cast<int64_t>(v[2 * i]) << 24) + static_cast<int64_t>(v[2 * i + 1]);
}

void AddPrefixed(ParameterStore& out, const std::string& prefix, const ParameterStore& in) {
  for (const auto& [name, t] : in.entries()) out.AddBuffer(prefix + name, t);
}

bool StartsWith(const std::string& s, const std::string& p) { return s.rfind(p, 0) == 0; }

void LogStepFailure(int64_t step, const char* which, const std::exception& e) {
  std::cerr << "step " << step << ": " << which << " update skipped: " << e.what() << '\n';
}

}  // namespace

Stage2TrainConfig FullStage2TrainConfig() {
  Stage2TrainConfig c;
  c.steps = 390000;
  c.batch_size = 8;
  c.segment_samples = 16384;
  OptimizerConfig o;
  o.kind = OptimizerKind::kAdamW;
  o.lr = 1e-4;
  o.weight_decay = 0.01;
  o.warmup_steps = 40000;
  o.warmup_clip_norm = 100.0;
  o.clip_norm = 500.0;
  o.decay_gamma = 0.999;
  o.decay_every = 1000;
  c.gen_opt = o;
  c.disc_opt = o;
  c.mel.sample_rate = 44100;
  c.mel.scales = {{512, 80}, {1024, 128}, {2048, 128}};
  return c;
}

int CropFrames(int segment_samples, int hop) {
  return (segment_samples + hop - 1) / hop;
}

void ValidateStage2TrainConfig(const Stage2TrainConfig& c, int hop) {
  if (c.steps < 0) throw ConfigError("stage2: steps < 0");
  if (c.batch_size < 1) throw ConfigError("stage2: batch_size < 1");
  if (c.segment_samples < 1 || hop < 1) throw ConfigError("stage2: segment_samples < 1");
  if (c.checkpoint_every < 0) throw ConfigError("stage2: checkpoint_every < 0");
  ValidateOptimizerConfig(c.gen_opt);
  ValidateOptimizerConfig(c.disc_opt);
  ValidateGanLossWeights(c.weights);
  if (c.mel.scales.empty()) throw ConfigError("stage2: no mel scales");
}

BatchPlan UniformBatchPlan(const std::vector<VocoderExample>& data,
                           const Stage2TrainConfig& cfg, int hop) {
  const int crop = CropFrames(cfg.segment_samples, hop);
  std::vector<size_t> eligible;
  for (size_t i = 0; i < data.size(); ++i) {
    if (data[i].z.f0.num_frames() >= crop) {
      eligible.push_back(i);
    } else {
      std::cerr << "skipping " << data[i].id << ": " << data[i].z.f0.num_frames()
                << " frames, crop needs " << crop << '\n';
    }
  }
  if (eligible.empty()) throw DataError("no segment is long enough for the crop");
  std::vector<int> frames;
  for (size_t i : eligible) frames.push_back(data[i].z.f0.num_frames());
  const uint64_t seed = cfg.seed;
  const int batch = cfg.batch_size;
  return [eligible, frames, seed, batch, crop](int64_t step) {
    std::mt19937_64 rng(Mix64(seed, static_cast<uint64_t>(step)));
    std::vector<BatchItem> items;
    for (int b = 0; b < batch; ++b) {
      const size_t k = std::uniform_int_distribution<size_t>(0, eligible.size() - 1)(rng);
      BatchItem it;
      it.example = eligible[k];
      it.start_frame = std::uniform_int_distribution<int>(0, frames[k] - crop)(rng);
      items.push_back(std::move(it));
    }
    return items;
  };
}

VocoderTrainer::VocoderTrainer(Generator* gen, Discriminator* disc, Stage2TrainConfig cfg)
    : gen_(gen),
      disc_(disc),
      cfg_(std::move(cfg)),
      gen_opt_(&gen->params(), cfg_.gen_opt),
      disc_opt_(&disc->params(), cfg_.disc_opt) {
  ValidateStage2TrainConfig(cfg_, gen_->config().hop());
}

Stage2StepLog VocoderTrainer::Step(const std::vector<VocoderExample>& data,
                                   const std::vector<BatchItem>& batch,
                                   const AuxLossFn& aux) {
  const int hop = gen_->config().hop();
  const int seg = cfg_.segment_samples;
  const int crop = CropFrames(seg, hop);
  const float inv_b = 1.0f / static_cast<float>(std::max<size_t>(batch.size(), 1));
  Stage2StepLog log;
  log.step = gen_->params().step;

  std::vector<Tensor> real(batch.size()), fake(batch.size());
  std::vector<int> trim(seg);
  for (int i = 0; i < seg; ++i) trim[i] = i;
  for (size_t b = 0; b < batch.size(); ++b) {
    const BatchItem& it = batch[b];
    if (it.example >= data.size()) throw DataError("batch item out of range");
    const VocoderExample& ex = data[it.example];
    const size_t first = static_cast<size_t>(it.start_frame) * hop;
    if (it.start_frame < 0 || it.start_frame + crop > ex.z.f0.num_frames() ||
        first + seg > ex.audio.samples.size()) {
      throw DataError(ex.id + ": crop at frame " + std::to_string(it.start_frame) +
                      " does not fit");
    }
    Conditioning c = SliceConditioning(
        MakeConditioning(ex.z, it.paired ? ex.embedding : it.e_tgt), it.start_frame, crop);
    Tensor y = gen_->Forward(c);
    fake[b] = crop * hop == seg ? y : ops::Gather(y, trim, {seg});
    real[b] = Tensor({seg}, std::vector<float>(ex.audio.samples.begin() + first,
                                               ex.audio.samples.begin() + first + seg));
    (it.paired ? log.paired : log.unpaired)++;
  }

  if (log.paired > 0) {
    disc_->params().ZeroGrad();
    for (size_t b = 0; b < batch.size(); ++b) {
      if (!batch[b].paired) continue;
      DiscOutput r = disc_->Forward(real[b]);
      DiscOutput f = disc_->Forward(fake[b].Detach());
      Tensor loss = DiscriminatorAdvLoss(r, f, cfg_.weights.objective);
      log.adv_d += loss.item() / log.paired;
      ops::Scale(loss, inv_b).Backward();
    }
    try {
      disc_opt_.Step();
    } catch (const NumericsError& e) {
      LogStepFailure(log.step, "discriminator", e);
    }
  }

  gen_->params().ZeroGrad();
  bool any = false;
  for (size_t b = 0; b < batch.size(); ++b) {
    Tensor loss;
    if (batch[b].paired) {
      DiscOutput r;
      {
        NoGradGuard guard;
        r = disc_->Forward(real[b]);
      }
      DiscOutput f = disc_->Forward(fake[b]);
      Tensor mel = MultiScaleMelLoss(real[b], fake[b], cfg_.mel);
      GanLossTerms t = CombineGanLosses(r, f, mel, cfg_.weights);
      log.adv_g += t.adv_g / log.paired;
      log.fm += t.fm / log.paired;
      log.mel += t.mel / log.paired;
      loss = t.generator;
    } else if (aux) {
      loss = aux(batch[b], data[batch[b].example], fake[b]);
    }
    if (loss.defined()) {
      ops::Scale(loss, inv_b).Backward();
      any = true;
    }
  }
  if (any) {
    try {
      gen_opt_.Step();
    } catch (const NumericsError& e) {
      LogStepFailure(log.step, "generator", e);
    }
  }
  return log;
}

void AppendCsvRow(const std::string& path, const std::string& header,
                  const std::string& row) {
  const bool fresh = !std::filesystem::exists(path);
  std::ofstream out(path, std::ios::app);
  if (!out) throw IoError("cannot write " + path);
  if (fresh) out << header << '\n';
  out << row << '\n';
}

void ValidateExamples(const std::vector<VocoderExample>& data, const Generator& gen) {
  const int hop = gen.config().hop();
  for (const auto& ex : data) {
    if (ex.z.f0.frame_spec.hop_samples != hop) {
      throw ConfigError(ex.id + ": representation hop " +
                        std::to_string(ex.z.f0.frame_spec.hop_samples) +
                        " differs from the generator hop " + std::to_string(hop));
    }
    if (static_cast<int>(ex.embedding.size()) != gen.config().timbre_dim) {
      throw ShapeError(ex.id + ": timbre embedding has " +
                       std::to_string(ex.embedding.size()) + " dims");
    }
    if (ex.audio.samples.size() < static_cast<size_t>(ex.z.f0.num_frames()) * hop) {
      throw DataError(ex.id + ": audio shorter than its representation");
    }
  }
}

std::vector<Stage2StepLog> TrainStage2(Generator& gen, Discriminator& disc,
                                       const std::vector<VocoderExample>& data,
                                       const Stage2TrainConfig& cfg,
                                       const OptimizerStates* resume,
                                       const BatchPlan& plan, const Stage2Callback& on_step) {
  const int hop = gen.config().hop();
  ValidateStage2TrainConfig(cfg, hop);
  if (data.empty()) throw DataError("stage2: empty manifest");
  ValidateExamples(data, gen);
  BatchPlan sampler = plan ? plan : UniformBatchPlan(data, cfg, hop);
  VocoderTrainer trainer(&gen, &disc, cfg);
  if (resume) {
    trainer.gen_opt().ImportState(resume->gen);
    trainer.disc_opt().ImportState(resume->disc);
  }
  std::string csv;
  if (!cfg.checkpoint_dir.empty()) {
    std::filesystem::create_directories(cfg.checkpoint_dir);
    csv = cfg.checkpoint_dir + "/" + cfg.log_name;
  }
  std::vector<Stage2StepLog> logs;
  for (int64_t s = gen.params().step; s < cfg.steps; ++s) {
    Stage2StepLog log = trainer.Step(data, sampler(s));
    gen.params().step = s + 1;  // a skipped update still consumes its batch
    log.step = s + 1;
    logs.push_back(log);
    if (!csv.empty()) {
      std::ostringstream row;
      row.precision(17);
      row << log.step << ',' << log.adv_g << ',' << log.adv_d << ',' << log.fm << ','
          << log.mel;
      AppendCsvRow(csv, "step,adv_g,adv_d,fm,mel", row.str());
    }
    if (on_step) on_step(log);
    const bool last = s + 1 == cfg.steps;
    if (!cfg.checkpoint_dir.empty() &&
        (last || (cfg.checkpoint_every > 0 && (s + 1) % cfg.checkpoint_every == 0))) {
      SaveStage2(gen, disc, &trainer, cfg.checkpoint_dir + "/stage2_last.ckpt");
    }
  }
  return logs;
}

void SaveVocoderBundle(const VocoderBundle& b, const std::string& path) {
  ParameterStore out;
  out.step = b.gen.step;
  std::vector<float> steps;
  PutStep(steps, b.gen.step);
  PutStep(steps, b.disc.step);
  PutStep(steps, b.extra.step);
  out.AddBuffer("__steps", Tensor({6}, steps));
  AddPrefixed(out, "g/", b.gen);
  AddPrefixed(out, "d/", b.disc);
  AddPrefixed(out, "x/", b.extra);
  AddPrefixed(out, "og/", b.gen_opt);
  AddPrefixed(out, "od/", b.disc_opt);
  AddPrefixed(out, "ox/", b.extra_opt);
  SaveParams(out, path);
  json j = {{"generator", json::parse(GeneratorConfigToJson(b.gen_cfg))},
            {"discriminator", json::parse(DiscriminatorConfigToJson(b.disc_cfg))}};
  if (!b.extra_json.empty()) j["extra"] = json::parse(b.extra_json);
  std::ofstream cfg(path + ".json");
  if (!cfg) throw IoError("cannot write " + path + ".json");
  cfg << j.dump(2) << '\n';
}

VocoderBundle LoadVocoderBundle(const std::string& path) {
  std::ifstream cfg(path + ".json");
  if (!cfg) throw IoError("cannot open " + path + ".json");
  VocoderBundle b;
  try {
    json j = json::parse(cfg);
    b.gen_cfg = GeneratorConfigFromJson(j.at("generator").dump());
    b.disc_cfg = DiscriminatorConfigFromJson(j.at("discriminator").dump());
    if (j.contains("extra")) b.extra_json = j.at("extra").dump();
  } catch (const json::exception& e) {
    throw FormatError(path + ".json: " + e.what());
  }
  ParameterStore in = LoadParams(path);
  if (!in.Has("__steps") || in.Get("__steps").numel() != 6) {
    throw FormatError(path + ": not a vocoder checkpoint");
  }
  const std::vector<float>& steps = in.Get("__steps").storage();
  b.gen.step = GetStep(steps, 0);
  b.disc.step = GetStep(steps, 1);
  b.extra.step = GetStep(steps, 2);
  const std::pair<const char*, ParameterStore*> parts[] = {
      {"g/", &b.gen},      {"d/", &b.disc},      {"x/", &b.extra},
      {"og/", &b.gen_opt}, {"od/", &b.disc_opt}, {"ox/", &b.extra_opt}};
  for (const auto& [name, t] : in.entries()) {
    if (name == "__steps") continue;
    bool placed = false;
    for (const auto& [prefix, store] : parts) {
      if (StartsWith(name, prefix)) {
        store->AddBuffer(name.substr(std::string(prefix).size()), t);
        placed = true;
        break;
      }
    }
    if (!placed) throw FormatError(path + ": unexpected entry " + name);
  }
  return b;
}

void SaveStage2(const Generator& gen, const Discriminator& disc,
                const VocoderTrainer* trainer, const std::string& path) {
  VocoderBundle b;
  b.gen_cfg = gen.config();
  b.disc_cfg = disc.config();
  AddPrefixed(b.gen, "", gen.params());
  AddPrefixed(b.disc, "", disc.params());
  b.gen.step = gen.params().step;
  b.disc.step = disc.params().step;
  if (trainer) {
    trainer->gen_opt().ExportState(&b.gen_opt);
    trainer->disc_opt().ExportState(&b.disc_opt);
  }
  SaveVocoderBundle(b, path);
}

Stage2Checkpoint LoadStage2(const std::string& path) {
  VocoderBundle b = LoadVocoderBundle(path);
  Stage2Checkpoint c{Generator(b.gen_cfg), Discriminator(b.disc_cfg), {}, b.extra_json,
                     std::move(b.extra), std::move(b.extra_opt)};
  c.gen.params().AssignFrom(b.gen);
  c.disc.params().AssignFrom(b.disc);
  c.gen.params().step = b.gen.step;
  c.disc.params().step = b.disc.step;
  c.opt.gen = std::move(b.gen_opt);
  c.opt.disc = std::move(b.disc_opt);
  return c;
}

dsp::Waveform Vocode(const Generator& gen, const representation::FrameRepresentation& z,
                     const std::vector<float>& embedding) {
  if (z.f0.frame_spec.hop_samples != gen.config().hop()) {
    throw ConfigError("representation hop " + std::to_string(z.f0.frame_spec.hop_samples) +
                      " differs from the generator hop " +
                      std::to_string(gen.config().hop()));
  }
  return gen.Vocode(MakeConditioning(z, embedding));
}

std::string GeneratorConfigToJson(const GeneratorConfig& c) {
  json j = {{"layer_ids", c.layer_ids},
            {"token_vocab", c.token_vocab},
            {"token_dim", c.token_dim},
            {"f0_dim", c.f0_dim},
            {"timbre_dim", c.timbre_dim},
            {"upsample_factors", c.upsample_factors},
            {"resblock_kernels", c.resblock_kernels},
            {"resblock_dilations", c.resblock_dilations},
            {"base_channels", c.base_channels},
            {"min_channels", c.min_channels},
            {"sample_rate", c.sample_rate},
            {"seed", c.seed}};
  return j.dump(2);
}

GeneratorConfig GeneratorConfigFromJson(const std::string& text) {
  GeneratorConfig c;
  try {
    json j = json::parse(text);
    c.layer_ids = j.at("layer_ids").get<std::vector<int>>();
    c.token_vocab = j.at("token_vocab").get<std::vector<int>>();
    c.token_dim = j.at("token_dim");
    c.f0_dim = j.at("f0_dim");
    c.timbre_dim = j.at("timbre_dim");
    c.upsample_factors = j.at("upsample_factors").get<std::vector<int>>();
    c.resblock_kernels = j.at("resblock_kernels").get<std::vector<int>>();
    c.resblock_dilations = j.at("resblock_dilations").get<std::vector<int>>();
    c.base_channels = j.at("base_channels");
    c.min_channels = j.at("min_channels");
    c.sample_rate = j.at("sample_rate");
    c.seed = j.at("seed");
  } catch (const json::exception& e) {
    throw FormatError(std::string("generator config: ") + e.what());
  }
  ValidateGeneratorConfig(c);
  return c;
}

std::string DiscriminatorConfigToJson(const DiscriminatorConfig& c) {
  json j = {{"periods", c.periods},
            {"period_channels", c.period_channels},
            {"period_kernel", c.period_kernel},
            {"period_stride", c.period_stride},
            {"stft_sizes", c.stft_sizes},
            {"n_bands", c.n_bands},
            {"band_channels", c.band_channels},
            {"seed", c.seed}};
  return j.dump(2);
}

DiscriminatorConfig DiscriminatorConfigFromJson(const std::string& text) {
  DiscriminatorConfig c;
  try {
    json j = json::parse(text);
    c.periods = j.at("periods").get<std::vector<int>>();
    c.period_channels = j.at("period_channels").get<std::vector<int>>();
    c.period_kernel = j.at("period_kernel");
    c.period_stride = j.at("period_stride");
    c.stft_sizes = j.at("stft_sizes").get<std::vector<int>>();
    c.n_bands = j.at("n_bands");
    c.band_channels = j.at("band_channels");
    c.seed = j.at("seed");
  } catch (const json::exception& e) {
    throw FormatError(std::string("discriminator config: ") + e.what());
  }
  ValidateDiscriminatorConfig(c);
  return c;
}

}  // namespace nhsg::stage2
