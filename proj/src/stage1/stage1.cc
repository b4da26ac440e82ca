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

#include "nhsg/stage1/stage1.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "json.hpp"

#include "nhsg/errors.h"
#include "nhsg/numerics/layers.h"
#include "nhsg/numerics/ops.h"
#include "nhsg/numerics/seeding.h"
#include "nhsg/numerics/optimizer.h"

namespace nhsg::stage1 {
namespace {

using nlohmann::json;

// Initial pitch head bias, about 200 Hz.
constexpr float kLogF0Center = 5.3f;

std::string Layer(const char* kind, int i, const char* part) {
  return std::string(kind) + "." + std::to_string(i) + "." + part;
}

}  // namespace

void ValidateStage1Config(const Stage1Config& c) {
  if (c.dim < 1 || c.heads < 1 || c.dim % c.heads != 0) {
    throw ConfigError("stage1: dim must be a positive multiple of heads");
  }
  if (c.encoder_layers < 0 || c.decoder_layers < 0) {
    throw ConfigError("stage1: negative layer count");
  }
  if (c.ffn_dim < 1 || c.duration_hidden < 1 || c.pitch_hidden < 1) {
    throw ConfigError("stage1: hidden sizes must be positive");
  }
  if (c.conv_kernel < 1 || c.conv_kernel % 2 == 0) {
    throw ConfigError("stage1: conv_kernel must be odd");
  }
  if (c.max_relative < 0) throw ConfigError("stage1: max_relative < 0");
  if (c.layer_ids.empty() || c.layer_ids.size() != c.token_vocab.size()) {
    throw ConfigError("stage1: token_vocab must match layer_ids");
  }
  for (int k : c.token_vocab) {
    if (k < 1) throw ConfigError("stage1: token vocab < 1");
  }
  if (c.lambda_out < 0 || c.lambda_dur < 0 || c.lambda_pitch < 0) {
    throw ConfigError("stage1: loss weights must be >= 0");
  }
}

std::string Stage1ConfigToJson(const Stage1Config& c) {
  json j = {{"dim", c.dim},
            {"heads", c.heads},
            {"encoder_layers", c.encoder_layers},
            {"decoder_layers", c.decoder_layers},
            {"ffn_dim", c.ffn_dim},
            {"conv_kernel", c.conv_kernel},
            {"max_relative", c.max_relative},
            {"duration_hidden", c.duration_hidden},
            {"pitch_hidden", c.pitch_hidden},
            {"phonemes", c.phonemes},
            {"layer_ids", c.layer_ids},
            {"token_vocab", c.token_vocab},
            {"lambda_out", c.lambda_out},
            {"lambda_dur", c.lambda_dur},
            {"lambda_pitch", c.lambda_pitch},
            {"output_loss", c.output_loss == OutputLoss::kCrossEntropy
                                ? "cross_entropy"
                                : "l1_onehot"},
            {"vuv_min_hz", c.vuv_min_hz},
            {"silence_tokens", c.silence_tokens},
            {"seed", c.seed}};
  return j.dump(2);
}

Stage1Config Stage1ConfigFromJson(const std::string& text) {
  Stage1Config c;
  try {
    json j = json::parse(text);
    c.dim = j.at("dim");
    c.heads = j.at("heads");
    c.encoder_layers = j.at("encoder_layers");
    c.decoder_layers = j.at("decoder_layers");
    c.ffn_dim = j.at("ffn_dim");
    c.conv_kernel = j.at("conv_kernel");
    c.max_relative = j.at("max_relative");
    c.duration_hidden = j.at("duration_hidden");
    c.pitch_hidden = j.at("pitch_hidden");
    c.phonemes = j.at("phonemes").get<std::vector<std::string>>();
    c.layer_ids = j.at("layer_ids").get<std::vector<int>>();
    c.token_vocab = j.at("token_vocab").get<std::vector<int>>();
    c.lambda_out = j.at("lambda_out");
    c.lambda_dur = j.at("lambda_dur");
    c.lambda_pitch = j.at("lambda_pitch");
    c.output_loss = j.at("output_loss") == "cross_entropy"
                        ? OutputLoss::kCrossEntropy
                        : OutputLoss::kL1OneHot;
    c.vuv_min_hz = j.at("vuv_min_hz");
    c.silence_tokens = j.at("silence_tokens").get<std::vector<int>>();
    c.seed = j.at("seed");
  } catch (const json::exception& e) {
    throw FormatError(std::string("stage1 config: ") + e.what());
  }
  ValidateStage1Config(c);
  return c;
}

Tensor LengthRegulate(const Tensor& hidden, const std::vector<int>& durations) {
  if (hidden.rank() != 2 || hidden.dim(0) != static_cast<int>(durations.size())) {
    throw ShapeError("length_regulate: hidden " + ShapeToString(hidden.shape()) +
                     " vs " + std::to_string(durations.size()) + " durations");
  }
  const int d = hidden.dim(1);
  int total = 0;
  for (int v : durations) {
    if (v < 1) throw ConfigError("length_regulate: duration < 1");
    total += v;
  }
  std::vector<int> idx;
  idx.reserve(static_cast<size_t>(total) * d);
  for (size_t i = 0; i < durations.size(); ++i) {
    for (int r = 0; r < durations[i]; ++r) {
      for (int j = 0; j < d; ++j) idx.push_back(static_cast<int>(i) * d + j);
    }
  }
  return ops::Gather(hidden, idx, {total, d});
}

Tensor PhonemePositionFeatures(const std::vector<int>& durations) {
  std::vector<float> f;
  for (int d : durations) {
    for (int r = 0; r < d; ++r) {
      const double pos = (r + 0.5) / d;
      f.push_back(static_cast<float>(std::sin(M_PI * pos)));
      f.push_back(static_cast<float>(std::cos(M_PI * pos)));
      f.push_back(static_cast<float>(pos));
      f.push_back(static_cast<float>(1.0 / d));
    }
  }
  const int total = static_cast<int>(f.size() / 4);
  return Tensor({total, 4}, std::move(f));
}

Stage1Model::Stage1Model(Stage1Config cfg)
    : cfg_(std::move(cfg)), vocab_(cfg_.phonemes) {
  ValidateStage1Config(cfg_);
  cfg_.phonemes = vocab_.symbols();
  std::mt19937_64 rng(cfg_.seed);
  const int d = cfg_.dim;
  auto& p = params_;
  nn::Normal(p, "phoneme_emb", {vocab_.size(), d}, 0.5f, rng);
  nn::Normal(p, "midi_emb", {kMidiVocab, d}, 0.5f, rng);
  auto add_block = [&](const char* kind, int i) {
    nn::AddLayerNorm(p, Layer(kind, i, "ln1"), d);
    nn::AddLinear(p, Layer(kind, i, "q"), d, d, rng);
    nn::AddLinear(p, Layer(kind, i, "k"), d, d, rng);
    nn::AddLinear(p, Layer(kind, i, "v"), d, d, rng);
    nn::AddLinear(p, Layer(kind, i, "o"), d, d, rng, 0.5f);
    nn::Constant(p, Layer(kind, i, "rel"), {cfg_.heads, 2 * cfg_.max_relative + 1},
                 0.0f);
    nn::AddLayerNorm(p, Layer(kind, i, "ln2"), d);
    nn::AddSeqConv(p, Layer(kind, i, "ff1"), d, cfg_.ffn_dim, cfg_.conv_kernel, rng);
    nn::AddSeqConv(p, Layer(kind, i, "ff2"), cfg_.ffn_dim, d, 1, rng, 0.5f);
  };
  for (int i = 0; i < cfg_.encoder_layers; ++i) add_block("enc", i);
  nn::AddLayerNorm(p, "enc.out_ln", d);
  nn::AddLinear(p, "dur.h", d, cfg_.duration_hidden, rng);
  nn::AddLinear(p, "dur.out", cfg_.duration_hidden, 1, rng);
  nn::AddLinear(p, "pos", 4, d, rng);
  nn::AddSeqConv(p, "pitch.h", d, cfg_.pitch_hidden, 3, rng);
  nn::AddLinear(p, "pitch.out", cfg_.pitch_hidden, 1, rng);
  Tensor(p.Get("pitch.out.b")).storage()[0] = kLogF0Center;
  nn::AddLinear(p, "pitch_emb", 1, d, rng);
  for (int i = 0; i < cfg_.decoder_layers; ++i) add_block("dec", i);
  nn::AddLayerNorm(p, "dec.out_ln", d);
  for (size_t l = 0; l < cfg_.token_vocab.size(); ++l) {
    nn::AddLinear(p, "head." + std::to_string(l), d, cfg_.token_vocab[l] + 1, rng);
  }
}

Tensor Stage1Model::Block(const std::string& prefix, const Tensor& x) const {
  const auto& p = params_;
  Tensor h = nn::ApplyLayerNorm(p, prefix + ".ln1", x);
  Tensor a = ops::ScaledDotAttention(nn::ApplyLinear(p, prefix + ".q", h),
                                     nn::ApplyLinear(p, prefix + ".k", h),
                                     nn::ApplyLinear(p, prefix + ".v", h),
                                     cfg_.heads, p.Get(prefix + ".rel"));
  Tensor y = ops::Add(x, nn::ApplyLinear(p, prefix + ".o", a));
  h = nn::ApplyLayerNorm(p, prefix + ".ln2", y);
  h = ops::LeakyRelu(nn::ApplySeqConv(p, prefix + ".ff1", h), 0.1f);
  return ops::Add(y, nn::ApplySeqConv(p, prefix + ".ff2", h));
}

Tensor Stage1Model::Encode(const Score& score) const {
  ValidateScore(score);
  std::vector<int> midi;
  for (const auto& e : score.entries) midi.push_back(MidiIndex(e.midi));
  Tensor x = ops::Add(ops::EmbeddingLookup(params_.Get("phoneme_emb"),
                                           vocab_.Encode(score)),
                      ops::EmbeddingLookup(params_.Get("midi_emb"), midi));
  for (int i = 0; i < cfg_.encoder_layers; ++i) x = Block("enc." + std::to_string(i), x);
  return nn::ApplyLayerNorm(params_, "enc.out_ln", x);
}

Tensor Stage1Model::PredictDurations(const Tensor& hidden) const {
  Tensor h = ops::LeakyRelu(nn::ApplyLinear(params_, "dur.h", hidden), 0.1f);
  Tensor out = nn::ApplyLinear(params_, "dur.out", h);
  return ops::Reshape(out, {out.dim(0)});
}

Tensor Stage1Model::FrameStates(const Tensor& hidden,
                                const std::vector<int>& durations) const {
  Tensor frames = LengthRegulate(hidden, durations);
  return ops::Add(frames, nn::ApplyLinear(params_, "pos",
                                          PhonemePositionFeatures(durations)));
}

Tensor Stage1Model::PredictPitch(const Tensor& frame_states) const {
  Tensor h = ops::LeakyRelu(nn::ApplySeqConv(params_, "pitch.h", frame_states), 0.1f);
  Tensor out = nn::ApplyLinear(params_, "pitch.out", h);
  return ops::Reshape(out, {out.dim(0)});
}

std::vector<Tensor> Stage1Model::DecodeTokens(const Tensor& frame_states,
                                              const Tensor& log_f0) const {
  if (log_f0.rank() != 1 || log_f0.dim(0) != frame_states.dim(0)) {
    throw ShapeError("decode: log_f0 " + ShapeToString(log_f0.shape()) +
                     " vs frames " + ShapeToString(frame_states.shape()));
  }
  Tensor centered = ops::AddScalar(
      ops::Reshape(log_f0, {log_f0.dim(0), 1}), -kLogF0Center);
  Tensor x = ops::Add(frame_states,
                      nn::ApplyLinear(params_, "pitch_emb", centered));
  for (int i = 0; i < cfg_.decoder_layers; ++i) x = Block("dec." + std::to_string(i), x);
  x = nn::ApplyLayerNorm(params_, "dec.out_ln", x);
  std::vector<Tensor> logits;
  for (size_t l = 0; l < cfg_.token_vocab.size(); ++l) {
    logits.push_back(nn::ApplyLinear(params_, "head." + std::to_string(l), x));
  }
  return logits;
}

Stage1Output Stage1Model::Forward(const Score& score) const {
  std::vector<int> durations;
  for (const auto& e : score.entries) durations.push_back(e.duration_frames);
  return Forward(score, durations);
}

Stage1Output Stage1Model::Forward(const Score& score,
                                  const std::vector<int>& durations) const {
  Stage1Output out;
  Tensor hidden = Encode(score);
  out.log_durations = PredictDurations(hidden);
  Tensor frames = FrameStates(hidden, durations);
  out.log_f0 = PredictPitch(frames);
  out.token_logits = DecodeTokens(frames, out.log_f0);
  return out;
}

Stage1Targets MakeTargets(const Score& score,
                          const representation::FrameRepresentation& z) {
  Stage1Targets t;
  t.tokens = z.tokens.tokens;
  t.voiced = z.f0.voiced;
  t.log_f0.resize(z.f0.num_frames(), 0.0f);
  for (int i = 0; i < z.f0.num_frames(); ++i) {
    if (z.f0.voiced[i] && z.f0.f0_hz[i] > 0.0f) {
      t.log_f0[i] = std::log(z.f0.f0_hz[i]);
    } else {
      t.voiced[i] = false;
    }
  }
  for (const auto& e : score.entries) t.durations.push_back(e.duration_frames);
  return t;
}

Stage1Loss ComputeStage1Loss(const Stage1Output& out, const Stage1Targets& t,
                             const Stage1Config& cfg) {
  const size_t layers = out.token_logits.size();
  if (layers == 0 || t.tokens.size() != layers) {
    throw ShapeError("stage1 loss: layer count mismatch");
  }
  const int frames = out.log_f0.dim(0);
  Stage1Loss loss;
  Tensor out_term;
  for (size_t l = 0; l < layers; ++l) {
    const Tensor& logits = out.token_logits[l];
    if (logits.dim(0) != frames || static_cast<int>(t.tokens[l].size()) != frames) {
      throw ShapeError("stage1 loss: frame count mismatch");
    }
    Tensor term;
    if (cfg.output_loss == OutputLoss::kCrossEntropy) {
      term = ops::CrossEntropy(logits, t.tokens[l], logits.dim(1) - 1);
    } else {
      Tensor onehot(logits.shape(), 0.0f);
      for (int i = 0; i < frames; ++i) {
        onehot.storage()[static_cast<size_t>(i) * logits.dim(1) + t.tokens[l][i]] = 1.0f;
      }
      term = ops::L1Loss(ops::Softmax(logits), onehot);
    }
    out_term = out_term.defined() ? ops::Add(out_term, term) : term;
  }
  out_term = ops::Scale(out_term, 1.0f / static_cast<float>(layers));

  if (static_cast<int>(t.durations.size()) != out.log_durations.dim(0)) {
    throw ShapeError("stage1 loss: duration count mismatch");
  }
  std::vector<float> log_d;
  for (int d : t.durations) log_d.push_back(std::log(static_cast<float>(d)));
  Tensor dur_term = ops::L1Loss(
      out.log_durations, Tensor({static_cast<int>(log_d.size())}, log_d));

  if (static_cast<int>(t.log_f0.size()) != frames ||
      static_cast<int>(t.voiced.size()) != frames) {
    throw ShapeError("stage1 loss: pitch target length mismatch");
  }
  std::vector<float> mask(frames);
  for (int i = 0; i < frames; ++i) mask[i] = t.voiced[i] ? 1.0f : 0.0f;
  Tensor pitch_term;
  if (std::any_of(mask.begin(), mask.end(), [](float m) { return m > 0; })) {
    pitch_term = ops::L1Loss(out.log_f0, Tensor({frames}, t.log_f0), mask);
  } else {
    pitch_term = ops::Scale(ops::Sum(out.log_f0), 0.0f);
    loss.no_voiced_frames = true;
  }
  loss.out = out_term.item();
  loss.dur = dur_term.item();
  loss.pitch = pitch_term.item();
  loss.total = ops::Add(
      ops::Add(ops::Scale(out_term, static_cast<float>(cfg.lambda_out)),
               ops::Scale(dur_term, static_cast<float>(cfg.lambda_dur))),
      ops::Scale(pitch_term, static_cast<float>(cfg.lambda_pitch)));
  return loss;
}

void CheckExample(const Stage1Example& ex, const Stage1Config& cfg) {
  ValidateScore(ex.score);
  const auto& tok = ex.z.tokens;
  if (ex.score.total_frames() != tok.num_frames()) {
    throw DataError(ex.id + ": score covers " +
                    std::to_string(ex.score.total_frames()) + " frames, tokens " +
                    std::to_string(tok.num_frames()));
  }
  if (ex.z.f0.num_frames() != tok.num_frames()) {
    throw DataError(ex.id + ": pitch and token frame counts differ");
  }
  if (tok.layer_ids != cfg.layer_ids || tok.vocab != cfg.token_vocab) {
    throw DataError(ex.id + ": token layers or vocabulary differ from model");
  }
}

std::vector<StepLog> TrainStage1(Stage1Model& model,
                                 const std::vector<Stage1Example>& data,
                                 const Stage1TrainConfig& train,
                                 const ParameterStore* resume_state,
                                 const StepCallback& on_step) {
  if (data.empty()) throw DataError("stage1: no training examples");
  if (train.batch_size < 1 || train.epochs < 0) {
    throw ConfigError("stage1: bad batch size or epoch count");
  }
  std::vector<Stage1Targets> targets;
  for (const auto& ex : data) {
    CheckExample(ex, model.config());
    targets.push_back(MakeTargets(ex.score, ex.z));
  }
  OptimizerConfig oc;
  oc.kind = OptimizerKind::kAdam;
  oc.lr = train.lr;
  oc.clip_norm = train.clip_norm;
  oc.decay_gamma = train.decay_gamma;
  oc.decay_every = train.decay_every;
  ParameterStore& params = model.params();
  Optimizer opt(&params, oc);
  if (resume_state) opt.ImportState(*resume_state);

  const int n = static_cast<int>(data.size());
  const int steps_per_epoch = (n + train.batch_size - 1) / train.batch_size;
  std::vector<StepLog> logs;
  std::ofstream curve;
  if (!train.checkpoint_dir.empty()) {
    std::filesystem::create_directories(train.checkpoint_dir);
    curve.open(train.checkpoint_dir + "/stage1_losses.tsv", std::ios::app);
    curve.precision(17);
  }
  const int first_epoch = static_cast<int>(params.step / steps_per_epoch);
  for (int epoch = first_epoch; epoch < train.epochs; ++epoch) {
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(Mix64(train.seed, static_cast<uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), rng);
    for (int b = static_cast<int>(params.step % steps_per_epoch);
         b < steps_per_epoch; ++b) {
      if (train.max_steps >= 0 && params.step >= train.max_steps) return logs;
      const int lo = b * train.batch_size;
      const int hi = std::min(n, lo + train.batch_size);
      params.ZeroGrad();
      StepLog log{params.step, epoch, 0, 0, 0, 0};
      for (int i = lo; i < hi; ++i) {
        const int k = order[i];
        Stage1Loss loss = ComputeStage1Loss(model.Forward(data[k].score),
                                            targets[k], model.config());
        ops::Scale(loss.total, 1.0f / static_cast<float>(hi - lo)).Backward();
        const double w = 1.0 / (hi - lo);
        log.total += w * loss.total.item();
        log.out += w * loss.out;
        log.dur += w * loss.dur;
        log.pitch += w * loss.pitch;
      }
      try {
        opt.Step();
      } catch (const NumericsError&) {
        ++params.step;  // skipped, keep the schedule moving
      }
      logs.push_back(log);
      if (on_step) on_step(log);
      if (curve) {
        curve << log.step << '\t' << log.epoch << '\t' << log.total << '\t'
              << log.out << '\t' << log.dur << '\t' << log.pitch << '\n';
      }
    }
    if (!train.checkpoint_dir.empty() &&
        ((epoch + 1) % std::max(1, train.checkpoint_every_epochs) == 0 ||
         epoch + 1 == train.epochs)) {
      ParameterStore state;
      opt.ExportState(&state);
      SaveStage1(model, train.checkpoint_dir + "/stage1_last.ckpt", &state);
    }
  }
  return logs;
}

void SaveStage1(const Stage1Model& model, const std::string& path,
                const ParameterStore* optimizer_state) {
  ParameterStore out;
  out.step = model.params().step;
  for (const auto& [name, t] : model.params().entries()) out.AddBuffer(name, t);
  if (optimizer_state) {
    for (const auto& [name, t] : optimizer_state->entries()) out.AddBuffer(name, t);
  }
  SaveParams(out, path);
  std::ofstream cfg(path + ".json");
  if (!cfg) throw IoError("cannot write " + path + ".json");
  cfg << Stage1ConfigToJson(model.config()) << '\n';
}

Stage1Model LoadStage1(const std::string& path, ParameterStore* optimizer_state) {
  std::ifstream cfg(path + ".json");
  if (!cfg) throw IoError("cannot open " + path + ".json");
  std::stringstream text;
  text << cfg.rdbuf();
  Stage1Model model(Stage1ConfigFromJson(text.str()));
  ParameterStore loaded = LoadParams(path);
  model.params().AssignFrom(loaded);
  if (optimizer_state) {
    for (const auto& [name, t] : loaded.entries()) {
      if (name.rfind("__opt/", 0) == 0) optimizer_state->AddBuffer(name, t);
    }
  }
  return model;
}

representation::FrameRepresentation InferStage1(const Stage1Model& model,
                                                const Score& score,
                                                int hop_samples,
                                                int sample_rate) {
  ValidateScore(score);
  NoGradGuard guard;
  Tensor hidden = model.Encode(score);
  Tensor log_dur = model.PredictDurations(hidden);
  std::vector<int> durations;
  for (int i = 0; i < log_dur.dim(0); ++i) {
    const double d = std::round(std::exp(static_cast<double>(log_dur.at(i))));
    durations.push_back(static_cast<int>(std::clamp(d, 1.0, 1e5)));
  }
  Stage1Output out = model.Forward(score, durations);
  const auto& cfg = model.config();
  const int frames = out.log_f0.dim(0);
  representation::FrameRepresentation z;
  z.tokens.layer_ids = cfg.layer_ids;
  z.tokens.vocab = cfg.token_vocab;
  for (size_t l = 0; l < out.token_logits.size(); ++l) {
    const Tensor& logits = out.token_logits[l];
    const int k = cfg.token_vocab[l];
    std::vector<int> ids(frames);
    for (int t = 0; t < frames; ++t) {
      const float* row = logits.storage().data() + static_cast<size_t>(t) * (k + 1);
      ids[t] = static_cast<int>(std::max_element(row, row + k) - row);
    }
    z.tokens.tokens.push_back(std::move(ids));
  }
  z.f0.frame_spec = dsp::FrameSpec{hop_samples, hop_samples, sample_rate};
  z.f0.f0_hz.resize(frames);
  z.f0.voiced.resize(frames);
  for (int t = 0; t < frames; ++t) {
    const double hz = std::exp(static_cast<double>(out.log_f0.at(t)));
    const int tok0 = z.tokens.tokens[0][t];
    const bool silent = std::find(cfg.silence_tokens.begin(),
                                  cfg.silence_tokens.end(),
                                  tok0) != cfg.silence_tokens.end();
    z.f0.voiced[t] = hz > cfg.vuv_min_hz && !silent;
    z.f0.f0_hz[t] = z.f0.voiced[t] ? static_cast<float>(hz) : 0.0f;
  }
  return z;
}

}  // namespace nhsg::stage1
