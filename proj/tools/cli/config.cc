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

#include "cli/config.h"

#include <charconv>
#include <cstdlib>
#include <functional>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "nhsg/errors.h"
#include "nhsg/numerics/seeding.h"

namespace nhsg::cli {
namespace {

using Values = std::vector<std::string>;
using Setter = std::function<void(PipelineConfig&, const Values&)>;

std::string One(const Values& v) {
  if (v.size() != 1) throw std::invalid_argument("expected a single value");
  return v[0];
}

int64_t ToInt(const std::string& s) {
  int64_t x = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), x);
  if (ec != std::errc() || p != s.data() + s.size()) {
    throw std::invalid_argument("'" + s + "' is not an integer");
  }
  return x;
}

double ToDouble(const std::string& s) {
  char* end = nullptr;
  const double x = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) {
    throw std::invalid_argument("'" + s + "' is not a number");
  }
  return x;
}

bool ToBool(const std::string& s) {
  if (s == "true") return true;
  if (s == "false") return false;
  throw std::invalid_argument("'" + s + "' is not true/false");
}

template <typename T, typename Get>
Setter Int(Get get) {
  return [get](PipelineConfig& c, const Values& v) { get(c) = static_cast<T>(ToInt(One(v))); };
}

template <typename Get>
Setter Real(Get get) {
  return [get](PipelineConfig& c, const Values& v) { get(c) = ToDouble(One(v)); };
}

template <typename Get>
Setter Flag(Get get) {
  return [get](PipelineConfig& c, const Values& v) { get(c) = ToBool(One(v)); };
}

template <typename Get>
Setter Text(Get get) {
  return [get](PipelineConfig& c, const Values& v) { get(c) = One(v); };
}

template <typename Get>
Setter IntList(Get get) {
  return [get](PipelineConfig& c, const Values& v) {
    std::vector<int> out;
    for (const auto& s : v) out.push_back(static_cast<int>(ToInt(s)));
    get(c) = out;
  };
}

template <typename E, typename Get>
Setter Choice(Get get, std::map<std::string, E> names) {
  return [get, names](PipelineConfig& c, const Values& v) {
    auto it = names.find(One(v));
    if (it == names.end()) throw std::invalid_argument("unknown choice '" + One(v) + "'");
    get(c) = it->second;
  };
}

const std::map<std::string, OptimizerKind> kOptimizers = {{"adam", OptimizerKind::kAdam},
                                                          {"adamw", OptimizerKind::kAdamW}};

#define F(expr) [](PipelineConfig& c) -> auto& { return c.expr; }

void AddOptimizer(std::vector<std::pair<std::string, Setter>>& keys, const std::string& prefix,
                  std::function<OptimizerConfig&(PipelineConfig&)> get) {
  auto field = [get](auto member) {
    return [get, member](PipelineConfig& c) -> auto& { return get(c).*member; };
  };
  keys.emplace_back(prefix + "optimizer", Choice<OptimizerKind>(field(&OptimizerConfig::kind), kOptimizers));
  keys.emplace_back(prefix + "lr", Real(field(&OptimizerConfig::lr)));
  keys.emplace_back(prefix + "beta1", Real(field(&OptimizerConfig::beta1)));
  keys.emplace_back(prefix + "beta2", Real(field(&OptimizerConfig::beta2)));
  keys.emplace_back(prefix + "weight_decay", Real(field(&OptimizerConfig::weight_decay)));
  keys.emplace_back(prefix + "warmup_steps", Int<int64_t>(field(&OptimizerConfig::warmup_steps)));
  keys.emplace_back(prefix + "decay_gamma", Real(field(&OptimizerConfig::decay_gamma)));
  keys.emplace_back(prefix + "decay_every", Int<int64_t>(field(&OptimizerConfig::decay_every)));
  keys.emplace_back(prefix + "clip_norm", Real(field(&OptimizerConfig::clip_norm)));
  keys.emplace_back(prefix + "warmup_clip_norm", Real(field(&OptimizerConfig::warmup_clip_norm)));
}

Setter MelScales(bool fft) {
  return [fft](PipelineConfig& c, const Values& v) {
    auto& scales = c.stage2_train.mel.scales;
    scales.resize(v.size(), {1024, 80});
    for (size_t i = 0; i < v.size(); ++i) {
      (fft ? scales[i].fft_size : scales[i].n_mels) = static_cast<int>(ToInt(v[i]));
    }
  };
}

const std::vector<std::pair<std::string, Setter>>& Registry() {
  static const auto keys = [] {
    std::vector<std::pair<std::string, Setter>> k;
    k.emplace_back("version", Int<int>(F(version)));
    k.emplace_back("seed", Int<uint64_t>(F(seed)));

    k.emplace_back("audio.sample_rate", Int<int>(F(sample_rate)));

    k.emplace_back("pitch.fmin", Real(F(pitch.fmin)));
    k.emplace_back("pitch.fmax", Real(F(pitch.fmax)));
    k.emplace_back("pitch.harmonicity_threshold", Real(F(pitch.harmonicity_threshold)));

    k.emplace_back("segmentation.silence_threshold_db", Real(F(segmentation.silence_threshold_db)));
    k.emplace_back("segmentation.min_silence_ms", Int<int>(F(segmentation.min_silence_ms)));
    k.emplace_back("segmentation.max_clip_s", Real(F(segmentation.max_clip_s)));
    k.emplace_back("segmentation.resegment_above_s", Real(F(segmentation.resegment_above_s)));
    k.emplace_back("segmentation.max_iterations", Int<int>(F(segmentation.max_iterations)));
    k.emplace_back("segmentation.threshold_step_db", Real(F(segmentation.threshold_step_db)));
    k.emplace_back("segmentation.min_silence_step_ms", Int<int>(F(segmentation.min_silence_step_ms)));
    k.emplace_back("segmentation.filter_unvoiced", Flag(F(filter_unvoiced)));

    k.emplace_back("representation.extractor",
                   Choice<representation::ExtractorBackend>(
                       F(extractor.backend),
                       {{"pseudo_ssl", representation::ExtractorBackend::kPseudoSsl},
                        {"ingest", representation::ExtractorBackend::kFileIngest}}));
    k.emplace_back("representation.feature_dir", Text(F(extractor.ingest_dir)));
    k.emplace_back("representation.layer_ids", IntList(F(extractor.layer_ids)));
    k.emplace_back("representation.hidden_dim", Int<int>(F(extractor.hidden_dim)));
    k.emplace_back("representation.n_mels", Int<int>(F(extractor.n_mels)));
    k.emplace_back("representation.context", Int<int>(F(extractor.context)));
    k.emplace_back("representation.extractor_seed", Int<uint64_t>(F(extractor.seed)));
    k.emplace_back("representation.clusters", IntList(F(kmeans.k_per_layer)));
    k.emplace_back("representation.kmeans_max_iter", Int<int>(F(kmeans.max_iter)));
    k.emplace_back("representation.kmeans_tolerance", Real(F(kmeans.tolerance)));
    k.emplace_back("representation.embedder",
                   Choice<representation::EmbedderBackend>(
                       F(embedder.backend),
                       {{"builtin", representation::EmbedderBackend::kBuiltinSpectral},
                        {"ingest", representation::EmbedderBackend::kFileIngest}}));
    k.emplace_back("representation.embedding_dir", Text(F(embedder.ingest_dir)));
    k.emplace_back("representation.embedder_seed", Int<uint64_t>(F(embedder.seed)));
    k.emplace_back("representation.codebook", Text(F(codebook)));

    k.emplace_back("stage1.dim", Int<int>(F(stage1.dim)));
    k.emplace_back("stage1.heads", Int<int>(F(stage1.heads)));
    k.emplace_back("stage1.encoder_layers", Int<int>(F(stage1.encoder_layers)));
    k.emplace_back("stage1.decoder_layers", Int<int>(F(stage1.decoder_layers)));
    k.emplace_back("stage1.ffn_dim", Int<int>(F(stage1.ffn_dim)));
    k.emplace_back("stage1.conv_kernel", Int<int>(F(stage1.conv_kernel)));
    k.emplace_back("stage1.max_relative", Int<int>(F(stage1.max_relative)));
    k.emplace_back("stage1.duration_hidden", Int<int>(F(stage1.duration_hidden)));
    k.emplace_back("stage1.pitch_hidden", Int<int>(F(stage1.pitch_hidden)));
    k.emplace_back("stage1.lambda_out", Real(F(stage1.lambda_out)));
    k.emplace_back("stage1.lambda_dur", Real(F(stage1.lambda_dur)));
    k.emplace_back("stage1.lambda_pitch", Real(F(stage1.lambda_pitch)));
    k.emplace_back("stage1.output_loss",
                   Choice<stage1::OutputLoss>(F(stage1.output_loss),
                                              {{"cross_entropy", stage1::OutputLoss::kCrossEntropy},
                                               {"l1_onehot", stage1::OutputLoss::kL1OneHot}}));
    k.emplace_back("stage1.vuv_min_hz", Real(F(stage1.vuv_min_hz)));
    k.emplace_back("stage1.silence_tokens", IntList(F(stage1.silence_tokens)));
    k.emplace_back("stage1.epochs", Int<int>(F(stage1_train.epochs)));
    k.emplace_back("stage1.batch_size", Int<int>(F(stage1_train.batch_size)));
    k.emplace_back("stage1.lr", Real(F(stage1_train.lr)));
    k.emplace_back("stage1.clip_norm", Real(F(stage1_train.clip_norm)));
    k.emplace_back("stage1.decay_gamma", Real(F(stage1_train.decay_gamma)));
    k.emplace_back("stage1.decay_every", Int<int>(F(stage1_train.decay_every)));
    k.emplace_back("stage1.checkpoint_every_epochs", Int<int>(F(stage1_train.checkpoint_every_epochs)));
    k.emplace_back("stage1.max_steps", Int<int>(F(stage1_train.max_steps)));

    k.emplace_back("stage2.token_dim", Int<int>(F(generator.token_dim)));
    k.emplace_back("stage2.f0_dim", Int<int>(F(generator.f0_dim)));
    k.emplace_back("stage2.upsample_factors", IntList(F(generator.upsample_factors)));
    k.emplace_back("stage2.resblock_kernels", IntList(F(generator.resblock_kernels)));
    k.emplace_back("stage2.resblock_dilations", IntList(F(generator.resblock_dilations)));
    k.emplace_back("stage2.base_channels", Int<int>(F(generator.base_channels)));
    k.emplace_back("stage2.min_channels", Int<int>(F(generator.min_channels)));
    k.emplace_back("stage2.periods", IntList(F(discriminator.periods)));
    k.emplace_back("stage2.period_channels", IntList(F(discriminator.period_channels)));
    k.emplace_back("stage2.period_kernel", Int<int>(F(discriminator.period_kernel)));
    k.emplace_back("stage2.period_stride", Int<int>(F(discriminator.period_stride)));
    k.emplace_back("stage2.stft_sizes", IntList(F(discriminator.stft_sizes)));
    k.emplace_back("stage2.n_bands", Int<int>(F(discriminator.n_bands)));
    k.emplace_back("stage2.band_channels", Int<int>(F(discriminator.band_channels)));
    k.emplace_back("stage2.steps", Int<int64_t>(F(stage2_train.steps)));
    k.emplace_back("stage2.batch_size", Int<int>(F(stage2_train.batch_size)));
    k.emplace_back("stage2.segment_samples", Int<int>(F(stage2_train.segment_samples)));
    k.emplace_back("stage2.objective",
                   Choice<stage2::GanObjective>(F(stage2_train.weights.objective),
                                                {{"least_squares", stage2::GanObjective::kLeastSquares},
                                                 {"hinge", stage2::GanObjective::kHinge}}));
    k.emplace_back("stage2.lambda_adv", Real(F(stage2_train.weights.adv)));
    k.emplace_back("stage2.lambda_fm", Real(F(stage2_train.weights.fm)));
    k.emplace_back("stage2.lambda_mel", Real(F(stage2_train.weights.mel)));
    k.emplace_back("stage2.mel_fft_sizes", MelScales(true));
    k.emplace_back("stage2.mel_bins", MelScales(false));
    k.emplace_back("stage2.checkpoint_every", Int<int64_t>(F(stage2_train.checkpoint_every)));
    AddOptimizer(k, "stage2.gen_", F(stage2_train.gen_opt));
    AddOptimizer(k, "stage2.disc_", F(stage2_train.disc_opt));

    k.emplace_back("finetune.steps", Int<int64_t>(F(finetune.train.steps)));
    k.emplace_back("finetune.batch_size", Int<int>(F(finetune.train.batch_size)));
    k.emplace_back("finetune.segment_samples", Int<int>(F(finetune.train.segment_samples)));
    k.emplace_back("finetune.checkpoint_every", Int<int64_t>(F(finetune.train.checkpoint_every)));
    k.emplace_back("finetune.oversampling", Real(F(finetune.oversampling)));
    k.emplace_back("finetune.lambda_token", Real(F(finetune.aux.token)));
    k.emplace_back("finetune.lambda_f0", Real(F(finetune.aux.f0)));
    k.emplace_back("finetune.lambda_timbre", Real(F(finetune.aux.timbre)));
    k.emplace_back("finetune.unpaired_weight", Real(F(finetune.unpaired_weight)));
    k.emplace_back("finetune.pairing",
                   Choice<finetune::PairingMode>(F(finetune.pairing),
                                                 {{"uniform", finetune::PairingMode::kUniform},
                                                  {"derangement", finetune::PairingMode::kDerangement}}));
    k.emplace_back("finetune.force_self_pairing", Flag(F(finetune.force_self_pairing)));
    k.emplace_back("finetune.predictor_kernels", IntList(F(predictor.kernels)));
    k.emplace_back("finetune.predictor_strides", IntList(F(predictor.strides)));
    k.emplace_back("finetune.predictor_paddings", IntList(F(predictor.paddings)));
    k.emplace_back("finetune.predictor_channels", IntList(F(predictor.channels)));
    AddOptimizer(k, "finetune.gen_", F(finetune.train.gen_opt));
    AddOptimizer(k, "finetune.disc_", F(finetune.train.disc_opt));
    AddOptimizer(k, "finetune.predictor_", F(finetune.predictor_opt));

    k.emplace_back("eval.mcd_fft_size", Int<int>(F(mcd.fft_size)));
    k.emplace_back("eval.mcd_n_mels", Int<int>(F(mcd.n_mels)));
    k.emplace_back("eval.mcd_first_coeff", Int<int>(F(mcd.first_coeff)));
    k.emplace_back("eval.mcd_last_coeff", Int<int>(F(mcd.last_coeff)));
    k.emplace_back("eval.metrics", [](PipelineConfig& c, const Values& v) {
      c.metrics.clear();
      for (const auto& s : v) c.metrics.push_back(eval::ParseMetric(s));
    });
    return k;
  }();
  return keys;
}

#undef F

const Setter* FindKey(const std::string& name) {
  for (const auto& [key, set] : Registry()) {
    if (key == name) return &set;
  }
  return nullptr;
}

void Apply(PipelineConfig& cfg, const std::string& key, const Values& values,
           std::vector<std::string>& problems) {
  const Setter* set = FindKey(key);
  if (!set) {
    problems.push_back(key + ": unknown key");
    return;
  }
  try {
    (*set)(cfg, values);
  } catch (const std::exception& e) {
    problems.push_back(key + ": " + e.what());
  }
}

// "[1, 2]" or "1,2" or a scalar; quotes stripped.
Values SplitOverride(std::string v) {
  auto trim = [](std::string s) {
    const auto a = s.find_first_not_of(" \t\"'");
    const auto b = s.find_last_not_of(" \t\"'");
    return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
  };
  v = trim(v);
  if (!v.empty() && v.front() == '[' && v.back() == ']') v = v.substr(1, v.size() - 2);
  Values out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  if (out.empty()) out.push_back("");
  return out;
}

void Throw(const std::vector<std::string>& problems) {
  if (problems.empty()) return;
  std::string msg = "invalid configuration:";
  for (const auto& p : problems) msg += "\n  " + p;
  throw ConfigError(msg);
}

}  // namespace

PipelineConfig DefaultConfig() {
  PipelineConfig c;
  c.kmeans.k_per_layer = {32};
  c.kmeans.max_iter = 50;
  c.stage1_train.epochs = 100;
  c.stage1_train.batch_size = 4;
  c.stage1_train.lr = 2e-3;
  c.stage2_train.steps = 2000;
  c.finetune.train.steps = 500;
  c.finetune.train.batch_size = 2;
  DeriveComponentSettings(c);
  return c;
}

std::vector<std::string> ConfigKeys() {
  std::vector<std::string> out;
  for (const auto& [key, set] : Registry()) out.push_back(key);
  return out;
}

PipelineConfig LoadPipelineConfig(const ConfigSources& src) {
  PipelineConfig cfg = DefaultConfig();
  std::vector<std::string> problems;
  if (!src.path.empty()) {
    std::vector<CLI::ConfigItem> items;
    try {
      items = CLI::ConfigTOML().from_file(src.path);
    } catch (const CLI::Error& e) {
      throw ConfigError(src.path + ": " + e.what());
    }
    bool has_version = false;
    for (const auto& item : items) {
      if (item.name == "++" || item.name == "--") continue;
      std::string key;
      for (const auto& p : item.parents) key += p + ".";
      key += item.name;
      if (key == "version") has_version = true;
      Apply(cfg, key, item.inputs, problems);
    }
    if (!has_version) problems.push_back("version: missing (required)");
    if (has_version && cfg.version != kConfigVersion) {
      problems.push_back("version: " + std::to_string(cfg.version) + " is not supported (expected " +
                         std::to_string(kConfigVersion) + ")");
    }
  }
  if (src.use_env_seed) {
    if (const char* env = std::getenv("NHSG_SEED"); env && *env) {
      Apply(cfg, "seed", {env}, problems);
    }
  }
  for (const auto& o : src.overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) {
      problems.push_back(o + ": override must be section.key=value");
      continue;
    }
    Apply(cfg, o.substr(0, eq), SplitOverride(o.substr(eq + 1)), problems);
  }
  if (src.seed_flag) cfg.seed = *src.seed_flag;
  Throw(problems);
  DeriveComponentSettings(cfg);
  ValidatePipelineConfig(cfg);
  return cfg;
}

void DeriveComponentSettings(PipelineConfig& c) {
  const uint64_t s = c.seed;
  c.kmeans.seed = s;
  c.stage1.seed = Mix64(s, 1);
  c.stage1_train.seed = s;
  c.generator.seed = Mix64(s, 2);
  c.generator.sample_rate = c.sample_rate;
  c.generator.layer_ids = c.extractor.layer_ids;
  c.stage1.layer_ids = c.extractor.layer_ids;
  c.predictor.layer_ids = c.extractor.layer_ids;
  c.discriminator.seed = Mix64(s, 3);
  c.predictor.seed = Mix64(s, 4);
  c.stage2_train.seed = s;
  c.stage2_train.mel.sample_rate = c.sample_rate;
  c.finetune.train.seed = s;
  c.finetune.train.weights = c.stage2_train.weights;
  c.finetune.train.mel = c.stage2_train.mel;
  c.pitch.frame_period_ms = representation::kFramePeriodMs;
}

void ValidatePipelineConfig(const PipelineConfig& c) {
  std::vector<std::string> problems;
  auto check = [&](const char* section, auto&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      problems.push_back(std::string(section) + ": " + e.what());
    }
  };
  const int hop = representation::TokenHop(c.sample_rate);
  check("audio", [&] {
    if (c.sample_rate < 8000) throw ConfigError("sample_rate below 8000");
  });
  check("pitch", [&] { pitch::ValidatePitchConfig(c.pitch, c.sample_rate); });
  check("segmentation", [&] { segmentation::ValidateSegmentationConfig(c.segmentation); });
  check("representation", [&] { representation::ValidateExtractorConfig(c.extractor); });
  check("representation", [&] {
    const auto& k = c.kmeans.k_per_layer;
    if (k.size() != 1 && k.size() != c.extractor.layer_ids.size()) {
      throw ConfigError("clusters needs one entry or one per layer");
    }
    for (int v : k) {
      if (v < 2) throw ConfigError("clusters must be >= 2");
    }
    if (c.kmeans.max_iter < 1) throw ConfigError("kmeans_max_iter must be >= 1");
    if (c.embedder.dim != representation::kEmbeddingDim) throw ConfigError("embedding dim");
  });
  check("stage1", [&] {
    auto s = c.stage1;
    if (s.phonemes.empty()) s.phonemes = {stage1::kRestPhoneme};
    s.token_vocab.assign(s.layer_ids.size(), 8);
    stage1::ValidateStage1Config(s);
    if (c.stage1_train.epochs < 1 || c.stage1_train.batch_size < 1 || !(c.stage1_train.lr > 0)) {
      throw ConfigError("epochs, batch_size and lr must be positive");
    }
  });
  check("stage2", [&] {
    auto g = c.generator;
    g.token_vocab.assign(g.layer_ids.size(), 8);
    stage2::ValidateGeneratorConfig(g);
    if (g.hop() != hop) {
      throw ConfigError("upsample_factors multiply to " + std::to_string(g.hop()) +
                        ", the frame hop is " + std::to_string(hop));
    }
  });
  check("stage2", [&] { stage2::ValidateDiscriminatorConfig(c.discriminator); });
  check("stage2", [&] { stage2::ValidateStage2TrainConfig(c.stage2_train, hop); });
  check("finetune", [&] { finetune::ValidateFinetuneConfig(c.finetune, hop); });
  check("finetune", [&] {
    auto p = c.predictor;
    p.token_vocab.assign(p.layer_ids.size(), 8);
    finetune::ValidatePredictorConfig(p, hop);
  });
  check("eval", [&] {
    if (c.mcd.first_coeff < 0 || c.mcd.last_coeff < c.mcd.first_coeff ||
        c.mcd.last_coeff >= c.mcd.n_mels) {
      throw ConfigError("mcd coefficient range outside 0..n_mels-1");
    }
    if ((c.mcd.fft_size & (c.mcd.fft_size - 1)) != 0) throw ConfigError("mcd_fft_size not a power of two");
  });
  Throw(problems);
}

}  // namespace nhsg::cli
