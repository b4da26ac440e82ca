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

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "nhsg/binary_io.h"
#include "nhsg/errors.h"
#include "nhsg/representation/representation.h"

namespace nhsg::representation {
namespace {

constexpr char kFeatureMagic[] = "NHFT";
constexpr uint32_t kFeatureVersion = 1;
constexpr int kFrontEndRate = 16000;
constexpr int kFrontEndFft = 1024;

// Largest factor near sr/16k that keeps the hop an integer.
int DecimationFactor(int sample_rate, int hop) {
  int q = std::max(1, static_cast<int>(std::lround(
                          static_cast<double>(sample_rate) / kFrontEndRate)));
  while (q > 1 && hop % q != 0) --q;
  return q;
}

}  // namespace

int TokenHop(int sample_rate) {
  const double hop = sample_rate * kFramePeriodMs / 1000.0;
  const int rounded = static_cast<int>(std::lround(hop));
  if (rounded < 1 || std::abs(hop - rounded) > 1e-9) {
    throw UnsupportedError("sample rate " + std::to_string(sample_rate) +
                           " has no integer 20 ms hop");
  }
  return rounded;
}

int NumTokenFrames(long num_samples, int sample_rate) {
  return static_cast<int>(num_samples / TokenHop(sample_rate));
}

void ValidateFeatures(const ContentFeatures& f) {
  if (f.layers.empty()) throw FormatError("features have no layers");
  if (f.layers.size() != f.layer_ids.size()) {
    throw FormatError("layer id count differs from layer count");
  }
  const auto t = f.layers[0].rows();
  for (const auto& m : f.layers) {
    if (m.rows() != t) throw FormatError("frame count differs across layers");
    if (!m.allFinite()) throw FormatError("non-finite feature value");
  }
}

void ValidateExtractorConfig(const ExtractorConfig& cfg) {
  if (cfg.layer_ids.empty()) throw ConfigError("no feature layers");
  std::set<int> seen;
  for (int id : cfg.layer_ids) {
    if (id < 1) throw ConfigError("layer ids are 1-based");
    if (!seen.insert(id).second) throw ConfigError("duplicate layer id");
  }
  if (cfg.hidden_dim < 1) throw ConfigError("hidden_dim < 1");
  if (cfg.n_mels < 1) throw ConfigError("n_mels < 1");
  if (cfg.context < 0) throw ConfigError("context < 0");
  if (cfg.backend == ExtractorBackend::kFileIngest && cfg.ingest_dir.empty()) {
    throw ConfigError("file-ingest extractor needs ingest_dir");
  }
}

Matrix FrontEndLogMel(const dsp::Waveform& w, int n_mels) {
  dsp::ValidateWaveform(w);
  const int hop = TokenHop(w.sample_rate);
  const int frames = NumTokenFrames(static_cast<long>(w.size()), w.sample_rate);
  if (frames < 1) throw TooShortError("clip shorter than one 20 ms frame");
  const int q = DecimationFactor(w.sample_rate, hop);
  dsp::Waveform d = q > 1 ? dsp::DecimateByAveraging(w, q) : w;
  dsp::FrameSpec spec{hop / q, kFrontEndFft, d.sample_rate};
  dsp::Spectrogram s = dsp::LogMel(d, spec, kFrontEndFft, n_mels);
  return s.frames.topRows(frames);
}

ContentExtractor::ContentExtractor(ExtractorConfig cfg) : cfg_(std::move(cfg)) {
  ValidateExtractorConfig(cfg_);
  if (cfg_.backend != ExtractorBackend::kPseudoSsl) return;
  const int depth = *std::max_element(cfg_.layer_ids.begin(), cfg_.layer_ids.end());
  std::mt19937_64 rng(cfg_.seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  int in = input_dim();
  for (int l = 0; l < depth; ++l) {
    const double gain = l == 0 ? 0.5 : 1.5;
    Matrix wmat(cfg_.hidden_dim, in);
    for (Eigen::Index i = 0; i < wmat.size(); ++i) {
      wmat.data()[i] = nd(rng) * gain / std::sqrt(static_cast<double>(in));
    }
    Vector b(cfg_.hidden_dim);
    for (Eigen::Index i = 0; i < b.size(); ++i) b[i] = 0.1 * nd(rng);
    weights_.push_back(std::move(wmat));
    biases_.push_back(std::move(b));
    in = cfg_.hidden_dim;
  }
}

int ContentExtractor::input_dim() const {
  return cfg_.n_mels * (2 * cfg_.context + 1);
}

ContentFeatures ContentExtractor::Extract(const dsp::Waveform& w,
                                          const std::string& source_id) const {
  if (cfg_.backend == ExtractorBackend::kPseudoSsl) return ExtractPseudoSsl(w);
  if (source_id.empty()) throw ConfigError("file-ingest needs a source id");
  ContentFeatures f = ReadFeatures(cfg_.ingest_dir + "/" + source_id + ".nhft");
  if (f.layer_ids != cfg_.layer_ids) {
    throw FormatError(source_id + ": feature layers differ from config");
  }
  return f;
}

ContentFeatures ContentExtractor::ExtractPseudoSsl(const dsp::Waveform& w) const {
  Matrix mel = FrontEndLogMel(w, cfg_.n_mels);
  const int frames = static_cast<int>(mel.rows());
  // Per-frame level removal.
  for (int t = 0; t < frames; ++t) {
    mel.row(t).array() -= mel.row(t).mean();
  }
  Matrix x(frames, input_dim());
  for (int t = 0; t < frames; ++t) {
    for (int c = -cfg_.context; c <= cfg_.context; ++c) {
      const int src = std::clamp(t + c, 0, frames - 1);
      x.block(t, (c + cfg_.context) * cfg_.n_mels, 1, cfg_.n_mels) = mel.row(src);
    }
  }
  ContentFeatures out;
  out.layer_ids = cfg_.layer_ids;
  out.layers.resize(cfg_.layer_ids.size());
  out.frame_spec = dsp::FrameSpec{TokenHop(w.sample_rate), kFrontEndFft,
                                  w.sample_rate};
  Matrix h = x;
  for (size_t l = 0; l < weights_.size(); ++l) {
    Matrix pre = h * weights_[l].transpose();
    pre.rowwise() += biases_[l].transpose();
    h = pre.array().tanh().matrix();
    for (size_t k = 0; k < cfg_.layer_ids.size(); ++k) {
      if (cfg_.layer_ids[k] == static_cast<int>(l) + 1) out.layers[k] = h;
    }
  }
  return out;
}

void WriteFeatures(const ContentFeatures& f, const std::string& path) {
  ValidateFeatures(f);
  io::BinaryWriter w(path);
  w.Magic(kFeatureMagic);
  w.Pod<uint32_t>(kFeatureVersion);
  w.Pod<uint32_t>(static_cast<uint32_t>(f.layers.size()));
  for (size_t l = 0; l < f.layers.size(); ++l) {
    w.Pod<uint32_t>(static_cast<uint32_t>(f.layer_ids[l]));
    w.Pod<uint32_t>(static_cast<uint32_t>(f.layers[l].rows()));
    w.Pod<uint32_t>(static_cast<uint32_t>(f.layers[l].cols()));
  }
  for (const auto& m : f.layers) {
    std::vector<float> buf(m.data(), m.data() + m.size());
    w.Array(buf.data(), buf.size());
  }
  w.Close();
}

ContentFeatures ReadFeatures(const std::string& path) {
  io::BinaryReader r(path);
  r.ExpectHeader(kFeatureMagic, kFeatureVersion);
  const uint32_t n = r.Pod<uint32_t>();
  if (n == 0 || n > 256) throw FormatError(path + ": bad layer count");
  ContentFeatures f;
  std::vector<std::pair<uint32_t, uint32_t>> dims;
  for (uint32_t l = 0; l < n; ++l) {
    f.layer_ids.push_back(static_cast<int>(r.Pod<uint32_t>()));
    const uint32_t t = r.Pod<uint32_t>();
    const uint32_t d = r.Pod<uint32_t>();
    if (d == 0 || d > 65536 || t > (1u << 24)) {
      throw FormatError(path + ": bad layer dims");
    }
    dims.emplace_back(t, d);
  }
  for (const auto& [t, d] : dims) {
    if (t != dims[0].first) {
      throw FormatError(path + ": frame-count mismatch across layers");
    }
    std::vector<float> buf = r.Array<float>(static_cast<size_t>(t) * d);
    Matrix m(t, d);
    std::copy(buf.begin(), buf.end(), m.data());
    f.layers.push_back(std::move(m));
  }
  if (!r.AtEnd()) throw FormatError(path + ": trailing bytes");
  ValidateFeatures(f);
  return f;
}

}  // namespace nhsg::representation
