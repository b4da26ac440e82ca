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

#ifndef NHSG_REPRESENTATION_REPRESENTATION_H_
#define NHSG_REPRESENTATION_REPRESENTATION_H_

#include <cstdint>
#include <string>
#include <vector>

#include "nhsg/dsp/spectral.h"
#include "nhsg/dsp/waveform.h"
#include "nhsg/matrix.h"
#include "nhsg/pitch/pitch.h"

namespace nhsg::representation {

// Frame period shared by tokens, pitch and the vocoder hop.
constexpr double kFramePeriodMs = 20.0;

// Frames covered by `num_samples` at the token rate: floor(len / hop).
int NumTokenFrames(long num_samples, int sample_rate);
int TokenHop(int sample_rate);

struct ContentFeatures {
  std::vector<int> layer_ids;
  std::vector<Matrix> layers;  // T x D_l each
  dsp::FrameSpec frame_spec;

  int num_frames() const {
    return layers.empty() ? 0 : static_cast<int>(layers[0].rows());
  }
};

void ValidateFeatures(const ContentFeatures& f);

enum class ExtractorBackend { kPseudoSsl, kFileIngest };

struct ExtractorConfig {
  ExtractorBackend backend = ExtractorBackend::kPseudoSsl;
  std::vector<int> layer_ids = {5, 8, 9, 12};
  int hidden_dim = 64;
  int n_mels = 80;
  int context = 1;  // neighbouring frames stacked on each side
  uint64_t seed = 20240917;
  std::string ingest_dir;  // file-ingest: <dir>/<source_id>.nhft
};

void ValidateExtractorConfig(const ExtractorConfig& cfg);

// Deterministic multi-layer feature extractor. The pseudo-SSL backend maps
// log-mel frames through a fixed random affine+tanh stack and exposes the
// activations of the configured layers.
class ContentExtractor {
 public:
  explicit ContentExtractor(ExtractorConfig cfg);

  // `source_id` names the ingest file for the file backend; ignored
  // otherwise.
  ContentFeatures Extract(const dsp::Waveform& w,
                          const std::string& source_id = "") const;

  const ExtractorConfig& config() const { return cfg_; }
  int input_dim() const;

 private:
  ContentFeatures ExtractPseudoSsl(const dsp::Waveform& w) const;

  ExtractorConfig cfg_;
  std::vector<Matrix> weights_;  // out x in
  std::vector<Vector> biases_;
};

// Log-mel front end at about 16 kHz with a 20 ms hop; exactly
// NumTokenFrames(len, sr) rows.
Matrix FrontEndLogMel(const dsp::Waveform& w, int n_mels);

// Feature files ("NHFT").
void WriteFeatures(const ContentFeatures& f, const std::string& path);
ContentFeatures ReadFeatures(const std::string& path);

struct Codebook {
  std::vector<int> layer_ids;
  std::vector<Matrix> centroids;  // K_l x D_l, float32-representable
  uint64_t seed = 0;
  std::vector<int> iterations;
  std::vector<double> inertia;

  int vocab_size(size_t layer) const {
    return static_cast<int>(centroids[layer].rows());
  }
};

void ValidateCodebook(const Codebook& cb);

struct KMeansConfig {
  std::vector<int> k_per_layer = {64};  // one entry broadcasts
  int max_iter = 100;
  double tolerance = 1e-4;  // max centroid shift
  uint64_t seed = 0;
};

struct KMeansResult {
  Matrix centroids;
  std::vector<double> inertia_history;  // one value per assignment step
  int iterations = 0;
};

// k-means++ seeding and Lloyd iterations on the rows of `data`. Empty
// clusters are re-seeded to the point farthest from its centroid.
KMeansResult FitKMeansLayer(const Matrix& data, int k, int max_iter,
                            double tolerance, uint64_t seed);

Codebook FitKMeans(const std::vector<ContentFeatures>& features,
                   const KMeansConfig& cfg);

// Nearest centroid by squared Euclidean distance, lowest index on ties.
int NearestCentroid(const Matrix& centroids, const double* x);

struct ContentTokens {
  std::vector<int> layer_ids;
  std::vector<std::vector<int>> tokens;  // per layer, length T
  std::vector<int> vocab;                // K_l; K_l itself is padding

  int num_frames() const {
    return tokens.empty() ? 0 : static_cast<int>(tokens[0].size());
  }
  int num_layers() const { return static_cast<int>(tokens.size()); }
};

ContentTokens Quantize(const ContentFeatures& f, const Codebook& cb);

void WriteCodebook(const Codebook& cb, const std::string& path);
Codebook ReadCodebook(const std::string& path);

struct FrameRepresentation {
  ContentTokens tokens;
  pitch::F0Contour f0;
};

// Tokens plus the pitch contour aligned to the token grid. Throws
// InvalidSegmentError when the clip has no voiced frame.
FrameRepresentation BuildRepresentation(const dsp::Waveform& w,
                                        const ContentExtractor& extractor,
                                        const Codebook& cb,
                                        const pitch::PitchConfig& pitch_cfg,
                                        const std::string& source_id = "");

// Representation cache files ("NHRZ").
void WriteRepresentation(const FrameRepresentation& z, const std::string& path);
FrameRepresentation ReadRepresentation(const std::string& path);

constexpr int kEmbeddingDim = 192;

struct TimbreEmbedding {
  std::vector<float> values;
  std::string source_id;
};

// Throws InvalidEmbeddingError on non-finite values or zero norm.
void ValidateEmbedding(const TimbreEmbedding& e, int dim = kEmbeddingDim);

enum class EmbedderBackend { kBuiltinSpectral, kFileIngest };

struct EmbedderConfig {
  EmbedderBackend backend = EmbedderBackend::kBuiltinSpectral;
  int dim = kEmbeddingDim;  // builtin uses dim/2 mel bands
  uint64_t seed = 7;
  std::string ingest_dir;  // file-ingest: <dir>/<source_id>.nhte
};

class TimbreEmbedder {
 public:
  explicit TimbreEmbedder(EmbedderConfig cfg);
  TimbreEmbedding Embed(const dsp::Waveform& w,
                        const std::string& source_id = "") const;
  const EmbedderConfig& config() const { return cfg_; }

 private:
  EmbedderConfig cfg_;
  Matrix rotation_;
};

void WriteEmbedding(const TimbreEmbedding& e, const std::string& path);
TimbreEmbedding ReadEmbedding(const std::string& path, int dim = kEmbeddingDim);

double Cosine(const std::vector<float>& a, const std::vector<float>& b);

}  // namespace nhsg::representation

#endif  // NHSG_REPRESENTATION_REPRESENTATION_H_
