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

#include <Eigen/QR>

#include <cmath>
#include <random>

#include "nhsg/binary_io.h"
#include "nhsg/errors.h"
#include "nhsg/representation/representation.h"

namespace nhsg::representation {
namespace {

constexpr char kEmbeddingMagic[] = "NHTE";
constexpr uint32_t kEmbeddingVersion = 1;
// Frames more than 50 dB below the loudest frame are ignored.
const double kActiveRangeNats = 50.0 / 20.0 * std::log(10.0);

}  // namespace

double Cosine(const std::vector<float>& a, const std::vector<float>& b) {
  if (a.size() != b.size()) throw ShapeError("cosine of unequal lengths");
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    ab += static_cast<double>(a[i]) * b[i];
    aa += static_cast<double>(a[i]) * a[i];
    bb += static_cast<double>(b[i]) * b[i];
  }
  if (aa == 0.0 || bb == 0.0) throw NumericsError("cosine of zero vector");
  return ab / std::sqrt(aa * bb);
}

void ValidateEmbedding(const TimbreEmbedding& e, int dim) {
  if (static_cast<int>(e.values.size()) != dim) {
    throw FormatError("embedding length " + std::to_string(e.values.size()) +
                      ", expected " + std::to_string(dim));
  }
  double sq = 0.0;
  for (float v : e.values) {
    if (!std::isfinite(v)) throw InvalidEmbeddingError("non-finite embedding");
    sq += static_cast<double>(v) * v;
  }
  if (sq == 0.0) throw InvalidEmbeddingError("zero-norm embedding");
}

TimbreEmbedder::TimbreEmbedder(EmbedderConfig cfg) : cfg_(std::move(cfg)) {
  if (cfg_.dim < 2 || cfg_.dim % 2 != 0) {
    throw ConfigError("embedding dim must be even and >= 2");
  }
  if (cfg_.backend == EmbedderBackend::kFileIngest) {
    if (cfg_.ingest_dir.empty()) throw ConfigError("file-ingest needs ingest_dir");
    return;
  }
  std::mt19937_64 rng(cfg_.seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  Matrix g(cfg_.dim, cfg_.dim);
  for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = nd(rng);
  Eigen::HouseholderQR<Matrix> qr(g);
  rotation_ = qr.householderQ() * Matrix::Identity(cfg_.dim, cfg_.dim);
}

TimbreEmbedding TimbreEmbedder::Embed(const dsp::Waveform& w,
                                      const std::string& source_id) const {
  TimbreEmbedding e;
  e.source_id = source_id;
  if (cfg_.backend == EmbedderBackend::kFileIngest) {
    if (source_id.empty()) throw ConfigError("file-ingest needs a source id");
    e = ReadEmbedding(cfg_.ingest_dir + "/" + source_id + ".nhte", cfg_.dim);
    e.source_id = source_id;
    return e;
  }
  const int bands = cfg_.dim / 2;
  Matrix mel = FrontEndLogMel(w, bands);
  Vector level = mel.rowwise().mean();
  const double top = level.maxCoeff();
  if (top <= std::log(dsp::kLogMelFloor) + 1e-9) {
    throw InvalidEmbeddingError("silent clip has no timbre");
  }
  Vector mean = Vector::Zero(bands);
  Vector sq = Vector::Zero(bands);
  int used = 0;
  for (Eigen::Index t = 0; t < mel.rows(); ++t) {
    if (level[t] < top - kActiveRangeNats) continue;
    mean += mel.row(t).transpose();
    sq += mel.row(t).transpose().cwiseAbs2();
    ++used;
  }
  mean /= used;
  Vector var = (sq / used - mean.cwiseAbs2()).cwiseMax(0.0);
  Vector raw(cfg_.dim);
  raw.head(bands) = mean.array() - mean.mean();  // gain-free envelope
  raw.tail(bands) = var.cwiseSqrt();
  Vector rotated = rotation_ * raw;
  e.values.assign(rotated.data(), rotated.data() + rotated.size());
  ValidateEmbedding(e, cfg_.dim);
  return e;
}

void WriteEmbedding(const TimbreEmbedding& e, const std::string& path) {
  io::BinaryWriter w(path);
  w.Magic(kEmbeddingMagic);
  w.Pod<uint32_t>(kEmbeddingVersion);
  w.Pod<uint32_t>(static_cast<uint32_t>(e.values.size()));
  w.Array(e.values.data(), e.values.size());
  w.Close();
}

TimbreEmbedding ReadEmbedding(const std::string& path, int dim) {
  io::BinaryReader r(path);
  r.ExpectHeader(kEmbeddingMagic, kEmbeddingVersion);
  const uint32_t n = r.Pod<uint32_t>();
  if (static_cast<int>(n) != dim) {
    throw FormatError(path + ": embedding length " + std::to_string(n) +
                      ", expected " + std::to_string(dim));
  }
  TimbreEmbedding e;
  e.values = r.Array<float>(n);
  if (!r.AtEnd()) throw FormatError(path + ": trailing bytes");
  ValidateEmbedding(e, dim);
  return e;
}

}  // namespace nhsg::representation
