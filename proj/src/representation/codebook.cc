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
#include <limits>
#include <random>
#include <set>

#include "nhsg/binary_io.h"
#include "nhsg/errors.h"
#include "nhsg/representation/representation.h"

namespace nhsg::representation {
namespace {

constexpr char kCodebookMagic[] = "NHCB";
constexpr uint32_t kCodebookVersion = 1;
constexpr char kReprMagic[] = "NHRZ";
constexpr uint32_t kReprVersion = 1;

double SquaredDistance(const double* a, const double* b, Eigen::Index d) {
  double s = 0.0;
  for (Eigen::Index j = 0; j < d; ++j) {
    const double diff = a[j] - b[j];
    s += diff * diff;
  }
  return s;
}

uint64_t LayerSeed(uint64_t seed, size_t layer) {
  return seed ^ (0x9E3779B97F4A7C15ull * (layer + 1));
}

Matrix KMeansPlusPlus(const Matrix& data, int k, std::mt19937_64& rng) {
  const Eigen::Index n = data.rows(), d = data.cols();
  Matrix c(k, d);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto pick_uniform = [&] {
    return std::min<Eigen::Index>(n - 1, static_cast<Eigen::Index>(unit(rng) * n));
  };
  c.row(0) = data.row(pick_uniform());
  std::vector<double> dist(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    dist[i] = SquaredDistance(data.row(i).data(), c.row(0).data(), d);
  }
  for (int j = 1; j < k; ++j) {
    double total = 0.0;
    for (double v : dist) total += v;
    Eigen::Index chosen = 0;
    if (total <= 0.0) {
      chosen = pick_uniform();
    } else {
      const double target = unit(rng) * total;
      double acc = 0.0;
      chosen = n - 1;
      for (Eigen::Index i = 0; i < n; ++i) {
        acc += dist[i];
        if (acc > target && dist[i] > 0.0) {
          chosen = i;
          break;
        }
      }
    }
    c.row(j) = data.row(chosen);
    for (Eigen::Index i = 0; i < n; ++i) {
      dist[i] = std::min(dist[i],
                         SquaredDistance(data.row(i).data(), c.row(j).data(), d));
    }
  }
  return c;
}

}  // namespace

int NearestCentroid(const Matrix& centroids, const double* x) {
  const Eigen::Index d = centroids.cols();
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (Eigen::Index k = 0; k < centroids.rows(); ++k) {
    const double dist = SquaredDistance(x, centroids.row(k).data(), d);
    if (dist < best_d) {
      best_d = dist;
      best = static_cast<int>(k);
    }
  }
  return best;
}

KMeansResult FitKMeansLayer(const Matrix& data, int k, int max_iter,
                            double tolerance, uint64_t seed) {
  if (k < 1) throw ConfigError("k must be >= 1");
  if (data.rows() < k) {
    throw ConfigError("k-means needs at least " + std::to_string(k) +
                      " vectors, got " + std::to_string(data.rows()));
  }
  if (max_iter < 1) throw ConfigError("max_iter must be >= 1");
  if (!data.allFinite()) throw DataError("non-finite k-means input");
  const Eigen::Index n = data.rows(), d = data.cols();
  std::mt19937_64 rng(seed);
  KMeansResult res;
  Matrix c = KMeansPlusPlus(data, k, rng);
  std::vector<int> assign(n);
  std::vector<double> dist(n);
  for (int it = 0; it < max_iter; ++it) {
    double inertia = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      assign[i] = NearestCentroid(c, data.row(i).data());
      dist[i] = SquaredDistance(data.row(i).data(), c.row(assign[i]).data(), d);
      inertia += dist[i];
    }
    res.inertia_history.push_back(inertia);
    Matrix next = Matrix::Zero(k, d);
    std::vector<Eigen::Index> count(k, 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      next.row(assign[i]) += data.row(i);
      ++count[assign[i]];
    }
    std::vector<bool> taken(n, false);
    for (int j = 0; j < k; ++j) {
      if (count[j] > 0) {
        next.row(j) /= static_cast<double>(count[j]);
        continue;
      }
      // Re-seed to the worst-served point.
      Eigen::Index far = -1;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (!taken[i] && (far < 0 || dist[i] > dist[far])) far = i;
      }
      taken[far] = true;
      dist[far] = 0.0;
      next.row(j) = data.row(far);
    }
    double shift = 0.0;
    for (int j = 0; j < k; ++j) {
      shift = std::max(shift, (next.row(j) - c.row(j)).norm());
    }
    c = std::move(next);
    res.iterations = it + 1;
    if (shift < tolerance) break;
  }
  // Stored precision.
  res.centroids = c.cast<float>().cast<double>();
  return res;
}

Codebook FitKMeans(const std::vector<ContentFeatures>& features,
                   const KMeansConfig& cfg) {
  if (features.empty()) throw ConfigError("no features to cluster");
  const auto& ids = features[0].layer_ids;
  for (const auto& f : features) {
    ValidateFeatures(f);
    if (f.layer_ids != ids) throw ShapeError("feature layer ids differ");
  }
  if (cfg.k_per_layer.size() != 1 && cfg.k_per_layer.size() != ids.size()) {
    throw ConfigError("k_per_layer must have 1 or n_layers entries");
  }
  Codebook cb;
  cb.layer_ids = ids;
  cb.seed = cfg.seed;
  for (size_t l = 0; l < ids.size(); ++l) {
    const Eigen::Index d = features[0].layers[l].cols();
    Eigen::Index rows = 0;
    for (const auto& f : features) {
      if (f.layers[l].cols() != d) throw ShapeError("feature dims differ");
      rows += f.layers[l].rows();
    }
    Matrix pooled(rows, d);
    Eigen::Index at = 0;
    for (const auto& f : features) {
      pooled.middleRows(at, f.layers[l].rows()) = f.layers[l];
      at += f.layers[l].rows();
    }
    const int k = cfg.k_per_layer.size() == 1 ? cfg.k_per_layer[0]
                                              : cfg.k_per_layer[l];
    KMeansResult r = FitKMeansLayer(pooled, k, cfg.max_iter, cfg.tolerance,
                                    LayerSeed(cfg.seed, l));
    cb.centroids.push_back(std::move(r.centroids));
    cb.iterations.push_back(r.iterations);
    cb.inertia.push_back(r.inertia_history.back());
  }
  return cb;
}

void ValidateCodebook(const Codebook& cb) {
  if (cb.layer_ids.empty()) throw FormatError("codebook has no layers");
  if (cb.centroids.size() != cb.layer_ids.size()) {
    throw FormatError("codebook layer count mismatch");
  }
  std::set<int> seen;
  for (int id : cb.layer_ids) {
    if (!seen.insert(id).second) throw FormatError("duplicate codebook layer");
  }
  for (const auto& c : cb.centroids) {
    if (c.rows() < 1 || c.cols() < 1) throw FormatError("empty codebook layer");
    if (!c.allFinite()) throw FormatError("non-finite centroid");
  }
}

ContentTokens Quantize(const ContentFeatures& f, const Codebook& cb) {
  ValidateCodebook(cb);
  if (f.layer_ids != cb.layer_ids) {
    throw ShapeError("feature layers do not match codebook layers");
  }
  ContentTokens out;
  out.layer_ids = cb.layer_ids;
  for (size_t l = 0; l < cb.layer_ids.size(); ++l) {
    const Matrix& x = f.layers[l];
    const Matrix& c = cb.centroids[l];
    if (x.cols() != c.cols()) {
      throw ShapeError("layer " + std::to_string(cb.layer_ids[l]) + ": dim " +
                       std::to_string(x.cols()) + " vs codebook " +
                       std::to_string(c.cols()));
    }
    std::vector<int> ids(x.rows());
    for (Eigen::Index t = 0; t < x.rows(); ++t) {
      ids[t] = NearestCentroid(c, x.row(t).data());
    }
    out.tokens.push_back(std::move(ids));
    out.vocab.push_back(static_cast<int>(c.rows()));
  }
  return out;
}

void WriteCodebook(const Codebook& cb, const std::string& path) {
  ValidateCodebook(cb);
  io::BinaryWriter w(path);
  w.Magic(kCodebookMagic);
  w.Pod<uint32_t>(kCodebookVersion);
  w.Pod<uint32_t>(static_cast<uint32_t>(cb.layer_ids.size()));
  for (size_t l = 0; l < cb.layer_ids.size(); ++l) {
    w.Pod<uint32_t>(static_cast<uint32_t>(cb.layer_ids[l]));
    w.Pod<uint32_t>(static_cast<uint32_t>(cb.centroids[l].rows()));
    w.Pod<uint32_t>(static_cast<uint32_t>(cb.centroids[l].cols()));
  }
  for (const auto& c : cb.centroids) {
    std::vector<float> buf(c.size());
    for (Eigen::Index i = 0; i < c.size(); ++i) {
      buf[i] = static_cast<float>(c.data()[i]);
    }
    w.Array(buf.data(), buf.size());
  }
  // Training metadata trailer.
  w.Pod<uint64_t>(cb.seed);
  for (size_t l = 0; l < cb.layer_ids.size(); ++l) {
    w.Pod<uint32_t>(l < cb.iterations.size() ? cb.iterations[l] : 0);
    w.Pod<double>(l < cb.inertia.size() ? cb.inertia[l] : 0.0);
  }
  w.Close();
}

Codebook ReadCodebook(const std::string& path) {
  io::BinaryReader r(path);
  r.ExpectHeader(kCodebookMagic, kCodebookVersion);
  const uint32_t n = r.Pod<uint32_t>();
  if (n == 0 || n > 256) throw FormatError(path + ": bad layer count");
  Codebook cb;
  std::vector<std::pair<uint32_t, uint32_t>> dims;
  for (uint32_t l = 0; l < n; ++l) {
    cb.layer_ids.push_back(static_cast<int>(r.Pod<uint32_t>()));
    const uint32_t k = r.Pod<uint32_t>();
    const uint32_t d = r.Pod<uint32_t>();
    if (k == 0 || d == 0 || k > (1u << 20) || d > 65536) {
      throw FormatError(path + ": bad codebook dims");
    }
    dims.emplace_back(k, d);
  }
  for (const auto& [k, d] : dims) {
    std::vector<float> buf = r.Array<float>(static_cast<size_t>(k) * d);
    Matrix c(k, d);
    for (size_t i = 0; i < buf.size(); ++i) c.data()[i] = buf[i];
    cb.centroids.push_back(std::move(c));
  }
  cb.seed = r.Pod<uint64_t>();
  for (uint32_t l = 0; l < n; ++l) {
    cb.iterations.push_back(static_cast<int>(r.Pod<uint32_t>()));
    cb.inertia.push_back(r.Pod<double>());
  }
  if (!r.AtEnd()) throw FormatError(path + ": trailing bytes");
  ValidateCodebook(cb);
  return cb;
}

FrameRepresentation BuildRepresentation(const dsp::Waveform& w,
                                        const ContentExtractor& extractor,
                                        const Codebook& cb,
                                        const pitch::PitchConfig& pitch_cfg,
                                        const std::string& source_id) {
  ContentFeatures f = extractor.Extract(w, source_id);
  FrameRepresentation z;
  z.tokens = Quantize(f, cb);
  const int frames = z.tokens.num_frames();
  pitch::F0Contour f0 = pitch::EstimateF0(w, pitch_cfg);
  if (!pitch::IsValidF0(f0)) {
    throw InvalidSegmentError("no voiced frame" +
                              (source_id.empty() ? "" : " in " + source_id));
  }
  if (f0.frame_spec.hop_samples == TokenHop(w.sample_rate) &&
      f0.num_frames() >= frames) {
    // Same grid; the pitch track only has the extra trailing frame.
    f0.f0_hz.resize(frames);
    f0.voiced.resize(frames);
    z.f0 = std::move(f0);
  } else {
    z.f0 = pitch::AlignF0(f0, frames);
  }
  return z;
}

void WriteRepresentation(const FrameRepresentation& z, const std::string& path) {
  const int frames = z.tokens.num_frames();
  if (z.f0.num_frames() != frames) {
    throw ShapeError("token and pitch frame counts differ");
  }
  io::BinaryWriter w(path);
  w.Magic(kReprMagic);
  w.Pod<uint32_t>(kReprVersion);
  w.Pod<uint32_t>(static_cast<uint32_t>(z.tokens.num_layers()));
  w.Pod<uint32_t>(static_cast<uint32_t>(frames));
  w.Pod<uint32_t>(static_cast<uint32_t>(z.f0.frame_spec.hop_samples));
  w.Pod<uint32_t>(static_cast<uint32_t>(z.f0.frame_spec.sample_rate));
  for (int l = 0; l < z.tokens.num_layers(); ++l) {
    w.Pod<uint32_t>(static_cast<uint32_t>(z.tokens.layer_ids[l]));
    w.Pod<uint32_t>(static_cast<uint32_t>(z.tokens.vocab[l]));
  }
  for (const auto& seq : z.tokens.tokens) {
    std::vector<int32_t> buf(seq.begin(), seq.end());
    w.Array(buf.data(), buf.size());
  }
  w.Array(z.f0.f0_hz.data(), z.f0.f0_hz.size());
  std::vector<uint8_t> voiced(z.f0.voiced.begin(), z.f0.voiced.end());
  w.Array(voiced.data(), voiced.size());
  w.Close();
}

FrameRepresentation ReadRepresentation(const std::string& path) {
  io::BinaryReader r(path);
  r.ExpectHeader(kReprMagic, kReprVersion);
  const uint32_t n = r.Pod<uint32_t>();
  const uint32_t frames = r.Pod<uint32_t>();
  if (n == 0 || n > 256 || frames > (1u << 24)) {
    throw FormatError(path + ": bad header");
  }
  FrameRepresentation z;
  z.f0.frame_spec.hop_samples = static_cast<int>(r.Pod<uint32_t>());
  z.f0.frame_spec.sample_rate = static_cast<int>(r.Pod<uint32_t>());
  for (uint32_t l = 0; l < n; ++l) {
    z.tokens.layer_ids.push_back(static_cast<int>(r.Pod<uint32_t>()));
    z.tokens.vocab.push_back(static_cast<int>(r.Pod<uint32_t>()));
  }
  for (uint32_t l = 0; l < n; ++l) {
    std::vector<int32_t> buf = r.Array<int32_t>(frames);
    for (int32_t v : buf) {
      if (v < 0 || v >= z.tokens.vocab[l]) {
        throw FormatError(path + ": token out of vocabulary");
      }
    }
    z.tokens.tokens.emplace_back(buf.begin(), buf.end());
  }
  z.f0.f0_hz = r.Array<float>(frames);
  std::vector<uint8_t> voiced = r.Array<uint8_t>(frames);
  z.f0.voiced.assign(voiced.begin(), voiced.end());
  if (!r.AtEnd()) throw FormatError(path + ": trailing bytes");
  return z;
}

}  // namespace nhsg::representation
