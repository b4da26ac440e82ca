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

#ifndef NHSG_EVAL_EVAL_H_
#define NHSG_EVAL_EVAL_H_

#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "nhsg/dsp/waveform.h"
#include "nhsg/matrix.h"
#include "nhsg/pitch/pitch.h"
#include "nhsg/representation/representation.h"

namespace nhsg::eval {

// RMSE of ln f0 over frames voiced in both contours, after truncating both
// to the shorter one. nullopt when no frame is co-voiced.
std::optional<double> Lf0Rmse(const pitch::F0Contour& ref, const pitch::F0Contour& hyp);

// Percentage of frames (of the shorter contour) whose voicing differs.
double VuvError(const pitch::F0Contour& ref, const pitch::F0Contour& hyp);

// Cosine; zero norms throw InvalidEmbeddingError, size mismatch ShapeError.
double Sim(const std::vector<float>& a, const std::vector<float>& b);

struct McdConfig {
  int fft_size = 1024;
  int n_mels = 80;
  int first_coeff = 1;  // c0 excluded
  int last_coeff = 24;
};

// Log-mel (20 ms hop) followed by an orthonormal DCT-II per frame; row t
// holds c_0..c_{n_mels-1}. Throws TooShortError below fft/2 + 1 samples.
Matrix MelCepstrum(const dsp::Waveform& w, const McdConfig& cfg = {});

// (10 / ln 10) * sqrt(2) * mean_t sqrt(sum_d (a_td - b_td)^2) over
// d in [first, last], rows trimmed to the shorter input.
double McdFromCepstra(const Matrix& a, const Matrix& b, const McdConfig& cfg = {});
double Mcd(const dsp::Waveform& ref, const dsp::Waveform& hyp, const McdConfig& cfg = {});

enum class Metric { kLf0Rmse, kVuv, kSim, kMcd };
std::string MetricName(Metric m);
Metric ParseMetric(const std::string& name);

struct PairRow {
  std::string id;
  std::string hyp_path;
  std::string ref_path;            // optional
  std::string ref_embedding_path;  // optional
  std::vector<Metric> metrics;
};

// JSON lines; relative paths resolve against the manifest's directory.
// Rows without a "metrics" list get `defaults`.
std::vector<PairRow> ReadPairsManifest(
    const std::string& path,
    const std::vector<Metric>& defaults = {Metric::kLf0Rmse, Metric::kVuv, Metric::kSim,
                                           Metric::kMcd});

struct PairRecord {
  std::string id;
  double lf0_rmse = kNaN;
  double vuv_pct = kNaN;
  double sim = kNaN;
  double mcd = kNaN;
  bool f0_nan = false;
  bool failed = false;
  std::string error;

  static constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
};

struct Aggregate {
  double mean = 0;
  int count = 0;
};

struct MetricReport {
  std::vector<PairRecord> rows;
  Aggregate lf0_rmse, vuv_pct, sim, mcd;
  int f0_nan_count = 0;
  int f0_rows = 0;  // rows where lf0_rmse was requested and computed or flagged
  int failed = 0;
  double f0_nan_pct() const { return f0_rows > 0 ? 100.0 * f0_nan_count / f0_rows : 0.0; }
};

struct EvalContext {
  const representation::TimbreEmbedder* embedder = nullptr;
  pitch::PitchConfig pitch;
  McdConfig mcd;
};

PairRecord EvaluatePair(const PairRow& row, const EvalContext& ctx);
MetricReport Summarize(std::vector<PairRecord> rows);
MetricReport EvaluateManifest(const std::vector<PairRow>& rows, const EvalContext& ctx);

// Fixed column order: id,lf0_rmse,vuv_pct,sim,mcd,f0_nan,failed,error.
void WriteReportCsv(const MetricReport& r, const std::string& path);
MetricReport ReadReportCsv(const std::string& path);
void WriteReportJson(const MetricReport& r, const std::string& path);

}  // namespace nhsg::eval

#endif  // NHSG_EVAL_EVAL_H_
