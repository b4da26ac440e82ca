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

#include "nhsg/eval/eval.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "nhsg/dsp/spectral.h"
#include "nhsg/errors.h"

namespace nhsg::eval {
namespace {

using nlohmann::json;

std::string Resolve(const std::filesystem::path& base, const std::string& p) {
  if (p.empty()) return p;
  std::filesystem::path path(p);
  return path.is_absolute() ? p : (base / path).string();
}

void Accumulate(Aggregate& a, double v) {
  if (std::isnan(v)) return;
  a.mean += v;
  ++a.count;
}

void Finish(Aggregate& a) {
  if (a.count > 0) a.mean /= a.count;
}

bool Wants(const PairRow& row, Metric m) {
  return std::find(row.metrics.begin(), row.metrics.end(), m) != row.metrics.end();
}

std::string FormatDouble(double v) {
  if (std::isnan(v)) return "nan";
  std::ostringstream s;
  s.precision(17);
  s << v;
  return s.str();
}

double ParseDouble(const std::string& s) {
  if (s == "nan") return PairRecord::kNaN;
  try {
    size_t used = 0;
    double v = std::stod(s, &used);
    if (used != s.size()) throw FormatError("report: bad number '" + s + "'");
    return v;
  } catch (const std::logic_error&) {
    throw FormatError("report: bad number '" + s + "'");
  }
}

constexpr char kHeader[] = "id,lf0_rmse,vuv_pct,sim,mcd,f0_nan,failed,error";

}  // namespace

std::optional<double> Lf0Rmse(const pitch::F0Contour& ref, const pitch::F0Contour& hyp) {
  const int n = std::min(ref.num_frames(), hyp.num_frames());
  double sum = 0.0;
  int count = 0;
  for (int t = 0; t < n; ++t) {
    if (!ref.voiced[t] || !hyp.voiced[t] || ref.f0_hz[t] <= 0 || hyp.f0_hz[t] <= 0) continue;
    const double d = std::log(static_cast<double>(ref.f0_hz[t])) -
                     std::log(static_cast<double>(hyp.f0_hz[t]));
    sum += d * d;
    ++count;
  }
  if (count == 0) return std::nullopt;
  return std::sqrt(sum / count);
}

double VuvError(const pitch::F0Contour& ref, const pitch::F0Contour& hyp) {
  const int n = std::min(ref.num_frames(), hyp.num_frames());
  if (n == 0) return 0.0;
  int diff = 0;
  for (int t = 0; t < n; ++t) diff += ref.voiced[t] != hyp.voiced[t];
  return 100.0 * diff / n;
}

double Sim(const std::vector<float>& a, const std::vector<float>& b) {
  if (a.size() != b.size()) {
    throw ShapeError("sim: " + std::to_string(a.size()) + " vs " + std::to_string(b.size()) +
                     " dims");
  }
  double dot = 0, na = 0, nb = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    dot += static_cast<double>(a[i]) * b[i];
    na += static_cast<double>(a[i]) * a[i];
    nb += static_cast<double>(b[i]) * b[i];
  }
  if (!(na > 0) || !(nb > 0)) throw InvalidEmbeddingError("sim: zero-norm embedding");
  return std::clamp(dot / std::sqrt(na * nb), -1.0, 1.0);
}

Matrix MelCepstrum(const dsp::Waveform& w, const McdConfig& cfg) {
  if (w.samples.size() < static_cast<size_t>(cfg.fft_size / 2 + 1)) {
    throw TooShortError("mcd: " + std::to_string(w.samples.size()) +
                        " samples is too short for one frame");
  }
  dsp::FrameSpec spec;
  spec.sample_rate = w.sample_rate;
  spec.hop_samples = w.sample_rate / 50;
  spec.win_samples = cfg.fft_size;
  const Matrix logmel = dsp::LogMel(w, spec, cfg.fft_size, cfg.n_mels).frames;
  const int n = cfg.n_mels;
  Matrix basis(n, n);
  for (int k = 0; k < n; ++k) {
    const double scale = std::sqrt((k == 0 ? 1.0 : 2.0) / n);
    for (int j = 0; j < n; ++j) basis(k, j) = scale * std::cos(M_PI * k * (j + 0.5) / n);
  }
  return logmel * basis.transpose();
}

double McdFromCepstra(const Matrix& a, const Matrix& b, const McdConfig& cfg) {
  const Eigen::Index frames = std::min(a.rows(), b.rows());
  if (frames == 0) throw TooShortError("mcd: no frames");
  if (cfg.last_coeff >= a.cols() || cfg.last_coeff >= b.cols() || cfg.first_coeff < 0 ||
      cfg.first_coeff > cfg.last_coeff) {
    throw ShapeError("mcd: coefficient range outside the cepstra");
  }
  double total = 0.0;
  for (Eigen::Index t = 0; t < frames; ++t) {
    double s = 0.0;
    for (int d = cfg.first_coeff; d <= cfg.last_coeff; ++d) {
      const double diff = a(t, d) - b(t, d);
      s += diff * diff;
    }
    total += std::sqrt(s);
  }
  return 10.0 / std::log(10.0) * std::sqrt(2.0) * total / static_cast<double>(frames);
}

double Mcd(const dsp::Waveform& ref, const dsp::Waveform& hyp, const McdConfig& cfg) {
  if (ref.sample_rate != hyp.sample_rate) throw ShapeError("mcd: sample rates differ");
  return McdFromCepstra(MelCepstrum(ref, cfg), MelCepstrum(hyp, cfg), cfg);
}

std::string MetricName(Metric m) {
  switch (m) {
    case Metric::kLf0Rmse: return "lf0_rmse";
    case Metric::kVuv: return "vuv";
    case Metric::kSim: return "sim";
    case Metric::kMcd: return "mcd";
  }
  return "";
}

Metric ParseMetric(const std::string& name) {
  for (Metric m : {Metric::kLf0Rmse, Metric::kVuv, Metric::kSim, Metric::kMcd}) {
    if (MetricName(m) == name) return m;
  }
  throw FormatError("unknown metric '" + name + "'");
}

std::vector<PairRow> ReadPairsManifest(const std::string& path,
                                       const std::vector<Metric>& defaults) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  const auto base = std::filesystem::path(path).parent_path();
  std::vector<PairRow> rows;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      json j = json::parse(line);
      PairRow r;
      r.id = j.at("id").get<std::string>();
      r.hyp_path = Resolve(base, j.at("hyp_path").get<std::string>());
      r.ref_path = Resolve(base, j.value("ref_path", ""));
      r.ref_embedding_path = Resolve(base, j.value("ref_embedding_path", ""));
      if (j.contains("metrics")) {
        for (const auto& m : j.at("metrics")) r.metrics.push_back(ParseMetric(m.get<std::string>()));
      } else {
        r.metrics = defaults;
      }
      rows.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw FormatError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return rows;
}

PairRecord EvaluatePair(const PairRow& row, const EvalContext& ctx) {
  PairRecord rec;
  rec.id = row.id;
  try {
    const dsp::Waveform hyp = dsp::ReadWav(row.hyp_path);
    std::optional<dsp::Waveform> ref;
    if (!row.ref_path.empty()) ref = dsp::ReadWav(row.ref_path);
    const bool f0 = Wants(row, Metric::kLf0Rmse) || Wants(row, Metric::kVuv);
    if ((f0 || Wants(row, Metric::kMcd)) && !ref) {
      throw ConfigError("pitch and mcd metrics need ref_path");
    }
    if (f0) {
      const auto rc = pitch::EstimateF0(*ref, ctx.pitch);
      const auto hc = pitch::EstimateF0(hyp, ctx.pitch);
      if (Wants(row, Metric::kLf0Rmse)) {
        const auto v = Lf0Rmse(rc, hc);
        rec.f0_nan = !v.has_value();
        if (v) rec.lf0_rmse = *v;
      }
      if (Wants(row, Metric::kVuv)) rec.vuv_pct = VuvError(rc, hc);
    }
    if (Wants(row, Metric::kMcd)) rec.mcd = Mcd(*ref, hyp, ctx.mcd);
    if (Wants(row, Metric::kSim)) {
      if (!ctx.embedder) throw ConfigError("sim needs an embedder");
      std::vector<float> target;
      if (!row.ref_embedding_path.empty()) {
        target = representation::ReadEmbedding(row.ref_embedding_path).values;
      } else if (ref) {
        target = ctx.embedder->Embed(*ref).values;
      } else {
        throw ConfigError("sim needs ref_path or ref_embedding_path");
      }
      rec.sim = Sim(ctx.embedder->Embed(hyp).values, target);
    }
  } catch (const Error& e) {
    rec.failed = true;
    rec.error = e.what();
  }
  return rec;
}

MetricReport Summarize(std::vector<PairRecord> rows) {
  MetricReport r;
  r.rows = std::move(rows);
  for (const PairRecord& p : r.rows) {
    if (p.failed) {
      ++r.failed;
      continue;
    }
    Accumulate(r.lf0_rmse, p.lf0_rmse);
    Accumulate(r.vuv_pct, p.vuv_pct);
    Accumulate(r.sim, p.sim);
    Accumulate(r.mcd, p.mcd);
    if (p.f0_nan || !std::isnan(p.lf0_rmse)) ++r.f0_rows;
    if (p.f0_nan) ++r.f0_nan_count;
  }
  Finish(r.lf0_rmse);
  Finish(r.vuv_pct);
  Finish(r.sim);
  Finish(r.mcd);
  return r;
}

MetricReport EvaluateManifest(const std::vector<PairRow>& rows, const EvalContext& ctx) {
  std::vector<PairRecord> out;
  out.reserve(rows.size());
  for (const PairRow& row : rows) out.push_back(EvaluatePair(row, ctx));
  return Summarize(std::move(out));
}

void WriteReportCsv(const MetricReport& r, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << kHeader << '\n';
  for (const PairRecord& p : r.rows) {
    std::string err = p.error;
    std::replace(err.begin(), err.end(), ',', ';');
    std::replace(err.begin(), err.end(), '\n', ' ');
    out << p.id << ',' << FormatDouble(p.lf0_rmse) << ',' << FormatDouble(p.vuv_pct) << ','
        << FormatDouble(p.sim) << ',' << FormatDouble(p.mcd) << ',' << (p.f0_nan ? 1 : 0)
        << ',' << (p.failed ? 1 : 0) << ',' << err << '\n';
  }
}

MetricReport ReadReportCsv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line != kHeader) throw FormatError(path + ": bad header");
  std::vector<PairRecord> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.push_back("");
    if (cells.size() != 8) throw FormatError(path + ": expected 8 columns");
    PairRecord p;
    p.id = cells[0];
    p.lf0_rmse = ParseDouble(cells[1]);
    p.vuv_pct = ParseDouble(cells[2]);
    p.sim = ParseDouble(cells[3]);
    p.mcd = ParseDouble(cells[4]);
    p.f0_nan = cells[5] == "1";
    p.failed = cells[6] == "1";
    p.error = cells[7];
    rows.push_back(std::move(p));
  }
  return Summarize(std::move(rows));
}

void WriteReportJson(const MetricReport& r, const std::string& path) {
  auto num = [](double v) { return std::isnan(v) ? json(nullptr) : json(v); };
  json rows = json::array();
  for (const PairRecord& p : r.rows) {
    rows.push_back({{"id", p.id},
                    {"lf0_rmse", num(p.lf0_rmse)},
                    {"vuv_pct", num(p.vuv_pct)},
                    {"sim", num(p.sim)},
                    {"mcd", num(p.mcd)},
                    {"f0_nan", p.f0_nan},
                    {"failed", p.failed},
                    {"error", p.error}});
  }
  auto agg = [](const Aggregate& a) { return json{{"mean", a.mean}, {"count", a.count}}; };
  json j = {{"rows", rows},
            {"aggregate",
             {{"lf0_rmse", agg(r.lf0_rmse)},
              {"vuv_pct", agg(r.vuv_pct)},
              {"sim", agg(r.sim)},
              {"mcd", agg(r.mcd)},
              {"f0_nan_pct", r.f0_nan_pct()},
              {"failed", r.failed}}}};
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << j.dump(2) << '\n';
}

}  // namespace nhsg::eval
