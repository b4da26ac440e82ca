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

#include "nhsg/segmentation/segmentation.h"

#include <algorithm>
#include <cmath>

#include "nhsg/errors.h"

namespace nhsg::segmentation {
namespace {

constexpr double kRmsWindowSeconds = 0.010;

struct PassParams {
  double threshold_db;
  int min_silence_ms;
};

PassParams ParamsForPass(const SegmentationConfig& cfg, int pass) {
  return {cfg.silence_threshold_db + (pass - 1) * cfg.threshold_step_db,
          std::max(10, cfg.min_silence_ms + (pass - 1) * cfg.min_silence_step_ms)};
}

dsp::Waveform Slice(const dsp::Waveform& w, SampleRange r) {
  dsp::Waveform out;
  out.sample_rate = w.sample_rate;
  out.samples.assign(w.samples.begin() + r.start, w.samples.begin() + r.end);
  return out;
}

class Segmenter {
 public:
  Segmenter(const dsp::Waveform& w, const SegmentationConfig& cfg,
            const std::string& source_id)
      : w_(w), cfg_(cfg), source_id_(source_id) {}

  SegmentationReport Run() {
    report_.passes_used = 0;
    Split({0, static_cast<long>(w_.size())}, 1);
    return std::move(report_);
  }

 private:
  void Split(SampleRange range, int pass) {
    report_.passes_used = std::max(report_.passes_used, pass);
    const PassParams params = ParamsForPass(cfg_, pass);
    const std::vector<SampleRange> silences = DetectSilence(
        Slice(w_, range), params.threshold_db, params.min_silence_ms);

    std::vector<SampleRange> pieces;
    long cursor = range.start;
    for (SampleRange s : silences) {
      s.start += range.start;
      s.end += range.start;
      const bool leading = s.start <= range.start;
      const bool trailing = s.end >= range.end;
      if (leading || trailing) {
        if (s.start > cursor) pieces.push_back({cursor, s.start});
        report_.trimmed_silence.push_back(s);
        cursor = s.end;
        continue;
      }
      const long mid = (s.start + s.end) / 2;
      if (mid > cursor) pieces.push_back({cursor, mid});
      cursor = mid;
    }
    if (cursor < range.end) pieces.push_back({cursor, range.end});

    const long reseg = static_cast<long>(cfg_.resegment_above_s * w_.sample_rate);
    const long max_len = static_cast<long>(cfg_.max_clip_s * w_.sample_rate);
    for (const SampleRange& piece : pieces) {
      if (piece.length() > reseg && pass < cfg_.max_iterations) {
        Split(piece, pass + 1);
      } else if (piece.length() > max_len) {
        report_.discarded.push_back(piece);
      } else {
        Segment seg;
        seg.source_id = source_id_;
        seg.start_sample = piece.start;
        seg.end_sample = piece.end;
        seg.waveform = Slice(w_, piece);
        seg.pass = pass;
        report_.segments.push_back(std::move(seg));
      }
    }
  }

  const dsp::Waveform& w_;
  const SegmentationConfig& cfg_;
  std::string source_id_;
  SegmentationReport report_;
};

}  // namespace

void ValidateSegmentationConfig(const SegmentationConfig& cfg) {
  if (cfg.max_iterations < 1) throw ConfigError("max_iterations must be >= 1");
  if (cfg.resegment_above_s >= cfg.max_clip_s) {
    throw ConfigError("resegment_above_s must be < max_clip_s");
  }
  if (cfg.min_silence_ms <= 0) throw ConfigError("min_silence_ms must be > 0");
}

std::string Segment::FileName() const {
  return source_id + "_" + std::to_string(start_sample) + ".wav";
}

std::vector<SampleRange> DetectSilence(const dsp::Waveform& w,
                                       double threshold_db,
                                       int min_silence_ms) {
  const long len = static_cast<long>(w.size());
  const long win = std::max<long>(
      1, std::lround(kRmsWindowSeconds * w.sample_rate));
  const long min_len = static_cast<long>(
      std::llround(min_silence_ms / 1000.0 * w.sample_rate));

  std::vector<SampleRange> out;
  long run_start = -1;
  auto close_run = [&](long end) {
    if (run_start >= 0 && end - run_start >= min_len) {
      out.push_back({run_start, end});
    }
    run_start = -1;
  };
  for (long start = 0; start < len; start += win) {
    const long end = std::min(len, start + win);
    double energy = 0.0;
    for (long i = start; i < end; ++i) {
      energy += static_cast<double>(w.samples[i]) * w.samples[i];
    }
    const double rms = std::sqrt(energy / (end - start));
    const double db = 20.0 * std::log10(std::max(rms, 1e-12));
    if (db < threshold_db) {
      if (run_start < 0) run_start = start;
    } else {
      close_run(start);
    }
  }
  close_run(len);
  return out;
}

SegmentationReport SegmentRecordingDetailed(const dsp::Waveform& w,
                                            const SegmentationConfig& cfg,
                                            const std::string& source_id) {
  ValidateSegmentationConfig(cfg);
  return Segmenter(w, cfg, source_id).Run();
}

std::vector<Segment> SegmentRecording(const dsp::Waveform& w,
                                      const SegmentationConfig& cfg,
                                      const std::string& source_id) {
  return SegmentRecordingDetailed(w, cfg, source_id).segments;
}

std::vector<Segment> FilterByF0(const std::vector<Segment>& segments,
                                const pitch::PitchConfig& cfg) {
  std::vector<Segment> kept;
  for (const Segment& seg : segments) {
    const dsp::Waveform& w = seg.waveform;
    if (static_cast<long>(w.size()) <
        pitch::MinimumPitchInput(cfg, w.sample_rate)) {
      continue;
    }
    if (pitch::IsValidF0(pitch::EstimateF0(w, cfg))) kept.push_back(seg);
  }
  return kept;
}

}  // namespace nhsg::segmentation
