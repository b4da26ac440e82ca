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

#ifndef NHSG_SEGMENTATION_SEGMENTATION_H_
#define NHSG_SEGMENTATION_SEGMENTATION_H_

#include <string>
#include <utility>
#include <vector>

#include "nhsg/dsp/waveform.h"
#include "nhsg/pitch/pitch.h"

namespace nhsg::segmentation {

struct SegmentationConfig {
  double silence_threshold_db = -40.0;  // RMS, relative to full scale
  int min_silence_ms = 300;
  double max_clip_s = 30.0;
  double resegment_above_s = 15.0;
  int max_iterations = 3;
  // Applied once per extra pass.
  double threshold_step_db = 5.0;
  int min_silence_step_ms = -100;
};

void ValidateSegmentationConfig(const SegmentationConfig& cfg);

// Half-open sample range [start, end).
struct SampleRange {
  long start = 0;
  long end = 0;

  long length() const { return end - start; }
  bool operator==(const SampleRange&) const = default;
};

struct Segment {
  std::string source_id;
  long start_sample = 0;
  long end_sample = 0;
  dsp::Waveform waveform;
  int pass = 1;  // detection pass that produced the final boundaries

  // "<source_id>_<start_sample>.wav"
  std::string FileName() const;
};

// RMS is measured over consecutive 10 ms windows; a run of quiet windows
// lasting at least min_silence_ms forms one interval.
std::vector<SampleRange> DetectSilence(const dsp::Waveform& w,
                                       double threshold_db,
                                       int min_silence_ms);

struct SegmentationReport {
  std::vector<Segment> segments;
  std::vector<SampleRange> trimmed_silence;  // leading/trailing silence
  std::vector<SampleRange> discarded;        // pieces still above max_clip_s
  int passes_used = 0;
};

SegmentationReport SegmentRecordingDetailed(const dsp::Waveform& w,
                                            const SegmentationConfig& cfg,
                                            const std::string& source_id);

std::vector<Segment> SegmentRecording(const dsp::Waveform& w,
                                      const SegmentationConfig& cfg,
                                      const std::string& source_id = "src");

// Keeps the segments with at least one voiced frame. Segments too short for
// pitch analysis count as unvoiced.
std::vector<Segment> FilterByF0(const std::vector<Segment>& segments,
                                const pitch::PitchConfig& cfg);

}  // namespace nhsg::segmentation

#endif  // NHSG_SEGMENTATION_SEGMENTATION_H_
