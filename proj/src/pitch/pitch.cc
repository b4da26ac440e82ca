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

#include "nhsg/pitch/pitch.h"

#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>
#include <sstream>

#include "nhsg/errors.h"

namespace nhsg::pitch {
namespace {

int NextPowerOfTwo(long n) {
  int p = 1;
  while (p < n) p <<= 1;
  return p;
}

// Per-frame difference-function machinery with preallocated FFT buffers.
class YinFrameAnalyzer {
 public:
  YinFrameAnalyzer(int window, int tau_min, int tau_max, double threshold)
      : window_(window),
        tau_min_(tau_min),
        tau_max_(tau_max),
        threshold_(threshold),
        fft_(NextPowerOfTwo(window + tau_max + 1)),
        a_(fft_.size()),
        b_(fft_.size()),
        spec_a_(fft_.size() / 2 + 1),
        spec_b_(fft_.size() / 2 + 1),
        corr_(fft_.size()),
        diff_(tau_max + 2),
        cmnd_(tau_max + 2) {}

  // Returns the refined lag, or 0 for an unvoiced frame. `x` holds
  // window + tau_max + 1 samples.
  double Analyze(const float* x) {
    const int span = window_ + tau_max_ + 1;
    std::fill(a_.begin(), a_.end(), 0.0);
    std::fill(b_.begin(), b_.end(), 0.0);
    for (int j = 0; j < window_; ++j) a_[j] = x[j];
    for (int j = 0; j < span; ++j) b_[j] = x[j];

    // prefix[j] = sum of squares of x[0..j).
    std::vector<double>& prefix = prefix_;
    prefix.assign(span + 1, 0.0);
    for (int j = 0; j < span; ++j) prefix[j + 1] = prefix[j] + b_[j] * b_[j];
    const double energy = prefix[window_];
    if (energy < 1e-10 * window_) return 0.0;

    fft_.Forward(a_, spec_a_);
    fft_.Forward(b_, spec_b_);
    for (size_t k = 0; k < spec_a_.size(); ++k) {
      spec_a_[k] = std::conj(spec_a_[k]) * spec_b_[k];
    }
    fft_.Inverse(spec_a_, corr_);
    const double scale = 1.0 / fft_.size();

    // d(tau) = sum x_j^2 + sum x_{j+tau}^2 - 2 sum x_j x_{j+tau}.
    diff_[0] = 0.0;
    for (int tau = 1; tau <= tau_max_ + 1; ++tau) {
      const double shifted = prefix[tau + window_] - prefix[tau];
      diff_[tau] = std::max(0.0, energy + shifted - 2.0 * corr_[tau] * scale);
    }
    cmnd_[0] = 1.0;
    double running = 0.0;
    for (int tau = 1; tau <= tau_max_ + 1; ++tau) {
      running += diff_[tau];
      cmnd_[tau] = running > 0.0 ? diff_[tau] * tau / running : 1.0;
    }

    int best = -1;
    for (int tau = tau_min_; tau <= tau_max_; ++tau) {
      if (cmnd_[tau] < threshold_) {
        while (tau + 1 <= tau_max_ && cmnd_[tau + 1] < cmnd_[tau]) ++tau;
        best = tau;
        break;
      }
    }
    if (best < 0) return 0.0;

    double refined = best;
    if (best > 1 && best < tau_max_ + 1) {
      const double l = cmnd_[best - 1], c = cmnd_[best], r = cmnd_[best + 1];
      const double denom = l - 2.0 * c + r;
      if (denom > 0.0) refined += 0.5 * (l - r) / denom;
    }
    return refined;
  }

 private:
  int window_, tau_min_, tau_max_;
  double threshold_;
  dsp::RealFft fft_;
  std::vector<double> a_, b_;
  std::vector<std::complex<double>> spec_a_, spec_b_;
  std::vector<double> corr_, diff_, cmnd_, prefix_;
};

}  // namespace

void ValidatePitchConfig(const PitchConfig& cfg, int sample_rate) {
  if (cfg.fmin <= 0.0 || cfg.fmin >= cfg.fmax) {
    throw ConfigError("pitch: need 0 < fmin < fmax");
  }
  if (cfg.fmax > sample_rate / 2.0) throw ConfigError("pitch: fmax > Nyquist");
  if (cfg.harmonicity_threshold <= 0.0 || cfg.harmonicity_threshold >= 1.0) {
    throw ConfigError("pitch: harmonicity_threshold must lie in (0, 1)");
  }
  if (cfg.frame_period_ms <= 0.0) throw ConfigError("pitch: frame period");
}

long MinimumPitchInput(const PitchConfig& cfg, int sample_rate) {
  return static_cast<long>(std::ceil(4.0 * sample_rate / cfg.fmin));
}

F0Contour EstimateF0(const dsp::Waveform& w, const PitchConfig& cfg) {
  ValidatePitchConfig(cfg, w.sample_rate);
  const long len = static_cast<long>(w.size());
  if (len < MinimumPitchInput(cfg, w.sample_rate)) {
    throw TooShortError("pitch: waveform shorter than one analysis window");
  }
  const int sr = w.sample_rate;
  const int hop = static_cast<int>(std::lround(sr * cfg.frame_period_ms / 1000));
  const int tau_min = std::max(2, static_cast<int>(std::floor(sr / cfg.fmax)));
  const int tau_max = static_cast<int>(std::ceil(sr / cfg.fmin));
  const int window = 2 * tau_max;
  const int span = window + tau_max + 1;
  if (len < span) throw TooShortError("pitch: waveform shorter than span");

  F0Contour out;
  out.frame_spec = dsp::FrameSpec{hop, std::max(hop, span), sr};
  const int frames = static_cast<int>(len / hop) + 1;
  out.f0_hz.assign(frames, 0.0f);
  out.voiced.assign(frames, false);

  YinFrameAnalyzer analyzer(window, tau_min, tau_max,
                            cfg.harmonicity_threshold);
  for (int t = 0; t < frames; ++t) {
    const long start =
        std::clamp<long>(static_cast<long>(t) * hop - span / 2, 0, len - span);
    const double lag = analyzer.Analyze(w.samples.data() + start);
    if (lag <= 0.0) continue;
    const double f0 = sr / lag;
    if (f0 < cfg.fmin * 0.9 || f0 > cfg.fmax * 1.1 || f0 >= sr / 2.0) continue;
    out.f0_hz[t] = static_cast<float>(f0);
    out.voiced[t] = true;
  }
  return out;
}

F0Contour AlignF0(const F0Contour& c, int target_frames) {
  if (target_frames < 1) throw ConfigError("align_f0: target_frames < 1");
  const int src = c.num_frames();
  if (src == target_frames) return c;
  F0Contour out;
  out.frame_spec = c.frame_spec;
  out.f0_hz.assign(target_frames, 0.0f);
  out.voiced.assign(target_frames, false);
  if (src == 0) return out;
  for (int i = 0; i < target_frames; ++i) {
    const int j = std::min(
        src - 1, static_cast<int>((i + 0.5) * src / target_frames));
    out.f0_hz[i] = c.voiced[j] ? c.f0_hz[j] : 0.0f;
    out.voiced[i] = c.voiced[j] && c.f0_hz[j] > 0.0f;
    if (!out.voiced[i]) out.f0_hz[i] = 0.0f;
  }
  return out;
}

bool IsValidF0(const F0Contour& c) {
  return std::any_of(c.voiced.begin(), c.voiced.end(), [](bool v) { return v; });
}

std::vector<float> LogF0(const F0Contour& c) {
  std::vector<float> out(c.f0_hz.size(), 0.0f);
  for (size_t t = 0; t < out.size(); ++t) {
    if (c.voiced[t]) out[t] = std::log(c.f0_hz[t]);
  }
  return out;
}

F0Contour ReadF0Sidecar(const std::string& path, const dsp::FrameSpec& spec) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open f0 sidecar " + path);
  F0Contour out;
  out.frame_spec = spec;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream fields(line);
    long index;
    double f0;
    if (!(fields >> index >> f0) || index != out.num_frames() || f0 < 0.0 ||
        !std::isfinite(f0)) {
      throw FormatError(path + ": bad f0 line " + std::to_string(line_no));
    }
    out.f0_hz.push_back(static_cast<float>(f0));
    out.voiced.push_back(f0 > 0.0);
  }
  return out;
}

void WriteF0Sidecar(const F0Contour& c, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out.precision(9);
  for (int t = 0; t < c.num_frames(); ++t) {
    out << t << '\t' << (c.voiced[t] ? c.f0_hz[t] : 0.0f) << '\n';
  }
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace nhsg::pitch
