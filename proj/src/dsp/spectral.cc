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

#include "nhsg/dsp/spectral.h"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numbers>

#include "nhsg/errors.h"

namespace nhsg::dsp {
namespace {

// FFTW's planner is not re-entrant.
std::mutex& PlannerMutex() {
  static std::mutex mu;
  return mu;
}

bool IsPowerOfTwo(int n) { return n > 0 && (n & (n - 1)) == 0; }

}  // namespace

struct RealFft::Impl {
  double* time = nullptr;
  fftw_complex* freq = nullptr;
  fftw_plan forward = nullptr;
  fftw_plan inverse = nullptr;
};

RealFft::RealFft(int size) : size_(size), impl_(std::make_unique<Impl>()) {
  if (!IsPowerOfTwo(size)) throw ConfigError("FFT size must be a power of two");
  std::lock_guard<std::mutex> lock(PlannerMutex());
  impl_->time = fftw_alloc_real(size);
  impl_->freq = fftw_alloc_complex(size / 2 + 1);
  impl_->forward =
      fftw_plan_dft_r2c_1d(size, impl_->time, impl_->freq, FFTW_ESTIMATE);
  impl_->inverse =
      fftw_plan_dft_c2r_1d(size, impl_->freq, impl_->time, FFTW_ESTIMATE);
}

RealFft::~RealFft() {
  std::lock_guard<std::mutex> lock(PlannerMutex());
  fftw_destroy_plan(impl_->forward);
  fftw_destroy_plan(impl_->inverse);
  fftw_free(impl_->time);
  fftw_free(impl_->freq);
}

void RealFft::Forward(std::span<const double> in,
                      std::span<std::complex<double>> out) {
  std::copy(in.begin(), in.begin() + size_, impl_->time);
  fftw_execute(impl_->forward);
  for (int k = 0; k <= size_ / 2; ++k) {
    out[k] = {impl_->freq[k][0], impl_->freq[k][1]};
  }
}

void RealFft::Inverse(std::span<const std::complex<double>> in,
                      std::span<double> out) {
  for (int k = 0; k <= size_ / 2; ++k) {
    impl_->freq[k][0] = in[k].real();
    impl_->freq[k][1] = in[k].imag();
  }
  // c2r destroys its input array, which is our scratch buffer.
  fftw_execute(impl_->inverse);
  std::copy(impl_->time, impl_->time + size_, out.begin());
}

void ValidateFrameSpec(const FrameSpec& spec) {
  if (spec.hop_samples <= 0) throw ConfigError("hop_samples must be > 0");
  if (spec.win_samples < spec.hop_samples) {
    throw ConfigError("win_samples must be >= hop_samples");
  }
  if (spec.sample_rate <= 0) throw ConfigError("sample_rate must be > 0");
}

std::vector<double> HannWindow(int length) {
  std::vector<double> w(length);
  for (int n = 0; n < length; ++n) {
    w[n] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * n / length);
  }
  return w;
}

long ReflectIndex(long index, long length) {
  if (length <= 1) return 0;
  const long period = 2 * (length - 1);
  index %= period;
  if (index < 0) index += period;
  return index < length ? index : period - index;
}

int NumStftFrames(long length, const FrameSpec& spec, int fft_size,
                  bool centered) {
  if (centered) return static_cast<int>(length / spec.hop_samples) + 1;
  if (length < fft_size) return 0;
  return static_cast<int>((length - fft_size) / spec.hop_samples) + 1;
}

Spectrogram StftMagnitude(const Waveform& w, const FrameSpec& spec,
                          int fft_size) {
  ValidateFrameSpec(spec);
  if (!IsPowerOfTwo(fft_size)) {
    throw ConfigError("fft_size must be a power of two");
  }
  if (fft_size < spec.win_samples) {
    throw ConfigError("fft_size smaller than win_samples");
  }
  const long len = static_cast<long>(w.samples.size());
  const int frames = NumStftFrames(len, spec, fft_size);
  const int bins = fft_size / 2 + 1;
  const std::vector<double> window = HannWindow(spec.win_samples);
  const int win_offset = (fft_size - spec.win_samples) / 2;

  Spectrogram out;
  out.frames.setZero(frames, bins);
  out.kind = SpectrogramKind::kLinear;
  out.scale = SpectralScale::kMagnitude;
  out.frame_spec = spec;
  out.fft_size = fft_size;
  out.centered = true;

  RealFft fft(fft_size);
  std::vector<double> buf(fft_size);
  std::vector<std::complex<double>> spectrum(bins);
  for (int t = 0; t < frames; ++t) {
    const long start = static_cast<long>(t) * spec.hop_samples - fft_size / 2;
    std::fill(buf.begin(), buf.end(), 0.0);
    for (int n = 0; n < spec.win_samples; ++n) {
      const long idx = ReflectIndex(start + win_offset + n, len);
      buf[win_offset + n] = window[n] * w.samples[idx];
    }
    fft.Forward(buf, spectrum);
    for (int k = 0; k < bins; ++k) out.frames(t, k) = std::abs(spectrum[k]);
  }
  return out;
}

double HzToMel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

double MelToHz(double mel) {
  return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
}

Matrix MelFilterbank(int sample_rate, int fft_size, int n_mels, double fmin,
                     double fmax) {
  if (n_mels < 1) throw ConfigError("n_mels must be >= 1");
  if (fmin < 0.0 || fmin >= fmax) throw ConfigError("need 0 <= fmin < fmax");
  if (fmax > sample_rate / 2.0) throw ConfigError("fmax above Nyquist");
  const int bins = fft_size / 2 + 1;
  const double mel_lo = HzToMel(fmin);
  const double mel_hi = HzToMel(fmax);
  std::vector<double> edges(n_mels + 2);
  for (int i = 0; i < n_mels + 2; ++i) {
    edges[i] = MelToHz(mel_lo + (mel_hi - mel_lo) * i / (n_mels + 1));
  }
  const double bin_hz = static_cast<double>(sample_rate) / fft_size;

  Matrix fb = Matrix::Zero(n_mels, bins);
  for (int m = 0; m < n_mels; ++m) {
    const double lo = edges[m], center = edges[m + 1], hi = edges[m + 2];
    for (int k = 0; k < bins; ++k) {
      const double f = k * bin_hz;
      double v = 0.0;
      if (f > lo && f <= center) {
        v = (f - lo) / (center - lo);
      } else if (f > center && f < hi) {
        v = (hi - f) / (hi - center);
      }
      fb(m, k) = v;
    }
    // Narrow low-frequency triangles can fall between bins; keep them alive
    // by assigning the bin nearest their center.
    if (fb.row(m).sum() <= 0.0) {
      const int k = std::clamp(static_cast<int>(std::lround(center / bin_hz)),
                               0, bins - 1);
      fb(m, k) = 1.0;
    }
  }
  return fb;
}

Spectrogram LogMel(const Waveform& w, const FrameSpec& spec, int fft_size,
                   int n_mels, double fmin, double fmax, SpectralScale scale) {
  if (fmax <= 0.0) fmax = w.sample_rate / 2.0;
  Spectrogram lin = StftMagnitude(w, spec, fft_size);
  if (scale == SpectralScale::kPower) lin.frames = lin.frames.cwiseAbs2();
  const Matrix fb = MelFilterbank(w.sample_rate, fft_size, n_mels, fmin, fmax);
  Spectrogram out = lin;
  out.frames = (lin.frames * fb.transpose())
                   .unaryExpr([](double v) {
                     return std::log(std::max(v, kLogMelFloor));
                   });
  out.kind = SpectrogramKind::kLogMel;
  out.scale = scale;
  return out;
}

std::vector<int> SubbandEdges(int num_bins, int n_bands) {
  if (n_bands < 1) throw ConfigError("n_bands must be >= 1");
  if (n_bands > num_bins) throw ConfigError("n_bands exceeds bin count");
  std::vector<int> edges(n_bands + 1);
  edges[0] = 0;
  edges[n_bands] = num_bins;
  for (int i = 1; i < n_bands; ++i) {
    int e = static_cast<int>(
        std::lround(std::pow(static_cast<double>(num_bins),
                             static_cast<double>(i) / n_bands)));
    e = std::max(e, edges[i - 1] + 1);
    e = std::min(e, num_bins - (n_bands - i));
    edges[i] = e;
  }
  return edges;
}

std::vector<Spectrogram> SubbandDecompose(const Spectrogram& s, int n_bands) {
  const std::vector<int> edges = SubbandEdges(s.num_bins(), n_bands);
  std::vector<Spectrogram> bands;
  bands.reserve(n_bands);
  for (int b = 0; b < n_bands; ++b) {
    Spectrogram band = s;
    band.frames = s.frames.middleCols(edges[b], edges[b + 1] - edges[b]);
    band.kind = SpectrogramKind::kSubband;
    band.first_bin = s.first_bin + edges[b];
    bands.push_back(std::move(band));
  }
  return bands;
}

}  // namespace nhsg::dsp
