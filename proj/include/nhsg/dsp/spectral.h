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

#ifndef NHSG_DSP_SPECTRAL_H_
#define NHSG_DSP_SPECTRAL_H_

#include <complex>
#include <memory>
#include <span>
#include <vector>

#include "nhsg/dsp/waveform.h"
#include "nhsg/matrix.h"

namespace nhsg::dsp {

// Analysis frame grid shared by features, pitch and the vocoder.
struct FrameSpec {
  int hop_samples = 320;
  int win_samples = 1024;
  int sample_rate = 16000;

  double frame_period_ms() const {
    return 1000.0 * hop_samples / sample_rate;
  }
};

// Throws ConfigError on hop <= 0, win < hop or a non-positive rate.
void ValidateFrameSpec(const FrameSpec& spec);

enum class SpectrogramKind { kLinear, kMel, kLogMel, kSubband };

// Whether spectral cells hold |X| or |X|^2.
enum class SpectralScale { kMagnitude, kPower };

struct Spectrogram {
  Matrix frames;  // T x B
  SpectrogramKind kind = SpectrogramKind::kLinear;
  SpectralScale scale = SpectralScale::kMagnitude;
  FrameSpec frame_spec;
  int fft_size = 0;
  bool centered = true;  // reflection padding of fft_size/2 on both sides
  int first_bin = 0;     // offset of column 0 for sub-band slices

  int num_frames() const { return static_cast<int>(frames.rows()); }
  int num_bins() const { return static_cast<int>(frames.cols()); }
};

// Real-input FFT of a fixed power-of-two size backed by FFTW. Instances are
// not shareable across threads.
class RealFft {
 public:
  explicit RealFft(int size);
  ~RealFft();
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  int size() const { return size_; }

  // in: size() samples; out: size()/2 + 1 bins.
  void Forward(std::span<const double> in,
               std::span<std::complex<double>> out);

  // Unnormalized inverse of a Hermitian half spectrum (size()/2 + 1 bins).
  void Inverse(std::span<const std::complex<double>> in,
               std::span<double> out);

 private:
  struct Impl;
  int size_;
  std::unique_ptr<Impl> impl_;
};

// Periodic Hann window of `length` samples.
std::vector<double> HannWindow(int length);

// Mirrors an out-of-range index back into [0, length) (no edge repeat).
long ReflectIndex(long index, long length);

// Frame count of StftMagnitude: floor(len / hop) + 1 when centered, else
// floor((len - fft) / hop) + 1 (zero when len < fft).
int NumStftFrames(long length, const FrameSpec& spec, int fft_size,
                  bool centered = true);

// Hann-windowed magnitude STFT; frame t is centered at sample t * hop.
Spectrogram StftMagnitude(const Waveform& w, const FrameSpec& spec,
                          int fft_size);

// n_mels x (fft_size/2 + 1) triangular filters on the HTK mel scale, each
// peaking at 1.0 at its center frequency.
Matrix MelFilterbank(int sample_rate, int fft_size, int n_mels, double fmin,
                     double fmax);

double HzToMel(double hz);
double MelToHz(double mel);

constexpr double kLogMelFloor = 1e-5;

// log(max(mel_energy, 1e-5)) with mel_energy taken from |X| or |X|^2.
Spectrogram LogMel(const Waveform& w, const FrameSpec& spec, int fft_size,
                   int n_mels, double fmin = 0.0, double fmax = -1.0,
                   SpectralScale scale = SpectralScale::kMagnitude);

// Geometric band boundaries over [0, num_bins): edges[0] = 0,
// edges[n_bands] = num_bins, interior edges round(num_bins^(i/n_bands)),
// nudged to keep every band non-empty.
std::vector<int> SubbandEdges(int num_bins, int n_bands);

// Partitions the columns of `s` into log-spaced bands.
std::vector<Spectrogram> SubbandDecompose(const Spectrogram& s, int n_bands);

}  // namespace nhsg::dsp

#endif  // NHSG_DSP_SPECTRAL_H_
