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

#include "nhsg/dsp/waveform.h"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>

#include "nhsg/errors.h"

namespace nhsg::dsp {
namespace {

constexpr uint16_t kFormatPcm = 1;
constexpr uint16_t kFormatFloat = 3;
constexpr uint16_t kFormatExtensible = 0xFFFE;

uint16_t ReadU16(const uint8_t* p) {
  return static_cast<uint16_t>(p[0] | (p[1] << 8));
}

uint32_t ReadU32(const uint8_t* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) |
         (static_cast<uint32_t>(p[3]) << 24);
}

void PutU16(std::vector<uint8_t>* out, uint16_t v) {
  out->push_back(v & 0xFF);
  out->push_back(v >> 8);
}

void PutU32(std::vector<uint8_t>* out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out->push_back((v >> (8 * i)) & 0xFF);
}

void PutTag(std::vector<uint8_t>* out, const char* tag) {
  out->insert(out->end(), tag, tag + 4);
}

}  // namespace

void ValidateWaveform(const Waveform& w) {
  if (w.sample_rate <= 0) throw FormatError("non-positive sample rate");
  if (w.samples.empty()) throw FormatError("empty waveform");
  for (float s : w.samples) {
    if (!std::isfinite(s)) throw FormatError("non-finite sample");
  }
}

Waveform ReadWav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw FormatError(path + ": not a RIFF/WAVE file");
  }

  bool have_fmt = false;
  uint16_t format = 0, channels = 0, bits = 0;
  uint32_t rate = 0;
  const uint8_t* data = nullptr;
  size_t data_size = 0;

  size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const uint8_t* chunk = bytes.data() + pos;
    uint32_t size = ReadU32(chunk + 4);
    size_t body = pos + 8;
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16 || body + size > bytes.size()) {
        throw FormatError(path + ": truncated fmt chunk");
      }
      format = ReadU16(bytes.data() + body);
      channels = ReadU16(bytes.data() + body + 2);
      rate = ReadU32(bytes.data() + body + 4);
      bits = ReadU16(bytes.data() + body + 14);
      if (format == kFormatExtensible) {
        if (size < 26) throw FormatError(path + ": truncated extensible fmt");
        format = ReadU16(bytes.data() + body + 24);
      }
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = bytes.data() + body;
      // Some writers leave the size unset when streaming; clamp to the file.
      data_size = std::min<size_t>(size, bytes.size() - body);
      break;
    }
    pos = body + size + (size & 1);
  }
  if (!have_fmt) throw FormatError(path + ": missing fmt chunk");
  if (data == nullptr) throw FormatError(path + ": missing data chunk");
  if (channels == 0 || rate == 0) throw FormatError(path + ": bad fmt fields");

  const bool pcm16 = format == kFormatPcm && bits == 16;
  const bool float32 = format == kFormatFloat && bits == 32;
  if (!pcm16 && !float32) {
    throw UnsupportedError(path + ": encoding format=" +
                           std::to_string(format) +
                           " bits=" + std::to_string(bits));
  }

  const size_t bytes_per_sample = bits / 8;
  const size_t frames = data_size / (bytes_per_sample * channels);
  if (frames == 0) throw FormatError(path + ": no audio frames");

  Waveform w;
  w.sample_rate = static_cast<int>(rate);
  w.samples.resize(frames);
  for (size_t i = 0; i < frames; ++i) {
    double acc = 0.0;
    for (size_t c = 0; c < channels; ++c) {
      const uint8_t* p = data + (i * channels + c) * bytes_per_sample;
      if (pcm16) {
        acc += static_cast<int16_t>(ReadU16(p)) / 32768.0;
      } else {
        uint32_t raw = ReadU32(p);
        float f;
        std::memcpy(&f, &raw, sizeof(f));
        acc += f;
      }
    }
    w.samples[i] = static_cast<float>(acc / channels);
  }
  return w;
}

void WriteWav(const Waveform& w, const std::string& path) {
  ValidateWaveform(w);
  const uint32_t data_size = static_cast<uint32_t>(w.samples.size() * 2);
  std::vector<uint8_t> out;
  out.reserve(44 + data_size);
  PutTag(&out, "RIFF");
  PutU32(&out, 36 + data_size);
  PutTag(&out, "WAVE");
  PutTag(&out, "fmt ");
  PutU32(&out, 16);
  PutU16(&out, kFormatPcm);
  PutU16(&out, 1);
  PutU32(&out, static_cast<uint32_t>(w.sample_rate));
  PutU32(&out, static_cast<uint32_t>(w.sample_rate) * 2);
  PutU16(&out, 2);
  PutU16(&out, 16);
  PutTag(&out, "data");
  PutU32(&out, data_size);
  constexpr double kMax = 1.0 - 1.0 / 32768.0;
  for (float s : w.samples) {
    double clipped = std::clamp(static_cast<double>(s), -1.0, kMax);
    auto q = static_cast<int16_t>(std::lround(clipped * 32768.0));
    PutU16(&out, static_cast<uint16_t>(q));
  }

  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw IoError("cannot open for writing: " + path);
  file.write(reinterpret_cast<const char*>(out.data()),
             static_cast<std::streamsize>(out.size()));
  if (!file) throw IoError("write failed: " + path);
}

Waveform DecimateByAveraging(const Waveform& w, int factor) {
  if (factor < 1) throw ConfigError("decimation factor must be >= 1");
  if (factor == 1) return w;
  Waveform out;
  out.sample_rate = w.sample_rate / factor;
  const size_t n = w.samples.size() / factor;
  out.samples.resize(std::max<size_t>(n, 1), 0.0f);
  for (size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (int k = 0; k < factor; ++k) acc += w.samples[i * factor + k];
    out.samples[i] = static_cast<float>(acc / factor);
  }
  return out;
}

}  // namespace nhsg::dsp
