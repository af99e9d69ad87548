// Copyright (c) 2026 The pvadbench Authors
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

#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "pvad/dsp.hpp"
#include "pvad/error.hpp"

namespace pvad::wav {

namespace detail {

inline void put_u16(std::vector<std::uint8_t>& b, std::uint16_t v) {
  b.push_back(static_cast<std::uint8_t>(v & 0xff));
  b.push_back(static_cast<std::uint8_t>((v >> 8) & 0xff));
}

inline void put_u32(std::vector<std::uint8_t>& b, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

inline std::uint16_t get_u16(const std::vector<std::uint8_t>& b, std::size_t at) {
  return static_cast<std::uint16_t>(b[at] | (b[at + 1] << 8));
}

inline std::uint32_t get_u32(const std::vector<std::uint8_t>& b, std::size_t at) {
  return static_cast<std::uint32_t>(b[at]) | (static_cast<std::uint32_t>(b[at + 1]) << 8) |
         (static_cast<std::uint32_t>(b[at + 2]) << 16) |
         (static_cast<std::uint32_t>(b[at + 3]) << 24);
}

}  // namespace detail

// Samples are quantized as round(x * 32767) after clamping to [-1, 1], so a
// write/read round trip moves any sample by at most 1/32767.
inline std::int16_t quantize_sample(double x) {
  const double clamped = x < -1.0 ? -1.0 : (x > 1.0 ? 1.0 : x);
  return static_cast<std::int16_t>(std::llround(clamped * 32767.0));
}

inline void save_wav(const std::string& path, const dsp::PcmSignal& signal) {
  if (signal.sample_rate_hz != dsp::kSampleRateHz)
    throw DataError("save_wav: expected sample rate " + std::to_string(dsp::kSampleRateHz) +
                    " Hz, got " + std::to_string(signal.sample_rate_hz));
  if (signal.samples.empty()) throw DataError("save_wav: empty signal");

  const std::uint32_t n = static_cast<std::uint32_t>(signal.samples.size());
  const std::uint32_t data_bytes = n * 2;
  std::vector<std::uint8_t> b;
  b.reserve(44 + data_bytes);
  for (const char c : std::string("RIFF")) b.push_back(static_cast<std::uint8_t>(c));
  detail::put_u32(b, 36 + data_bytes);
  for (const char c : std::string("WAVE")) b.push_back(static_cast<std::uint8_t>(c));
  for (const char c : std::string("fmt ")) b.push_back(static_cast<std::uint8_t>(c));
  detail::put_u32(b, 16);
  detail::put_u16(b, 1);  // PCM
  detail::put_u16(b, 1);  // mono
  detail::put_u32(b, static_cast<std::uint32_t>(dsp::kSampleRateHz));
  detail::put_u32(b, static_cast<std::uint32_t>(dsp::kSampleRateHz) * 2);
  detail::put_u16(b, 2);   // block align
  detail::put_u16(b, 16);  // bits per sample
  for (const char c : std::string("data")) b.push_back(static_cast<std::uint8_t>(c));
  detail::put_u32(b, data_bytes);
  for (const double x : signal.samples) {
    const std::int16_t q = quantize_sample(x);
    detail::put_u16(b, static_cast<std::uint16_t>(q));
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("save_wav: cannot open '" + path + "' for writing");
  out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
  if (!out) throw DataError("save_wav: write failed for '" + path + "'");
}

inline dsp::PcmSignal load_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("load_wav: cannot open '" + path + "'");
  std::vector<std::uint8_t> b((std::istreambuf_iterator<char>(in)),
                              std::istreambuf_iterator<char>());
  if (b.size() < 12 || std::string(b.begin(), b.begin() + 4) != "RIFF" ||
      std::string(b.begin() + 8, b.begin() + 12) != "WAVE")
    throw DataError("load_wav: '" + path + "' is not a RIFF/WAVE file");

  bool have_fmt = false;
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  std::size_t data_at = 0, data_len = 0;
  std::size_t at = 12;
  while (at + 8 <= b.size()) {
    const std::string tag(b.begin() + static_cast<std::ptrdiff_t>(at),
                          b.begin() + static_cast<std::ptrdiff_t>(at + 4));
    const std::uint32_t len = detail::get_u32(b, at + 4);
    const std::size_t body = at + 8;
    if (body + len > b.size()) throw DataError("load_wav: truncated chunk '" + tag + "' in '" + path + "'");
    if (tag == "fmt ") {
      if (len < 16) throw DataError("load_wav: fmt chunk too short in '" + path + "'");
      format = detail::get_u16(b, body);
      channels = detail::get_u16(b, body + 2);
      rate = detail::get_u32(b, body + 4);
      bits = detail::get_u16(b, body + 14);
      have_fmt = true;
    } else if (tag == "data") {
      data_at = body;
      data_len = len;
    }
    at = body + len + (len % 2);  // chunks are word-aligned
  }
  if (!have_fmt || data_at == 0) throw DataError("load_wav: missing fmt/data chunk in '" + path + "'");
  if (format != 1) throw DataError("load_wav: '" + path + "' is not PCM (format tag " + std::to_string(format) + ")");
  if (channels != 1) throw DataError("load_wav: '" + path + "' has " + std::to_string(channels) + " channels, expected mono");
  if (rate != static_cast<std::uint32_t>(dsp::kSampleRateHz))
    throw DataError("load_wav: '" + path + "' has sample rate " + std::to_string(rate) + " Hz, expected " +
                    std::to_string(dsp::kSampleRateHz));
  if (bits != 16) throw DataError("load_wav: '" + path + "' has " + std::to_string(bits) + "-bit samples, expected 16");
  if (data_len % 2 != 0) throw DataError("load_wav: odd data chunk size in '" + path + "'");

  dsp::PcmSignal signal;
  signal.sample_rate_hz = dsp::kSampleRateHz;
  signal.samples.resize(data_len / 2);
  for (std::size_t i = 0; i < signal.samples.size(); ++i) {
    const std::int16_t q = static_cast<std::int16_t>(detail::get_u16(b, data_at + 2 * i));
    signal.samples[i] = static_cast<double>(q) / 32767.0;
  }
  return signal;
}

}  // namespace pvad::wav
