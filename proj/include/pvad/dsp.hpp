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
#include <complex>
#include <cstddef>
#include <vector>

#include "pvad/error.hpp"
#include "pvad/tensor.hpp"

namespace pvad::dsp {

using nn::Mat;

constexpr int kSampleRateHz = 16000;
constexpr int kFrameLenSamples = 400;  // 25 ms
constexpr int kHopSamples = 160;       // 10 ms
constexpr int kNumMels = 40;
constexpr int kNfft = 512;
constexpr double kPowerFloor = 1e-10;

// Mono PCM audio, amplitudes in [-1, 1], fixed 16 kHz rate.
struct PcmSignal {
  std::vector<double> samples;
  int sample_rate_hz = kSampleRateHz;

  std::size_t size() const { return samples.size(); }
  double duration_s() const { return static_cast<double>(samples.size()) / sample_rate_hz; }
};

// 40-dim log-mel filterbank energies, one row per 10 ms frame.
struct LogMelFrames {
  Mat frames;  // [n_frames x 40]
  static constexpr int frame_len_ms = 25;
  static constexpr int hop_ms = 10;

  int num_frames() const { return static_cast<int>(frames.rows()); }
};

inline int num_frames_for_samples(std::size_t n_samples) {
  if (n_samples < static_cast<std::size_t>(kFrameLenSamples)) return 0;
  return static_cast<int>((n_samples - kFrameLenSamples) / kHopSamples) + 1;
}

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

namespace detail {

inline bool is_power_of_two(int n) { return n > 0 && (n & (n - 1)) == 0; }

// In-place iterative radix-2 FFT.  Length must be a power of two.
inline void fft_inplace(std::vector<std::complex<double>>& a) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * M_PI / static_cast<double>(len);
    const std::complex<double> wlen(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        std::complex<double> u = a[i + k];
        std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
}

inline const std::vector<double>& hann_window() {
  static const std::vector<double> w = [] {
    std::vector<double> win(kFrameLenSamples);
    for (int n = 0; n < kFrameLenSamples; ++n)
      win[static_cast<std::size_t>(n)] =
          0.5 - 0.5 * std::cos(2.0 * M_PI * n / (kFrameLenSamples - 1));
    return win;
  }();
  return w;
}

}  // namespace detail

// Triangular mel filterbank, peaks normalized to exactly 1.  Rows are
// filters, columns the n_fft/2+1 non-negative frequency bins.
inline Mat mel_filterbank_matrix(int n_mels, int n_fft, int sample_rate_hz) {
  if (n_mels < 1) throw ConfigError("mel_filterbank_matrix: n_mels must be >= 1");
  if (!detail::is_power_of_two(n_fft) || n_fft < 2 * n_mels)
    throw ConfigError("mel_filterbank_matrix: n_fft must be a power of two >= 2*n_mels");

  const int n_bins = n_fft / 2 + 1;
  const double mel_hi = hz_to_mel(sample_rate_hz / 2.0);
  std::vector<double> edges(static_cast<std::size_t>(n_mels) + 2);
  for (int m = 0; m < n_mels + 2; ++m)
    edges[static_cast<std::size_t>(m)] = mel_to_hz(mel_hi * m / (n_mels + 1));

  Mat fb = Mat::Zero(n_mels, n_bins);
  for (int m = 0; m < n_mels; ++m) {
    const double lo = edges[static_cast<std::size_t>(m)];
    const double mid = edges[static_cast<std::size_t>(m) + 1];
    const double hi = edges[static_cast<std::size_t>(m) + 2];
    for (int k = 0; k < n_bins; ++k) {
      const double f = static_cast<double>(k) * sample_rate_hz / n_fft;
      if (f > lo && f < mid) {
        fb(m, k) = (f - lo) / (mid - lo);
      } else if (f >= mid && f < hi) {
        fb(m, k) = (hi - f) / (hi - mid);
      }
    }
    const double peak = fb.row(m).maxCoeff();
    if (peak <= 0.0) throw ConfigError("mel_filterbank_matrix: empty filter row");
    fb.row(m) /= peak;
  }
  return fb;
}

// Mel-spaced center frequencies (Hz) of the standard 40-filter bank.
inline std::vector<double> mel_filter_centers_hz(int n_mels, int sample_rate_hz) {
  const double mel_hi = hz_to_mel(sample_rate_hz / 2.0);
  std::vector<double> centers(static_cast<std::size_t>(n_mels));
  for (int m = 1; m <= n_mels; ++m)
    centers[static_cast<std::size_t>(m) - 1] = mel_to_hz(mel_hi * m / (n_mels + 1));
  return centers;
}

// Power spectrum of one Hann-windowed frame, zero padded to n_fft.
// Exposed for the tests' direct-DFT cross checks.
inline std::vector<double> frame_power_spectrum(const double* frame) {
  const auto& win = detail::hann_window();
  std::vector<std::complex<double>> buf(static_cast<std::size_t>(kNfft), {0.0, 0.0});
  for (int n = 0; n < kFrameLenSamples; ++n)
    buf[static_cast<std::size_t>(n)] = frame[n] * win[static_cast<std::size_t>(n)];
  detail::fft_inplace(buf);
  std::vector<double> power(static_cast<std::size_t>(kNfft / 2 + 1));
  for (int k = 0; k <= kNfft / 2; ++k) power[static_cast<std::size_t>(k)] = std::norm(buf[static_cast<std::size_t>(k)]);
  return power;
}

// 40-dim log-mel features at 100 Hz: 25 ms Hann window, 10 ms hop,
// 512-point FFT, natural log with a 1e-10 power floor.
inline LogMelFrames log_mel_features(const PcmSignal& signal) {
  if (signal.sample_rate_hz != kSampleRateHz)
    throw DataError("log_mel_features: expected 16 kHz input");
  if (signal.size() < static_cast<std::size_t>(kFrameLenSamples))
    throw DataError("log_mel_features: signal shorter than one 25 ms frame");
  for (double s : signal.samples)
    if (!std::isfinite(s)) throw DataError("log_mel_features: non-finite sample");

  static const Mat fb = mel_filterbank_matrix(kNumMels, kNfft, kSampleRateHz);
  const int n_frames = num_frames_for_samples(signal.size());

  LogMelFrames out;
  out.frames.resize(n_frames, kNumMels);
  Eigen::VectorXd power(kNfft / 2 + 1);
  for (int t = 0; t < n_frames; ++t) {
    const double* frame = signal.samples.data() + static_cast<std::ptrdiff_t>(t) * kHopSamples;
    std::vector<double> p = frame_power_spectrum(frame);
    for (int k = 0; k <= kNfft / 2; ++k) power[k] = p[static_cast<std::size_t>(k)];
    const Eigen::VectorXd mel = fb * power;
    for (int m = 0; m < kNumMels; ++m)
      out.frames(t, m) = std::log(mel[m] < kPowerFloor ? kPowerFloor : mel[m]);
  }
  return out;
}

}  // namespace pvad::dsp
