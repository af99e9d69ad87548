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

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "pvad/base64.hpp"
#include "pvad/corpus.hpp"
#include "pvad/dsp.hpp"
#include "pvad/error.hpp"
#include "pvad/rng.hpp"
#include "pvad/wavio.hpp"

namespace {

using namespace pvad;
namespace fs = std::filesystem;

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path = fs::temp_directory_path() /
           ("pvadbench-" + tag + "-" + std::to_string(::getpid()) + "-" +
            std::to_string(counter++));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  std::string str() const { return path.string(); }
};

std::vector<std::uint8_t> read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::vector<std::uint8_t>((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
}

void write_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  REQUIRE(out.good());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

// Hand-assembled RIFF container with arbitrary fmt fields, for reject tests.
std::vector<std::uint8_t> wav_bytes(std::uint16_t format, std::uint16_t channels,
                                    std::uint32_t rate, std::uint16_t bits,
                                    const std::vector<std::int16_t>& samples) {
  std::vector<std::uint8_t> b;
  auto u16 = [&b](std::uint16_t v) {
    b.push_back(static_cast<std::uint8_t>(v & 0xff));
    b.push_back(static_cast<std::uint8_t>(v >> 8));
  };
  auto u32 = [&b](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) b.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
  };
  auto tag = [&b](const char* t) {
    for (int i = 0; i < 4; ++i) b.push_back(static_cast<std::uint8_t>(t[i]));
  };
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(samples.size()) * 2;
  tag("RIFF");
  u32(36 + data_bytes);
  tag("WAVE");
  tag("fmt ");
  u32(16);
  u16(format);
  u16(channels);
  u32(rate);
  u32(rate * channels * bits / 8);
  u16(static_cast<std::uint16_t>(channels * bits / 8));
  u16(bits);
  tag("data");
  u32(data_bytes);
  for (const std::int16_t s : samples) u16(static_cast<std::uint16_t>(s));
  return b;
}

// Independent long-term power spectrum: naive DFT (precomputed twiddles)
// averaged over evenly spaced 512-sample frames.
std::vector<double> long_term_spectrum_dft(const dsp::PcmSignal& sig, int n_fft,
                                           int n_frames_used) {
  const int bins = n_fft / 2 + 1;
  static std::vector<std::vector<double>> cos_tab, sin_tab;
  if (cos_tab.empty()) {
    cos_tab.assign(bins, std::vector<double>(n_fft));
    sin_tab.assign(bins, std::vector<double>(n_fft));
    for (int k = 0; k < bins; ++k)
      for (int n = 0; n < n_fft; ++n) {
        const double ang = -2.0 * M_PI * k * n / n_fft;
        cos_tab[k][n] = std::cos(ang);
        sin_tab[k][n] = std::sin(ang);
      }
  }
  REQUIRE(sig.samples.size() >= static_cast<std::size_t>(n_fft));
  const std::size_t span = sig.samples.size() - static_cast<std::size_t>(n_fft);
  std::vector<double> acc(bins, 0.0);
  for (int f = 0; f < n_frames_used; ++f) {
    const std::size_t at = n_frames_used == 1 ? 0 : span * f / (n_frames_used - 1);
    for (int k = 0; k < bins; ++k) {
      double re = 0.0, im = 0.0;
      for (int n = 0; n < n_fft; ++n) {
        const double x = sig.samples[at + static_cast<std::size_t>(n)];
        re += x * cos_tab[k][n];
        im += x * sin_tab[k][n];
      }
      acc[k] += re * re + im * im;
    }
  }
  return acc;
}

corpus::SyntheticSpeaker demo_speaker(const std::string& id = "spkAA",
                                      std::uint64_t seed = 11) {
  corpus::SyntheticSpeaker sp;
  sp.speaker_id = id;
  sp.pitch_hz = 140.0;
  sp.formants_hz = {560.0, 1200.0, 2600.0};
  sp.bandwidths_hz = {70.0, 120.0, 160.0};
  sp.seed = seed;
  return sp;
}

corpus::CorpusConfig small_config() {
  corpus::CorpusConfig cfg;
  cfg.speakers = 6;
  cfg.test_speakers = 2;
  cfg.utterances_train = 6;
  cfg.utterances_val = 2;
  cfg.utterances_test = 4;
  cfg.seed = 21;
  cfg.segment_min_ms = 200;
  cfg.segment_max_ms = 400;
  cfg.gap_min_ms = 100;
  cfg.gap_max_ms = 200;
  cfg.enroll_min_ms = 400;
  cfg.enroll_max_ms = 600;
  cfg.dropout_fraction = 0.2;
  return cfg;
}

TEST_CASE("base64 round trip matches reference vectors") {
  const std::vector<std::pair<std::string, std::string>> vectors = {
      {"", ""},           {"f", "Zg=="},     {"fo", "Zm8="},
      {"foo", "Zm9v"},    {"foob", "Zm9vYg=="},
      {"fooba", "Zm9vYmE="},               {"foobar", "Zm9vYmFy"}};
  for (const auto& [plain, encoded] : vectors) {
    const std::string got = base64_encode(
        reinterpret_cast<const std::uint8_t*>(plain.data()), plain.size());
    INFO("plain: '" << plain << "'");
    CHECK(got == encoded);
    const std::vector<std::uint8_t> back = base64_decode(encoded);
    CHECK(std::string(back.begin(), back.end()) == plain);
  }

  SECTION("random bytes round trip") {
    Rng rng(3);
    for (int rep = 0; rep < 20; ++rep) {
      std::vector<std::uint8_t> bytes(
          static_cast<std::size_t>(rng.uniform_int(0, 97)));
      for (auto& b : bytes) b = static_cast<std::uint8_t>(rng.uniform_int(0, 255));
      CHECK(base64_decode(base64_encode(bytes.data(), bytes.size())) == bytes);
    }
  }

  SECTION("malformed input is rejected") {
    CHECK_THROWS_AS(base64_decode("abc"), DataError);
    CHECK_THROWS_AS(base64_decode("ab!?"), DataError);
    CHECK_THROWS_AS(base64_decode("=abc"), DataError);
    CHECK_THROWS_AS(base64_decode("a=bc"), DataError);
    CHECK_THROWS_AS(base64_decode("ab==cdef"), DataError);
  }
}

TEST_CASE("embedding base64 is little-endian f32 and round trips") {
  Rng rng(5);
  Eigen::VectorXd v(256);
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = rng.uniform(-2.0, 2.0);
  const std::string text = base64_encode(nullptr, 0);
  CHECK(text.empty());
  const Eigen::VectorXd back = corpus::embedding_from_base64(corpus::embedding_to_base64(v));
  REQUIRE(back.size() == 256);
  for (Eigen::Index i = 0; i < v.size(); ++i)
    CHECK(back[i] == static_cast<double>(static_cast<float>(v[i])));

  // 1.0f = 0x3f800000 little-endian -> bytes 00 00 80 3f
  Eigen::VectorXd one(1);
  one[0] = 1.0;
  const std::vector<std::uint8_t> bytes =
      base64_decode(corpus::embedding_to_base64(one));
  REQUIRE(bytes.size() == 4);
  CHECK(bytes[0] == 0x00);
  CHECK(bytes[1] == 0x00);
  CHECK(bytes[2] == 0x80);
  CHECK(bytes[3] == 0x3f);
}

TEST_CASE("wav save/load round trips within quantization") {
  TempDir dir("wav");
  dsp::PcmSignal sig;
  sig.samples.resize(dsp::kSampleRateHz);
  for (std::size_t i = 0; i < sig.samples.size(); ++i)
    sig.samples[i] = 0.9 * std::sin(2.0 * M_PI * 440.0 * static_cast<double>(i) /
                                    dsp::kSampleRateHz);
  const std::string path = (dir.path / "tone.wav").string();
  wav::save_wav(path, sig);
  const dsp::PcmSignal back = wav::load_wav(path);
  REQUIRE(back.samples.size() == sig.samples.size());
  CHECK(back.sample_rate_hz == dsp::kSampleRateHz);
  double max_err = 0.0;
  for (std::size_t i = 0; i < sig.samples.size(); ++i)
    max_err = std::max(max_err, std::abs(back.samples[i] - sig.samples[i]));
  CHECK(max_err <= 1.0 / 32768.0);

  SECTION("full-scale values survive exactly") {
    dsp::PcmSignal peaks;
    peaks.samples = {1.0, -1.0, 0.0, 2.5, -2.5};  // out-of-range clamps to full scale
    const std::string p2 = (dir.path / "peaks.wav").string();
    wav::save_wav(p2, peaks);
    const dsp::PcmSignal b2 = wav::load_wav(p2);
    CHECK(b2.samples[0] == 1.0);
    CHECK(b2.samples[2] == 0.0);
    CHECK(b2.samples[3] == 1.0);
    CHECK(b2.samples[4] == -1.0);
    // -1.0 quantizes to -32767, one code above INT16_MIN.
    CHECK(b2.samples[1] == -1.0);
  }
}

TEST_CASE("wav loader rejects unsupported formats with diagnostics") {
  TempDir dir("wavrej");
  const std::vector<std::int16_t> samples(256, 1000);
  auto path_for = [&dir](const std::string& name) { return (dir.path / name).string(); };

  write_bytes(path_for("stereo.wav"), wav_bytes(1, 2, 16000, 16, samples));
  CHECK_THROWS_WITH(wav::load_wav(path_for("stereo.wav")),
                    Catch::Matchers::ContainsSubstring("channels"));

  write_bytes(path_for("slow.wav"), wav_bytes(1, 1, 8000, 16, samples));
  CHECK_THROWS_WITH(wav::load_wav(path_for("slow.wav")),
                    Catch::Matchers::ContainsSubstring("8000"));

  write_bytes(path_for("float.wav"), wav_bytes(3, 1, 16000, 16, samples));
  CHECK_THROWS_WITH(wav::load_wav(path_for("float.wav")),
                    Catch::Matchers::ContainsSubstring("PCM"));

  write_bytes(path_for("deep.wav"), wav_bytes(1, 1, 16000, 8, samples));
  CHECK_THROWS_WITH(wav::load_wav(path_for("deep.wav")),
                    Catch::Matchers::ContainsSubstring("8-bit"));

  write_bytes(path_for("junk.wav"), {'n', 'o', 't', 'a', 'w', 'a', 'v'});
  CHECK_THROWS_AS(wav::load_wav(path_for("junk.wav")), DataError);

  std::vector<std::uint8_t> trunc = wav_bytes(1, 1, 16000, 16, samples);
  trunc.resize(trunc.size() / 2);
  write_bytes(path_for("trunc.wav"), trunc);
  CHECK_THROWS_AS(wav::load_wav(path_for("trunc.wav")), DataError);

  CHECK_THROWS_AS(wav::load_wav(path_for("missing.wav")), DataError);
}

TEST_CASE("synth_segment is deterministic with exact length and peak") {
  const corpus::SyntheticSpeaker sp = demo_speaker();
  const dsp::PcmSignal a = corpus::synth_segment(sp, 1000, 42);
  CHECK(a.samples.size() == 16000);

  const dsp::PcmSignal b = corpus::synth_segment(sp, 1000, 42);
  REQUIRE(a.samples.size() == b.samples.size());
  bool identical = true;
  for (std::size_t i = 0; i < a.samples.size(); ++i)
    identical = identical && a.samples[i] == b.samples[i];
  CHECK(identical);

  const dsp::PcmSignal c = corpus::synth_segment(sp, 1000, 43);
  bool differs = false;
  for (std::size_t i = 0; i < a.samples.size(); ++i)
    differs = differs || a.samples[i] != c.samples[i];
  CHECK(differs);

  double peak = 0.0;
  for (const double v : a.samples) peak = std::max(peak, std::abs(v));
  CHECK(peak == Catch::Approx(0.5).margin(1e-12));

  CHECK_THROWS_AS(corpus::synth_segment(sp, 100, 1), ConfigError);
  CHECK_THROWS_AS(corpus::synth_segment(sp, 6000, 1), ConfigError);

  corpus::SyntheticSpeaker bad = sp;
  bad.formants_hz = {100.0, 1200.0, 2600.0};
  CHECK_THROWS_AS(corpus::synth_segment(bad, 1000, 1), ConfigError);
}

TEST_CASE("roster speakers have separated first formants and locked pitch") {
  const Rng root(7);
  const std::vector<corpus::SyntheticSpeaker> roster = corpus::make_roster(12, 4, root);
  REQUIRE(roster.size() == 12);

  std::set<std::string> ids;
  std::set<std::uint64_t> seeds;
  int test_count = 0;
  for (const corpus::SyntheticSpeaker& sp : roster) {
    ids.insert(sp.speaker_id);
    seeds.insert(sp.seed);
    test_count += sp.split == corpus::Split::test ? 1 : 0;
    REQUIRE(sp.formants_hz.size() == 3);
    for (const double f : sp.formants_hz) {
      CHECK(f >= 200.0);
      CHECK(f <= 3500.0);
    }
    CHECK(sp.formants_hz[0] < sp.formants_hz[1]);
    CHECK(sp.pitch_hz >= 60.0);
    CHECK(sp.pitch_hz <= 400.0);
    // Some harmonic of the pitch lands exactly on the first formant.
    const double k = sp.formants_hz[0] / sp.pitch_hz;
    CHECK(std::abs(k - std::round(k)) < 1e-9);
  }
  CHECK(ids.size() == 12);
  CHECK(seeds.size() == 12);
  CHECK(test_count == 4);

  for (std::size_t i = 0; i < roster.size(); ++i)
    for (std::size_t j = i + 1; j < roster.size(); ++j)
      CHECK(std::abs(roster[i].formants_hz[0] - roster[j].formants_hz[0]) >= 70.0);
}

TEST_CASE("speaker long-term spectra have distinct argmax bins") {
  const Rng root(7);
  const std::vector<corpus::SyntheticSpeaker> roster = corpus::make_roster(12, 4, root);
  const int n_fft = 512;
  const double bin_hz = static_cast<double>(dsp::kSampleRateHz) / n_fft;

  std::vector<int> argmax_bins;
  for (const corpus::SyntheticSpeaker& sp : roster) {
    const dsp::PcmSignal seg = corpus::synth_segment(sp, 2000, 1);
    const std::vector<double> spectrum = long_term_spectrum_dft(seg, n_fft, 16);
    int best = 1;
    for (int k = 2; k < static_cast<int>(spectrum.size()); ++k)
      if (spectrum[static_cast<std::size_t>(k)] > spectrum[static_cast<std::size_t>(best)])
        best = k;
    INFO("speaker " << sp.speaker_id << " argmax " << best * bin_hz << " Hz, F1 "
                    << sp.formants_hz[0] << " Hz");
    // The spectral peak sits on the first formant (within DFT resolution).
    CHECK(std::abs(best * bin_hz - sp.formants_hz[0]) <= 1.5 * bin_hz);
    argmax_bins.push_back(best);
  }
  for (std::size_t i = 0; i < argmax_bins.size(); ++i)
    for (std::size_t j = i + 1; j < argmax_bins.size(); ++j) {
      INFO("speakers " << i << " and " << j);
      CHECK(argmax_bins[i] != argmax_bins[j]);
    }
}

TEST_CASE("mix_at_snr applies the closed-form gain") {
  dsp::PcmSignal clean, noise;
  clean.samples.assign(1000, 0.1);
  noise.samples.resize(1000);
  for (std::size_t i = 0; i < noise.samples.size(); ++i)
    noise.samples[i] = i % 2 == 0 ? 0.1 : -0.1;

  SECTION("equal RMS at 0 dB gives unit gain") {
    const corpus::MixResult mix = corpus::mix_at_snr(clean, noise, 0.0);
    CHECK(mix.signal.samples[0] == Catch::Approx(0.2).margin(1e-12));
    CHECK(mix.signal.samples[1] == Catch::Approx(0.0).margin(1e-12));
    CHECK(mix.clip_fraction == 0.0);
  }

  SECTION("equal RMS at 20 dB gives gain 0.1") {
    const corpus::MixResult mix = corpus::mix_at_snr(clean, noise, 20.0);
    CHECK(mix.signal.samples[0] == Catch::Approx(0.1 + 0.01).margin(1e-12));
    CHECK(mix.signal.samples[1] == Catch::Approx(0.1 - 0.01).margin(1e-12));
  }

  SECTION("measured post-mix SNR matches the request") {
    Rng rng(17);
    for (const double snr : {0.0, 7.3, 18.2, 30.0}) {
      dsp::PcmSignal c, n;
      c.samples.resize(8000);
      n.samples.resize(8000);
      for (auto& v : c.samples) v = 0.1 * rng.gaussian();
      for (auto& v : n.samples) v = 0.05 * rng.gaussian();
      const corpus::MixResult mix = corpus::mix_at_snr(c, n, snr);
      REQUIRE(mix.clip_fraction == 0.0);
      // Recover the noise part and recompute the RMS ratio.
      std::vector<double> noise_part(c.samples.size());
      for (std::size_t i = 0; i < c.samples.size(); ++i)
        noise_part[i] = mix.signal.samples[i] - c.samples[i];
      const double rms_c = corpus::rms_of(c.samples, c.samples.size());
      const double rms_n = corpus::rms_of(noise_part, noise_part.size());
      const double measured = 20.0 * std::log10(rms_c / rms_n);
      INFO("requested " << snr << " dB, measured " << measured << " dB");
      CHECK(std::abs(measured - snr) <= 0.1);
    }
  }

  SECTION("clipping is clamped and reported") {
    dsp::PcmSignal loud;
    loud.samples.assign(1000, 0.95);
    const corpus::MixResult mix = corpus::mix_at_snr(loud, noise, 0.0);
    CHECK(mix.clip_fraction > 0.0);
    for (const double v : mix.signal.samples) {
      CHECK(v <= 1.0);
      CHECK(v >= -1.0);
    }
  }

  SECTION("silent clean makes SNR undefined") {
    dsp::PcmSignal silent;
    silent.samples.assign(100, 0.0);
    dsp::PcmSignal n = noise;
    CHECK_THROWS_WITH(corpus::mix_at_snr(silent, n, 10.0),
                      Catch::Matchers::ContainsSubstring("SNR undefined"));
  }

  SECTION("short noise is rejected, tiling fixes it") {
    dsp::PcmSignal shorty;
    shorty.samples = {0.1, -0.2, 0.3};
    CHECK_THROWS_AS(corpus::mix_at_snr(clean, shorty, 10.0), DataError);
    const dsp::PcmSignal tiled = corpus::tiled_noise(shorty, 7, 1);
    const std::vector<double> expect = {-0.2, 0.3, 0.1, -0.2, 0.3, 0.1, -0.2};
    REQUIRE(tiled.samples.size() == 7);
    for (std::size_t i = 0; i < expect.size(); ++i)
      CHECK(tiled.samples[i] == Catch::Approx(expect[i]).margin(1e-15));
    CHECK_NOTHROW(corpus::mix_at_snr(clean, corpus::tiled_noise(shorty, 1000, 5), 10.0));
  }
}

TEST_CASE("labels_for_spans follows the frame-center rule") {
  // One 1 s target segment at sample 0, 400 ms trailing gap: frame centers
  // t*160 + 200 lie inside [0, 16000) exactly for t <= 98, so the first 99
  // frames are ts and the rest ns.
  const std::vector<corpus::SegmentSpan> spans = {{"spkA", 0, 16000}};
  const std::vector<corpus::FrameLabel> labels =
      corpus::labels_for_spans(16000 + 6400, spans, "spkA");
  REQUIRE(static_cast<int>(labels.size()) == dsp::num_frames_for_samples(16000 + 6400));
  for (std::size_t t = 0; t < labels.size(); ++t) {
    INFO("frame " << t);
    CHECK(labels[t] == (t <= 98 ? corpus::FrameLabel::ts : corpus::FrameLabel::ns));
  }

  // The same spans viewed by a different target become nts.
  const std::vector<corpus::FrameLabel> other =
      corpus::labels_for_spans(16000 + 6400, spans, "spkB");
  CHECK(other[0] == corpus::FrameLabel::nts);
  CHECK(other.back() == corpus::FrameLabel::ns);
}

TEST_CASE("build_utterance labels frames by their centers") {
  Rng rng(9);
  const corpus::SyntheticSpeaker spA = demo_speaker("spkA", 1);
  corpus::SpeakerTurn turn{"spkA", corpus::synth_segment(spA, 1000, 5)};
  dsp::PcmSignal noise;
  {
    Rng nr(100);
    noise = corpus::white_noise(64000, nr);
  }

  SECTION("single target segment: leading ns, ts frames, trailing ns") {
    Rng r(3);
    const corpus::BuiltUtterance built =
        corpus::build_utterance({turn}, noise, 20.0, "spkA", 100, 200, r);
    REQUIRE(built.segments.size() == 1);
    const std::int64_t lead = built.segments[0].start_sample;
    CHECK(lead >= 1600);   // 100 ms leading gap at 16 kHz
    CHECK(lead <= 3200);   // 200 ms
    CHECK(built.segments[0].end_sample == lead + 16000);
    const int n_frames = dsp::num_frames_for_samples(built.signal.samples.size());
    REQUIRE(static_cast<int>(built.frame_labels.size()) == n_frames);
    // Frame centers sit at t*160 + 200; ts exactly when the center lies
    // inside [lead, lead + 16000).
    for (int t = 0; t < n_frames; ++t) {
      INFO("frame " << t);
      const std::int64_t center = static_cast<std::int64_t>(t) * 160 + 200;
      const bool inside = center >= lead && center < lead + 16000;
      CHECK(built.frame_labels[static_cast<std::size_t>(t)] ==
            (inside ? corpus::FrameLabel::ts : corpus::FrameLabel::ns));
    }
    CHECK(built.frame_labels.front() == corpus::FrameLabel::ns);
    CHECK(built.frame_labels.back() == corpus::FrameLabel::ns);
  }

  SECTION("impostor target yields zero ts frames") {
    Rng r(3);
    const corpus::BuiltUtterance built =
        corpus::build_utterance({turn}, noise, 20.0, "someone-else", 100, 200, r);
    int ts = 0, nts = 0, ns = 0;
    for (const corpus::FrameLabel l : built.frame_labels) {
      ts += l == corpus::FrameLabel::ts;
      nts += l == corpus::FrameLabel::nts;
      ns += l == corpus::FrameLabel::ns;
    }
    CHECK(ts == 0);
    CHECK(nts > 0);
    CHECK(ts + nts + ns == static_cast<int>(built.frame_labels.size()));
  }

  SECTION("label counts always partition the frames") {
    const corpus::SyntheticSpeaker spB = demo_speaker("spkB", 2);
    for (int rep = 0; rep < 5; ++rep) {
      std::vector<corpus::SpeakerTurn> turns = {
          {"spkA", corpus::synth_segment(spA, 300 + 100 * rep, static_cast<std::uint64_t>(rep))},
          {"spkB", corpus::synth_segment(spB, 450, static_cast<std::uint64_t>(rep) + 50)},
          {"spkA", corpus::synth_segment(spA, 250, static_cast<std::uint64_t>(rep) + 90)}};
      const corpus::BuiltUtterance built =
          corpus::build_utterance(turns, noise, 10.0, "spkB", 100, 500, rng);
      int ts = 0, nts = 0, ns = 0;
      for (const corpus::FrameLabel l : built.frame_labels) {
        ts += l == corpus::FrameLabel::ts;
        nts += l == corpus::FrameLabel::nts;
        ns += l == corpus::FrameLabel::ns;
      }
      CHECK(ts + nts + ns ==
            dsp::num_frames_for_samples(built.signal.samples.size()));
      CHECK(ts > 0);
      CHECK(nts > 0);
      REQUIRE(built.segments.size() == 3);
      CHECK(built.segments[0].start_sample >= 1600);  // leading gap >= 100 ms
      for (std::size_t i = 1; i < built.segments.size(); ++i)
        CHECK(built.segments[i].start_sample >= built.segments[i - 1].end_sample);
    }
  }

  SECTION("invalid inputs are rejected") {
    Rng r(3);
    CHECK_THROWS_WITH(corpus::build_utterance({}, noise, 10.0, "spkA", 100, 200, r),
                      Catch::Matchers::ContainsSubstring("empty segment list"));
    CHECK_THROWS_AS(corpus::build_utterance({turn}, noise, 31.0, "spkA", 100, 200, r),
                    ConfigError);
    CHECK_THROWS_AS(corpus::build_utterance({turn}, noise, -0.5, "spkA", 100, 200, r),
                    ConfigError);
    CHECK_THROWS_AS(corpus::build_utterance({turn}, noise, 10.0, "spkA", 50, 200, r),
                    ConfigError);
  }

  SECTION("same rng state reproduces the utterance") {
    Rng r1(77), r2(77);
    const corpus::BuiltUtterance a =
        corpus::build_utterance({turn}, noise, 15.0, "spkA", 100, 500, r1);
    const corpus::BuiltUtterance b =
        corpus::build_utterance({turn}, noise, 15.0, "spkA", 100, 500, r2);
    REQUIRE(a.signal.samples.size() == b.signal.samples.size());
    bool identical = true;
    for (std::size_t i = 0; i < a.signal.samples.size(); ++i)
      identical = identical && a.signal.samples[i] == b.signal.samples[i];
    CHECK(identical);
  }
}

TEST_CASE("enrollment dropout marks the exact rounded count per split") {
  auto make_records = [](int train, int val, int test) {
    std::vector<corpus::UtteranceRecord> recs;
    int n = 0;
    auto add = [&recs, &n](corpus::Split split, int count) {
      for (int i = 0; i < count; ++i) {
        corpus::UtteranceRecord r;
        r.id = "u" + std::to_string(n++);
        r.split = split;
        r.frame_labels = {corpus::FrameLabel::ts, corpus::FrameLabel::nts,
                          corpus::FrameLabel::ns};
        recs.push_back(std::move(r));
      }
    };
    add(corpus::Split::train, train);
    add(corpus::Split::val, val);
    add(corpus::Split::test, test);
    return recs;
  };

  SECTION("fraction 0 leaves the corpus unchanged") {
    std::vector<corpus::UtteranceRecord> recs = make_records(10, 5, 5);
    Rng rng(1);
    corpus::apply_enrollment_dropout(recs, 0.0, rng);
    for (const auto& r : recs) {
      CHECK_FALSE(r.zero_enrolled);
      CHECK(r.frame_labels[1] == corpus::FrameLabel::nts);
    }
  }

  SECTION("fraction 1 zero-enrolls everything and removes nts") {
    std::vector<corpus::UtteranceRecord> recs = make_records(10, 5, 5);
    Rng rng(1);
    corpus::apply_enrollment_dropout(recs, 1.0, rng);
    for (const auto& r : recs) {
      CHECK(r.zero_enrolled);
      for (const corpus::FrameLabel l : r.frame_labels)
        CHECK(l != corpus::FrameLabel::nts);
      CHECK(r.frame_labels[0] == corpus::FrameLabel::ts);
      CHECK(r.frame_labels[1] == corpus::FrameLabel::ts);
      CHECK(r.frame_labels[2] == corpus::FrameLabel::ns);
    }
  }

  SECTION("N=50 fraction 0.2 marks exactly 10, per split") {
    std::vector<corpus::UtteranceRecord> recs = make_records(50, 10, 20);
    Rng rng(1);
    corpus::apply_enrollment_dropout(recs, 0.2, rng);
    std::map<corpus::Split, int> marked;
    for (const auto& r : recs)
      if (r.zero_enrolled) marked[r.split]++;
    CHECK(marked[corpus::Split::train] == 10);
    CHECK(marked[corpus::Split::val] == 2);
    CHECK(marked[corpus::Split::test] == 4);
    for (const auto& r : recs)
      if (!r.zero_enrolled) CHECK(r.frame_labels[1] == corpus::FrameLabel::nts);
  }

  SECTION("fraction outside [0,1] is rejected") {
    std::vector<corpus::UtteranceRecord> recs = make_records(2, 1, 1);
    Rng rng(1);
    CHECK_THROWS_AS(corpus::apply_enrollment_dropout(recs, 1.5, rng), ConfigError);
    CHECK_THROWS_AS(corpus::apply_enrollment_dropout(recs, -0.1, rng), ConfigError);
  }
}

TEST_CASE("generate_corpus is deterministic and satisfies its contract") {
  const corpus::CorpusConfig cfg = small_config();
  TempDir dir_a("corpA"), dir_b("corpB");
  const corpus::CorpusManifest ma = corpus::generate_corpus(cfg, dir_a.str());
  corpus::save_manifest(ma, (dir_a.path / "manifest.jsonl").string());
  const corpus::CorpusManifest mb = corpus::generate_corpus(cfg, dir_b.str());
  corpus::save_manifest(mb, (dir_b.path / "manifest.jsonl").string());

  SECTION("two runs produce bit-identical manifests and audio") {
    CHECK(read_bytes((dir_a.path / "manifest.jsonl").string()) ==
          read_bytes((dir_b.path / "manifest.jsonl").string()));
    for (const corpus::UtteranceRecord& u : ma.utterances)
      CHECK(read_bytes((dir_a.path / u.wav_path).string()) ==
            read_bytes((dir_b.path / u.wav_path).string()));
    for (const auto& [id, paths] : ma.enrollment_wavs)
      for (const std::string& p : paths)
        CHECK(read_bytes((dir_a.path / p).string()) == read_bytes((dir_b.path / p).string()));
  }

  SECTION("roster splits are disjoint and pools are respected") {
    std::set<std::string> train_ids, test_ids;
    for (const corpus::SyntheticSpeaker& sp : ma.roster)
      (sp.split == corpus::Split::test ? test_ids : train_ids).insert(sp.speaker_id);
    CHECK(train_ids.size() == 4);
    CHECK(test_ids.size() == 2);
    for (const std::string& id : test_ids) CHECK(train_ids.count(id) == 0);

    for (const corpus::UtteranceRecord& u : ma.utterances) {
      const std::set<std::string>& pool =
          u.split == corpus::Split::test ? test_ids : train_ids;
      CHECK(pool.count(u.target_speaker_id) == 1);
      for (const corpus::SegmentSpan& s : u.segments) CHECK(pool.count(s.speaker_id) == 1);
    }
  }

  SECTION("utterance records are consistent with their audio") {
    std::map<corpus::Split, int> counts;
    for (const corpus::UtteranceRecord& u : ma.utterances) {
      counts[u.split]++;
      const dsp::PcmSignal sig = wav::load_wav((dir_a.path / u.wav_path).string());
      CHECK(static_cast<int>(u.frame_labels.size()) ==
            dsp::num_frames_for_samples(sig.samples.size()));
      CHECK(u.snr_db >= cfg.snr_min_db);
      CHECK(u.snr_db <= cfg.snr_max_db);
      REQUIRE_FALSE(u.segments.empty());
      CHECK(u.segments[0].start_sample >= cfg.gap_min_ms * 16);  // leading gap
      CHECK(u.segments[0].start_sample <= cfg.gap_max_ms * 16);
      CHECK(u.frame_labels[0] == corpus::FrameLabel::ns);
      CHECK(u.frame_labels.back() == corpus::FrameLabel::ns);  // trailing gap
      if (u.impostor) {
        for (const corpus::SegmentSpan& s : u.segments)
          CHECK(s.speaker_id != u.target_speaker_id);
        if (!u.zero_enrolled)
          for (const corpus::FrameLabel l : u.frame_labels)
            CHECK(l != corpus::FrameLabel::ts);
      }
    }
    CHECK(counts[corpus::Split::train] == cfg.utterances_train);
    CHECK(counts[corpus::Split::val] == cfg.utterances_val);
    CHECK(counts[corpus::Split::test] == cfg.utterances_test);

    int impostors = 0;
    for (const corpus::UtteranceRecord* u : ma.utterances_in(corpus::Split::test))
      impostors += u->impostor ? 1 : 0;
    CHECK(impostors == cfg.utterances_test / 2);

    std::map<corpus::Split, int> dropped;
    for (const corpus::UtteranceRecord& u : ma.utterances)
      if (u.zero_enrolled) {
        dropped[u.split]++;
        for (const corpus::FrameLabel l : u.frame_labels)
          CHECK(l != corpus::FrameLabel::nts);
      }
    CHECK(dropped[corpus::Split::train] ==
          static_cast<int>(std::llround(0.2 * cfg.utterances_train)));
    CHECK(dropped[corpus::Split::val] ==
          static_cast<int>(std::llround(0.2 * cfg.utterances_val)));
    CHECK(dropped[corpus::Split::test] ==
          static_cast<int>(std::llround(0.2 * cfg.utterances_test)));
  }

  SECTION("enrollment segments are clean and 3-5 per speaker") {
    for (const corpus::SyntheticSpeaker& sp : ma.roster) {
      const auto it = ma.enrollment_wavs.find(sp.speaker_id);
      REQUIRE(it != ma.enrollment_wavs.end());
      CHECK(it->second.size() >= 3);
      CHECK(it->second.size() <= 5);
      for (const std::string& p : it->second) {
        const dsp::PcmSignal sig = wav::load_wav((dir_a.path / p).string());
        double peak = 0.0;
        for (const double v : sig.samples) peak = std::max(peak, std::abs(v));
        CHECK(peak <= 0.5 + 1.0 / 32767.0);  // clean synth, no noise mixed in
        CHECK(peak > 0.4);
      }
    }
  }

  SECTION("manifest round trips through load and save") {
    const corpus::CorpusManifest loaded =
        corpus::load_manifest((dir_a.path / "manifest.jsonl").string());
    corpus::save_manifest(loaded, (dir_a.path / "manifest2.jsonl").string());
    CHECK(read_bytes((dir_a.path / "manifest.jsonl").string()) ==
          read_bytes((dir_a.path / "manifest2.jsonl").string()));
    CHECK(loaded.utterances.size() == ma.utterances.size());
    CHECK(loaded.seed == cfg.seed);
  }

  SECTION("enrollment table round trips inline and standalone") {
    corpus::CorpusManifest with_table = ma;
    Rng rng(12);
    for (const corpus::SyntheticSpeaker& sp : ma.roster) {
      Eigen::VectorXd e(8);
      for (Eigen::Index i = 0; i < e.size(); ++i)
        e[i] = static_cast<double>(static_cast<float>(rng.uniform(-1.0, 1.0)));
      with_table.enrollment_table[sp.speaker_id] = e;
    }
    const std::string p1 = (dir_a.path / "with_table.jsonl").string();
    corpus::save_manifest(with_table, p1);
    const corpus::CorpusManifest back = corpus::load_manifest(p1);
    REQUIRE(back.enrollment_table.size() == with_table.enrollment_table.size());
    for (const auto& [id, e] : with_table.enrollment_table) {
      REQUIRE(back.enrollment_table.count(id) == 1);
      CHECK(back.enrollment_table.at(id) == e);
    }

    const std::string p2 = (dir_a.path / "enrollment.jsonl").string();
    corpus::save_enrollment_table(with_table.enrollment_table, p2);
    const std::map<std::string, Eigen::VectorXd> table2 = corpus::load_enrollment_table(p2);
    REQUIRE(table2.size() == with_table.enrollment_table.size());
    for (const auto& [id, e] : with_table.enrollment_table)
      CHECK(table2.at(id) == e);
  }
}

TEST_CASE("corpus snr draws are uniform across [0,30]") {
  corpus::CorpusConfig cfg;
  cfg.speakers = 6;
  cfg.test_speakers = 2;
  cfg.utterances_train = 1000;
  cfg.utterances_val = 1;
  cfg.utterances_test = 2;
  cfg.seed = 11;
  cfg.segment_min_ms = 200;
  cfg.segment_max_ms = 250;
  cfg.gap_min_ms = 100;
  cfg.gap_max_ms = 150;
  cfg.max_speakers_per_utterance = 1;
  cfg.enroll_min_ms = 400;
  cfg.enroll_max_ms = 500;
  TempDir dir("snr");
  const corpus::CorpusManifest m = corpus::generate_corpus(cfg, dir.str());

  std::vector<int> bins(10, 0);
  int n = 0;
  for (const corpus::UtteranceRecord* u : m.utterances_in(corpus::Split::train)) {
    REQUIRE(u->snr_db >= 0.0);
    REQUIRE(u->snr_db <= 30.0);
    const int bin = std::min(9, static_cast<int>(u->snr_db / 3.0));
    bins[static_cast<std::size_t>(bin)]++;
    ++n;
  }
  REQUIRE(n == 1000);
  const double expected = n / 10.0;
  double chi2 = 0.0;
  for (const int o : bins) chi2 += (o - expected) * (o - expected) / expected;
  INFO("chi-square " << chi2);
  CHECK(chi2 < 21.666);  // df=9 critical value at p=0.01
}

TEST_CASE("infeasible corpus configs are rejected") {
  auto expect_bad = [](void (*mutate)(corpus::CorpusConfig&)) {
    corpus::CorpusConfig cfg;
    mutate(cfg);
    TempDir dir("badcfg");
    CHECK_THROWS_AS(corpus::generate_corpus(cfg, dir.str()), ConfigError);
  };
  expect_bad([](corpus::CorpusConfig& c) { c.speakers = 5; });
  expect_bad([](corpus::CorpusConfig& c) { c.test_speakers = 1; });
  expect_bad([](corpus::CorpusConfig& c) { c.test_speakers = c.speakers - 1; });
  expect_bad([](corpus::CorpusConfig& c) { c.utterances_val = 0; });
  expect_bad([](corpus::CorpusConfig& c) { c.snr_max_db = 31.0; });
  expect_bad([](corpus::CorpusConfig& c) { c.snr_min_db = 10.0; c.snr_max_db = 5.0; });
  expect_bad([](corpus::CorpusConfig& c) { c.dropout_fraction = 1.2; });
  expect_bad([](corpus::CorpusConfig& c) { c.segment_min_ms = 100; });
  expect_bad([](corpus::CorpusConfig& c) { c.gap_max_ms = 900; });
  expect_bad([](corpus::CorpusConfig& c) { c.max_speakers_per_utterance = 4; });
  expect_bad([](corpus::CorpusConfig& c) {
    c.segment_max_ms = 5000;
    c.max_segments_per_speaker = 2;
  });
}

TEST_CASE("manifest loader rejects malformed files") {
  TempDir dir("badman");
  auto write_text = [&dir](const std::string& name, const std::string& text) {
    std::ofstream out(dir.path / name, std::ios::binary);
    out << text;
    return (dir.path / name).string();
  };

  CHECK_THROWS_AS(corpus::load_manifest((dir.path / "missing.jsonl").string()), DataError);
  CHECK_THROWS_AS(corpus::load_manifest(write_text("empty.jsonl", "")), DataError);
  CHECK_THROWS_AS(corpus::load_manifest(write_text("junk.jsonl", "not json\n")), DataError);
  CHECK_THROWS_WITH(
      corpus::load_manifest(write_text(
          "schema.jsonl",
          R"({"schema":"other","version":1,"seed":1,"snr_db_range":[0,30],"dropout_fraction":0.2,"speakers":[],"enrollment_wavs":{}})"
          "\n")),
      Catch::Matchers::ContainsSubstring("schema"));
  CHECK_THROWS_WITH(
      corpus::load_manifest(write_text(
          "version.jsonl",
          R"({"schema":"pvad.corpus.manifest","version":9,"seed":1,"snr_db_range":[0,30],"dropout_fraction":0.2,"speakers":[],"enrollment_wavs":{}})"
          "\n")),
      Catch::Matchers::ContainsSubstring("version"));

  const std::string header =
      R"({"schema":"pvad.corpus.manifest","version":1,"seed":1,"snr_db_range":[0,30],"dropout_fraction":0.2,"speakers":[{"id":"spk00","split":"train","pitch_hz":140.0,"formants_hz":[560,1200,2600],"bandwidths_hz":[70,120,160],"seed":3}],"enrollment_wavs":{"spk00":[]}})";
  CHECK_THROWS_WITH(
      corpus::load_manifest(write_text(
          "target.jsonl",
          header + "\n" +
              R"({"id":"u0","wav":"wav/u0.wav","split":"train","target_speaker":"ghost","zero_enrolled":false,"impostor":false,"snr_db":5.0,"clip_fraction":0.0,"labels":"T_","segments":[["ghost",0,800]]})"
              "\n")),
      Catch::Matchers::ContainsSubstring("unknown speaker"));
  CHECK_THROWS_WITH(
      corpus::load_manifest(write_text(
          "labels.jsonl",
          header + "\n" +
              R"({"id":"u0","wav":"wav/u0.wav","split":"train","target_speaker":"spk00","zero_enrolled":false,"impostor":false,"snr_db":5.0,"clip_fraction":0.0,"labels":"TX","segments":[["spk00",0,800]]})"
              "\n")),
      Catch::Matchers::ContainsSubstring("label"));
  CHECK_THROWS_WITH(
      corpus::load_manifest(write_text(
          "segorder.jsonl",
          header + "\n" +
              R"({"id":"u0","wav":"wav/u0.wav","split":"train","target_speaker":"spk00","zero_enrolled":false,"impostor":false,"snr_db":5.0,"clip_fraction":0.0,"labels":"T_","segments":[["spk00",400,800],["spk00",0,300]]})"
              "\n")),
      Catch::Matchers::ContainsSubstring("unsorted"));
}

}  // namespace
