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

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "pvad/base64.hpp"
#include "pvad/dsp.hpp"
#include "pvad/error.hpp"
#include "pvad/rng.hpp"
#include "pvad/wavio.hpp"

namespace pvad::corpus {

enum class FrameLabel : std::uint8_t { ts, nts, ns };

inline char label_char(FrameLabel l) {
  switch (l) {
    case FrameLabel::ts: return 'T';
    case FrameLabel::nts: return 'N';
    case FrameLabel::ns: return '_';
  }
  throw DataError("label_char: invalid label");
}

inline FrameLabel label_from_char(char c) {
  if (c == 'T') return FrameLabel::ts;
  if (c == 'N') return FrameLabel::nts;
  if (c == '_') return FrameLabel::ns;
  throw DataError(std::string("label_from_char: invalid label character '") + c + "'");
}

inline std::string labels_to_string(const std::vector<FrameLabel>& labels) {
  std::string s;
  s.reserve(labels.size());
  for (const FrameLabel l : labels) s.push_back(label_char(l));
  return s;
}

inline std::vector<FrameLabel> labels_from_string(const std::string& s) {
  std::vector<FrameLabel> labels;
  labels.reserve(s.size());
  for (const char c : s) labels.push_back(label_from_char(c));
  return labels;
}

enum class Split { train, val, test };

inline const char* split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  throw DataError("split_name: invalid split");
}

inline Split split_from_name(const std::string& name) {
  if (name == "train") return Split::train;
  if (name == "val") return Split::val;
  if (name == "test") return Split::test;
  throw DataError("split_from_name: unknown split '" + name + "'");
}

struct SyntheticSpeaker {
  std::string speaker_id;
  double pitch_hz = 0.0;
  std::vector<double> formants_hz;    // 3-4 resonator centers, ascending
  std::vector<double> bandwidths_hz;  // one per formant
  std::uint64_t seed = 0;
  Split split = Split::train;
};

struct SegmentSpan {
  std::string speaker_id;
  std::int64_t start_sample = 0;
  std::int64_t end_sample = 0;  // exclusive
};

struct UtteranceRecord {
  std::string id;
  std::string wav_path;  // relative to the corpus directory
  Split split = Split::train;
  std::string target_speaker_id;
  bool zero_enrolled = false;
  bool impostor = false;
  double snr_db = 0.0;
  double clip_fraction = 0.0;
  std::vector<FrameLabel> frame_labels;
  std::vector<SegmentSpan> segments;
};

struct CorpusConfig {
  int speakers = 12;
  int test_speakers = 4;
  int utterances_train = 200;
  int utterances_val = 40;
  int utterances_test = 80;
  std::uint64_t seed = 7;
  double snr_min_db = 0.0;
  double snr_max_db = 30.0;
  double dropout_fraction = 0.2;
  int segment_min_ms = 600;
  int segment_max_ms = 1200;
  int gap_min_ms = 100;
  int gap_max_ms = 500;
  int max_speakers_per_utterance = 3;
  int max_segments_per_speaker = 1;
  int enroll_min_ms = 1200;
  int enroll_max_ms = 2500;
};

struct CorpusManifest {
  std::uint64_t seed = 0;
  double snr_min_db = 0.0;
  double snr_max_db = 30.0;
  double dropout_fraction = 0.0;
  std::vector<SyntheticSpeaker> roster;
  std::map<std::string, std::vector<std::string>> enrollment_wavs;
  std::vector<UtteranceRecord> utterances;
  // speaker_id -> embedding; empty until a speaker encoder has produced one.
  std::map<std::string, Eigen::VectorXd> enrollment_table;

  const SyntheticSpeaker* find_speaker(const std::string& id) const {
    for (const SyntheticSpeaker& s : roster)
      if (s.speaker_id == id) return &s;
    return nullptr;
  }

  std::vector<const UtteranceRecord*> utterances_in(Split split) const {
    std::vector<const UtteranceRecord*> out;
    for (const UtteranceRecord& u : utterances)
      if (u.split == split) out.push_back(&u);
    return out;
  }
};

// ---------------------------------------------------------------------------
// Synthesis
// ---------------------------------------------------------------------------

// Two-pole resonator y[t] = x[t] + 2r·cos(w0)·y[t-1] - r²·y[t-2].
inline std::vector<double> resonator_filter(const std::vector<double>& x, double center_hz,
                                            double bandwidth_hz) {
  const double r = std::exp(-M_PI * bandwidth_hz / dsp::kSampleRateHz);
  const double a1 = 2.0 * r * std::cos(2.0 * M_PI * center_hz / dsp::kSampleRateHz);
  const double a2 = -r * r;
  std::vector<double> y(x.size(), 0.0);
  double y1 = 0.0, y2 = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double v = x[i] + a1 * y1 + a2 * y2;
    y[i] = v;
    y2 = y1;
    y1 = v;
  }
  return y;
}

inline void validate_speaker(const SyntheticSpeaker& sp) {
  if (sp.formants_hz.size() < 3 || sp.formants_hz.size() > 4)
    throw ConfigError("speaker '" + sp.speaker_id + "': expected 3-4 formants, got " +
                      std::to_string(sp.formants_hz.size()));
  if (sp.bandwidths_hz.size() != sp.formants_hz.size())
    throw ConfigError("speaker '" + sp.speaker_id + "': formant/bandwidth count mismatch");
  for (const double f : sp.formants_hz)
    if (!(f >= 200.0 && f <= 3500.0))
      throw ConfigError("speaker '" + sp.speaker_id + "': formant " + std::to_string(f) +
                        " Hz outside [200, 3500]");
  for (const double b : sp.bandwidths_hz)
    if (!(b > 0.0)) throw ConfigError("speaker '" + sp.speaker_id + "': non-positive bandwidth");
  if (!(sp.pitch_hz >= 60.0 && sp.pitch_hz <= 400.0))
    throw ConfigError("speaker '" + sp.speaker_id + "': pitch " + std::to_string(sp.pitch_hz) +
                      " Hz outside [60, 400]");
}

// Jittered pulse train at the speaker's pitch, shaped by the formant
// resonator cascade, peak-normalized to 0.5.
inline dsp::PcmSignal synth_segment(const SyntheticSpeaker& sp, int duration_ms,
                                    std::uint64_t seed) {
  if (duration_ms < 200 || duration_ms > 5000)
    throw ConfigError("synth_segment: duration " + std::to_string(duration_ms) +
                      " ms outside [200, 5000]");
  validate_speaker(sp);

  const std::int64_t n = static_cast<std::int64_t>(duration_ms) * (dsp::kSampleRateHz / 1000);
  Rng speaker_rng(sp.seed);
  Rng r = speaker_rng.stream("segment", seed);

  std::vector<double> x(static_cast<std::size_t>(n), 0.0);
  const double period = static_cast<double>(dsp::kSampleRateHz) / sp.pitch_hz;
  double t = 0.0;
  while (t < static_cast<double>(n)) {
    const std::int64_t at = std::llround(t);
    if (at >= n) break;
    x[static_cast<std::size_t>(at)] += r.uniform(0.85, 1.15);
    t += period * r.uniform(0.99, 1.01);
  }
  for (double& v : x) v += 0.002 * r.gaussian();  // breath floor

  for (std::size_t j = 0; j < sp.formants_hz.size(); ++j)
    x = resonator_filter(x, sp.formants_hz[j], sp.bandwidths_hz[j]);

  double peak = 0.0;
  for (const double v : x) peak = std::max(peak, std::abs(v));
  if (!(peak > 0.0)) throw NumericError("synth_segment: degenerate all-zero segment");
  const double scale = 0.5 / peak;

  dsp::PcmSignal out;
  out.samples.resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out.samples[i] = x[i] * scale;
  return out;
}

inline dsp::PcmSignal white_noise(std::int64_t n, Rng& rng) {
  if (n <= 0) throw ConfigError("white_noise: non-positive length");
  dsp::PcmSignal out;
  out.samples.resize(static_cast<std::size_t>(n));
  for (double& v : out.samples) v = 0.1 * rng.gaussian();
  return out;
}

// White noise with a slow sinusoidal amplitude envelope.
inline dsp::PcmSignal am_noise(std::int64_t n, Rng& rng) {
  if (n <= 0) throw ConfigError("am_noise: non-positive length");
  const double depth = rng.uniform(0.5, 0.9);
  const double mod_hz = rng.uniform(0.5, 4.0);
  const double phase = rng.uniform(0.0, 2.0 * M_PI);
  dsp::PcmSignal out;
  out.samples.resize(static_cast<std::size_t>(n));
  for (std::size_t i = 0; i < out.samples.size(); ++i) {
    const double env = 1.0 + depth * std::sin(2.0 * M_PI * mod_hz * static_cast<double>(i) /
                                                  dsp::kSampleRateHz +
                                              phase);
    out.samples[i] = 0.1 * rng.gaussian() * env;
  }
  return out;
}

inline dsp::PcmSignal tiled_noise(const dsp::PcmSignal& src, std::int64_t n,
                                  std::uint64_t offset) {
  if (src.samples.empty()) throw DataError("tiled_noise: empty source");
  if (n <= 0) throw ConfigError("tiled_noise: non-positive length");
  dsp::PcmSignal out;
  out.sample_rate_hz = src.sample_rate_hz;
  out.samples.resize(static_cast<std::size_t>(n));
  const std::size_t len = src.samples.size();
  for (std::size_t i = 0; i < out.samples.size(); ++i)
    out.samples[i] = src.samples[(offset + i) % len];
  return out;
}

struct MixResult {
  dsp::PcmSignal signal;
  double clip_fraction = 0.0;
};

inline double rms_of(const std::vector<double>& v, std::size_t count) {
  double acc = 0.0;
  for (std::size_t i = 0; i < count; ++i) acc += v[i] * v[i];
  return std::sqrt(acc / static_cast<double>(count));
}

// output = clean + g·noise with g = (RMS_clean/RMS_noise)·10^(-snr/20),
// clipped to [-1, 1]; the clipped-sample fraction is reported.
inline MixResult mix_at_snr(const dsp::PcmSignal& clean, const dsp::PcmSignal& noise,
                            double snr_db) {
  if (clean.samples.empty()) throw DataError("mix_at_snr: empty clean signal");
  if (noise.samples.size() < clean.samples.size())
    throw DataError("mix_at_snr: noise (" + std::to_string(noise.samples.size()) +
                    " samples) shorter than clean (" + std::to_string(clean.samples.size()) +
                    " samples); tile it first");
  const std::size_t n = clean.samples.size();
  const double rms_clean = rms_of(clean.samples, n);
  const double rms_noise = rms_of(noise.samples, n);
  if (!(rms_clean > 0.0)) throw DataError("mix_at_snr: silent clean signal; SNR undefined");
  if (!(rms_noise > 0.0)) throw DataError("mix_at_snr: silent noise signal");

  const double gain = (rms_clean / rms_noise) * std::pow(10.0, -snr_db / 20.0);
  MixResult out;
  out.signal.samples.resize(n);
  std::size_t clipped = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double v = clean.samples[i] + gain * noise.samples[i];
    if (v > 1.0) {
      v = 1.0;
      ++clipped;
    } else if (v < -1.0) {
      v = -1.0;
      ++clipped;
    }
    out.signal.samples[i] = v;
  }
  out.clip_fraction = static_cast<double>(clipped) / static_cast<double>(n);
  return out;
}

// ---------------------------------------------------------------------------
// Utterance assembly
// ---------------------------------------------------------------------------

struct SpeakerTurn {
  std::string speaker_id;
  dsp::PcmSignal audio;
};

struct BuiltUtterance {
  dsp::PcmSignal signal;
  std::vector<FrameLabel> frame_labels;
  std::vector<SegmentSpan> segments;
  double clip_fraction = 0.0;
};

// A frame is ts/nts when its center sample lies inside a target/other-speaker
// segment, ns otherwise. Spans must be sorted and non-overlapping.
inline std::vector<FrameLabel> labels_for_spans(std::int64_t total_samples,
                                                const std::vector<SegmentSpan>& spans,
                                                const std::string& target_speaker_id) {
  const Eigen::Index n_frames = dsp::num_frames_for_samples(total_samples);
  std::vector<FrameLabel> labels(static_cast<std::size_t>(n_frames), FrameLabel::ns);
  std::size_t at = 0;
  for (Eigen::Index t = 0; t < n_frames; ++t) {
    const std::int64_t center = static_cast<std::int64_t>(t) * dsp::kHopSamples +
                                dsp::kFrameLenSamples / 2;
    while (at < spans.size() && spans[at].end_sample <= center) ++at;
    if (at < spans.size() && spans[at].start_sample <= center && center < spans[at].end_sample)
      labels[static_cast<std::size_t>(t)] =
          spans[at].speaker_id == target_speaker_id ? FrameLabel::ts : FrameLabel::nts;
  }
  return labels;
}

inline constexpr std::int64_t kMaxUtteranceSamples = 20 * dsp::kSampleRateHz;

// Concatenates turns with silence gaps: a leading gap, one after each turn,
// and a noise-only tail, then mixes noise at snr_db. The leading gap gives
// every utterance pre-onset context, which keeps detection latency from the
// first ts frame meaningful for instant scorers.
inline BuiltUtterance build_utterance(const std::vector<SpeakerTurn>& turns,
                                      const dsp::PcmSignal& noise, double snr_db,
                                      const std::string& target_speaker_id, int gap_min_ms,
                                      int gap_max_ms, Rng& rng) {
  if (turns.empty()) throw DataError("build_utterance: empty segment list");
  if (!(snr_db >= 0.0 && snr_db <= 30.0))
    throw ConfigError("build_utterance: snr " + std::to_string(snr_db) +
                      " dB outside [0, 30]");
  if (gap_min_ms < 100 || gap_max_ms > 500 || gap_min_ms > gap_max_ms)
    throw ConfigError("build_utterance: gap range [" + std::to_string(gap_min_ms) + ", " +
                      std::to_string(gap_max_ms) + "] ms outside [100, 500]");

  std::vector<SegmentSpan> spans;
  spans.reserve(turns.size());
  std::int64_t total = static_cast<std::int64_t>(rng.uniform_int(gap_min_ms, gap_max_ms)) *
                       (dsp::kSampleRateHz / 1000);
  std::vector<std::int64_t> starts(turns.size());
  for (std::size_t i = 0; i < turns.size(); ++i) {
    const std::int64_t len = static_cast<std::int64_t>(turns[i].audio.samples.size());
    if (len == 0) throw DataError("build_utterance: empty segment audio");
    starts[i] = total;
    spans.push_back({turns[i].speaker_id, total, total + len});
    total += len;
    total += static_cast<std::int64_t>(rng.uniform_int(gap_min_ms, gap_max_ms)) *
             (dsp::kSampleRateHz / 1000);
  }
  if (total > kMaxUtteranceSamples)
    throw DataError("build_utterance: utterance length " + std::to_string(total) +
                    " samples exceeds the 20 s cap");

  dsp::PcmSignal clean;
  clean.samples.assign(static_cast<std::size_t>(total), 0.0);
  for (std::size_t i = 0; i < turns.size(); ++i)
    std::copy(turns[i].audio.samples.begin(), turns[i].audio.samples.end(),
              clean.samples.begin() + static_cast<std::ptrdiff_t>(starts[i]));

  MixResult mixed = mix_at_snr(clean, noise, snr_db);
  BuiltUtterance out;
  out.signal = std::move(mixed.signal);
  out.clip_fraction = mixed.clip_fraction;
  out.segments = std::move(spans);
  out.frame_labels = labels_for_spans(total, out.segments, target_speaker_id);
  return out;
}

// Exactly round(fraction·N) utterances per split get the zero-embedding
// sentinel; their labels collapse nts into ts.
inline void apply_enrollment_dropout(std::vector<UtteranceRecord>& records, double fraction,
                                     Rng& rng) {
  if (!(fraction >= 0.0 && fraction <= 1.0))
    throw ConfigError("apply_enrollment_dropout: fraction " + std::to_string(fraction) +
                      " outside [0, 1]");
  for (const Split split : {Split::train, Split::val, Split::test}) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < records.size(); ++i)
      if (records[i].split == split) idx.push_back(i);
    if (idx.empty()) continue;
    const std::size_t k = static_cast<std::size_t>(
        std::llround(fraction * static_cast<double>(idx.size())));
    rng.shuffle(idx);
    for (std::size_t j = 0; j < k; ++j) {
      UtteranceRecord& rec = records[idx[j]];
      rec.zero_enrolled = true;
      for (FrameLabel& l : rec.frame_labels)
        if (l == FrameLabel::nts) l = FrameLabel::ts;
    }
  }
}

// ---------------------------------------------------------------------------
// Roster and corpus generation
// ---------------------------------------------------------------------------

inline void validate_corpus_config(const CorpusConfig& cfg) {
  auto fail = [](const std::string& what) { throw ConfigError("corpus config: " + what); };
  if (cfg.speakers < 6) fail("at least 6 speakers are required for impostor draws");
  if (cfg.speakers > 99) fail("at most 99 speakers supported");
  if (cfg.test_speakers < 2) fail("at least 2 test speakers required");
  if (cfg.speakers - cfg.test_speakers < 2) fail("at least 2 train speakers required");
  if (cfg.utterances_train < 1 || cfg.utterances_val < 1 || cfg.utterances_test < 1)
    fail("every split needs at least one utterance");
  if (!(cfg.snr_min_db >= 0.0 && cfg.snr_min_db <= cfg.snr_max_db && cfg.snr_max_db <= 30.0))
    fail("snr range must satisfy 0 <= min <= max <= 30");
  if (!(cfg.dropout_fraction >= 0.0 && cfg.dropout_fraction <= 1.0))
    fail("dropout fraction outside [0, 1]");
  if (cfg.segment_min_ms < 200 || cfg.segment_max_ms > 5000 ||
      cfg.segment_min_ms > cfg.segment_max_ms)
    fail("segment duration range outside [200, 5000] ms");
  if (cfg.gap_min_ms < 100 || cfg.gap_max_ms > 500 || cfg.gap_min_ms > cfg.gap_max_ms)
    fail("gap range outside [100, 500] ms");
  if (cfg.max_speakers_per_utterance < 1 || cfg.max_speakers_per_utterance > 3)
    fail("speakers per utterance must be within [1, 3]");
  if (cfg.max_segments_per_speaker < 1) fail("segments per speaker must be >= 1");
  if (cfg.enroll_min_ms < 200 || cfg.enroll_max_ms > 5000 ||
      cfg.enroll_min_ms > cfg.enroll_max_ms)
    fail("enrollment duration range outside [200, 5000] ms");
  // Worst-case utterance (leading gap plus one gap per segment) must respect
  // the 20 s cap.
  const std::int64_t worst =
      static_cast<std::int64_t>(cfg.max_speakers_per_utterance) * cfg.max_segments_per_speaker *
          cfg.segment_max_ms +
      (static_cast<std::int64_t>(cfg.max_speakers_per_utterance) * cfg.max_segments_per_speaker +
       1) *
          cfg.gap_max_ms;
  if (worst > 20000) fail("segment/gap ranges allow utterances beyond the 20 s cap");
}

// Speakers get first-formant slots spread across [260, 1240] Hz with small
// jitter, and a pitch whose harmonic lands exactly on the first formant; that
// keeps long-term spectral peaks well separated across the roster.
inline std::vector<SyntheticSpeaker> make_roster(int speakers, int test_speakers,
                                                 const Rng& root) {
  Rng r = root.stream("roster");
  std::vector<bool> is_test(static_cast<std::size_t>(speakers), false);
  for (int j = 0; j < test_speakers; ++j) {
    const int at = static_cast<int>((j + 0.5) * speakers / test_speakers);
    is_test[static_cast<std::size_t>(std::min(at, speakers - 1))] = true;
  }
  // The stride formula can collide only if test_speakers > speakers.
  int marked = 0;
  for (const bool b : is_test) marked += b ? 1 : 0;
  if (marked != test_speakers) throw ConfigError("make_roster: cannot place test speakers");

  std::vector<SyntheticSpeaker> roster;
  roster.reserve(static_cast<std::size_t>(speakers));
  std::vector<std::uint64_t> used_seeds;
  const double slot = (1240.0 - 260.0) / speakers;
  for (int i = 0; i < speakers; ++i) {
    SyntheticSpeaker sp;
    std::ostringstream id;
    id << "spk" << (i < 10 ? "0" : "") << i;
    sp.speaker_id = id.str();
    const double f1 = 260.0 + (i + 0.5 + r.uniform(-0.05, 0.05)) * slot;
    const double f2 = f1 + r.uniform(500.0, 900.0);
    const double f3 = r.uniform(2400.0, 3400.0);
    sp.formants_hz = {f1, f2, f3};
    sp.bandwidths_hz = {r.uniform(50.0, 90.0), r.uniform(80.0, 160.0), r.uniform(100.0, 200.0)};
    const double k = std::max<double>(2.0, static_cast<double>(std::llround(f1 / 150.0)));
    sp.pitch_hz = f1 / k;
    std::uint64_t seed = r.next_u64();
    while (std::find(used_seeds.begin(), used_seeds.end(), seed) != used_seeds.end()) ++seed;
    used_seeds.push_back(seed);
    sp.seed = seed;
    sp.split = is_test[static_cast<std::size_t>(i)] ? Split::test : Split::train;
    roster.push_back(std::move(sp));
  }
  return roster;
}

inline CorpusManifest generate_corpus(const CorpusConfig& cfg, const std::string& out_dir) {
  validate_corpus_config(cfg);
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(out_dir) / "wav");
  fs::create_directories(fs::path(out_dir) / "enroll");

  const Rng root(cfg.seed);
  CorpusManifest manifest;
  manifest.seed = cfg.seed;
  manifest.snr_min_db = cfg.snr_min_db;
  manifest.snr_max_db = cfg.snr_max_db;
  manifest.dropout_fraction = cfg.dropout_fraction;
  manifest.roster = make_roster(cfg.speakers, cfg.test_speakers, root);

  // Enrollment segments are fresh draws per speaker, clean (no noise), and
  // never reused inside any utterance.
  for (std::size_t i = 0; i < manifest.roster.size(); ++i) {
    const SyntheticSpeaker& sp = manifest.roster[i];
    Rng er = root.stream("enroll", static_cast<std::uint64_t>(i));
    const int count = er.uniform_int(3, 5);
    std::vector<std::string> paths;
    for (int k = 0; k < count; ++k) {
      const int dur = er.uniform_int(cfg.enroll_min_ms, cfg.enroll_max_ms);
      const dsp::PcmSignal seg = synth_segment(sp, dur, er.next_u64());
      const std::string rel = "enroll/" + sp.speaker_id + "_" + std::to_string(k) + ".wav";
      wav::save_wav((fs::path(out_dir) / rel).string(), seg);
      paths.push_back(rel);
    }
    manifest.enrollment_wavs[sp.speaker_id] = std::move(paths);
  }

  std::vector<const SyntheticSpeaker*> train_pool, test_pool;
  for (const SyntheticSpeaker& sp : manifest.roster)
    (sp.split == Split::test ? test_pool : train_pool).push_back(&sp);

  struct SplitPlan {
    Split split;
    int count;
    const std::vector<const SyntheticSpeaker*>* pool;
  };
  const SplitPlan plans[] = {{Split::train, cfg.utterances_train, &train_pool},
                             {Split::val, cfg.utterances_val, &train_pool},
                             {Split::test, cfg.utterances_test, &test_pool}};

  for (const SplitPlan& plan : plans) {
    const std::string stream_label = std::string("utt-") + split_name(plan.split);
    for (int u = 0; u < plan.count; ++u) {
      Rng ur = root.stream(stream_label, static_cast<std::uint64_t>(u));
      const bool impostor = plan.split == Split::test && u % 2 == 1;

      std::vector<const SyntheticSpeaker*> pool = *plan.pool;
      ur.shuffle(pool);
      const int k_max = std::min<int>(cfg.max_speakers_per_utterance,
                                      static_cast<int>(pool.size()) - (impostor ? 1 : 0));
      const int k = ur.uniform_int(1, k_max);
      const SyntheticSpeaker* target = nullptr;
      std::vector<const SyntheticSpeaker*> chosen;
      if (impostor) {
        target = pool[0];
        chosen.assign(pool.begin() + 1, pool.begin() + 1 + k);
      } else {
        chosen.assign(pool.begin(), pool.begin() + k);
        target = chosen[static_cast<std::size_t>(ur.uniform_int(0, k - 1))];
      }

      std::vector<SpeakerTurn> turns;
      for (const SyntheticSpeaker* sp : chosen) {
        const int n_seg = ur.uniform_int(1, cfg.max_segments_per_speaker);
        for (int s = 0; s < n_seg; ++s) {
          const int dur = ur.uniform_int(cfg.segment_min_ms, cfg.segment_max_ms);
          turns.push_back({sp->speaker_id, synth_segment(*sp, dur, ur.next_u64())});
        }
      }
      if (turns.size() > 1) ur.shuffle(turns);

      std::int64_t upper_bound = 0;
      for (const SpeakerTurn& t : turns)
        upper_bound += static_cast<std::int64_t>(t.audio.samples.size());
      upper_bound += static_cast<std::int64_t>(turns.size() + 1) * cfg.gap_max_ms *
                     (dsp::kSampleRateHz / 1000);
      const dsp::PcmSignal noise = ur.uniform01() < 0.5 ? white_noise(upper_bound, ur)
                                                        : am_noise(upper_bound, ur);
      const double snr = ur.uniform(cfg.snr_min_db, cfg.snr_max_db);

      BuiltUtterance built = build_utterance(turns, noise, snr, target->speaker_id,
                                             cfg.gap_min_ms, cfg.gap_max_ms, ur);

      UtteranceRecord rec;
      {
        std::ostringstream id;
        id << split_name(plan.split) << "_";
        id.width(4);
        id.fill('0');
        id << u;
        rec.id = id.str();
      }
      rec.wav_path = "wav/" + rec.id + ".wav";
      rec.split = plan.split;
      rec.target_speaker_id = target->speaker_id;
      rec.impostor = impostor;
      rec.snr_db = snr;
      rec.clip_fraction = built.clip_fraction;
      rec.frame_labels = std::move(built.frame_labels);
      rec.segments = std::move(built.segments);
      wav::save_wav((fs::path(out_dir) / rec.wav_path).string(), built.signal);
      manifest.utterances.push_back(std::move(rec));
    }
  }

  Rng dropout_rng = root.stream("dropout");
  apply_enrollment_dropout(manifest.utterances, cfg.dropout_fraction, dropout_rng);
  return manifest;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

inline std::string embedding_to_base64(const Eigen::VectorXd& v) {
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(v.size()) * 4);
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const std::uint32_t u = std::bit_cast<std::uint32_t>(static_cast<float>(v[i]));
    for (int b = 0; b < 4; ++b)
      bytes[static_cast<std::size_t>(i) * 4 + static_cast<std::size_t>(b)] =
          static_cast<std::uint8_t>((u >> (8 * b)) & 0xff);
  }
  return base64_encode(bytes.data(), bytes.size());
}

inline Eigen::VectorXd embedding_from_base64(const std::string& text) {
  const std::vector<std::uint8_t> bytes = base64_decode(text);
  if (bytes.size() % 4 != 0)
    throw DataError("embedding_from_base64: byte count not a multiple of 4");
  Eigen::VectorXd v(static_cast<Eigen::Index>(bytes.size() / 4));
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    std::uint32_t u = 0;
    for (int b = 0; b < 4; ++b)
      u |= static_cast<std::uint32_t>(bytes[static_cast<std::size_t>(i) * 4 +
                                            static_cast<std::size_t>(b)])
           << (8 * b);
    v[i] = static_cast<double>(std::bit_cast<float>(u));
  }
  return v;
}

inline constexpr const char* kManifestSchema = "pvad.corpus.manifest";
inline constexpr int kManifestVersion = 1;

inline void save_manifest(const CorpusManifest& manifest, const std::string& path) {
  using json = nlohmann::ordered_json;
  json header;
  header["schema"] = kManifestSchema;
  header["version"] = kManifestVersion;
  header["seed"] = manifest.seed;
  header["snr_db_range"] = {manifest.snr_min_db, manifest.snr_max_db};
  header["dropout_fraction"] = manifest.dropout_fraction;
  json speakers = json::array();
  for (const SyntheticSpeaker& sp : manifest.roster) {
    json s;
    s["id"] = sp.speaker_id;
    s["split"] = split_name(sp.split);
    s["pitch_hz"] = sp.pitch_hz;
    s["formants_hz"] = sp.formants_hz;
    s["bandwidths_hz"] = sp.bandwidths_hz;
    s["seed"] = sp.seed;
    speakers.push_back(std::move(s));
  }
  header["speakers"] = std::move(speakers);
  json enroll = json::object();
  for (const auto& [id, paths] : manifest.enrollment_wavs) enroll[id] = paths;
  header["enrollment_wavs"] = std::move(enroll);
  if (!manifest.enrollment_table.empty()) {
    json table = json::object();
    for (const auto& [id, emb] : manifest.enrollment_table)
      table[id] = embedding_to_base64(emb);
    header["enrollment_table"] = std::move(table);
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("save_manifest: cannot open '" + path + "' for writing");
  out << header.dump() << "\n";
  for (const UtteranceRecord& u : manifest.utterances) {
    json r;
    r["id"] = u.id;
    r["wav"] = u.wav_path;
    r["split"] = split_name(u.split);
    r["target_speaker"] = u.target_speaker_id;
    r["zero_enrolled"] = u.zero_enrolled;
    r["impostor"] = u.impostor;
    r["snr_db"] = u.snr_db;
    r["clip_fraction"] = u.clip_fraction;
    r["labels"] = labels_to_string(u.frame_labels);
    json segs = json::array();
    for (const SegmentSpan& s : u.segments)
      segs.push_back(json::array({s.speaker_id, s.start_sample, s.end_sample}));
    r["segments"] = std::move(segs);
    out << r.dump() << "\n";
  }
  if (!out) throw DataError("save_manifest: write failed for '" + path + "'");
}

inline CorpusManifest load_manifest(const std::string& path) {
  using json = nlohmann::ordered_json;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("load_manifest: cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw DataError("load_manifest: '" + path + "' is empty");

  json header;
  try {
    header = json::parse(line);
  } catch (const json::exception& e) {
    throw DataError("load_manifest: bad header JSON in '" + path + "': " + e.what());
  }
  CorpusManifest manifest;
  try {
    if (header.at("schema").get<std::string>() != kManifestSchema)
      throw DataError("load_manifest: unexpected schema '" +
                      header.at("schema").get<std::string>() + "'");
    if (header.at("version").get<int>() != kManifestVersion)
      throw DataError("load_manifest: unsupported manifest version " +
                      std::to_string(header.at("version").get<int>()));
    manifest.seed = header.at("seed").get<std::uint64_t>();
    manifest.snr_min_db = header.at("snr_db_range").at(0).get<double>();
    manifest.snr_max_db = header.at("snr_db_range").at(1).get<double>();
    manifest.dropout_fraction = header.at("dropout_fraction").get<double>();
    for (const json& s : header.at("speakers")) {
      SyntheticSpeaker sp;
      sp.speaker_id = s.at("id").get<std::string>();
      sp.split = split_from_name(s.at("split").get<std::string>());
      sp.pitch_hz = s.at("pitch_hz").get<double>();
      sp.formants_hz = s.at("formants_hz").get<std::vector<double>>();
      sp.bandwidths_hz = s.at("bandwidths_hz").get<std::vector<double>>();
      sp.seed = s.at("seed").get<std::uint64_t>();
      manifest.roster.push_back(std::move(sp));
    }
    for (const auto& [id, paths] : header.at("enrollment_wavs").items())
      manifest.enrollment_wavs[id] = paths.get<std::vector<std::string>>();
    if (header.contains("enrollment_table"))
      for (const auto& [id, text] : header.at("enrollment_table").items())
        manifest.enrollment_table[id] = embedding_from_base64(text.get<std::string>());
  } catch (const json::exception& e) {
    throw DataError("load_manifest: bad header in '" + path + "': " + e.what());
  }

  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json r;
    try {
      r = json::parse(line);
    } catch (const json::exception& e) {
      throw DataError("load_manifest: bad JSON at " + path + ":" + std::to_string(line_no) +
                      ": " + e.what());
    }
    try {
      UtteranceRecord u;
      u.id = r.at("id").get<std::string>();
      u.wav_path = r.at("wav").get<std::string>();
      u.split = split_from_name(r.at("split").get<std::string>());
      u.target_speaker_id = r.at("target_speaker").get<std::string>();
      u.zero_enrolled = r.at("zero_enrolled").get<bool>();
      u.impostor = r.at("impostor").get<bool>();
      u.snr_db = r.at("snr_db").get<double>();
      u.clip_fraction = r.at("clip_fraction").get<double>();
      u.frame_labels = labels_from_string(r.at("labels").get<std::string>());
      std::int64_t prev_end = 0;
      for (const json& s : r.at("segments")) {
        SegmentSpan span;
        span.speaker_id = s.at(0).get<std::string>();
        span.start_sample = s.at(1).get<std::int64_t>();
        span.end_sample = s.at(2).get<std::int64_t>();
        if (span.start_sample < prev_end || span.end_sample <= span.start_sample)
          throw DataError("load_manifest: unsorted or degenerate segment at " + path + ":" +
                          std::to_string(line_no));
        prev_end = span.end_sample;
        u.segments.push_back(std::move(span));
      }
      if (manifest.find_speaker(u.target_speaker_id) == nullptr)
        throw DataError("load_manifest: utterance '" + u.id + "' targets unknown speaker '" +
                        u.target_speaker_id + "'");
      manifest.utterances.push_back(std::move(u));
    } catch (const json::exception& e) {
      throw DataError("load_manifest: bad record at " + path + ":" + std::to_string(line_no) +
                      ": " + e.what());
    }
  }
  return manifest;
}

inline void save_enrollment_table(const std::map<std::string, Eigen::VectorXd>& table,
                                  const std::string& path) {
  using json = nlohmann::ordered_json;
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("save_enrollment_table: cannot open '" + path + "' for writing");
  for (const auto& [id, emb] : table) {
    json r;
    r["speaker"] = id;
    r["embedding"] = embedding_to_base64(emb);
    out << r.dump() << "\n";
  }
  if (!out) throw DataError("save_enrollment_table: write failed for '" + path + "'");
}

inline std::map<std::string, Eigen::VectorXd> load_enrollment_table(const std::string& path) {
  using json = nlohmann::ordered_json;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("load_enrollment_table: cannot open '" + path + "'");
  std::map<std::string, Eigen::VectorXd> table;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const json r = json::parse(line);
      table[r.at("speaker").get<std::string>()] =
          embedding_from_base64(r.at("embedding").get<std::string>());
    } catch (const json::exception& e) {
      throw DataError("load_enrollment_table: bad record at " + path + ":" +
                      std::to_string(line_no) + ": " + e.what());
    }
  }
  return table;
}

}  // namespace pvad::corpus
