// Copyright (c) 2026 The pvadbench Authors
// SPDX-License-Identifier: Apache-2.0
//
// Glue between a corpus on disk and the training / evaluation layers:
// feature extraction, label mapping, enrollment tables, and scoring.

#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "pvad/corpus.hpp"
#include "pvad/dsp.hpp"
#include "pvad/error.hpp"
#include "pvad/metrics.hpp"
#include "pvad/models.hpp"
#include "pvad/speaker.hpp"
#include "pvad/train.hpp"
#include "pvad/wavio.hpp"

namespace pvad::pipeline {

// Longest single-speaker slice fed to the encoder trainer; corpus segments
// rarely exceed this, and a cap keeps epoch cost predictable.
constexpr int kMaxEncoderSliceFrames = 100;
// Slices shorter than this carry too little voicing to classify.
constexpr int kMinEncoderSliceFrames = 10;

// Extracts features once per utterance and keeps them for later passes;
// several systems train on the same corpus in one process.
class FeatureCache {
 public:
  explicit FeatureCache(std::string corpus_dir) : corpus_dir_(std::move(corpus_dir)) {}

  const std::string& corpus_dir() const { return corpus_dir_; }

  const dsp::LogMelFrames& get(const corpus::UtteranceRecord& rec) {
    auto it = cache_.find(rec.id);
    if (it != cache_.end()) return it->second;
    namespace fs = std::filesystem;
    const dsp::PcmSignal pcm = wav::load_wav((fs::path(corpus_dir_) / rec.wav_path).string());
    dsp::LogMelFrames feats = dsp::log_mel_features(pcm);
    if (static_cast<std::size_t>(feats.num_frames()) != rec.frame_labels.size())
      throw DataError("utterance '" + rec.id + "': " + std::to_string(rec.frame_labels.size()) +
                      " labels for " + std::to_string(feats.num_frames()) + " feature frames");
    return cache_.emplace(rec.id, std::move(feats)).first->second;
  }

 private:
  std::string corpus_dir_;
  std::map<std::string, dsp::LogMelFrames> cache_;
};

inline std::vector<int> pvad_classes(const std::vector<corpus::FrameLabel>& labels) {
  std::vector<int> classes;
  classes.reserve(labels.size());
  for (const corpus::FrameLabel l : labels) {
    switch (l) {
      case corpus::FrameLabel::ts: classes.push_back(train::kClassTs); break;
      case corpus::FrameLabel::nts: classes.push_back(train::kClassNts); break;
      case corpus::FrameLabel::ns: classes.push_back(train::kClassNs); break;
    }
  }
  return classes;
}

inline std::vector<int> vad_classes(const std::vector<corpus::FrameLabel>& labels) {
  std::vector<int> classes;
  classes.reserve(labels.size());
  for (const corpus::FrameLabel l : labels)
    classes.push_back(l == corpus::FrameLabel::ns ? train::kVadClassNs : train::kVadClassSpeech);
  return classes;
}

// Classifier classes for encoder training: every non-test speaker, in id order.
inline std::map<std::string, int> encoder_class_map(const corpus::CorpusManifest& m) {
  std::vector<std::string> ids;
  for (const corpus::SyntheticSpeaker& s : m.roster)
    if (s.split != corpus::Split::test) ids.push_back(s.speaker_id);
  std::sort(ids.begin(), ids.end());
  if (ids.size() < 2)
    throw DataError("encoder_class_map: need at least 2 non-test speakers, got " +
                    std::to_string(ids.size()));
  std::map<std::string, int> map;
  for (std::size_t k = 0; k < ids.size(); ++k) map[ids[k]] = static_cast<int>(k);
  return map;
}

// Single-speaker slices of one utterance: frames whose centers fall inside a
// segment span. Long spans are truncated, very short ones skipped, spans of
// test-split speakers dropped.
inline std::vector<train::TrainUtterance> encoder_slices(const dsp::LogMelFrames& feats,
                                                         const corpus::UtteranceRecord& rec,
                                                         const std::map<std::string, int>& classes) {
  std::vector<train::TrainUtterance> out;
  for (const corpus::SegmentSpan& span : rec.segments) {
    const auto it = classes.find(span.speaker_id);
    if (it == classes.end()) continue;
    int first = -1;
    int last = -1;
    for (int i = 0; i < feats.num_frames(); ++i) {
      const std::int64_t center =
          static_cast<std::int64_t>(i) * dsp::kHopSamples + dsp::kFrameLenSamples / 2;
      if (center >= span.start_sample && center < span.end_sample) {
        if (first < 0) first = i;
        last = i;
      }
    }
    if (first < 0 || last - first + 1 < kMinEncoderSliceFrames) continue;
    const int len = std::min(last - first + 1, kMaxEncoderSliceFrames);
    train::TrainUtterance u;
    u.features = feats.frames.middleRows(first, len);
    u.speaker_class = it->second;
    out.push_back(std::move(u));
  }
  return out;
}

struct SplitData {
  std::vector<train::TrainUtterance> train;
  std::vector<train::TrainUtterance> val;
};

inline SplitData build_vad_data(FeatureCache& cache, const corpus::CorpusManifest& m) {
  SplitData data;
  for (const corpus::Split split : {corpus::Split::train, corpus::Split::val}) {
    auto& dst = split == corpus::Split::train ? data.train : data.val;
    for (const corpus::UtteranceRecord* rec : m.utterances_in(split)) {
      train::TrainUtterance u;
      u.features = cache.get(*rec).frames;
      u.classes = vad_classes(rec->frame_labels);
      dst.push_back(std::move(u));
    }
  }
  return data;
}

inline SplitData build_encoder_data(FeatureCache& cache, const corpus::CorpusManifest& m) {
  const std::map<std::string, int> classes = encoder_class_map(m);
  SplitData data;
  for (const corpus::Split split : {corpus::Split::train, corpus::Split::val}) {
    auto& dst = split == corpus::Split::train ? data.train : data.val;
    for (const corpus::UtteranceRecord* rec : m.utterances_in(split)) {
      auto slices = encoder_slices(cache.get(*rec), *rec, classes);
      std::move(slices.begin(), slices.end(), std::back_inserter(dst));
    }
  }
  if (data.train.empty()) throw DataError("build_encoder_data: no usable segment slices");
  return data;
}

inline Eigen::VectorXd enrollment_for(const corpus::UtteranceRecord& rec,
                                      const std::map<std::string, Eigen::VectorXd>& table) {
  if (rec.zero_enrolled) return Eigen::VectorXd::Zero(speaker::kEmbeddingDim);
  const auto it = table.find(rec.target_speaker_id);
  if (it == table.end())
    throw DataError("no enrollment embedding for speaker '" + rec.target_speaker_id + "'");
  return it->second;
}

inline SplitData build_variant_data(FeatureCache& cache, const corpus::CorpusManifest& m,
                                    const std::map<std::string, Eigen::VectorXd>& table) {
  SplitData data;
  for (const corpus::Split split : {corpus::Split::train, corpus::Split::val}) {
    auto& dst = split == corpus::Split::train ? data.train : data.val;
    for (const corpus::UtteranceRecord* rec : m.utterances_in(split)) {
      train::TrainUtterance u;
      u.features = cache.get(*rec).frames;
      u.classes = pvad_classes(rec->frame_labels);
      u.enrollment = enrollment_for(*rec, table);
      dst.push_back(std::move(u));
    }
  }
  return data;
}

inline SplitData build_training_data(train::SystemKind system, FeatureCache& cache,
                                     const corpus::CorpusManifest& m,
                                     const std::map<std::string, Eigen::VectorXd>& table) {
  switch (system) {
    case train::SystemKind::VAD: return build_vad_data(cache, m);
    case train::SystemKind::SPEAKER_ENCODER: return build_encoder_data(cache, m);
    case train::SystemKind::EF:
    case train::SystemKind::LF:
    case train::SystemKind::CLF:
    case train::SystemKind::DCLF: return build_variant_data(cache, m, table);
    case train::SystemKind::DSC: break;
  }
  throw UsageError("build_training_data: DSC is assembled, not trained on utterances");
}

// Embeds every speaker's enrollment segments with the given encoder weights.
inline std::map<std::string, Eigen::VectorXd> compute_enrollment_table(
    nn::ParameterSet& encoder, const speaker::EncoderDims& d, const corpus::CorpusManifest& m,
    const std::string& corpus_dir) {
  namespace fs = std::filesystem;
  std::map<std::string, Eigen::VectorXd> table;
  for (const auto& [speaker_id, rel_paths] : m.enrollment_wavs) {
    std::vector<dsp::PcmSignal> segments;
    segments.reserve(rel_paths.size());
    for (const std::string& rel : rel_paths)
      segments.push_back(wav::load_wav((fs::path(corpus_dir) / rel).string()));
    table[speaker_id] = speaker::enrollment_embedding(encoder, d, segments).values;
  }
  return table;
}

// Runs one checkpoint over a split and collects per-frame scores. A VAD
// checkpoint scores p(speech) in both score slots; PVAD variants score
// p_ts and p_ts + p_nts.
inline std::vector<metrics::ScoredUtterance> score_utterances(
    const train::Checkpoint& ckpt, const corpus::CorpusManifest& m, FeatureCache& cache,
    const std::map<std::string, Eigen::VectorXd>& table, corpus::Split split) {
  std::vector<metrics::ScoredUtterance> scored;
  const std::vector<const corpus::UtteranceRecord*> records = m.utterances_in(split);
  if (records.empty())
    throw DataError(std::string("score_utterances: no utterances in split '") + corpus::split_name(split) + "'");

  const auto base = [](const corpus::UtteranceRecord& rec) {
    metrics::ScoredUtterance s;
    s.id = rec.id;
    s.user_id = rec.target_speaker_id;
    s.zero_enrolled = rec.zero_enrolled;
    s.impostor = rec.impostor;
    s.labels = rec.frame_labels;
    return s;
  };

  if (ckpt.system == train::SystemKind::VAD) {
    const train::CheckpointSpec spec = train::spec_for(ckpt.system, ckpt.dims);
    nn::ParameterSet params = ckpt.params;
    for (const corpus::UtteranceRecord* rec : records) {
      metrics::ScoredUtterance s = base(*rec);
      const auto post = models::forward_vad(params, spec.model_dims, cache.get(*rec).frames);
      s.pvad_scores.reserve(post.size());
      s.vad_scores.reserve(post.size());
      for (const auto& p : post) {
        s.pvad_scores.push_back(p[0]);
        s.vad_scores.push_back(p[0]);
      }
      scored.push_back(std::move(s));
    }
    return scored;
  }

  models::PvadModel model = train::checkpoint_to_model(ckpt);
  for (const corpus::UtteranceRecord* rec : records) {
    metrics::ScoredUtterance s = base(*rec);
    speaker::SpeakerEmbedding emb = speaker::SpeakerEmbedding::zero();
    if (!rec->zero_enrolled) {
      emb.values = enrollment_for(*rec, table);
      emb.normalized = true;
    }
    const auto post = models::forward_model(model, cache.get(*rec).frames, emb);
    s.pvad_scores = metrics::frame_scores_pvad(post);
    s.vad_scores = metrics::frame_scores_vad(post);
    scored.push_back(std::move(s));
  }
  return scored;
}

struct EvalRequest {
  corpus::Split split = corpus::Split::test;
  std::vector<double> durations_ms = {200.0, 500.0, 1000.0, 2000.0, 5000.0};
  std::string variant_name;  // defaults to the checkpoint's system name
  std::string toolkit_version;
  std::string checkpoint_hash;
};

inline metrics::MetricsReport evaluate_checkpoint(
    const train::Checkpoint& ckpt, const corpus::CorpusManifest& m, FeatureCache& cache,
    const std::map<std::string, Eigen::VectorXd>& table, const EvalRequest& req) {
  const auto scored = score_utterances(ckpt, m, cache, table, req.split);
  metrics::EvalOptions opt;
  opt.durations_ms = req.durations_ms;
  opt.vad_only = ckpt.system == train::SystemKind::VAD;
  metrics::MetricsReport report = metrics::evaluate_scored(scored, opt);
  report.variant = req.variant_name.empty() ? train::system_name(ckpt.system) : req.variant_name;
  report.toolkit_version = req.toolkit_version;
  report.corpus_seed = m.seed;
  report.checkpoint_hash = req.checkpoint_hash;
  return report;
}

}  // namespace pvad::pipeline
