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

#include <string>
#include <vector>

#include "pvad/autodiff.hpp"
#include "pvad/dsp.hpp"
#include "pvad/error.hpp"
#include "pvad/init.hpp"
#include "pvad/rng.hpp"
#include "pvad/tensor.hpp"

namespace pvad::speaker {

using nn::Mat;

constexpr int kEmbeddingDim = 256;

// d-vector style speaker embedding.  The exact all-zeros vector is the
// reserved "no enrollment" sentinel and is the one embedding allowed to
// break the unit-norm invariant.
struct SpeakerEmbedding {
  Eigen::VectorXd values;
  bool normalized = false;

  static SpeakerEmbedding zero() {
    SpeakerEmbedding e;
    e.values = Eigen::VectorXd::Zero(kEmbeddingDim);
    return e;
  }

  bool is_zero() const {
    for (Eigen::Index i = 0; i < values.size(); ++i)
      if (values(i) != 0.0) return false;
    return true;
  }
};

struct EncoderDims {
  int input = 40;
  int hidden = 256;
  int layers = 3;
};

// Registers the stacked-LSTM encoder weights under prefix "enc<k>.".
inline void add_encoder_params(nn::ParameterSet& ps, const EncoderDims& d,
                               const std::string& prefix = "") {
  int in = d.input;
  for (int layer = 1; layer <= d.layers; ++layer) {
    const std::string base = prefix + "enc" + std::to_string(layer) + ".";
    ps.add(base + "w_ih", nn::Tensor({static_cast<std::size_t>(4 * d.hidden),
                                      static_cast<std::size_t>(in)}));
    ps.add(base + "w_hh", nn::Tensor({static_cast<std::size_t>(4 * d.hidden),
                                      static_cast<std::size_t>(d.hidden)}));
    ps.add(base + "b", nn::Tensor({static_cast<std::size_t>(4 * d.hidden)}));
    in = d.hidden;
  }
}

inline nn::ParameterSet build_encoder(uint64_t seed, const EncoderDims& d = {}) {
  nn::ParameterSet ps;
  add_encoder_params(ps, d);
  nn::init_uniform_fan_in(ps, Rng(seed));
  return ps;
}

// Final-layer hidden states [T x hidden]; the causal substrate both for
// pooled embeddings and for DSC's per-frame verification.
inline nn::Graph::Id encoder_states(nn::Graph& g, nn::ParameterSet& ps, const EncoderDims& d,
                                    const Mat& feats, const std::string& prefix = "") {
  if (feats.rows() < 1) throw DataError("encoder_states: empty features");
  if (feats.cols() != d.input) throw ShapeError("encoder_states: feature dim mismatch");
  nn::Graph::Id h = g.input(feats);
  for (int layer = 1; layer <= d.layers; ++layer) {
    const std::string base = prefix + "enc" + std::to_string(layer) + ".";
    h = g.lstm(h, g.param(ps, base + "w_ih"), g.param(ps, base + "w_hh"), g.param(ps, base + "b"));
  }
  return h;
}

inline SpeakerEmbedding normalized(const SpeakerEmbedding& e) {
  const double n = e.values.norm();
  if (n < 1e-12) throw NumericError("normalize: zero-norm embedding");
  SpeakerEmbedding out;
  out.values = e.values / n;
  out.normalized = true;
  return out;
}

// Plain element-wise mean, not re-normalized; exposed for tests of the
// averaging arithmetic.
inline SpeakerEmbedding mean_embedding(const std::vector<SpeakerEmbedding>& parts) {
  if (parts.empty()) throw DataError("mean_embedding: no embeddings");
  SpeakerEmbedding out;
  out.values = Eigen::VectorXd::Zero(parts[0].values.size());
  for (const auto& p : parts) {
    if (p.values.size() != out.values.size()) throw ShapeError("mean_embedding: dim mismatch");
    out.values += p.values;
  }
  out.values /= static_cast<double>(parts.size());
  return out;
}

inline SpeakerEmbedding speaker_encoder_embed(nn::ParameterSet& encoder, const EncoderDims& d,
                                              const dsp::LogMelFrames& feats,
                                              const std::string& prefix = "") {
  if (feats.num_frames() < 1) throw DataError("speaker_encoder_embed: empty features");
  nn::Graph g;
  const auto h = encoder_states(g, encoder, d, feats.frames, prefix);
  const auto pooled = g.mean_rows(h);
  SpeakerEmbedding raw;
  raw.values = g.val(pooled).row(0).transpose();
  return normalized(raw);
}

// Enrollment per the 3-5 segment protocol: embed each clean segment,
// average, re-normalize.
inline SpeakerEmbedding enrollment_embedding(nn::ParameterSet& encoder, const EncoderDims& d,
                                             const std::vector<dsp::PcmSignal>& segments) {
  if (segments.size() < 3 || segments.size() > 5)
    throw DataError("enrollment_embedding: need 3 to 5 segments, got " +
                    std::to_string(segments.size()));
  std::vector<SpeakerEmbedding> parts;
  parts.reserve(segments.size());
  for (const auto& seg : segments)
    parts.push_back(speaker_encoder_embed(encoder, d, dsp::log_mel_features(seg)));
  return normalized(mean_embedding(parts));
}

inline double cosine_similarity(const SpeakerEmbedding& a, const SpeakerEmbedding& b) {
  if (a.values.size() != b.values.size()) throw ShapeError("cosine_similarity: dim mismatch");
  const double na = a.values.norm();
  const double nb = b.values.norm();
  if (na < 1e-12 || nb < 1e-12)
    throw UsageError("cosine_similarity: zero embedding; callers must branch on the sentinel");
  return a.values.dot(b.values) / (na * nb);
}

}  // namespace pvad::speaker
