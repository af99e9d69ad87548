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

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "pvad/autodiff.hpp"
#include "pvad/error.hpp"
#include "pvad/init.hpp"
#include "pvad/speaker.hpp"
#include "pvad/tensor.hpp"

namespace pvad::models {

using nn::Mat;

enum class VariantKind { DSC, EF, LF, CLF, DCLF };

inline const char* variant_name(VariantKind v) {
  switch (v) {
    case VariantKind::DSC: return "DSC";
    case VariantKind::EF: return "EF";
    case VariantKind::LF: return "LF";
    case VariantKind::CLF: return "CLF";
    case VariantKind::DCLF: return "DCLF";
  }
  throw UsageError("variant_name: unknown variant");
}

inline VariantKind variant_from_name(const std::string& name) {
  for (VariantKind v : {VariantKind::DSC, VariantKind::EF, VariantKind::LF, VariantKind::CLF,
                        VariantKind::DCLF})
    if (name == variant_name(v)) return v;
  throw UsageError("unknown variant: " + name);
}

struct ModelDims {
  int input = 40;
  int enroll = 256;
  int hidden = 64;  // both trunk LSTM layers
  int fcn = 64;
  int classes = 3;
  int dyn_hidden = 256;  // DCLF per-frame speaker LSTM
};

// Per-frame class posterior over {ts, nts, ns}.
struct FramePosterior {
  double p_ts = 0.0;
  double p_nts = 0.0;
  double p_ns = 0.0;
};

struct PvadModel {
  VariantKind variant;
  ModelDims dims;
  nn::ParameterSet params;
};

namespace detail {

inline void add_lstm_params(nn::ParameterSet& ps, const std::string& base, int in, int hidden) {
  ps.add(base + ".w_ih",
         nn::Tensor({static_cast<std::size_t>(4 * hidden), static_cast<std::size_t>(in)}));
  ps.add(base + ".w_hh",
         nn::Tensor({static_cast<std::size_t>(4 * hidden), static_cast<std::size_t>(hidden)}));
  ps.add(base + ".b", nn::Tensor({static_cast<std::size_t>(4 * hidden)}));
}

inline void add_affine_params(nn::ParameterSet& ps, const std::string& base, int in, int out) {
  ps.add(base + ".w",
         nn::Tensor({static_cast<std::size_t>(out), static_cast<std::size_t>(in)}));
  ps.add(base + ".b", nn::Tensor({static_cast<std::size_t>(out)}));
}

inline int lstm1_input(const ModelDims& d, VariantKind v) {
  return v == VariantKind::EF ? d.input + d.enroll : d.input;
}

inline int fcn1_input(const ModelDims& d, VariantKind v) {
  return v == VariantKind::LF ? d.hidden + d.enroll : d.hidden;
}

inline nn::Graph::Id lstm_layer(nn::Graph& g, nn::ParameterSet& ps, const std::string& base,
                                nn::Graph::Id x) {
  return g.lstm(x, g.param(ps, base + ".w_ih"), g.param(ps, base + ".w_hh"),
                g.param(ps, base + ".b"));
}

inline nn::Graph::Id affine_layer(nn::Graph& g, nn::ParameterSet& ps, const std::string& base,
                                  nn::Graph::Id x) {
  return g.affine(x, g.param(ps, base + ".w"), g.param(ps, base + ".b"));
}

// FiLM starts as the identity map: the gamma half of the generator bias is
// one, so the trunk passes through unmodulated until training moves it. A
// near-zero gamma at init gates the LSTM output off and can strand training.
inline void film_identity_init(nn::ParameterSet& ps) {
  for (std::size_t i = 0; i < ps.count(); ++i) {
    const std::string& name = ps.name(static_cast<int>(i));
    if (name.size() < 6 || name.compare(name.size() - 6, 6, "film.b") != 0) continue;
    nn::Tensor& b = ps.value(static_cast<int>(i));
    for (std::size_t k = 0; k < b.size() / 2; ++k) b.data()[k] = 1.0;
  }
}

}  // namespace detail

// Registers every parameter of the requested PVAD/VAD trunk under the
// given prefix, in the fixed (checkpoint) order.
inline void add_variant_params(nn::ParameterSet& ps, const ModelDims& d, VariantKind v,
                               const std::string& prefix = "") {
  if (v == VariantKind::DCLF && d.dyn_hidden != d.enroll)
    throw ConfigError("add_variant_params: dynamic embedding dim must equal enrollment dim");
  detail::add_lstm_params(ps, prefix + "lstm1", detail::lstm1_input(d, v), d.hidden);
  detail::add_lstm_params(ps, prefix + "lstm2", d.hidden, d.hidden);
  if (v == VariantKind::CLF || v == VariantKind::DCLF) {
    const int gen_in = v == VariantKind::DCLF ? d.enroll + 1 : d.enroll;
    detail::add_affine_params(ps, prefix + "film", gen_in, 2 * d.hidden);
  }
  if (v == VariantKind::DCLF)
    detail::add_lstm_params(ps, prefix + "dyn", d.input, d.dyn_hidden);
  detail::add_affine_params(ps, prefix + "fcn1", detail::fcn1_input(d, v), d.fcn);
  detail::add_affine_params(ps, prefix + "fcn2", d.fcn, d.fcn);
  detail::add_affine_params(ps, prefix + "head", d.fcn, d.classes);
}

inline void add_vad_params(nn::ParameterSet& ps, const ModelDims& d,
                           const std::string& prefix = "") {
  detail::add_lstm_params(ps, prefix + "lstm1", d.input, d.hidden);
  detail::add_lstm_params(ps, prefix + "lstm2", d.hidden, d.hidden);
  detail::add_affine_params(ps, prefix + "fcn1", d.hidden, d.fcn);
  detail::add_affine_params(ps, prefix + "fcn2", d.fcn, d.fcn);
  detail::add_affine_params(ps, prefix + "head", d.fcn, 2);
}

// Seeded construction; DSC bundles its separately trained VAD ("vad.")
// and stand-in d-vector encoder ("spk.") in one parameter set.
inline PvadModel build_model(VariantKind v, uint64_t seed, const ModelDims& dims = {}) {
  PvadModel m;
  m.variant = v;
  m.dims = dims;
  if (v == VariantKind::DSC) {
    add_vad_params(m.params, dims, "vad.");
    speaker::EncoderDims ed;
    ed.input = dims.input;
    speaker::add_encoder_params(m.params, ed, "spk.");
  } else {
    add_variant_params(m.params, dims, v);
  }
  nn::init_uniform_fan_in(m.params, Rng(seed));
  detail::film_identity_init(m.params);
  return m;
}

inline std::size_t parameter_count(const PvadModel& m) { return m.params.parameter_count(); }

// Logits graph for the end-to-end variants (EF/LF/CLF/DCLF).  Every op
// is causal, so posteriors for a prefix of frames are bit-identical to
// the prefix of the full-sequence posteriors.
inline nn::Graph::Id pvad_logits(nn::Graph& g, nn::ParameterSet& ps, const ModelDims& d,
                                 VariantKind v, const Mat& feats,
                                 const speaker::SpeakerEmbedding& enroll,
                                 const std::string& prefix = "") {
  if (v == VariantKind::DSC) throw UsageError("pvad_logits: DSC has no end-to-end graph");
  if (feats.rows() < 1) throw DataError("pvad_logits: empty features");
  if (feats.cols() != d.input) throw ShapeError("pvad_logits: feature dim mismatch");
  if (enroll.values.size() != d.enroll) throw ShapeError("pvad_logits: enrollment dim mismatch");
  const auto T = feats.rows();

  nn::Graph::Id x = g.input(feats);
  const nn::Graph::Id e_row = g.input_row(enroll.values);

  if (v == VariantKind::EF) x = g.concat_cols(x, g.broadcast_rows(e_row, T));
  nn::Graph::Id h = detail::lstm_layer(g, ps, prefix + "lstm1", x);
  h = detail::lstm_layer(g, ps, prefix + "lstm2", h);

  nn::Graph::Id z = h;
  if (v == VariantKind::LF) {
    z = g.concat_cols(h, g.broadcast_rows(e_row, T));
  } else if (v == VariantKind::CLF || v == VariantKind::DCLF) {
    nn::Graph::Id gen_in;
    if (v == VariantKind::CLF) {
      gen_in = g.broadcast_rows(e_row, T);
    } else {
      // Per-frame dynamic embedding from the single-layer LSTM; its
      // cosine against the static enrollment joins the generator input.
      // Zero-sentinel enrollment fixes the cosine at 1.0 so the model
      // treats all speech as target speech.
      nn::Graph::Id cos;
      if (enroll.is_zero()) {
        cos = g.constant(T, 1, 1.0);
      } else {
        const nn::Graph::Id dyn = detail::lstm_layer(g, ps, prefix + "dyn", g.input(feats));
        cos = g.cosine_vs_row(dyn, e_row);
      }
      gen_in = g.concat_cols(g.broadcast_rows(e_row, T), cos);
    }
    const nn::Graph::Id gb = detail::affine_layer(g, ps, prefix + "film", gen_in);
    const nn::Graph::Id gamma = g.slice_cols(gb, 0, d.hidden);
    const nn::Graph::Id beta = g.slice_cols(gb, d.hidden, d.hidden);
    z = g.film(h, gamma, beta);
  }

  nn::Graph::Id f = g.tanh_op(detail::affine_layer(g, ps, prefix + "fcn1", z));
  f = g.tanh_op(detail::affine_layer(g, ps, prefix + "fcn2", f));
  return detail::affine_layer(g, ps, prefix + "head", f);
}

inline nn::Graph::Id vad_logits(nn::Graph& g, nn::ParameterSet& ps, const ModelDims& d,
                                const Mat& feats, const std::string& prefix = "") {
  if (feats.rows() < 1) throw DataError("vad_logits: empty features");
  if (feats.cols() != d.input) throw ShapeError("vad_logits: feature dim mismatch");
  nn::Graph::Id h = detail::lstm_layer(g, ps, prefix + "lstm1", g.input(feats));
  h = detail::lstm_layer(g, ps, prefix + "lstm2", h);
  nn::Graph::Id f = g.tanh_op(detail::affine_layer(g, ps, prefix + "fcn1", h));
  f = g.tanh_op(detail::affine_layer(g, ps, prefix + "fcn2", f));
  return detail::affine_layer(g, ps, prefix + "head", f);
}

inline std::vector<FramePosterior> forward_pvad(PvadModel& m, const Mat& feats,
                                                const speaker::SpeakerEmbedding& enroll) {
  if (m.variant == VariantKind::DSC)
    throw UsageError("forward_pvad: use forward_dsc for the cascade");
  nn::Graph g;
  const auto logits = pvad_logits(g, m.params, m.dims, m.variant, feats, enroll);
  const Mat p = g.softmax_rows(logits);
  std::vector<FramePosterior> out(static_cast<std::size_t>(p.rows()));
  for (Eigen::Index t = 0; t < p.rows(); ++t)
    out[static_cast<std::size_t>(t)] = {p(t, 0), p(t, 1), p(t, 2)};
  return out;
}

// (p_s, p_ns) rows.
inline std::vector<std::array<double, 2>> forward_vad(nn::ParameterSet& vad, const ModelDims& d,
                                                      const Mat& feats,
                                                      const std::string& prefix = "") {
  nn::Graph g;
  const auto logits = vad_logits(g, vad, d, feats, prefix);
  const Mat p = g.softmax_rows(logits);
  std::vector<std::array<double, 2>> out(static_cast<std::size_t>(p.rows()));
  for (Eigen::Index t = 0; t < p.rows(); ++t)
    out[static_cast<std::size_t>(t)] = {p(t, 0), p(t, 1)};
  return out;
}

// Score-combination rule: s = (cos+1)/2 splits the VAD's speech mass
// between ts and nts; preserves p_ns and p_ts + p_nts = p_s.
inline FramePosterior dsc_combine(const std::array<double, 2>& vad, double cos) {
  const double s = (cos + 1.0) / 2.0;
  return {vad[0] * s, vad[0] * (1.0 - s), vad[1]};
}

// No-enrollment rule: every speaker counts as the target.
inline FramePosterior dsc_combine(const std::array<double, 2>& vad) {
  return {vad[0], 0.0, vad[1]};
}

inline std::vector<FramePosterior> forward_dsc(PvadModel& m, const Mat& feats,
                                               const speaker::SpeakerEmbedding& enroll) {
  if (m.variant != VariantKind::DSC) throw UsageError("forward_dsc: model is not DSC");
  const auto vad = forward_vad(m.params, m.dims, feats, "vad.");
  std::vector<FramePosterior> out(vad.size());
  if (enroll.is_zero()) {
    for (std::size_t t = 0; t < vad.size(); ++t) out[t] = dsc_combine(vad[t]);
    return out;
  }
  if (enroll.values.size() != speaker::kEmbeddingDim)
    throw ShapeError("forward_dsc: enrollment dim mismatch");

  // Causal verification: running mean pool of encoder states up to each
  // frame, cosine against the enrollment embedding. The bundled encoder
  // fixes its own depth.
  speaker::EncoderDims ed;
  ed.input = m.dims.input;
  ed.layers = 0;
  while (m.params.has("spk.enc" + std::to_string(ed.layers + 1) + ".w_ih")) ++ed.layers;
  if (ed.layers == 0) throw ShapeError("forward_dsc: no encoder weights under 'spk.'");
  nn::Graph g;
  const auto states = speaker::encoder_states(g, m.params, ed, feats, "spk.");
  const auto pooled = g.running_mean_rows(states);
  const auto cos = g.cosine_vs_row(pooled, g.input_row(enroll.values));
  for (std::size_t t = 0; t < vad.size(); ++t)
    out[t] = dsc_combine(vad[t], g.val(cos)(static_cast<Eigen::Index>(t), 0));
  return out;
}

inline std::vector<FramePosterior> forward_model(PvadModel& m, const Mat& feats,
                                                 const speaker::SpeakerEmbedding& enroll) {
  return m.variant == VariantKind::DSC ? forward_dsc(m, feats, enroll)
                                       : forward_pvad(m, feats, enroll);
}

}  // namespace pvad::models
