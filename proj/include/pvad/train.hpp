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
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "pvad/adam.hpp"
#include "pvad/autodiff.hpp"
#include "pvad/error.hpp"
#include "pvad/init.hpp"
#include "pvad/models.hpp"
#include "pvad/rng.hpp"
#include "pvad/speaker.hpp"
#include "pvad/tensor.hpp"
#include "pvad/version.hpp"

namespace pvad::train {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

// ---------------------------------------------------------------------------
// Systems
// ---------------------------------------------------------------------------

enum class SystemKind : std::uint32_t {
  VAD = 0,
  SPEAKER_ENCODER = 1,
  EF = 2,
  LF = 3,
  CLF = 4,
  DCLF = 5,
  DSC = 6,
};

inline const char* system_name(SystemKind k) {
  switch (k) {
    case SystemKind::VAD: return "vad";
    case SystemKind::SPEAKER_ENCODER: return "encoder";
    case SystemKind::EF: return "ef";
    case SystemKind::LF: return "lf";
    case SystemKind::CLF: return "clf";
    case SystemKind::DCLF: return "dclf";
    case SystemKind::DSC: return "dsc";
  }
  throw UsageError("system_name: unknown system");
}

inline SystemKind system_from_name(const std::string& name) {
  std::string lower = name;
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  for (SystemKind k :
       {SystemKind::VAD, SystemKind::SPEAKER_ENCODER, SystemKind::EF, SystemKind::LF,
        SystemKind::CLF, SystemKind::DCLF, SystemKind::DSC})
    if (lower == system_name(k)) return k;
  throw UsageError("unknown system: '" + name +
                   "' (expected vad, encoder, dsc, ef, lf, clf, or dclf)");
}

inline bool is_pvad_system(SystemKind k) {
  return k == SystemKind::EF || k == SystemKind::LF || k == SystemKind::CLF ||
         k == SystemKind::DCLF || k == SystemKind::DSC;
}

inline models::VariantKind to_variant(SystemKind k) {
  switch (k) {
    case SystemKind::EF: return models::VariantKind::EF;
    case SystemKind::LF: return models::VariantKind::LF;
    case SystemKind::CLF: return models::VariantKind::CLF;
    case SystemKind::DCLF: return models::VariantKind::DCLF;
    case SystemKind::DSC: return models::VariantKind::DSC;
    default: throw UsageError("to_variant: not a PVAD system");
  }
}

inline SystemKind from_variant(models::VariantKind v) {
  switch (v) {
    case models::VariantKind::EF: return SystemKind::EF;
    case models::VariantKind::LF: return SystemKind::LF;
    case models::VariantKind::CLF: return SystemKind::CLF;
    case models::VariantKind::DCLF: return SystemKind::DCLF;
    case models::VariantKind::DSC: return SystemKind::DSC;
  }
  throw UsageError("from_variant: unknown variant");
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

inline constexpr char kCheckpointMagic[8] = {'P', 'V', 'A', 'D', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  SystemKind system = SystemKind::VAD;
  std::array<std::uint32_t, 8> dims{};
  std::uint64_t seed = 0;
  double final_train_loss = std::numeric_limits<double>::quiet_NaN();
  double final_val_loss = std::numeric_limits<double>::quiet_NaN();
  nn::ParameterSet params;
};

// Dims-record layout per system; unused slots must stay zero.
//   vad:      input, hidden, fcn
//   encoder:  input, hidden, layers
//   ef..dclf: input, enroll, hidden, fcn, classes, dyn_hidden (DCLF only)
//   dsc:      input, enroll, vad hidden, vad fcn, encoder hidden, encoder layers
inline std::array<std::uint32_t, 8> dims_record(SystemKind k, const models::ModelDims& md,
                                                const speaker::EncoderDims& ed) {
  std::array<std::uint32_t, 8> d{};
  auto u = [](int v) { return static_cast<std::uint32_t>(v); };
  switch (k) {
    case SystemKind::VAD:
      d = {u(md.input), u(md.hidden), u(md.fcn), 0, 0, 0, 0, 0};
      break;
    case SystemKind::SPEAKER_ENCODER:
      d = {u(ed.input), u(ed.hidden), u(ed.layers), 0, 0, 0, 0, 0};
      break;
    case SystemKind::EF:
    case SystemKind::LF:
    case SystemKind::CLF:
    case SystemKind::DCLF:
      d = {u(md.input),
           u(md.enroll),
           u(md.hidden),
           u(md.fcn),
           u(md.classes),
           k == SystemKind::DCLF ? u(md.dyn_hidden) : 0,
           0,
           0};
      break;
    case SystemKind::DSC:
      d = {u(md.input), u(md.enroll), u(md.hidden), u(md.fcn), u(ed.hidden), u(ed.layers),
           0, 0};
      break;
  }
  return d;
}

struct CheckpointSpec {
  models::ModelDims model_dims;
  speaker::EncoderDims encoder_dims;
  nn::ParameterSet params;  // expected names and shapes, zero-valued
};

namespace detail {

inline void require_dims(const std::array<std::uint32_t, 8>& d, int used) {
  for (int i = 0; i < used; ++i)
    if (d[static_cast<std::size_t>(i)] == 0)
      throw DataError("checkpoint dims: slot " + std::to_string(i) + " must be nonzero");
  for (int i = used; i < 8; ++i)
    if (d[static_cast<std::size_t>(i)] != 0)
      throw DataError("checkpoint dims: unused slot " + std::to_string(i) + " must be zero");
}

}  // namespace detail

// Reconstructs the expected parameter layout for a (system, dims) pair.
inline CheckpointSpec spec_for(SystemKind k, const std::array<std::uint32_t, 8>& d) {
  CheckpointSpec spec;
  auto i = [&d](int slot) { return static_cast<int>(d[static_cast<std::size_t>(slot)]); };
  try {
    switch (k) {
      case SystemKind::VAD:
        detail::require_dims(d, 3);
        spec.model_dims.input = i(0);
        spec.model_dims.hidden = i(1);
        spec.model_dims.fcn = i(2);
        models::add_vad_params(spec.params, spec.model_dims);
        break;
      case SystemKind::SPEAKER_ENCODER:
        detail::require_dims(d, 3);
        spec.encoder_dims.input = i(0);
        spec.encoder_dims.hidden = i(1);
        spec.encoder_dims.layers = i(2);
        speaker::add_encoder_params(spec.params, spec.encoder_dims);
        break;
      case SystemKind::EF:
      case SystemKind::LF:
      case SystemKind::CLF:
        detail::require_dims(d, 5);
        spec.model_dims.input = i(0);
        spec.model_dims.enroll = i(1);
        spec.model_dims.hidden = i(2);
        spec.model_dims.fcn = i(3);
        spec.model_dims.classes = i(4);
        if (spec.model_dims.classes != 3)
          throw DataError("checkpoint dims: PVAD head must have 3 classes, got " +
                          std::to_string(spec.model_dims.classes));
        models::add_variant_params(spec.params, spec.model_dims, to_variant(k));
        break;
      case SystemKind::DCLF:
        detail::require_dims(d, 6);
        spec.model_dims.input = i(0);
        spec.model_dims.enroll = i(1);
        spec.model_dims.hidden = i(2);
        spec.model_dims.fcn = i(3);
        spec.model_dims.classes = i(4);
        spec.model_dims.dyn_hidden = i(5);
        if (spec.model_dims.classes != 3)
          throw DataError("checkpoint dims: PVAD head must have 3 classes, got " +
                          std::to_string(spec.model_dims.classes));
        models::add_variant_params(spec.params, spec.model_dims, models::VariantKind::DCLF);
        break;
      case SystemKind::DSC:
        detail::require_dims(d, 6);
        spec.model_dims.input = i(0);
        spec.model_dims.enroll = i(1);
        spec.model_dims.hidden = i(2);
        spec.model_dims.fcn = i(3);
        spec.encoder_dims.input = i(0);
        spec.encoder_dims.hidden = i(4);
        spec.encoder_dims.layers = i(5);
        if (i(1) != i(4))
          throw DataError(
              "checkpoint dims: enrollment dim must equal the encoder hidden dim");
        models::add_vad_params(spec.params, spec.model_dims, "vad.");
        speaker::add_encoder_params(spec.params, spec.encoder_dims, "spk.");
        break;
    }
  } catch (const ConfigError& e) {
    throw DataError(std::string("checkpoint dims: ") + e.what());
  }
  return spec;
}

namespace detail {

inline void write_bytes(std::ostream& out, const void* p, std::size_t n) {
  out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

template <typename T>
inline void write_pod(std::ostream& out, T v) {
  write_bytes(out, &v, sizeof(T));
}

inline void read_bytes(std::istream& in, void* p, std::size_t n, const char* field) {
  in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n)
    throw DataError(std::string("checkpoint truncated while reading ") + field);
}

template <typename T>
inline T read_pod(std::istream& in, const char* field) {
  T v{};
  read_bytes(in, &v, sizeof(T), field);
  return v;
}

inline std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace detail

inline void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("save_checkpoint: cannot open '" + path + "' for writing");
  detail::write_bytes(out, kCheckpointMagic, sizeof(kCheckpointMagic));
  detail::write_pod(out, kCheckpointVersion);
  detail::write_pod(out, static_cast<std::uint32_t>(ckpt.system));
  for (const std::uint32_t d : ckpt.dims) detail::write_pod(out, d);
  detail::write_pod(out, ckpt.seed);
  detail::write_pod(out, ckpt.final_train_loss);
  detail::write_pod(out, ckpt.final_val_loss);
  detail::write_pod(out, static_cast<std::uint32_t>(ckpt.params.count()));
  for (int p = 0; p < static_cast<int>(ckpt.params.count()); ++p) {
    const std::string& name = ckpt.params.name(p);
    const nn::Tensor& value = ckpt.params.value(p);
    detail::write_pod(out, static_cast<std::uint16_t>(name.size()));
    detail::write_bytes(out, name.data(), name.size());
    detail::write_pod(out, static_cast<std::uint8_t>(value.rank()));
    for (const std::size_t d : value.shape())
      detail::write_pod(out, static_cast<std::uint64_t>(d));
    for (std::size_t k = 0; k < value.size(); ++k)
      detail::write_pod(out, static_cast<float>(value.data()[k]));
  }
  if (!out) throw DataError("save_checkpoint: write failed for '" + path + "'");
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("load_checkpoint: cannot open '" + path + "'");

  char magic[8];
  detail::read_bytes(in, magic, sizeof(magic), "magic");
  if (!std::equal(magic, magic + 8, kCheckpointMagic))
    throw DataError("load_checkpoint: bad magic; not a checkpoint file");
  const auto version = detail::read_pod<std::uint32_t>(in, "version");
  if (version != kCheckpointVersion)
    throw DataError("load_checkpoint: unsupported version " + std::to_string(version));
  const auto tag = detail::read_pod<std::uint32_t>(in, "variant tag");
  if (tag > static_cast<std::uint32_t>(SystemKind::DSC))
    throw DataError("load_checkpoint: unknown variant tag " + std::to_string(tag));

  Checkpoint ckpt;
  ckpt.system = static_cast<SystemKind>(tag);
  for (std::uint32_t& d : ckpt.dims) d = detail::read_pod<std::uint32_t>(in, "dims");
  ckpt.seed = detail::read_pod<std::uint64_t>(in, "seed");
  ckpt.final_train_loss = detail::read_pod<double>(in, "train loss");
  ckpt.final_val_loss = detail::read_pod<double>(in, "val loss");

  CheckpointSpec spec = spec_for(ckpt.system, ckpt.dims);
  const auto n_params = detail::read_pod<std::uint32_t>(in, "parameter count");
  if (n_params != spec.params.count())
    throw DataError("load_checkpoint: parameter count mismatch: expected " +
                    std::to_string(spec.params.count()) + " tensors, found " +
                    std::to_string(n_params));
  for (int p = 0; p < static_cast<int>(n_params); ++p) {
    const auto name_len = detail::read_pod<std::uint16_t>(in, "parameter name length");
    std::string name(name_len, '\0');
    detail::read_bytes(in, name.data(), name_len, "parameter name");
    if (name != spec.params.name(p))
      throw DataError("load_checkpoint: parameter name mismatch at index " +
                      std::to_string(p) + ": expected '" + spec.params.name(p) +
                      "', found '" + name + "'");
    nn::Tensor& value = spec.params.value(p);
    const auto rank = detail::read_pod<std::uint8_t>(in, "parameter rank");
    if (rank != value.rank())
      throw DataError("load_checkpoint: parameter '" + name + "' rank mismatch");
    for (std::size_t d = 0; d < value.rank(); ++d) {
      const auto dim = detail::read_pod<std::uint64_t>(in, "parameter shape");
      if (dim != value.shape()[d])
        throw DataError("load_checkpoint: parameter '" + name + "' shape mismatch at axis " +
                        std::to_string(d));
    }
    for (std::size_t k = 0; k < value.size(); ++k)
      value.data()[k] = static_cast<double>(detail::read_pod<float>(in, "parameter data"));
  }
  if (in.peek() != std::istream::traits_type::eof())
    throw DataError("load_checkpoint: trailing bytes after checkpoint payload");
  ckpt.params = std::move(spec.params);
  return ckpt;
}

inline models::PvadModel checkpoint_to_model(const Checkpoint& ckpt) {
  if (!is_pvad_system(ckpt.system))
    throw UsageError("checkpoint_to_model: '" + std::string(system_name(ckpt.system)) +
                     "' is not a PVAD variant checkpoint");
  const CheckpointSpec spec = spec_for(ckpt.system, ckpt.dims);
  models::PvadModel m;
  m.variant = to_variant(ckpt.system);
  m.dims = spec.model_dims;
  m.params = ckpt.params;
  return m;
}

struct EncoderHandle {
  speaker::EncoderDims dims;
  nn::ParameterSet params;
};

inline EncoderHandle encoder_from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.system != SystemKind::SPEAKER_ENCODER)
    throw UsageError("encoder_from_checkpoint: checkpoint is not a speaker encoder");
  const CheckpointSpec spec = spec_for(ckpt.system, ckpt.dims);
  return {spec.encoder_dims, ckpt.params};
}

// The cascade is assembled, not trained: its VAD and encoder checkpoints
// are bundled under the "vad." / "spk." prefixes.  Loss fields stay NaN
// since no joint training run produced this artifact.
inline Checkpoint assemble_dsc(const Checkpoint& vad, const Checkpoint& encoder) {
  if (vad.system != SystemKind::VAD)
    throw UsageError("assemble_dsc: first checkpoint must be a VAD");
  if (encoder.system != SystemKind::SPEAKER_ENCODER)
    throw UsageError("assemble_dsc: second checkpoint must be a speaker encoder");
  if (vad.dims[0] != encoder.dims[0])
    throw DataError("assemble_dsc: VAD and encoder input dims differ");

  Checkpoint out;
  out.system = SystemKind::DSC;
  out.dims = {vad.dims[0], encoder.dims[1], vad.dims[1], vad.dims[2],
              encoder.dims[1], encoder.dims[2], 0, 0};
  out.seed = vad.seed;
  CheckpointSpec spec = spec_for(out.system, out.dims);
  for (int p = 0; p < static_cast<int>(vad.params.count()); ++p)
    spec.params.value("vad." + vad.params.name(p)).vec() = vad.params.value(p).vec();
  for (int p = 0; p < static_cast<int>(encoder.params.count()); ++p)
    spec.params.value("spk." + encoder.params.name(p)).vec() = encoder.params.value(p).vec();
  out.params = std::move(spec.params);
  return out;
}

inline std::string checkpoint_file_hash(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("checkpoint_file_hash: cannot open '" + path + "'");
  std::ostringstream os;
  os << in.rdbuf();
  const std::string bytes = os.str();
  return hex64(fnv1a64(bytes.data(), bytes.size()));
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct TrainConfig {
  SystemKind system = SystemKind::EF;
  int epochs = 30;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  bool shuffle = true;
};

// One training example: a full utterance (or, for the encoder, one
// single-speaker slice with its class index).
struct TrainUtterance {
  nn::Mat features;            // T x input
  std::vector<int> classes;    // per-frame targets; unused for the encoder
  Eigen::VectorXd enrollment;  // enrollment d-vector; zero = no enrollment
  int speaker_class = -1;      // encoder target; unused otherwise
};

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = std::numeric_limits<double>::quiet_NaN();
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<EpochStats> history;
  double initial_train_loss = 0.0;
  int retained_epoch = 0;
};

// Per-frame class indices: PVAD {ts=0, nts=1, ns=2}; VAD {speech=0, ns=1}.
inline constexpr int kClassTs = 0;
inline constexpr int kClassNts = 1;
inline constexpr int kClassNs = 2;
inline constexpr int kVadClassSpeech = 0;
inline constexpr int kVadClassNs = 1;

namespace detail {

inline void check_utterance(const TrainUtterance& u, SystemKind k,
                            const models::ModelDims& md, const speaker::EncoderDims& ed,
                            std::size_t index) {
  const std::string where = "utterance " + std::to_string(index);
  if (u.features.rows() < 1) throw DataError("train: " + where + " has no frames");
  const int want_cols = k == SystemKind::SPEAKER_ENCODER ? ed.input : md.input;
  if (u.features.cols() != want_cols)
    throw ShapeError("train: " + where + " feature dim mismatch");
  if (k == SystemKind::SPEAKER_ENCODER) {
    if (u.speaker_class < 0)
      throw DataError("train: " + where + " lacks a speaker class");
    return;
  }
  if (static_cast<Eigen::Index>(u.classes.size()) != u.features.rows())
    throw ShapeError("train: " + where + " needs one class per frame");
  if (k != SystemKind::VAD && u.enrollment.size() != md.enroll)
    throw ShapeError("train: " + where + " enrollment dim mismatch");
}

inline nn::Graph::Id build_loss(nn::Graph& g, nn::ParameterSet& ps, const TrainUtterance& u,
                                SystemKind k, const models::ModelDims& md,
                                const speaker::EncoderDims& ed) {
  switch (k) {
    case SystemKind::VAD:
      return g.softmax_ce(models::vad_logits(g, ps, md, u.features), u.classes);
    case SystemKind::SPEAKER_ENCODER: {
      const auto states = speaker::encoder_states(g, ps, ed, u.features);
      const auto emb = g.l2_normalize_rows(g.mean_rows(states));
      const auto logits = g.affine(emb, g.param(ps, "cls.w"), g.param(ps, "cls.b"));
      return g.softmax_ce(logits, {u.speaker_class});
    }
    case SystemKind::EF:
    case SystemKind::LF:
    case SystemKind::CLF:
    case SystemKind::DCLF: {
      speaker::SpeakerEmbedding e;
      e.values = u.enrollment;
      e.normalized = true;
      return g.softmax_ce(models::pvad_logits(g, ps, md, to_variant(k), u.features, e),
                          u.classes);
    }
    case SystemKind::DSC:
      break;
  }
  throw UsageError("train: DSC is assembled from its VAD and encoder, not trained jointly");
}

}  // namespace detail

inline TrainResult train(const std::vector<TrainUtterance>& train_set,
                         const std::vector<TrainUtterance>& val_set,
                         const TrainConfig& config, const models::ModelDims& md = {},
                         const speaker::EncoderDims& ed = {}) {
  if (config.epochs < 1) throw ConfigError("train: epochs must be >= 1");
  if (config.system == SystemKind::DSC)
    throw UsageError("train: DSC is assembled from its VAD and encoder, not trained jointly");
  if (train_set.empty()) throw DataError("train: empty training set");
  for (std::size_t i = 0; i < train_set.size(); ++i)
    detail::check_utterance(train_set[i], config.system, md, ed, i);
  for (std::size_t i = 0; i < val_set.size(); ++i)
    detail::check_utterance(val_set[i], config.system, md, ed, i);

  int n_speaker_classes = 0;
  if (config.system == SystemKind::SPEAKER_ENCODER) {
    for (const TrainUtterance& u : train_set)
      n_speaker_classes = std::max(n_speaker_classes, u.speaker_class + 1);
    for (const TrainUtterance& u : val_set)
      n_speaker_classes = std::max(n_speaker_classes, u.speaker_class + 1);
    if (n_speaker_classes < 2)
      throw DataError("train: speaker classification needs at least 2 classes");
  }

  // Working parameters; the encoder adds a classifier head that is
  // dropped from the checkpoint.
  nn::ParameterSet work;
  switch (config.system) {
    case SystemKind::VAD:
      models::add_vad_params(work, md);
      break;
    case SystemKind::SPEAKER_ENCODER:
      speaker::add_encoder_params(work, ed);
      models::detail::add_affine_params(work, "cls", ed.hidden, n_speaker_classes);
      break;
    default:
      models::add_variant_params(work, md, to_variant(config.system));
      break;
  }
  nn::init_uniform_fan_in(work, Rng(config.seed));
  models::detail::film_identity_init(work);
  nn::AdamState adam = nn::AdamState::for_params(work, config.lr);

  const auto eval_loss = [&](const std::vector<TrainUtterance>& set, int epoch) {
    double total = 0.0;
    for (std::size_t i = 0; i < set.size(); ++i) {
      nn::Graph g;
      const double v =
          g.val(detail::build_loss(g, work, set[i], config.system, md, ed))(0, 0);
      if (!std::isfinite(v))
        throw NumericError("train: loss became non-finite during evaluation at epoch " +
                           std::to_string(epoch) + ", utterance " + std::to_string(i));
      total += v;
    }
    return total / static_cast<double>(set.size());
  };

  TrainResult result;
  result.initial_train_loss = eval_loss(train_set, 0);

  const Rng epoch_rng(config.seed);
  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  nn::ParameterSet best = work;
  double best_val = std::numeric_limits<double>::infinity();
  int best_epoch = 0;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    if (config.shuffle) {
      auto r = epoch_rng.stream("epoch", epoch);
      r.shuffle(order);
    }
    double total = 0.0;
    for (const std::size_t i : order) {
      nn::Graph g;
      const nn::Graph::Id loss =
          detail::build_loss(g, work, train_set[i], config.system, md, ed);
      const double v = g.val(loss)(0, 0);
      if (!std::isfinite(v))
        throw NumericError("train: loss became non-finite at epoch " +
                           std::to_string(epoch) + ", utterance " + std::to_string(i));
      g.backward(loss);
      nn::adam_step(work, adam);
      total += v;
    }
    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = total / static_cast<double>(train_set.size());
    if (!val_set.empty()) {
      stats.val_loss = eval_loss(val_set, epoch);
      if (stats.val_loss < best_val) {
        best_val = stats.val_loss;
        best = work;
        best_epoch = epoch;
      }
    }
    result.history.push_back(stats);
  }
  if (val_set.empty()) {
    best = work;
    best_epoch = config.epochs;
  }
  result.retained_epoch = best_epoch;

  Checkpoint& ckpt = result.checkpoint;
  ckpt.system = config.system;
  ckpt.dims = dims_record(config.system, md, ed);
  ckpt.seed = config.seed;
  ckpt.final_train_loss = result.history[static_cast<std::size_t>(best_epoch - 1)].train_loss;
  ckpt.final_val_loss = result.history[static_cast<std::size_t>(best_epoch - 1)].val_loss;
  if (config.system == SystemKind::SPEAKER_ENCODER) {
    nn::ParameterSet enc_only;
    speaker::add_encoder_params(enc_only, ed);
    for (int p = 0; p < static_cast<int>(enc_only.count()); ++p)
      enc_only.value(p).vec() = best.value(enc_only.name(p)).vec();
    ckpt.params = std::move(enc_only);
  } else {
    ckpt.params = std::move(best);
  }
  return result;
}

inline void write_loss_history(const std::vector<EpochStats>& history,
                               const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("write_loss_history: cannot open '" + path + "' for writing");
  out << "epoch,train_loss,val_loss\n";
  for (const EpochStats& e : history)
    out << e.epoch << "," << detail::format_double(e.train_loss) << ","
        << detail::format_double(e.val_loss) << "\n";
  if (!out) throw DataError("write_loss_history: write failed for '" + path + "'");
}

}  // namespace pvad::train
