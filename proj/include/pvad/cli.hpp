// Copyright (c) 2026 The pvadbench Authors
// SPDX-License-Identifier: Apache-2.0
//
// Command-line orchestration: corpus synthesis, training, evaluation,
// report comparison, and plot emission. Exit codes are a stable contract:
// 0 success, 1 usage/config error, 2 data error, 3 numeric abort.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "pvad/corpus.hpp"
#include "pvad/error.hpp"
#include "pvad/metrics.hpp"
#include "pvad/pipeline.hpp"
#include "pvad/svgplot.hpp"
#include "pvad/train.hpp"
#include "pvad/version.hpp"

namespace pvad::cli {

inline constexpr std::uint64_t kDefaultSeed = 7;
inline constexpr const char* kCompareSchema = "pvad.compare.report";
inline constexpr int kCompareVersion = 1;
// Accuracy differences below this are "retained" (exact ties) in comparisons.
inline constexpr double kAccuracyTie = 1e-9;

// ---------------------------------------------------------------------------
// Config file: one `key = value` per line, '#' comments.
// ---------------------------------------------------------------------------

struct ToolConfig {
  corpus::CorpusConfig corpus;
  int epochs = 0;  // 0: use the per-system default
  std::map<std::string, int> epochs_by_system;
  double lr = 1e-3;
  bool shuffle = true;
  std::vector<double> durations_ms = {200.0, 500.0, 1000.0, 2000.0, 5000.0};
};

inline int default_epochs(train::SystemKind k) {
  switch (k) {
    case train::SystemKind::VAD: return 8;
    case train::SystemKind::SPEAKER_ENCODER: return 4;
    case train::SystemKind::EF: return 10;
    case train::SystemKind::LF: return 10;
    case train::SystemKind::CLF: return 10;
    case train::SystemKind::DCLF: return 6;
    case train::SystemKind::DSC: break;
  }
  throw UsageError("default_epochs: DSC has no training epochs of its own");
}

inline int epochs_for(const ToolConfig& tc, train::SystemKind k) {
  const auto it = tc.epochs_by_system.find(train::system_name(k));
  if (it != tc.epochs_by_system.end()) return it->second;
  if (tc.epochs > 0) return tc.epochs;
  return default_epochs(k);
}

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

inline int config_int(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const int x = std::stoi(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("config: key '" + key + "' needs an integer, got '" + v + "'");
  }
}

inline double config_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos != v.size() || !std::isfinite(x)) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("config: key '" + key + "' needs a number, got '" + v + "'");
  }
}

inline bool config_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config: key '" + key + "' needs true/false, got '" + v + "'");
}

inline std::vector<double> parse_number_list(const std::string& key, const std::string& v) {
  std::vector<double> out;
  std::string item;
  std::istringstream in(v);
  while (std::getline(in, item, ',')) out.push_back(config_double(key, trim(item)));
  if (out.empty()) throw ConfigError("config: key '" + key + "' needs a comma-separated list");
  return out;
}

inline void apply_config_key(ToolConfig& tc, const std::string& key, const std::string& v) {
  corpus::CorpusConfig& c = tc.corpus;
  if (key == "corpus.speakers") c.speakers = config_int(key, v);
  else if (key == "corpus.test_speakers") c.test_speakers = config_int(key, v);
  else if (key == "corpus.utterances_train") c.utterances_train = config_int(key, v);
  else if (key == "corpus.utterances_val") c.utterances_val = config_int(key, v);
  else if (key == "corpus.utterances_test") c.utterances_test = config_int(key, v);
  else if (key == "corpus.snr_min_db") c.snr_min_db = config_double(key, v);
  else if (key == "corpus.snr_max_db") c.snr_max_db = config_double(key, v);
  else if (key == "corpus.dropout_fraction") c.dropout_fraction = config_double(key, v);
  else if (key == "corpus.segment_min_ms") c.segment_min_ms = config_int(key, v);
  else if (key == "corpus.segment_max_ms") c.segment_max_ms = config_int(key, v);
  else if (key == "corpus.gap_min_ms") c.gap_min_ms = config_int(key, v);
  else if (key == "corpus.gap_max_ms") c.gap_max_ms = config_int(key, v);
  else if (key == "corpus.max_speakers_per_utterance")
    c.max_speakers_per_utterance = config_int(key, v);
  else if (key == "corpus.max_segments_per_speaker")
    c.max_segments_per_speaker = config_int(key, v);
  else if (key == "corpus.enroll_min_ms") c.enroll_min_ms = config_int(key, v);
  else if (key == "corpus.enroll_max_ms") c.enroll_max_ms = config_int(key, v);
  else if (key == "train.epochs") tc.epochs = config_int(key, v);
  else if (key.rfind("train.epochs.", 0) == 0) {
    const std::string name = key.substr(std::string("train.epochs.").size());
    const train::SystemKind k = [&] {
      try {
        return train::system_from_name(name);
      } catch (const Error&) {
        throw ConfigError("config: unknown system in key '" + key + "'");
      }
    }();
    if (k == train::SystemKind::DSC)
      throw ConfigError("config: '" + key + "': the cascade is assembled, not trained");
    tc.epochs_by_system[train::system_name(k)] = config_int(key, v);
  } else if (key == "train.lr") tc.lr = config_double(key, v);
  else if (key == "train.shuffle") tc.shuffle = config_bool(key, v);
  else if (key == "eval.durations_ms") tc.durations_ms = parse_number_list(key, v);
  else throw ConfigError("config: unknown key '" + key + "'");
}

}  // namespace detail

inline ToolConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("config: cannot open '" + path + "'");
  ToolConfig tc;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config: line " + std::to_string(lineno) + ": expected key = value");
    detail::apply_config_key(tc, detail::trim(line.substr(0, eq)),
                             detail::trim(line.substr(eq + 1)));
  }
  return tc;
}

inline ToolConfig load_config_or_default(const std::string& path) {
  return path.empty() ? ToolConfig{} : load_config(path);
}

// Seed priority: --seed flag, then PVAD_SEED, then the default.
inline std::uint64_t resolve_seed(std::optional<std::uint64_t> flag) {
  if (flag) return *flag;
  if (const char* env = std::getenv("PVAD_SEED")) {
    const std::string v(env);
    try {
      std::size_t pos = 0;
      const std::uint64_t seed = std::stoull(v, &pos);
      if (pos != v.size()) throw std::invalid_argument(v);
      return seed;
    } catch (const std::exception&) {
      throw UsageError("PVAD_SEED: not a valid seed: '" + v + "'");
    }
  }
  return kDefaultSeed;
}

namespace detail {

inline std::string fixed(double v, int prec) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(prec);
  os << v;
  return os.str();
}

inline std::uint64_t derive_seed(std::uint64_t seed, const std::string& label) {
  return Rng(seed).stream("train." + label).next_u64();
}

inline std::string loss_str(double v) { return std::isnan(v) ? "nan" : fixed(v, 6); }

inline void report_training(std::ostream& out, const std::string& name,
                            const train::TrainResult& res, const train::TrainConfig& cfg) {
  out << "trained " << name << ": " << cfg.epochs << " epochs, retained epoch "
      << res.retained_epoch << ", train loss " << loss_str(res.checkpoint.final_train_loss)
      << ", val loss " << loss_str(res.checkpoint.final_val_loss) << " ("
      << res.checkpoint.params.parameter_count() << " params)\n";
}

// Trains (or reuses) the speaker encoder and its enrollment table in
// `out_dir`. The table is always derived from the on-disk (f32) weights so
// later loads reproduce it exactly.
inline std::pair<train::Checkpoint, std::map<std::string, Eigen::VectorXd>> ensure_encoder(
    pipeline::FeatureCache& cache, const corpus::CorpusManifest& manifest, const ToolConfig& tc,
    std::uint64_t seed, const std::string& out_dir, std::ostream& out) {
  namespace fs = std::filesystem;
  const std::string ckpt_path = (fs::path(out_dir) / "encoder.ckpt").string();
  if (!fs::exists(ckpt_path)) {
    const pipeline::SplitData data = pipeline::build_encoder_data(cache, manifest);
    train::TrainConfig cfg;
    cfg.system = train::SystemKind::SPEAKER_ENCODER;
    cfg.epochs = epochs_for(tc, cfg.system);
    cfg.lr = tc.lr;
    cfg.seed = derive_seed(seed, "encoder");
    cfg.shuffle = tc.shuffle;
    const train::TrainResult res = train::train(data.train, data.val, cfg);
    train::save_checkpoint(res.checkpoint, ckpt_path);
    train::write_loss_history(res.history, (fs::path(out_dir) / "encoder_loss.csv").string());
    report_training(out, "encoder", res, cfg);
    out << "wrote " << ckpt_path << "\n";
  } else {
    out << "reusing " << ckpt_path << "\n";
  }
  train::Checkpoint encoder = train::load_checkpoint(ckpt_path);
  if (encoder.system != train::SystemKind::SPEAKER_ENCODER)
    throw DataError("'" + ckpt_path + "' is not a speaker encoder checkpoint");

  const std::string table_path = (fs::path(out_dir) / "enrollment.jsonl").string();
  std::map<std::string, Eigen::VectorXd> table;
  if (fs::exists(table_path)) {
    table = corpus::load_enrollment_table(table_path);
  } else {
    const train::CheckpointSpec spec = train::spec_for(encoder.system, encoder.dims);
    table = pipeline::compute_enrollment_table(encoder.params, spec.encoder_dims, manifest,
                                               cache.corpus_dir());
    corpus::save_enrollment_table(table, table_path);
    out << "wrote " << table_path << " (" << table.size() << " speakers)\n";
  }
  return {std::move(encoder), std::move(table)};
}

inline train::Checkpoint ensure_vad(pipeline::FeatureCache& cache,
                                    const corpus::CorpusManifest& manifest, const ToolConfig& tc,
                                    std::uint64_t seed, const std::string& out_dir,
                                    std::ostream& out) {
  namespace fs = std::filesystem;
  const std::string ckpt_path = (fs::path(out_dir) / "vad.ckpt").string();
  if (!fs::exists(ckpt_path)) {
    const pipeline::SplitData data = pipeline::build_vad_data(cache, manifest);
    train::TrainConfig cfg;
    cfg.system = train::SystemKind::VAD;
    cfg.epochs = epochs_for(tc, cfg.system);
    cfg.lr = tc.lr;
    cfg.seed = derive_seed(seed, "vad");
    cfg.shuffle = tc.shuffle;
    const train::TrainResult res = train::train(data.train, data.val, cfg);
    train::save_checkpoint(res.checkpoint, ckpt_path);
    train::write_loss_history(res.history, (fs::path(out_dir) / "vad_loss.csv").string());
    report_training(out, "vad", res, cfg);
    out << "wrote " << ckpt_path << "\n";
  } else {
    out << "reusing " << ckpt_path << "\n";
  }
  train::Checkpoint vad = train::load_checkpoint(ckpt_path);
  if (vad.system != train::SystemKind::VAD)
    throw DataError("'" + ckpt_path + "' is not a VAD checkpoint");
  return vad;
}

inline train::SystemKind parse_variant(const std::string& name) {
  train::SystemKind k;
  try {
    k = train::system_from_name(name);
  } catch (const Error&) {
    throw UsageError("unknown variant '" + name + "'; expected dsc, ef, lf, clf, or dclf");
  }
  if (!train::is_pvad_system(k))
    throw UsageError("variant must be one of dsc, ef, lf, clf, dclf; got '" + name + "'");
  return k;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

inline int cmd_synth(const std::string& config_path, const std::string& out_dir,
                     std::optional<std::uint64_t> seed_flag, std::ostream& out) {
  const ToolConfig tc = load_config_or_default(config_path);
  corpus::CorpusConfig cc = tc.corpus;
  cc.seed = resolve_seed(seed_flag);
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw DataError("cannot create output directory '" + out_dir + "': " + ec.message());

  const corpus::CorpusManifest manifest = corpus::generate_corpus(cc, out_dir);
  corpus::save_manifest(manifest,
                        (std::filesystem::path(out_dir) / "manifest.jsonl").string());

  std::map<corpus::Split, int> split_counts;
  std::map<corpus::Split, int> zero_counts;
  std::int64_t ts = 0, nts = 0, ns = 0;
  int impostors = 0;
  double snr_min = 0.0, snr_max = 0.0, snr_sum = 0.0;
  bool first = true;
  for (const corpus::UtteranceRecord& u : manifest.utterances) {
    split_counts[u.split] += 1;
    if (u.zero_enrolled) zero_counts[u.split] += 1;
    if (u.impostor) ++impostors;
    for (const corpus::FrameLabel l : u.frame_labels) {
      if (l == corpus::FrameLabel::ts) ++ts;
      else if (l == corpus::FrameLabel::nts) ++nts;
      else ++ns;
    }
    if (first) {
      snr_min = snr_max = u.snr_db;
      first = false;
    } else {
      snr_min = std::min(snr_min, u.snr_db);
      snr_max = std::max(snr_max, u.snr_db);
    }
    snr_sum += u.snr_db;
  }
  const double total = static_cast<double>(ts + nts + ns);
  const double n_utts = static_cast<double>(manifest.utterances.size());

  out << "corpus: " << out_dir << "\n";
  out << "seed: " << cc.seed << "\n";
  out << "speakers: " << manifest.roster.size() << " (" << cc.test_speakers << " test)\n";
  out << "utterances: train " << split_counts[corpus::Split::train] << ", val "
      << split_counts[corpus::Split::val] << ", test " << split_counts[corpus::Split::test]
      << "\n";
  out << "frame labels: ts " << detail::fixed(100.0 * ts / total, 1) << "%, nts "
      << detail::fixed(100.0 * nts / total, 1) << "%, ns "
      << detail::fixed(100.0 * ns / total, 1) << "% of " << (ts + nts + ns) << " frames\n";
  out << "snr: min " << detail::fixed(snr_min, 1) << " dB, mean "
      << detail::fixed(snr_sum / n_utts, 1) << " dB, max " << detail::fixed(snr_max, 1)
      << " dB\n";
  out << "zero-enrolled: train " << zero_counts[corpus::Split::train] << ", val "
      << zero_counts[corpus::Split::val] << ", test " << zero_counts[corpus::Split::test]
      << "\n";
  out << "impostor utterances: " << impostors << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

inline int cmd_train(const std::string& config_path, const std::string& corpus_dir,
                     const std::string& out_dir, const std::string& variant,
                     std::optional<std::uint64_t> seed_flag, std::ostream& out) {
  namespace fs = std::filesystem;
  const ToolConfig tc = load_config_or_default(config_path);
  const std::uint64_t seed = resolve_seed(seed_flag);
  const train::SystemKind target = detail::parse_variant(variant);
  const corpus::CorpusManifest manifest =
      corpus::load_manifest((fs::path(corpus_dir) / "manifest.jsonl").string());
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw DataError("cannot create output directory '" + out_dir + "': " + ec.message());
  pipeline::FeatureCache cache(corpus_dir);

  // Every target depends on the encoder: variants consume its enrollment
  // table during training, the cascade bundles its weights.
  auto [encoder, table] = detail::ensure_encoder(cache, manifest, tc, seed, out_dir, out);

  if (target == train::SystemKind::DSC) {
    const train::Checkpoint vad = detail::ensure_vad(cache, manifest, tc, seed, out_dir, out);
    const train::Checkpoint dsc = train::assemble_dsc(vad, encoder);
    const std::string path = (fs::path(out_dir) / "dsc.ckpt").string();
    train::save_checkpoint(dsc, path);
    out << "assembled dsc from vad + encoder (" << dsc.params.parameter_count()
        << " params)\n";
    out << "wrote " << path << "\n";
    return 0;
  }

  const pipeline::SplitData data = pipeline::build_variant_data(cache, manifest, table);
  train::TrainConfig cfg;
  cfg.system = target;
  cfg.epochs = epochs_for(tc, target);
  cfg.lr = tc.lr;
  cfg.seed = detail::derive_seed(seed, train::system_name(target));
  cfg.shuffle = tc.shuffle;
  const train::TrainResult res = train::train(data.train, data.val, cfg);
  const std::string name = train::system_name(target);
  const std::string path = (fs::path(out_dir) / (name + ".ckpt")).string();
  train::save_checkpoint(res.checkpoint, path);
  train::write_loss_history(res.history, (fs::path(out_dir) / (name + "_loss.csv")).string());
  detail::report_training(out, name, res, cfg);
  out << "wrote " << path << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

namespace detail {

inline void print_stratum(std::ostream& out, const char* name, const metrics::StratumEer& s) {
  if (s.available)
    out << name << ": " << fixed(100.0 * s.eer, 2) << "% (threshold " << fixed(s.threshold, 6)
        << ", " << s.n_pos << " pos / " << s.n_neg << " neg)\n";
  else
    out << name << ": unavailable (" << s.note << ")\n";
}

}  // namespace detail

inline int cmd_eval(const std::string& config_path, const std::string& checkpoint_path,
                    const std::string& corpus_dir, const std::string& out_dir,
                    const std::string& durations_csv, std::ostream& out) {
  namespace fs = std::filesystem;
  const ToolConfig tc = load_config_or_default(config_path);
  std::vector<double> durations = tc.durations_ms;
  if (!durations_csv.empty())
    durations = detail::parse_number_list("--durations", durations_csv);

  const corpus::CorpusManifest manifest =
      corpus::load_manifest((fs::path(corpus_dir) / "manifest.jsonl").string());
  const train::Checkpoint ckpt = train::load_checkpoint(checkpoint_path);
  if (ckpt.system == train::SystemKind::SPEAKER_ENCODER)
    throw UsageError("cannot evaluate a speaker encoder; pass a VAD or PVAD variant checkpoint");
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw DataError("cannot create output directory '" + out_dir + "': " + ec.message());
  pipeline::FeatureCache cache(corpus_dir);

  std::map<std::string, Eigen::VectorXd> table;
  if (ckpt.system != train::SystemKind::VAD) {
    fs::path dir = fs::path(checkpoint_path).parent_path();
    if (dir.empty()) dir = ".";
    const std::string table_path = (dir / "enrollment.jsonl").string();
    if (!fs::exists(table_path))
      throw DataError("enrollment table '" + table_path +
                      "' not found; cmd_train writes it next to the checkpoint");
    table = corpus::load_enrollment_table(table_path);
  }

  pipeline::EvalRequest req;
  req.durations_ms = durations;
  req.toolkit_version = kToolkitVersion;
  req.checkpoint_hash = train::checkpoint_file_hash(checkpoint_path);
  const metrics::MetricsReport report =
      pipeline::evaluate_checkpoint(ckpt, manifest, cache, table, req);

  const std::string base = (fs::path(out_dir) / report.variant).string();
  metrics::write_report_json(report, base + "_report.json");
  metrics::write_report_csv(report, base + "_report.csv");
  std::vector<std::string> written = {base + "_report.json", base + "_report.csv"};
  if (report.feer_pvad.available) {
    metrics::write_det_csv(report.det_feer_pvad, base + "_det_feer_pvad.csv");
    written.push_back(base + "_det_feer_pvad.csv");
  }
  if (report.feer_vad.available) {
    metrics::write_det_csv(report.det_feer_vad, base + "_det_feer_vad.csv");
    written.push_back(base + "_det_feer_vad.csv");
  }
  if (report.ueer.available) {
    metrics::write_det_csv(report.det_ueer, base + "_det_ueer.csv");
    written.push_back(base + "_det_ueer.csv");
  }

  out << "variant: " << report.variant << "\n";
  out << "corpus seed: " << report.corpus_seed << ", checkpoint " << report.checkpoint_hash
      << "\n";
  detail::print_stratum(out, "frame EER (PVAD)", report.feer_pvad);
  detail::print_stratum(out, "frame EER (VAD)", report.feer_vad);
  detail::print_stratum(out, "utterance EER", report.ueer);
  if (report.decision_available) {
    out << "operating threshold: " << detail::fixed(report.operating_threshold, 6) << "\n";
    if (report.latency_available)
      out << "median latency: " << detail::fixed(report.median_latency_ms, 0) << " ms ("
          << report.total_detected << " of " << report.total_target_utterances
          << " detected)\n";
    else
      out << "median latency: unavailable (no detections)\n";
    out << "detection accuracy: " << detail::fixed(report.overall_detection_accuracy, 4)
        << " overall, " << detail::fixed(report.median_user_accuracy, 4) << " median user\n";
  } else {
    out << "decision metrics: unavailable (" << report.decision_note << ")\n";
  }
  for (const std::string& w : written) out << "wrote " << w << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// compare
// ---------------------------------------------------------------------------

namespace detail {

struct LoadedReport {
  std::string path;
  nlohmann::json j;
  std::string variant;
  std::string checkpoint_hash;
  std::uint64_t corpus_seed = 0;
  std::vector<std::string> user_ids;               // sorted
  std::map<std::string, double> accuracy;          // per user
  std::map<std::string, double> latency;           // per user, detected only
};

inline LoadedReport load_report(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open report '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw DataError("report '" + path + "': " + e.what());
  }
  if (!j.is_object() || j.value("schema", std::string()) != metrics::kReportSchema)
    throw DataError("report '" + path + "' is not a metrics report");
  if (j.value("version", 0) != metrics::kReportVersion)
    throw DataError("report '" + path + "': unsupported version");
  LoadedReport r;
  r.path = path;
  r.j = j;
  try {
    r.variant = j.at("variant").get<std::string>();
    r.checkpoint_hash = j.at("checkpoint_hash").get<std::string>();
    r.corpus_seed = j.at("corpus_seed").get<std::uint64_t>();
    for (const nlohmann::json& u : j.at("users")) {
      const std::string id = u.at("user_id").get<std::string>();
      r.user_ids.push_back(id);
      r.accuracy[id] = u.at("detection_accuracy").get<double>();
      if (!u.at("median_latency_ms").is_null())
        r.latency[id] = u.at("median_latency_ms").get<double>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError("report '" + path + "': " + e.what());
  }
  std::sort(r.user_ids.begin(), r.user_ids.end());
  return r;
}

struct PairCounts {
  int n = 0, improved = 0, retained = 0, regressed = 0;
  std::vector<double> diffs;  // positive: first report better
};

inline nlohmann::ordered_json pair_metric_json(const PairCounts& c) {
  nlohmann::ordered_json m;
  m["n_users"] = c.n;
  m["improved"] = c.improved;
  m["retained"] = c.retained;
  m["regressed"] = c.regressed;
  m["summary"] = std::to_string(c.improved) + " out of " + std::to_string(c.n) +
                 " users improved";
  nlohmann::ordered_json w;
  try {
    const metrics::WilcoxonResult res = metrics::wilcoxon_signed_rank(c.diffs);
    w["w"] = res.w;
    w["p_one_sided"] = res.p_one_sided;
    w["p_two_sided"] = res.p_two_sided;
    w["n_effective"] = res.n_effective;
    w["exact"] = res.exact;
  } catch (const DataError& e) {
    w["degenerate"] = true;
    w["note"] = e.what();
  }
  m["wilcoxon"] = std::move(w);
  return m;
}

inline std::string pair_winner(const PairCounts& c, const std::string& a, const std::string& b) {
  if (c.improved > c.regressed) return a;
  if (c.regressed > c.improved) return b;
  return "tie";
}

inline void print_pair_metric(std::ostream& out, const char* name, const PairCounts& c) {
  out << "  " << name << ": " << c.improved << " out of " << c.n << " users improved, "
      << c.retained << " retained, " << c.regressed << " regressed";
  try {
    const metrics::WilcoxonResult res = metrics::wilcoxon_signed_rank(c.diffs);
    out << "; Wilcoxon W=" << fixed(res.w, 1) << ", one-sided p=" << fixed(res.p_one_sided, 6)
        << ", two-sided p=" << fixed(res.p_two_sided, 6)
        << (res.exact ? " (exact, n=" : " (normal approx, n=") << res.n_effective << ")";
  } catch (const DataError& e) {
    out << "; Wilcoxon degenerate: " << e.what();
  }
  out << "\n";
}

}  // namespace detail

inline int cmd_compare(const std::vector<std::string>& report_paths, const std::string& out_dir,
                       std::ostream& out) {
  namespace fs = std::filesystem;
  if (report_paths.size() < 2) throw UsageError("compare needs at least two reports");
  std::vector<detail::LoadedReport> reports;
  for (const std::string& p : report_paths) reports.push_back(detail::load_report(p));

  for (const detail::LoadedReport& r : reports) {
    if (r.user_ids.empty())
      throw DataError("report '" + r.path + "' has no per-user table; nothing to compare");
    if (r.corpus_seed != reports.front().corpus_seed)
      throw DataError("reports span different corpora: seed " +
                      std::to_string(reports.front().corpus_seed) + " vs " +
                      std::to_string(r.corpus_seed));
    if (r.user_ids != reports.front().user_ids)
      throw DataError("mismatched user sets between '" + reports.front().path + "' and '" +
                      r.path + "'");
  }
  const std::vector<std::string>& users = reports.front().user_ids;

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw DataError("cannot create output directory '" + out_dir + "': " + ec.message());

  nlohmann::ordered_json doc;
  doc["schema"] = kCompareSchema;
  doc["version"] = kCompareVersion;
  doc["toolkit_version"] = kToolkitVersion;
  doc["corpus_seed"] = reports.front().corpus_seed;
  doc["n_users"] = users.size();
  nlohmann::ordered_json report_list = nlohmann::ordered_json::array();
  for (const detail::LoadedReport& r : reports) {
    nlohmann::ordered_json e;
    e["variant"] = r.variant;
    e["checkpoint_hash"] = r.checkpoint_hash;
    e["path"] = r.path;
    report_list.push_back(std::move(e));
  }
  doc["reports"] = std::move(report_list);

  nlohmann::ordered_json pairs = nlohmann::ordered_json::array();
  nlohmann::ordered_json winners_latency = nlohmann::ordered_json::array();
  nlohmann::ordered_json winners_accuracy = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < reports.size(); ++i) {
    for (std::size_t k = i + 1; k < reports.size(); ++k) {
      const detail::LoadedReport& a = reports[i];
      const detail::LoadedReport& b = reports[k];

      // Positive difference: `a` better (lower latency / higher accuracy).
      detail::PairCounts lat;
      for (const std::string& u : users) {
        const auto la = a.latency.find(u);
        const auto lb = b.latency.find(u);
        if (la == a.latency.end() || lb == b.latency.end()) continue;
        const double d = lb->second - la->second;
        lat.n += 1;
        lat.diffs.push_back(d);
        if (d > 0) lat.improved += 1;
        else if (d < 0) lat.regressed += 1;
        else lat.retained += 1;
      }
      detail::PairCounts acc;
      for (const std::string& u : users) {
        const double d = a.accuracy.at(u) - b.accuracy.at(u);
        acc.n += 1;
        acc.diffs.push_back(d);
        if (std::abs(d) < kAccuracyTie) acc.retained += 1;
        else if (d > 0) acc.improved += 1;
        else acc.regressed += 1;
      }

      out << a.variant << " vs " << b.variant << "\n";
      detail::print_pair_metric(out, "latency", lat);
      detail::print_pair_metric(out, "accuracy", acc);
      const std::string lat_winner = detail::pair_winner(lat, a.variant, b.variant);
      const std::string acc_winner = detail::pair_winner(acc, a.variant, b.variant);
      out << "  winner (latency): " << lat_winner << "; winner (accuracy): " << acc_winner
          << "\n";

      nlohmann::ordered_json pj;
      pj["a"] = a.variant;
      pj["b"] = b.variant;
      pj["latency"] = detail::pair_metric_json(lat);
      pj["accuracy"] = detail::pair_metric_json(acc);
      pairs.push_back(std::move(pj));
      nlohmann::ordered_json wl;
      wl["a"] = a.variant;
      wl["b"] = b.variant;
      wl["winner"] = lat_winner;
      winners_latency.push_back(std::move(wl));
      nlohmann::ordered_json wa;
      wa["a"] = a.variant;
      wa["b"] = b.variant;
      wa["winner"] = acc_winner;
      winners_accuracy.push_back(std::move(wa));
    }
  }
  doc["pairs"] = std::move(pairs);
  nlohmann::ordered_json winners;
  winners["latency"] = std::move(winners_latency);
  winners["accuracy"] = std::move(winners_accuracy);
  doc["winners"] = std::move(winners);

  const std::string path = (fs::path(out_dir) / "compare_report.json").string();
  std::ofstream of(path, std::ios::binary | std::ios::trunc);
  if (!of) throw DataError("cannot open '" + path + "' for writing");
  of << doc.dump(2) << "\n";
  if (!of) throw DataError("write failed for '" + path + "'");
  out << "wrote " << path << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// plot
// ---------------------------------------------------------------------------

inline int cmd_plot(const std::vector<std::string>& report_paths, const std::string& out_dir,
                    std::ostream& out, std::ostream& err) {
  namespace fs = std::filesystem;
  std::vector<detail::LoadedReport> reports;
  for (const std::string& p : report_paths) reports.push_back(detail::load_report(p));
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw DataError("cannot create output directory '" + out_dir + "': " + ec.message());

  const auto emit = [&](const svg::PlotSpec& spec, const char* file) {
    if (spec.series.empty()) {
      err << "warning: " << file << ": no data in any report; plot skipped\n";
      return;
    }
    const std::string path = (fs::path(out_dir) / file).string();
    svg::write_svg(spec, path);
    out << "wrote " << path << "\n";
  };

  struct DetDef {
    const char* key;
    const char* file;
    const char* title;
  };
  const DetDef det_defs[] = {
      {"frame_eer_pvad", "det_feer_pvad.svg", "DET: frame EER, PVAD scores"},
      {"frame_eer_vad", "det_feer_vad.svg", "DET: frame EER, VAD scores"},
      {"utterance_eer", "det_ueer.svg", "DET: utterance EER"},
  };
  for (const DetDef& def : det_defs) {
    svg::PlotSpec spec;
    spec.title = def.title;
    spec.x_label = "false positive rate";
    spec.y_label = "false negative rate";
    spec.fix_x = spec.fix_y = true;
    spec.x_min = spec.y_min = 0.0;
    spec.x_max = spec.y_max = 1.0;
    for (const detail::LoadedReport& r : reports) {
      const nlohmann::json& st = r.j.at(def.key);
      if (!st.value("available", false) || !st.contains("det") || st["det"].empty()) {
        err << "warning: " << def.file << ": no '" << def.key << "' series for " << r.variant
            << "; skipping series\n";
        continue;
      }
      svg::Series s;
      s.label = r.variant;
      for (const nlohmann::json& pt : st["det"])
        s.points.emplace_back(pt.at(0).get<double>(), pt.at(1).get<double>());
      spec.series.push_back(std::move(s));
    }
    emit(spec, def.file);
  }

  {
    svg::PlotSpec spec;
    spec.title = "Detection accuracy vs audio duration";
    spec.x_label = "duration from onset (ms)";
    spec.y_label = "detection accuracy";
    spec.fix_y = true;
    spec.y_min = 0.0;
    spec.y_max = 1.02;
    for (const detail::LoadedReport& r : reports) {
      const nlohmann::json& series = r.j.at("accuracy_vs_duration");
      if (series.empty()) {
        err << "warning: accuracy_vs_duration.svg: empty series for " << r.variant
            << "; skipping series\n";
        continue;
      }
      svg::Series s;
      s.label = r.variant;
      for (const nlohmann::json& row : series)
        s.points.emplace_back(row.at("duration_ms").get<double>(),
                              row.at("accuracy").get<double>());
      spec.series.push_back(std::move(s));
    }
    emit(spec, "accuracy_vs_duration.svg");
  }

  {
    svg::PlotSpec spec;
    spec.title = "Per-user median latency vs detection accuracy";
    spec.x_label = "median latency (ms)";
    spec.y_label = "detection accuracy";
    spec.fix_y = true;
    spec.y_min = 0.0;
    spec.y_max = 1.02;
    for (const detail::LoadedReport& r : reports) {
      svg::Series s;
      s.label = r.variant;
      s.markers = true;
      for (const std::string& u : r.user_ids) {
        const auto lat = r.latency.find(u);
        if (lat == r.latency.end()) continue;
        s.points.emplace_back(lat->second, r.accuracy.at(u));
      }
      if (s.points.empty()) {
        err << "warning: user_latency_accuracy.svg: no detected users for " << r.variant
            << "; skipping series\n";
        continue;
      }
      spec.series.push_back(std::move(s));
    }
    emit(spec, "user_latency_accuracy.svg");
  }
  return 0;
}

// ---------------------------------------------------------------------------
// Entry point
// ---------------------------------------------------------------------------

inline int run(std::vector<std::string> args, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
  CLI::App app{"pvadbench: personalized voice activity detection benchmark"};
  app.require_subcommand(1);
  int rc = 0;

  std::string sy_config, sy_out;
  std::uint64_t sy_seed = 0;
  CLI::App* synth = app.add_subcommand("synth", "Synthesize a corpus (WAVs + manifest)");
  synth->add_option("--config", sy_config, "key = value config file");
  synth->add_option("--out", sy_out, "corpus output directory")->required();
  CLI::Option* sy_seed_opt = synth->add_option("--seed", sy_seed, "seed override");
  synth->callback([&] {
    rc = cmd_synth(sy_config, sy_out,
                   sy_seed_opt->count() ? std::optional<std::uint64_t>(sy_seed) : std::nullopt,
                   out);
  });

  std::string tr_config, tr_corpus, tr_out, tr_variant;
  std::uint64_t tr_seed = 0;
  CLI::App* tr = app.add_subcommand("train", "Train a system on a corpus");
  tr->add_option("--config", tr_config, "key = value config file");
  tr->add_option("--corpus", tr_corpus, "corpus directory (from synth)")->required();
  tr->add_option("--out", tr_out, "checkpoint output directory")->required();
  tr->add_option("--variant", tr_variant, "dsc, ef, lf, clf, or dclf")->required();
  CLI::Option* tr_seed_opt = tr->add_option("--seed", tr_seed, "seed override");
  tr->callback([&] {
    rc = cmd_train(tr_config, tr_corpus, tr_out, tr_variant,
                   tr_seed_opt->count() ? std::optional<std::uint64_t>(tr_seed) : std::nullopt,
                   out);
  });

  std::string ev_config, ev_ckpt, ev_corpus, ev_out, ev_durations;
  CLI::App* ev = app.add_subcommand("eval", "Evaluate a checkpoint on the test split");
  ev->add_option("--config", ev_config, "key = value config file");
  ev->add_option("--checkpoint", ev_ckpt, "checkpoint file")->required();
  ev->add_option("--corpus", ev_corpus, "corpus directory")->required();
  ev->add_option("--out", ev_out, "report output directory")->required();
  ev->add_option("--durations", ev_durations, "comma-separated durations in ms");
  ev->callback([&] { rc = cmd_eval(ev_config, ev_ckpt, ev_corpus, ev_out, ev_durations, out); });

  std::vector<std::string> cp_reports;
  std::string cp_out;
  CLI::App* cp = app.add_subcommand("compare", "Compare two or more metric reports");
  cp->add_option("reports", cp_reports, "report JSON files")->required()->expected(-2);
  cp->add_option("--out", cp_out, "comparison output directory")->required();
  cp->callback([&] { rc = cmd_compare(cp_reports, cp_out, out); });

  std::vector<std::string> pl_reports;
  std::string pl_out;
  CLI::App* pl = app.add_subcommand("plot", "Render SVG plots from metric reports");
  pl->add_option("reports", pl_reports, "report JSON files")->required()->expected(-1);
  pl->add_option("--out", pl_out, "plot output directory")->required();
  pl->callback([&] { rc = cmd_plot(pl_reports, pl_out, out, err); });

  std::vector<const char*> argv;
  argv.push_back("pvadbench");
  for (const std::string& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return 1;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const NumericError& e) {
    err << "error: " << e.what() << "\n";
    return 3;
  } catch (const Error& e) {  // DataError, ShapeError, and any future kin
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  return rc;
}

}  // namespace pvad::cli
