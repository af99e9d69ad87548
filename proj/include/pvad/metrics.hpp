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
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "pvad/corpus.hpp"
#include "pvad/error.hpp"
#include "pvad/models.hpp"

namespace pvad::metrics {

// ---------------------------------------------------------------------------
// DET / EER
// ---------------------------------------------------------------------------

struct DetPoint {
  double threshold = 0.0;
  double fpr = 0.0;
  double fnr = 0.0;
};

struct DetCurve {
  std::vector<DetPoint> points;  // ascending threshold
  std::int64_t n_pos = 0;
  std::int64_t n_neg = 0;
};

struct EerResult {
  double eer = 0.0;
  double operating_threshold = 0.0;
};

// Thresholds at all distinct score midpoints plus ±inf sentinels; a sample is
// predicted positive iff score >= threshold.
inline DetCurve det_curve(const std::vector<double>& scores,
                          const std::vector<std::uint8_t>& labels) {
  if (scores.size() != labels.size())
    throw ShapeError("det_curve: " + std::to_string(scores.size()) + " scores vs " +
                     std::to_string(labels.size()) + " labels");
  if (scores.empty()) throw DataError("det_curve: empty input");

  DetCurve curve;
  std::vector<std::pair<double, std::uint8_t>> sorted;
  sorted.reserve(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!std::isfinite(scores[i]))
      throw DataError("det_curve: non-finite score at index " + std::to_string(i));
    curve.n_pos += labels[i] ? 1 : 0;
    curve.n_neg += labels[i] ? 0 : 1;
    sorted.emplace_back(scores[i], labels[i] ? std::uint8_t{1} : std::uint8_t{0});
  }
  if (curve.n_pos == 0 || curve.n_neg == 0)
    throw DataError("det_curve: degenerate single-class input (" +
                    std::to_string(curve.n_pos) + " positives, " +
                    std::to_string(curve.n_neg) + " negatives)");
  std::sort(sorted.begin(), sorted.end());

  std::vector<double> thresholds;
  thresholds.push_back(-std::numeric_limits<double>::infinity());
  for (std::size_t i = 1; i < sorted.size(); ++i)
    if (sorted[i].first != sorted[i - 1].first)
      thresholds.push_back(0.5 * (sorted[i - 1].first + sorted[i].first));
  thresholds.push_back(std::numeric_limits<double>::infinity());

  // Walking thresholds upward, maintain counts of samples with score < t.
  std::size_t at = 0;
  std::int64_t pos_below = 0, neg_below = 0;
  for (const double t : thresholds) {
    while (at < sorted.size() && sorted[at].first < t) {
      pos_below += sorted[at].second ? 1 : 0;
      neg_below += sorted[at].second ? 0 : 1;
      ++at;
    }
    DetPoint p;
    p.threshold = t;
    p.fnr = static_cast<double>(pos_below) / static_cast<double>(curve.n_pos);
    p.fpr = static_cast<double>(curve.n_neg - neg_below) / static_cast<double>(curve.n_neg);
    curve.points.push_back(p);
  }
  return curve;
}

// Linear interpolation between the adjacent curve points where fpr - fnr
// changes sign; at the interpolated threshold fpr equals fnr by construction.
inline EerResult eer_from_det(const DetCurve& curve) {
  if (curve.points.size() < 2) throw DataError("eer_from_det: curve has too few points");
  for (const DetPoint& p : curve.points)
    if (p.fpr == p.fnr) {
      EerResult r;
      r.eer = p.fpr;
      r.operating_threshold =
          std::isfinite(p.threshold) ? p.threshold : (p.threshold < 0 ? 0.0 : 1.0);
      return r;
    }
  for (std::size_t i = 0; i + 1 < curve.points.size(); ++i) {
    const DetPoint& a = curve.points[i];
    const DetPoint& b = curve.points[i + 1];
    const double da = a.fpr - a.fnr;
    const double db = b.fpr - b.fnr;
    if (da > 0.0 && db < 0.0) {
      const double t = da / (da - db);
      EerResult r;
      r.eer = a.fpr + t * (b.fpr - a.fpr);
      if (std::isfinite(a.threshold) && std::isfinite(b.threshold))
        r.operating_threshold = a.threshold + t * (b.threshold - a.threshold);
      else if (std::isfinite(a.threshold))
        r.operating_threshold = a.threshold;
      else if (std::isfinite(b.threshold))
        r.operating_threshold = b.threshold;
      else
        r.operating_threshold = 0.0;
      return r;
    }
  }
  throw NumericError("eer_from_det: no fpr/fnr crossing found");
}

// ---------------------------------------------------------------------------
// Frame and utterance scoring
// ---------------------------------------------------------------------------

inline std::vector<double> frame_scores_pvad(const std::vector<models::FramePosterior>& post) {
  std::vector<double> s;
  s.reserve(post.size());
  for (const models::FramePosterior& p : post) s.push_back(p.p_ts);
  return s;
}

inline std::vector<double> frame_scores_vad(const std::vector<models::FramePosterior>& post) {
  std::vector<double> s;
  s.reserve(post.size());
  for (const models::FramePosterior& p : post) s.push_back(p.p_ts + p.p_nts);
  return s;
}

inline constexpr int kSmoothingWindow = 5;
inline constexpr double kFrameStepMs = 10.0;

// Trailing (causal) moving average of width 5; the first frames average over
// min(i+1, 5) entries.
inline std::vector<double> trailing_moving_average(const std::vector<double>& scores) {
  std::vector<double> ma(scores.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    acc += scores[i];
    if (i >= kSmoothingWindow) acc -= scores[i - kSmoothingWindow];
    const std::size_t width = std::min<std::size_t>(i + 1, kSmoothingWindow);
    ma[i] = acc / static_cast<double>(width);
  }
  return ma;
}

inline double utterance_score(const std::vector<double>& frame_scores) {
  if (frame_scores.empty()) throw DataError("utterance_score: empty input");
  const std::vector<double> ma = trailing_moving_average(frame_scores);
  return *std::max_element(ma.begin(), ma.end());
}

struct LatencyResult {
  bool detected = false;
  double latency_ms = 0.0;  // meaningful only when detected; may be <= 0
};

// Onset = first ts frame; detection = first frame whose trailing MA reaches
// the threshold; latency = (detection - onset) * 10 ms. No crossing -> miss.
inline LatencyResult detection_latency(const std::vector<double>& frame_scores,
                                       const std::vector<corpus::FrameLabel>& labels,
                                       double threshold) {
  if (frame_scores.size() != labels.size())
    throw ShapeError("detection_latency: " + std::to_string(frame_scores.size()) +
                     " scores vs " + std::to_string(labels.size()) + " labels");
  std::ptrdiff_t onset = -1;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] == corpus::FrameLabel::ts) {
      onset = static_cast<std::ptrdiff_t>(i);
      break;
    }
  if (onset < 0)
    throw DataError("detection_latency: no target-speech frames; latency not applicable");

  const std::vector<double> ma = trailing_moving_average(frame_scores);
  LatencyResult r;
  for (std::size_t t = 0; t < ma.size(); ++t)
    if (ma[t] >= threshold) {
      r.detected = true;
      r.latency_ms = (static_cast<double>(t) - static_cast<double>(onset)) * kFrameStepMs;
      return r;
    }
  return r;  // miss
}

inline double detection_accuracy(const std::vector<double>& utterance_scores,
                                 double threshold) {
  if (utterance_scores.empty()) throw DataError("detection_accuracy: empty utterance set");
  std::size_t detected = 0;
  for (const double s : utterance_scores) detected += s >= threshold ? 1 : 0;
  return static_cast<double>(detected) / static_cast<double>(utterance_scores.size());
}

struct DurationAccuracy {
  double duration_ms = 0.0;
  double accuracy = 0.0;
};

// For each duration d, an utterance counts as detected when its score over the
// causal prefix truncated at onset + d reaches the threshold.  With d at least
// the full utterance length this equals detection_accuracy on full utterances.
inline std::vector<DurationAccuracy> accuracy_vs_duration(
    const std::vector<std::vector<double>>& utterance_frame_scores,
    const std::vector<std::size_t>& onsets, const std::vector<double>& durations_ms,
    double threshold) {
  if (utterance_frame_scores.size() != onsets.size())
    throw ShapeError("accuracy_vs_duration: scores/onsets size mismatch");
  if (utterance_frame_scores.empty())
    throw DataError("accuracy_vs_duration: empty utterance set");
  for (std::size_t i = 0; i + 1 < durations_ms.size(); ++i)
    if (!(durations_ms[i] < durations_ms[i + 1]))
      throw ConfigError("accuracy_vs_duration: durations must be ascending");
  for (const double d : durations_ms)
    if (!(d > 0.0)) throw ConfigError("accuracy_vs_duration: durations must be positive");

  std::vector<DurationAccuracy> out;
  for (const double d : durations_ms) {
    const std::size_t frames_after =
        static_cast<std::size_t>(std::llround(d / kFrameStepMs));
    std::size_t detected = 0;
    for (std::size_t i = 0; i < utterance_frame_scores.size(); ++i) {
      const std::vector<double>& scores = utterance_frame_scores[i];
      if (scores.empty()) throw DataError("accuracy_vs_duration: empty utterance scores");
      const std::size_t end =
          std::max<std::size_t>(1, std::min(scores.size(), onsets[i] + frames_after));
      const std::vector<double> prefix(scores.begin(),
                                       scores.begin() + static_cast<std::ptrdiff_t>(end));
      detected += utterance_score(prefix) >= threshold ? 1 : 0;
    }
    out.push_back({d, static_cast<double>(detected) /
                          static_cast<double>(utterance_frame_scores.size())});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Wilcoxon signed-rank test
// ---------------------------------------------------------------------------

struct WilcoxonResult {
  double w = 0.0;  // min(W+, W-)
  double p_one_sided = 1.0;
  double p_two_sided = 1.0;
  int n_effective = 0;
  bool exact = false;
};

namespace detail {

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

inline WilcoxonResult wilcoxon_impl(const std::vector<double>& differences, int exact_max_n) {
  std::vector<double> d;
  for (const double v : differences) {
    if (!std::isfinite(v)) throw DataError("wilcoxon_signed_rank: non-finite difference");
    if (v != 0.0) d.push_back(v);
  }
  if (d.empty())
    throw DataError("wilcoxon_signed_rank: all differences are zero; test degenerate");
  const int n = static_cast<int>(d.size());

  // Mid-ranks of |d|.
  std::vector<std::size_t> order(d.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&d](std::size_t a, std::size_t b) {
    return std::abs(d[a]) < std::abs(d[b]);
  });
  std::vector<double> rank(d.size(), 0.0);
  std::vector<int> tie_sizes;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && std::abs(d[order[j + 1]]) == std::abs(d[order[i]])) ++j;
    const double mid = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j + 1));
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = mid;
    tie_sizes.push_back(static_cast<int>(j - i + 1));
    i = j + 1;
  }

  double w_plus = 0.0, w_minus = 0.0;
  for (std::size_t k = 0; k < d.size(); ++k) (d[k] > 0.0 ? w_plus : w_minus) += rank[k];

  WilcoxonResult r;
  r.n_effective = n;
  r.w = std::min(w_plus, w_minus);

  if (n <= exact_max_n) {
    // Exact null distribution of 2·W+ by dynamic programming over 2·ranks
    // (doubling makes mid-ranks integral).
    const std::int64_t total_scaled = static_cast<std::int64_t>(n) * (n + 1);
    std::vector<double> count(static_cast<std::size_t>(total_scaled) + 1, 0.0);
    count[0] = 1.0;
    std::int64_t reach = 0;
    for (std::size_t k = 0; k < d.size(); ++k) {
      const std::int64_t s = std::llround(2.0 * rank[k]);
      reach += s;
      for (std::int64_t v = reach; v >= s; --v)
        count[static_cast<std::size_t>(v)] += count[static_cast<std::size_t>(v - s)];
    }
    const std::int64_t target = std::llround(2.0 * r.w);
    double tail = 0.0;
    for (std::int64_t v = 0; v <= target; ++v) tail += count[static_cast<std::size_t>(v)];
    const double denom = std::pow(2.0, n);
    r.p_one_sided = tail / denom;
    r.p_two_sided = std::min(1.0, 2.0 * r.p_one_sided);
    r.exact = true;
  } else {
    const double nn = static_cast<double>(n);
    const double mu = nn * (nn + 1.0) / 4.0;
    double var = nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0;
    for (const int t : tie_sizes)
      var -= (static_cast<double>(t) * t * t - t) / 48.0;
    if (!(var > 0.0)) throw NumericError("wilcoxon_signed_rank: zero variance");
    const double z = (r.w + 0.5 - mu) / std::sqrt(var);  // continuity correction
    r.p_one_sided = normal_cdf(z);
    r.p_two_sided = std::min(1.0, 2.0 * r.p_one_sided);
    r.exact = false;
  }
  return r;
}

}  // namespace detail

// Zero differences dropped; ties mid-ranked; exact enumeration for
// n_effective <= 20, normal approximation with continuity correction above.
inline WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& differences) {
  return detail::wilcoxon_impl(differences, 20);
}

inline double median(std::vector<double> values) {
  if (values.empty()) throw DataError("median: empty input");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

// ---------------------------------------------------------------------------
// Suite evaluation over scored utterances
// ---------------------------------------------------------------------------

struct ScoredUtterance {
  std::string id;
  std::string user_id;  // target speaker
  bool zero_enrolled = false;
  bool impostor = false;
  std::vector<corpus::FrameLabel> labels;
  std::vector<double> pvad_scores;  // p_ts per frame
  std::vector<double> vad_scores;   // p_ts + p_nts per frame
};

struct StratumEer {
  bool available = false;
  double eer = 0.0;
  double threshold = 0.0;
  std::int64_t n_pos = 0;
  std::int64_t n_neg = 0;
  std::string note;  // set when unavailable
};

struct UserReport {
  std::string user_id;
  int n_target_utterances = 0;
  int detected = 0;
  int missed = 0;
  double detection_accuracy = 0.0;
  std::vector<double> latencies_ms;  // detected utterances only
  bool has_latency = false;
  double median_latency_ms = 0.0;
};

struct MetricsReport {
  std::string variant;
  std::string toolkit_version;
  std::uint64_t corpus_seed = 0;
  std::string checkpoint_hash;
  StratumEer feer_pvad;
  StratumEer feer_vad;
  StratumEer ueer;
  double operating_threshold = 0.0;
  bool decision_available = false;  // latency/accuracy strata usable
  std::string decision_note;
  int total_target_utterances = 0;
  int total_detected = 0;
  int total_missed = 0;
  double overall_detection_accuracy = 0.0;
  double median_user_accuracy = 0.0;
  bool latency_available = false;
  double median_latency_ms = 0.0;
  std::vector<UserReport> users;
  std::vector<DurationAccuracy> accuracy_by_duration;
  DetCurve det_feer_pvad;
  DetCurve det_feer_vad;
  DetCurve det_ueer;
};

struct EvalOptions {
  std::vector<double> durations_ms = {200.0, 500.0, 1000.0, 2000.0, 5000.0};
  bool vad_only = false;  // plain VAD checkpoint: only the fEER VAD stratum applies
};

namespace detail {

inline StratumEer stratum_from_curve(const DetCurve& curve) {
  const EerResult eer = eer_from_det(curve);
  StratumEer s;
  s.available = true;
  s.eer = eer.eer;
  s.threshold = eer.operating_threshold;
  s.n_pos = curve.n_pos;
  s.n_neg = curve.n_neg;
  return s;
}

inline StratumEer unavailable_stratum(const std::string& note) {
  StratumEer s;
  s.available = false;
  s.note = note;
  return s;
}

}  // namespace detail

inline MetricsReport evaluate_scored(const std::vector<ScoredUtterance>& utterances,
                                     const EvalOptions& options = {}) {
  if (utterances.empty()) throw DataError("evaluate_scored: empty utterance set");
  for (const ScoredUtterance& u : utterances) {
    if (u.labels.empty()) throw DataError("evaluate_scored: utterance '" + u.id + "' has no frames");
    if (u.labels.size() != u.pvad_scores.size() || u.labels.size() != u.vad_scores.size())
      throw ShapeError("evaluate_scored: utterance '" + u.id +
                       "' labels/scores length mismatch");
  }

  MetricsReport report;

  // fEER VAD: speech vs non-speech over zero-enrolled utterances.
  {
    std::vector<double> scores;
    std::vector<std::uint8_t> labels;
    for (const ScoredUtterance& u : utterances) {
      if (!u.zero_enrolled) continue;
      for (std::size_t t = 0; t < u.labels.size(); ++t) {
        scores.push_back(u.vad_scores[t]);
        labels.push_back(u.labels[t] != corpus::FrameLabel::ns ? 1 : 0);
      }
    }
    if (scores.empty()) {
      report.feer_vad = detail::unavailable_stratum("no zero-enrolled utterances");
    } else {
      try {
        report.det_feer_vad = det_curve(scores, labels);
        report.feer_vad = detail::stratum_from_curve(report.det_feer_vad);
      } catch (const DataError& e) {
        report.feer_vad = detail::unavailable_stratum(e.what());
      }
    }
  }

  if (options.vad_only) {
    report.feer_pvad = detail::unavailable_stratum("not a personalized model");
    report.ueer = detail::unavailable_stratum("not a personalized model");
    report.decision_available = false;
    report.decision_note = "not a personalized model";
    return report;
  }

  // fEER PVAD: ts vs rest over enrolled utterances.
  {
    std::vector<double> scores;
    std::vector<std::uint8_t> labels;
    for (const ScoredUtterance& u : utterances) {
      if (u.zero_enrolled) continue;
      for (std::size_t t = 0; t < u.labels.size(); ++t) {
        scores.push_back(u.pvad_scores[t]);
        labels.push_back(u.labels[t] == corpus::FrameLabel::ts ? 1 : 0);
      }
    }
    if (scores.empty()) {
      report.feer_pvad = detail::unavailable_stratum("no enrolled utterances");
    } else {
      try {
        report.det_feer_pvad = det_curve(scores, labels);
        report.feer_pvad = detail::stratum_from_curve(report.det_feer_pvad);
      } catch (const DataError& e) {
        report.feer_pvad = detail::unavailable_stratum(e.what());
      }
    }
  }

  // uEER: enrolled utterances containing target speech vs impostor utterances.
  std::vector<const ScoredUtterance*> target_utts;
  {
    std::vector<double> scores;
    std::vector<std::uint8_t> labels;
    for (const ScoredUtterance& u : utterances) {
      if (u.zero_enrolled) continue;
      const bool has_ts =
          std::find(u.labels.begin(), u.labels.end(), corpus::FrameLabel::ts) !=
          u.labels.end();
      if (u.impostor) {
        scores.push_back(utterance_score(u.pvad_scores));
        labels.push_back(0);
      } else if (has_ts) {
        target_utts.push_back(&u);
        scores.push_back(utterance_score(u.pvad_scores));
        labels.push_back(1);
      }
    }
    if (scores.empty()) {
      report.ueer = detail::unavailable_stratum("no enrolled utterances");
    } else {
      try {
        report.det_ueer = det_curve(scores, labels);
        report.ueer = detail::stratum_from_curve(report.det_ueer);
      } catch (const DataError& e) {
        report.ueer = detail::unavailable_stratum(e.what());
      }
    }
  }

  if (!report.ueer.available) {
    report.decision_available = false;
    report.decision_note = "no uEER operating point: " + report.ueer.note;
    return report;
  }
  if (target_utts.empty()) {
    report.decision_available = false;
    report.decision_note = "no enrolled target utterances";
    return report;
  }

  // Latency / accuracy at the designated uEER operating point.
  report.operating_threshold = report.ueer.threshold;
  report.decision_available = true;
  std::map<std::string, UserReport> users;
  std::vector<double> all_latencies;
  std::vector<std::vector<double>> duration_scores;
  std::vector<std::size_t> duration_onsets;
  for (const ScoredUtterance* u : target_utts) {
    UserReport& ur = users[u->user_id];
    ur.user_id = u->user_id;
    ur.n_target_utterances += 1;
    const LatencyResult lat =
        detection_latency(u->pvad_scores, u->labels, report.operating_threshold);
    if (lat.detected) {
      ur.detected += 1;
      ur.latencies_ms.push_back(lat.latency_ms);
      all_latencies.push_back(lat.latency_ms);
    } else {
      ur.missed += 1;
    }
    std::size_t onset = 0;
    while (u->labels[onset] != corpus::FrameLabel::ts) ++onset;
    duration_scores.push_back(u->pvad_scores);
    duration_onsets.push_back(onset);
  }
  for (auto& [id, ur] : users) {
    ur.detection_accuracy =
        static_cast<double>(ur.detected) / static_cast<double>(ur.n_target_utterances);
    if (!ur.latencies_ms.empty()) {
      ur.has_latency = true;
      ur.median_latency_ms = median(ur.latencies_ms);
    }
    report.total_target_utterances += ur.n_target_utterances;
    report.total_detected += ur.detected;
    report.total_missed += ur.missed;
    report.users.push_back(ur);
  }
  report.overall_detection_accuracy = static_cast<double>(report.total_detected) /
                                      static_cast<double>(report.total_target_utterances);
  std::vector<double> user_accuracies;
  for (const UserReport& ur : report.users) user_accuracies.push_back(ur.detection_accuracy);
  report.median_user_accuracy = median(user_accuracies);
  if (!all_latencies.empty()) {
    report.latency_available = true;
    report.median_latency_ms = median(all_latencies);
  }
  if (!options.durations_ms.empty())
    report.accuracy_by_duration = accuracy_vs_duration(
        duration_scores, duration_onsets, options.durations_ms, report.operating_threshold);
  return report;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

inline constexpr const char* kReportSchema = "pvad.metrics.report";
inline constexpr int kReportVersion = 1;

// At most this many [fpr, fnr] pairs are embedded per DET curve; plots never
// need finer resolution and reports stay small.
inline constexpr int kDetPlotPoints = 512;

namespace detail {

// Collapses duplicate rate pairs, then keeps first/last plus evenly spaced
// interior points. Thresholds are dropped so the JSON holds no infinities.
inline nlohmann::ordered_json det_json(const DetCurve& det) {
  std::vector<std::pair<double, double>> pts;
  pts.reserve(det.points.size());
  for (const DetPoint& p : det.points) {
    if (pts.empty() || pts.back().first != p.fpr || pts.back().second != p.fnr)
      pts.emplace_back(p.fpr, p.fnr);
  }
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  const std::size_t n = pts.size();
  if (n <= static_cast<std::size_t>(kDetPlotPoints)) {
    for (const auto& [fpr, fnr] : pts) arr.push_back({fpr, fnr});
    return arr;
  }
  for (int i = 0; i < kDetPlotPoints; ++i) {
    const std::size_t at = (i * (n - 1)) / (kDetPlotPoints - 1);
    arr.push_back({pts[at].first, pts[at].second});
  }
  return arr;
}

inline nlohmann::ordered_json stratum_json(const StratumEer& s, const DetCurve& det) {
  nlohmann::ordered_json j;
  j["available"] = s.available;
  if (s.available) {
    j["eer"] = s.eer;
    j["threshold"] = s.threshold;
    j["n_pos"] = s.n_pos;
    j["n_neg"] = s.n_neg;
    j["det"] = det_json(det);
  } else {
    j["note"] = s.note;
  }
  return j;
}

inline std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace detail

inline nlohmann::ordered_json report_to_json(const MetricsReport& r) {
  using json = nlohmann::ordered_json;
  json j;
  j["schema"] = kReportSchema;
  j["version"] = kReportVersion;
  j["variant"] = r.variant;
  j["toolkit_version"] = r.toolkit_version;
  j["corpus_seed"] = r.corpus_seed;
  j["checkpoint_hash"] = r.checkpoint_hash;
  j["frame_eer_pvad"] = detail::stratum_json(r.feer_pvad, r.det_feer_pvad);
  j["frame_eer_vad"] = detail::stratum_json(r.feer_vad, r.det_feer_vad);
  j["utterance_eer"] = detail::stratum_json(r.ueer, r.det_ueer);

  json decision;
  decision["available"] = r.decision_available;
  if (r.decision_available) {
    decision["operating_threshold"] = r.operating_threshold;
  } else {
    decision["note"] = r.decision_note;
  }
  j["operating_point"] = std::move(decision);

  json latency;
  latency["available"] = r.latency_available;
  if (r.latency_available) latency["median_ms"] = r.median_latency_ms;
  latency["n_detected"] = r.total_detected;
  latency["n_missed"] = r.total_missed;
  j["detection_latency"] = std::move(latency);

  json accuracy;
  accuracy["available"] = r.decision_available;
  if (r.decision_available) {
    accuracy["overall"] = r.overall_detection_accuracy;
    accuracy["median_user"] = r.median_user_accuracy;
    accuracy["n_target_utterances"] = r.total_target_utterances;
  }
  j["detection_accuracy"] = std::move(accuracy);

  json durations = json::array();
  for (const DurationAccuracy& d : r.accuracy_by_duration) {
    json row;
    row["duration_ms"] = d.duration_ms;
    row["accuracy"] = d.accuracy;
    durations.push_back(std::move(row));
  }
  j["accuracy_vs_duration"] = std::move(durations);

  json users = json::array();
  for (const UserReport& u : r.users) {
    json row;
    row["user_id"] = u.user_id;
    row["n_target_utterances"] = u.n_target_utterances;
    row["detected"] = u.detected;
    row["missed"] = u.missed;
    row["detection_accuracy"] = u.detection_accuracy;
    if (u.has_latency) {
      row["median_latency_ms"] = u.median_latency_ms;
    } else {
      row["median_latency_ms"] = nullptr;
    }
    row["latencies_ms"] = u.latencies_ms;
    users.push_back(std::move(row));
  }
  j["users"] = std::move(users);
  return j;
}

inline void write_report_json(const MetricsReport& r, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("write_report_json: cannot open '" + path + "' for writing");
  out << report_to_json(r).dump(2) << "\n";
  if (!out) throw DataError("write_report_json: write failed for '" + path + "'");
}

inline void write_report_csv(const MetricsReport& r, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("write_report_csv: cannot open '" + path + "' for writing");
  out << "user_id,n_target_utterances,detected,missed,detection_accuracy,median_latency_ms\n";
  for (const UserReport& u : r.users) {
    out << u.user_id << "," << u.n_target_utterances << "," << u.detected << "," << u.missed
        << "," << detail::format_double(u.detection_accuracy) << ",";
    if (u.has_latency) out << detail::format_double(u.median_latency_ms);
    out << "\n";
  }
  if (!out) throw DataError("write_report_csv: write failed for '" + path + "'");
}

inline void write_det_csv(const DetCurve& curve, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("write_det_csv: cannot open '" + path + "' for writing");
  out << "threshold,fpr,fnr\n";
  for (const DetPoint& p : curve.points)
    out << detail::format_double(p.threshold) << "," << detail::format_double(p.fpr) << ","
        << detail::format_double(p.fnr) << "\n";
  if (!out) throw DataError("write_det_csv: write failed for '" + path + "'");
}

}  // namespace pvad::metrics
