#pragma once

// Per-trial eye-movement measures and per-condition summaries.

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "ocugaze/error.hpp"
#include "ocugaze/scene.hpp"
#include "ocugaze/session.hpp"

namespace ocugaze {

struct DetectionParams {
  double dispersion_px = 25;
  double min_duration_ms = 100;
  // Neighbouring fixations closer than both limits are merged; a sample on
  // the tail of a saccade can otherwise split one dwell in two. 0 disables.
  double merge_gap_ms = 75;
  double merge_distance_px = 12.5;
};

struct Fixation {
  double onset = 0;
  double offset = 0;
  Point centroid;
  double dispersion = 0;
  int sample_count = 0;
  std::array<double, 4> box{};  // x0, x1, y0, y1

  double duration() const { return offset - onset; }
};

/// Dispersion-threshold (I-DT) detection. Dispersion of a window is
/// (max x - min x) + (max y - min y). Invalid samples are skipped. Windows
/// are then merged per `merge_gap_ms` / `merge_distance_px`, so a merged
/// fixation may exceed the dispersion threshold.
inline std::vector<Fixation> detect_fixations(std::span<const GazeSample> samples,
                                              const DetectionParams& p = {}) {
  std::vector<GazeSample> v;
  v.reserve(samples.size());
  for (const auto& s : samples) {
    if (s.valid) v.push_back(s);
  }
  std::vector<Fixation> out;
  const std::size_t n = v.size();
  if (n < 2) return out;

  struct Box {
    double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
    void add(const GazeSample& s) {
      x0 = std::min(x0, s.x); x1 = std::max(x1, s.x);
      y0 = std::min(y0, s.y); y1 = std::max(y1, s.y);
    }
    double dispersion() const { return (x1 - x0) + (y1 - y0); }
  };

  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && v[j].t - v[i].t < p.min_duration_ms) ++j;
    if (j == n) break;
    Box box;
    for (std::size_t k = i; k <= j; ++k) box.add(v[k]);
    if (box.dispersion() > p.dispersion_px) {
      ++i;
      continue;
    }
    while (j + 1 < n) {
      Box grown = box;
      grown.add(v[j + 1]);
      if (grown.dispersion() > p.dispersion_px) break;
      box = grown;
      ++j;
    }
    Fixation f;
    f.onset = v[i].t;
    f.offset = v[j].t;
    f.dispersion = box.dispersion();
    f.sample_count = static_cast<int>(j - i + 1);
    for (std::size_t k = i; k <= j; ++k) {
      f.centroid.x += v[k].x;
      f.centroid.y += v[k].y;
    }
    f.centroid.x /= f.sample_count;
    f.centroid.y /= f.sample_count;
    f.box = {box.x0, box.x1, box.y0, box.y1};
    out.push_back(f);
    i = j + 1;
  }
  if (p.merge_gap_ms <= 0 || out.size() < 2) return out;

  std::vector<Fixation> merged{out.front()};
  for (std::size_t k = 1; k < out.size(); ++k) {
    Fixation& a = merged.back();
    const Fixation& b = out[k];
    const double gap = b.onset - a.offset;
    const double dist = std::hypot(b.centroid.x - a.centroid.x, b.centroid.y - a.centroid.y);
    if (gap > p.merge_gap_ms || dist > p.merge_distance_px) {
      merged.push_back(b);
      continue;
    }
    const double na = a.sample_count, nb = b.sample_count;
    a.centroid = {(a.centroid.x * na + b.centroid.x * nb) / (na + nb), (a.centroid.y * na + b.centroid.y * nb) / (na + nb)};
    a.sample_count += b.sample_count;
    a.offset = b.offset;
    a.box = {std::min(a.box[0], b.box[0]), std::max(a.box[1], b.box[1]), std::min(a.box[2], b.box[2]),
             std::max(a.box[3], b.box[3])};
    a.dispersion = (a.box[1] - a.box[0]) + (a.box[3] - a.box[2]);
  }
  return merged;
}

enum class AoiLabel { Center, TargetSide, BackgroundSide, OffGrid };

inline std::string_view to_string(AoiLabel l) {
  switch (l) {
    case AoiLabel::Center: return "center";
    case AoiLabel::TargetSide: return "target_side";
    case AoiLabel::BackgroundSide: return "background_side";
    case AoiLabel::OffGrid: return "off_grid";
  }
  return "?";
}

inline constexpr double kCenterBandPx = 10.0;

inline AoiLabel label_fixation(const Fixation& f, const SceneSpec& scene) {
  const auto& g = scene.geometry;
  if (std::abs(f.centroid.x - g.cross_x()) <= kCenterBandPx) return AoiLabel::Center;
  if (!g.outline_rect().contains(f.centroid)) return AoiLabel::OffGrid;
  return g.side_of(f.centroid.x) == scene.target_side() ? AoiLabel::TargetSide
                                                         : AoiLabel::BackgroundSide;
}

/// RMS distance of fixation centroids from their mean position.
inline double scanpath_width(std::span<const Fixation> fixations) {
  if (fixations.empty()) throw Error(ErrorKind::UndefinedMetric, "scanpath width of no fixations");
  double mx = 0, my = 0;
  for (const auto& f : fixations) {
    mx += f.centroid.x;
    my += f.centroid.y;
  }
  mx /= fixations.size();
  my /= fixations.size();
  double ss = 0;
  for (const auto& f : fixations) {
    ss += (f.centroid.x - mx) * (f.centroid.x - mx) + (f.centroid.y - my) * (f.centroid.y - my);
  }
  return std::sqrt(ss / fixations.size());
}

struct TrialMetrics {
  int trial_id = 0;
  Condition condition = Condition::BASE;
  double rt_ms = 0;
  bool correct = false;
  Side response_side = Side::Left;
  Side target_side = Side::Left;
  bool timed_out = false;
  // Gaze measures are absent for sessions recorded without an eye tracker.
  std::optional<int> fixation_count_grid;
  std::optional<AoiLabel> first_fixation_label;
  std::optional<int> fixations_target_side;
  std::optional<int> fixations_background_side;
  std::optional<double> fixation_side_prob;  // target / (target + background)
  std::optional<double> scanpath_width_px;
  std::optional<double> sampling_ratio;
  bool excluded = false;

  // 1 when the first off-centre fixation went to the target side, 0 for the background side.
  std::optional<double> first_fixation_target() const {
    if (first_fixation_label == AoiLabel::TargetSide) return 1.0;
    if (first_fixation_label == AoiLabel::BackgroundSide) return 0.0;
    return std::nullopt;
  }
};

inline TrialMetrics compute_trial_metrics(const TrialRecord& trial, const SceneSpec& scene,
                                          const DetectionParams& detection = {},
                                          bool gaze_recorded = true) {
  const auto on = trial.event_time(events::kStimulusOn);
  const auto key = trial.event_time(events::kKeypress);
  if (!on || !key) {
    throw Error(ErrorKind::MalformedTrial,
                fmt::format("trial {} lacks a stimulus_on or keypress event", trial.trial_id));
  }
  if (*key < *on) {
    throw Error(ErrorKind::MalformedTrial, fmt::format("trial {}: keypress before stimulus_on", trial.trial_id));
  }
  std::optional<Side> response = trial.response_side;
  if (!response) {
    for (const auto& e : trial.events) {
      if (e.type == events::kKeypress && e.side) response = e.side;
    }
  }
  if (!response) {
    throw Error(ErrorKind::MalformedTrial, fmt::format("trial {} has no response side", trial.trial_id));
  }
  if (trial.condition != scene.condition) {
    throw Error(ErrorKind::Mismatch, fmt::format("trial {}: condition differs from its scene", trial.trial_id));
  }

  TrialMetrics m;
  m.trial_id = trial.trial_id;
  m.condition = trial.condition;
  m.rt_ms = *key - *on;
  m.response_side = *response;
  m.target_side = scene.target_side();
  m.correct = m.response_side == m.target_side;
  m.timed_out = trial.timed_out;
  if (!gaze_recorded) return m;

  m.sampling_ratio = sampling_ratio(trial);
  m.excluded = *m.sampling_ratio < kMinSamplingRatio;

  std::vector<GazeSample> window;
  for (const auto& s : trial.samples) {
    if (s.t >= *on && s.t <= *key) window.push_back(s);
  }
  const auto fixations = detect_fixations(window, detection);
  int grid = 0, target = 0, background = 0;
  for (const auto& f : fixations) {
    const AoiLabel l = label_fixation(f, scene);
    grid += l != AoiLabel::OffGrid;
    target += l == AoiLabel::TargetSide;
    background += l == AoiLabel::BackgroundSide;
    if (!m.first_fixation_label && l != AoiLabel::Center) m.first_fixation_label = l;
  }
  m.fixation_count_grid = grid;
  m.fixations_target_side = target;
  m.fixations_background_side = background;
  if (target + background > 0) m.fixation_side_prob = double(target) / (target + background);
  if (!fixations.empty()) m.scanpath_width_px = scanpath_width(fixations);
  return m;
}

struct ConditionSummary {
  Condition condition = Condition::BASE;
  int n_trials = 0;
  int n_excluded = 0;
  std::optional<double> mean_rt_ms;
  std::optional<double> median_rt_ms;
  std::optional<double> accuracy_pct;
  std::optional<double> mean_fixation_count;
  std::optional<double> p_first_target;
  std::optional<double> p_first_background;
  std::optional<double> mean_side_prob_target;
  std::optional<double> mean_side_prob_background;
  std::optional<double> mean_scanpath_width_px;

  int n_used() const { return n_trials - n_excluded; }
};

namespace detail {

inline std::optional<double> mean_of(const std::vector<double>& v) {
  if (v.empty()) return std::nullopt;
  double s = 0;
  for (double x : v) s += x;
  return s / v.size();
}

inline std::optional<double> median_of(std::vector<double> v) {
  if (v.empty()) return std::nullopt;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace detail

/// One summary per condition, in canonical condition order. Conditions with no
/// retained trials appear with every measure missing.
inline std::vector<ConditionSummary> aggregate_conditions(std::span<const TrialMetrics> trials) {
  std::vector<ConditionSummary> out;
  for (Condition c : kAllConditions) {
    ConditionSummary s;
    s.condition = c;
    std::vector<double> rt, acc, fixn, first, side, width;
    for (const auto& t : trials) {
      if (t.condition != c) continue;
      ++s.n_trials;
      if (t.excluded) {
        ++s.n_excluded;
        continue;
      }
      rt.push_back(t.rt_ms);
      acc.push_back(t.correct ? 100.0 : 0.0);
      if (t.fixation_count_grid) fixn.push_back(*t.fixation_count_grid);
      if (auto f = t.first_fixation_target()) first.push_back(*f);
      if (t.fixation_side_prob) side.push_back(*t.fixation_side_prob);
      if (t.scanpath_width_px) width.push_back(*t.scanpath_width_px);
    }
    s.mean_rt_ms = detail::mean_of(rt);
    s.median_rt_ms = detail::median_of(rt);
    s.accuracy_pct = detail::mean_of(acc);
    s.mean_fixation_count = detail::mean_of(fixn);
    s.p_first_target = detail::mean_of(first);
    if (s.p_first_target) s.p_first_background = 1.0 - *s.p_first_target;
    s.mean_side_prob_target = detail::mean_of(side);
    if (s.mean_side_prob_target) s.mean_side_prob_background = 1.0 - *s.mean_side_prob_target;
    s.mean_scanpath_width_px = detail::mean_of(width);
    out.push_back(s);
  }
  return out;
}

// ---- CSV ----

inline constexpr const char* kMetricsCsvHeader =
    "trial_id,condition,rt_ms,correct,response_side,target_side,timed_out,fixation_count_grid,"
    "first_fixation_label,fixations_target_side,fixations_background_side,fixation_side_prob,"
    "scanpath_width_px,sampling_ratio,excluded";

inline constexpr const char* kSummaryCsvHeader =
    "condition,n_trials,n_excluded,mean_rt_ms,median_rt_ms,accuracy_pct,mean_fixation_count,"
    "p_first_target,p_first_background,mean_side_prob_target,mean_side_prob_background,"
    "mean_scanpath_width_px";

namespace detail {

inline std::string na_or(const std::optional<double>& v, int decimals) {
  return v ? fmt::format("{:.{}f}", *v, decimals) : std::string("NA");
}
inline std::string na_or(const std::optional<int>& v) {
  return v ? std::to_string(*v) : std::string("NA");
}

}  // namespace detail

inline std::string metrics_csv(std::span<const TrialMetrics> trials) {
  std::string out = std::string(kMetricsCsvHeader) + "\n";
  for (const auto& t : trials) {
    out += fmt::format("{},{},{:.3f},{},{},{},{},{},{},{},{},{},{},{},{}\n", t.trial_id,
                       to_string(t.condition), t.rt_ms, t.correct ? 1 : 0, to_string(t.response_side),
                       to_string(t.target_side), t.timed_out ? 1 : 0, detail::na_or(t.fixation_count_grid),
                       t.first_fixation_label ? std::string(to_string(*t.first_fixation_label)) : "NA",
                       detail::na_or(t.fixations_target_side), detail::na_or(t.fixations_background_side),
                       detail::na_or(t.fixation_side_prob, 6), detail::na_or(t.scanpath_width_px, 4),
                       detail::na_or(t.sampling_ratio, 6), t.excluded ? 1 : 0);
  }
  return out;
}

inline std::string summary_csv(std::span<const ConditionSummary> rows) {
  std::string out = std::string(kSummaryCsvHeader) + "\n";
  for (const auto& s : rows) {
    out += fmt::format("{},{},{},{},{},{},{},{},{},{},{},{}\n", to_string(s.condition), s.n_trials,
                       s.n_excluded, detail::na_or(s.mean_rt_ms, 3), detail::na_or(s.median_rt_ms, 3),
                       detail::na_or(s.accuracy_pct, 4), detail::na_or(s.mean_fixation_count, 4),
                       detail::na_or(s.p_first_target, 6), detail::na_or(s.p_first_background, 6),
                       detail::na_or(s.mean_side_prob_target, 6), detail::na_or(s.mean_side_prob_background, 6),
                       detail::na_or(s.mean_scanpath_width_px, 4));
  }
  return out;
}

}  // namespace ocugaze
