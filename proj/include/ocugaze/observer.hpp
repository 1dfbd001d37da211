#pragma once

// Stochastic synthetic observer. Turns a saliency map into a 200 Hz gaze
// stream plus a keypress, following the trial protocol:
//
//   fixation cross (1170 ms) -> stimulus on -> search -> keypress
//   -> target flicker feedback (375 ms) -> free viewing (1000 ms)
//
// Search is a sequence of saccades to items drawn by softmax over saliency,
// with inhibition of return around every visited location. None of the
// parameters are fitted to human data.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "ocugaze/error.hpp"
#include "ocugaze/parallel.hpp"
#include "ocugaze/rng.hpp"
#include "ocugaze/saliency.hpp"
#include "ocugaze/scene.hpp"
#include "ocugaze/session.hpp"

namespace ocugaze {

struct ObserverParams {
  double softmax_temp = 0.05;  // saliency units; 0 selects greedily
  double ior_radius = 48;      // px
  double ior_strength = 0.9;
  int ior_memory = 5;  // most recent fixations that stay inhibited
  double fix_dur_mu = 5.42;  // lognormal, ms (median ~226 ms)
  double fix_dur_sigma = 0.35;
  double min_fix_ms = 120;
  double saccade_speed = 2.0;  // px/ms
  double landing_noise_sd = 12;
  double gaze_jitter_sd = 1.5;
  double recog_prob_target = 0.95;
  double confuse_prob_distractor = 0.25;
  double sample_rate = kSampleRateHz;
  double max_trial_ms = 15000;
  double fixation_period_ms = 1170;
  double feedback_ms = 375;
  double free_view_ms = 1000;
};

inline void validate(const ObserverParams& p) {
  auto fail = [](const std::string& m) { throw Error(ErrorKind::Config, "observer: " + m); };
  auto prob = [&](double v, const char* name) {
    if (!(v >= 0 && v <= 1)) fail(fmt::format("{} must lie in [0, 1]", name));
  };
  prob(p.ior_strength, "ior_strength");
  prob(p.recog_prob_target, "recog_prob_target");
  prob(p.confuse_prob_distractor, "confuse_prob_distractor");
  if (p.sample_rate != kSampleRateHz) fail("sample_rate is fixed at 200 Hz");
  if (!(p.softmax_temp >= 0)) fail("softmax_temp must be non-negative");
  if (!(p.ior_radius >= 0)) fail("ior_radius must be non-negative");
  if (p.ior_memory < 1) fail("ior_memory must be at least 1");
  if (!(p.fix_dur_sigma >= 0)) fail("fix_dur_sigma must be non-negative");
  if (!(p.min_fix_ms >= 0)) fail("min_fix_ms must be non-negative");
  if (!(p.saccade_speed > 0)) fail("saccade_speed must be positive");
  if (!(p.landing_noise_sd >= 0) || !(p.gaze_jitter_sd >= 0)) fail("noise must be non-negative");
  if (!(p.max_trial_ms > 0)) fail("max_trial_ms must be positive");
  if (!(p.fixation_period_ms >= 0 && p.feedback_ms >= 0 && p.free_view_ms >= 0)) {
    fail("protocol intervals must be non-negative");
  }
}

struct SimFixation {
  std::optional<Cell> cell;  // empty for the initial cross fixation
  Point position;
  double onset = 0;
  double offset = 0;
};

struct SimTrialResult {
  std::vector<GazeSample> samples;
  std::vector<TrialEvent> events;
  std::vector<SimFixation> fixations;
  Side response_side = Side::Left;
  double rt_ms = 0;
  bool timed_out = false;
  int clamped_samples = 0;
};

namespace detail {

struct GazeSegment {
  double t0, t1;
  Point from, to;  // equal for fixations
  bool fixation;
};

inline double draw_fixation_ms(Rng& rng, const ObserverParams& p) {
  const double d = std::lognormal_distribution<double>(p.fix_dur_mu, p.fix_dur_sigma)(rng);
  return std::round(std::max(d, p.min_fix_ms));
}

inline std::size_t choose_item(Rng& rng, const std::vector<double>& value, double temp) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < value.size(); ++i) {
    if (value[i] > value[best]) best = i;
  }
  if (temp <= 0) return best;
  std::vector<double> cum(value.size());
  double acc = 0;
  for (std::size_t i = 0; i < value.size(); ++i) {
    acc += std::exp((value[i] - value[best]) / temp);
    cum[i] = acc;
  }
  const double u = uniform01(rng) * acc;
  return static_cast<std::size_t>(std::upper_bound(cum.begin(), cum.end(), u) - cum.begin());
}

inline double quantize(double v) { return std::round(v * 100.0) / 100.0; }

}  // namespace detail

inline SimTrialResult simulate_trial(const SceneSpec& scene, const SaliencyMap& map,
                                     const ObserverParams& params, std::uint64_t seed) {
  validate(params);
  const auto& g = scene.geometry;
  if (map.rows != g.rows || map.cols != g.cols || map.saliency.size() != g.cell_count()) {
    throw Error(ErrorKind::Mismatch, "saliency map does not match the scene grid");
  }
  Rng rng = make_rng(seed, 0x0B5E);
  std::normal_distribution<double> unit(0.0, 1.0);

  SimTrialResult res;
  std::vector<detail::GazeSegment> track;
  const double stim_on = params.fixation_period_ms;
  const double deadline = stim_on + params.max_trial_ms;

  // The cross fixation runs from the start of the fixation period into the search.
  Point here = g.cross();
  double t = stim_on + detail::draw_fixation_ms(rng, params);
  track.push_back({0, t, here, here, true});
  res.fixations.push_back({std::nullopt, here, stim_on, t});

  std::vector<Point> visited{here};
  std::vector<double> value(map.saliency.size());
  std::optional<Side> response;

  while (!response) {
    for (int r = 0; r < g.rows; ++r) {
      for (int c = 0; c < g.cols; ++c) {
        const Point p = g.cell_center({r, c});
        bool inhibited = false;
        const std::size_t first = visited.size() > static_cast<std::size_t>(params.ior_memory)
                                      ? visited.size() - static_cast<std::size_t>(params.ior_memory)
                                      : 0;
        for (std::size_t k = first; k < visited.size(); ++k) {
          const Point& v = visited[k];
          if (std::hypot(p.x - v.x, p.y - v.y) <= params.ior_radius) {
            inhibited = true;
            break;
          }
        }
        const std::size_t i = g.index({r, c});
        value[i] = map.saliency[i] * (inhibited ? 1.0 - params.ior_strength : 1.0);
      }
    }
    const std::size_t pick = detail::choose_item(rng, value, params.softmax_temp);
    const Cell cell{static_cast<int>(pick) / g.cols, static_cast<int>(pick) % g.cols};
    const Point aim = g.cell_center(cell);
    const Point land{aim.x + params.landing_noise_sd * unit(rng), aim.y + params.landing_noise_sd * unit(rng)};

    const double sacc = std::ceil(std::hypot(land.x - here.x, land.y - here.y) / params.saccade_speed);
    if (t + sacc >= deadline) break;
    track.push_back({t, t + sacc, here, land, false});
    t += sacc;
    here = land;

    const double dur = detail::draw_fixation_ms(rng, params);
    if (t + dur >= deadline) {
      track.push_back({t, deadline, here, here, true});
      res.fixations.push_back({cell, here, t, deadline});
      t = deadline;
      break;
    }
    track.push_back({t, t + dur, here, here, true});
    res.fixations.push_back({cell, here, t, t + dur});
    t += dur;
    visited.push_back(here);

    if (cell == scene.target_cell) {
      if (uniform01(rng) < params.recog_prob_target) response = g.side_of(scene.target_cell);
    } else if (scene.distractor_cell && cell == *scene.distractor_cell) {
      if (uniform01(rng) < params.confuse_prob_distractor) response = g.side_of(cell);
    }
  }

  if (!response) {
    res.timed_out = true;
    response = coin(rng) ? Side::Left : Side::Right;
    t = deadline;
  }
  const double keypress = t;
  res.response_side = *response;
  res.rt_ms = keypress - stim_on;
  const double fb_off = keypress + params.feedback_ms;
  const double end = fb_off + params.free_view_ms;
  track.push_back({keypress, end, here, here, true});

  res.events = {{events::kFixationOn, 0, std::nullopt},
                {events::kStimulusOn, stim_on, std::nullopt},
                {events::kKeypress, keypress, *response},
                {events::kFeedbackOn, keypress, std::nullopt},
                {events::kFeedbackOff, fb_off, std::nullopt},
                {events::kTrialEnd, end, std::nullopt}};

  const double dt = 1000.0 / params.sample_rate;
  const auto n = static_cast<std::size_t>(std::floor(end / dt + 1e-9)) + 1;
  res.samples.reserve(n);
  std::size_t seg = 0;
  for (std::size_t k = 0; k < n; ++k) {
    const double ts = static_cast<double>(k) * dt;
    while (seg + 1 < track.size() && ts >= track[seg].t1) ++seg;
    const auto& s = track[seg];
    double x, y;
    if (s.fixation) {
      x = s.from.x + params.gaze_jitter_sd * unit(rng);
      y = s.from.y + params.gaze_jitter_sd * unit(rng);
    } else {
      const double f = s.t1 > s.t0 ? std::clamp((ts - s.t0) / (s.t1 - s.t0), 0.0, 1.0) : 1.0;
      x = s.from.x + f * (s.to.x - s.from.x);
      y = s.from.y + f * (s.to.y - s.from.y);
    }
    const double cx = std::clamp(x, 0.0, g.canvas_w - 1.0);
    const double cy = std::clamp(y, 0.0, g.canvas_h - 1.0);
    res.clamped_samples += (cx != x || cy != y);
    res.samples.push_back({ts, detail::quantize(cx), detail::quantize(cy), true});
  }
  return res;
}

struct SimulationSettings {
  GridGeometry geometry;
  SaliencyParams saliency;
  ObserverParams observer;
};

struct SimulatedSession {
  GazeSession session;
  std::vector<SceneSpec> scenes;  // aligned with session.trials
};

inline std::string scene_ref(const SceneSpec& s) { return "scenes/" + scene_id(s) + ".json"; }

/// Interleaved block of `n_per_condition` trials per condition. Output order
/// depends only on the seed, never on `jobs`.
inline SimulatedSession simulate_session(const std::vector<Condition>& conditions, int n_per_condition,
                                         const SimulationSettings& settings, std::uint64_t seed,
                                         unsigned jobs = 1) {
  if (n_per_condition < 1) throw Error(ErrorKind::Config, "n_per_condition must be at least 1");
  if (conditions.empty()) throw Error(ErrorKind::Config, "no conditions to simulate");
  validate(settings.geometry);
  validate(settings.observer);
  validate(settings.saliency.orientation);
  validate(settings.saliency.ocularity);

  std::vector<Condition> order;
  for (Condition c : conditions) order.insert(order.end(), n_per_condition, c);
  Rng shuffle_rng = make_rng(seed, 0x0DE5);
  std::shuffle(order.begin(), order.end(), shuffle_rng);

  SimulatedSession out;
  out.scenes.resize(order.size());
  out.session.trials.resize(order.size());

  auto run_one = [&](std::size_t i) {
    const std::uint64_t trial_seed = mix_seed(seed, 1000 + i);
    SceneSpec scene = make_scene(settings.geometry, order[i], trial_seed);
    const SaliencyMap map = compute_saliency(scene, settings.saliency);
    SimTrialResult sim = simulate_trial(scene, map, settings.observer, mix_seed(trial_seed, 7));
    TrialRecord& t = out.session.trials[i];
    t.trial_id = static_cast<int>(i);
    t.condition = order[i];
    t.scene = scene_ref(scene);
    t.seed = trial_seed;
    t.events = std::move(sim.events);
    t.samples = std::move(sim.samples);
    t.response_side = sim.response_side;
    t.rt_ms = sim.rt_ms;
    t.timed_out = sim.timed_out;
    t.clamped_samples = sim.clamped_samples;
    out.scenes[i] = std::move(scene);
  };

  parallel_for(order.size(), jobs, run_one);

  auto& h = out.session.header;
  h.session_id = fmt::format("sim-{:016x}", seed);
  h.source = SessionSource::Synthetic;
  h.canvas_w = settings.geometry.canvas_w;
  h.canvas_h = settings.geometry.canvas_h;
  h.label = "synthetic-observer";
  return out;
}

/// Marks round(drop_fraction * n) randomly chosen samples invalid in each
/// selected trial (all trials when `only_trial` is empty).
inline GazeSession degrade_sampling(GazeSession session, double drop_fraction, std::uint64_t seed,
                                    std::optional<int> only_trial = std::nullopt) {
  if (!(drop_fraction >= 0 && drop_fraction <= 1)) {
    throw Error(ErrorKind::Domain, "drop_fraction must lie in [0, 1]");
  }
  for (auto& t : session.trials) {
    if (only_trial && t.trial_id != *only_trial) continue;
    const auto n = t.samples.size();
    const auto k = static_cast<std::size_t>(std::llround(drop_fraction * static_cast<double>(n)));
    if (k == 0) continue;
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    Rng rng = make_rng(seed, static_cast<std::uint64_t>(t.trial_id));
    std::shuffle(idx.begin(), idx.end(), rng);
    for (std::size_t i = 0; i < k; ++i) t.samples[idx[i]].valid = false;
  }
  return session;
}

}  // namespace ocugaze
