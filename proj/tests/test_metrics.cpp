#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "ocugaze/metrics.hpp"
#include "ocugaze/observer.hpp"
#include "support.hpp"

using namespace ocugaze;
using testing_support::append_dwell;
using testing_support::append_sweep;

namespace {

Fixation at(double x, double y) {
  Fixation f;
  f.centroid = {x, y};
  return f;
}

}  // namespace

TEST(Idt, SingleDwell) {
  std::vector<GazeSample> s;
  std::mt19937_64 rng(1);
  append_dwell(s, 0, 300, 400, 300, 0, rng);
  const auto f = detect_fixations(s);
  ASSERT_EQ(f.size(), 1u);
  EXPECT_EQ(f[0].centroid.x, 400);
  EXPECT_EQ(f[0].centroid.y, 300);
  EXPECT_EQ(f[0].sample_count, 60);
}

TEST(Idt, TwoClustersJoinedBySweep) {
  std::vector<GazeSample> s;
  std::mt19937_64 rng(2);
  append_dwell(s, 0, 300, 300, 300, 1.0, rng);
  append_sweep(s, 300, 340, {300, 300}, {500, 300});
  append_dwell(s, 340, 640, 500, 300, 1.0, rng);
  const auto f = detect_fixations(s);
  ASSERT_EQ(f.size(), 2u);
  EXPECT_NEAR(f[0].centroid.x, 300, 2);
  EXPECT_NEAR(f[1].centroid.x, 500, 2);
}

TEST(Idt, NoisyClusterCentroid) {
  // At sd 5 px the x+y range of 81 samples is ~49 px, so the threshold is widened.
  DetectionParams p;
  p.dispersion_px = 75;
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<GazeSample> s;
    std::mt19937_64 rng(100 + trial);
    append_dwell(s, 0, 405, 321, 222, 5.0, rng);
    const auto f = detect_fixations(s, p);
    ASSERT_EQ(f.size(), 1u);
    EXPECT_LT(std::hypot(f[0].centroid.x - 321, f[0].centroid.y - 222), 2.0);
  }
}

TEST(Idt, InvalidSamplesSkipped) {
  std::vector<GazeSample> s;
  std::mt19937_64 rng(3);
  append_dwell(s, 0, 300, 100, 100, 0, rng);
  for (std::size_t i = 0; i < s.size(); i += 3) {
    s[i].valid = false;
    s[i].x = 900;
  }
  const auto f = detect_fixations(s);
  ASSERT_EQ(f.size(), 1u);
  EXPECT_EQ(f[0].centroid.x, 100);
}

TEST(Idt, OutputsRespectThresholds) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0, 1);
  DetectionParams p;
  p.merge_gap_ms = 0;  // raw I-DT windows
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<GazeSample> s;
    double t = 0, x = 500, y = 400;
    while (t < 3000) {
      const double dur = 50 + 400 * u(rng);
      append_dwell(s, t, t + dur, x, y, 3 * u(rng), rng);
      t = s.back().t + 5;
      x = 100 + 800 * u(rng);
      y = 100 + 500 * u(rng);
    }
    for (const auto& f : detect_fixations(s, p)) {
      ASSERT_GE(f.duration(), p.min_duration_ms);
      ASSERT_LE(f.dispersion, p.dispersion_px);
    }
  }
}

TEST(Idt, SaccadeTailDoesNotSplitADwell) {
  // A sample 16 px short of the landing point opens the window, so a 5 px
  // vertical drift half-way through takes the range past 25 px.
  std::vector<GazeSample> s{{0, 284, 300, true}};
  for (int k = 1; k < 80; ++k) s.push_back({5.0 * k, 300.0 + (k % 2 ? 4.5 : -4.5), k < 40 ? 300.0 : 305.0, true});
  DetectionParams raw;
  raw.merge_gap_ms = 0;
  const auto split = detect_fixations(s, raw);
  ASSERT_EQ(split.size(), 2u);
  EXPECT_EQ(split[0].offset, 195);
  const auto f = detect_fixations(s);
  ASSERT_EQ(f.size(), 1u);
  EXPECT_EQ(f[0].sample_count, 80);
  EXPECT_EQ(f[0].onset, 0);
  EXPECT_EQ(f[0].offset, 395);
  double sx = 0, sy = 0;
  for (const auto& g : s) {
    sx += g.x;
    sy += g.y;
  }
  EXPECT_NEAR(f[0].centroid.x, sx / 80, 1e-9);
  EXPECT_NEAR(f[0].centroid.y, sy / 80, 1e-9);
  EXPECT_DOUBLE_EQ(f[0].dispersion, (304.5 - 284) + 5.0);
}

TEST(Idt, DistinctDwellsAreNotMerged) {
  std::vector<GazeSample> s;
  std::mt19937_64 rng(9);
  append_dwell(s, 0, 200, 300, 300, 0.5, rng);
  append_dwell(s, 200, 400, 320, 300, 0.5, rng);  // 20 px away, beyond the merge distance
  EXPECT_EQ(detect_fixations(s).size(), 2u);
}

TEST(Labels, CenterBandTargetAndOffGrid) {
  const SceneSpec s = make_scene({}, Condition::BAM, 7);
  const auto& g = s.geometry;
  EXPECT_EQ(label_fixation(at(g.cross_x() + 4, 100), s), AoiLabel::Center);
  EXPECT_EQ(label_fixation(at(g.cross_x() - 10, 300), s), AoiLabel::Center);
  const Point t = g.cell_center(s.target_cell);
  EXPECT_EQ(label_fixation(at(t.x, t.y), s), AoiLabel::TargetSide);
  const double mirror_x = 2 * g.cross_x() - t.x;
  EXPECT_EQ(label_fixation(at(mirror_x, t.y), s), AoiLabel::BackgroundSide);
  EXPECT_EQ(label_fixation(at(5, 5), s), AoiLabel::OffGrid);
  EXPECT_EQ(label_fixation(at(g.outline_rect().right + 3, g.cross_y()), s), AoiLabel::OffGrid);
}

TEST(Scanpath, Width) {
  const std::vector<Fixation> one{at(10, 10)};
  EXPECT_EQ(scanpath_width(one), 0);
  const std::vector<Fixation> two{at(0, 0), at(100, 0)};
  EXPECT_DOUBLE_EQ(scanpath_width(two), 50);
  const double a = 37;
  const std::vector<Fixation> sq{at(-a, -a), at(a, -a), at(a, a), at(-a, a)};
  EXPECT_NEAR(scanpath_width(sq), a * std::sqrt(2.0), 1e-12);
  EXPECT_THROW(scanpath_width(std::vector<Fixation>{}), Error);
}

TEST(Scanpath, InvariantUnderRigidMotionAndLinearInScale) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-300, 300);
  for (int rep = 0; rep < 100; ++rep) {
    std::vector<Fixation> f;
    for (int i = 0; i < 2 + rep % 7; ++i) f.push_back(at(u(rng), u(rng)));
    const double w = scanpath_width(f);
    const double th = u(rng) / 100, dx = u(rng), dy = u(rng), k = 0.1 + std::abs(u(rng)) / 50;
    std::vector<Fixation> moved, scaled;
    for (const auto& x : f) {
      const double rx = std::cos(th) * x.centroid.x - std::sin(th) * x.centroid.y + dx;
      const double ry = std::sin(th) * x.centroid.x + std::cos(th) * x.centroid.y + dy;
      moved.push_back(at(rx, ry));
      scaled.push_back(at(k * x.centroid.x, k * x.centroid.y));
    }
    ASSERT_NEAR(scanpath_width(moved), w, 1e-9);
    ASSERT_NEAR(scanpath_width(scaled), k * w, 1e-9);
  }
}

TEST(TrialMetricsTest, GreedyBam) {
  const SceneSpec s = make_scene({}, Condition::BAM, 12);
  ObserverParams p;
  p.softmax_temp = 0;
  p.landing_noise_sd = 0;
  p.recog_prob_target = 1;
  const SimTrialResult r = simulate_trial(s, compute_saliency(s), p, 12);
  TrialRecord t;
  t.condition = Condition::BAM;
  t.events = r.events;
  t.samples = r.samples;
  t.response_side = r.response_side;
  const TrialMetrics m = compute_trial_metrics(t, s);
  EXPECT_EQ(m.fixation_count_grid, 2);
  EXPECT_EQ(m.first_fixation_label, AoiLabel::TargetSide);
  EXPECT_TRUE(m.correct);
  EXPECT_FALSE(m.excluded);
  EXPECT_EQ(m.fixation_side_prob, 1.0);
}

TEST(TrialMetricsTest, WrongSideIsIncorrect) {
  const SceneSpec s = make_scene({}, Condition::BASE, 1);
  auto t = testing_support::make_trial(0, Condition::BASE, 800, opposite(s.target_side()));
  t.samples = testing_support::steady_samples(t, s.geometry.cross_x(), s.geometry.cross_y());
  const TrialMetrics m = compute_trial_metrics(t, s);
  EXPECT_FALSE(m.correct);
  EXPECT_EQ(m.rt_ms, 800);
  EXPECT_FALSE(m.first_fixation_label);  // never left the centre band
  EXPECT_FALSE(m.fixation_side_prob);
}

TEST(TrialMetricsTest, SidesPartition) {
  const auto sim = simulate_session({Condition::BAMI, Condition::DC}, 20, {}, 8);
  for (std::size_t i = 0; i < sim.scenes.size(); ++i) {
    const TrialMetrics m = compute_trial_metrics(sim.session.trials[i], sim.scenes[i]);
    if (m.fixation_side_prob) {
      const double tot = *m.fixations_target_side + *m.fixations_background_side;
      EXPECT_NEAR(*m.fixations_target_side / tot + *m.fixations_background_side / tot, 1.0, 1e-12);
      EXPECT_LE(tot, *m.fixation_count_grid);
    }
  }
}

TEST(TrialMetricsTest, ExclusionBoundary) {
  const SceneSpec s = make_scene({}, Condition::BASE, 1);
  // rt 1000 ms plus 1170 + 1375 of protocol: duration 3545 ms, 710 expected samples.
  auto t = testing_support::make_trial(0, Condition::BASE, 1000, s.target_side());
  t.samples = testing_support::steady_samples(t, 100, 100);
  ASSERT_EQ(t.samples.size(), 710u);
  auto with_valid = [&](std::size_t k) {
    auto u = t;
    for (std::size_t i = k; i < u.samples.size(); ++i) u.samples[i].valid = false;
    return compute_trial_metrics(u, s);
  };
  EXPECT_FALSE(with_valid(497).excluded);  // exactly 0.70 is retained
  EXPECT_TRUE(with_valid(496).excluded);
  EXPECT_TRUE(with_valid(462).excluded);  // 65%
}

TEST(TrialMetricsTest, MalformedTrials) {
  const SceneSpec s = make_scene({}, Condition::BASE, 1);
  auto t = testing_support::make_trial(0, Condition::BASE, 500, Side::Left);
  auto no_key = t;
  no_key.events.erase(no_key.events.begin() + 2);
  EXPECT_THROW(compute_trial_metrics(no_key, s), Error);
  auto wrong = t;
  wrong.condition = Condition::BAM;
  EXPECT_THROW(compute_trial_metrics(wrong, s), Error);
}

TEST(TrialMetricsTest, WithoutGazeOnlyBehaviour) {
  const SceneSpec s = make_scene({}, Condition::BASE, 1);
  const auto t = testing_support::make_trial(0, Condition::BASE, 640, s.target_side());
  const TrialMetrics m = compute_trial_metrics(t, s, {}, false);
  EXPECT_TRUE(m.correct);
  EXPECT_EQ(m.rt_ms, 640);
  EXPECT_FALSE(m.sampling_ratio);
  EXPECT_FALSE(m.fixation_count_grid);
  EXPECT_FALSE(m.excluded);
}

TEST(Aggregate, AccuracyAndFirstFixation) {
  std::vector<TrialMetrics> v;
  for (int i = 0; i < 10; ++i) {
    TrialMetrics m;
    m.trial_id = i;
    m.condition = Condition::BAM;
    m.rt_ms = 100 * (i + 1);
    m.correct = true;
    m.first_fixation_label = i < 8 ? AoiLabel::TargetSide : AoiLabel::BackgroundSide;
    m.fixation_count_grid = 3;
    v.push_back(m);
  }
  TrialMetrics dropped = v[0];
  dropped.excluded = true;
  dropped.correct = false;
  v.push_back(dropped);
  const auto rows = aggregate_conditions(v);
  ASSERT_EQ(rows.size(), 7u);
  const auto& bam = rows[1];
  EXPECT_EQ(bam.condition, Condition::BAM);
  EXPECT_EQ(bam.n_trials, 11);
  EXPECT_EQ(bam.n_excluded, 1);
  EXPECT_EQ(*bam.accuracy_pct, 100.0);
  EXPECT_DOUBLE_EQ(*bam.p_first_target, 0.8);
  EXPECT_DOUBLE_EQ(*bam.median_rt_ms, 550);
  EXPECT_FALSE(rows[0].mean_rt_ms);
  EXPECT_NE(summary_csv(rows).find("BASE,0,0,NA,NA"), std::string::npos);
}

TEST(Aggregate, FixationCountDirection) {
  const auto sim = simulate_session({Condition::BAM, Condition::BAMI}, 200, {}, 21);
  std::vector<TrialMetrics> m;
  for (std::size_t i = 0; i < sim.scenes.size(); ++i) m.push_back(compute_trial_metrics(sim.session.trials[i], sim.scenes[i]));
  const auto rows = aggregate_conditions(m);
  EXPECT_LT(*rows[1].mean_fixation_count, *rows[2].mean_fixation_count);
}

TEST(Aggregate, CsvIsDeterministic) {
  const auto sim = simulate_session({Condition::DC}, 10, {}, 2);
  auto once = [&] {
    std::vector<TrialMetrics> m;
    for (std::size_t i = 0; i < sim.scenes.size(); ++i) m.push_back(compute_trial_metrics(sim.session.trials[i], sim.scenes[i]));
    return metrics_csv(m);
  };
  const std::string a = once();
  EXPECT_EQ(a, once());
  EXPECT_EQ(a.substr(0, a.find('\n')), kMetricsCsvHeader);
}
