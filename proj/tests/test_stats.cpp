#include <gtest/gtest.h>

#include <boost/math/distributions/normal.hpp>
#include <cmath>
#include <random>

#include "ocugaze/stats.hpp"

using namespace ocugaze;

namespace {

double normal_two_sided_oracle(double z) {
  const boost::math::normal n;
  return 2.0 * boost::math::cdf(boost::math::complement(n, std::abs(z)));
}

Groups random_groups(std::uint64_t seed, int k, int n, double shift_last = 0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(0, 1);
  Groups g(k);
  for (int i = 0; i < k; ++i) {
    for (int j = 0; j < n; ++j) g[i].push_back(d(rng) + (i == k - 1 ? shift_last : 0));
  }
  return g;
}

TrialMetrics row(int id, Condition c, double rt, bool correct) {
  TrialMetrics m;
  m.trial_id = id;
  m.condition = c;
  m.rt_ms = rt;
  m.correct = correct;
  return m;
}

}  // namespace

TEST(Kruskal, HandComputedExample) {
  // Rank sums 6, 15, 24 with N = 9: 12/90 * (36 + 225 + 576)/3 - 30 = 7.2
  const auto r = kruskal_wallis({{1, 2, 3}, {4, 5, 6}, {7, 8, 9}});
  EXPECT_NEAR(r.h, 7.2, 1e-9);
  EXPECT_EQ(r.df, 2);
  EXPECT_NEAR(r.p, std::exp(-7.2 / 2), 1e-12);  // chi-square with 2 df has tail e^{-x/2}
}

TEST(Kruskal, TieCorrection) {
  // Mid-ranks 1.5 1.5 3.5 | 3.5 5.5 5.5; uncorrected H = 64/21, divisor 1 - 18/210, H = 10/3.
  const auto r = kruskal_wallis({{1, 1, 2}, {2, 3, 3}});
  EXPECT_NEAR(r.h, 10.0 / 3.0, 1e-12);
  EXPECT_EQ(r.df, 1);
}

TEST(Kruskal, IdenticalGroups) {
  const auto r = kruskal_wallis({{1, 2, 3}, {1, 2, 3}});
  EXPECT_NEAR(r.h, 0.0, 1e-12);
  EXPECT_EQ(r.p, 1.0);
  const auto all_tied = kruskal_wallis({{4, 4}, {4, 4, 4}});
  EXPECT_EQ(all_tied.h, 0.0);
  EXPECT_EQ(all_tied.p, 1.0);
}

TEST(Kruskal, ChiSquareTailAgainstClosedForms) {
  for (double x : {0.1, 1.0, 3.7, 12.0}) {
    EXPECT_NEAR(chi_square_upper_tail(x, 2), std::exp(-x / 2), 1e-14);
    // 4 df: e^{-x/2} (1 + x/2)
    EXPECT_NEAR(chi_square_upper_tail(x, 4), std::exp(-x / 2) * (1 + x / 2), 1e-14);
    // 1 df: erfc(sqrt(x/2))
    EXPECT_NEAR(chi_square_upper_tail(x, 1), std::erfc(std::sqrt(x / 2)), 1e-14);
  }
}

TEST(Kruskal, InvariantUnderMonotoneTransforms) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Groups g = random_groups(seed, 5, 12);
    g[1][0] = g[2][3];  // include a tie
    const double h = kruskal_wallis(g).h;
    Groups t = g;
    for (auto& grp : t) {
      for (auto& v : grp) v = std::exp(3 * v) + v * v * v;
    }
    ASSERT_EQ(kruskal_wallis(t).h, h);
  }
}

TEST(Kruskal, RejectsDegenerateInput) {
  EXPECT_THROW(kruskal_wallis({{1, 2, 3}}), Error);
  EXPECT_THROW(kruskal_wallis({{1}, {}}), Error);
  EXPECT_THROW(kruskal_wallis({{1}, {2}}), Error);
  EXPECT_THROW(kruskal_wallis({{1, NAN}, {2}}), Error);
}

TEST(Dunn, HandComputedExample) {
  // N = 9, variance N(N+1)/12 = 7.5, se = sqrt(7.5 * 2/3) = sqrt(5); mean ranks 2, 5, 8.
  const Groups g{{1, 2, 3}, {4, 5, 6}, {7, 8, 9}};
  const auto pairs = dunn_posthoc(g);
  ASSERT_EQ(pairs.size(), 3u);
  const double z01 = -3 / std::sqrt(5.0), z02 = -6 / std::sqrt(5.0);
  EXPECT_NEAR(pairs[0].z, z01, 1e-12);
  EXPECT_NEAR(pairs[1].z, z02, 1e-12);
  EXPECT_NEAR(pairs[2].z, z01, 1e-12);
  EXPECT_NEAR(pairs[0].p_raw, normal_two_sided_oracle(z01), 1e-12);
  EXPECT_NEAR(pairs[1].p_adj, std::min(1.0, 3 * normal_two_sided_oracle(z02)), 1e-12);
  EXPECT_TRUE(pairs[1].significant);
  EXPECT_FALSE(pairs[0].significant);
}

TEST(Dunn, IdenticalGroupsNothingSignificant) {
  const auto pairs = dunn_posthoc({{1, 2, 3, 4}, {1, 2, 3, 4}, {1, 2, 3, 4}});
  for (const auto& p : pairs) {
    EXPECT_EQ(p.p_adj, 1.0);
    EXPECT_FALSE(p.significant);
  }
}

TEST(Dunn, ShiftedGroupStandsOut) {
  const Groups g = random_groups(5, 5, 20, 100.0);
  for (const auto& p : dunn_posthoc(g)) {
    const bool involves_shifted = p.b == 4;
    EXPECT_EQ(p.significant, involves_shifted) << p.a << " vs " << p.b << " p_adj " << p.p_adj;
  }
}

TEST(Dunn, PairOrderSymmetry) {
  const Groups g = random_groups(8, 4, 15, 1.0);
  for (std::size_t a = 0; a < 4; ++a) {
    for (std::size_t b = 0; b < 4; ++b) {
      if (a == b) continue;
      const auto ab = dunn_pair(g, a, b), ba = dunn_pair(g, b, a);
      ASSERT_EQ(ab.z, -ba.z);
      ASSERT_EQ(ab.p_raw, ba.p_raw);
      ASSERT_EQ(ab.p_adj, ba.p_adj);
    }
  }
}

TEST(Dunn, BonferroniMonotoneAndCapped) {
  EXPECT_EQ(pair_count(7), 21u);
  double prev = 0;
  for (double p = 0; p <= 1.0; p += 0.001) {
    const double adj = bonferroni(p, 21);
    ASSERT_GE(adj, prev);
    ASSERT_LE(adj, 1.0);
    ASSERT_GE(adj, p);
    prev = adj;
  }
  EXPECT_EQ(bonferroni(0.2, 21), 1.0);
}

TEST(Permutation, IdenticalGroupsGivePOne) {
  EXPECT_EQ(permutation_oracle({{1, 2, 3, 4}, {1, 2, 3, 4}}, 10000, 1), 1.0);
}

TEST(Permutation, SeparatedGroupsHitTheFloor) {
  const Groups g = random_groups(2, 3, 20, 50.0);
  Groups sep = g;
  for (auto& v : sep[1]) v += 25;
  EXPECT_EQ(permutation_oracle(sep, 10000, 3), 1.0 / 10001.0);
}

TEST(Permutation, AgreesWithChiSquareOnModerateData) {
  for (std::uint64_t seed : {21u, 22u, 23u}) {
    const Groups g = random_groups(seed, 7, 20, 0.5);
    const double asym = kruskal_wallis(g).p;
    const double perm = permutation_oracle(g, 20000, seed, 2);
    EXPECT_NEAR(perm, asym, 0.02) << "seed " << seed;
  }
}

TEST(Permutation, IndependentOfJobsAndSeeded) {
  const Groups g = random_groups(4, 4, 10, 0.4);
  const double a = permutation_oracle(g, 10000, 9, 1);
  EXPECT_EQ(a, permutation_oracle(g, 10000, 9, 3));
  EXPECT_THROW(permutation_oracle(g, 500, 9), Error);
}

TEST(Report, NeedsTwoConditions) {
  std::vector<TrialMetrics> v{row(0, Condition::BAM, 500, true), row(1, Condition::BAM, 600, true),
                              row(2, Condition::BAM, 700, false)};
  try {
    build_report(v);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Domain);
  }
}

TEST(Report, SkipsMetricsWithoutGazeData) {
  std::vector<TrialMetrics> v;
  for (int i = 0; i < 10; ++i) {
    v.push_back(row(i, Condition::BAM, 400 + 10 * i, true));
    v.push_back(row(10 + i, Condition::BAMI, 900 + 10 * i, i % 3 != 0));
  }
  const StatsBundle b = build_report(v);
  ASSERT_EQ(b.reports.size(), 2u);
  EXPECT_EQ(b.reports[0].metric, "rt_ms");
  EXPECT_EQ(b.skipped.size(), 4u);
  const auto* p = b.reports[0].find(Condition::BAMI, Condition::BAM);
  ASSERT_NE(p, nullptr);
  EXPECT_TRUE(p->significant);
}

TEST(Report, ExcludedTrialsIgnored) {
  std::vector<TrialMetrics> v;
  for (int i = 0; i < 6; ++i) {
    v.push_back(row(i, Condition::BAM, 100 + i, true));
    v.push_back(row(10 + i, Condition::DC, 100 + i, true));
  }
  auto extra = row(99, Condition::DC, 1e6, true);
  extra.excluded = true;
  v.push_back(extra);
  const StatsBundle b = build_report(v);
  EXPECT_EQ(b.reports[0].ns[1], 6u);
  EXPECT_NEAR(b.reports[0].omnibus.h, 0.0, 1e-12);
}

TEST(Report, CsvRoundTripAndDeterminism) {
  std::vector<TrialMetrics> v;
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(200, 3000);
  for (int i = 0; i < 40; ++i) {
    auto m = row(i, kAllConditions[i % 7], std::round(u(rng)), i % 5 != 0);
    m.fixation_count_grid = i % 6;
    m.first_fixation_label = i % 2 ? AoiLabel::TargetSide : AoiLabel::BackgroundSide;
    m.fixation_side_prob = (i % 4) / 4.0;
    m.scanpath_width_px = 10.5 + i;
    m.sampling_ratio = 1.0;
    v.push_back(m);
  }
  const std::string csv = metrics_csv(v);
  const auto back = parse_metrics_csv(csv);
  ASSERT_EQ(back.size(), v.size());
  EXPECT_EQ(metrics_csv(back), csv);
  EXPECT_EQ(stats_csv(build_report(csv)), stats_csv(build_report(csv)));
  EXPECT_EQ(stats_csv(build_report(csv)), stats_csv(build_report(v)));
}

TEST(Report, SchemaErrors) {
  try {
    parse_metrics_csv("trial_id,condition\n1,BAM\n");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Schema);
    EXPECT_NE(std::string(e.what()).find("rt_ms"), std::string::npos);
  }
  const std::string header = kMetricsCsvHeader;
  EXPECT_THROW(parse_metrics_csv(header + "\n1,BAM,oops,1,left,left,0,NA,NA,NA,NA,NA,NA,NA,0\n"), Error);
  EXPECT_THROW(parse_metrics_csv(header + "\n1,XYZ,100,1,left,left,0,NA,NA,NA,NA,NA,NA,NA,0\n"), Error);
  EXPECT_THROW(parse_metrics_csv(header + "\n1,BAM,100\n"), Error);
  EXPECT_THROW(parse_metrics_csv(""), Error);
}
