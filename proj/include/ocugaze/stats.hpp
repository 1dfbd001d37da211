#pragma once

// Rank-based comparison of conditions: Kruskal-Wallis omnibus test, Dunn's
// pairwise post hoc test with Bonferroni correction, and a Monte-Carlo
// permutation test used to check the chi-square approximation.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <boost/math/special_functions/gamma.hpp>
#include <fmt/format.h>

#include "ocugaze/error.hpp"
#include "ocugaze/metrics.hpp"
#include "ocugaze/parallel.hpp"
#include "ocugaze/rng.hpp"

namespace ocugaze {

using Groups = std::vector<std::vector<double>>;

inline constexpr double kAlpha = 0.05;

struct RankedData {
  std::vector<double> ranks;      // pooled, group-major order
  std::vector<std::size_t> sizes;
  double tie_sum = 0;             // sum over tie blocks of t^3 - t
  std::size_t total = 0;
};

/// Mid-ranks of the pooled observations.
inline RankedData rank_groups(const Groups& groups) {
  RankedData rd;
  std::vector<double> pooled;
  for (const auto& g : groups) {
    rd.sizes.push_back(g.size());
    pooled.insert(pooled.end(), g.begin(), g.end());
  }
  const std::size_t n = pooled.size();
  rd.total = n;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return pooled[a] < pooled[b]; });
  rd.ranks.assign(n, 0);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && pooled[order[j + 1]] == pooled[order[i]]) ++j;
    const double mid = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) rd.ranks[order[k]] = mid;
    const double t = static_cast<double>(j - i + 1);
    rd.tie_sum += t * t * t - t;
    i = j + 1;
  }
  return rd;
}

inline void check_groups(const Groups& groups) {
  if (groups.size() < 2) throw Error(ErrorKind::Domain, "at least two groups are required");
  std::size_t total = 0;
  for (const auto& g : groups) {
    if (g.empty()) throw Error(ErrorKind::Domain, "every group needs at least one observation");
    for (double v : g) {
      if (!std::isfinite(v)) throw Error(ErrorKind::Domain, "observations must be finite");
    }
    total += g.size();
  }
  if (total < 3) throw Error(ErrorKind::Domain, "at least three observations are required");
}

namespace detail {

// H from per-group rank sums, tie-corrected.
inline double h_statistic(std::span<const double> rank_sums, std::span<const std::size_t> sizes,
                          std::size_t total, double tie_sum) {
  const double n = static_cast<double>(total);
  const double correction = 1.0 - tie_sum / (n * n * n - n);
  if (correction <= 0) return 0.0;  // all observations tied
  double s = 0;
  for (std::size_t g = 0; g < sizes.size(); ++g) s += rank_sums[g] * rank_sums[g] / sizes[g];
  const double h = (12.0 / (n * (n + 1.0)) * s - 3.0 * (n + 1.0)) / correction;
  return std::max(0.0, h);
}

inline std::vector<double> rank_sums(const RankedData& rd) {
  std::vector<double> sums(rd.sizes.size(), 0.0);
  std::size_t k = 0;
  for (std::size_t g = 0; g < rd.sizes.size(); ++g) {
    for (std::size_t i = 0; i < rd.sizes[g]; ++i) sums[g] += rd.ranks[k++];
  }
  return sums;
}

inline double normal_two_sided(double z) { return std::erfc(std::abs(z) / std::sqrt(2.0)); }

}  // namespace detail

struct KruskalResult {
  double h = 0;
  double p = 1;
  int df = 0;
};

inline double chi_square_upper_tail(double x, int df) {
  if (x <= 0) return 1.0;
  return boost::math::gamma_q(df / 2.0, x / 2.0);
}

inline KruskalResult kruskal_wallis(const Groups& groups) {
  check_groups(groups);
  const RankedData rd = rank_groups(groups);
  const auto sums = detail::rank_sums(rd);
  KruskalResult r;
  r.df = static_cast<int>(groups.size()) - 1;
  r.h = detail::h_statistic(sums, rd.sizes, rd.total, rd.tie_sum);
  r.p = chi_square_upper_tail(r.h, r.df);
  return r;
}

struct DunnPair {
  std::size_t a = 0;
  std::size_t b = 0;
  double z = 0;  // positive when group a ranks higher
  double p_raw = 1;
  double p_adj = 1;
  bool significant = false;
};

inline std::size_t pair_count(std::size_t k) { return k * (k - 1) / 2; }

inline double bonferroni(double p_raw, std::size_t m) {
  return std::min(1.0, p_raw * static_cast<double>(m));
}

namespace detail {

inline DunnPair dunn_one(const RankedData& rd, const std::vector<double>& sums, std::size_t a,
                         std::size_t b, std::size_t m, double alpha) {
  const double n = static_cast<double>(rd.total);
  const double var = n * (n + 1.0) / 12.0 - rd.tie_sum / (12.0 * (n - 1.0));
  DunnPair d{a, b};
  const double se = std::sqrt(std::max(0.0, var) * (1.0 / rd.sizes[a] + 1.0 / rd.sizes[b]));
  if (se > 0) d.z = (sums[a] / rd.sizes[a] - sums[b] / rd.sizes[b]) / se;
  d.p_raw = detail::normal_two_sided(d.z);
  d.p_adj = bonferroni(d.p_raw, m);
  d.significant = d.p_adj < alpha;
  return d;
}

}  // namespace detail

/// Dunn's test for the ordered pair (a, b) within the full family of groups.
inline DunnPair dunn_pair(const Groups& groups, std::size_t a, std::size_t b, double alpha = kAlpha) {
  check_groups(groups);
  const RankedData rd = rank_groups(groups);
  return detail::dunn_one(rd, detail::rank_sums(rd), a, b, pair_count(groups.size()), alpha);
}

/// All k(k-1)/2 pairs (a < b), Bonferroni-adjusted over the whole family.
inline std::vector<DunnPair> dunn_posthoc(const Groups& groups, double alpha = kAlpha) {
  check_groups(groups);
  const RankedData rd = rank_groups(groups);
  const auto sums = detail::rank_sums(rd);
  const std::size_t m = pair_count(groups.size());
  std::vector<DunnPair> out;
  for (std::size_t a = 0; a < groups.size(); ++a) {
    for (std::size_t b = a + 1; b < groups.size(); ++b) out.push_back(detail::dunn_one(rd, sums, a, b, m, alpha));
  }
  return out;
}

/// Monte-Carlo permutation p-value for H: (1 + #{H_perm >= H_obs}) / (1 + n).
/// Permutations run in fixed batches with their own seed streams, so the
/// result does not depend on `jobs`.
inline double permutation_oracle(const Groups& groups, std::size_t n_permutations, std::uint64_t seed,
                                 unsigned jobs = 1) {
  check_groups(groups);
  if (n_permutations < 10000) throw Error(ErrorKind::Domain, "n_permutations must be at least 10^4");
  const RankedData rd = rank_groups(groups);
  const double observed = detail::h_statistic(detail::rank_sums(rd), rd.sizes, rd.total, rd.tie_sum);

  std::vector<std::uint16_t> labels;
  for (std::size_t g = 0; g < rd.sizes.size(); ++g) labels.insert(labels.end(), rd.sizes[g], static_cast<std::uint16_t>(g));

  constexpr std::size_t kBatches = 64;
  std::vector<std::size_t> hits(kBatches, 0);
  parallel_for(kBatches, jobs, [&](std::size_t b) {
    std::vector<std::uint16_t> lab = labels;
    std::vector<double> sums(rd.sizes.size());
    const std::size_t lo = n_permutations * b / kBatches, hi = n_permutations * (b + 1) / kBatches;
    Rng rng = make_rng(seed, b);
    for (std::size_t p = lo; p < hi; ++p) {
      std::shuffle(lab.begin(), lab.end(), rng);
      std::fill(sums.begin(), sums.end(), 0.0);
      for (std::size_t i = 0; i < lab.size(); ++i) sums[lab[i]] += rd.ranks[i];
      const double h = detail::h_statistic(sums, rd.sizes, rd.total, rd.tie_sum);
      hits[b] += h >= observed - 1e-9 * std::max(1.0, observed);
    }
  });
  const std::size_t total_hits = std::accumulate(hits.begin(), hits.end(), std::size_t{0});
  return (1.0 + static_cast<double>(total_hits)) / (1.0 + static_cast<double>(n_permutations));
}

// ---- metric reports ----

struct TestReport {
  std::string metric;
  std::vector<Condition> conditions;
  std::vector<std::size_t> ns;
  KruskalResult omnibus;
  std::vector<DunnPair> pairs;  // indices into `conditions`

  const DunnPair* find(Condition a, Condition b) const {
    for (const auto& p : pairs) {
      const Condition pa = conditions[p.a], pb = conditions[p.b];
      if ((pa == a && pb == b) || (pa == b && pb == a)) return &p;
    }
    return nullptr;
  }
};

struct StatsBundle {
  std::vector<TestReport> reports;
  std::vector<std::string> skipped;  // metrics lacking data in two or more conditions
  std::vector<ConditionSummary> summaries;
};

inline const std::vector<std::string>& report_metrics() {
  static const std::vector<std::string> m = {"rt_ms",
                                             "correct",
                                             "fixation_count_grid",
                                             "first_fixation_target",
                                             "fixation_side_prob",
                                             "scanpath_width_px"};
  return m;
}

inline std::optional<double> metric_value(const TrialMetrics& t, const std::string& metric) {
  if (metric == "rt_ms") return t.rt_ms;
  if (metric == "correct") return t.correct ? 1.0 : 0.0;
  if (metric == "fixation_count_grid") {
    return t.fixation_count_grid ? std::optional<double>(*t.fixation_count_grid) : std::nullopt;
  }
  if (metric == "first_fixation_target") return t.first_fixation_target();
  if (metric == "fixation_side_prob") return t.fixation_side_prob;
  if (metric == "scanpath_width_px") return t.scanpath_width_px;
  throw Error(ErrorKind::Schema, "unknown metric " + metric);
}

/// Parses a per-trial metrics CSV as written by metrics_csv().
inline std::vector<TrialMetrics> parse_metrics_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  auto split = [](const std::string& s) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ss(s);
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    if (!s.empty() && s.back() == ',') out.emplace_back();
    return out;
  };
  if (!std::getline(in, line)) throw Error(ErrorKind::Schema, "metrics CSV is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split(line);
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;
  for (const auto& required : split(kMetricsCsvHeader)) {
    if (!col.count(required)) throw Error(ErrorKind::Schema, fmt::format("metrics CSV lacks column '{}'", required));
  }

  std::vector<TrialMetrics> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = split(line);
    if (f.size() != header.size()) {
      throw Error(ErrorKind::Schema, fmt::format("metrics CSV line {}: expected {} fields, found {}", lineno,
                                                 header.size(), f.size()));
    }
    auto get = [&](const char* name) -> const std::string& { return f[col.at(name)]; };
    auto num = [&](const char* name) -> std::optional<double> {
      const std::string& s = get(name);
      if (s == "NA" || s.empty()) return std::nullopt;
      try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
      } catch (const std::exception&) {
        throw Error(ErrorKind::Schema, fmt::format("metrics CSV line {}: bad number '{}' in {}", lineno, s, name));
      }
    };
    auto req = [&](const char* name) {
      auto v = num(name);
      if (!v) throw Error(ErrorKind::Schema, fmt::format("metrics CSV line {}: {} is missing", lineno, name));
      return *v;
    };
    auto opt_int = [&](const char* name) -> std::optional<int> {
      auto v = num(name);
      return v ? std::optional<int>(static_cast<int>(std::lround(*v))) : std::nullopt;
    };
    TrialMetrics t;
    try {
      t.trial_id = static_cast<int>(req("trial_id"));
      t.condition = parse_condition(get("condition"));
      t.response_side = parse_side(get("response_side"));
      t.target_side = parse_side(get("target_side"));
    } catch (const Error& e) {
      throw Error(ErrorKind::Schema, fmt::format("metrics CSV line {}: {}", lineno, e.detail()));
    }
    t.rt_ms = req("rt_ms");
    t.correct = req("correct") != 0;
    t.timed_out = req("timed_out") != 0;
    t.fixation_count_grid = opt_int("fixation_count_grid");
    const std::string& ffl = get("first_fixation_label");
    for (AoiLabel l : {AoiLabel::Center, AoiLabel::TargetSide, AoiLabel::BackgroundSide, AoiLabel::OffGrid}) {
      if (ffl == to_string(l)) t.first_fixation_label = l;
    }
    t.fixations_target_side = opt_int("fixations_target_side");
    t.fixations_background_side = opt_int("fixations_background_side");
    t.fixation_side_prob = num("fixation_side_prob");
    t.scanpath_width_px = num("scanpath_width_px");
    t.sampling_ratio = num("sampling_ratio");
    t.excluded = req("excluded") != 0;
    out.push_back(t);
  }
  return out;
}

inline StatsBundle build_report(std::span<const TrialMetrics> trials, double alpha = kAlpha) {
  StatsBundle bundle;
  bundle.summaries = aggregate_conditions(trials);
  int present = 0;
  for (const auto& s : bundle.summaries) present += s.n_used() > 0;
  if (present < 2) {
    throw Error(ErrorKind::Domain, "at least two conditions with retained trials are required");
  }
  for (const auto& metric : report_metrics()) {
    TestReport r;
    r.metric = metric;
    Groups groups;
    for (Condition c : kAllConditions) {
      std::vector<double> g;
      for (const auto& t : trials) {
        if (t.condition != c || t.excluded) continue;
        if (auto v = metric_value(t, metric)) g.push_back(*v);
      }
      if (g.empty()) continue;
      r.conditions.push_back(c);
      r.ns.push_back(g.size());
      groups.push_back(std::move(g));
    }
    std::size_t total = 0;
    for (const auto& g : groups) total += g.size();
    if (groups.size() < 2 || total < 3) {
      bundle.skipped.push_back(metric);
      continue;
    }
    r.omnibus = kruskal_wallis(groups);
    r.pairs = dunn_posthoc(groups, alpha);
    bundle.reports.push_back(std::move(r));
  }
  return bundle;
}

inline StatsBundle build_report(const std::string& metrics_csv_text, double alpha = kAlpha) {
  const auto trials = parse_metrics_csv(metrics_csv_text);
  return build_report(trials, alpha);
}

inline std::string format_p(double p) {
  if (p < 0.001) return "p < 0.001";
  return fmt::format("p = {:.3f}", p);
}

inline std::string stats_csv(const StatsBundle& b) {
  std::string out = "metric,test,group_a,group_b,n_a,n_b,statistic,p_raw,p_adj,significant\n";
  for (const auto& r : b.reports) {
    std::size_t n = 0;
    for (auto k : r.ns) n += k;
    out += fmt::format("{},kruskal_wallis,ALL,ALL,{},{},{:.6f},{:.6e},{:.6e},{}\n", r.metric, n, r.conditions.size(),
                       r.omnibus.h, r.omnibus.p, r.omnibus.p, r.omnibus.p < kAlpha ? 1 : 0);
    for (const auto& p : r.pairs) {
      out += fmt::format("{},dunn_bonferroni,{},{},{},{},{:.6f},{:.6e},{:.6e},{}\n", r.metric,
                         to_string(r.conditions[p.a]), to_string(r.conditions[p.b]), r.ns[p.a], r.ns[p.b], p.z,
                         p.p_raw, p.p_adj, p.significant ? 1 : 0);
    }
  }
  return out;
}

inline std::string stats_text(const StatsBundle& b) {
  std::string out;
  out += "Condition comparisons\n";
  out += "Trials are pooled across sessions; trials below 70% sampling ratio are excluded.\n";
  out += "Omnibus: Kruskal-Wallis (chi-square approximation). Pairwise: Dunn's test, Bonferroni-adjusted, "
         "alpha = 0.05 two-sided.\n";
  for (const auto& r : b.reports) {
    out += fmt::format("\n== {} ==\n", r.metric);
    std::string groups;
    for (std::size_t i = 0; i < r.conditions.size(); ++i) {
      groups += fmt::format("{}{} (n={})", i ? ", " : "", to_string(r.conditions[i]), r.ns[i]);
    }
    out += "groups: " + groups + "\n";
    out += fmt::format("H = {:.3f}, df = {}, {}\n", r.omnibus.h, r.omnibus.df, format_p(r.omnibus.p));
    std::string sig, ns;
    for (const auto& p : r.pairs) {
      const auto hi = p.z >= 0 ? r.conditions[p.a] : r.conditions[p.b];
      const auto lo = p.z >= 0 ? r.conditions[p.b] : r.conditions[p.a];
      if (p.significant) {
        sig += fmt::format("  {} > {} (z = {:.2f}, adjusted {})\n", to_string(hi), to_string(lo), std::abs(p.z),
                           format_p(p.p_adj));
      } else {
        ns += fmt::format("  {} ~ {} (adjusted {})\n", to_string(r.conditions[p.a]), to_string(r.conditions[p.b]),
                          format_p(p.p_adj));
      }
    }
    out += "significant pairs:\n" + (sig.empty() ? std::string("  none\n") : sig);
    out += "not significant:\n" + (ns.empty() ? std::string("  none\n") : ns);
  }
  for (const auto& m : b.skipped) out += fmt::format("\n== {} ==\nskipped: fewer than two conditions have data\n", m);
  return out;
}

}  // namespace ocugaze
