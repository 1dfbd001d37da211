#pragma once

// Six-panel per-condition summary figure (SVG) and plain-text report.

#include <algorithm>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "ocugaze/metrics.hpp"
#include "ocugaze/stats.hpp"

namespace ocugaze {

namespace detail {

struct Panel {
  std::string title;
  std::string unit;
  // one or two series per condition
  std::vector<std::string> series_names;
  std::vector<std::vector<std::optional<double>>> series;  // [series][condition]
};

inline std::string svg_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      default: out += c;
    }
  }
  return out;
}

inline std::string render_panel(const Panel& p, std::span<const ConditionSummary> rows, double ox, double oy,
                                double w, double h) {
  static const char* kFill[] = {"#4c72b0", "#dd8452"};
  const double left = ox + 48, right = ox + w - 10, top = oy + 30, bottom = oy + h - 34;
  double hi = 0;
  for (const auto& s : p.series) {
    for (const auto& v : s) {
      if (v) hi = std::max(hi, *v);
    }
  }
  if (hi <= 0) hi = 1;
  hi *= 1.1;
  std::string out;
  out += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" font-size=\"14\" font-weight=\"bold\">{}</text>\n", ox + 8,
                     oy + 18, svg_escape(p.title));
  out += fmt::format("<line x1=\"{0:.1f}\" y1=\"{1:.1f}\" x2=\"{0:.1f}\" y2=\"{2:.1f}\" stroke=\"black\"/>\n", left,
                     top, bottom);
  out += fmt::format("<line x1=\"{0:.1f}\" y1=\"{2:.1f}\" x2=\"{1:.1f}\" y2=\"{2:.1f}\" stroke=\"black\"/>\n", left,
                     right, bottom);
  for (int k = 0; k <= 4; ++k) {
    const double v = hi * k / 4.0;
    const double y = bottom - (bottom - top) * k / 4.0;
    out += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" font-size=\"9\" text-anchor=\"end\">{:.3g}</text>\n",
                       left - 4, y + 3, v);
  }
  out += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" font-size=\"9\">{}</text>\n", ox + 4, top - 6,
                     svg_escape(p.unit));
  const double slot = (right - left) / static_cast<double>(rows.size());
  const double bar_w = slot * 0.7 / p.series.size();
  for (std::size_t c = 0; c < rows.size(); ++c) {
    const double x0 = left + slot * c + slot * 0.15;
    for (std::size_t s = 0; s < p.series.size(); ++s) {
      const auto& v = p.series[s][c];
      const double x = x0 + bar_w * s;
      if (!v) {
        out += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" font-size=\"8\">NA</text>\n", x, bottom - 3);
        continue;
      }
      const double bh = (bottom - top) * (*v / hi);
      out += fmt::format("<rect x=\"{:.1f}\" y=\"{:.1f}\" width=\"{:.1f}\" height=\"{:.1f}\" fill=\"{}\"/>\n", x,
                         bottom - bh, bar_w, bh, kFill[s % 2]);
    }
    out += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" font-size=\"10\" text-anchor=\"middle\">{}</text>\n",
                       left + slot * (c + 0.5), bottom + 14, to_string(rows[c].condition));
  }
  if (p.series_names.size() > 1) {
    for (std::size_t s = 0; s < p.series_names.size(); ++s) {
      const double lx = right - 110, ly = top + 4 + 14.0 * s;
      out += fmt::format("<rect x=\"{:.1f}\" y=\"{:.1f}\" width=\"10\" height=\"10\" fill=\"{}\"/>\n", lx, ly,
                         kFill[s % 2]);
      out += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" font-size=\"10\">{}</text>\n", lx + 14, ly + 9,
                         svg_escape(p.series_names[s]));
    }
  }
  return out;
}

}  // namespace detail

inline std::string summary_svg(std::span<const ConditionSummary> rows) {
  using detail::Panel;
  auto col = [&](auto get) {
    std::vector<std::optional<double>> v;
    for (const auto& r : rows) v.push_back(get(r));
    return v;
  };
  std::vector<Panel> panels;
  panels.push_back({"Mean trial duration", "seconds", {"rt"}, {col([](const ConditionSummary& r) {
                      return r.mean_rt_ms ? std::optional<double>(*r.mean_rt_ms / 1000.0) : std::nullopt;
                    })}});
  panels.push_back({"Accuracy", "percent", {"accuracy"}, {col([](const ConditionSummary& r) { return r.accuracy_pct; })}});
  panels.push_back({"Scanpath width", "pixels", {"width"},
                    {col([](const ConditionSummary& r) { return r.mean_scanpath_width_px; })}});
  panels.push_back({"Average fixation count", "fixations", {"count"},
                    {col([](const ConditionSummary& r) { return r.mean_fixation_count; })}});
  panels.push_back({"First fixation probability", "probability", {"target side", "background side"},
                    {col([](const ConditionSummary& r) { return r.p_first_target; }),
                     col([](const ConditionSummary& r) { return r.p_first_background; })}});
  panels.push_back({"Fixation probability: target vs background", "probability", {"target side", "background side"},
                    {col([](const ConditionSummary& r) { return r.mean_side_prob_target; }),
                     col([](const ConditionSummary& r) { return r.mean_side_prob_background; })}});

  constexpr double kW = 420, kH = 260;
  std::string out = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{:.0f}\" height=\"{:.0f}\" font-family=\"sans-serif\">\n",
      kW * 2, kH * 3);
  out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (std::size_t i = 0; i < panels.size(); ++i) {
    out += detail::render_panel(panels[i], rows, kW * (i % 2), kH * (i / 2), kW, kH);
  }
  out += "</svg>\n";
  return out;
}

inline std::string report_text(const StatsBundle& b) {
  std::string out = "Per-condition summary (retained trials)\n\n";
  out += fmt::format("{:<6}{:>6}{:>6}{:>11}{:>11}{:>9}{:>8}{:>9}{:>9}{:>9}\n", "cond", "n", "excl", "mean rt s",
                     "median rt", "acc %", "fix n", "width", "first T", "side T");
  auto v = [](const std::optional<double>& x, double scale, int dec) {
    return x ? fmt::format("{:.{}f}", *x * scale, dec) : std::string("NA");
  };
  for (const auto& s : b.summaries) {
    out += fmt::format("{:<6}{:>6}{:>6}{:>11}{:>11}{:>9}{:>8}{:>9}{:>9}{:>9}\n", to_string(s.condition), s.n_trials,
                       s.n_excluded, v(s.mean_rt_ms, 1e-3, 3), v(s.median_rt_ms, 1e-3, 3), v(s.accuracy_pct, 1, 1),
                       v(s.mean_fixation_count, 1, 2), v(s.mean_scanpath_width_px, 1, 1),
                       v(s.p_first_target, 1, 3), v(s.mean_side_prob_target, 1, 3));
  }
  out += "\n" + stats_text(b);
  return out;
}

}  // namespace ocugaze
