#pragma once

// Item-level bottom-up saliency by iso-feature suppression.
//
// Each item drives one response per feature channel. Nearby items sharing the
// channel's feature suppress it:
//
//   r_i = baseline * max(0, 1 - w * sum_{j != i, d_ij <= radius} same(i,j) e^{-decay d_ij} / Z)
//
// where Z is the kernel mass of a complete neighbourhood, so an item fully
// surrounded by same-feature items is suppressed by exactly w. Saliency is the
// max over channels, and the most salient item is the predicted gaze target.

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include <fmt/format.h>

#include "ocugaze/error.hpp"
#include "ocugaze/scene.hpp"

namespace ocugaze {

enum class Channel { Orientation, Ocularity };

struct ChannelParams {
  double baseline = 1.0;
  double suppress_weight = 0.5;
  double radius = 2.5;  // grid units
  double decay = 1.0;
  double similarity_threshold = 0.0;
};

struct SaliencyParams {
  // Orientation feature distance is in degrees (tilts differ by 2 * tilt_deg).
  ChannelParams orientation{0.9, 0.45, 2.5, 1.0, 0.0};
  // Ocularity feature distance is |O_i - O_j|.
  ChannelParams ocularity{1.0, 0.70, 2.5, 1.0, 0.01};

  const ChannelParams& operator[](Channel c) const {
    return c == Channel::Orientation ? orientation : ocularity;
  }
};

inline void validate(const ChannelParams& p) {
  auto fail = [](const char* m) { throw Error(ErrorKind::Config, m); };
  if (!(p.baseline > 0)) fail("channel baseline must be positive");
  if (!(p.suppress_weight >= 0 && p.suppress_weight < 1)) fail("suppress_weight must lie in [0, 1)");
  if (!(p.radius > 0)) fail("channel radius must be positive");
  if (!(p.decay >= 0)) fail("channel decay must be non-negative");
  if (!(p.similarity_threshold >= 0)) fail("similarity_threshold must be non-negative");
}

struct SaliencyMap {
  int rows = 0;
  int cols = 0;
  std::vector<double> orientation;
  std::vector<double> ocularity;
  std::vector<double> saliency;
  Cell argmax_cell;
  bool tied = false;

  std::size_t index(Cell c) const { return static_cast<std::size_t>(c.row) * cols + c.col; }
  double at(Cell c) const { return saliency[index(c)]; }

  friend bool operator==(const SaliencyMap&, const SaliencyMap&) = default;
};

namespace detail {

struct Offset {
  int dr, dc;
  double weight;
};

inline std::vector<Offset> neighbourhood(const ChannelParams& p) {
  std::vector<Offset> out;
  const int reach = static_cast<int>(std::floor(p.radius));
  for (int dr = -reach; dr <= reach; ++dr) {
    for (int dc = -reach; dc <= reach; ++dc) {
      if (dr == 0 && dc == 0) continue;
      const double d = std::hypot(dr, dc);
      if (d <= p.radius) out.push_back({dr, dc, std::exp(-p.decay * d)});
    }
  }
  return out;
}

inline std::vector<double> channel_features(const SceneSpec& s, Channel ch) {
  std::vector<double> f;
  f.reserve(s.items.size());
  for (const auto& it : s.items) {
    if (ch == Channel::Orientation) {
      f.push_back(it.tilt == TiltSign::RaisedRight ? s.geometry.tilt_deg : -s.geometry.tilt_deg);
    } else {
      f.push_back(it.ocularity());
    }
  }
  return f;
}

}  // namespace detail

/// Cells whose whole suppression neighbourhood lies inside the grid.
inline bool is_interior(const GridGeometry& g, Cell c, double radius) {
  const int reach = static_cast<int>(std::floor(radius));
  return c.row >= reach && c.row < g.rows - reach && c.col >= reach && c.col < g.cols - reach;
}

inline std::vector<double> channel_response(const SceneSpec& scene, Channel channel,
                                            const ChannelParams& params) {
  validate(params);
  const auto& g = scene.geometry;
  if (scene.items.size() != g.cell_count()) {
    throw Error(ErrorKind::Validation, "scene items do not cover the grid");
  }
  const auto hood = detail::neighbourhood(params);
  double z = 0;
  for (const auto& o : hood) z += o.weight;
  const auto feat = detail::channel_features(scene, channel);

  std::vector<double> resp(g.cell_count());
  for (int r = 0; r < g.rows; ++r) {
    for (int c = 0; c < g.cols; ++c) {
      const double fi = feat[g.index({r, c})];
      double s = 0;
      for (const auto& o : hood) {
        const Cell n{r + o.dr, c + o.dc};
        if (!g.in_bounds(n)) continue;
        if (std::abs(feat[g.index(n)] - fi) <= params.similarity_threshold) s += o.weight;
      }
      const double suppression = z > 0 ? params.suppress_weight * s / z : 0.0;
      resp[g.index({r, c})] = params.baseline * std::max(0.0, 1.0 - suppression);
    }
  }
  return resp;
}

inline constexpr double kTieTolerance = 1e-12;

inline SaliencyMap compute_saliency(const SceneSpec& scene, const SaliencyParams& params = {}) {
  SaliencyMap m;
  m.rows = scene.geometry.rows;
  m.cols = scene.geometry.cols;
  m.orientation = channel_response(scene, Channel::Orientation, params.orientation);
  m.ocularity = channel_response(scene, Channel::Ocularity, params.ocularity);
  m.saliency.resize(m.orientation.size());
  for (std::size_t i = 0; i < m.saliency.size(); ++i) {
    m.saliency[i] = std::max(m.orientation[i], m.ocularity[i]);
  }
  // Row-major scan keeps the first maximum, which is the (row, col) tie-break.
  std::size_t best = 0;
  for (std::size_t i = 1; i < m.saliency.size(); ++i) {
    if (m.saliency[i] > m.saliency[best]) best = i;
  }
  int near_max = 0;
  for (double v : m.saliency) near_max += (m.saliency[best] - v) <= kTieTolerance;
  m.argmax_cell = {static_cast<int>(best) / m.cols, static_cast<int>(best) % m.cols};
  m.tied = near_max > 1;
  return m;
}

struct FixationPrediction {
  Cell cell;
  bool tied = false;
};

inline FixationPrediction predict_first_fixation(const SaliencyMap& map) {
  if (map.saliency.empty()) throw Error(ErrorKind::Validation, "empty saliency map");
  return {map.argmax_cell, map.tied};
}

}  // namespace ocugaze
