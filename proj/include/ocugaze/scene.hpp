#pragma once

// Trial scenes for the odd-one-out search task: grid geometry, the seven
// ocularity conditions, target/distractor placement and the scene file format.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <fmt/format.h>
#include <json.hpp>

#include "ocugaze/error.hpp"
#include "ocugaze/ocularity.hpp"
#include "ocugaze/rng.hpp"

namespace ocugaze {

inline constexpr int kSceneSchemaVersion = 1;

struct Point {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Point&, const Point&) = default;
};

struct Cell {
  int row = 0;
  int col = 0;
  friend bool operator==(const Cell&, const Cell&) = default;
  friend auto operator<=>(const Cell&, const Cell&) = default;
};

struct Rect {
  double left = 0, top = 0, right = 0, bottom = 0;
  bool contains(Point p) const { return p.x >= left && p.x <= right && p.y >= top && p.y <= bottom; }
};

enum class Side { Left, Right };
enum class Eye { Left, Right };
enum class TiltSign { RaisedLeft, RaisedRight };

inline std::string_view to_string(Side s) { return s == Side::Left ? "left" : "right"; }
inline std::string_view to_string(Eye e) { return e == Eye::Left ? "left" : "right"; }
inline std::string_view to_string(TiltSign t) {
  return t == TiltSign::RaisedLeft ? "raised-left" : "raised-right";
}
inline Side opposite(Side s) { return s == Side::Left ? Side::Right : Side::Left; }
inline Eye opposite(Eye e) { return e == Eye::Left ? Eye::Right : Eye::Left; }
inline TiltSign opposite(TiltSign t) {
  return t == TiltSign::RaisedLeft ? TiltSign::RaisedRight : TiltSign::RaisedLeft;
}

inline Side parse_side(std::string_view s) {
  if (s == "left") return Side::Left;
  if (s == "right") return Side::Right;
  throw Error(ErrorKind::Schema, fmt::format("invalid side '{}'", s));
}
inline Eye parse_eye(std::string_view s) {
  if (s == "left") return Eye::Left;
  if (s == "right") return Eye::Right;
  throw Error(ErrorKind::Schema, fmt::format("invalid eye '{}'", s));
}
inline TiltSign parse_tilt(std::string_view s) {
  if (s == "raised-left") return TiltSign::RaisedLeft;
  if (s == "raised-right") return TiltSign::RaisedRight;
  throw Error(ErrorKind::Schema, fmt::format("invalid tilt '{}'", s));
}

enum class Condition { BASE, BAM, BAMI, MAB, MABI, DC, DI };

inline constexpr std::array<Condition, 7> kAllConditions = {
    Condition::BASE, Condition::BAM, Condition::BAMI, Condition::MAB,
    Condition::MABI, Condition::DC,  Condition::DI};

inline std::string_view to_string(Condition c) {
  switch (c) {
    case Condition::BASE: return "BASE";
    case Condition::BAM: return "BAM";
    case Condition::BAMI: return "BAMI";
    case Condition::MAB: return "MAB";
    case Condition::MABI: return "MABI";
    case Condition::DC: return "DC";
    case Condition::DI: return "DI";
  }
  return "?";
}

inline std::optional<Condition> try_parse_condition(std::string_view s) {
  for (Condition c : kAllConditions) {
    if (to_string(c) == s) return c;
  }
  return std::nullopt;
}

inline Condition parse_condition(std::string_view s) {
  if (auto c = try_parse_condition(s)) return *c;
  throw Error(ErrorKind::Schema, fmt::format("unknown condition '{}'", s));
}

// Conditions in which a non-target distractor carries the ocularity singleton.
inline bool has_distractor(Condition c) {
  return c == Condition::BAMI || c == Condition::MABI || c == Condition::DI;
}

struct GridGeometry {
  int cols = 30;
  int rows = 22;
  double cell_w = 32;
  double cell_h = 32;
  double bar_len = 24;
  double bar_thick = 4;
  double tilt_deg = 10;
  int canvas_w = 1024;
  int canvas_h = 768;
  int dot_jitter_max = 2;
  double outline_margin = 6;

  double origin_x() const { return (canvas_w - cols * cell_w) / 2.0; }
  double origin_y() const { return (canvas_h - rows * cell_h) / 2.0; }
  double cross_x() const { return origin_x() + cols * cell_w / 2.0; }
  double cross_y() const { return origin_y() + rows * cell_h / 2.0; }
  Point cross() const { return {cross_x(), cross_y()}; }

  Point cell_center(Cell c) const {
    return {origin_x() + (c.col + 0.5) * cell_w, origin_y() + (c.row + 0.5) * cell_h};
  }
  Rect grid_rect() const {
    return {origin_x(), origin_y(), origin_x() + cols * cell_w, origin_y() + rows * cell_h};
  }
  Rect outline_rect() const {
    Rect r = grid_rect();
    return {r.left - outline_margin, r.top - outline_margin, r.right + outline_margin,
            r.bottom + outline_margin};
  }
  Side side_of(double x) const { return x < cross_x() ? Side::Left : Side::Right; }
  Side side_of(Cell c) const { return side_of(cell_center(c).x); }
  bool in_bounds(Cell c) const { return c.row >= 0 && c.row < rows && c.col >= 0 && c.col < cols; }
  std::size_t index(Cell c) const { return static_cast<std::size_t>(c.row) * cols + c.col; }
  std::size_t cell_count() const { return static_cast<std::size_t>(rows) * cols; }

  friend bool operator==(const GridGeometry&, const GridGeometry&) = default;
};

inline void validate(const GridGeometry& g) {
  auto fail = [](const std::string& m) { throw Error(ErrorKind::Geometry, m); };
  if (g.cols <= 0 || g.rows <= 0) fail("grid must have positive dimensions");
  if (g.cols % 2 != 0 || g.rows % 2 != 0) {
    fail("cols and rows must be even so the fixation cross sits on a cell corner");
  }
  // Candidate ring reaches 8 columns and 5 rows from the centre, plus one cell of margin.
  if (g.cols < 18 || g.rows < 12) fail("grid too small for the target candidate ring (min 18x12)");
  if (!(g.cell_w > 0 && g.cell_h > 0)) fail("cell size must be positive");
  if (!(g.bar_len > 0 && g.bar_thick > 0)) fail("bar size must be positive");
  if (g.bar_len > std::min(g.cell_w, g.cell_h)) fail("bar longer than a cell");
  if (!(g.tilt_deg > 0 && g.tilt_deg < 90)) fail("tilt_deg must lie in (0, 90)");
  if (g.dot_jitter_max < 1) fail("dot_jitter_max must be at least 1");
  if (!(g.outline_margin >= 0)) fail("outline_margin must be non-negative");
  const Rect o = g.outline_rect();
  if (g.cols * g.cell_w > g.canvas_w || g.rows * g.cell_h > g.canvas_h || o.left < 0 || o.top < 0 ||
      o.right >= g.canvas_w || o.bottom >= g.canvas_h) {
    fail(fmt::format("canvas {}x{} too small for a {}x{} grid of {}x{} cells", g.canvas_w,
                     g.canvas_h, g.cols, g.rows, g.cell_w, g.cell_h));
  }
}

// The eight target candidates: cells whose centres sit sqrt(62.5) cells from
// the cross, at (+-7.5, +-2.5) and (+-6.5, +-4.5). Left side first.
inline std::vector<Cell> candidate_ring(const GridGeometry& g) {
  static constexpr std::array<std::array<int, 2>, 4> kHalfOffsets = {
      {{-15, -5}, {-15, 5}, {-13, -9}, {-13, 9}}};
  // A centre offset of h/2 cells (h odd) maps to index n/2 + (h - 1)/2, exact since h - 1 is even.
  std::vector<Cell> out;
  for (int sign : {1, -1}) {
    for (const auto& [dxh, dyh] : kHalfOffsets) {
      out.push_back({g.rows / 2 + (dyh - 1) / 2, g.cols / 2 + (sign * dxh - 1) / 2});
    }
  }
  return out;
}

struct SceneItem {
  int row = 0;
  int col = 0;
  TiltSign tilt = TiltSign::RaisedRight;
  OcularPair ocular;
  bool is_target = false;
  bool is_distractor = false;

  Cell cell() const { return {row, col}; }
  double ocularity() const { return compute_ocularity(ocular).o; }
  friend bool operator==(const SceneItem&, const SceneItem&) = default;
};

struct SceneSpec {
  GridGeometry geometry;
  Condition condition = Condition::BASE;
  std::vector<SceneItem> items;  // row-major
  Cell target_cell;
  std::optional<Cell> distractor_cell;
  // Eye carrying the monocular non-targets (BAM, BAMI, DC, DI) or the
  // monocular singleton (MAB, MABI). Unused by BASE.
  Eye monocular_eye = Eye::Left;
  std::uint64_t seed = 0;

  const SceneItem& item(Cell c) const { return items.at(geometry.index(c)); }
  Side target_side() const { return geometry.side_of(target_cell); }

  // The item whose ocularity differs from the rest, if any.
  std::optional<Cell> ocularity_singleton() const {
    if (condition == Condition::BASE) return std::nullopt;
    return has_distractor(condition) ? distractor_cell : std::optional<Cell>(target_cell);
  }

  friend bool operator==(const SceneSpec&, const SceneSpec&) = default;
};

inline std::string scene_id(const SceneSpec& s) {
  return fmt::format("{}_{:016x}", to_string(s.condition), s.seed);
}

namespace detail {

inline double monocular_o(Eye e) { return e == Eye::Left ? 1.0 : -1.0; }

}  // namespace detail

inline SceneSpec make_scene(const GridGeometry& geometry, Condition condition, std::uint64_t seed) {
  validate(geometry);
  Rng rng = make_rng(seed, 0x5CE7E);

  // Draw order is fixed so every condition shares the same layout for a seed.
  const TiltSign background_tilt = coin(rng) ? TiltSign::RaisedLeft : TiltSign::RaisedRight;
  const std::vector<Cell> ring = candidate_ring(geometry);
  const Cell target = ring[std::uniform_int_distribution<std::size_t>(0, ring.size() - 1)(rng)];
  const Eye eye = coin(rng) ? Eye::Left : Eye::Right;
  std::vector<Cell> far_side;
  for (Cell c : ring) {
    if (geometry.side_of(c) != geometry.side_of(target)) far_side.push_back(c);
  }
  const Cell distractor =
      far_side[std::uniform_int_distribution<std::size_t>(0, far_side.size() - 1)(rng)];

  SceneSpec s;
  s.geometry = geometry;
  s.condition = condition;
  s.target_cell = target;
  if (has_distractor(condition)) s.distractor_cell = distractor;
  s.monocular_eye = eye;
  s.seed = seed;

  const double mono = detail::monocular_o(eye);
  double o_target = 0, o_other = 0, o_distractor = 0;
  switch (condition) {
    case Condition::BASE: break;
    case Condition::BAM: o_other = mono; o_target = 0; break;
    case Condition::BAMI: o_other = o_target = mono; o_distractor = 0; break;
    case Condition::MAB: o_target = mono; break;
    case Condition::MABI: o_distractor = mono; break;
    case Condition::DC: o_other = mono; o_target = -mono; break;
    case Condition::DI: o_other = o_target = mono; o_distractor = -mono; break;
  }

  s.items.reserve(geometry.cell_count());
  for (int r = 0; r < geometry.rows; ++r) {
    for (int c = 0; c < geometry.cols; ++c) {
      SceneItem it;
      it.row = r;
      it.col = c;
      it.is_target = Cell{r, c} == target;
      it.is_distractor = s.distractor_cell && Cell{r, c} == *s.distractor_cell;
      it.tilt = it.is_target ? opposite(background_tilt) : background_tilt;
      const double o = it.is_target ? o_target : it.is_distractor ? o_distractor : o_other;
      it.ocular = decompose_to_eyes({o}, 1.0);
      s.items.push_back(it);
    }
  }
  return s;
}

/// Same scene with the two eyes exchanged.
inline SceneSpec mirror_eyes(SceneSpec s) {
  for (auto& it : s.items) it.ocular = it.ocular.swapped();
  s.monocular_eye = opposite(s.monocular_eye);
  return s;
}

/// One anchoring dot per cell at its bottom-right corner, nudged along one axis.
inline std::vector<Point> jitter_anchors(const GridGeometry& g, std::uint64_t seed) {
  if (g.dot_jitter_max < 1) throw Error(ErrorKind::Geometry, "dot_jitter_max must be at least 1");
  Rng rng = make_rng(seed, 0xD075);
  std::uniform_int_distribution<int> magnitude(1, g.dot_jitter_max);
  std::vector<Point> dots;
  dots.reserve(g.cell_count());
  for (int r = 0; r < g.rows; ++r) {
    for (int c = 0; c < g.cols; ++c) {
      Point p{g.origin_x() + (c + 1) * g.cell_w, g.origin_y() + (r + 1) * g.cell_h};
      const bool horizontal = coin(rng);
      const int d = magnitude(rng) * (coin(rng) ? 1 : -1);
      (horizontal ? p.x : p.y) += d;
      dots.push_back(p);
    }
  }
  return dots;
}

/// Structural invariants of a scene; throws Validation on the first violation.
inline void validate(const SceneSpec& s) {
  auto fail = [](const std::string& m) { throw Error(ErrorKind::Validation, m); };
  validate(s.geometry);
  const auto& g = s.geometry;
  if (s.items.size() != g.cell_count()) {
    fail(fmt::format("expected {} items, found {}", g.cell_count(), s.items.size()));
  }
  int targets = 0, distractors = 0;
  for (std::size_t i = 0; i < s.items.size(); ++i) {
    const auto& it = s.items[i];
    if (g.index(it.cell()) != i || !g.in_bounds(it.cell())) fail(fmt::format("item {} out of order", i));
    if (it.is_target && it.is_distractor) fail(fmt::format("item {} is both target and distractor", i));
    const auto& p = it.ocular;
    if (!(p.c_left >= 0 && p.c_left <= 1 && p.c_right >= 0 && p.c_right <= 1) || !p.visible()) {
      fail(fmt::format("item {} has invalid ocular contrasts", i));
    }
    targets += it.is_target;
    distractors += it.is_distractor;
  }
  if (targets != 1) fail(fmt::format("expected exactly one target, found {}", targets));
  if (!g.in_bounds(s.target_cell) || !s.item(s.target_cell).is_target) fail("target_cell mismatch");
  if (has_distractor(s.condition)) {
    if (distractors != 1 || !s.distractor_cell) fail("condition requires exactly one distractor");
    if (!g.in_bounds(*s.distractor_cell) || !s.item(*s.distractor_cell).is_distractor) {
      fail("distractor_cell mismatch");
    }
    if (g.side_of(*s.distractor_cell) == g.side_of(s.target_cell)) {
      fail("distractor must lie on the opposite side from the target");
    }
  } else if (distractors != 0 || s.distractor_cell) {
    fail(fmt::format("condition {} has no distractor", to_string(s.condition)));
  }
  const TiltSign target_tilt = s.item(s.target_cell).tilt;
  for (const auto& it : s.items) {
    if (!it.is_target && it.tilt == target_tilt) fail("target must be the unique orientation singleton");
  }
}

// ---- scene file ----

inline nlohmann::ordered_json to_json(const GridGeometry& g) {
  return {{"cols", g.cols},           {"rows", g.rows},
          {"cell_w", g.cell_w},       {"cell_h", g.cell_h},
          {"bar_len", g.bar_len},     {"bar_thick", g.bar_thick},
          {"tilt_deg", g.tilt_deg},   {"canvas_w", g.canvas_w},
          {"canvas_h", g.canvas_h},   {"cross_x", g.cross_x()},
          {"cross_y", g.cross_y()},   {"dot_jitter_max", g.dot_jitter_max},
          {"outline_margin", g.outline_margin}};
}

namespace detail {

template <class T>
T required(const nlohmann::json& j, const char* key, const char* where) {
  if (!j.is_object() || !j.contains(key)) {
    throw Error(ErrorKind::Schema, fmt::format("{}: missing field '{}'", where, key));
  }
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw Error(ErrorKind::Schema, fmt::format("{}: field '{}' has the wrong type", where, key));
  }
}

template <class T>
void optional_into(const nlohmann::json& j, const char* key, T& out, const char* where) {
  if (j.contains(key)) out = required<T>(j, key, where);
}

inline nlohmann::ordered_json cell_json(Cell c) { return {{"row", c.row}, {"col", c.col}}; }

inline Cell cell_from(const nlohmann::json& j, const char* where) {
  return {required<int>(j, "row", where), required<int>(j, "col", where)};
}

}  // namespace detail

/// Fills geometry fields present in `j`; absent keys keep their current values.
inline void merge_geometry(const nlohmann::json& j, GridGeometry& g) {
  const char* w = "geometry";
  if (!j.is_object()) throw Error(ErrorKind::Schema, "geometry must be an object");
  detail::optional_into(j, "cols", g.cols, w);
  detail::optional_into(j, "rows", g.rows, w);
  detail::optional_into(j, "cell_w", g.cell_w, w);
  detail::optional_into(j, "cell_h", g.cell_h, w);
  detail::optional_into(j, "bar_len", g.bar_len, w);
  detail::optional_into(j, "bar_thick", g.bar_thick, w);
  detail::optional_into(j, "tilt_deg", g.tilt_deg, w);
  detail::optional_into(j, "canvas_w", g.canvas_w, w);
  detail::optional_into(j, "canvas_h", g.canvas_h, w);
  detail::optional_into(j, "dot_jitter_max", g.dot_jitter_max, w);
  detail::optional_into(j, "outline_margin", g.outline_margin, w);
}

inline nlohmann::ordered_json to_json(const SceneSpec& s) {
  nlohmann::ordered_json items = nlohmann::ordered_json::array();
  for (const auto& it : s.items) {
    items.push_back({{"row", it.row},
                     {"col", it.col},
                     {"tilt_sign", to_string(it.tilt)},
                     {"c_left", it.ocular.c_left},
                     {"c_right", it.ocular.c_right},
                     {"is_target", it.is_target},
                     {"is_distractor", it.is_distractor}});
  }
  nlohmann::ordered_json j;
  j["schema_version"] = kSceneSchemaVersion;
  j["geometry"] = to_json(s.geometry);
  j["condition"] = to_string(s.condition);
  j["target_cell"] = detail::cell_json(s.target_cell);
  j["distractor_cell"] = s.distractor_cell ? detail::cell_json(*s.distractor_cell) : nullptr;
  j["monocular_eye"] = to_string(s.monocular_eye);
  j["seed"] = s.seed;
  j["items"] = std::move(items);
  return j;
}

inline SceneSpec scene_from_json(const nlohmann::json& j) {
  const char* w = "scene";
  if (!j.is_object()) throw Error(ErrorKind::Schema, "scene must be a JSON object");
  const int version = detail::required<int>(j, "schema_version", w);
  if (version != kSceneSchemaVersion) {
    throw Error(ErrorKind::Version, fmt::format("unsupported scene schema_version {}", version));
  }
  SceneSpec s;
  if (!j.contains("geometry")) throw Error(ErrorKind::Schema, "scene: missing field 'geometry'");
  merge_geometry(j.at("geometry"), s.geometry);
  validate(s.geometry);
  for (const char* k : {"cross_x", "cross_y"}) {
    if (j["geometry"].contains(k)) {
      const double v = detail::required<double>(j["geometry"], k, "geometry");
      const double expect = k[6] == 'x' ? s.geometry.cross_x() : s.geometry.cross_y();
      if (std::abs(v - expect) > 1e-9) {
        throw Error(ErrorKind::Validation, fmt::format("geometry.{} must be the grid centre", k));
      }
    }
  }
  s.condition = parse_condition(detail::required<std::string>(j, "condition", w));
  s.target_cell = detail::cell_from(j.contains("target_cell") ? j["target_cell"] : nlohmann::json{}, "target_cell");
  if (j.contains("distractor_cell") && !j["distractor_cell"].is_null()) {
    s.distractor_cell = detail::cell_from(j["distractor_cell"], "distractor_cell");
  }
  s.monocular_eye = parse_eye(detail::required<std::string>(j, "monocular_eye", w));
  s.seed = detail::required<std::uint64_t>(j, "seed", w);
  if (!j.contains("items") || !j["items"].is_array()) {
    throw Error(ErrorKind::Schema, "scene: missing array 'items'");
  }
  for (const auto& ji : j["items"]) {
    SceneItem it;
    it.row = detail::required<int>(ji, "row", "item");
    it.col = detail::required<int>(ji, "col", "item");
    it.tilt = parse_tilt(detail::required<std::string>(ji, "tilt_sign", "item"));
    it.ocular.c_left = detail::required<double>(ji, "c_left", "item");
    it.ocular.c_right = detail::required<double>(ji, "c_right", "item");
    it.is_target = detail::required<bool>(ji, "is_target", "item");
    it.is_distractor = detail::required<bool>(ji, "is_distractor", "item");
    s.items.push_back(it);
  }
  validate(s);
  return s;
}

}  // namespace ocugaze
