#pragma once

// Dichoptic rendering of a scene into left/right-eye 8-bit grayscale rasters.

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <utility>
#include <vector>

#include "ocugaze/error.hpp"
#include "ocugaze/scene.hpp"

namespace ocugaze {

struct Raster {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // row-major

  Raster() = default;
  Raster(int w, int h) : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, 0) {}

  std::uint8_t& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }

  friend bool operator==(const Raster&, const Raster&) = default;
};

struct StereoPair {
  Raster left;
  Raster right;
};

namespace detail {

inline constexpr int kSuper = 4;  // supersamples per axis for anti-aliasing
inline constexpr double kCrossArm = 6.0;
inline constexpr double kCrossThick = 2.0;
inline constexpr double kDotRadius = 1.5;

inline std::uint8_t to_level(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

// Writes max(existing, level * coverage) over the pixels touched by `inside`.
template <class Inside>
void paint(Raster& r, double x0, double y0, double x1, double y1, double level, Inside inside) {
  const int px0 = std::max(0, static_cast<int>(std::floor(x0)));
  const int py0 = std::max(0, static_cast<int>(std::floor(y0)));
  const int px1 = std::min(r.width - 1, static_cast<int>(std::ceil(x1)));
  const int py1 = std::min(r.height - 1, static_cast<int>(std::ceil(y1)));
  for (int py = py0; py <= py1; ++py) {
    for (int px = px0; px <= px1; ++px) {
      int hits = 0;
      for (int sy = 0; sy < kSuper; ++sy) {
        for (int sx = 0; sx < kSuper; ++sx) {
          hits += inside(px + (sx + 0.5) / kSuper, py + (sy + 0.5) / kSuper);
        }
      }
      if (hits == 0) continue;
      const auto v = to_level(level * hits / double(kSuper * kSuper));
      r.at(px, py) = std::max(r.at(px, py), v);
    }
  }
}

inline void paint_bar(Raster& r, Point c, double len, double thick, double tilt_deg, TiltSign tilt,
                      double level) {
  if (level <= 0) return;
  const double a = tilt_deg * std::numbers::pi / 180.0;
  // Image y grows downward: a bar raised on the right climbs as x increases.
  const double ux = std::cos(a);
  const double uy = tilt == TiltSign::RaisedRight ? -std::sin(a) : std::sin(a);
  const double ext = len / 2 + thick;
  paint(r, c.x - ext, c.y - ext, c.x + ext, c.y + ext, level, [&](double x, double y) {
    const double dx = x - c.x, dy = y - c.y;
    const double along = dx * ux + dy * uy;
    const double across = -dx * uy + dy * ux;
    return std::abs(along) <= len / 2 && std::abs(across) <= thick / 2;
  });
}

inline void paint_frame(Raster& r, const GridGeometry& g, std::uint64_t seed) {
  const Rect o = g.outline_rect();
  // 1 px outline
  paint(r, o.left - 1, o.top - 1, o.right + 1, o.bottom + 1, 1.0, [&](double x, double y) {
    const bool in_outer = x >= o.left - 0.5 && x <= o.right + 0.5 && y >= o.top - 0.5 && y <= o.bottom + 0.5;
    const bool in_inner = x > o.left + 0.5 && x < o.right - 0.5 && y > o.top + 0.5 && y < o.bottom - 0.5;
    return in_outer && !in_inner;
  });
  const Point cross = g.cross();
  paint(r, cross.x - kCrossArm, cross.y - kCrossArm, cross.x + kCrossArm, cross.y + kCrossArm, 1.0,
        [&](double x, double y) {
          const double dx = std::abs(x - cross.x), dy = std::abs(y - cross.y);
          return (dx <= kCrossArm && dy <= kCrossThick / 2) || (dy <= kCrossArm && dx <= kCrossThick / 2);
        });
  for (const Point& d : jitter_anchors(g, seed)) {
    paint(r, d.x - kDotRadius, d.y - kDotRadius, d.x + kDotRadius, d.y + kDotRadius, 1.0,
          [&](double x, double y) { return std::hypot(x - d.x, y - d.y) <= kDotRadius; });
  }
}

}  // namespace detail

inline StereoPair render_stereo_pair(const SceneSpec& scene) {
  const auto& g = scene.geometry;
  validate(g);
  StereoPair out{Raster(g.canvas_w, g.canvas_h), Raster(g.canvas_w, g.canvas_h)};
  detail::paint_frame(out.left, g, scene.seed);
  out.right = out.left;
  for (const auto& it : scene.items) {
    const Point c = g.cell_center(it.cell());
    detail::paint_bar(out.left, c, g.bar_len, g.bar_thick, g.tilt_deg, it.tilt, it.ocular.c_left);
    detail::paint_bar(out.right, c, g.bar_len, g.bar_thick, g.tilt_deg, it.tilt, it.ocular.c_right);
  }
  return out;
}

/// Cyclopean debug view: per-pixel max of the two eyes.
inline Raster fuse(const StereoPair& pair) {
  Raster f = pair.left;
  for (std::size_t i = 0; i < f.pixels.size(); ++i) {
    f.pixels[i] = std::max(f.pixels[i], pair.right.pixels[i]);
  }
  return f;
}

inline Raster render_fused_preview(const SceneSpec& scene) { return fuse(render_stereo_pair(scene)); }

/// Per-cell values painted as blocks, scaled so `max_value` maps to white.
inline Raster render_cell_heatmap(const GridGeometry& g, const std::vector<double>& values) {
  Raster r(g.canvas_w, g.canvas_h);
  double hi = 0;
  for (double v : values) hi = std::max(hi, v);
  if (hi <= 0) hi = 1;
  for (int row = 0; row < g.rows; ++row) {
    for (int col = 0; col < g.cols; ++col) {
      const auto level = detail::to_level(values.at(g.index({row, col})) / hi);
      const int x0 = static_cast<int>(std::lround(g.origin_x() + col * g.cell_w));
      const int y0 = static_cast<int>(std::lround(g.origin_y() + row * g.cell_h));
      const int x1 = static_cast<int>(std::lround(g.origin_x() + (col + 1) * g.cell_w));
      const int y1 = static_cast<int>(std::lround(g.origin_y() + (row + 1) * g.cell_h));
      for (int y = y0; y < y1; ++y) {
        for (int x = x0; x < x1; ++x) r.at(x, y) = level;
      }
    }
  }
  return r;
}

// ---- PNG I/O (8-bit grayscale) ----

inline void write_png(const Raster& r, const std::filesystem::path& path) {
  std::FILE* fp = std::fopen(path.string().c_str(), "wb");
  if (!fp) throw Error(ErrorKind::Io, "cannot open " + path.string() + " for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw Error(ErrorKind::Io, "libpng failed writing " + path.string());
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, r.width, r.height, 8, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < r.height; ++y) {
    png_write_row(png, const_cast<png_bytep>(r.pixels.data() + static_cast<std::size_t>(y) * r.width));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  if (std::fclose(fp) != 0) throw Error(ErrorKind::Io, "error closing " + path.string());
}

inline Raster read_png(const std::filesystem::path& path) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.string().c_str())) {
    throw Error(ErrorKind::Io, "cannot read PNG " + path.string());
  }
  img.format = PNG_FORMAT_GRAY;
  Raster r(static_cast<int>(img.width), static_cast<int>(img.height));
  if (!png_image_finish_read(&img, nullptr, r.pixels.data(), 0, nullptr)) {
    png_image_free(&img);
    throw Error(ErrorKind::Io, "cannot decode PNG " + path.string());
  }
  return r;
}

}  // namespace ocugaze
