#pragma once

// Per-item ocular contrast: luminance normalization, ocularity and its inverse.

#include <algorithm>
#include <cmath>

#include "ocugaze/error.hpp"

namespace ocugaze {

struct LuminanceSample {
  double value = 0.0;
  double background = 0.0;
  // Maximum of (L - L0) over all items in the scene.
  double max_excess = 1.0;
};

struct OcularPair {
  double c_left = 1.0;
  double c_right = 1.0;

  bool visible() const { return c_left > 0.0 || c_right > 0.0; }
  OcularPair swapped() const { return {c_right, c_left}; }
  friend bool operator==(const OcularPair&, const OcularPair&) = default;
};

// Positive means left-eye dominant, negative right-eye dominant.
struct Ocularity {
  double o = 0.0;
};

inline double compute_contrast(const LuminanceSample& s) {
  if (!(s.max_excess > 0.0)) {
    throw Error(ErrorKind::DegenerateScene, "max luminance excess must be positive");
  }
  if (s.value < s.background) {
    throw Error(ErrorKind::NegativeExcess, "item luminance below background");
  }
  return std::clamp((s.value - s.background) / s.max_excess, 0.0, 1.0);
}

inline Ocularity compute_ocularity(const OcularPair& p) {
  const double sum = p.c_left + p.c_right;
  if (!(sum > 0.0)) {
    throw Error(ErrorKind::UndefinedOcularity, "both eye contrasts are zero");
  }
  return {std::clamp((p.c_left - p.c_right) / sum, -1.0, 1.0)};
}

/// Per-eye contrasts realizing ocularity `o`, with the dominant eye at `c_max`.
inline OcularPair decompose_to_eyes(Ocularity o, double c_max) {
  if (!(std::abs(o.o) <= 1.0)) {
    throw Error(ErrorKind::Domain, "ocularity must lie in [-1, 1]");
  }
  if (!(c_max > 0.0 && c_max <= 1.0)) {
    throw Error(ErrorKind::Domain, "c_max must lie in (0, 1]");
  }
  const double a = std::abs(o.o);
  const double weak = c_max * (1.0 - a) / (1.0 + a);
  if (o.o >= 0.0) return {c_max, weak};
  return {weak, c_max};
}

}  // namespace ocugaze
