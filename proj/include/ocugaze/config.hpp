#pragma once

// Run configuration: geometry, saliency model, observer and fixation detection.
// JSON config files may set any subset of fields; unknown keys are rejected.

#include <array>
#include <filesystem>
#include <fstream>
#include <string>

#include <fmt/format.h>
#include <json.hpp>
#include <openssl/evp.h>

#include "ocugaze/error.hpp"
#include "ocugaze/metrics.hpp"
#include "ocugaze/observer.hpp"
#include "ocugaze/saliency.hpp"
#include "ocugaze/scene.hpp"

namespace ocugaze {

struct Config {
  GridGeometry geometry;
  SaliencyParams saliency;
  ObserverParams observer;
  DetectionParams detection;

  SimulationSettings simulation() const { return {geometry, saliency, observer}; }
};

namespace detail {

inline void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> known, const char* where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : known) ok = ok || it.key() == k;
    if (!ok) throw Error(ErrorKind::Config, fmt::format("{}: unknown key '{}'", where, it.key()));
  }
}

template <class T>
void cfg(const nlohmann::json& j, const char* key, T& out, const char* where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw Error(ErrorKind::Config, fmt::format("{}.{} has the wrong type", where, key));
  }
}

inline nlohmann::ordered_json to_json(const ChannelParams& p) {
  return {{"baseline", p.baseline},
          {"suppress_weight", p.suppress_weight},
          {"radius", p.radius},
          {"decay", p.decay},
          {"similarity_threshold", p.similarity_threshold}};
}

inline void merge(const nlohmann::json& j, ChannelParams& p, const char* where) {
  if (!j.is_object()) throw Error(ErrorKind::Config, fmt::format("{} must be an object", where));
  reject_unknown(j, {"baseline", "suppress_weight", "radius", "decay", "similarity_threshold"}, where);
  cfg(j, "baseline", p.baseline, where);
  cfg(j, "suppress_weight", p.suppress_weight, where);
  cfg(j, "radius", p.radius, where);
  cfg(j, "decay", p.decay, where);
  cfg(j, "similarity_threshold", p.similarity_threshold, where);
}

}  // namespace detail

inline nlohmann::ordered_json to_json(const ObserverParams& p) {
  return {{"softmax_temp", p.softmax_temp},
          {"ior_radius", p.ior_radius},
          {"ior_strength", p.ior_strength},
          {"ior_memory", p.ior_memory},
          {"fix_dur_mu", p.fix_dur_mu},
          {"fix_dur_sigma", p.fix_dur_sigma},
          {"min_fix_ms", p.min_fix_ms},
          {"saccade_speed", p.saccade_speed},
          {"landing_noise_sd", p.landing_noise_sd},
          {"gaze_jitter_sd", p.gaze_jitter_sd},
          {"recog_prob_target", p.recog_prob_target},
          {"confuse_prob_distractor", p.confuse_prob_distractor},
          {"sample_rate", p.sample_rate},
          {"max_trial_ms", p.max_trial_ms},
          {"fixation_period_ms", p.fixation_period_ms},
          {"feedback_ms", p.feedback_ms},
          {"free_view_ms", p.free_view_ms}};
}

inline nlohmann::ordered_json to_json(const Config& c) {
  nlohmann::ordered_json j;
  j["geometry"] = to_json(c.geometry);
  j["geometry"].erase("cross_x");
  j["geometry"].erase("cross_y");
  j["saliency"] = {{"orientation", detail::to_json(c.saliency.orientation)},
                   {"ocularity", detail::to_json(c.saliency.ocularity)}};
  j["observer"] = to_json(c.observer);
  j["detection"] = {{"dispersion_px", c.detection.dispersion_px},
                    {"min_duration_ms", c.detection.min_duration_ms},
                    {"merge_gap_ms", c.detection.merge_gap_ms},
                    {"merge_distance_px", c.detection.merge_distance_px}};
  return j;
}

inline void merge_config(const nlohmann::json& j, Config& c) {
  if (!j.is_object()) throw Error(ErrorKind::Config, "config must be a JSON object");
  detail::reject_unknown(j, {"geometry", "saliency", "observer", "detection"}, "config");
  if (j.contains("geometry")) {
    const auto& g = j["geometry"];
    if (!g.is_object()) throw Error(ErrorKind::Config, "geometry must be an object");
    detail::reject_unknown(g, {"cols", "rows", "cell_w", "cell_h", "bar_len", "bar_thick", "tilt_deg", "canvas_w",
                               "canvas_h", "dot_jitter_max", "outline_margin"},
                           "geometry");
    try {
      merge_geometry(g, c.geometry);
    } catch (const Error& e) {
      throw Error(ErrorKind::Config, e.detail());
    }
  }
  if (j.contains("saliency")) {
    const auto& s = j["saliency"];
    if (!s.is_object()) throw Error(ErrorKind::Config, "saliency must be an object");
    detail::reject_unknown(s, {"orientation", "ocularity"}, "saliency");
    if (s.contains("orientation")) detail::merge(s["orientation"], c.saliency.orientation, "saliency.orientation");
    if (s.contains("ocularity")) detail::merge(s["ocularity"], c.saliency.ocularity, "saliency.ocularity");
  }
  if (j.contains("observer")) {
    const auto& o = j["observer"];
    const char* w = "observer";
    if (!o.is_object()) throw Error(ErrorKind::Config, "observer must be an object");
    detail::reject_unknown(o, {"softmax_temp", "ior_radius", "ior_strength", "ior_memory", "fix_dur_mu", "fix_dur_sigma",
                               "min_fix_ms", "saccade_speed", "landing_noise_sd", "gaze_jitter_sd",
                               "recog_prob_target", "confuse_prob_distractor", "sample_rate", "max_trial_ms",
                               "fixation_period_ms", "feedback_ms", "free_view_ms"},
                           w);
    auto& p = c.observer;
    detail::cfg(o, "softmax_temp", p.softmax_temp, w);
    detail::cfg(o, "ior_radius", p.ior_radius, w);
    detail::cfg(o, "ior_strength", p.ior_strength, w);
    detail::cfg(o, "ior_memory", p.ior_memory, w);
    detail::cfg(o, "fix_dur_mu", p.fix_dur_mu, w);
    detail::cfg(o, "fix_dur_sigma", p.fix_dur_sigma, w);
    detail::cfg(o, "min_fix_ms", p.min_fix_ms, w);
    detail::cfg(o, "saccade_speed", p.saccade_speed, w);
    detail::cfg(o, "landing_noise_sd", p.landing_noise_sd, w);
    detail::cfg(o, "gaze_jitter_sd", p.gaze_jitter_sd, w);
    detail::cfg(o, "recog_prob_target", p.recog_prob_target, w);
    detail::cfg(o, "confuse_prob_distractor", p.confuse_prob_distractor, w);
    detail::cfg(o, "sample_rate", p.sample_rate, w);
    detail::cfg(o, "max_trial_ms", p.max_trial_ms, w);
    detail::cfg(o, "fixation_period_ms", p.fixation_period_ms, w);
    detail::cfg(o, "feedback_ms", p.feedback_ms, w);
    detail::cfg(o, "free_view_ms", p.free_view_ms, w);
  }
  if (j.contains("detection")) {
    const auto& d = j["detection"];
    if (!d.is_object()) throw Error(ErrorKind::Config, "detection must be an object");
    detail::reject_unknown(d, {"dispersion_px", "min_duration_ms", "merge_gap_ms", "merge_distance_px"}, "detection");
    detail::cfg(d, "dispersion_px", c.detection.dispersion_px, "detection");
    detail::cfg(d, "min_duration_ms", c.detection.min_duration_ms, "detection");
    detail::cfg(d, "merge_gap_ms", c.detection.merge_gap_ms, "detection");
    detail::cfg(d, "merge_distance_px", c.detection.merge_distance_px, "detection");
  }
}

inline void validate(const Config& c) {
  try {
    validate(c.geometry);
  } catch (const Error& e) {
    throw Error(ErrorKind::Config, e.detail());
  }
  validate(c.saliency.orientation);
  validate(c.saliency.ocularity);
  validate(c.observer);
  if (!(c.detection.dispersion_px > 0 && c.detection.min_duration_ms > 0)) {
    throw Error(ErrorKind::Config, "detection thresholds must be positive");
  }
  if (!(c.detection.merge_gap_ms >= 0 && c.detection.merge_distance_px >= 0)) {
    throw Error(ErrorKind::Config, "detection merge limits must be non-negative");
  }
}

inline Config load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Config, "cannot open config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorKind::Config, fmt::format("{}: {}", path.string(), e.what()));
  }
  Config c;
  merge_config(j, c);
  validate(c);
  return c;
}

/// Hex SHA-256 of a string.
inline std::string sha256_hex(const std::string& data) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md.data(), &len, EVP_sha256(), nullptr) != 1) {
    throw Error(ErrorKind::Io, "SHA-256 digest failed");
  }
  std::string out;
  for (unsigned int i = 0; i < len; ++i) out += fmt::format("{:02x}", md[i]);
  return out;
}

inline std::string params_digest(const Config& c) { return sha256_hex(to_json(c).dump()); }

}  // namespace ocugaze
