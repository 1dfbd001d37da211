#pragma once

// Gaze sessions: the JSONL exchange format shared by the simulator, the
// analysis pipeline and the browser experiment runner.
//
// Line 1 is a header record; every following line is one trial record.
// Unknown fields on either record type are carried through unchanged.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <json.hpp>

#include "ocugaze/error.hpp"
#include "ocugaze/scene.hpp"

namespace ocugaze {

inline constexpr int kSessionSchemaVersion = 1;
inline constexpr double kSampleRateHz = 200.0;
inline constexpr double kSampleIntervalMs = 1000.0 / kSampleRateHz;
inline constexpr double kMinSamplingRatio = 0.70;

namespace events {
inline constexpr const char* kFixationOn = "fixation_on";
inline constexpr const char* kStimulusOn = "stimulus_on";
inline constexpr const char* kKeypress = "keypress";
inline constexpr const char* kFeedbackOn = "feedback_on";
inline constexpr const char* kFeedbackOff = "feedback_off";
inline constexpr const char* kTrialEnd = "trial_end";
}  // namespace events

enum class SessionSource { Synthetic, Human };

inline std::string_view to_string(SessionSource s) {
  return s == SessionSource::Synthetic ? "synthetic" : "human";
}

struct GazeSample {
  double t = 0;  // ms from trial start
  double x = 0;  // canvas px
  double y = 0;
  bool valid = true;
  friend bool operator==(const GazeSample&, const GazeSample&) = default;
};

struct TrialEvent {
  std::string type;
  double t = 0;
  std::optional<Side> side;  // keypress only
  friend bool operator==(const TrialEvent&, const TrialEvent&) = default;
};

struct TrialRecord {
  int trial_id = 0;
  Condition condition = Condition::BASE;
  std::string scene;  // path of the scene file, relative to the session file
  std::uint64_t seed = 0;
  std::vector<TrialEvent> events;
  std::vector<GazeSample> samples;
  std::optional<Side> response_side;
  std::optional<double> rt_ms;
  bool timed_out = false;
  int clamped_samples = 0;
  nlohmann::ordered_json extra = nlohmann::ordered_json::object();

  std::optional<double> event_time(std::string_view type) const {
    for (const auto& e : events) {
      if (e.type == type) return e.t;
    }
    return std::nullopt;
  }

  friend bool operator==(const TrialRecord&, const TrialRecord&) = default;
};

struct SessionHeader {
  std::string session_id;
  SessionSource source = SessionSource::Synthetic;
  double sample_rate_hz = kSampleRateHz;
  int canvas_w = 1024;
  int canvas_h = 768;
  int schema_version = kSessionSchemaVersion;
  std::string created_at;
  std::string label;
  std::string params_digest;
  // False for sessions recorded without an eye tracker; sampling-ratio rules do not apply.
  bool gaze_recorded = true;
  std::optional<nlohmann::ordered_json> calibration;
  nlohmann::ordered_json extra = nlohmann::ordered_json::object();

  friend bool operator==(const SessionHeader&, const SessionHeader&) = default;
};

struct GazeSession {
  SessionHeader header;
  std::vector<TrialRecord> trials;
  friend bool operator==(const GazeSession&, const GazeSession&) = default;
};

// ---- validation ----

inline void validate(const TrialRecord& t) {
  auto fail = [&](const std::string& m) {
    throw Error(ErrorKind::Validation, fmt::format("trial {}: {}", t.trial_id, m));
  };
  for (std::size_t i = 0; i < t.events.size(); ++i) {
    const auto& e = t.events[i];
    if (e.type.empty()) fail(fmt::format("event {} has no type", i));
    if (!std::isfinite(e.t)) fail(fmt::format("event '{}' has a non-finite time", e.type));
  }
  for (std::size_t i = 0; i < t.samples.size(); ++i) {
    const auto& s = t.samples[i];
    if (!std::isfinite(s.t) || !std::isfinite(s.x) || !std::isfinite(s.y)) {
      fail(fmt::format("sample {} is not finite", i));
    }
    if (i > 0 && !(s.t > t.samples[i - 1].t)) {
      fail(fmt::format("sample timestamps not strictly increasing at sample {} (t={})", i, s.t));
    }
  }
  if (t.rt_ms && !(*t.rt_ms >= 0)) fail("rt_ms must be non-negative");
  if (t.clamped_samples < 0) fail("clamped_samples must be non-negative");
}

inline void validate(const GazeSession& s) {
  const auto& h = s.header;
  auto fail = [](const std::string& m) { throw Error(ErrorKind::Validation, "header: " + m); };
  if (h.schema_version != kSessionSchemaVersion) {
    throw Error(ErrorKind::Version, fmt::format("unsupported session schema_version {}", h.schema_version));
  }
  if (h.session_id.empty()) fail("session_id is empty");
  if (h.sample_rate_hz != kSampleRateHz) fail(fmt::format("sample_rate_hz must be {}", kSampleRateHz));
  if (h.canvas_w <= 0 || h.canvas_h <= 0) fail("canvas size must be positive");
  for (const auto& t : s.trials) validate(t);
}

/// Resolves a trial's scene reference: next to the session file, then one level up.
inline std::filesystem::path resolve_scene_path(const std::filesystem::path& session_path,
                                                const std::string& ref) {
  const std::filesystem::path p(ref);
  if (p.is_absolute()) return p;
  const auto dir = session_path.parent_path();
  if (std::filesystem::exists(dir / p)) return dir / p;
  if (std::filesystem::exists(dir.parent_path() / p)) return dir.parent_path() / p;
  return dir / p;
}

inline void validate_scene_refs(const GazeSession& s, const std::filesystem::path& session_path) {
  for (const auto& t : s.trials) {
    if (!std::filesystem::exists(resolve_scene_path(session_path, t.scene))) {
      throw Error(ErrorKind::Validation,
                  fmt::format("trial {}: scene file '{}' not found", t.trial_id, t.scene));
    }
  }
}

// ---- sampling ratio ----

/// Span of the trial from its first to its last event.
inline double trial_duration_ms(const TrialRecord& t) {
  if (t.events.empty()) return 0;
  double lo = t.events.front().t, hi = lo;
  for (const auto& e : t.events) {
    lo = std::min(lo, e.t);
    hi = std::max(hi, e.t);
  }
  return hi - lo;
}

inline double sampling_ratio(const TrialRecord& t) {
  const double duration = trial_duration_ms(t);
  if (!(duration > 0)) {
    throw Error(ErrorKind::UndefinedMetric, fmt::format("trial {} has zero duration", t.trial_id));
  }
  const double expected = std::floor(duration * kSampleRateHz / 1000.0 + 1e-9) + 1;
  std::size_t valid = 0;
  for (const auto& s : t.samples) valid += s.valid;
  return static_cast<double>(valid) / expected;
}

// ---- JSONL ----

namespace detail {

inline const std::vector<std::string>& header_keys() {
  static const std::vector<std::string> k = {
      "record",     "schema_version", "session_id", "source",        "sample_rate_hz",
      "canvas_w",   "canvas_h",       "created_at", "label",         "params_digest",
      "gaze_recorded", "calibration"};
  return k;
}

inline const std::vector<std::string>& trial_keys() {
  static const std::vector<std::string> k = {
      "record",  "trial_id",  "condition", "scene",          "seed",   "response_side",
      "rt_ms",   "timed_out", "clamped_samples", "events",   "samples"};
  return k;
}

inline nlohmann::ordered_json unknown_fields(const nlohmann::ordered_json& j,
                                             const std::vector<std::string>& known) {
  nlohmann::ordered_json extra = nlohmann::ordered_json::object();
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::find(known.begin(), known.end(), it.key()) == known.end()) extra[it.key()] = it.value();
  }
  return extra;
}

template <class T>
T field(const nlohmann::ordered_json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw Error(ErrorKind::Schema, fmt::format("{}: missing field '{}'", where, key));
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw Error(ErrorKind::Schema, fmt::format("{}: field '{}' has the wrong type", where, key));
  }
}

}  // namespace detail

inline nlohmann::ordered_json to_json(const SessionHeader& h) {
  nlohmann::ordered_json j;
  j["record"] = "header";
  j["schema_version"] = h.schema_version;
  j["session_id"] = h.session_id;
  j["source"] = to_string(h.source);
  j["sample_rate_hz"] = h.sample_rate_hz;
  j["canvas_w"] = h.canvas_w;
  j["canvas_h"] = h.canvas_h;
  j["created_at"] = h.created_at;
  j["label"] = h.label;
  j["params_digest"] = h.params_digest;
  j["gaze_recorded"] = h.gaze_recorded;
  if (h.calibration) j["calibration"] = *h.calibration;
  for (auto it = h.extra.begin(); it != h.extra.end(); ++it) j[it.key()] = it.value();
  return j;
}

inline nlohmann::ordered_json to_json(const TrialRecord& t) {
  nlohmann::ordered_json j;
  j["record"] = "trial";
  j["trial_id"] = t.trial_id;
  j["condition"] = to_string(t.condition);
  j["scene"] = t.scene;
  j["seed"] = t.seed;
  j["response_side"] = t.response_side ? nlohmann::ordered_json(to_string(*t.response_side)) : nullptr;
  j["rt_ms"] = t.rt_ms ? nlohmann::ordered_json(*t.rt_ms) : nullptr;
  j["timed_out"] = t.timed_out;
  j["clamped_samples"] = t.clamped_samples;
  auto ev = nlohmann::ordered_json::array();
  for (const auto& e : t.events) {
    nlohmann::ordered_json je{{"type", e.type}, {"t", e.t}};
    if (e.side) je["side"] = to_string(*e.side);
    ev.push_back(std::move(je));
  }
  j["events"] = std::move(ev);
  auto sm = nlohmann::ordered_json::array();
  for (const auto& s : t.samples) sm.push_back({s.t, s.x, s.y, s.valid ? 1 : 0});
  j["samples"] = std::move(sm);
  for (auto it = t.extra.begin(); it != t.extra.end(); ++it) j[it.key()] = it.value();
  return j;
}

inline SessionHeader header_from_json(const nlohmann::ordered_json& j) {
  const std::string w = "header";
  if (!j.is_object() || detail::field<std::string>(j, "record", w) != "header") {
    throw Error(ErrorKind::Schema, "first record must be the session header");
  }
  SessionHeader h;
  h.schema_version = detail::field<int>(j, "schema_version", w);
  if (h.schema_version != kSessionSchemaVersion) {
    throw Error(ErrorKind::Version, fmt::format("unsupported session schema_version {}", h.schema_version));
  }
  h.session_id = detail::field<std::string>(j, "session_id", w);
  const auto src = detail::field<std::string>(j, "source", w);
  if (src == "synthetic") h.source = SessionSource::Synthetic;
  else if (src == "human") h.source = SessionSource::Human;
  else throw Error(ErrorKind::Schema, fmt::format("header: unknown source '{}'", src));
  h.sample_rate_hz = detail::field<double>(j, "sample_rate_hz", w);
  h.canvas_w = detail::field<int>(j, "canvas_w", w);
  h.canvas_h = detail::field<int>(j, "canvas_h", w);
  if (j.contains("created_at")) h.created_at = detail::field<std::string>(j, "created_at", w);
  if (j.contains("label")) h.label = detail::field<std::string>(j, "label", w);
  if (j.contains("params_digest")) h.params_digest = detail::field<std::string>(j, "params_digest", w);
  if (j.contains("gaze_recorded")) h.gaze_recorded = detail::field<bool>(j, "gaze_recorded", w);
  if (j.contains("calibration") && !j["calibration"].is_null()) h.calibration = j["calibration"];
  h.extra = detail::unknown_fields(j, detail::header_keys());
  return h;
}

inline TrialRecord trial_from_json(const nlohmann::ordered_json& j) {
  std::string w = "trial";
  if (!j.is_object() || detail::field<std::string>(j, "record", w) != "trial") {
    throw Error(ErrorKind::Schema, "expected a trial record");
  }
  TrialRecord t;
  t.trial_id = detail::field<int>(j, "trial_id", w);
  w = fmt::format("trial {}", t.trial_id);
  t.condition = parse_condition(detail::field<std::string>(j, "condition", w));
  t.scene = detail::field<std::string>(j, "scene", w);
  t.seed = detail::field<std::uint64_t>(j, "seed", w);
  if (j.contains("response_side") && !j["response_side"].is_null()) {
    t.response_side = parse_side(detail::field<std::string>(j, "response_side", w));
  }
  if (j.contains("rt_ms") && !j["rt_ms"].is_null()) t.rt_ms = detail::field<double>(j, "rt_ms", w);
  if (j.contains("timed_out")) t.timed_out = detail::field<bool>(j, "timed_out", w);
  if (j.contains("clamped_samples")) t.clamped_samples = detail::field<int>(j, "clamped_samples", w);
  const auto ev = detail::field<nlohmann::ordered_json>(j, "events", w);
  if (!ev.is_array()) throw Error(ErrorKind::Schema, w + ": 'events' must be an array");
  for (const auto& je : ev) {
    TrialEvent e;
    e.type = detail::field<std::string>(je, "type", w + " event");
    e.t = detail::field<double>(je, "t", w + " event");
    if (je.contains("side") && !je["side"].is_null()) {
      e.side = parse_side(detail::field<std::string>(je, "side", w + " event"));
    }
    t.events.push_back(std::move(e));
  }
  const auto sm = detail::field<nlohmann::ordered_json>(j, "samples", w);
  if (!sm.is_array()) throw Error(ErrorKind::Schema, w + ": 'samples' must be an array");
  t.samples.reserve(sm.size());
  for (const auto& js : sm) {
    if (!js.is_array() || js.size() != 4 || !js[0].is_number() || !js[1].is_number() ||
        !js[2].is_number() || !js[3].is_number_integer()) {
      throw Error(ErrorKind::Schema, w + ": each sample must be [t, x, y, valid]");
    }
    t.samples.push_back({js[0].get<double>(), js[1].get<double>(), js[2].get<double>(), js[3].get<int>() != 0});
  }
  t.extra = detail::unknown_fields(j, detail::trial_keys());
  return t;
}

inline void write_session(const GazeSession& s, std::ostream& out) {
  validate(s);
  out << to_json(s.header).dump() << '\n';
  for (const auto& t : s.trials) out << to_json(t).dump() << '\n';
}

inline void write_session(const GazeSession& s, const std::filesystem::path& path) {
  validate(s);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot open " + path.string() + " for writing");
  write_session(s, out);
  out.flush();
  if (!out) throw Error(ErrorKind::Io, "error writing " + path.string());
}

inline GazeSession read_session(std::istream& in) {
  GazeSession s;
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    nlohmann::ordered_json j;
    try {
      j = nlohmann::ordered_json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(ErrorKind::Parse, fmt::format("line {}: {}", lineno, e.what()));
    }
    try {
      if (!have_header) {
        s.header = header_from_json(j);
        have_header = true;
      } else {
        s.trials.push_back(trial_from_json(j));
        validate(s.trials.back());
      }
    } catch (const Error& e) {
      throw Error(e.kind(), fmt::format("line {}: {}", lineno, e.detail()));
    }
  }
  if (!have_header) throw Error(ErrorKind::Schema, "line 1: session file has no header record");
  validate(s);
  return s;
}

inline GazeSession read_session(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  return read_session(in);
}

}  // namespace ocugaze
