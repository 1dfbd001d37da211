#pragma once

// The `ocugaze` command line. Every subcommand that writes files also writes
// manifest.json holding the subcommand, its resolved options and the full
// effective config, so `ocugaze --replay manifest.json` reruns it exactly.
//
// Exit codes: 0 ok, 1 runtime failure, 2 input or schema error.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/chrono.h>
#include <fmt/format.h>
#include <json.hpp>

#include "ocugaze/config.hpp"
#include "ocugaze/error.hpp"
#include "ocugaze/metrics.hpp"
#include "ocugaze/observer.hpp"
#include "ocugaze/parallel.hpp"
#include "ocugaze/render.hpp"
#include "ocugaze/report.hpp"
#include "ocugaze/saliency.hpp"
#include "ocugaze/scene.hpp"
#include "ocugaze/session.hpp"
#include "ocugaze/stats.hpp"

namespace ocugaze::cli {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitInput = 2;
inline constexpr int kManifestVersion = 1;
inline constexpr const char* kToolVersion = "1.0.0";

/// Files and directories created by one run. Unless commit() is called, the
/// destructor deletes them again so a failed run leaves no partial output.
class Outputs {
 public:
  explicit Outputs(fs::path root) : root_(std::move(root)) {}
  Outputs(const Outputs&) = delete;
  Outputs& operator=(const Outputs&) = delete;
  ~Outputs() {
    if (!committed_) rollback();
  }

  const fs::path& root() const { return root_; }

  /// Reserves `rel` (creating parent directories) and returns its full path.
  /// Not thread-safe; reserve everything before writing in parallel.
  fs::path reserve(const fs::path& rel) {
    const fs::path full = root_ / rel;
    make_dirs(full.parent_path());
    if (std::find(files_.begin(), files_.end(), rel) == files_.end()) files_.push_back(rel);
    return full;
  }

  void write(const fs::path& rel, const std::string& content) { write_file(reserve(rel), content); }

  static void write_file(const fs::path& full, const std::string& content) {
    std::ofstream out(full, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::Io, "cannot open " + full.string() + " for writing");
    out << content;
    out.flush();
    if (!out) throw Error(ErrorKind::Io, "error writing " + full.string());
  }

  std::vector<std::string> files() const {
    std::vector<std::string> out;
    for (const auto& f : files_) out.push_back(f.generic_string());
    std::sort(out.begin(), out.end());
    return out;
  }

  void commit() { committed_ = true; }

  void rollback() noexcept {
    std::error_code ec;
    for (auto it = files_.rbegin(); it != files_.rend(); ++it) fs::remove(root_ / *it, ec);
    for (auto it = dirs_.rbegin(); it != dirs_.rend(); ++it) {
      if (fs::is_empty(*it, ec)) fs::remove(*it, ec);
    }
    files_.clear();
    dirs_.clear();
  }

 private:
  void make_dirs(const fs::path& dir) {
    if (dir.empty() || fs::exists(dir)) return;
    make_dirs(dir.parent_path());
    std::error_code ec;
    if (!fs::create_directory(dir, ec) && !fs::is_directory(dir)) {
      throw Error(ErrorKind::Io, fmt::format("cannot create directory {}: {}", dir.string(), ec.message()));
    }
    dirs_.push_back(dir);
  }

  fs::path root_;
  std::vector<fs::path> files_;
  std::vector<fs::path> dirs_;
  bool committed_ = false;
};

// ---- shared helpers ----

inline std::string read_text(const fs::path& path) {
  if (!fs::exists(path)) throw Error(ErrorKind::MissingInput, "no such file: " + path.string());
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline nlohmann::json read_json(const fs::path& path) {
  const std::string text = read_text(path);
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorKind::Parse, e.what());
  }
}

inline SceneSpec load_scene(const fs::path& path) { return scene_from_json(read_json(path)); }

inline GazeSession load_session(const fs::path& path) {
  if (!fs::exists(path)) throw Error(ErrorKind::MissingInput, "no such file: " + path.string());
  return read_session(path);
}

inline std::string scene_text(const SceneSpec& s) { return to_json(s).dump() + "\n"; }

inline std::string utc_now() {
  return fmt::format("{:%Y-%m-%dT%H:%M:%SZ}", fmt::gmtime(std::time(nullptr)));
}

inline std::string absolute_string(const std::string& p) { return fs::absolute(p).lexically_normal().string(); }

inline Json condition_list(const std::vector<std::string>& names) {
  Json out = Json::array();
  if (names.empty() || (names.size() == 1 && names[0] == "all")) {
    for (Condition c : kAllConditions) out.push_back(std::string(to_string(c)));
    return out;
  }
  std::set<Condition> seen;
  for (const auto& n : names) {
    const auto c = try_parse_condition(n);
    if (!c) throw Error(ErrorKind::Validation, fmt::format("unknown condition '{}'", n));
    if (!seen.insert(*c).second) throw Error(ErrorKind::Validation, fmt::format("condition '{}' listed twice", n));
    out.push_back(std::string(to_string(*c)));
  }
  return out;
}

/// Flags that override config values; unset flags leave the config alone.
struct Overrides {
  std::optional<double> softmax_temp, ior_radius, ior_strength, fix_dur_mu, fix_dur_sigma, min_fix_ms,
      saccade_speed, landing_noise_sd, gaze_jitter_sd, recog_prob_target, confuse_prob_distractor, max_trial_ms,
      fixation_period_ms, feedback_ms, free_view_ms;
  std::optional<int> ior_memory;
  std::optional<double> dispersion_px, min_duration_ms, merge_gap_ms, merge_distance_px;

  void apply(Config& c) const {
    auto set = [](const std::optional<double>& v, double& dst) {
      if (v) dst = *v;
    };
    auto& o = c.observer;
    set(softmax_temp, o.softmax_temp);
    set(ior_radius, o.ior_radius);
    set(ior_strength, o.ior_strength);
    if (ior_memory) o.ior_memory = *ior_memory;
    set(fix_dur_mu, o.fix_dur_mu);
    set(fix_dur_sigma, o.fix_dur_sigma);
    set(min_fix_ms, o.min_fix_ms);
    set(saccade_speed, o.saccade_speed);
    set(landing_noise_sd, o.landing_noise_sd);
    set(gaze_jitter_sd, o.gaze_jitter_sd);
    set(recog_prob_target, o.recog_prob_target);
    set(confuse_prob_distractor, o.confuse_prob_distractor);
    set(max_trial_ms, o.max_trial_ms);
    set(fixation_period_ms, o.fixation_period_ms);
    set(feedback_ms, o.feedback_ms);
    set(free_view_ms, o.free_view_ms);
    set(dispersion_px, c.detection.dispersion_px);
    set(min_duration_ms, c.detection.min_duration_ms);
    set(merge_gap_ms, c.detection.merge_gap_ms);
    set(merge_distance_px, c.detection.merge_distance_px);
  }
};

inline void add_observer_flags(CLI::App* app, Overrides& o) {
  const char* g = "Observer";
  app->add_option("--softmax-temp", o.softmax_temp, "Softmax temperature over saliency (0 = greedy)")->group(g);
  app->add_option("--ior-radius", o.ior_radius, "Inhibition-of-return radius in px")->group(g);
  app->add_option("--ior-strength", o.ior_strength, "Inhibition-of-return strength in [0,1]")->group(g);
  app->add_option("--ior-memory", o.ior_memory, "Number of recent fixations kept inhibited")->group(g);
  app->add_option("--fix-dur-mu", o.fix_dur_mu, "Lognormal fixation duration mu (log ms)")->group(g);
  app->add_option("--fix-dur-sigma", o.fix_dur_sigma, "Lognormal fixation duration sigma")->group(g);
  app->add_option("--min-fix-ms", o.min_fix_ms, "Shortest simulated fixation in ms")->group(g);
  app->add_option("--saccade-speed", o.saccade_speed, "Saccade speed in px/ms")->group(g);
  app->add_option("--landing-noise-sd", o.landing_noise_sd, "Saccade landing noise sd in px")->group(g);
  app->add_option("--gaze-jitter-sd", o.gaze_jitter_sd, "Per-sample gaze jitter sd in px")->group(g);
  app->add_option("--recog-prob-target", o.recog_prob_target, "P(respond | fixating the target)")->group(g);
  app->add_option("--confuse-prob-distractor", o.confuse_prob_distractor,
                  "P(respond | fixating the distractor)")
      ->group(g);
  app->add_option("--max-trial-ms", o.max_trial_ms, "Search timeout in ms")->group(g);
  app->add_option("--fixation-period-ms", o.fixation_period_ms, "Fixation cross period in ms")->group(g);
  app->add_option("--feedback-ms", o.feedback_ms, "Feedback flicker duration in ms")->group(g);
  app->add_option("--free-view-ms", o.free_view_ms, "Free-viewing delay after feedback in ms")->group(g);
}

inline void add_detection_flags(CLI::App* app, Overrides& o) {
  const char* g = "Fixation detection";
  app->add_option("--dispersion-px", o.dispersion_px, "I-DT dispersion threshold in px")->group(g);
  app->add_option("--min-duration-ms", o.min_duration_ms, "I-DT minimum fixation duration in ms")->group(g);
  app->add_option("--merge-gap-ms", o.merge_gap_ms, "Merge fixations separated by at most this gap (0 = off)")->group(g);
  app->add_option("--merge-distance-px", o.merge_distance_px, "Merge only when centroids are this close")->group(g);
}

// ---- subcommand bodies; each reads only `opts` and `config` ----

struct Context {
  const Config& config;
  const Json& opts;
  Outputs& out;
  unsigned jobs;
  std::ostream& log;
};

inline void run_gen(const Context& cx) {
  std::vector<Condition> conditions;
  if (cx.opts["condition"] == "all") {
    conditions.assign(kAllConditions.begin(), kAllConditions.end());
  } else {
    conditions.push_back(parse_condition(cx.opts["condition"].get<std::string>()));
  }
  const auto seed = cx.opts["seed"].get<std::uint64_t>();
  const int count = cx.opts["count"].get<int>();
  const bool render = cx.opts["render"].get<bool>();
  if (count < 1) throw Error(ErrorKind::Validation, "--count must be at least 1");

  struct Job {
    SceneSpec scene;
    fs::path json, left, right, fused;
  };
  std::vector<Job> work;
  for (Condition c : conditions) {
    for (int k = 0; k < count; ++k) {
      Job j;
      j.scene = make_scene(cx.config.geometry, c, seed + static_cast<std::uint64_t>(k));
      const std::string id = scene_id(j.scene);
      j.json = cx.out.reserve("scenes/" + id + ".json");
      if (render) {
        j.left = cx.out.reserve("renders/" + id + "_L.png");
        j.right = cx.out.reserve("renders/" + id + "_R.png");
        j.fused = cx.out.reserve("renders/" + id + "_F.png");
      }
      work.push_back(std::move(j));
    }
  }
  parallel_for(work.size(), cx.jobs, [&](std::size_t i) {
    const Job& j = work[i];
    Outputs::write_file(j.json, scene_text(j.scene));
    if (render) {
      const StereoPair pair = render_stereo_pair(j.scene);
      write_png(pair.left, j.left);
      write_png(pair.right, j.right);
      write_png(fuse(pair), j.fused);
    }
  });
  cx.log << fmt::format("generated {} scene(s)\n", work.size());
}

inline void run_salmap(const Context& cx) {
  const SceneSpec scene = cx.opts["scene"].is_null()
                              ? make_scene(cx.config.geometry, parse_condition(cx.opts["condition"].get<std::string>()),
                                           cx.opts["seed"].get<std::uint64_t>())
                              : load_scene(cx.opts["scene"].get<std::string>());
  const SaliencyMap map = compute_saliency(scene, cx.config.saliency);
  const std::string id = scene_id(scene);
  std::string csv = "row,col,orient_resp,ocular_resp,saliency\n";
  for (int r = 0; r < map.rows; ++r) {
    for (int c = 0; c < map.cols; ++c) {
      const std::size_t i = scene.geometry.index({r, c});
      csv += fmt::format("{},{},{:.9f},{:.9f},{:.9f}\n", r, c, map.orientation[i], map.ocularity[i], map.saliency[i]);
    }
  }
  cx.out.write(id + "_saliency.csv", csv);
  if (cx.opts["png"].get<bool>()) {
    write_png(render_cell_heatmap(scene.geometry, map.saliency), cx.out.reserve(id + "_saliency.png"));
  }
  cx.log << fmt::format("saliency argmax at row {} col {}{}\n", map.argmax_cell.row, map.argmax_cell.col,
                        map.tied ? " (tied)" : "");
}

/// Writes a simulated session and its scenes; returns the session file path.
inline fs::path write_simulation(const Context& cx) {
  const Json conds = cx.opts["conditions"];
  std::vector<Condition> conditions;
  for (const auto& c : conds) conditions.push_back(parse_condition(c.get<std::string>()));
  SimulatedSession sim = simulate_session(conditions, cx.opts["trials_per_condition"].get<int>(),
                                          cx.config.simulation(), cx.opts["seed"].get<std::uint64_t>(), cx.jobs);
  sim.session.header.created_at = cx.opts["created_at"].get<std::string>();
  sim.session.header.params_digest = params_digest(cx.config);

  std::vector<std::pair<fs::path, const SceneSpec*>> scenes;
  std::set<std::string> seen;
  for (const auto& s : sim.scenes) {
    const std::string ref = scene_ref(s);
    if (seen.insert(ref).second) scenes.emplace_back(cx.out.reserve(ref), &s);
  }
  parallel_for(scenes.size(), cx.jobs,
               [&](std::size_t i) { Outputs::write_file(scenes[i].first, scene_text(*scenes[i].second)); });
  const fs::path session_path = cx.out.reserve("sessions/" + sim.session.header.session_id + ".jsonl");
  write_session(sim.session, session_path);
  cx.log << fmt::format("simulated {} trial(s) into {}\n", sim.session.trials.size(), session_path.string());
  return session_path;
}

inline void run_simulate(const Context& cx) { write_simulation(cx); }

inline std::vector<TrialMetrics> analyze_sessions(const std::vector<fs::path>& paths, const DetectionParams& det,
                                                  unsigned jobs) {
  std::vector<TrialMetrics> all;
  for (const auto& path : paths) {
    const GazeSession session = load_session(path);
    std::map<fs::path, std::size_t> index;
    std::vector<fs::path> scene_paths;
    std::vector<std::size_t> trial_scene(session.trials.size());
    for (std::size_t i = 0; i < session.trials.size(); ++i) {
      const fs::path p = resolve_scene_path(path, session.trials[i].scene).lexically_normal();
      auto [it, fresh] = index.emplace(p, scene_paths.size());
      if (fresh) scene_paths.push_back(p);
      trial_scene[i] = it->second;
    }
    std::vector<SceneSpec> scenes(scene_paths.size());
    parallel_for(scenes.size(), jobs, [&](std::size_t i) {
      try {
        scenes[i] = load_scene(scene_paths[i]);
      } catch (const Error& e) {
        throw Error(e.kind(), fmt::format("{}: {}", scene_paths[i].string(), e.detail()));
      }
    });
    std::vector<TrialMetrics> metrics(session.trials.size());
    parallel_for(metrics.size(), jobs, [&](std::size_t i) {
      metrics[i] = compute_trial_metrics(session.trials[i], scenes[trial_scene[i]], det, session.header.gaze_recorded);
    });
    all.insert(all.end(), metrics.begin(), metrics.end());
  }
  return all;
}

inline void write_metrics(const Context& cx, const std::vector<TrialMetrics>& metrics) {
  cx.out.write("metrics.csv", metrics_csv(metrics));
  const auto summary = aggregate_conditions(metrics);
  cx.out.write("summary.csv", summary_csv(summary));
}

inline void run_analyze(const Context& cx) {
  std::vector<fs::path> paths;
  for (const auto& p : cx.opts["sessions"]) paths.emplace_back(p.get<std::string>());
  const auto metrics = analyze_sessions(paths, cx.config.detection, cx.jobs);
  write_metrics(cx, metrics);
  cx.log << fmt::format("analyzed {} trial(s)\n", metrics.size());
}

inline StatsBundle write_stats(const Context& cx, const StatsBundle& bundle, bool svg) {
  cx.out.write("stats.csv", stats_csv(bundle));
  cx.out.write("stats.txt", stats_text(bundle));
  if (svg) cx.out.write("summary.svg", summary_svg(bundle.summaries));
  return bundle;
}

inline void run_stats(const Context& cx) {
  const std::string text = read_text(cx.opts["metrics"].get<std::string>());
  const StatsBundle bundle = build_report(text);
  write_stats(cx, bundle, cx.opts["svg"].get<bool>());
  cx.log << fmt::format("ran {} test report(s)\n", bundle.reports.size());
}

inline void run_report(const Context& cx) {
  // Statistics always come from the CSV text, so `stats metrics.csv` reproduces them exactly.
  std::string csv;
  if (cx.opts["metrics"].is_null()) {
    const fs::path session = write_simulation(cx);
    const auto metrics = analyze_sessions({session}, cx.config.detection, cx.jobs);
    write_metrics(cx, metrics);
    csv = metrics_csv(metrics);
  } else {
    csv = read_text(cx.opts["metrics"].get<std::string>());
  }
  const StatsBundle bundle = build_report(csv);
  write_stats(cx, bundle, false);
  cx.out.write("report.txt", report_text(bundle));
  cx.out.write("report.svg", summary_svg(bundle.summaries));
  cx.log << "wrote report.txt and report.svg\n";
}

inline void dispatch(const std::string& sub, const Context& cx) {
  if (sub == "gen") return run_gen(cx);
  if (sub == "salmap") return run_salmap(cx);
  if (sub == "simulate") return run_simulate(cx);
  if (sub == "analyze") return run_analyze(cx);
  if (sub == "stats") return run_stats(cx);
  if (sub == "report") return run_report(cx);
  throw Error(ErrorKind::Validation, fmt::format("unknown subcommand '{}'", sub));
}

/// Default output directory, addressed by subcommand, options and config digest.
inline fs::path default_out_dir(const std::string& sub, const Json& opts, const Config& config) {
  Json key = opts;
  key.erase("created_at");
  const std::string digest = sha256_hex(sub + key.dump() + params_digest(config));
  return fs::path("runs") / fmt::format("{}-{}", sub, digest.substr(0, 12));
}

/// Runs a file-producing subcommand and writes its manifest.
inline void execute(const std::string& sub, const Config& config, const Json& opts, const fs::path& out_dir,
                    unsigned jobs, std::ostream& log) {
  validate(config);
  Outputs out(out_dir);
  dispatch(sub, {config, opts, out, jobs, log});
  Json m;
  m["tool"] = "ocugaze";
  m["tool_version"] = kToolVersion;
  m["manifest_version"] = kManifestVersion;
  m["subcommand"] = sub;
  m["options"] = opts;
  m["config"] = to_json(config);
  m["params_digest"] = params_digest(config);
  m["outputs"] = out.files();
  out.write("manifest.json", m.dump(2) + "\n");
  out.commit();
  log << fmt::format("output: {}\n", out_dir.string());
}

inline void replay(const fs::path& manifest_path, std::optional<fs::path> out_dir, unsigned jobs, std::ostream& log) {
  Json m;
  try {
    m = Json::parse(read_text(manifest_path));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorKind::Parse, fmt::format("{}: {}", manifest_path.string(), e.what()));
  }
  if (!m.is_object() || m.value("tool", "") != "ocugaze") {
    throw Error(ErrorKind::Schema, "not an ocugaze manifest: " + manifest_path.string());
  }
  if (m.value("manifest_version", 0) != kManifestVersion) {
    throw Error(ErrorKind::Version, fmt::format("unsupported manifest_version in {}", manifest_path.string()));
  }
  for (const char* k : {"subcommand", "options", "config", "params_digest"}) {
    if (!m.contains(k)) throw Error(ErrorKind::Schema, fmt::format("manifest lacks '{}'", k));
  }
  Config config;
  merge_config(m["config"], config);
  validate(config);
  if (params_digest(config) != m["params_digest"].get<std::string>()) {
    throw Error(ErrorKind::Validation, "manifest params_digest does not match its config");
  }
  if (!out_dir) out_dir = manifest_path.parent_path() / "replay";
  execute(m["subcommand"].get<std::string>(), config, m["options"], *out_dir, jobs, log);
}

// ---- validate ----

inline bool validate_file(const fs::path& path, bool check_refs, std::ostream& out) {
  try {
    if (!fs::exists(path)) throw Error(ErrorKind::MissingInput, "no such file");
    if (path.extension() == ".jsonl") {
      const GazeSession s = read_session(path);
      if (check_refs) validate_scene_refs(s, path);
      out << fmt::format("{}: ok (session, {} trial(s), source {})\n", path.string(), s.trials.size(),
                         to_string(s.header.source));
    } else {
      const nlohmann::json j = read_json(path);
      if (j.is_object() && j.contains("subcommand")) {
        if (j.value("tool", "") != "ocugaze" || j.value("manifest_version", 0) != kManifestVersion) {
          throw Error(ErrorKind::Schema, "unrecognised manifest");
        }
        Config c;
        merge_config(j.at("config"), c);
        validate(c);
        out << fmt::format("{}: ok (manifest, {})\n", path.string(), j["subcommand"].get<std::string>());
      } else {
        const SceneSpec s = scene_from_json(j);
        out << fmt::format("{}: ok (scene {})\n", path.string(), scene_id(s));
      }
    }
    return true;
  } catch (const Error& e) {
    out << fmt::format("{}: {}\n", path.string(), e.what());
  } catch (const std::exception& e) {
    out << fmt::format("{}: error: {}\n", path.string(), e.what());
  }
  return false;
}

// ---- entry point ----

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Ocularity-singleton gaze guidance toolkit", "ocugaze"};
  app.fallthrough();
  app.set_version_flag("--version", kToolVersion);
  std::string config_path, replay_path, out_dir;
  unsigned jobs = 1;
  app.add_option("--config", config_path, "JSON config with geometry, saliency, observer and detection settings");
  app.add_option("-j,--jobs", jobs, "Worker threads; output does not depend on this")->check(CLI::PositiveNumber);
  app.add_option("--replay", replay_path, "Rerun the subcommand recorded in a manifest.json");
  app.add_option("-o,--out", out_dir, "Output directory (default: runs/<subcommand>-<digest>)");
  app.require_subcommand(0, 1);
  Overrides ov;

  std::string gen_condition = "all";
  std::uint64_t gen_seed = 1;
  int gen_count = 1;
  bool gen_no_render = false;
  auto* gen = app.add_subcommand("gen", "Generate stimulus scenes and their stereo renders");
  gen->add_option("--condition", gen_condition, "Condition name or 'all'")->capture_default_str();
  gen->add_option("--seed", gen_seed, "Seed of the first scene")->capture_default_str();
  gen->add_option("--count", gen_count, "Scenes per condition, seeds seed..seed+count-1")->capture_default_str();
  gen->add_flag("--no-render", gen_no_render, "Write scene JSON only");

  std::string sal_scene, sal_condition = "BAM";
  std::uint64_t sal_seed = 1;
  bool sal_png = false;
  auto* salmap = app.add_subcommand("salmap", "Per-cell saliency map of one scene as CSV");
  salmap->add_option("--scene", sal_scene, "Scene JSON file (otherwise generated from --condition/--seed)");
  salmap->add_option("--condition", sal_condition, "Condition when generating")->capture_default_str();
  salmap->add_option("--seed", sal_seed, "Seed when generating")->capture_default_str();
  salmap->add_flag("--png", sal_png, "Also write a grayscale heatmap");

  std::vector<std::string> sim_conditions;
  int sim_trials = 200;
  std::uint64_t sim_seed = 1;
  std::string sim_created;
  auto add_sim = [&](CLI::App* sub) {
    sub->add_option("--conditions", sim_conditions, "Comma-separated conditions (default all)")->delimiter(',');
    sub->add_option("--trials-per-condition", sim_trials, "Trials per condition")->capture_default_str();
    sub->add_option("--seed", sim_seed, "Session seed")->capture_default_str();
    sub->add_option("--created-at", sim_created, "Session timestamp (default: now, UTC)");
    add_observer_flags(sub, ov);
  };
  auto* simulate = app.add_subcommand("simulate", "Simulate a session with the synthetic observer");
  add_sim(simulate);

  std::vector<std::string> ana_sessions;
  auto* analyze = app.add_subcommand("analyze", "Per-trial metrics and per-condition summary from sessions");
  analyze->add_option("sessions", ana_sessions, "Session JSONL files")->required();
  add_detection_flags(analyze, ov);

  std::string stats_metrics;
  bool stats_svg = false;
  auto* stats = app.add_subcommand("stats", "Kruskal-Wallis and Dunn tests over a metrics CSV");
  stats->add_option("metrics", stats_metrics, "metrics.csv from analyze")->required();
  stats->add_flag("--svg", stats_svg, "Also write the six-panel summary.svg");

  std::string rep_metrics;
  auto* report = app.add_subcommand("report", "Six-panel summary; runs the whole pipeline unless --metrics is given");
  report->add_option("--metrics", rep_metrics, "Existing metrics.csv");
  add_sim(report);
  add_detection_flags(report, ov);

  std::vector<std::string> val_files;
  bool val_no_refs = false;
  auto* validate_cmd = app.add_subcommand("validate", "Schema-check session, scene or manifest files");
  validate_cmd->add_option("files", val_files, "Files to check")->required();
  validate_cmd->add_flag("--no-scene-check", val_no_refs, "Do not require session scene references to exist");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitInput;
  }

  try {
    if (!replay_path.empty()) {
      if (!app.get_subcommands().empty()) throw Error(ErrorKind::Validation, "--replay takes no subcommand");
      replay(replay_path, out_dir.empty() ? std::nullopt : std::optional<fs::path>(out_dir), jobs, out);
      return kExitOk;
    }
    if (app.get_subcommands().empty()) {
      err << app.help();
      return kExitInput;
    }
    if (validate_cmd->parsed()) {
      bool ok = true;
      for (const auto& f : val_files) ok = validate_file(f, !val_no_refs, out) && ok;
      return ok ? kExitOk : kExitInput;
    }

    Config config;
    if (!config_path.empty()) {
      if (!fs::exists(config_path)) throw Error(ErrorKind::MissingInput, "no such config file: " + config_path);
      config = load_config(config_path);
    }
    ov.apply(config);
    validate(config);

    std::string sub;
    Json opts = Json::object();
    auto sim_opts = [&] {
      opts["conditions"] = condition_list(sim_conditions);
      opts["trials_per_condition"] = sim_trials;
      opts["seed"] = sim_seed;
      opts["created_at"] = sim_created.empty() ? utc_now() : sim_created;
    };
    if (gen->parsed()) {
      sub = "gen";
      if (gen_condition != "all") gen_condition = std::string(to_string(parse_condition(gen_condition)));
      opts["condition"] = gen_condition;
      opts["seed"] = gen_seed;
      opts["count"] = gen_count;
      opts["render"] = !gen_no_render;
    } else if (salmap->parsed()) {
      sub = "salmap";
      opts["scene"] = sal_scene.empty() ? Json(nullptr) : Json(absolute_string(sal_scene));
      opts["condition"] = std::string(to_string(parse_condition(sal_condition)));
      opts["seed"] = sal_seed;
      opts["png"] = sal_png;
    } else if (simulate->parsed()) {
      sub = "simulate";
      sim_opts();
    } else if (analyze->parsed()) {
      sub = "analyze";
      opts["sessions"] = Json::array();
      for (const auto& s : ana_sessions) opts["sessions"].push_back(absolute_string(s));
    } else if (stats->parsed()) {
      sub = "stats";
      opts["metrics"] = absolute_string(stats_metrics);
      opts["svg"] = stats_svg;
    } else if (report->parsed()) {
      sub = "report";
      if (rep_metrics.empty()) {
        opts["metrics"] = nullptr;
        sim_opts();
      } else {
        opts["metrics"] = absolute_string(rep_metrics);
      }
    }
    const fs::path dir = out_dir.empty() ? default_out_dir(sub, opts, config) : fs::path(out_dir);
    execute(sub, config, opts, dir, jobs, out);
    return kExitOk;
  } catch (const Error& e) {
    err << "ocugaze: " << e.what() << '\n';
    return e.is_input_error() ? kExitInput : kExitRuntime;
  } catch (const std::exception& e) {
    err << "ocugaze: " << e.what() << '\n';
    return kExitRuntime;
  }
}

}  // namespace ocugaze::cli
