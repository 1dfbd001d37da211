#pragma once

// Shared fixtures for the unit and acceptance suites.

#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

#include "ocugaze/scene.hpp"
#include "ocugaze/session.hpp"

namespace testing_support {

namespace fs = std::filesystem;

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = fs::temp_directory_path() / ("ocugaze-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  fs::path path_;
};

inline std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void spit(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << text;
}

/// Samples at 200 Hz over [t0, t1) sitting at (x, y) with Gaussian noise `sd`.
inline void append_dwell(std::vector<ocugaze::GazeSample>& out, double t0, double t1, double x, double y, double sd,
                         std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  for (double t = t0; t < t1 - 1e-9; t += 5.0) out.push_back({t, x + sd * n(rng), y + sd * n(rng), true});
}

/// Straight sweep from a to b over [t0, t1), no noise.
inline void append_sweep(std::vector<ocugaze::GazeSample>& out, double t0, double t1, ocugaze::Point a,
                         ocugaze::Point b) {
  for (double t = t0; t < t1 - 1e-9; t += 5.0) {
    const double u = (t - t0) / (t1 - t0);
    out.push_back({t, a.x + u * (b.x - a.x), a.y + u * (b.y - a.y), true});
  }
}

/// A well-formed trial with protocol events and, optionally, a gaze stream.
inline ocugaze::TrialRecord make_trial(int id, ocugaze::Condition c, double rt_ms, ocugaze::Side response,
                                       std::vector<ocugaze::GazeSample> samples = {}) {
  using namespace ocugaze;
  TrialRecord t;
  t.trial_id = id;
  t.condition = c;
  t.scene = "scenes/x.json";
  t.seed = static_cast<std::uint64_t>(id);
  const double on = 1170, key = on + rt_ms;
  t.events = {{events::kFixationOn, 0, std::nullopt},
              {events::kStimulusOn, on, std::nullopt},
              {events::kKeypress, key, response},
              {events::kFeedbackOn, key, std::nullopt},
              {events::kFeedbackOff, key + 375, std::nullopt},
              {events::kTrialEnd, key + 1375, std::nullopt}};
  t.samples = std::move(samples);
  t.response_side = response;
  t.rt_ms = rt_ms;
  return t;
}

/// Full-coverage gaze stream at a fixed point spanning the trial's events.
inline std::vector<ocugaze::GazeSample> steady_samples(const ocugaze::TrialRecord& t, double x, double y) {
  std::vector<ocugaze::GazeSample> s;
  const double end = ocugaze::trial_duration_ms(t);
  for (double ms = 0; ms <= end + 1e-9; ms += 5.0) s.push_back({ms, x, y, true});
  return s;
}

}  // namespace testing_support
