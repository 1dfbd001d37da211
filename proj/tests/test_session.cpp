#include <gtest/gtest.h>

#include <sstream>

#include "ocugaze/metrics.hpp"
#include "ocugaze/observer.hpp"
#include "ocugaze/session.hpp"
#include "support.hpp"

using namespace ocugaze;
using namespace testing_support;

namespace {

GazeSession small_session() {
  GazeSession s;
  s.header.session_id = "s1";
  s.header.created_at = "2024-01-01T00:00:00Z";
  s.header.label = "unit";
  std::mt19937_64 rng(1);
  std::vector<GazeSample> g;
  append_dwell(g, 0, 400, 512.25, 384.125, 3, rng);
  g[3].valid = false;
  s.trials.push_back(make_trial(0, Condition::BAM, 612.5, Side::Left, g));
  s.trials.push_back(make_trial(1, Condition::DI, 1234.0, Side::Right));
  return s;
}

GazeSession roundtrip(const GazeSession& s) {
  std::stringstream buf;
  write_session(s, buf);
  return read_session(buf);
}

std::string error_text(const std::string& jsonl) {
  std::istringstream in(jsonl);
  try {
    read_session(in);
  } catch (const Error& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST(Session, RoundTripIdentity) {
  const GazeSession s = small_session();
  EXPECT_EQ(roundtrip(s), s);
}

TEST(Session, FullPrecisionNumbers) {
  GazeSession s = small_session();
  s.trials[0].samples[0].x = 0.1 + 0.2;
  s.trials[0].samples[1].y = 1.0 / 3.0;
  const auto back = roundtrip(s);
  EXPECT_EQ(back.trials[0].samples[0].x, 0.1 + 0.2);
  EXPECT_EQ(back.trials[0].samples[1].y, 1.0 / 3.0);
}

TEST(Session, UnknownFieldsPreserved) {
  GazeSession s = small_session();
  s.header.extra["device"] = {{"model", "x"}, {"hz", 200}};
  s.trials[1].extra["pupil"] = nlohmann::ordered_json::array({1, 2, 3});
  s.header.calibration = nlohmann::ordered_json{{"points", 4}};
  const auto back = roundtrip(s);
  EXPECT_EQ(back, s);
  EXPECT_EQ(back.header.extra["device"]["hz"], 200);
  // Writing again gives the same text.
  std::stringstream a, b;
  write_session(s, a);
  write_session(back, b);
  EXPECT_EQ(a.str(), b.str());
}

TEST(Session, SeventyTrialSessionHas71Lines) {
  const auto sim = simulate_session({kAllConditions.begin(), kAllConditions.end()}, 10, {}, 3);
  ASSERT_EQ(sim.session.trials.size(), 70u);
  std::stringstream buf;
  write_session(sim.session, buf);
  const std::string text = buf.str();
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 71);
  EXPECT_EQ(read_session(buf), sim.session);
}

TEST(Session, DecreasingTimestampsRejectedBeforeWriting) {
  GazeSession s = small_session();
  std::swap(s.trials[0].samples[4], s.trials[0].samples[5]);
  std::stringstream buf;
  try {
    write_session(s, buf);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Validation);
    EXPECT_NE(std::string(e.what()).find("trial 0"), std::string::npos);
  }
  EXPECT_TRUE(buf.str().empty());
}

TEST(Session, TruncatedLastLineNamesTheLine) {
  std::stringstream buf;
  write_session(small_session(), buf);
  std::string text = buf.str();
  text.resize(text.size() - 40);
  const std::string msg = error_text(text);
  EXPECT_NE(msg.find("line 3"), std::string::npos) << msg;
}

TEST(Session, HeaderMissingSampleRateIsSchemaError) {
  auto h = to_json(small_session().header);
  h.erase("sample_rate_hz");
  std::istringstream in(h.dump() + "\n");
  try {
    read_session(in);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Schema);
    EXPECT_NE(std::string(e.what()).find("sample_rate_hz"), std::string::npos);
  }
}

TEST(Session, RejectsBadRecords) {
  auto h = to_json(small_session().header);
  auto bad_version = h;
  bad_version["schema_version"] = 99;
  {
    std::istringstream in(bad_version.dump() + "\n");
    try {
      read_session(in);
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::Version);
    }
  }
  auto t = to_json(small_session().trials[0]);
  auto bad_cond = t;
  bad_cond["condition"] = "XYZ";
  EXPECT_NE(error_text(h.dump() + "\n" + bad_cond.dump() + "\n").find("line 2"), std::string::npos);
  auto bad_rate = h;
  bad_rate["sample_rate_hz"] = 60;
  EXPECT_FALSE(error_text(bad_rate.dump() + "\n").empty());
  EXPECT_FALSE(error_text(t.dump() + "\n").empty());  // header missing
  EXPECT_FALSE(error_text("").empty());
  auto bad_sample = t;
  bad_sample["samples"][0] = {1, 2};
  EXPECT_FALSE(error_text(h.dump() + "\n" + bad_sample.dump() + "\n").empty());
}

TEST(Session, HumanSessionParsesAndAnalyzes) {
  // The shape exported by the browser runner: no samples, gaze_recorded false.
  const std::string jsonl =
      R"({"record":"header","schema_version":1,"session_id":"p01","source":"human","sample_rate_hz":200,)"
      R"("canvas_w":1024,"canvas_h":768,"created_at":"2024-05-01T10:00:00Z","label":"p01","params_digest":"",)"
      R"("gaze_recorded":false,"display_mode":"anaglyph"})"
      "\n"
      R"({"record":"trial","trial_id":0,"condition":"BAM","scene":"scenes/a.json","seed":5,"response_side":"left",)"
      R"("rt_ms":812,"timed_out":false,"events":[{"type":"fixation_on","t":0},{"type":"stimulus_on","t":1170},)"
      R"({"type":"keypress","t":1982,"side":"left"},{"type":"feedback_on","t":1982},{"type":"feedback_off","t":2357},)"
      R"({"type":"trial_end","t":3357}],"samples":[]})"
      "\n";
  std::istringstream in(jsonl);
  const GazeSession s = read_session(in);
  EXPECT_EQ(s.header.source, SessionSource::Human);
  EXPECT_FALSE(s.header.gaze_recorded);
  EXPECT_EQ(s.header.extra["display_mode"], "anaglyph");
  ASSERT_EQ(s.trials.size(), 1u);

  SceneSpec scene = make_scene(GridGeometry{}, Condition::BAM, 5);
  const auto m = compute_trial_metrics(s.trials[0], scene, {}, s.header.gaze_recorded);
  EXPECT_EQ(m.rt_ms, 812);
  EXPECT_EQ(m.correct, scene.target_side() == Side::Left);
  EXPECT_FALSE(m.excluded);
  EXPECT_FALSE(m.sampling_ratio.has_value());
  EXPECT_FALSE(m.fixation_count_grid.has_value());
}

TEST(SamplingRatio, Examples) {
  TrialRecord t = make_trial(0, Condition::BASE, 500, Side::Left);
  t.samples = steady_samples(t, 500, 400);
  EXPECT_EQ(sampling_ratio(t), 1.0);
  for (std::size_t i = 0; i < t.samples.size(); i += 2) t.samples[i].valid = false;
  EXPECT_NEAR(sampling_ratio(t), 0.5, 0.01);
}

TEST(SamplingRatio, BoundaryAt1000ms) {
  TrialRecord t;
  t.events = {{events::kStimulusOn, 0, std::nullopt}, {events::kTrialEnd, 1000, std::nullopt}};
  for (int i = 0; i < 201; ++i) t.samples.push_back({5.0 * i, 0, 0, i < 140});
  const double r = sampling_ratio(t);
  EXPECT_DOUBLE_EQ(r, 140.0 / 201.0);  // floor(1000 * 0.2) + 1 = 201 expected
  EXPECT_NEAR(r, 0.697, 5e-4);
  EXPECT_LT(r, kMinSamplingRatio);
  t.samples[140].valid = true;
  EXPECT_GT(sampling_ratio(t), kMinSamplingRatio);
}

TEST(SamplingRatio, ZeroDurationIsAnError) {
  TrialRecord t;
  t.events = {{events::kStimulusOn, 10, std::nullopt}};
  EXPECT_THROW(sampling_ratio(t), Error);
  t.events.clear();
  EXPECT_THROW(sampling_ratio(t), Error);
}

TEST(SceneRefs, ResolvedNextToOrAboveTheSession) {
  TempDir dir;
  fs::create_directories(dir / "sessions");
  fs::create_directories(dir / "scenes");
  spit(dir / "scenes/x.json", "{}");
  GazeSession s = small_session();
  EXPECT_NO_THROW(validate_scene_refs(s, dir / "sessions/s.jsonl"));
  EXPECT_NO_THROW(validate_scene_refs(s, dir / "s.jsonl"));
  s.trials[1].scene = "scenes/missing.json";
  EXPECT_THROW(validate_scene_refs(s, dir / "sessions/s.jsonl"), Error);
}
