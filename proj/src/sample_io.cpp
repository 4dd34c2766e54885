#include "ttlift/sample.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace ttlift {

using nlohmann::json;

namespace {

constexpr std::array<std::pair<ScenarioKind, std::string_view>, 5> kScenarioNames{{
    {ScenarioKind::kRallyLeft, "rally-left"},
    {ScenarioKind::kRallyRight, "rally-right"},
    {ScenarioKind::kServe, "serve"},
    {ScenarioKind::kFaultNet, "fault-net"},
    {ScenarioKind::kFaultLong, "fault-long"},
}};

json vec_json(const Vec2& v) { return json::array({v.x(), v.y()}); }
json vec_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

Vec2 vec2_from(const json& j) {
  if (!j.is_array() || j.size() != 2) throw DataError("expected a 2-vector");
  return {j[0].get<double>(), j[1].get<double>()};
}

Vec3 vec3_from(const json& j) {
  if (!j.is_array() || j.size() != 3) throw DataError("expected a 3-vector");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

json keypoints_json(const TableKeypointSet& set) {
  json pts = json::array();
  for (const auto& p : set.points) pts.push_back(p ? vec_json(*p) : json(nullptr));
  return pts;
}

TableKeypointSet keypoints_from(const json& pts, const json* valid) {
  if (!pts.is_array() || pts.size() != kNumTableKeypoints)
    throw DataError("expected 13 keypoint entries");
  if (valid && (!valid->is_array() || valid->size() != kNumTableKeypoints))
    throw DataError("keypoints_valid must have 13 entries");
  TableKeypointSet set;
  for (std::size_t k = 0; k < kNumTableKeypoints; ++k) {
    const bool ok = valid ? (*valid)[k].get<bool>() : !pts[k].is_null();
    if (ok) {
      if (pts[k].is_null()) throw DataError("keypoint marked valid but has no coordinates");
      set.points[k] = vec2_from(pts[k]);
    }
  }
  return set;
}

const json& field(const json& j, const char* name) {
  const auto it = j.find(name);
  if (it == j.end()) throw DataError(std::string("missing field '") + name + "'");
  return *it;
}

}  // namespace

std::string_view to_string(ScenarioKind kind) {
  for (const auto& [k, name] : kScenarioNames)
    if (k == kind) return name;
  return "unknown";
}

ScenarioKind scenario_from_string(std::string_view name) {
  for (const auto& [k, n] : kScenarioNames)
    if (n == name) return k;
  throw DataError("unknown scenario '" + std::string(name) + "'");
}

std::size_t SynthSample::valid_count() const {
  return static_cast<std::size_t>(std::count(ball_valid.begin(), ball_valid.end(), true));
}

void SynthSample::validate() const {
  const std::size_t n = times_s.size();
  if (n < 1) throw DataError("sample " + std::to_string(id) + ": no frames");
  if (ball2d_px.size() != n || ball_valid.size() != n)
    throw DataError("sample " + std::to_string(id) + ": ball track length mismatch");
  if (!truth_r3d_m.empty() && truth_r3d_m.size() != n)
    throw DataError("sample " + std::to_string(id) + ": truth length mismatch");
  for (std::size_t i = 1; i < n; ++i)
    if (!(times_s[i] > times_s[i - 1]))
      throw DataError("sample " + std::to_string(id) + ": timestamps not strictly increasing");
  if (!keypoint_frames.empty() && keypoint_frames.size() != n)
    throw DataError("sample " + std::to_string(id) + ": keypoint frame count mismatch");
}

std::string to_json_line(const SynthSample& s) {
  s.validate();
  json j;
  j["id"] = s.id;
  j["times_s"] = s.times_s;
  json ball = json::array();
  for (std::size_t i = 0; i < s.size(); ++i)
    ball.push_back(s.ball_valid[i] ? vec_json(s.ball2d_px[i]) : json(nullptr));
  j["ball2d_px"] = std::move(ball);
  j["ball_valid"] = s.ball_valid;
  j["keypoints2d_px"] = keypoints_json(s.keypoints);
  json kv = json::array();
  for (const auto& p : s.keypoints.points) kv.push_back(p.has_value());
  j["keypoints_valid"] = std::move(kv);
  j["camera_P"] = s.camera.to_row_major();
  json truth = json::array();
  for (const auto& r : s.truth_r3d_m) truth.push_back(vec_json(r));
  j["truth_r3d_m"] = std::move(truth);
  j["truth_spin_rad_s"] = vec_json(s.truth_spin);
  j["truth_v0_m_s"] = vec_json(s.truth_v0);
  j["image_w"] = s.image_w;
  j["image_h"] = s.image_h;
  j["fps"] = s.fps;
  j["scenario"] = std::string(to_string(s.scenario));
  if (!s.keypoint_frames.empty()) {
    json frames = json::array();
    for (const auto& f : s.keypoint_frames) frames.push_back(keypoints_json(f));
    j["keypoint_frames_px"] = std::move(frames);
  }
  return j.dump();
}

SynthSample from_json_line(std::string_view line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw DataError(std::string("invalid JSON: ") + e.what());
  }
  try {
    SynthSample s;
    if (j.contains("id")) s.id = j["id"].get<std::int64_t>();
    s.times_s = field(j, "times_s").get<std::vector<double>>();
    s.ball_valid = field(j, "ball_valid").get<std::vector<bool>>();
    const json& ball = field(j, "ball2d_px");
    if (!ball.is_array() || ball.size() != s.times_s.size())
      throw DataError("ball2d_px length mismatch");
    s.ball2d_px.resize(ball.size(), Vec2::Zero());
    for (std::size_t i = 0; i < ball.size(); ++i) {
      if (i < s.ball_valid.size() && s.ball_valid[i]) {
        if (ball[i].is_null()) throw DataError("ball frame marked valid but has no coordinates");
        s.ball2d_px[i] = vec2_from(ball[i]);
      }
    }
    s.keypoints = keypoints_from(field(j, "keypoints2d_px"), &field(j, "keypoints_valid"));
    s.camera = CameraModel::from_row_major(field(j, "camera_P").get<std::vector<double>>());
    for (const auto& r : field(j, "truth_r3d_m")) s.truth_r3d_m.push_back(vec3_from(r));
    s.truth_spin = vec3_from(field(j, "truth_spin_rad_s"));
    if (j.contains("truth_v0_m_s")) s.truth_v0 = vec3_from(j["truth_v0_m_s"]);
    s.image_w = field(j, "image_w").get<int>();
    s.image_h = field(j, "image_h").get<int>();
    s.fps = field(j, "fps").get<double>();
    s.scenario = scenario_from_string(field(j, "scenario").get<std::string>());
    if (j.contains("keypoint_frames_px"))
      for (const auto& f : j["keypoint_frames_px"]) s.keypoint_frames.push_back(keypoints_from(f, nullptr));
    s.validate();
    return s;
  } catch (const json::exception& e) {
    throw DataError(std::string("schema error: ") + e.what());
  }
}

void write_jsonl(std::ostream& out, const std::vector<SynthSample>& samples) {
  for (const auto& s : samples) out << to_json_line(s) << '\n';
}

std::vector<SynthSample> read_jsonl(std::istream& in) {
  std::vector<SynthSample> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(from_json_line(line));
    } catch (const DataError& e) {
      throw DataError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void write_file_atomic(const std::string& path, const std::string& contents) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write '" + path + "'");
    out << contents;
    out.flush();
    if (!out) throw DataError("write failed for '" + path + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw DataError("cannot move output into place at '" + path + "'");
  }
}

void write_jsonl_file(const std::string& path, const std::vector<SynthSample>& samples) {
  std::ostringstream out;
  write_jsonl(out, samples);
  write_file_atomic(path, out.str());
}

std::vector<SynthSample> read_jsonl_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  return read_jsonl(in);
}

}  // namespace ttlift
