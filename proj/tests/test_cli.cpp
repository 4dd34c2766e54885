#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>
#include <gtest/gtest.h>
#include <json.hpp>
#include <sys/wait.h>

#include "ttlift/camera.hpp"
#include "ttlift/sample.hpp"

namespace {

namespace fs = std::filesystem;
using namespace ttlift;

class Cli : public ::testing::Test {
protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / (std::string("ttlift_cli_") + info->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  /// Runs the CLI with `args`, returns the exit code; stdout/stderr go to files.
  int run(const std::string& args) {
    const std::string cmd = std::string(TTLIFT_CLI_PATH) + " " + args + " > " + path("stdout.txt") + " 2> " +
                            path("stderr.txt");
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

  std::string stderr_text() const { return slurp(path("stderr.txt")); }

  static std::string slurp(const std::string& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

  void generate(const std::string& name, int n, int seed) {
    ASSERT_EQ(run("generate --n " + std::to_string(n) + " --seed " + std::to_string(seed) + " --out " + path(name)), 0)
        << stderr_text();
  }

  fs::path dir_;
};

TEST_F(Cli, GenerateIsReproducible) {
  generate("a.jsonl", 12, 5);
  ASSERT_EQ(run("generate --n 12 --seed 5 --out " + path("b.jsonl") + " --manifest " + path("b.json")), 0);
  EXPECT_EQ(slurp(path("a.jsonl")), slurp(path("b.jsonl")));
  const auto ma = nlohmann::json::parse(slurp(path("a.jsonl.manifest.json")));
  const auto mb = nlohmann::json::parse(slurp(path("b.json")));
  EXPECT_EQ(ma["config_hash"], mb["config_hash"]);
  EXPECT_EQ(ma["trajectories"], 12);
  EXPECT_EQ(ma["seed"], 5);
  std::size_t positions = 0;
  for (const auto& s : read_jsonl_file(path("a.jsonl"))) positions += s.size();
  EXPECT_EQ(ma["ball_positions"], positions);
}

TEST_F(Cli, GenerateRejectsBadArguments) {
  EXPECT_EQ(run("generate --n 0 --out " + path("x.jsonl")), 2);
  EXPECT_NE(stderr_text().find("error: config"), std::string::npos);
  EXPECT_EQ(run("generate --preset paper --out " + path("x.jsonl")), 2);
  EXPECT_NE(stderr_text().find("--yes-long-run"), std::string::npos);
  EXPECT_FALSE(fs::exists(path("x.jsonl")));
  EXPECT_EQ(run("generate --n 3 --set no_such_key=1 --out " + path("x.jsonl")), 2);
  EXPECT_NE(stderr_text().find("no_such_key"), std::string::npos);
  EXPECT_EQ(run("generate --n 3 --set fps_min=70 --out " + path("x.jsonl")), 2);
  EXPECT_EQ(run("frobnicate"), 2);
}

TEST_F(Cli, SmokeTrainingAndResume) {
  generate("train.jsonl", 16, 1);
  generate("val.jsonl", 6, 2);
  const std::string common = "train --preset smoke --train " + path("train.jsonl") + " --val " + path("val.jsonl");
  const auto t0 = std::chrono::steady_clock::now();
  ASSERT_EQ(run(common + " --out " + path("m.ckpt") + " --state " + path("state.ckpt")), 0) << stderr_text();
  EXPECT_LT(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(), 60.0);
  const std::string history = slurp(path("m.ckpt.history.csv"));
  EXPECT_EQ(std::count(history.begin(), history.end(), '\n'), 6);
  EXPECT_EQ(history.rfind("epoch,loss,f1,m2dre", 0), 0u);

  // Stop after three epochs, then resume: same history and selected model.
  ASSERT_EQ(run(common + " --stop-after 3 --out " + path("p.ckpt") + " --state " + path("p_state.ckpt")), 0);
  const std::string partial = slurp(path("p.ckpt.history.csv"));
  EXPECT_EQ(std::count(partial.begin(), partial.end(), '\n'), 4);
  ASSERT_EQ(run(common + " --resume " + path("p_state.ckpt") + " --out " + path("r.ckpt")), 0) << stderr_text();
  EXPECT_EQ(slurp(path("r.ckpt.history.csv")), history);
  EXPECT_EQ(slurp(path("r.ckpt")), slurp(path("m.ckpt")));

  ASSERT_EQ(run("eval --model " + path("m.ckpt") + " --data " + path("val.jsonl") + " --out " + path("e.csv")), 0);
  const std::string report = slurp(path("e.csv"));
  EXPECT_EQ(report.rfind("id,n_frames,m2dre_px,spin_truth,spin_pred\n", 0), 0u);
  EXPECT_NE(report.find("# trajectories,6"), std::string::npos);
}

TEST_F(Cli, TrainErrors) {
  EXPECT_EQ(run("train --train " + path("missing.jsonl") + " --out " + path("m.ckpt")), 3);
  generate("t.jsonl", 3, 1);
  EXPECT_EQ(run("train --preset smoke --set lerning_rate=1 --train " + path("t.jsonl") + " --out " + path("m.ckpt")), 2);
  EXPECT_NE(stderr_text().find("unknown config key 'lerning_rate'"), std::string::npos);
  std::ofstream(path("bad.cfg")) << "epochs = 2\nepochs = 3\n";
  EXPECT_EQ(run("train --config " + path("bad.cfg") + " --train " + path("t.jsonl") + " --out " + path("m.ckpt")), 2);
}

std::vector<std::string> report_lines(const std::string& csv, const std::string& prefix) {
  std::vector<std::string> out;
  std::istringstream in(csv);
  for (std::string line; std::getline(in, line);)
    if (line.rfind(prefix, 0) == 0) out.push_back(line);
  return out;
}

double aggregate(const std::string& csv, const std::string& key) {
  const auto lines = report_lines(csv, "# " + key + ",");
  if (lines.size() != 1) return std::nan("");
  return std::stod(lines[0].substr(key.size() + 3));
}

TEST_F(Cli, OracleEvaluation) {
  generate("d.jsonl", 20, 3);
  ASSERT_EQ(run("eval --oracle --data " + path("d.jsonl") + " --out " + path("o.csv")), 0) << stderr_text();
  const std::string csv = slurp(path("o.csv"));
  EXPECT_EQ(aggregate(csv, "m2dre_px"), 0.0);
  EXPECT_EQ(aggregate(csv, "acc"), 1.0);
  EXPECT_EQ(aggregate(csv, "f1"), 1.0);

  ASSERT_EQ(run("eval --oracle --transform half-fps --data " + path("d.jsonl") + " --out " + path("h.csv")), 0);
  const auto samples = read_jsonl_file(path("d.jsonl"));
  const auto rows = report_lines(slurp(path("h.csv")), "");
  ASSERT_EQ(rows.size(), 1 + samples.size() + 5);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const std::string expected = std::to_string(samples[i].id) + "," + std::to_string((samples[i].size() + 1) / 2) + ",";
    EXPECT_EQ(rows[1 + i].rfind(expected, 0), 0u) << rows[1 + i];
  }

  ASSERT_EQ(run("eval --oracle --transform missing --seed 4 --data " + path("d.jsonl") + " --out " + path("m1.csv")), 0);
  ASSERT_EQ(run("eval --oracle --transform missing --seed 4 --data " + path("d.jsonl") + " --out " + path("m2.csv")), 0);
  EXPECT_EQ(slurp(path("m1.csv")), slurp(path("m2.csv")));
  EXPECT_EQ(run("eval --oracle --transform sideways --data " + path("d.jsonl")), 2);
  EXPECT_EQ(run("eval --data " + path("d.jsonl")), 2);
}

TEST_F(Cli, PlotWritesWellFormedSvg) {
  generate("d.jsonl", 3, 9);
  auto samples = read_jsonl_file(path("d.jsonl"));
  ASSERT_EQ(run("plot --oracle --data " + path("d.jsonl") + " --index 1 --out " + path("p.svg")), 0) << stderr_text();

  boost::property_tree::ptree tree;
  std::istringstream svg(slurp(path("p.svg")));
  ASSERT_NO_THROW(boost::property_tree::read_xml(svg, tree));
  std::map<std::string, std::vector<std::pair<std::string, std::string>>> circles;
  for (const auto& [tag, node] : tree.get_child("svg")) {
    if (tag != "circle") continue;
    circles[node.get<std::string>("<xmlattr>.class")].emplace_back(node.get<std::string>("<xmlattr>.cx"),
                                                                    node.get<std::string>("<xmlattr>.cy"));
  }
  const SynthSample& s = samples[1];
  EXPECT_EQ(circles["detection"].size(), s.valid_count());
  EXPECT_EQ(circles["prediction"].size(), s.valid_count());
  EXPECT_EQ(circles["keypoint"].size(), kNumTableKeypoints);
  // With exact detections the oracle markers sit on the detections.
  EXPECT_EQ(circles["prediction"], circles["detection"]);
  EXPECT_EQ(tree.get<std::string>("svg.rect.<xmlattr>.fill"), "white");

  EXPECT_EQ(run("plot --oracle --data " + path("d.jsonl") + " --index 7 --out " + path("q.svg")), 3);
}

TEST_F(Cli, FilterWithIdenticalStreamsKeepsEverything) {
  generate("d.jsonl", 5, 13);
  ASSERT_EQ(run("filter --primary " + path("d.jsonl") + " --auxiliary " + path("d.jsonl") + " --out " +
                path("f.jsonl")),
            0)
      << stderr_text();
  const auto in = read_jsonl_file(path("d.jsonl"));
  const auto out = read_jsonl_file(path("f.jsonl"));
  ASSERT_EQ(in.size(), out.size());
  for (std::size_t i = 0; i < in.size(); ++i) {
    EXPECT_EQ(out[i].ball_valid, in[i].ball_valid);
    EXPECT_EQ(out[i].keypoints.available(), in[i].keypoints.available());
  }
}

TEST_F(Cli, FilterDropsDisagreeingFrames) {
  generate("d.jsonl", 2, 14);
  auto aux = read_jsonl_file(path("d.jsonl"));
  aux[0].ball2d_px[2] += Vec2(25.0, 0.0);
  aux[0].ball2d_px[3] += Vec2(19.0, 0.0);
  write_jsonl_file(path("aux.jsonl"), aux);
  ASSERT_EQ(run("filter --primary " + path("d.jsonl") + " --auxiliary " + path("aux.jsonl") + " --out " +
                path("f.jsonl")),
            0);
  const auto out = read_jsonl_file(path("f.jsonl"));
  EXPECT_FALSE(out[0].ball_valid[2]);
  EXPECT_TRUE(out[0].ball_valid[3]);
  EXPECT_EQ(out[0].valid_count(), out[0].size() - 1);
}

TEST_F(Cli, CalibrationRecoversCamera) {
  generate("d.jsonl", 1, 21);
  auto samples = read_jsonl_file(path("d.jsonl"));
  ASSERT_GE(samples[0].keypoints.available(), 10u);
  ASSERT_EQ(run("calibrate --data " + path("d.jsonl") + " --out " + path("c.json")), 0) << stderr_text();
  const auto clean = nlohmann::json::parse(slurp(path("c.json")));
  EXPECT_LT(clean["table_m2dre_px"].get<double>(), 1e-6);
  const auto P = clean["camera_P"].get<std::vector<double>>();
  const CameraModel cam = CameraModel::from_row_major(P);
  const Vec3 probe(0.3, -0.2, 1.1);
  EXPECT_LT((project(cam, probe) - project(samples[0].camera, probe)).norm(), 1e-6);

  // Two gross outliers on the surface keypoints are flagged and ignored.
  samples[0].keypoints.points[0] = *samples[0].keypoints.points[0] + Vec2(60.0, -40.0);
  samples[0].keypoints.points[6] = *samples[0].keypoints.points[6] + Vec2(-50.0, 70.0);
  write_jsonl_file(path("bad.jsonl"), samples);
  ASSERT_EQ(run("calibrate --data " + path("bad.jsonl") + " --out " + path("b.json")), 0) << stderr_text();
  const auto robust = nlohmann::json::parse(slurp(path("b.json")));
  EXPECT_FALSE(robust["keypoint_inlier"][0].get<bool>());
  EXPECT_FALSE(robust["keypoint_inlier"][6].get<bool>());
  EXPECT_TRUE(robust["keypoint_inlier"][1].get<bool>());
  EXPECT_GT(robust["keypoint_error_px"][0].get<double>(), 50.0);
  const CameraModel rcam = CameraModel::from_row_major(robust["camera_P"].get<std::vector<double>>());
  EXPECT_LT((project(rcam, probe) - project(samples[0].camera, probe)).norm(), 1e-6);

  // Too few keypoints is a data error.
  for (std::size_t k = 4; k < kNumTableKeypoints; ++k) samples[0].keypoints.points[k].reset();
  write_jsonl_file(path("few.jsonl"), samples);
  EXPECT_EQ(run("calibrate --data " + path("few.jsonl")), 3);
  EXPECT_NE(stderr_text().find("need at least 6"), std::string::npos);
}

}  // namespace
