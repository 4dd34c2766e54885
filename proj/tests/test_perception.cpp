#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "ttlift/perception.hpp"

namespace {

using namespace ttlift;

TEST(GaussianHeatmap, CenterAndSigmaValues) {
  const Heatmap h = gaussian_heatmap(Vec2(100.0, 200.0), 6.0, 320, 320);
  EXPECT_DOUBLE_EQ(h.at(100, 200), 1.0);
  EXPECT_NEAR(h.at(106, 200), std::exp(-0.5), 1e-12);
  EXPECT_NEAR(h.at(100, 194), 0.6065306597, 1e-9);
  EXPECT_EQ(kDefaultHeatmapSigmaPx, 6.0);
  EXPECT_GE(h.grid.minCoeff(), 0.0);
  EXPECT_LE(h.grid.maxCoeff(), 1.0);
}

TEST(ExtractPeak, IntegralCenter) {
  const auto p = extract_peak(gaussian_heatmap(Vec2(100.0, 200.0), 6.0, 320, 320));
  ASSERT_TRUE(p);
  EXPECT_NEAR(p->position.x(), 100.0, 0.05);
  EXPECT_NEAR(p->position.y(), 200.0, 0.05);
  EXPECT_DOUBLE_EQ(p->confidence, 1.0);
}

TEST(ExtractPeak, SubPixelCenter) {
  const auto p = extract_peak(gaussian_heatmap(Vec2(100.3, 200.7), 6.0, 320, 320));
  ASSERT_TRUE(p);
  EXPECT_NEAR(p->position.x(), 100.3, 0.05);
  EXPECT_NEAR(p->position.y(), 200.7, 0.05);
}

TEST(ExtractPeak, EmptyHeatmapHasNoDetection) {
  Heatmap h;
  h.grid = Eigen::MatrixXd::Zero(64, 64);
  EXPECT_FALSE(extract_peak(h, 0.1));
  h.grid(10, 10) = 0.09;
  EXPECT_FALSE(extract_peak(h, 0.1));
}

TEST(ExtractPeak, RandomCentersAwayFromBorders) {
  std::mt19937_64 rng(6);
  const double sigma = 6.0;
  std::uniform_real_distribution<double> x(3 * sigma, 200 - 3 * sigma), y(3 * sigma, 150 - 3 * sigma);
  for (int i = 0; i < 300; ++i) {
    const Vec2 c(x(rng), y(rng));
    const auto p = extract_peak(gaussian_heatmap(c, sigma, 200, 150));
    ASSERT_TRUE(p);
    EXPECT_LT((p->position - c).norm(), 0.05) << c.transpose();
  }
}

DetectionTrack track(std::vector<std::optional<Vec2>> pts) {
  DetectionTrack t;
  for (std::size_t i = 0; i < pts.size(); ++i) t.times_s.push_back(0.02 * static_cast<double>(i));
  t.points = std::move(pts);
  return t;
}

TEST(AgreementFilter, IdenticalTracksKeepEverything) {
  const DetectionTrack a = track({Vec2(1, 2), Vec2(3, 4), std::nullopt, Vec2(5, 6)});
  const DetectionTrack out = agreement_filter(a, a, kBallAgreementPx);
  EXPECT_EQ(out.points, a.points);
  EXPECT_EQ(out.times_s, a.times_s);
}

TEST(AgreementFilter, InclusiveThresholds) {
  EXPECT_EQ(kBallAgreementPx, 20.0);
  EXPECT_EQ(kKeypointAgreementPx, 10.0);
  for (double thr : {kBallAgreementPx, kKeypointAgreementPx}) {
    const DetectionTrack p = track({Vec2(100, 100), Vec2(100, 100), Vec2(100, 100)});
    const DetectionTrack x = track({Vec2(100 + thr, 100), Vec2(100, 100 + thr + 1e-9), std::nullopt});
    const DetectionTrack out = agreement_filter(p, x, thr);
    ASSERT_TRUE(out.points[0]);
    EXPECT_EQ(*out.points[0], Vec2(100, 100));  // primary value is kept
    EXPECT_FALSE(out.points[1]);
    EXPECT_FALSE(out.points[2]);
  }
}

TEST(AgreementFilter, OutputIsSubsetOfPrimary) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 60.0);
  std::bernoulli_distribution miss(0.2);
  std::vector<std::optional<Vec2>> a, b;
  for (int i = 0; i < 500; ++i) {
    a.push_back(miss(rng) ? std::nullopt : std::optional<Vec2>(Vec2(u(rng), u(rng))));
    b.push_back(miss(rng) ? std::nullopt : std::optional<Vec2>(Vec2(u(rng), u(rng))));
  }
  const DetectionTrack out = agreement_filter(track(a), track(b), 20.0);
  for (std::size_t i = 0; i < a.size(); ++i)
    if (out.points[i]) { EXPECT_EQ(*out.points[i], *a[i]); }
  EXPECT_LE(out.detected(), track(a).detected());
}

TEST(AgreementFilter, TimestampMismatchIsContractError) {
  DetectionTrack a = track({Vec2(1, 1), Vec2(2, 2)});
  DetectionTrack b = a;
  b.times_s[1] = 0.5;
  EXPECT_THROW(agreement_filter(a, b, 20.0), ContractError);
}

// Brute-force oracle: core points from the full distance matrix, clusters as
// connected components of the core graph, border points adjacent to a core.
struct OracleClusters {
  std::vector<bool> core;
  std::vector<int> component;  // per point: component of a core point, -1 otherwise
  int n_components = 0;
};

OracleClusters oracle_dbscan(const std::vector<Vec2>& pts, double eps, std::size_t min_pts) {
  const std::size_t n = pts.size();
  OracleClusters o;
  o.core.assign(n, false);
  o.component.assign(n, -1);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t cnt = 0;
    for (std::size_t j = 0; j < n; ++j) cnt += (pts[i] - pts[j]).norm() <= eps;
    o.core[i] = cnt >= min_pts;
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!o.core[i] || o.component[i] >= 0) continue;
    std::queue<std::size_t> q;
    q.push(i);
    o.component[i] = o.n_components;
    while (!q.empty()) {
      const std::size_t a = q.front();
      q.pop();
      for (std::size_t b = 0; b < n; ++b)
        if (o.core[b] && o.component[b] < 0 && (pts[a] - pts[b]).norm() <= eps) {
          o.component[b] = o.n_components;
          q.push(b);
        }
    }
    ++o.n_components;
  }
  return o;
}

void expect_matches_oracle(const std::vector<Vec2>& pts, double eps, std::size_t min_pts) {
  const DbscanResult r = dbscan(pts, eps, min_pts);
  const OracleClusters o = oracle_dbscan(pts, eps, min_pts);
  ASSERT_EQ(r.labels.size(), pts.size());
  ASSERT_EQ(static_cast<int>(r.clusters.size()), o.n_components);
  // Components are discovered in input order, so labels coincide on core points.
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (o.core[i]) {
      EXPECT_EQ(r.labels[i], o.component[i]);
      continue;
    }
    std::set<int> reachable;
    for (std::size_t j = 0; j < pts.size(); ++j)
      if (o.core[j] && (pts[i] - pts[j]).norm() <= eps) reachable.insert(o.component[j]);
    if (reachable.empty()) {
      EXPECT_EQ(r.labels[i], DbscanResult::kNoise);
    } else {
      EXPECT_TRUE(reachable.count(r.labels[i])) << "border point " << i;
    }
  }
  // Partition: clusters and noise are disjoint and cover the input.
  std::vector<int> seen(pts.size(), 0);
  // A cluster may end up smaller than min_pts when an earlier cluster already
  // claimed shared border points, so only the partition is checked here.
  for (std::size_t c = 0; c < r.clusters.size(); ++c) {
    for (std::size_t i : r.clusters[c]) {
      ++seen[i];
      EXPECT_EQ(r.labels[i], static_cast<int>(c));
    }
  }
  for (std::size_t i : r.noise) ++seen[i];
  for (int s : seen) EXPECT_EQ(s, 1);
}

TEST(Dbscan, IdenticalPointsFormOneCluster) {
  const std::vector<Vec2> pts(10, Vec2(5.0, 5.0));
  const DbscanResult r = dbscan(pts, 1.0, 4);
  ASSERT_EQ(r.clusters.size(), 1u);
  EXPECT_EQ(r.clusters[0].size(), 10u);
  EXPECT_TRUE(r.noise.empty());
}

TEST(Dbscan, TwoBlobs) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<Vec2> pts;
  for (int i = 0; i < 20; ++i) pts.emplace_back(n(rng), n(rng));
  for (int i = 0; i < 20; ++i) pts.emplace_back(100.0 + n(rng), n(rng));
  const DbscanResult r = dbscan(pts, 5.0, 4);
  EXPECT_EQ(r.clusters.size(), 2u);
  expect_matches_oracle(pts, 5.0, 4);
}

TEST(Dbscan, SparsePointsAreNoise) {
  std::vector<Vec2> pts;
  for (int i = 0; i < 15; ++i) pts.emplace_back(10.0 * i, 3.0 * (i % 2));
  const DbscanResult r = dbscan(pts, 5.0, 3);
  EXPECT_TRUE(r.clusters.empty());
  EXPECT_EQ(r.noise.size(), pts.size());
}

TEST(Dbscan, MatchesBruteForceOnRandomInputs) {
  std::mt19937_64 rng(10);
  std::uniform_int_distribution<int> count(1, 50);
  std::uniform_real_distribution<double> u(0.0, 40.0), eps(1.0, 8.0);
  std::uniform_int_distribution<std::size_t> mp(1, 6);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<Vec2> pts(static_cast<std::size_t>(count(rng)));
    for (auto& p : pts) p = Vec2(u(rng), u(rng));
    expect_matches_oracle(pts, eps(rng), mp(rng));
  }
}

TEST(Dbscan, DefaultMinPts) {
  EXPECT_EQ(default_min_pts(10), 4u);
  EXPECT_EQ(default_min_pts(80), 4u);
  EXPECT_EQ(default_min_pts(81), 5u);
  EXPECT_EQ(default_min_pts(200), 10u);
}

TableKeypointSet single(std::size_t k, const Vec2& p) {
  TableKeypointSet s;
  s.points[k] = p;
  return s;
}

TEST(ConsolidateKeypoints, ConstantDetections) {
  std::vector<TableKeypointSet> frames(30, single(4, Vec2(812.5, 433.25)));
  const TableKeypointSet out = consolidate_keypoints(frames, kDefaultDbscanEpsPx, default_min_pts(30));
  ASSERT_TRUE(out.points[4]);
  EXPECT_NEAR((*out.points[4] - Vec2(812.5, 433.25)).norm(), 0.0, 1e-9);
  for (std::size_t k = 0; k < kNumTableKeypoints; ++k)
    if (k != 4) { EXPECT_FALSE(out.points[k]); }
}

TEST(ConsolidateKeypoints, FortyPercentOutliers) {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> jitter(-1.0, 1.0);
  const Vec2 truth(640.0, 360.0);
  std::vector<TableKeypointSet> frames;
  for (int i = 0; i < 60; ++i) frames.push_back(single(0, truth + Vec2(jitter(rng), jitter(rng)) / std::sqrt(2.0)));
  for (int i = 0; i < 40; ++i) {
    const double a = 2.0 * M_PI * i / 40.0;
    frames.push_back(single(0, truth + (80.0 + 60.0 * i) * Vec2(std::cos(a), std::sin(a))));
  }
  std::shuffle(frames.begin(), frames.end(), rng);
  const TableKeypointSet out = consolidate_keypoints(frames, 5.0, default_min_pts(frames.size()));
  ASSERT_TRUE(out.points[0]);
  EXPECT_LT((*out.points[0] - truth).norm(), 1.0);
}

TEST(ConsolidateKeypoints, NoDetectionsMeansUndetectable) {
  const std::vector<TableKeypointSet> frames(20);
  const TableKeypointSet out = consolidate_keypoints(frames, 5.0, 4);
  EXPECT_EQ(out.available(), 0u);
}

TEST(ConsolidateKeypoints, InvariantToFrameOrder) {
  std::mt19937_64 rng(30);
  std::uniform_real_distribution<double> u(0.0, 30.0);
  std::bernoulli_distribution present(0.7);
  std::vector<TableKeypointSet> frames(60);
  for (auto& f : frames)
    for (std::size_t k = 0; k < kNumTableKeypoints; ++k)
      if (present(rng)) f.points[k] = Vec2(100.0 * k + u(rng), u(rng));
  const TableKeypointSet ref = consolidate_keypoints(frames, 5.0, 4);
  for (int trial = 0; trial < 10; ++trial) {
    std::shuffle(frames.begin(), frames.end(), rng);
    const TableKeypointSet out = consolidate_keypoints(frames, 5.0, 4);
    for (std::size_t k = 0; k < kNumTableKeypoints; ++k) {
      ASSERT_EQ(out.points[k].has_value(), ref.points[k].has_value());
      if (out.points[k]) { EXPECT_EQ(*out.points[k], *ref.points[k]); }
    }
  }
}

}  // namespace
