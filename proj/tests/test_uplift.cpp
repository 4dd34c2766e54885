#include <algorithm>
#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "ttlift/synthesis.hpp"
#include "ttlift/uplift/checkpoint.hpp"
#include "ttlift/uplift/grad_check.hpp"
#include "ttlift/uplift/model.hpp"
#include "ttlift/uplift/rope.hpp"

namespace {

using namespace ttlift;
using namespace ttlift::uplift;
using VecXd = Eigen::VectorXd;

TEST(Rope, IdentityAtTimeZero) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n;
  VecXd x(16);
  for (auto& v : x) v = n(rng);
  EXPECT_EQ(rope_rotate<double>(x, 0.0, RopeConfig{}), x);
}

TEST(Rope, FirstPairRotatesByOneRadianPerQuantum) {
  VecXd x = VecXd::Zero(8);
  x(0) = 1.0;
  const VecXd y = rope_rotate<double>(x, 0.002, RopeConfig{});
  EXPECT_NEAR(y(0), std::cos(1.0), 1e-15);
  EXPECT_NEAR(y(1), std::sin(1.0), 1e-15);
}

TEST(Rope, ThetaSchedule) {
  const RopeConfig cfg;
  EXPECT_EQ(cfg.theta(0, 32), 1.0);
  EXPECT_NEAR(cfg.theta(8, 32), 0.01, 1e-15);
}

TEST(Rope, DotProductDependsOnlyOnTimeDifference) {
  const RopeConfig cfg;
  std::mt19937_64 rng(7);
  std::normal_distribution<double> n;
  std::uniform_int_distribution<int> pos(0, 2000), shift(-500, 500);
  for (int trial = 0; trial < 1000; ++trial) {
    VecXd q(32), k(32);
    for (auto& v : q) v = n(rng);
    for (auto& v : k) v = n(rng);
    const int a = pos(rng), b = pos(rng), s = shift(rng);
    const double t1 = a * cfg.delta_t, t2 = b * cfg.delta_t;
    const double base = rope_rotate<double>(q, t1, cfg).dot(rope_rotate<double>(k, t2, cfg));
    const double moved = rope_rotate<double>(q, t1 + s * cfg.delta_t, cfg)
                             .dot(rope_rotate<double>(k, t2 + s * cfg.delta_t, cfg));
    EXPECT_NEAR(base, moved, 1e-10);
  }
}

TEST(Rope, TimesAreQuantized) {
  const RopeConfig cfg;
  VecXd x = VecXd::LinSpaced(8, 1.0, 8.0);
  EXPECT_EQ(rope_rotate<double>(x, 0.0101, cfg), rope_rotate<double>(x, 0.0099, cfg));
  EXPECT_EQ(cfg.position(0.0101), 5);
  EXPECT_NE(rope_rotate<double>(x, 0.0101, cfg), rope_rotate<double>(x, 0.0121, cfg));
}

TEST(Rope, TableMatchesVectorForm) {
  const RopeConfig cfg;
  const std::vector<std::int64_t> positions{0, 3, 17};
  const auto table = RopeTable<double>::build(positions, 8, cfg);
  Eigen::MatrixXd block = Eigen::MatrixXd::Random(16, 3);
  Eigen::MatrixXd rotated = block;
  table.apply(rotated, 2);
  for (int j = 0; j < 3; ++j)
    for (int h = 0; h < 2; ++h) {
      VecXd slice = block.col(j).segment(8 * h, 8);
      rope_rotate_inplace(slice, positions[static_cast<std::size_t>(j)], cfg);
      EXPECT_TRUE(rotated.col(j).segment(8 * h, 8).isApprox(slice, 1e-14));
    }
  table.apply(rotated, 2, true);
  EXPECT_TRUE(rotated.isApprox(block, 1e-14));
}

ModelConfig small_config(std::uint64_t seed = 1) {
  ModelConfig cfg;
  cfg.d = 16;
  cfg.layers = 6;
  cfg.heads = 2;
  cfg.embed_blocks = 2;
  cfg.spin_blocks = 2;
  cfg.init_seed = seed;
  return cfg;
}

std::vector<std::pair<int, Vec2>> some_keypoints(std::size_t count) {
  std::vector<std::pair<int, Vec2>> kps;
  for (std::size_t k = 0; k < count; ++k)
    kps.emplace_back(static_cast<int>(k), Vec2(0.3 + 0.02 * static_cast<double>(k), 0.4 - 0.01 * static_cast<double>(k)));
  return kps;
}

UpliftInput synthetic_input(std::size_t frames, double fps, std::uint64_t seed = 3) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.1, 0.5);
  UpliftInput in;
  for (std::size_t i = 0; i < frames; ++i) {
    in.times_s.push_back(static_cast<double>(i) / fps);
    in.ball.emplace_back(u(rng), u(rng));
  }
  in.keypoints = some_keypoints(kNumTableKeypoints);
  return in;
}

TEST(Embedding, OutputWidthForAnyKeypointCount) {
  const UpliftModel<double> model(small_config());
  for (std::size_t k = 0; k <= kNumTableKeypoints; ++k) {
    const auto token = model.embed_frame(Vec2(0.5, 0.3), some_keypoints(k));
    EXPECT_EQ(token.size(), 16);
    EXPECT_TRUE(token.allFinite());
  }
}

TEST(Embedding, InvariantToKeypointOrder) {
  const UpliftModel<double> model(small_config());
  auto kps = some_keypoints(kNumTableKeypoints);
  const auto reference = model.embed_frame(Vec2(0.5, 0.3), kps);
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    std::shuffle(kps.begin(), kps.end(), rng);
    EXPECT_LT((model.embed_frame(Vec2(0.5, 0.3), kps) - reference).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(Embedding, RejectsBadKeypointIndex) {
  const UpliftModel<double> model(small_config());
  EXPECT_THROW(model.embed_frame(Vec2(0.5, 0.3), {{13, Vec2(0.1, 0.1)}}), ContractError);
  EXPECT_THROW(model.embed_frame(Vec2(0.5, 0.3), {{2, Vec2(0.1, 0.1)}, {2, Vec2(0.2, 0.1)}}), ContractError);
}

TEST(Forward, ShapesForShortAndLongSequences) {
  const UpliftModel<float> model(small_config());
  for (std::size_t n : {std::size_t{5}, std::size_t{300}}) {
    const UpliftOutput out = model.forward(synthetic_input(n, 50.0));
    ASSERT_EQ(out.positions.size(), n);
    for (const auto& p : out.positions) EXPECT_TRUE(p.allFinite());
    EXPECT_TRUE(out.spin.allFinite());
  }
}

TEST(Forward, BitwiseDeterministic) {
  const UpliftModel<float> a(small_config(9)), b(small_config(9));
  const UpliftInput in = synthetic_input(20, 50.0);
  const UpliftOutput oa = a.forward(in), ob = b.forward(in);
  for (std::size_t i = 0; i < oa.positions.size(); ++i) EXPECT_EQ(oa.positions[i], ob.positions[i]);
  EXPECT_EQ(oa.spin, ob.spin);
  const UpliftOutput again = a.forward(in);
  EXPECT_EQ(again.spin, oa.spin);
}

TEST(Forward, FiniteAtDifferentFrameRates) {
  const UpliftModel<float> model(small_config());
  for (double fps : {20.0, 60.0}) {
    const UpliftOutput out = model.forward(synthetic_input(40, fps));
    for (const auto& p : out.positions) EXPECT_TRUE(p.allFinite());
    EXPECT_TRUE(out.spin.allFinite());
  }
}

TEST(Forward, InputValidation) {
  const UpliftModel<float> model(small_config());
  EXPECT_THROW(model.forward(synthetic_input(1, 50.0)), ContractError);
  UpliftInput in = synthetic_input(4, 50.0);
  in.times_s[2] = in.times_s[1];
  EXPECT_THROW(model.forward(in), ContractError);
}

TEST(Forward, UsesOnlyValidFrames) {
  ScenarioConfig cfg;
  SynthSample s = generate_sample(cfg, 4, 0);
  s.ball_valid[1] = false;
  std::vector<std::size_t> idx;
  const UpliftInput in = make_input(s, &idx);
  EXPECT_EQ(in.frames(), s.valid_count());
  EXPECT_EQ(idx.front(), 0u);
  EXPECT_EQ(idx[1], 2u);
  // Centroid and RMS radius of the available keypoints, computed directly.
  double cx = 0, cy = 0, n = 0;
  for (const auto& p : s.keypoints.points) {
    if (!p) continue;
    cx += p->x();
    cy += p->y();
    n += 1;
  }
  cx /= n;
  cy /= n;
  double sq = 0;
  for (const auto& p : s.keypoints.points) {
    if (p) sq += (p->x() - cx) * (p->x() - cx) + (p->y() - cy) * (p->y() - cy);
  }
  const double r = std::sqrt(sq / n);
  EXPECT_NEAR(in.ball[0].x(), (s.ball2d_px[0].x() - cx) / r, 1e-12);
  EXPECT_NEAR(in.ball[1].y(), (s.ball2d_px[2].y() - cy) / r, 1e-12);
}

TEST(Forward, InputIgnoresImageShiftAndZoom) {
  ScenarioConfig cfg;
  const SynthSample s = generate_sample(cfg, 4, 1);
  SynthSample moved = s;
  const Vec2 shift(-137.0, 52.5);
  const double zoom = 1.7;
  for (auto& b : moved.ball2d_px) b = zoom * b + shift;
  for (auto& p : moved.keypoints.points) {
    if (p) *p = zoom * *p + shift;
  }
  const UpliftInput a = make_input(s);
  const UpliftInput b = make_input(moved);
  ASSERT_EQ(a.frames(), b.frames());
  for (std::size_t i = 0; i < a.frames(); ++i) EXPECT_LT((a.ball[i] - b.ball[i]).norm(), 1e-12);
  ASSERT_EQ(a.keypoints.size(), b.keypoints.size());
  for (std::size_t k = 0; k < a.keypoints.size(); ++k)
    EXPECT_LT((a.keypoints[k].second - b.keypoints[k].second).norm(), 1e-12);
}

TEST(Forward, InputFallsBackToImageFrameWithoutKeypoints) {
  ScenarioConfig cfg;
  SynthSample s = generate_sample(cfg, 4, 2);
  for (auto& p : s.keypoints.points) p.reset();
  s.keypoints.points[3] = Vec2(100.0, 200.0);
  const UpliftInput in = make_input(s);
  EXPECT_EQ(in.keypoints.size(), 1u);
  EXPECT_NEAR(in.ball[0].x(), (s.ball2d_px[0].x() - 0.5 * s.image_w) / s.image_w, 1e-12);
  EXPECT_NEAR(in.ball[0].y(), (s.ball2d_px[0].y() - 0.5 * s.image_h) / s.image_w, 1e-12);
}

TEST(Loss, HandComputedValues) {
  const std::vector<Vec3> truth{Vec3(0, 0, 0), Vec3(1, 1, 1)};
  const std::vector<Vec3> pred{Vec3(1, 0, 0), Vec3(1, 1, 3)};
  EXPECT_DOUBLE_EQ(uplift_loss(truth, Vec3::Zero(), truth, Vec3::Zero(), {}, 500.0), 0.0);
  // (1 + 4) / 2 + (250 / 500)^2
  EXPECT_DOUBLE_EQ(uplift_loss(pred, Vec3(250, 0, 0), truth, Vec3::Zero(), {}, 500.0), 2.75);
  EXPECT_DOUBLE_EQ(uplift_loss(pred, Vec3(250, 0, 0), truth, Vec3::Zero(), {2.0, 0.0}, 500.0), 5.0);
}

TEST(Loss, MatchesIndependentMse) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> n;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<Vec3> a(7), b(7);
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      for (int c = 0; c < 3; ++c) {
        a[i](c) = n(rng);
        b[i](c) = n(rng);
        sum += (a[i](c) - b[i](c)) * (a[i](c) - b[i](c));
      }
    }
    const Vec3 ws(100 * n(rng), 100 * n(rng), 100 * n(rng));
    const double expected = 0.5 * sum / 7.0 + 3.0 * ws.squaredNorm() / (500.0 * 500.0);
    EXPECT_NEAR(uplift_loss(a, ws, b, Vec3::Zero(), {0.5, 3.0}, 500.0), expected, 1e-12);
  }
  EXPECT_THROW(uplift_loss(std::vector<Vec3>(2), Vec3::Zero(), std::vector<Vec3>(3), Vec3::Zero(), {}, 500.0),
               ContractError);
}

std::vector<Vec3> random_truth(std::size_t n) {
  std::vector<Vec3> t;
  for (std::size_t i = 0; i < n; ++i) t.emplace_back(-1.0 + 0.2 * static_cast<double>(i), 0.1, 1.0);
  return t;
}

TEST(GradCheck, AnalyticMatchesFiniteDifferences) {
  UpliftModel<double> model(small_config(21));
  const UpliftInput in = synthetic_input(8, 50.0);
  const GradCheckResult r = grad_check(model, in, random_truth(8), Vec3(100, -250, 30), 1e-5, 256, 1);
  EXPECT_LT(r.max_relative_error, 1e-4) << "worst: " << r.worst_parameter;
  EXPECT_GE(r.coordinates, 256u);
  EXPECT_GT(r.gradient_norm, 0.0);
}

TEST(GradCheck, ZeroGradientAtZeroLoss) {
  UpliftModel<double> model(small_config(22));
  const UpliftInput in = synthetic_input(8, 50.0);
  const UpliftOutput out = model.forward(in);
  const GradCheckResult r = grad_check(model, in, out.positions, out.spin, 1e-5, 64, 2);
  EXPECT_LT(r.gradient_norm, 1e-8);
}

TEST(GradCheck, CoarseStepIsLessAccurate) {
  UpliftModel<double> fine_model(small_config(23));
  UpliftModel<double> coarse_model(small_config(23));
  const UpliftInput in = synthetic_input(8, 50.0);
  const auto truth = random_truth(8);
  const double fine = grad_check(fine_model, in, truth, Vec3(100, -250, 30), 1e-5, 256, 1).max_relative_error;
  const double coarse = grad_check(coarse_model, in, truth, Vec3(100, -250, 30), 1e-3, 256, 1).max_relative_error;
  EXPECT_GT(coarse, fine);
}

TEST(Checkpoint, RoundTripPreservesOutputs) {
  const UpliftModel<float> model(small_config(31));
  Checkpoint ckpt;
  ckpt.model = model.config();
  append_parameters(model, ckpt.tensors);
  ckpt.meta["note"] = "unit";
  const Checkpoint back = deserialize_checkpoint(serialize_checkpoint(ckpt));
  EXPECT_EQ(back.meta["note"], "unit");
  const UpliftModel<float> restored = model_from_checkpoint<float>(back);
  const UpliftInput in = synthetic_input(12, 50.0);
  const UpliftOutput a = model.forward(in), b = restored.forward(in);
  for (std::size_t i = 0; i < a.positions.size(); ++i) EXPECT_EQ(a.positions[i], b.positions[i]);
  EXPECT_EQ(a.spin, b.spin);
}

TEST(Checkpoint, LayoutStartsWithMagicAndHeader) {
  const UpliftModel<float> model(small_config());
  Checkpoint ckpt;
  ckpt.model = model.config();
  append_parameters(model, ckpt.tensors);
  const std::string bytes = serialize_checkpoint(ckpt);
  ASSERT_GT(bytes.size(), 16u);
  EXPECT_EQ(bytes.substr(0, 8), "TTLIFT01");
  std::uint64_t header_len = 0;
  for (int i = 7; i >= 0; --i) header_len = (header_len << 8) | static_cast<unsigned char>(bytes[8 + static_cast<std::size_t>(i)]);
  const auto header = nlohmann::json::parse(bytes.substr(16, header_len));
  EXPECT_EQ(header["tensors"].size(), ckpt.tensors.size());
  EXPECT_EQ(bytes.size(), 16 + header_len + 8 * model.parameter_count());
}

TEST(Checkpoint, MalformedBytesAreDataErrors) {
  EXPECT_THROW(deserialize_checkpoint("nonsense"), DataError);
  const UpliftModel<float> model(small_config());
  Checkpoint ckpt;
  ckpt.model = model.config();
  append_parameters(model, ckpt.tensors);
  std::string bytes = serialize_checkpoint(ckpt);
  bytes.resize(bytes.size() - 4);
  EXPECT_THROW(deserialize_checkpoint(bytes), DataError);
  bytes = serialize_checkpoint(ckpt);
  bytes[0] = 'X';
  EXPECT_THROW(deserialize_checkpoint(bytes), DataError);
}

TEST(Checkpoint, MissingTensorIsDataError) {
  const UpliftModel<float> model(small_config());
  Checkpoint ckpt;
  ckpt.model = model.config();
  append_parameters(model, ckpt.tensors);
  ckpt.tensors.pop_back();
  EXPECT_THROW(model_from_checkpoint<float>(ckpt), DataError);
}

TEST(Model, ParameterCountMatchesTensors) {
  const UpliftModel<float> model(small_config());
  std::size_t total = 0, tensors = 0;
  model.visit([&](const std::string&, const Param<float>& p) {
    total += static_cast<std::size_t>(p.value.size());
    ++tensors;
  });
  EXPECT_EQ(total, model.parameter_count());
  EXPECT_GT(tensors, 10u);
}

TEST(Model, InvalidConfigsAreRejected) {
  ModelConfig cfg = small_config();
  cfg.d = 18;
  EXPECT_THROW(UpliftModel<float>{cfg}, ConfigError);
  cfg = small_config();
  cfg.spin_blocks = cfg.layers;
  EXPECT_THROW(UpliftModel<float>{cfg}, ConfigError);
}

}  // namespace
