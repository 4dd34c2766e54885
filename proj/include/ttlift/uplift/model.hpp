#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "ttlift/camera.hpp"
#include "ttlift/sample.hpp"
#include "ttlift/uplift/config.hpp"
#include "ttlift/uplift/layers.hpp"
#include "ttlift/uplift/rope.hpp"

namespace ttlift::uplift {

/// Network input for one trajectory: only frames with a valid ball detection,
/// coordinates already normalized (see InputFrame).
struct UpliftInput {
  std::vector<double> times_s;
  std::vector<Vec2> ball;
  std::vector<std::pair<int, Vec2>> keypoints;  // (keypoint index, position)

  std::size_t frames() const { return times_s.size(); }
};

/// Builds the network input from the valid frames and available keypoints of
/// a sample. Returns the indices of the used frames through `frame_index`.
UpliftInput make_input(const SynthSample& sample, std::vector<std::size_t>* frame_index = nullptr);

/// Table-relative image coordinates: pixels minus the centroid of the
/// available keypoints, divided by their RMS distance to it (one scale for
/// both axes). This removes where the table sits in the image and how large
/// it appears, which the network otherwise has to learn to subtract. With
/// fewer than two keypoints the image center and image width are used.
struct InputFrame {
  Vec2 origin = Vec2::Zero();
  double scale = 1.0;

  Vec2 apply(const Vec2& px) const { return (px - origin) / scale; }
};

InputFrame input_frame(const SynthSample& sample);

struct UpliftOutput {
  std::vector<Vec3> positions;  // one per input frame, m
  Vec3 spin = Vec3::Zero();     // omega(t_0), rad/s
};

struct LossWeights {
  double trajectory = 1.0;
  double spin = 1.0;
};

/// lambda_traj * mean_n |r_pred - r_true|^2 + lambda_spin * |(w_pred - w_true) / spin_scale|^2.
double uplift_loss(std::span<const Vec3> pred_positions, const Vec3& pred_spin,
                   std::span<const Vec3> true_positions, const Vec3& true_spin,
                   const LossWeights& weights, double spin_scale);

/// The uplifting transformer: per-frame embedding module (ball + keypoint
/// tokens through embed_blocks blocks), a learnable spin token prepended to
/// the location tokens, a time-RoPE trajectory stage with a position head and
/// a spin stage with a spin head.
template <typename S>
class UpliftModel {
public:
  using Matrix = Mat<S>;

  UpliftModel() = default;

  explicit UpliftModel(const ModelConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    std::mt19937_64 rng(derive_seed(cfg.init_seed, 0x7570u));
    const int d = cfg.d;
    input_fc1_ = Linear<S>(2, d, rng);
    input_fc2_ = Linear<S>(d, d, rng);
    identity_.resize(d, static_cast<Eigen::Index>(kNumTableKeypoints + 1));
    init_truncated_normal(identity_.value, kInitStd, rng);
    for (int i = 0; i < cfg.embed_blocks; ++i) embed_.emplace_back(d, cfg.heads, cfg.mlp_ratio, rng);
    spin_token_.resize(d, 1);
    init_truncated_normal(spin_token_.value, kInitStd, rng);
    for (int i = 0; i < cfg.trajectory_blocks(); ++i)
      trajectory_.emplace_back(d, cfg.heads, cfg.mlp_ratio, rng);
    for (int i = 0; i < cfg.spin_blocks; ++i) spin_.emplace_back(d, cfg.heads, cfg.mlp_ratio, rng);
    position_head_ = OutputHead<S>(d, 3, rng);
    spin_head_ = OutputHead<S>(d, 3, rng);
  }

  const ModelConfig& config() const { return cfg_; }

  RopeConfig rope_config() const { return {cfg_.delta_t, cfg_.rope_base}; }

  /// Visits every parameter in a fixed order with its stable name.
  template <typename F>
  void visit(F&& f) {
    input_fc1_.visit("embed.input.fc1", f);
    input_fc2_.visit("embed.input.fc2", f);
    f("embed.identity", identity_);
    for (std::size_t i = 0; i < embed_.size(); ++i) embed_[i].visit("embed.block" + std::to_string(i), f);
    f("spin_token", spin_token_);
    for (std::size_t i = 0; i < trajectory_.size(); ++i)
      trajectory_[i].visit("trajectory.block" + std::to_string(i), f);
    for (std::size_t i = 0; i < spin_.size(); ++i) spin_[i].visit("spin.block" + std::to_string(i), f);
    position_head_.visit("trajectory.head", f);
    spin_head_.visit("spin.head", f);
  }

  template <typename F>
  void visit(F&& f) const {
    const_cast<UpliftModel*>(this)->visit([&](const std::string& name, Param<S>& p) {
      f(name, static_cast<const Param<S>&>(p));
    });
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    visit([&](const std::string&, const Param<S>& p) { n += static_cast<std::size_t>(p.value.size()); });
    return n;
  }

  void zero_grad() {
    visit([](const std::string&, Param<S>& p) { p.zero_grad(); });
  }

  /// Intermediate state kept for the backward pass.
  struct Trace {
    std::size_t frames = 0;
    Eigen::Index group = 0;
    std::vector<int> token_identity;
    Matrix raw_input;
    Matrix input_pre;
    Matrix input_act;
    TokenLayout<S> embed_layout;
    std::vector<typename TransformerBlock<S>::Cache> embed_cache;
    RopeTable<S> rope;
    TokenLayout<S> main_layout;
    std::vector<typename TransformerBlock<S>::Cache> trajectory_cache;
    std::vector<typename TransformerBlock<S>::Cache> spin_cache;
    typename OutputHead<S>::Cache position_head;
    typename OutputHead<S>::Cache spin_head;
    Matrix positions;  // 3 x N
    Matrix spin_norm;  // 3 x 1, spin / spin_scale
  };

  /// Forward pass. With a trace, keeps everything needed by backward().
  UpliftOutput forward(const UpliftInput& in, Trace* trace = nullptr) const {
    const DenormalsAreZero ftz;
    const std::size_t n = in.frames();
    if (n < 2) throw ContractError("uplift forward: need at least 2 valid frames");
    if (in.ball.size() != n) throw ContractError("uplift forward: ball/time length mismatch");
    for (std::size_t i = 1; i < n; ++i)
      if (!(in.times_s[i] > in.times_s[i - 1]))
        throw ContractError("uplift forward: timestamps must be strictly increasing");

    Trace local;
    Trace& t = trace ? *trace : local;
    const bool keep = trace != nullptr;
    const int d = cfg_.d;
    const Matrix x = embed(in, t, keep);

    // Uplifting network over [spin token, l_0, ..., l_{N-1}].
    const auto seq = static_cast<Eigen::Index>(n + 1);
    Matrix h(d, seq);
    h.col(0) = spin_token_.value.col(0);
    h.rightCols(seq - 1) = x;

    std::vector<std::int64_t> positions(static_cast<std::size_t>(seq), 0);
    const RopeConfig rc = rope_config();
    for (std::size_t f = 0; f < n; ++f) positions[f + 1] = rc.position(in.times_s[f]);
    t.rope = RopeTable<S>::build(positions, cfg_.head_dim(), rc);
    t.main_layout = TokenLayout<S>::uniform(1, seq);
    t.main_layout.rope = &t.rope;

    if (keep) t.trajectory_cache.resize(trajectory_.size());
    for (std::size_t b = 0; b < trajectory_.size(); ++b)
      h = trajectory_[b].forward(h, t.main_layout, keep ? &t.trajectory_cache[b] : nullptr);
    t.positions = position_head_.forward(h.rightCols(seq - 1), keep ? &t.position_head : nullptr);

    if (keep) t.spin_cache.resize(spin_.size());
    for (std::size_t b = 0; b < spin_.size(); ++b)
      h = spin_[b].forward(h, t.main_layout, keep ? &t.spin_cache[b] : nullptr);
    t.spin_norm = spin_head_.forward(h.leftCols(1), keep ? &t.spin_head : nullptr);

    UpliftOutput out;
    out.positions.resize(n);
    for (std::size_t f = 0; f < n; ++f)
      out.positions[f] = t.positions.col(static_cast<Eigen::Index>(f)).template cast<double>();
    out.spin = cfg_.spin_scale * t.spin_norm.col(0).template cast<double>();
    return out;
  }


  /// Location token of a single frame: the ball token after the embedding
  /// module, with the given keypoints (index, normalized position) as context.
  Eigen::Matrix<S, Eigen::Dynamic, 1> embed_frame(const Vec2& ball,
                                                  const std::vector<std::pair<int, Vec2>>& keypoints) const {
    UpliftInput in;
    in.times_s = {0.0};
    in.ball = {ball};
    in.keypoints = keypoints;
    Trace t;
    return embed(in, t, false).col(0);
  }

  /// Accumulates parameter gradients given dL/d(positions) (3 x N) and
  /// dL/d(spin_norm) (3 x 1). The trace must come from forward() with the
  /// same parameters.
  void backward(const Trace& trace, const Matrix& d_positions, const Matrix& d_spin_norm) {
    // Layouts point at the trace's rope table; copy the trace-local layout.
    Trace& t = const_cast<Trace&>(trace);
    t.main_layout.rope = &t.rope;
    const auto n = static_cast<Eigen::Index>(t.frames);
    const Eigen::Index seq = n + 1;

    Matrix dh = Matrix::Zero(cfg_.d, seq);
    dh.col(0) = spin_head_.backward(d_spin_norm, t.spin_head);
    for (std::size_t b = spin_.size(); b-- > 0;) dh = spin_[b].backward(dh, t.main_layout, t.spin_cache[b]);
    dh.rightCols(seq - 1) += position_head_.backward(d_positions, t.position_head);
    for (std::size_t b = trajectory_.size(); b-- > 0;)
      dh = trajectory_[b].backward(dh, t.main_layout, t.trajectory_cache[b]);

    spin_token_.grad.col(0) += dh.col(0);
    Matrix dx = Matrix::Zero(cfg_.d, n * t.group);
    for (Eigen::Index f = 0; f < n; ++f) dx.col(f * t.group) = dh.col(f + 1);
    for (std::size_t b = embed_.size(); b-- > 0;) dx = embed_[b].backward(dx, t.embed_layout, t.embed_cache[b]);

    for (Eigen::Index j = 0; j < dx.cols(); ++j)
      identity_.grad.col(t.token_identity[static_cast<std::size_t>(j)]) += dx.col(j);
    const Matrix dact = input_fc2_.backward(t.input_act, dx);
    input_fc1_.backward(t.raw_input, gelu_backward(t.input_pre, dact));
  }

  /// Forward + loss + backward for one sample; returns the loss. Gradients
  /// are accumulated (scaled by `grad_scale`).
  double accumulate_gradients(const UpliftInput& in, std::span<const Vec3> true_positions,
                              const Vec3& true_spin, const LossWeights& weights,
                              double grad_scale = 1.0) {
    Trace trace;
    const UpliftOutput out = forward(in, &trace);
    if (true_positions.size() != out.positions.size())
      throw ContractError("uplift loss: truth length mismatch");
    const auto n = static_cast<Eigen::Index>(out.positions.size());
    Matrix dpos(3, n);
    for (Eigen::Index f = 0; f < n; ++f)
      dpos.col(f) = (2.0 * weights.trajectory * grad_scale / static_cast<double>(n) *
                     (out.positions[static_cast<std::size_t>(f)] - true_positions[static_cast<std::size_t>(f)]))
                        .template cast<S>();
    Matrix dspin(3, 1);
    // spin = spin_scale * spin_norm, so dL/dspin_norm = spin_scale * dL/dspin.
    dspin.col(0) = (2.0 * weights.spin * grad_scale / cfg_.spin_scale * (out.spin - true_spin)).template cast<S>();
    backward(trace, dpos, dspin);
    return uplift_loss(out.positions, out.spin, true_positions, true_spin, weights, cfg_.spin_scale);
  }

  /// Copy with a different scalar type (parameters only).
  template <typename T>
  UpliftModel<T> cast() const {
    UpliftModel<T> out(cfg_);
    std::vector<const Param<S>*> src;
    visit([&](const std::string&, const Param<S>& p) { src.push_back(&p); });
    std::size_t i = 0;
    out.visit([&](const std::string&, Param<T>& p) { p.value = src[i++]->value.template cast<T>(); });
    return out;
  }

private:
  /// Per-frame embedding module; returns the d x N location tokens.
  Matrix embed(const UpliftInput& in, Trace& t, bool keep) const {
    const std::size_t n = in.frames();
    std::array<bool, kNumTableKeypoints> seen{};
    for (const auto& [k, p] : in.keypoints) {
      if (k < 0 || k >= static_cast<int>(kNumTableKeypoints))
        throw ContractError("uplift: keypoint index out of range");
      if (seen[static_cast<std::size_t>(k)]) throw ContractError("uplift: duplicate keypoint index");
      seen[static_cast<std::size_t>(k)] = true;
    }
    const auto group = static_cast<Eigen::Index>(1 + in.keypoints.size());
    const auto tokens = static_cast<Eigen::Index>(n) * group;
    t.frames = n;
    t.group = group;

    // Per frame: the ball token followed by the keypoints.
    t.raw_input.resize(2, tokens);
    t.token_identity.resize(static_cast<std::size_t>(tokens));
    for (std::size_t f = 0; f < n; ++f) {
      const auto base = static_cast<Eigen::Index>(f) * group;
      t.raw_input.col(base) = in.ball[f].cast<S>();
      t.token_identity[static_cast<std::size_t>(base)] = 0;
      for (std::size_t k = 0; k < in.keypoints.size(); ++k) {
        const auto col = base + 1 + static_cast<Eigen::Index>(k);
        t.raw_input.col(col) = in.keypoints[k].second.template cast<S>();
        t.token_identity[static_cast<std::size_t>(col)] = 1 + in.keypoints[k].first;
      }
    }
    t.input_pre = input_fc1_.forward(t.raw_input);
    t.input_act = gelu(t.input_pre);
    Matrix x = input_fc2_.forward(t.input_act);
    for (Eigen::Index j = 0; j < tokens; ++j)
      x.col(j) += identity_.value.col(t.token_identity[static_cast<std::size_t>(j)]);

    t.embed_layout = TokenLayout<S>::uniform(static_cast<Eigen::Index>(n), group);
    if (keep) t.embed_cache.resize(embed_.size());
    for (std::size_t b = 0; b < embed_.size(); ++b)
      x = embed_[b].forward(x, t.embed_layout, keep ? &t.embed_cache[b] : nullptr);

    Matrix out(cfg_.d, static_cast<Eigen::Index>(n));
    for (std::size_t f = 0; f < n; ++f) out.col(static_cast<Eigen::Index>(f)) = x.col(static_cast<Eigen::Index>(f) * group);
    return out;
  }

  ModelConfig cfg_;
  Linear<S> input_fc1_;
  Linear<S> input_fc2_;
  Param<S> identity_;  // d x 14: column 0 = ball, 1 + k = keypoint k
  std::vector<TransformerBlock<S>> embed_;
  Param<S> spin_token_;
  std::vector<TransformerBlock<S>> trajectory_;
  std::vector<TransformerBlock<S>> spin_;
  OutputHead<S> position_head_;
  OutputHead<S> spin_head_;
};

}  // namespace ttlift::uplift
