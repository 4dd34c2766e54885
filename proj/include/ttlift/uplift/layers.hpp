#pragma once

#include <cmath>
#if defined(__SSE__)
#include <xmmintrin.h>
#endif
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "ttlift/uplift/rope.hpp"

namespace ttlift::uplift {

// Activations are stored feature-major: one token per column.
template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;

template <typename S>
struct Param {
  Mat<S> value;
  Mat<S> grad;

  void resize(Eigen::Index rows, Eigen::Index cols) {
    value = Mat<S>::Zero(rows, cols);
    grad = Mat<S>::Zero(rows, cols);
  }
  void zero_grad() { grad.setZero(); }
};

/// Flushes float denormals to zero for the current thread while alive.
/// Small early-training activations and Adam moments otherwise hit the slow
/// denormal path (about 2x on a whole epoch).
class DenormalsAreZero {
public:
  DenormalsAreZero() {
#if defined(__SSE__)
    saved_ = _mm_getcsr();
    _mm_setcsr(saved_ | 0x8040u);  // FTZ | DAZ
#endif
  }
  ~DenormalsAreZero() {
#if defined(__SSE__)
    _mm_setcsr(saved_);
#endif
  }
  DenormalsAreZero(const DenormalsAreZero&) = delete;
  DenormalsAreZero& operator=(const DenormalsAreZero&) = delete;

private:
  unsigned saved_ = 0;
};

/// Truncated normal (|z| <= 2) with standard deviation `std`.
template <typename S>
void init_truncated_normal(Mat<S>& m, double std, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      double z = normal(rng);
      while (std::abs(z) > 2.0) z = normal(rng);
      m(i, j) = static_cast<S>(std * z);
    }
  }
}

/// Learned token vectors (identities, spin token). Linear weights use
/// 1/sqrt(fan_in) instead: a flat 0.02 at d=64 and fan-in 2 shrinks the
/// input-to-output gain to ~1e-4 and zero-mean targets never leave the plateau.
inline constexpr double kInitStd = 0.02;

template <typename S>
struct Linear {
  Param<S> weight;  // out x in
  Param<S> bias;    // out x 1

  Linear() = default;
  Linear(int in, int out, std::mt19937_64& rng) {
    weight.resize(out, in);
    bias.resize(out, 1);
    init_truncated_normal(weight.value, 1.0 / std::sqrt(static_cast<double>(in)), rng);
  }

  Mat<S> forward(const Mat<S>& x) const {
    Mat<S> y(weight.value.rows(), x.cols());
    y.noalias() = weight.value * x;
    y.colwise() += bias.value.col(0);
    return y;
  }

  Mat<S> backward(const Mat<S>& x, const Mat<S>& dy) {
    weight.grad.noalias() += dy * x.transpose();
    bias.grad.col(0) += dy.rowwise().sum();
    Mat<S> dx(weight.value.cols(), dy.cols());
    dx.noalias() = weight.value.transpose() * dy;
    return dx;
  }

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    f(prefix + ".weight", weight);
    f(prefix + ".bias", bias);
  }
};

template <typename S>
struct LayerNorm {
  static constexpr double kEps = 1e-5;
  Param<S> gamma;  // d x 1
  Param<S> beta;

  struct Cache {
    Mat<S> xhat;
    Eigen::Matrix<S, 1, Eigen::Dynamic> rstd;
  };

  LayerNorm() = default;
  explicit LayerNorm(int d) {
    gamma.resize(d, 1);
    beta.resize(d, 1);
    gamma.value.setOnes();
  }

  Mat<S> forward(const Mat<S>& x, Cache* cache) const {
    const auto d = static_cast<S>(x.rows());
    const Eigen::Matrix<S, 1, Eigen::Dynamic> mean = x.colwise().sum() / d;
    Mat<S> xc = x.rowwise() - mean;
    const Eigen::Matrix<S, 1, Eigen::Dynamic> var = xc.array().square().colwise().sum() / d;
    const Eigen::Matrix<S, 1, Eigen::Dynamic> rstd =
        (var.array() + static_cast<S>(kEps)).rsqrt().matrix();
    xc.array().rowwise() *= rstd.array();
    Mat<S> y = (xc.array().colwise() * gamma.value.col(0).array()).matrix();
    y.colwise() += beta.value.col(0);
    if (cache) {
      cache->xhat = std::move(xc);
      cache->rstd = rstd;
    }
    return y;
  }

  Mat<S> backward(const Mat<S>& dy, const Cache& cache) {
    const auto d = static_cast<S>(dy.rows());
    gamma.grad.col(0) += (dy.array() * cache.xhat.array()).rowwise().sum().matrix();
    beta.grad.col(0) += dy.rowwise().sum();
    Mat<S> dxhat = (dy.array().colwise() * gamma.value.col(0).array()).matrix();
    const Eigen::Matrix<S, 1, Eigen::Dynamic> mean_d = dxhat.colwise().sum() / d;
    const Eigen::Matrix<S, 1, Eigen::Dynamic> mean_dx =
        (dxhat.array() * cache.xhat.array()).colwise().sum().matrix() / d;
    Mat<S> dx = dxhat.rowwise() - mean_d;
    dx.array() -= cache.xhat.array().rowwise() * mean_dx.array();
    dx.array().rowwise() *= cache.rstd.array();
    return dx;
  }

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    f(prefix + ".gamma", gamma);
    f(prefix + ".beta", beta);
  }
};

/// Tanh-approximated GELU.
template <typename S>
Mat<S> gelu(const Mat<S>& x) {
  const S k0 = static_cast<S>(0.7978845608028654);  // sqrt(2 / pi)
  const S k1 = static_cast<S>(0.044715);
  const auto a = x.array();
  return (S(0.5) * a * (S(1) + (k0 * (a + k1 * a.cube())).tanh())).matrix();
}

template <typename S>
Mat<S> gelu_backward(const Mat<S>& x, const Mat<S>& dy) {
  const S k0 = static_cast<S>(0.7978845608028654);
  const S k1 = static_cast<S>(0.044715);
  const auto a = x.array();
  const auto t = (k0 * (a + k1 * a.cube())).tanh().eval();
  const auto grad = S(0.5) * (S(1) + t) + S(0.5) * a * (S(1) - t.square()) * k0 * (S(1) + S(3) * k1 * a.square());
  return (dy.array() * grad).matrix();
}

/// How tokens are grouped for attention: tokens attend only within their
/// group (contiguous column ranges). An optional rope table rotates queries
/// and keys per token.
template <typename S>
struct TokenLayout {
  struct Group {
    Eigen::Index start;
    Eigen::Index size;
  };
  std::vector<Group> groups;
  const RopeTable<S>* rope = nullptr;

  static TokenLayout uniform(Eigen::Index n_groups, Eigen::Index group_size) {
    TokenLayout l;
    l.groups.reserve(static_cast<std::size_t>(n_groups));
    for (Eigen::Index g = 0; g < n_groups; ++g) l.groups.push_back({g * group_size, group_size});
    return l;
  }
};

template <typename S>
struct SelfAttention {
  Linear<S> qkv;   // d -> 3d, rows [q; k; v]
  Linear<S> proj;  // d -> d
  int heads = 1;

  struct Cache {
    Mat<S> input;
    Mat<S> q, k, v;        // after rotation (q, k)
    std::vector<Mat<S>> probs;  // per (group, head): keys x queries
    Mat<S> mixed;          // d x T, input of proj
  };

  SelfAttention() = default;
  SelfAttention(int d, int n_heads, std::mt19937_64& rng)
      : qkv(d, 3 * d, rng), proj(d, d, rng), heads(n_heads) {}

  Mat<S> forward(const Mat<S>& x, const TokenLayout<S>& layout, Cache* cache) const {
    const Eigen::Index d = x.rows();
    const Eigen::Index hd = d / heads;
    const S scale = static_cast<S>(1.0 / std::sqrt(static_cast<double>(hd)));
    Mat<S> qkv_out = qkv.forward(x);
    Mat<S> q = qkv_out.topRows(d);
    Mat<S> k = qkv_out.middleRows(d, d);
    Mat<S> v = qkv_out.bottomRows(d);
    if (layout.rope) {
      layout.rope->apply(q, heads);
      layout.rope->apply(k, heads);
    }

    Mat<S> mixed(d, x.cols());
    if (cache) cache->probs.clear();
    for (const auto& g : layout.groups) {
      for (int h = 0; h < heads; ++h) {
        const auto qh = q.block(h * hd, g.start, hd, g.size);
        const auto kh = k.block(h * hd, g.start, hd, g.size);
        const auto vh = v.block(h * hd, g.start, hd, g.size);
        Mat<S> scores(g.size, g.size);
        scores.noalias() = kh.transpose() * qh;
        scores *= scale;
        for (Eigen::Index c = 0; c < scores.cols(); ++c) {
          auto col = scores.col(c);
          col.array() = (col.array() - col.maxCoeff()).exp();
          col /= col.sum();
        }
        mixed.block(h * hd, g.start, hd, g.size).noalias() = vh * scores;
        if (cache) cache->probs.push_back(std::move(scores));
      }
    }
    Mat<S> y = proj.forward(mixed);
    if (cache) {
      cache->input = x;
      cache->q = std::move(q);
      cache->k = std::move(k);
      cache->v = std::move(v);
      cache->mixed = std::move(mixed);
    }
    return y;
  }

  Mat<S> backward(const Mat<S>& dy, const TokenLayout<S>& layout, Cache& cache) {
    const Eigen::Index d = dy.rows();
    const Eigen::Index hd = d / heads;
    const S scale = static_cast<S>(1.0 / std::sqrt(static_cast<double>(hd)));
    const Mat<S> dmixed = proj.backward(cache.mixed, dy);

    Mat<S> dqkv = Mat<S>::Zero(3 * d, dy.cols());
    auto dq = dqkv.topRows(d);
    auto dk = dqkv.middleRows(d, d);
    auto dv = dqkv.bottomRows(d);
    std::size_t idx = 0;
    for (const auto& g : layout.groups) {
      for (int h = 0; h < heads; ++h) {
        const Mat<S>& A = cache.probs[idx++];
        const auto qh = cache.q.block(h * hd, g.start, hd, g.size);
        const auto kh = cache.k.block(h * hd, g.start, hd, g.size);
        const auto vh = cache.v.block(h * hd, g.start, hd, g.size);
        const auto dout = dmixed.block(h * hd, g.start, hd, g.size);
        dv.block(h * hd, g.start, hd, g.size).noalias() = dout * A.transpose();
        Mat<S> dA(g.size, g.size);
        dA.noalias() = vh.transpose() * dout;
        const Eigen::Matrix<S, 1, Eigen::Dynamic> inner = (A.array() * dA.array()).colwise().sum();
        Mat<S> dS = (A.array() * (dA.array().rowwise() - inner.array())).matrix();
        dS *= scale;
        dq.block(h * hd, g.start, hd, g.size).noalias() = kh * dS;
        dk.block(h * hd, g.start, hd, g.size).noalias() = qh * dS.transpose();
      }
    }
    if (layout.rope) {
      layout.rope->apply(dq, heads, /*inverse=*/true);
      layout.rope->apply(dk, heads, /*inverse=*/true);
    }
    return qkv.backward(cache.input, dqkv);
  }

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    qkv.visit(prefix + ".qkv", f);
    proj.visit(prefix + ".proj", f);
  }
};

/// Pre-norm transformer block: x + Attn(LN(x)), then h + MLP(LN(h)).
template <typename S>
struct TransformerBlock {
  LayerNorm<S> ln1;
  SelfAttention<S> attn;
  LayerNorm<S> ln2;
  Linear<S> fc1;
  Linear<S> fc2;

  struct Cache {
    typename LayerNorm<S>::Cache ln1;
    typename SelfAttention<S>::Cache attn;
    typename LayerNorm<S>::Cache ln2;
    Mat<S> mlp_in;
    Mat<S> pre_act;
    Mat<S> act;
  };

  TransformerBlock() = default;
  TransformerBlock(int d, int heads, int mlp_ratio, std::mt19937_64& rng)
      : ln1(d), attn(d, heads, rng), ln2(d), fc1(d, mlp_ratio * d, rng), fc2(mlp_ratio * d, d, rng) {}

  Mat<S> forward(const Mat<S>& x, const TokenLayout<S>& layout, Cache* cache) const {
    Mat<S> h = x + attn.forward(ln1.forward(x, cache ? &cache->ln1 : nullptr), layout,
                                cache ? &cache->attn : nullptr);
    Mat<S> mlp_in = ln2.forward(h, cache ? &cache->ln2 : nullptr);
    Mat<S> pre = fc1.forward(mlp_in);
    Mat<S> act = gelu(pre);
    h += fc2.forward(act);
    if (cache) {
      cache->mlp_in = std::move(mlp_in);
      cache->pre_act = std::move(pre);
      cache->act = std::move(act);
    }
    return h;
  }

  Mat<S> backward(const Mat<S>& dy, const TokenLayout<S>& layout, Cache& cache) {
    const Mat<S> dact = fc2.backward(cache.act, dy);
    const Mat<S> dpre = gelu_backward(cache.pre_act, dact);
    Mat<S> dh = dy + ln2.backward(fc1.backward(cache.mlp_in, dpre), cache.ln2);
    const Mat<S> dattn_in = attn.backward(dh, layout, cache.attn);
    dh += ln1.backward(dattn_in, cache.ln1);
    return dh;
  }

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    ln1.visit(prefix + ".ln1", f);
    attn.visit(prefix + ".attn", f);
    ln2.visit(prefix + ".ln2", f);
    fc1.visit(prefix + ".fc1", f);
    fc2.visit(prefix + ".fc2", f);
  }
};

/// LayerNorm followed by three fully connected layers with GELU in between.
template <typename S>
struct OutputHead {
  LayerNorm<S> norm;
  Linear<S> fc1, fc2, fc3;

  struct Cache {
    typename LayerNorm<S>::Cache norm;
    Mat<S> in1, pre1, in2, pre2, in3;
  };

  OutputHead() = default;
  OutputHead(int d, int out, std::mt19937_64& rng)
      : norm(d), fc1(d, d, rng), fc2(d, d, rng), fc3(d, out, rng) {}

  Mat<S> forward(const Mat<S>& x, Cache* cache) const {
    Mat<S> in1 = norm.forward(x, cache ? &cache->norm : nullptr);
    Mat<S> pre1 = fc1.forward(in1);
    Mat<S> in2 = gelu(pre1);
    Mat<S> pre2 = fc2.forward(in2);
    Mat<S> in3 = gelu(pre2);
    Mat<S> y = fc3.forward(in3);
    if (cache) {
      cache->in1 = std::move(in1);
      cache->pre1 = std::move(pre1);
      cache->in2 = std::move(in2);
      cache->pre2 = std::move(pre2);
      cache->in3 = std::move(in3);
    }
    return y;
  }

  Mat<S> backward(const Mat<S>& dy, Cache& cache) {
    Mat<S> g = fc3.backward(cache.in3, dy);
    g = gelu_backward(cache.pre2, g);
    g = fc2.backward(cache.in2, g);
    g = gelu_backward(cache.pre1, g);
    g = fc1.backward(cache.in1, g);
    return norm.backward(g, cache.norm);
  }

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    norm.visit(prefix + ".norm", f);
    fc1.visit(prefix + ".fc1", f);
    fc2.visit(prefix + ".fc2", f);
    fc3.visit(prefix + ".fc3", f);
  }
};

}  // namespace ttlift::uplift
