#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "obsmae/model/params.hpp"

namespace obsmae::model {

// Each layer owns parameter ids only. forward() optionally records what backward() needs;
// backward() accumulates parameter gradients into `g` and returns the input gradient.

template <class S>
struct Linear {
  ParamId w = 0, b = 0;

  static Linear create(ParamSet<S>& p, const std::string& name, std::size_t in, std::size_t out) {
    return {p.add(name + ".w", in, out), p.add(name + ".b", 1, out)};
  }

  void init(ParamSet<S>& p, core::Rng& rng) const {
    init_xavier(p[w], rng);
    p[b].setZero();
  }

  struct Cache {
    Mat<S> x;
  };

  Mat<S> forward(const ParamSet<S>& p, const Mat<S>& x, Cache* c) const {
    if (c) c->x = x;
    Mat<S> y = x * p[w];
    y.rowwise() += p[b].row(0);
    return y;
  }

  Mat<S> backward(const ParamSet<S>& p, ParamSet<S>& g, const Cache& c, const Mat<S>& dy) const {
    g[w].noalias() += c.x.transpose() * dy;
    g[b] += dy.colwise().sum();
    return dy * p[w].transpose();
  }
};

template <class S>
struct LayerNorm {
  ParamId gain = 0, bias = 0;
  static constexpr double kEps = 1e-5;

  static LayerNorm create(ParamSet<S>& p, const std::string& name, std::size_t dim) {
    LayerNorm ln{p.add(name + ".g", 1, dim), p.add(name + ".b", 1, dim)};
    return ln;
  }
  void init(ParamSet<S>& p) const {
    p[gain].setOnes();
    p[bias].setZero();
  }

  struct Cache {
    Mat<S> xhat;
    Eigen::Matrix<S, Eigen::Dynamic, 1> rstd;
  };

  Mat<S> forward(const ParamSet<S>& p, const Mat<S>& x, Cache* c) const {
    const auto n = x.rows(), d = x.cols();
    Mat<S> xhat(n, d);
    Eigen::Matrix<S, Eigen::Dynamic, 1> rstd(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const S mean = x.row(i).mean();
      const S var = (x.row(i).array() - mean).square().mean();
      rstd(i) = S(1) / std::sqrt(var + S(kEps));
      xhat.row(i) = (x.row(i).array() - mean) * rstd(i);
    }
    Mat<S> y = xhat.array().rowwise() * p[gain].row(0).array();
    y.rowwise() += p[bias].row(0);
    if (c) {
      c->xhat = std::move(xhat);
      c->rstd = std::move(rstd);
    }
    return y;
  }

  Mat<S> backward(const ParamSet<S>& p, ParamSet<S>& g, const Cache& c, const Mat<S>& dy) const {
    g[gain] += (dy.array() * c.xhat.array()).colwise().sum().matrix();
    g[bias] += dy.colwise().sum();
    const Mat<S> dxhat = dy.array().rowwise() * p[gain].row(0).array();
    const auto d = static_cast<S>(dy.cols());
    Mat<S> dx(dy.rows(), dy.cols());
    for (Eigen::Index i = 0; i < dy.rows(); ++i) {
      const S s1 = dxhat.row(i).sum();
      const S s2 = dxhat.row(i).dot(c.xhat.row(i));
      dx.row(i) = (c.rstd(i) / d) * (d * dxhat.row(i).array() - s1 - c.xhat.row(i).array() * s2);
    }
    return dx;
  }
};

/// tanh approximation of GELU.
template <class S>
struct Gelu {
  static constexpr double kC = 0.7978845608028654;  // sqrt(2/pi)
  static constexpr double kA = 0.044715;

  struct Cache {
    Mat<S> x;
  };

  static Mat<S> forward(const Mat<S>& x, Cache* c) {
    if (c) c->x = x;
    return x.unaryExpr([](S v) {
      return S(0.5) * v * (S(1) + std::tanh(S(kC) * (v + S(kA) * v * v * v)));
    });
  }

  static Mat<S> backward(const Cache& c, const Mat<S>& dy) {
    const Mat<S> d = c.x.unaryExpr([](S v) {
      const S t = std::tanh(S(kC) * (v + S(kA) * v * v * v));
      return S(0.5) * (S(1) + t) + S(0.5) * v * (S(1) - t * t) * S(kC) * (S(1) + S(3 * kA) * v * v);
    });
    return dy.cwiseProduct(d);
  }
};

template <class S>
struct Mlp {
  Linear<S> fc1, fc2;

  static Mlp create(ParamSet<S>& p, const std::string& name, std::size_t dim, std::size_t hidden) {
    return {Linear<S>::create(p, name + ".fc1", dim, hidden), Linear<S>::create(p, name + ".fc2", hidden, dim)};
  }
  void init(ParamSet<S>& p, core::Rng& rng) const {
    fc1.init(p, rng);
    fc2.init(p, rng);
  }

  struct Cache {
    typename Linear<S>::Cache fc1, fc2;
    typename Gelu<S>::Cache act;
  };

  Mat<S> forward(const ParamSet<S>& p, const Mat<S>& x, Cache* c) const {
    return fc2.forward(p, Gelu<S>::forward(fc1.forward(p, x, c ? &c->fc1 : nullptr), c ? &c->act : nullptr),
                       c ? &c->fc2 : nullptr);
  }

  Mat<S> backward(const ParamSet<S>& p, ParamSet<S>& g, const Cache& c, const Mat<S>& dy) const {
    return fc1.backward(p, g, c.fc1, Gelu<S>::backward(c.act, fc2.backward(p, g, c.fc2, dy)));
  }
};

/// Multi-head scaled dot-product attention from query rows to key/value rows. No masking:
/// tokens that should be ignored are simply absent from the sequence.
template <class S>
struct Attention {
  Linear<S> q, k, v, o;
  std::size_t heads = 1;

  static Attention create(ParamSet<S>& p, const std::string& name, std::size_t dim, std::size_t heads) {
    Attention a;
    a.q = Linear<S>::create(p, name + ".q", dim, dim);
    a.k = Linear<S>::create(p, name + ".k", dim, dim);
    a.v = Linear<S>::create(p, name + ".v", dim, dim);
    a.o = Linear<S>::create(p, name + ".o", dim, dim);
    a.heads = heads;
    return a;
  }
  void init(ParamSet<S>& p, core::Rng& rng) const {
    q.init(p, rng);
    k.init(p, rng);
    v.init(p, rng);
    o.init(p, rng);
  }

  struct Cache {
    typename Linear<S>::Cache q, k, v, o;
    Mat<S> Q, K, V;
    std::vector<Mat<S>> probs;
  };

  Mat<S> forward(const ParamSet<S>& p, const Mat<S>& xq, const Mat<S>& xkv, Cache* c) const {
    Mat<S> Q = q.forward(p, xq, c ? &c->q : nullptr);
    Mat<S> K = k.forward(p, xkv, c ? &c->k : nullptr);
    Mat<S> V = v.forward(p, xkv, c ? &c->v : nullptr);
    const auto dim = Q.cols();
    const auto dh = dim / static_cast<Eigen::Index>(heads);
    const S scale = S(1) / std::sqrt(static_cast<S>(dh));
    Mat<S> out(Q.rows(), dim);
    if (c) c->probs.resize(heads);
    for (std::size_t h = 0; h < heads; ++h) {
      const auto off = static_cast<Eigen::Index>(h) * dh;
      Mat<S> s = (Q.middleCols(off, dh) * K.middleCols(off, dh).transpose()) * scale;
      for (Eigen::Index r = 0; r < s.rows(); ++r) {
        const S mx = s.row(r).maxCoeff();
        s.row(r) = (s.row(r).array() - mx).exp();
        s.row(r) /= s.row(r).sum();
      }
      out.middleCols(off, dh).noalias() = s * V.middleCols(off, dh);
      if (c) c->probs[h] = std::move(s);
    }
    if (c) {
      c->Q = std::move(Q);
      c->K = std::move(K);
      c->V = std::move(V);
    }
    return o.forward(p, out, c ? &c->o : nullptr);
  }

  /// Returns (d query input, d key/value input).
  std::pair<Mat<S>, Mat<S>> backward(const ParamSet<S>& p, ParamSet<S>& g, const Cache& c, const Mat<S>& dy) const {
    const Mat<S> dout = o.backward(p, g, c.o, dy);
    const auto dim = c.Q.cols();
    const auto dh = dim / static_cast<Eigen::Index>(heads);
    const S scale = S(1) / std::sqrt(static_cast<S>(dh));
    Mat<S> dQ(c.Q.rows(), dim), dK(c.K.rows(), dim), dV(c.V.rows(), dim);
    for (std::size_t h = 0; h < heads; ++h) {
      const auto off = static_cast<Eigen::Index>(h) * dh;
      const Mat<S>& P = c.probs[h];
      const Mat<S> dOh = dout.middleCols(off, dh);
      dV.middleCols(off, dh).noalias() = P.transpose() * dOh;
      Mat<S> dP = dOh * c.V.middleCols(off, dh).transpose();
      const Eigen::Matrix<S, Eigen::Dynamic, 1> rs = (dP.array() * P.array()).rowwise().sum();
      Mat<S> dS = (P.array() * (dP.array().colwise() - rs.array())) * scale;
      dQ.middleCols(off, dh).noalias() = dS * c.K.middleCols(off, dh);
      dK.middleCols(off, dh).noalias() = dS.transpose() * c.Q.middleCols(off, dh);
    }
    Mat<S> dxq = q.backward(p, g, c.q, dQ);
    Mat<S> dxkv = k.backward(p, g, c.k, dK);
    dxkv += v.backward(p, g, c.v, dV);
    return {std::move(dxq), std::move(dxkv)};
  }
};

/// Pre-norm transformer encoder block.
template <class S>
struct EncoderBlock {
  LayerNorm<S> ln1, ln2;
  Attention<S> attn;
  Mlp<S> mlp;

  static EncoderBlock create(ParamSet<S>& p, const std::string& name, std::size_t dim, std::size_t heads,
                             std::size_t mlp_hidden) {
    EncoderBlock b;
    b.ln1 = LayerNorm<S>::create(p, name + ".ln1", dim);
    b.attn = Attention<S>::create(p, name + ".attn", dim, heads);
    b.ln2 = LayerNorm<S>::create(p, name + ".ln2", dim);
    b.mlp = Mlp<S>::create(p, name + ".mlp", dim, mlp_hidden);
    return b;
  }
  void init(ParamSet<S>& p, core::Rng& rng) const {
    ln1.init(p);
    attn.init(p, rng);
    ln2.init(p);
    mlp.init(p, rng);
  }

  struct Cache {
    typename LayerNorm<S>::Cache ln1, ln2;
    typename Attention<S>::Cache attn;
    typename Mlp<S>::Cache mlp;
  };

  Mat<S> forward(const ParamSet<S>& p, const Mat<S>& x, Cache* c) const {
    const Mat<S> a = ln1.forward(p, x, c ? &c->ln1 : nullptr);
    Mat<S> h = x + attn.forward(p, a, a, c ? &c->attn : nullptr);
    return h + mlp.forward(p, ln2.forward(p, h, c ? &c->ln2 : nullptr), c ? &c->mlp : nullptr);
  }

  Mat<S> backward(const ParamSet<S>& p, ParamSet<S>& g, const Cache& c, const Mat<S>& dy) const {
    Mat<S> dh = dy + ln2.backward(p, g, c.ln2, mlp.backward(p, g, c.mlp, dy));
    auto [dq, dkv] = attn.backward(p, g, c.attn, dh);
    dq += dkv;
    return dh + ln1.backward(p, g, c.ln1, dq);
  }
};

/// Decoder block: queries attend to the context, then to each other, then an MLP.
template <class S>
struct DecoderBlock {
  LayerNorm<S> ln1, ln2, ln3;
  Attention<S> cross, self;
  Mlp<S> mlp;

  static DecoderBlock create(ParamSet<S>& p, const std::string& name, std::size_t dim, std::size_t heads,
                             std::size_t mlp_hidden) {
    DecoderBlock b;
    b.ln1 = LayerNorm<S>::create(p, name + ".ln1", dim);
    b.cross = Attention<S>::create(p, name + ".cross", dim, heads);
    b.ln2 = LayerNorm<S>::create(p, name + ".ln2", dim);
    b.self = Attention<S>::create(p, name + ".self", dim, heads);
    b.ln3 = LayerNorm<S>::create(p, name + ".ln3", dim);
    b.mlp = Mlp<S>::create(p, name + ".mlp", dim, mlp_hidden);
    return b;
  }
  void init(ParamSet<S>& p, core::Rng& rng) const {
    ln1.init(p);
    cross.init(p, rng);
    ln2.init(p);
    self.init(p, rng);
    ln3.init(p);
    mlp.init(p, rng);
  }

  struct Cache {
    typename LayerNorm<S>::Cache ln1, ln2, ln3;
    typename Attention<S>::Cache cross, self;
    typename Mlp<S>::Cache mlp;
  };

  Mat<S> forward(const ParamSet<S>& p, const Mat<S>& x, const Mat<S>& ctx, Cache* c) const {
    Mat<S> h1 = x + cross.forward(p, ln1.forward(p, x, c ? &c->ln1 : nullptr), ctx, c ? &c->cross : nullptr);
    const Mat<S> a = ln2.forward(p, h1, c ? &c->ln2 : nullptr);
    Mat<S> h2 = h1 + self.forward(p, a, a, c ? &c->self : nullptr);
    return h2 + mlp.forward(p, ln3.forward(p, h2, c ? &c->ln3 : nullptr), c ? &c->mlp : nullptr);
  }

  /// Returns d x; adds the context gradient into dctx.
  Mat<S> backward(const ParamSet<S>& p, ParamSet<S>& g, const Cache& c, const Mat<S>& dy, Mat<S>& dctx) const {
    Mat<S> dh2 = dy + ln3.backward(p, g, c.ln3, mlp.backward(p, g, c.mlp, dy));
    auto [dq2, dkv2] = self.backward(p, g, c.self, dh2);
    dq2 += dkv2;
    Mat<S> dh1 = dh2 + ln2.backward(p, g, c.ln2, dq2);
    auto [dq1, dctx1] = cross.backward(p, g, c.cross, dh1);
    dctx += dctx1;
    return dh1 + ln1.backward(p, g, c.ln1, dq1);
  }
};

}  // namespace obsmae::model
