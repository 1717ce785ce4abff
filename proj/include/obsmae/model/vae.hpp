#pragma once

#include <cmath>
#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "obsmae/core/error.hpp"
#include "obsmae/core/random.hpp"
#include "obsmae/model/layers.hpp"
#include "obsmae/train/adam.hpp"

namespace obsmae::model {

/// KL(N(mu, exp(logvar)) || N(0, I)) summed over latent dimensions.
inline double kl_divergence(const std::vector<double>& mu, const std::vector<double>& logvar) {
  require(mu.size() == logvar.size(), "kl_divergence: mu and logvar lengths differ");
  double kl = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i) kl += 0.5 * (mu[i] * mu[i] + std::exp(logvar[i]) - 1.0 - logvar[i]);
  return kl;
}

/// Per-modality patch tokenizer: a Gaussian VAE between flattened patches and a small latent.
template <class S>
struct Tokenizer {
  Linear<S> enc1, enc2, dec1, dec2;
  std::size_t latent = 0;

  static Tokenizer create(ParamSet<S>& p, const std::string& name, std::size_t patch_len, std::size_t hidden,
                          std::size_t latent) {
    Tokenizer t;
    t.enc1 = Linear<S>::create(p, name + ".enc1", patch_len, hidden);
    t.enc2 = Linear<S>::create(p, name + ".enc2", hidden, 2 * latent);
    t.dec1 = Linear<S>::create(p, name + ".dec1", latent, hidden);
    t.dec2 = Linear<S>::create(p, name + ".dec2", hidden, patch_len);
    t.latent = latent;
    return t;
  }

  void init(ParamSet<S>& p, core::Rng& rng) const {
    enc1.init(p, rng);
    enc2.init(p, rng);
    dec1.init(p, rng);
    dec2.init(p, rng);
  }

  struct EncodeCache {
    typename Linear<S>::Cache l1, l2;
    typename Gelu<S>::Cache act;
  };
  struct DecodeCache {
    typename Linear<S>::Cache l1, l2;
    typename Gelu<S>::Cache act;
  };

  /// Returns [mu | logvar], N x 2*latent.
  Mat<S> encode(const ParamSet<S>& p, const Mat<S>& x, EncodeCache* c) const {
    return enc2.forward(p, Gelu<S>::forward(enc1.forward(p, x, c ? &c->l1 : nullptr), c ? &c->act : nullptr),
                        c ? &c->l2 : nullptr);
  }

  /// Backward through the encoder; the input gradient is not needed and not formed.
  void encode_backward(const ParamSet<S>& p, ParamSet<S>& g, const EncodeCache& c, const Mat<S>& dout) const {
    const Mat<S> dh = Gelu<S>::backward(c.act, enc2.backward(p, g, c.l2, dout));
    g[enc1.w].noalias() += c.l1.x.transpose() * dh;
    g[enc1.b] += dh.colwise().sum();
  }

  Mat<S> decode(const ParamSet<S>& p, const Mat<S>& z, DecodeCache* c) const {
    return dec2.forward(p, Gelu<S>::forward(dec1.forward(p, z, c ? &c->l1 : nullptr), c ? &c->act : nullptr),
                        c ? &c->l2 : nullptr);
  }

  Mat<S> decode_backward(const ParamSet<S>& p, ParamSet<S>& g, const DecodeCache& c, const Mat<S>& dx) const {
    return dec1.backward(p, g, c.l1, Gelu<S>::backward(c.act, dec2.backward(p, g, c.l2, dx)));
  }
};

struct VaeLoss {
  double total = 0.0;
  double reconstruction = 0.0;  // mean squared error per element
  double kl = 0.0;              // mean over patches of the summed KL
};

/// One VAE objective evaluation with reparameterised sampling; accumulates gradients when g is set.
template <class S>
VaeLoss vae_loss(const Tokenizer<S>& tok, const ParamSet<S>& p, ParamSet<S>* g, const Mat<S>& x, double kl_weight,
                 core::Rng& rng) {
  const auto n = x.rows();
  const auto L = static_cast<Eigen::Index>(tok.latent);
  typename Tokenizer<S>::EncodeCache ec;
  typename Tokenizer<S>::DecodeCache dc;
  const Mat<S> stats = tok.encode(p, x, g ? &ec : nullptr);
  const Mat<S> mu = stats.leftCols(L), lv = stats.rightCols(L);
  Mat<S> eps(n, L);
  std::normal_distribution<double> nd(0.0, 1.0);
  for (Eigen::Index i = 0; i < eps.size(); ++i) eps.data()[i] = static_cast<S>(nd(rng));
  const Mat<S> sd = (lv.array() * S(0.5)).exp().matrix();
  const Mat<S> z = mu + sd.cwiseProduct(eps);
  const Mat<S> recon = tok.decode(p, z, g ? &dc : nullptr);
  const Mat<S> diff = recon - x;

  VaeLoss out;
  out.reconstruction = static_cast<double>(diff.squaredNorm()) / static_cast<double>(diff.size());
  out.kl = 0.5 * static_cast<double>((mu.array().square() + lv.array().exp() - S(1) - lv.array()).sum()) /
           static_cast<double>(n);
  out.total = out.reconstruction + kl_weight * out.kl;
  if (!g) return out;

  const Mat<S> drecon = diff * (S(2) / static_cast<S>(diff.size()));
  const Mat<S> dz = tok.decode_backward(p, *g, dc, drecon);
  const S kw = static_cast<S>(kl_weight / static_cast<double>(n));
  Mat<S> dstats(n, 2 * L);
  dstats.leftCols(L) = dz + kw * mu;
  dstats.rightCols(L) = (dz.cwiseProduct(eps).cwiseProduct(sd) * S(0.5)).array() +
                        kw * S(0.5) * (lv.array().exp() - S(1));
  tok.encode_backward(p, *g, ec, dstats);
  return out;
}

struct VaePretrainOptions {
  std::size_t steps = 200;
  std::size_t batch = 64;
  double lr = 1e-3;
  double kl_weight = 1e-4;
};

struct VaePretrainResult {
  double initial_loss = 0.0;
  double final_loss = 0.0;
  std::vector<double> history;
};

/// Trains one tokenizer in place on valid patches (rows of `patches`). Only the tokenizer's
/// parameters change.
template <class S>
VaePretrainResult vae_pretrain(const Tokenizer<S>& tok, ParamSet<S>& params, const Mat<S>& patches,
                               const VaePretrainOptions& opt, core::Rng& rng) {
  require(patches.rows() >= 1, "vae_pretrain: need at least one valid patch");
  ParamSet<S> grads = params.zeros_like();
  train::Adam<S> adam({opt.lr, 0.5, 0.9, 1e-8});
  VaePretrainResult res;
  std::uniform_int_distribution<Eigen::Index> pick(0, patches.rows() - 1);
  const auto bsz = static_cast<Eigen::Index>(std::min<std::size_t>(opt.batch, static_cast<std::size_t>(patches.rows())));
  Mat<S> batch(bsz, patches.cols());
  auto eval_rng = core::make_rng(0x7a0c);
  res.initial_loss = vae_loss<S>(tok, params, nullptr, patches, opt.kl_weight, eval_rng).total;
  for (std::size_t s = 0; s < opt.steps; ++s) {
    for (Eigen::Index r = 0; r < bsz; ++r) batch.row(r) = patches.row(pick(rng));
    grads.set_zero();
    const auto l = vae_loss<S>(tok, params, &grads, batch, opt.kl_weight, rng);
    if (!std::isfinite(l.total))
      throw Error("vae_pretrain: non-finite loss at step " + std::to_string(s) + " (reconstruction " +
                  std::to_string(l.reconstruction) + ", kl " + std::to_string(l.kl) + ")");
    adam.step(params, grads);
    res.history.push_back(l.total);
  }
  eval_rng = core::make_rng(0x7a0c);
  res.final_loss = vae_loss<S>(tok, params, nullptr, patches, opt.kl_weight, eval_rng).total;
  return res;
}

}  // namespace obsmae::model
