#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "obsmae/core/modality.hpp"
#include "obsmae/core/random.hpp"
#include "obsmae/model/config.hpp"
#include "obsmae/model/layers.hpp"
#include "obsmae/model/mask.hpp"
#include "obsmae/model/tokens.hpp"
#include "obsmae/model/vae.hpp"

namespace obsmae::model {

/// What the network needs to know about a modality to size its tokenizer and decoder.
struct ModalityLayout {
  std::string name;
  std::size_t channels = 1;
  bool temporal = true;
  core::ModalityKind kind = core::ModalityKind::Geo;

  static ModalityLayout from(const core::ModalitySpec& s) { return {s.name, s.channels, s.temporal, s.kind}; }
};

/// Multi-modal masked autoencoder: per-modality VAE tokenizers, a shared transformer over the
/// visible tokens plus one global token, and one cross-attending decoder per modality that
/// predicts every token position of its modality.
template <class S>
class Network {
 public:
  Network(ModelConfig cfg, std::vector<ModalityLayout> modalities) : cfg_(std::move(cfg)), mods_(std::move(modalities)) {
    cfg_.validate();
    require(!mods_.empty(), "network: no modalities");
    ParamSet<S> p;
    const std::size_t D = cfg_.token_dim, Dc = cfg_.context_dim, L = cfg_.vae_latent_dim;
    for (const auto& m : mods_) {
      Branch b;
      const std::size_t plen = m.channels * cfg_.patch * cfg_.patch;
      b.tok = Tokenizer<S>::create(p, "tok." + m.name, plen, cfg_.vae_hidden, L);
      b.in_proj = Linear<S>::create(p, "enc." + m.name + ".in", L, D);
      b.embedding = p.add("enc." + m.name + ".embedding", 1, D);
      b.ctx_proj = Linear<S>::create(p, "dec." + m.name + ".ctx", D, Dc);
      b.ctx_embedding = p.add("dec." + m.name + ".ctx_embedding", 1, Dc);
      b.ctx_norm = LayerNorm<S>::create(p, "dec." + m.name + ".ctx_norm", Dc);
      b.query = p.add("dec." + m.name + ".query", 1, Dc);
      for (std::size_t k = 0; k < cfg_.decoder_blocks; ++k)
        b.blocks.push_back(DecoderBlock<S>::create(p, "dec." + m.name + ".block" + std::to_string(k), Dc,
                                                   cfg_.decoder_heads, cfg_.mlp_ratio * Dc));
      b.out_norm = LayerNorm<S>::create(p, "dec." + m.name + ".norm", Dc);
      b.out_proj = Linear<S>::create(p, "dec." + m.name + ".out", Dc, L);
      branches_.push_back(std::move(b));
    }
    global_ = p.add("backbone.global", 1, D);
    for (std::size_t k = 0; k < cfg_.backbone_blocks; ++k)
      backbone_.push_back(EncoderBlock<S>::create(p, "backbone.block" + std::to_string(k), D, cfg_.backbone_heads,
                                                  cfg_.mlp_ratio * D));
    backbone_norm_ = LayerNorm<S>::create(p, "backbone.norm", D);
    for (std::size_t i = 0; i < p.size(); ++i)
      layout_.push_back({p.name(i), static_cast<std::size_t>(p[i].rows()), static_cast<std::size_t>(p[i].cols())});
  }

  const ModelConfig& config() const { return cfg_; }
  const std::vector<ModalityLayout>& modalities() const { return mods_; }

  struct ParamShape {
    std::string name;
    std::size_t rows = 0, cols = 0;
  };
  const std::vector<ParamShape>& layout() const { return layout_; }

  ParamSet<S> zero_params() const {
    ParamSet<S> p;
    for (const auto& e : layout_) p.add(e.name, e.rows, e.cols);
    return p;
  }

  ParamSet<S> init_params(std::uint64_t seed) const {
    ParamSet<S> p = zero_params();
    auto rng = core::make_rng(seed, {0x1417});
    for (const auto& b : branches_) {
      b.tok.init(p, rng);
      b.in_proj.init(p, rng);
      init_normal(p[b.embedding], rng, 0.02);
      b.ctx_proj.init(p, rng);
      init_normal(p[b.ctx_embedding], rng, 0.02);
      b.ctx_norm.init(p);
      init_normal(p[b.query], rng, 0.02);
      for (const auto& blk : b.blocks) blk.init(p, rng);
      b.out_norm.init(p);
      b.out_proj.init(p, rng);
    }
    init_normal(p[global_], rng, 0.02);
    for (const auto& blk : backbone_) blk.init(p, rng);
    backbone_norm_.init(p);
    return p;
  }

  /// Throws naming the first parameter whose name or shape disagrees with this architecture.
  void check_params(const ParamSet<S>& p) const {
    require(p.size() == layout_.size(), "parameter count " + std::to_string(p.size()) + " differs from model's " +
                                            std::to_string(layout_.size()));
    for (std::size_t i = 0; i < layout_.size(); ++i) {
      require(p.name(i) == layout_[i].name, "parameter " + std::to_string(i) + " is '" + p.name(i) +
                                                "', model expects '" + layout_[i].name + "'");
      require(static_cast<std::size_t>(p[i].rows()) == layout_[i].rows &&
                  static_cast<std::size_t>(p[i].cols()) == layout_[i].cols,
              "parameter '" + layout_[i].name + "' has shape (" + std::to_string(p[i].rows()) + "," +
                  std::to_string(p[i].cols()) + "), model expects (" + std::to_string(layout_[i].rows) + "," +
                  std::to_string(layout_[i].cols) + ")");
    }
  }

  std::size_t branch_index(const std::string& name) const {
    for (std::size_t m = 0; m < mods_.size(); ++m)
      if (mods_[m].name == name) return m;
    throw Error("network has no modality '" + name + "'");
  }

  const Tokenizer<S>& tokenizer(const std::string& name) const { return branches_[branch_index(name)].tok; }

  struct Cache {
    struct Input {
      std::size_t branch = 0;
      std::size_t rows = 0;
      typename Tokenizer<S>::EncodeCache enc;
      typename Linear<S>::Cache in_proj;
    };
    struct Output {
      std::size_t branch = 0;
      typename Linear<S>::Cache ctx_proj;
      typename LayerNorm<S>::Cache ctx_norm;
      Mat<S> ctx;
      std::vector<typename DecoderBlock<S>::Cache> blocks;
      typename LayerNorm<S>::Cache out_norm;
      typename Linear<S>::Cache out_proj;
      typename Tokenizer<S>::DecodeCache dec;
    };
    std::vector<Input> inputs;
    std::vector<typename EncoderBlock<S>::Cache> backbone;
    typename LayerNorm<S>::Cache backbone_norm;
    std::vector<Output> outputs;
  };

  /// Predicted patches (normalised units) for every token of every modality in `tokens`.
  /// Only rows listed in `plan` enter the encoder; all other token values are never read.
  std::vector<Mat<S>> forward(const ParamSet<S>& p, const std::vector<TokenSet>& tokens, const MaskPlan& plan,
                              Cache* cache) const {
    require(plan.modalities.size() == tokens.size(), "forward: mask plan does not match the token sets");
    const auto D = static_cast<Eigen::Index>(cfg_.token_dim);
    if (cache) *cache = Cache{};

    std::vector<Mat<S>> embedded;
    Eigen::Index total = 1;
    for (std::size_t m = 0; m < tokens.size(); ++m) {
      const auto& ts = tokens[m];
      require(plan.modalities[m] == ts.modality, "forward: plan modality order differs from token sets");
      const std::size_t bi = branch_index(ts.modality);
      require(ts.patch_len() == mods_[bi].channels * cfg_.patch * cfg_.patch,
              "forward: " + ts.modality + " patch length does not match the model");
      const auto& rows = plan.visible[m];
      if (rows.empty()) continue;
      Mat<S> x(static_cast<Eigen::Index>(rows.size()), ts.patches.cols());
      std::vector<TokenIndex> idx;
      for (std::size_t r = 0; r < rows.size(); ++r) {
        require(rows[r] < ts.size() && ts.valid[rows[r]], "forward: plan marks an invalid token of " + ts.modality +
                                                              " visible");
        x.row(static_cast<Eigen::Index>(r)) = ts.patches.row(static_cast<Eigen::Index>(rows[r])).template cast<S>();
        idx.push_back(ts.index[rows[r]]);
      }
      const auto& b = branches_[bi];
      typename Cache::Input* ci = nullptr;
      if (cache) {
        cache->inputs.push_back({});
        ci = &cache->inputs.back();
        ci->branch = bi;
        ci->rows = rows.size();
      }
      const Mat<S> stats = b.tok.encode(p, x, ci ? &ci->enc : nullptr);
      const Mat<S> mu = stats.leftCols(static_cast<Eigen::Index>(cfg_.vae_latent_dim));
      Mat<S> h = b.in_proj.forward(p, mu, ci ? &ci->in_proj : nullptr);
      h += token_posenc(idx, ts.temporal, cfg_.token_dim).template cast<S>();
      h.rowwise() += p[b.embedding].row(0);
      total += h.rows();
      embedded.push_back(std::move(h));
    }

    Mat<S> seq(total, D);
    seq.row(0) = p[global_].row(0);
    Eigen::Index off = 1;
    for (const auto& h : embedded) {
      seq.middleRows(off, h.rows()) = h;
      off += h.rows();
    }
    if (cache) cache->backbone.resize(backbone_.size());
    for (std::size_t k = 0; k < backbone_.size(); ++k)
      seq = backbone_[k].forward(p, seq, cache ? &cache->backbone[k] : nullptr);
    const Mat<S> encoded = backbone_norm_.forward(p, seq, cache ? &cache->backbone_norm : nullptr);

    std::vector<Mat<S>> out;
    for (std::size_t m = 0; m < tokens.size(); ++m) {
      const auto& ts = tokens[m];
      const std::size_t bi = branch_index(ts.modality);
      const auto& b = branches_[bi];
      typename Cache::Output* co = nullptr;
      if (cache) {
        cache->outputs.push_back({});
        co = &cache->outputs.back();
        co->branch = bi;
        co->blocks.resize(b.blocks.size());
      }
      Mat<S> ctx = b.ctx_proj.forward(p, encoded, co ? &co->ctx_proj : nullptr);
      ctx.rowwise() += p[b.ctx_embedding].row(0);
      ctx = b.ctx_norm.forward(p, ctx, co ? &co->ctx_norm : nullptr);
      Mat<S> q = token_posenc(ts.index, ts.temporal, cfg_.context_dim).template cast<S>();
      q.rowwise() += p[b.query].row(0);
      for (std::size_t k = 0; k < b.blocks.size(); ++k)
        q = b.blocks[k].forward(p, q, ctx, co ? &co->blocks[k] : nullptr);
      const Mat<S> lat =
          b.out_proj.forward(p, b.out_norm.forward(p, q, co ? &co->out_norm : nullptr), co ? &co->out_proj : nullptr);
      out.push_back(b.tok.decode(p, lat, co ? &co->dec : nullptr));
      if (co) co->ctx = std::move(ctx);
    }
    return out;
  }

  /// Accumulates dLoss/dparams into g given dLoss/dprediction for each forward() output.
  void backward(const ParamSet<S>& p, ParamSet<S>& g, const Cache& cache, const std::vector<Mat<S>>& dpred) const {
    require(dpred.size() == cache.outputs.size(), "backward: gradient count differs from forward outputs");
    const auto D = static_cast<Eigen::Index>(cfg_.token_dim);
    Eigen::Index total = 1;
    for (const auto& ci : cache.inputs) total += static_cast<Eigen::Index>(ci.rows);
    Mat<S> dencoded = Mat<S>::Zero(total, D);

    for (std::size_t o = 0; o < cache.outputs.size(); ++o) {
      const auto& co = cache.outputs[o];
      const auto& b = branches_[co.branch];
      const Mat<S> dlat = b.tok.decode_backward(p, g, co.dec, dpred[o]);
      Mat<S> dq = b.out_norm.backward(p, g, co.out_norm, b.out_proj.backward(p, g, co.out_proj, dlat));
      Mat<S> dctx = Mat<S>::Zero(co.ctx.rows(), co.ctx.cols());
      for (std::size_t k = b.blocks.size(); k-- > 0;) dq = b.blocks[k].backward(p, g, co.blocks[k], dq, dctx);
      g[b.query] += dq.colwise().sum();
      const Mat<S> dctx_pre = b.ctx_norm.backward(p, g, co.ctx_norm, dctx);
      g[b.ctx_embedding] += dctx_pre.colwise().sum();
      dencoded += b.ctx_proj.backward(p, g, co.ctx_proj, dctx_pre);
    }

    Mat<S> dseq = backbone_norm_.backward(p, g, cache.backbone_norm, dencoded);
    for (std::size_t k = backbone_.size(); k-- > 0;) dseq = backbone_[k].backward(p, g, cache.backbone[k], dseq);
    g[global_] += dseq.row(0);

    Eigen::Index off = 1;
    for (const auto& ci : cache.inputs) {
      const auto& b = branches_[ci.branch];
      const auto n = static_cast<Eigen::Index>(ci.rows);
      const Mat<S> dh = dseq.middleRows(off, n);
      off += n;
      g[b.embedding] += dh.colwise().sum();
      const Mat<S> dmu = b.in_proj.backward(p, g, ci.in_proj, dh);
      Mat<S> dstats = Mat<S>::Zero(n, static_cast<Eigen::Index>(2 * cfg_.vae_latent_dim));
      dstats.leftCols(static_cast<Eigen::Index>(cfg_.vae_latent_dim)) = dmu;
      b.tok.encode_backward(p, g, ci.enc, dstats);
    }
  }

 private:
  struct Branch {
    Tokenizer<S> tok;
    Linear<S> in_proj;
    ParamId embedding = 0;
    Linear<S> ctx_proj;
    ParamId ctx_embedding = 0;
    LayerNorm<S> ctx_norm;
    ParamId query = 0;
    std::vector<DecoderBlock<S>> blocks;
    LayerNorm<S> out_norm;
    Linear<S> out_proj;
  };

  ModelConfig cfg_;
  std::vector<ModalityLayout> mods_;
  std::vector<Branch> branches_;
  ParamId global_ = 0;
  std::vector<EncoderBlock<S>> backbone_;
  LayerNorm<S> backbone_norm_;
  std::vector<ParamShape> layout_;
};

}  // namespace obsmae::model
