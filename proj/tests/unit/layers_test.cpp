#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "obsmae/model/layers.hpp"
#include "obsmae/model/vae.hpp"

namespace {

using obsmae::model::Mat;
using obsmae::model::ParamSet;
namespace m = obsmae::model;

Mat<double> random_mat(Eigen::Index r, Eigen::Index c, std::uint64_t seed) {
  auto rng = obsmae::core::make_rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  Mat<double> x(r, c);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = n(rng);
  return x;
}

// Scalar probe: weighted sum of outputs with fixed random weights.
double probe(const Mat<double>& y, const Mat<double>& w) { return (y.array() * w.array()).sum(); }

TEST(Layers, LinearGradient) {
  ParamSet<double> p;
  auto lin = m::Linear<double>::create(p, "lin", 5, 3);
  auto rng = obsmae::core::make_rng(1);
  lin.init(p, rng);
  p[lin.b] = random_mat(1, 3, 2);
  const Mat<double> x = random_mat(4, 5, 3), w = random_mat(4, 3, 4);
  m::Linear<double>::Cache c;
  lin.forward(p, x, &c);
  auto g = p.zeros_like();
  const Mat<double> dx = lin.backward(p, g, c, w);
  auto loss = [&] { return probe(lin.forward(p, x, nullptr), w); };
  EXPECT_LT(obsmae::testing::max_gradient_error(p, g, loss, 100), 1e-6);
  // Input gradient: y = xW + b, so dprobe/dx = w W^T.
  EXPECT_LT((dx - w * p[lin.w].transpose()).norm(), 1e-12);
}

TEST(Layers, LayerNormAndGeluGradients) {
  ParamSet<double> p;
  auto ln = m::LayerNorm<double>::create(p, "ln", 6);
  ln.init(p);
  p[ln.gain] = random_mat(1, 6, 5);
  p[ln.bias] = random_mat(1, 6, 6);
  Mat<double> x = random_mat(3, 6, 7);
  const Mat<double> w = random_mat(3, 6, 8);
  auto run = [&](const Mat<double>& in, m::LayerNorm<double>::Cache* c1, m::Gelu<double>::Cache* c2) {
    return m::Gelu<double>::forward(ln.forward(p, in, c1), c2);
  };
  m::LayerNorm<double>::Cache c1;
  m::Gelu<double>::Cache c2;
  run(x, &c1, &c2);
  auto g = p.zeros_like();
  const Mat<double> dx = ln.backward(p, g, c1, m::Gelu<double>::backward(c2, w));
  EXPECT_LT(obsmae::testing::max_gradient_error(p, g, [&] { return probe(run(x, nullptr, nullptr), w); }, 100), 1e-6);
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double orig = x.data()[i];
    x.data()[i] = orig + 1e-6;
    const double lp = probe(run(x, nullptr, nullptr), w);
    x.data()[i] = orig - 1e-6;
    const double lm = probe(run(x, nullptr, nullptr), w);
    x.data()[i] = orig;
    EXPECT_NEAR(dx.data()[i], (lp - lm) / 2e-6, 1e-6);
  }
}

TEST(Layers, CrossAttentionGradients) {
  ParamSet<double> p;
  auto att = m::Attention<double>::create(p, "att", 8, 2);
  auto rng = obsmae::core::make_rng(9);
  att.init(p, rng);
  Mat<double> xq = random_mat(3, 8, 10), xkv = random_mat(5, 8, 11);
  const Mat<double> w = random_mat(3, 8, 12);
  m::Attention<double>::Cache c;
  att.forward(p, xq, xkv, &c);
  auto g = p.zeros_like();
  auto [dq, dkv] = att.backward(p, g, c, w);
  EXPECT_LT(obsmae::testing::max_gradient_error(p, g, [&] { return probe(att.forward(p, xq, xkv, nullptr), w); }, 100),
            1e-6);
  auto check_input = [&](Mat<double>& x, const Mat<double>& analytic) {
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      const double orig = x.data()[i];
      x.data()[i] = orig + 1e-6;
      const double lp = probe(att.forward(p, xq, xkv, nullptr), w);
      x.data()[i] = orig - 1e-6;
      const double lm = probe(att.forward(p, xq, xkv, nullptr), w);
      x.data()[i] = orig;
      EXPECT_NEAR(analytic.data()[i], (lp - lm) / 2e-6, 1e-6);
    }
  };
  check_input(xq, dq);
  check_input(xkv, dkv);
}

TEST(Layers, EncoderAndDecoderBlockGradients) {
  ParamSet<double> p;
  auto enc = m::EncoderBlock<double>::create(p, "enc", 8, 2, 16);
  auto dec = m::DecoderBlock<double>::create(p, "dec", 8, 4, 16);
  auto rng = obsmae::core::make_rng(13);
  enc.init(p, rng);
  dec.init(p, rng);
  const Mat<double> x = random_mat(4, 8, 14), q = random_mat(3, 8, 15), w = random_mat(3, 8, 16);
  auto run = [&](m::EncoderBlock<double>::Cache* ce, m::DecoderBlock<double>::Cache* cd) {
    const Mat<double> ctx = enc.forward(p, x, ce);
    return dec.forward(p, q, ctx, cd);
  };
  m::EncoderBlock<double>::Cache ce;
  m::DecoderBlock<double>::Cache cd;
  run(&ce, &cd);
  auto g = p.zeros_like();
  Mat<double> dctx = Mat<double>::Zero(4, 8);
  dec.backward(p, g, cd, w, dctx);
  enc.backward(p, g, ce, dctx);
  EXPECT_LT(obsmae::testing::max_gradient_error(p, g, [&] { return probe(run(nullptr, nullptr), w); }, 40), 1e-5);
}

TEST(Vae, KlClosedForm) {
  EXPECT_NEAR(m::kl_divergence({0.0}, {0.0}), 0.0, 1e-12);
  EXPECT_NEAR(m::kl_divergence({1.0}, {0.0}), 0.5, 1e-9);
  // 0.5 * (mu^2 + sigma^2 - 1 - log sigma^2) with mu = 0.3, log sigma^2 = -0.7, summed over 2 dims.
  const double one = 0.5 * (0.09 + std::exp(-0.7) - 1.0 + 0.7);
  EXPECT_NEAR(m::kl_divergence({0.3, 0.3}, {-0.7, -0.7}), 2.0 * one, 1e-12);
}

TEST(Vae, LossGradientWithFixedNoise) {
  ParamSet<double> p;
  auto tok = m::Tokenizer<double>::create(p, "tok", 12, 10, 3);
  auto rng = obsmae::core::make_rng(17);
  tok.init(p, rng);
  const Mat<double> x = random_mat(5, 12, 18);
  auto g = p.zeros_like();
  auto r0 = obsmae::core::make_rng(19);
  m::vae_loss<double>(tok, p, &g, x, 0.3, r0);
  auto loss = [&] {
    auto r = obsmae::core::make_rng(19);
    return m::vae_loss<double>(tok, p, nullptr, x, 0.3, r).total;
  };
  EXPECT_LT(obsmae::testing::max_gradient_error(p, g, loss, 60), 1e-5);
}

TEST(Vae, PretrainReducesLoss) {
  ParamSet<double> p;
  auto tok = m::Tokenizer<double>::create(p, "tok", 16, 32, 4);
  auto rng = obsmae::core::make_rng(20);
  tok.init(p, rng);
  // Patches on a 2D subspace: compressible into the latent.
  const Mat<double> basis = random_mat(2, 16, 21), coef = random_mat(200, 2, 22);
  const Mat<double> x = coef * basis;
  m::VaePretrainOptions opt;
  opt.steps = 300;
  opt.batch = 32;
  opt.lr = 3e-3;
  const auto res = m::vae_pretrain<double>(tok, p, x, opt, rng);
  EXPECT_LE(res.final_loss, res.initial_loss);
  EXPECT_LT(res.final_loss, 0.5 * res.initial_loss);
}

}  // namespace
