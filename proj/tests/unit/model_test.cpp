#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <set>

#include "fixtures.hpp"
#include "obsmae/model/loss.hpp"
#include "obsmae/model/mask.hpp"
#include "obsmae/model/model.hpp"
#include "obsmae/model/network.hpp"
#include "obsmae/model/tokens.hpp"

namespace {

namespace m = obsmae::model;
using obsmae::model::Mat;
using obsmae::core::ModalityKind;
using obsmae::core::ObservationCube;
using obsmae::core::Shape4;
using obsmae::testing::random_cube;

TEST(Patchify, TemporalTokenCountAndLength) {
  ObservationCube c("abi", {10, 12, 144, 144}, obsmae::core::hour_range(0, 12));
  std::fill(c.valid_mask().begin(), c.valid_mask().end(), 1);
  std::fill(c.values().begin(), c.values().end(), 0.0f);
  const auto ts = m::patchify(c, 16);
  EXPECT_EQ(ts.size(), 972u);
  EXPECT_EQ(ts.patch_len(), 2560u);
  EXPECT_EQ(ts.valid_count(), 972u);
  std::set<std::tuple<std::size_t, std::size_t, std::size_t>> uniq;
  for (const auto& ix : ts.index) uniq.insert({ix.t, ix.i, ix.j});
  EXPECT_EQ(uniq.size(), 972u);
}

TEST(Patchify, StaticTokenCount) {
  auto c = random_cube("srtm", {2, 1, 144, 144}, 1);
  EXPECT_EQ(m::patchify(c, 16, false).size(), 81u);
}

TEST(Patchify, SingleInvalidCellInvalidatesExactlyOneToken) {
  auto c = random_cube("x", {3, 2, 48, 48}, 2);
  c.invalidate(1, 1, 20, 37);
  const auto ts = m::patchify(c, 16);
  EXPECT_EQ(ts.size() - ts.valid_count(), 1u);
  // Token (t=1, i=1, j=2) holds the cell; its slot is zero-filled.
  const std::size_t row = (1 * 3 + 1) * 3 + 2;
  EXPECT_FALSE(ts.valid[row]);
  EXPECT_EQ(ts.patches(row, 256 + 4 * 16 + 5), 0.0f);
}

TEST(Patchify, IndivisibleWindowRejected) {
  auto c = random_cube("x", {1, 1, 40, 48}, 3);
  EXPECT_THROW(m::patchify(c, 16), obsmae::Error);
}

TEST(Patchify, UnpatchifyRestoresValidCells) {
  auto c = random_cube("x", {2, 3, 32, 48}, 4);
  const auto ts = m::patchify(c, 16);
  const auto back = m::unpatchify(Mat<float>(ts.patches), ts, c.times());
  EXPECT_EQ(back.values(), c.values());
}

TEST(PosEnc, ZeroIndexIsAlternatingSinCos) {
  const auto pe = m::posenc_sincos({{0.0, 0.0, 0.0}}, 12);
  for (int k = 0; k < 12; ++k) EXPECT_DOUBLE_EQ(pe(0, k), k % 2 == 0 ? 0.0 : 1.0);
}

TEST(PosEnc, DistinctIndicesDistinctAndBounded) {
  std::vector<std::vector<double>> pos;
  for (int t = 0; t < 12; ++t)
    for (int i = 0; i < 9; ++i)
      for (int j = 0; j < 9; ++j) pos.push_back({double(t), double(i), double(j)});
  const auto pe = m::posenc_sincos(pos, 768);
  for (Eigen::Index a = 0; a < pe.rows(); ++a) {
    EXPECT_LE(pe.row(a).norm(), std::sqrt(768.0) + 1e-12);
    for (Eigen::Index b = a + 1; b < pe.rows(); b += 37) EXPECT_GT((pe.row(a) - pe.row(b)).norm(), 1e-6);
  }
  // Pure function: a row does not depend on the other rows present.
  const auto single = m::posenc_sincos({pos[500]}, 768);
  EXPECT_EQ((single.row(0) - pe.row(500)).norm(), 0.0);
}

TEST(PosEnc, IndivisibleDimRejected) {
  EXPECT_THROW(m::posenc_sincos({{1.0, 2.0, 3.0}}, 64), obsmae::Error);
  EXPECT_NO_THROW(m::posenc_sincos({{1.0, 2.0}}, 64));
}

std::vector<m::TokenSet> token_sets_with_valid(const std::vector<std::size_t>& valid, std::size_t total) {
  std::vector<m::TokenSet> out;
  for (std::size_t k = 0; k < valid.size(); ++k) {
    m::TokenSet ts;
    ts.modality = "m" + std::to_string(k);
    ts.valid.assign(total, 0);
    for (std::size_t r = 0; r < valid[k]; ++r) ts.valid[(r * 7) % total] = 1;
    for (std::size_t r = 0; r < total; ++r) ts.index.push_back({r, 0, 0});
    out.push_back(ts);
  }
  return out;
}

TEST(MaskPlan, SingleModalityTakesWholeBudget) {
  auto rng = obsmae::core::make_rng(5);
  const auto plan = m::sample_mask_plan(token_sets_with_valid({500}, 972), 128, 1.0, rng);
  EXPECT_EQ(plan.counts[0], 128u);
  EXPECT_EQ(plan.visible[0].size(), 128u);
}

TEST(MaskPlan, EmptyModalityGetsZero) {
  auto rng = obsmae::core::make_rng(6);
  for (int rep = 0; rep < 50; ++rep) {
    const auto plan = m::sample_mask_plan(token_sets_with_valid({0, 300, 40}, 972), 128, 1.0, rng);
    EXPECT_EQ(plan.counts[0], 0u);
    EXPECT_EQ(plan.total_visible(), 128u);
    EXPECT_LE(plan.counts[2], 40u);
  }
}

TEST(MaskPlan, NoValidTokensIsAnError) {
  auto rng = obsmae::core::make_rng(7);
  EXPECT_THROW(m::sample_mask_plan(token_sets_with_valid({0, 0}, 50), 128, 1.0, rng), obsmae::Error);
}

TEST(MaskPlan, InvariantsOverRandomConfigurations) {
  auto rng = obsmae::core::make_rng(8);
  std::uniform_int_distribution<std::size_t> nv(0, 400), nm(1, 5);
  for (int rep = 0; rep < 300; ++rep) {
    std::vector<std::size_t> valid(nm(rng));
    for (auto& v : valid) v = nv(rng);
    if (std::accumulate(valid.begin(), valid.end(), std::size_t{0}) == 0) valid[0] = 1;
    const auto sets = token_sets_with_valid(valid, 972);
    const std::size_t total = std::accumulate(valid.begin(), valid.end(), std::size_t{0});
    const auto plan = m::sample_mask_plan(sets, 128, 1.0, rng);
    EXPECT_EQ(plan.total_visible(), std::min<std::size_t>(128, total));
    for (std::size_t k = 0; k < sets.size(); ++k) {
      EXPECT_EQ(plan.visible[k].size(), plan.counts[k]);
      EXPECT_TRUE(std::is_sorted(plan.visible[k].begin(), plan.visible[k].end()));
      EXPECT_EQ(std::set<std::size_t>(plan.visible[k].begin(), plan.visible[k].end()).size(), plan.counts[k]);
      for (auto r : plan.visible[k]) EXPECT_TRUE(sets[k].valid[r]);
    }
  }
}

TEST(MaskPlan, DeterministicUnderFixedSeed) {
  const auto sets = token_sets_with_valid({300, 200}, 972);
  auto r1 = obsmae::core::make_rng(9), r2 = obsmae::core::make_rng(9);
  const auto a = m::sample_mask_plan(sets, 128, 1.0, r1), b = m::sample_mask_plan(sets, 128, 1.0, r2);
  EXPECT_EQ(a.visible, b.visible);
}

TEST(MaskPlan, DirichletMeanShareIsHalfForTwoModalities) {
  const auto sets = token_sets_with_valid({600, 600}, 972);
  auto rng = obsmae::core::make_rng(10);
  double share = 0.0;
  for (int d = 0; d < 10000; ++d) share += double(m::sample_mask_plan(sets, 128, 1.0, rng).counts[0]) / 128.0;
  share /= 10000.0;
  EXPECT_GE(share, 0.45);
  EXPECT_LE(share, 0.55);
}

TEST(MaskPlan, LargestRemainderApportionment) {
  EXPECT_EQ(m::largest_remainder(10, {0.333, 0.333, 0.334}), (std::vector<std::size_t>{3, 3, 4}));
  EXPECT_EQ(m::largest_remainder(128, {0.5, 0.5}), (std::vector<std::size_t>{64, 64}));
  EXPECT_EQ(m::largest_remainder(7, {0.0, 0.0}), (std::vector<std::size_t>{4, 3}));
}

// --- Network -------------------------------------------------------------------------------

m::ModelConfig small_config() {
  auto cfg = m::ModelConfig::tiny();
  cfg.mask_budget = 20;
  return cfg;
}

struct Fixture {
  std::vector<m::ModalityLayout> layouts{{"geo", 2, true, ModalityKind::Geo}, {"elev", 1, false, ModalityKind::Static}};
  std::vector<m::TokenSet> tokens;
  Fixture() {
    tokens.push_back(m::patchify(random_cube("geo", {2, 3, 48, 48}, 11, 0.3), 16, true));
    tokens.push_back(m::patchify(random_cube("elev", {1, 1, 48, 48}, 12), 16, false));
  }
};

TEST(Network, OutputShapesAreDense) {
  Fixture f;
  m::Network<float> net(small_config(), f.layouts);
  const auto params = net.init_params(1);
  auto rng = obsmae::core::make_rng(2);
  const auto plan = m::sample_mask_plan(f.tokens, 20, 1.0, rng);
  const auto out = net.forward(params, f.tokens, plan, nullptr);
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[0].rows(), 27);
  EXPECT_EQ(out[0].cols(), 512);
  EXPECT_EQ(out[1].rows(), 9);
  EXPECT_TRUE(out[0].allFinite() && out[1].allFinite());
  const auto cube = m::unpatchify(out[0], f.tokens[0], obsmae::core::hour_range(0, 3));
  EXPECT_EQ(cube.valid_count(), cube.shape().size());
}

TEST(Network, VisibleOrderDoesNotMatter) {
  Fixture f;
  m::Network<double> net(small_config(), f.layouts);
  const auto params = net.init_params(3);
  auto rng = obsmae::core::make_rng(4);
  auto plan = m::sample_mask_plan(f.tokens, 20, 1.0, rng);
  const auto a = net.forward(params, f.tokens, plan, nullptr);
  for (auto& v : plan.visible) std::reverse(v.begin(), v.end());
  std::swap(plan.visible[0].front(), plan.visible[0][plan.visible[0].size() / 2]);
  const auto b = net.forward(params, f.tokens, plan, nullptr);
  for (std::size_t k = 0; k < a.size(); ++k) EXPECT_LT((a[k] - b[k]).cwiseAbs().maxCoeff(), 1e-5);
}

TEST(Network, ModalityWithNoVisibleTokensStillPredicted) {
  Fixture f;
  m::Network<float> net(small_config(), f.layouts);
  const auto params = net.init_params(5);
  const auto plan = m::visible_plan(f.tokens, {"elev"});
  EXPECT_EQ(plan.counts[0], 0u);
  const auto out = net.forward(params, f.tokens, plan, nullptr);
  EXPECT_EQ(out[0].rows(), 27);
  EXPECT_TRUE(out[0].allFinite());
}

TEST(Network, InvalidCellValuesNeverReachTheOutput) {
  Fixture f;
  m::Network<float> net(small_config(), f.layouts);
  const auto params = net.init_params(6);
  const auto plan = m::visible_plan(f.tokens, {"geo", "elev"});
  const auto a = net.forward(params, f.tokens, plan, nullptr);
  // Rewrite every invalid token's content and every masked token: output must not move.
  auto mutated = f.tokens;
  for (std::size_t r = 0; r < mutated[0].size(); ++r)
    if (!mutated[0].valid[r]) mutated[0].patches.row(r).setConstant(1e6f);
  const auto b = net.forward(params, mutated, plan, nullptr);
  EXPECT_EQ(a[0], b[0]);
  EXPECT_EQ(a[1], b[1]);
}

TEST(Network, ForwardIsDeterministic) {
  Fixture f;
  m::Network<float> net(small_config(), f.layouts);
  const auto params = net.init_params(7);
  const auto plan = m::visible_plan(f.tokens, {"geo"});
  EXPECT_EQ(net.forward(params, f.tokens, plan, nullptr)[0], net.forward(params, f.tokens, plan, nullptr)[0]);
}

TEST(Network, PlanMarkingInvalidTokenVisibleIsRejected) {
  Fixture f;
  m::Network<float> net(small_config(), f.layouts);
  const auto params = net.init_params(8);
  auto plan = m::visible_plan(f.tokens, {"geo"});
  for (std::size_t r = 0; r < f.tokens[0].size(); ++r)
    if (!f.tokens[0].valid[r]) plan.visible[0].push_back(r);
  EXPECT_THROW(net.forward(params, f.tokens, plan, nullptr), obsmae::Error);
}

TEST(Network, CheckParamsNamesMismatch) {
  Fixture f;
  m::Network<float> net(small_config(), f.layouts);
  auto cfg = small_config();
  cfg.token_dim = 32;
  m::Network<float> other(cfg, f.layouts);
  EXPECT_THROW(net.check_params(other.init_params(1)), obsmae::Error);
  EXPECT_NO_THROW(net.check_params(net.init_params(1)));
}

// Central differences through tokenizer, backbone and decoders of the tiny preset.
TEST(Network, MaskedLossGradientMatchesFiniteDifferences) {
  Fixture f;
  m::Network<double> net(m::ModelConfig::tiny(), f.layouts);
  auto params = net.init_params(9);
  auto rng = obsmae::core::make_rng(10);
  const auto plan = m::sample_mask_plan(f.tokens, 12, 1.0, rng);
  m::Network<double>::Cache cache;
  const auto pred = net.forward(params, f.tokens, plan, &cache);
  const auto loss = m::masked_mse_loss<double>(pred, f.tokens, plan);
  auto grads = params.zeros_like();
  net.backward(params, grads, cache, loss.grad);
  auto eval = [&] { return m::masked_mse_loss<double>(net.forward(params, f.tokens, plan, nullptr), f.tokens, plan, false).value; };
  std::string worst;
  const double err = obsmae::testing::max_gradient_error(params, grads, eval, 3, 1e-5, 1e-8, &worst);
  EXPECT_LT(err, 1e-3) << worst;
}

// --- Loss ----------------------------------------------------------------------------------

TEST(MaskedLoss, HandComputedCases) {
  // Two tokens of 4 cells; token 1 invalid; nothing visible.
  m::TokenSet ts;
  ts.modality = "x";
  ts.shape = {1, 1, 2, 4};
  ts.patch = 2;
  ts.patches = Mat<float>(2, 4);
  ts.patches << 1, 2, 3, 4, 0, 0, 0, 0;
  ts.valid = {1, 0};
  ts.index = {{0, 0, 0}, {0, 0, 1}};
  m::MaskPlan plan;
  plan.modalities = {"x"};
  plan.visible = {{}};
  plan.counts = {0};
  Mat<double> pred = ts.patches.cast<double>();
  EXPECT_DOUBLE_EQ(m::masked_mse_loss<double>({pred}, {ts}, plan).value, 0.0);
  pred.array() += 1.0;
  EXPECT_DOUBLE_EQ(m::masked_mse_loss<double>({pred}, {ts}, plan).value, 1.0);
  // Errors 1,2,3,4 on the valid token; the invalid token's huge error is ignored.
  pred = ts.patches.cast<double>();
  pred.row(0) << 2, 4, 6, 8;
  pred.row(1) << 100, 100, 100, 100;
  const auto l = m::masked_mse_loss<double>({pred}, {ts}, plan);
  EXPECT_DOUBLE_EQ(l.value, (1.0 + 4.0 + 9.0 + 16.0) / 4.0);
  EXPECT_EQ(l.cells, 4u);
  // Visible token 0 leaves nothing to score.
  plan.visible = {{0}};
  EXPECT_THROW(m::masked_mse_loss<double>({pred}, {ts}, plan), m::NoMaskedTokens);
}

}  // namespace
