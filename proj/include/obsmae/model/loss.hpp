#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "obsmae/core/error.hpp"
#include "obsmae/model/mask.hpp"
#include "obsmae/model/tokens.hpp"

namespace obsmae::model {

/// Thrown when a plan leaves no masked, fully valid token to score; callers resample.
class NoMaskedTokens : public Error {
 public:
  using Error::Error;
};

template <class S>
struct MaskedLoss {
  double value = 0.0;
  std::size_t cells = 0;
  std::vector<double> per_modality_sse;  // squared-error sum per modality
  std::vector<std::size_t> per_modality_cells;
  std::vector<Mat<S>> grad;  // dLoss/dprediction, same shapes as the predictions
};

/// Mean squared error over cells of tokens that are valid and not visible to the encoder.
template <class S>
MaskedLoss<S> masked_mse_loss(const std::vector<Mat<S>>& pred, const std::vector<TokenSet>& target,
                              const MaskPlan& plan, bool want_grad = true) {
  require(pred.size() == target.size() && plan.modalities.size() == target.size(),
          "masked_mse_loss: prediction, target and plan disagree on modality count");
  MaskedLoss<S> out;
  out.per_modality_sse.assign(target.size(), 0.0);
  out.per_modality_cells.assign(target.size(), 0);
  std::vector<std::vector<std::size_t>> rows(target.size());
  for (std::size_t m = 0; m < target.size(); ++m) {
    const auto& ts = target[m];
    require(static_cast<std::size_t>(pred[m].rows()) == ts.size() &&
                static_cast<std::size_t>(pred[m].cols()) == ts.patch_len(),
            "masked_mse_loss: prediction and target shapes differ for " + ts.modality);
    std::vector<std::uint8_t> vis(ts.size(), 0);
    for (auto r : plan.visible[m]) vis[r] = 1;
    for (std::size_t r = 0; r < ts.size(); ++r)
      if (ts.valid[r] && !vis[r]) rows[m].push_back(r);
    out.cells += rows[m].size() * ts.patch_len();
  }
  if (out.cells == 0) throw NoMaskedTokens("masked_mse_loss: no masked valid tokens to score");
  const double inv_n = 1.0 / static_cast<double>(out.cells);
  double sse = 0.0;
  for (std::size_t m = 0; m < target.size(); ++m) {
    if (want_grad) out.grad.push_back(Mat<S>::Zero(pred[m].rows(), pred[m].cols()));
    for (auto r : rows[m]) {
      const auto ri = static_cast<Eigen::Index>(r);
      const Mat<S> d = pred[m].row(ri) - target[m].patches.row(ri).template cast<S>();
      const double e = static_cast<double>(d.squaredNorm());
      out.per_modality_sse[m] += e;
      sse += e;
      if (want_grad) out.grad[m].row(ri) = d * static_cast<S>(2.0 * inv_n);
    }
    out.per_modality_cells[m] = rows[m].size() * target[m].patch_len();
  }
  out.value = sse * inv_n;
  return out;
}

}  // namespace obsmae::model
