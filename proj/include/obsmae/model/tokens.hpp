#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "obsmae/core/cube.hpp"
#include "obsmae/core/error.hpp"
#include "obsmae/model/params.hpp"

namespace obsmae::model {

/// Position of a token: frame and patch row/column inside the window.
struct TokenIndex {
  std::size_t t = 0, i = 0, j = 0;
  bool operator==(const TokenIndex&) const = default;
};

/// Raw (pre-projection) tokens of one modality. Row n of `patches` is the flattened
/// (channel, y, x) block of token n; tokens are ordered by (t, i, j).
struct TokenSet {
  std::string modality;
  core::Shape4 shape;
  std::size_t patch = 16;
  bool temporal = true;
  Mat<float> patches;
  std::vector<std::uint8_t> valid;
  std::vector<TokenIndex> index;

  std::size_t size() const { return index.size(); }
  std::size_t patch_len() const { return shape.c * patch * patch; }
  std::size_t side_i() const { return shape.h / patch; }
  std::size_t side_j() const { return shape.w / patch; }
  std::size_t valid_count() const {
    std::size_t n = 0;
    for (auto v : valid) n += v;
    return n;
  }
};

/// Non-overlapping patch tokens. Invalid cells are zero-filled and mark their token invalid.
inline TokenSet patchify(const core::ObservationCube& cube, std::size_t patch, bool temporal = true) {
  const auto& s = cube.shape();
  require(patch > 0 && s.h % patch == 0 && s.w % patch == 0,
          "patchify: window " + std::to_string(s.h) + "x" + std::to_string(s.w) + " not divisible by patch " +
              std::to_string(patch));
  TokenSet ts;
  ts.modality = cube.modality();
  ts.shape = s;
  ts.patch = patch;
  ts.temporal = temporal;
  const std::size_t ni = s.h / patch, nj = s.w / patch, n = s.t * ni * nj, len = s.c * patch * patch;
  ts.patches = Mat<float>::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(len));
  ts.valid.assign(n, 1);
  ts.index.reserve(n);
  std::size_t row = 0;
  for (std::size_t t = 0; t < s.t; ++t)
    for (std::size_t i = 0; i < ni; ++i)
      for (std::size_t j = 0; j < nj; ++j, ++row) {
        ts.index.push_back({t, i, j});
        std::size_t col = 0;
        for (std::size_t c = 0; c < s.c; ++c)
          for (std::size_t y = 0; y < patch; ++y)
            for (std::size_t x = 0; x < patch; ++x, ++col) {
              const std::size_t yy = i * patch + y, xx = j * patch + x;
              if (cube.valid(c, t, yy, xx))
                ts.patches(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(col)) = cube.value(c, t, yy, xx);
              else
                ts.valid[row] = 0;
            }
      }
  return ts;
}

/// Inverse of patchify for a dense prediction: every cell of the result is valid.
template <class S>
core::ObservationCube unpatchify(const Mat<S>& patches, const TokenSet& layout, const std::vector<core::Hour>& times) {
  const auto& s = layout.shape;
  require(static_cast<std::size_t>(patches.rows()) == layout.size() &&
              static_cast<std::size_t>(patches.cols()) == layout.patch_len(),
          "unpatchify: prediction shape does not match token layout of " + layout.modality);
  core::ObservationCube out(layout.modality, s, times);
  const std::size_t p = layout.patch;
  for (std::size_t n = 0; n < layout.size(); ++n) {
    const auto& ix = layout.index[n];
    std::size_t col = 0;
    for (std::size_t c = 0; c < s.c; ++c)
      for (std::size_t y = 0; y < p; ++y)
        for (std::size_t x = 0; x < p; ++x, ++col)
          out.set(c, ix.t, ix.i * p + y, ix.j * p + x,
                  static_cast<float>(patches(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(col))));
  }
  return out;
}

/// Fixed sinusoidal features: each axis gets dim/axes columns of interleaved (sin, cos) pairs
/// at geometrically spaced frequencies. positions is N rows of `axes` coordinates.
inline Mat<double> posenc_sincos(const std::vector<std::vector<double>>& positions, std::size_t dim) {
  require(!positions.empty(), "posenc_sincos: no positions");
  const std::size_t axes = positions.front().size();
  require(axes >= 1, "posenc_sincos: need at least one axis");
  require(dim % (2 * axes) == 0, "posenc_sincos: dim " + std::to_string(dim) + " not divisible into " +
                                     std::to_string(axes) + " sin/cos axis blocks");
  const std::size_t per_axis = dim / axes, pairs = per_axis / 2;
  Mat<double> out(static_cast<Eigen::Index>(positions.size()), static_cast<Eigen::Index>(dim));
  for (std::size_t n = 0; n < positions.size(); ++n) {
    require(positions[n].size() == axes, "posenc_sincos: ragged positions");
    for (std::size_t a = 0; a < axes; ++a)
      for (std::size_t k = 0; k < pairs; ++k) {
        const double omega = std::pow(10000.0, -static_cast<double>(k) / static_cast<double>(pairs));
        const double v = positions[n][a] * omega;
        const auto col = static_cast<Eigen::Index>(a * per_axis + 2 * k);
        out(static_cast<Eigen::Index>(n), col) = std::sin(v);
        out(static_cast<Eigen::Index>(n), col + 1) = std::cos(v);
      }
  }
  return out;
}

/// posenc_sincos over (t, i, j) for temporal tokens or (i, j) for static ones, computed on the
/// largest admissible width and zero-padded to dim.
inline Mat<double> token_posenc(const std::vector<TokenIndex>& idx, bool temporal, std::size_t dim) {
  const std::size_t axes = temporal ? 3 : 2;
  const std::size_t usable = dim / (2 * axes) * (2 * axes);
  require(usable > 0, "token_posenc: dim too small for the positional axes");
  std::vector<std::vector<double>> pos;
  pos.reserve(idx.size());
  for (const auto& ix : idx) {
    if (temporal)
      pos.push_back({static_cast<double>(ix.t), static_cast<double>(ix.i), static_cast<double>(ix.j)});
    else
      pos.push_back({static_cast<double>(ix.i), static_cast<double>(ix.j)});
  }
  Mat<double> out = Mat<double>::Zero(static_cast<Eigen::Index>(idx.size()), static_cast<Eigen::Index>(dim));
  if (!idx.empty()) out.leftCols(static_cast<Eigen::Index>(usable)) = posenc_sincos(pos, usable);
  return out;
}

}  // namespace obsmae::model
