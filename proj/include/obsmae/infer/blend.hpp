#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "obsmae/core/cube.hpp"
#include "obsmae/core/error.hpp"
#include "obsmae/core/grid.hpp"

namespace obsmae::infer {

/// Hann taper of length n sampled at cell centres: sin^2(pi (i + 1/2) / n). Strictly positive,
/// so every cell a tile touches gets some weight.
inline std::vector<double> hann_window(std::size_t n) {
  require(n >= 1, "hann_window: length must be >= 1");
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double s = std::sin(std::numbers::pi * (static_cast<double>(i) + 0.5) / static_cast<double>(n));
    w[i] = s * s;
  }
  return w;
}

/// Accumulates weighted tiles into planes x rows x cols and normalises by the weight sum.
/// Columns wrap when `wrap_cols` is set (global longitude).
class HannBlender {
 public:
  HannBlender(std::size_t planes, std::size_t rows, std::size_t cols, bool wrap_cols = true)
      : planes_(planes), rows_(rows), cols_(cols), wrap_(wrap_cols), num_(planes * rows * cols, 0.0),
        den_(rows * cols, 0.0) {}

  /// values: planes x h x w, C-order.
  void add(std::span<const double> values, std::size_t row0, std::size_t col0, std::size_t h, std::size_t w) {
    require(values.size() == planes_ * h * w, "hann_blend: tile size does not match its extent");
    require(row0 + h <= rows_, "hann_blend: tile rows overflow the target grid");
    require(wrap_ || col0 + w <= cols_, "hann_blend: tile columns overflow the target grid");
    const auto wy = hann_window(h), wx = hann_window(w);
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        const double wt = wy[y] * wx[x];
        const std::size_t cell = (row0 + y) * cols_ + (col0 + x) % cols_;
        den_[cell] += wt;
        for (std::size_t p = 0; p < planes_; ++p) num_[p * rows_ * cols_ + cell] += wt * values[(p * h + y) * w + x];
      }
  }

  bool covered(std::size_t row, std::size_t col) const { return den_[row * cols_ + col] > 0.0; }

  /// Normalised field; throws naming the first uncovered cell.
  std::vector<double> result(const core::GridSpec* grid = nullptr) const {
    std::vector<double> out(num_.size());
    for (std::size_t cell = 0; cell < den_.size(); ++cell) {
      if (!(den_[cell] > 0.0)) {
        const std::size_t r = cell / cols_, c = cell % cols_;
        std::ostringstream msg;
        msg << "hann_blend: cell (row " << r << ", col " << c << ")";
        if (grid) msg << " at lat " << grid->lat_of(r) << ", lon " << grid->lon_of(c);
        msg << " is not covered by any tile";
        throw Error(msg.str());
      }
      for (std::size_t p = 0; p < planes_; ++p)
        out[p * rows_ * cols_ + cell] = num_[p * rows_ * cols_ + cell] / den_[cell];
    }
    return out;
  }

  std::size_t planes() const { return planes_; }
  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

 private:
  std::size_t planes_, rows_, cols_;
  bool wrap_;
  std::vector<double> num_, den_;
};

struct PlacedTile {
  core::ObservationCube field;  // dense (c, t, h, w)
  std::size_t row0 = 0, col0 = 0;
};

/// Blends dense tiles of one modality into a global cube over the grid.
inline core::ObservationCube hann_blend(const std::vector<PlacedTile>& tiles, const core::GridSpec& grid) {
  require(!tiles.empty(), "hann_blend: no tiles");
  const auto& s0 = tiles.front().field.shape();
  HannBlender b(s0.c * s0.t, grid.n_lat, grid.n_lon, true);
  std::vector<double> buf;
  for (const auto& t : tiles) {
    const auto& s = t.field.shape();
    require(s.c == s0.c && s.t == s0.t, "hann_blend: tiles disagree on channels or frames");
    require(t.field.valid_count() == s.size(), "hann_blend: tiles must be dense");
    buf.assign(t.field.values().begin(), t.field.values().end());
    b.add(buf, t.row0, t.col0, s.h, s.w);
  }
  const auto blended = b.result(&grid);
  core::ObservationCube out(tiles.front().field.modality(), {s0.c, s0.t, grid.n_lat, grid.n_lon},
                            tiles.front().field.times());
  const std::size_t plane = grid.n_lat * grid.n_lon;
  for (std::size_t p = 0; p < s0.c * s0.t; ++p)
    for (std::size_t i = 0; i < plane; ++i)
      out.set(p / s0.t, p % s0.t, i / grid.n_lon, i % grid.n_lon, static_cast<float>(blended[p * plane + i]));
  return out;
}

/// Tile origins covering the grid: rows at multiples of stride plus a final row flush with the
/// bottom edge; columns at multiples of stride around the full circle.
inline std::vector<std::pair<std::size_t, std::size_t>> tile_origins(const core::GridSpec& g, std::size_t stride) {
  require(stride >= 1 && stride <= g.window, "mosaic: stride must lie in [1, window]");
  require(g.window <= g.n_lat, "mosaic: window taller than the grid");
  std::vector<std::size_t> rows;
  for (std::size_t r = 0; r + g.window <= g.n_lat; r += stride) rows.push_back(r);
  if (rows.back() + g.window < g.n_lat) rows.push_back(g.n_lat - g.window);
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (auto r : rows)
    for (std::size_t c = 0; c < g.n_lon; c += stride) out.push_back({r, c});
  return out;
}

}  // namespace obsmae::infer
