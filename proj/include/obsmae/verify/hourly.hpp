#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "obsmae/core/cube.hpp"
#include "obsmae/core/error.hpp"

namespace obsmae::verify {

/// Mean absolute error per hour offset within a block, pooled over blocks, channels and cells
/// valid in the reference. Mosaics and references pair up by index.
inline std::vector<double> hourly_error_profile(const std::vector<core::ObservationCube>& mosaics,
                                                const std::vector<core::ObservationCube>& reference,
                                                std::size_t block_length = 12) {
  require(!mosaics.empty() && mosaics.size() == reference.size(),
          "hourly_error_profile: need one reference per mosaic");
  std::vector<double> sum(block_length, 0.0);
  std::vector<std::size_t> n(block_length, 0);
  for (std::size_t b = 0; b < mosaics.size(); ++b) {
    const auto& m = mosaics[b];
    const auto& r = reference[b];
    const auto& s = m.shape();
    require(s.t == block_length && m.times().front() % static_cast<core::Hour>(block_length) == 0,
            "hourly_error_profile: mosaic " + std::to_string(b) + " is not aligned to a " +
                std::to_string(block_length) + "-hour block");
    require(r.times() == m.times() && r.shape().c == s.c && r.shape().h == s.h && r.shape().w == s.w,
            "hourly_error_profile: reference " + std::to_string(b) + " does not match its mosaic");
    for (std::size_t c = 0; c < s.c; ++c)
      for (std::size_t t = 0; t < s.t; ++t)
        for (std::size_t y = 0; y < s.h; ++y)
          for (std::size_t x = 0; x < s.w; ++x) {
            if (!r.valid(c, t, y, x)) continue;
            sum[t] += std::abs(static_cast<double>(m.value(c, t, y, x)) - r.value(c, t, y, x));
            ++n[t];
          }
  }
  std::vector<double> out(block_length);
  for (std::size_t t = 0; t < block_length; ++t) {
    require(n[t] > 0, "hourly_error_profile: no reference cells at hour offset " + std::to_string(t));
    out[t] = sum[t] / static_cast<double>(n[t]);
  }
  return out;
}

}  // namespace obsmae::verify
