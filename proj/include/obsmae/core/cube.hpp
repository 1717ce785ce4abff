#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "obsmae/core/error.hpp"

namespace obsmae::core {

/// Hours since 1970-01-01T00:00Z.
using Hour = std::int64_t;

inline constexpr float kMissing = std::numeric_limits<float>::quiet_NaN();

/// Shape of a (channels, time, lat, lon) tensor.
struct Shape4 {
  std::size_t c = 0, t = 0, h = 0, w = 0;
  std::size_t size() const { return c * t * h * w; }
  bool operator==(const Shape4&) const = default;
};

inline std::string to_string(const Shape4& s) {
  return "(" + std::to_string(s.c) + "," + std::to_string(s.t) + "," + std::to_string(s.h) + "," +
         std::to_string(s.w) + ")";
}

/// One modality's values and validity over a time span and spatial extent. C-order (c, t, y, x).
class ObservationCube {
 public:
  ObservationCube() = default;

  ObservationCube(std::string modality, Shape4 shape, std::vector<Hour> times)
      : modality_(std::move(modality)),
        shape_(shape),
        times_(std::move(times)),
        values_(shape.size(), kMissing),
        valid_(shape.size(), 0) {
    require(times_.size() == shape_.t, "cube " + modality_ + ": times length differs from T");
    for (std::size_t i = 1; i < times_.size(); ++i)
      require(times_[i] == times_[i - 1] + 1, "cube " + modality_ + ": times must increase by 1 hour");
  }

  const std::string& modality() const { return modality_; }
  const Shape4& shape() const { return shape_; }
  const std::vector<Hour>& times() const { return times_; }

  std::size_t index(std::size_t c, std::size_t t, std::size_t y, std::size_t x) const {
    return ((c * shape_.t + t) * shape_.h + y) * shape_.w + x;
  }

  float value(std::size_t c, std::size_t t, std::size_t y, std::size_t x) const {
    return values_[index(c, t, y, x)];
  }
  bool valid(std::size_t c, std::size_t t, std::size_t y, std::size_t x) const {
    return valid_[index(c, t, y, x)] != 0;
  }

  void set(std::size_t c, std::size_t t, std::size_t y, std::size_t x, float v) {
    const auto i = index(c, t, y, x);
    values_[i] = v;
    valid_[i] = 1;
  }
  void invalidate(std::size_t i) {
    values_[i] = kMissing;
    valid_[i] = 0;
  }
  void invalidate(std::size_t c, std::size_t t, std::size_t y, std::size_t x) { invalidate(index(c, t, y, x)); }

  std::vector<float>& values() { return values_; }
  const std::vector<float>& values() const { return values_; }
  std::vector<std::uint8_t>& valid_mask() { return valid_; }
  const std::vector<std::uint8_t>& valid_mask() const { return valid_; }

  std::size_t valid_count() const {
    std::size_t n = 0;
    for (auto v : valid_) n += v;
    return n;
  }

  double valid_fraction() const {
    return valid_.empty() ? 0.0 : static_cast<double>(valid_count()) / static_cast<double>(valid_.size());
  }

 private:
  std::string modality_;
  Shape4 shape_;
  std::vector<Hour> times_;
  std::vector<float> values_;
  std::vector<std::uint8_t> valid_;
};

inline std::vector<Hour> hour_range(Hour start, std::size_t n) {
  std::vector<Hour> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = start + static_cast<Hour>(i);
  return out;
}

}  // namespace obsmae::core
