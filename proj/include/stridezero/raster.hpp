#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stridezero/common.hpp"

namespace sz {

// Per-pixel class indices.
struct LabelImage {
  int64_t width = 0;
  int64_t height = 0;
  std::vector<uint8_t> data;

  LabelImage() = default;
  LabelImage(int64_t w, int64_t h, uint8_t fill = 0)
      : width(w), height(h), data(static_cast<size_t>(w * h), fill) {}

  uint8_t& at(int64_t y, int64_t x) { return data[static_cast<size_t>(y * width + x)]; }
  uint8_t at(int64_t y, int64_t x) const { return data[static_cast<size_t>(y * width + x)]; }
  int64_t numel() const { return width * height; }
};

// True = excluded from loss and metrics.
struct IgnoreMask {
  int64_t width = 0;
  int64_t height = 0;
  std::vector<uint8_t> data;  // 1 = ignore

  IgnoreMask() = default;
  IgnoreMask(int64_t w, int64_t h, uint8_t fill = 0)
      : width(w), height(h), data(static_cast<size_t>(w * h), fill) {}

  bool ignored(int64_t y, int64_t x) const {
    return data[static_cast<size_t>(y * width + x)] != 0;
  }
  void set(int64_t y, int64_t x, bool v) {
    data[static_cast<size_t>(y * width + x)] = v ? 1 : 0;
  }
  int64_t count_ignored() const {
    int64_t n = 0;
    for (uint8_t v : data) n += v != 0;
    return n;
  }

  // Union with another mask of the same extent.
  IgnoreMask& operator|=(const IgnoreMask& other) {
    if (other.width != width || other.height != height) {
      throw DimensionError("ignore mask extents disagree");
    }
    for (size_t i = 0; i < data.size(); ++i) data[i] = data[i] || other.data[i];
    return *this;
  }
};

}  // namespace sz
