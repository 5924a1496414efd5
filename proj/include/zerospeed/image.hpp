#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "error.hpp"

namespace zerospeed {

// Row-major raster with one or more interleaved channels. Owning, value
// semantics; copying copies the pixels.
template <typename T, int Channels = 1>
class Image {
 public:
  using value_type = T;
  static constexpr int channels = Channels;

  Image() = default;

  Image(int width, int height, T fill = T{}) : width_(width), height_(height) {
    if (width < 1 || height < 1) {
      throw DimensionError("image dimensions must be >= 1, got " +
                           std::to_string(width) + "x" + std::to_string(height));
    }
    data_.assign(static_cast<std::size_t>(width) * height * Channels, fill);
  }

  Image(int width, int height, std::vector<T> data) : width_(width), height_(height), data_(std::move(data)) {
    if (width < 1 || height < 1) {
      throw DimensionError("image dimensions must be >= 1, got " +
                           std::to_string(width) + "x" + std::to_string(height));
    }
    if (data_.size() != static_cast<std::size_t>(width) * height * Channels) {
      throw DimensionError("pixel buffer size does not match " + std::to_string(width) + "x" +
                           std::to_string(height));
    }
  }

  // Resize without initializing: pixel contents are unspecified afterwards.
  // Storage is kept when the size does not grow.
  void reshape(int width, int height) {
    if (width < 1 || height < 1) {
      throw DimensionError("image dimensions must be >= 1, got " +
                           std::to_string(width) + "x" + std::to_string(height));
    }
    width_ = width;
    height_ = height;
    data_.resize(static_cast<std::size_t>(width) * height * Channels);
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  bool empty() const noexcept { return data_.empty(); }
  std::size_t size() const noexcept { return data_.size(); }

  T& operator()(int x, int y, int c = 0) noexcept {
    return data_[(static_cast<std::size_t>(y) * width_ + x) * Channels + c];
  }
  const T& operator()(int x, int y, int c = 0) const noexcept {
    return data_[(static_cast<std::size_t>(y) * width_ + x) * Channels + c];
  }

  std::span<T> row(int y) noexcept {
    return {data_.data() + static_cast<std::size_t>(y) * width_ * Channels,
            static_cast<std::size_t>(width_) * Channels};
  }
  std::span<const T> row(int y) const noexcept {
    return {data_.data() + static_cast<std::size_t>(y) * width_ * Channels,
            static_cast<std::size_t>(width_) * Channels};
  }

  std::span<T> pixels() noexcept { return data_; }
  std::span<const T> pixels() const noexcept { return data_; }
  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }

  friend bool operator==(const Image&, const Image&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<T> data_;
};

using GrayImage = Image<std::uint8_t, 1>;
using RgbImage = Image<std::uint8_t, 3>;
using FloatImage = Image<float, 1>;

struct PixelOffset {
  int x = 0;
  int y = 0;
  friend bool operator==(const PixelOffset&, const PixelOffset&) = default;
};

}  // namespace zerospeed
