// Copyright Contributors to the gsloc Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace gsloc {

/// Dense row-major H x W x C image of doubles.
class Image {
  public:
    Image() = default;
    Image(int height, int width, std::size_t channels)
        : height_(height), width_(width), channels_(channels),
          data_(static_cast<std::size_t>(height) * static_cast<std::size_t>(width) * channels, 0.0) {}

    int height() const { return height_; }
    int width() const { return width_; }
    std::size_t channels() const { return channels_; }
    std::size_t pixel_count() const { return static_cast<std::size_t>(height_) * static_cast<std::size_t>(width_); }

    std::span<double> at(int row, int col) { return {data_.data() + offset(row, col), channels_}; }
    std::span<const double> at(int row, int col) const { return {data_.data() + offset(row, col), channels_}; }

    std::span<double> data() { return data_; }
    std::span<const double> data() const { return data_; }

  private:
    std::size_t offset(int row, int col) const {
        return (static_cast<std::size_t>(row) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(col)) *
               channels_;
    }

    int height_ = 0;
    int width_ = 0;
    std::size_t channels_ = 0;
    std::vector<double> data_;
};

using ColorImage = Image;   // 3 channels in [0, 1]
using FeatureImage = Image; // D channels

} // namespace gsloc
