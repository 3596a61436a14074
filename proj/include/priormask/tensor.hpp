#pragma once

#include <span>
#include <vector>

#include "priormask/errors.hpp"

namespace priormask {

/// Dense (height, width, channels) grid of 32-bit floats, row-major with
/// channels fastest, so the vector at one spatial position is contiguous.
/// Immutable after construction; construction rejects non-finite values.
class FeatureMap {
 public:
  FeatureMap(int height, int width, int channels);
  FeatureMap(int height, int width, int channels, std::vector<float> data);

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  int channels() const noexcept { return channels_; }
  int positions() const noexcept { return height_ * width_; }

  std::span<const float> values() const noexcept { return data_; }

  // Pointer to the contiguous channel vector at spatial position (y, x).
  const float* position(int y, int x) const noexcept {
    return data_.data() +
           (static_cast<std::size_t>(y) * width_ + x) * channels_;
  }

  float at(int y, int x, int c) const noexcept { return position(y, x)[c]; }

 private:
  int height_;
  int width_;
  int channels_;
  std::vector<float> data_;
};

/// Rank-2 {0, 1} mask over a support feature grid.
class BinaryMask {
 public:
  BinaryMask(int height, int width, std::vector<float> data);

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  std::span<const float> values() const noexcept { return data_; }
  float at(int y, int x) const noexcept {
    return data_[static_cast<std::size_t>(y) * width_ + x];
  }
  bool all_zero() const noexcept;

 private:
  int height_;
  int width_;
  std::vector<float> data_;
};

/// Per-position linear channel map (a 1x1 convolution): in -> out channels.
struct ProjectionWeights {
  int in_channels = 0;
  int out_channels = 0;
  std::vector<float> matrix;  // in_channels x out_channels, row-major
  std::vector<float> bias;    // out_channels

  void validate() const;
  static ProjectionWeights identity(int channels);
};

/// out[y, x, c] = features[y, x, c] * mask[y, x].
FeatureMap hadamard_mask(const FeatureMap& features, const BinaryMask& mask);

/// Per-position L2 normalization: v -> v / max(||v||, epsilon).
/// Zero vectors map to zero vectors rather than NaN.
FeatureMap l2_normalize_channels(const FeatureMap& features,
                                 float epsilon = 1e-12f);

/// 2x2 average pooling with stride 2. A trailing odd row/column is dropped.
FeatureMap avg_pool_2x2(const FeatureMap& features);

/// Per-position matrix-vector product plus bias; spatial dims unchanged.
FeatureMap project_channels(const FeatureMap& features,
                            const ProjectionWeights& weights);

}  // namespace priormask
