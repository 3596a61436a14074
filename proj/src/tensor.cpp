#include "priormask/tensor.hpp"

#include <cmath>
#include <cstddef>
#include <string>

namespace priormask {

namespace {

std::size_t checked_volume(int height, int width, int channels) {
  if (height <= 0 || width <= 0 || channels <= 0) {
    throw DimensionError("feature map dims must be positive, got " +
                         std::to_string(height) + "x" + std::to_string(width) +
                         "x" + std::to_string(channels));
  }
  return static_cast<std::size_t>(height) * width * channels;
}

void require_finite(std::span<const float> values, const char* what) {
  for (float v : values) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string(what) + " contains a non-finite value");
    }
  }
}

}  // namespace

FeatureMap::FeatureMap(int height, int width, int channels)
    : height_(height),
      width_(width),
      channels_(channels),
      data_(checked_volume(height, width, channels), 0.0f) {}

FeatureMap::FeatureMap(int height, int width, int channels,
                       std::vector<float> data)
    : height_(height), width_(width), channels_(channels),
      data_(std::move(data)) {
  const std::size_t expected = checked_volume(height, width, channels);
  if (data_.size() != expected) {
    throw DimensionError(
        "feature map data length " + std::to_string(data_.size()) +
        " does not match " + std::to_string(height) + "x" +
        std::to_string(width) + "x" + std::to_string(channels));
  }
  require_finite(data_, "feature map");
}

BinaryMask::BinaryMask(int height, int width, std::vector<float> data)
    : height_(height), width_(width), data_(std::move(data)) {
  if (height <= 0 || width <= 0) {
    throw DimensionError("mask dims must be positive, got " +
                         std::to_string(height) + "x" + std::to_string(width));
  }
  const std::size_t expected = static_cast<std::size_t>(height) * width;
  if (data_.size() != expected) {
    throw DimensionError("mask data length " + std::to_string(data_.size()) +
                         " does not match " + std::to_string(height) + "x" +
                         std::to_string(width));
  }
  for (float v : data_) {
    if (v != 0.0f && v != 1.0f) {
      throw ParameterError("mask value " + std::to_string(v) +
                           " is neither 0 nor 1");
    }
  }
}

bool BinaryMask::all_zero() const noexcept {
  for (float v : data_) {
    if (v != 0.0f) return false;
  }
  return true;
}

void ProjectionWeights::validate() const {
  if (in_channels <= 0 || out_channels <= 0) {
    throw DimensionError("projection dims must be positive, got " +
                         std::to_string(in_channels) + "x" +
                         std::to_string(out_channels));
  }
  const std::size_t expected =
      static_cast<std::size_t>(in_channels) * out_channels;
  if (matrix.size() != expected) {
    throw DimensionError("projection matrix length " +
                         std::to_string(matrix.size()) + " does not match " +
                         std::to_string(in_channels) + "x" +
                         std::to_string(out_channels));
  }
  if (bias.size() != static_cast<std::size_t>(out_channels)) {
    throw DimensionError("projection bias length " +
                         std::to_string(bias.size()) + " does not match " +
                         std::to_string(out_channels) + " output channels");
  }
  require_finite(matrix, "projection matrix");
  require_finite(bias, "projection bias");
}

ProjectionWeights ProjectionWeights::identity(int channels) {
  ProjectionWeights w;
  w.in_channels = channels;
  w.out_channels = channels;
  w.matrix.assign(static_cast<std::size_t>(channels) * channels, 0.0f);
  w.bias.assign(channels, 0.0f);
  for (int c = 0; c < channels; ++c) {
    w.matrix[static_cast<std::size_t>(c) * channels + c] = 1.0f;
  }
  return w;
}

FeatureMap hadamard_mask(const FeatureMap& features, const BinaryMask& mask) {
  if (features.height() != mask.height() ||
      features.width() != mask.width()) {
    throw DimensionError(
        "hadamard_mask: features " + std::to_string(features.height()) + "x" +
        std::to_string(features.width()) + "x" +
        std::to_string(features.channels()) + " vs mask " +
        std::to_string(mask.height()) + "x" + std::to_string(mask.width()));
  }
  const int channels = features.channels();
  std::vector<float> out(features.values().size());
  std::size_t idx = 0;
  for (int y = 0; y < features.height(); ++y) {
    for (int x = 0; x < features.width(); ++x) {
      const float m = mask.at(y, x);
      const float* v = features.position(y, x);
      for (int c = 0; c < channels; ++c) {
        out[idx++] = v[c] * m;
      }
    }
  }
  return FeatureMap(features.height(), features.width(), channels,
                    std::move(out));
}

FeatureMap l2_normalize_channels(const FeatureMap& features, float epsilon) {
  if (!(epsilon > 0.0f)) {
    throw ParameterError("l2_normalize_channels: epsilon must be > 0");
  }
  const int channels = features.channels();
  std::vector<float> out(features.values().size());
  std::size_t idx = 0;
  for (int y = 0; y < features.height(); ++y) {
    for (int x = 0; x < features.width(); ++x) {
      const float* v = features.position(y, x);
      double sq = 0.0;
      for (int c = 0; c < channels; ++c) {
        sq += static_cast<double>(v[c]) * v[c];
      }
      const double norm = std::sqrt(sq);
      const double inv =
          1.0 / std::max(norm, static_cast<double>(epsilon));
      for (int c = 0; c < channels; ++c) {
        out[idx++] = static_cast<float>(v[c] * inv);
      }
    }
  }
  return FeatureMap(features.height(), features.width(), channels,
                    std::move(out));
}

FeatureMap avg_pool_2x2(const FeatureMap& features) {
  if (features.height() < 2 || features.width() < 2) {
    throw DimensionError("avg_pool_2x2: need at least 2x2 spatial dims, got " +
                         std::to_string(features.height()) + "x" +
                         std::to_string(features.width()));
  }
  const int out_h = features.height() / 2;
  const int out_w = features.width() / 2;
  const int channels = features.channels();
  std::vector<float> out(
      static_cast<std::size_t>(out_h) * out_w * channels);
  std::size_t idx = 0;
  for (int y = 0; y < out_h; ++y) {
    for (int x = 0; x < out_w; ++x) {
      const float* a = features.position(2 * y, 2 * x);
      const float* b = features.position(2 * y, 2 * x + 1);
      const float* c = features.position(2 * y + 1, 2 * x);
      const float* d = features.position(2 * y + 1, 2 * x + 1);
      for (int ch = 0; ch < channels; ++ch) {
        const double sum = static_cast<double>(a[ch]) + b[ch] + c[ch] + d[ch];
        out[idx++] = static_cast<float>(sum * 0.25);
      }
    }
  }
  return FeatureMap(out_h, out_w, channels, std::move(out));
}

FeatureMap project_channels(const FeatureMap& features,
                            const ProjectionWeights& weights) {
  weights.validate();
  if (features.channels() != weights.in_channels) {
    throw DimensionError("project_channels: features have " +
                         std::to_string(features.channels()) +
                         " channels, projection expects " +
                         std::to_string(weights.in_channels));
  }
  const int in = weights.in_channels;
  const int out_ch = weights.out_channels;
  std::vector<float> out(
      static_cast<std::size_t>(features.positions()) * out_ch);
  std::size_t idx = 0;
  for (int y = 0; y < features.height(); ++y) {
    for (int x = 0; x < features.width(); ++x) {
      const float* v = features.position(y, x);
      for (int o = 0; o < out_ch; ++o) {
        double acc = static_cast<double>(weights.bias[o]);
        for (int i = 0; i < in; ++i) {
          acc += static_cast<double>(v[i]) *
                 weights.matrix[static_cast<std::size_t>(i) * out_ch + o];
        }
        out[idx++] = static_cast<float>(acc);
      }
    }
  }
  return FeatureMap(features.height(), features.width(), out_ch,
                    std::move(out));
}

}  // namespace priormask
