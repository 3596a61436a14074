#include "priormask/noise.hpp"

#include <cmath>
#include <cstddef>
#include <string>

#include "priormask/rng.hpp"

namespace priormask {

namespace {

struct RectifyDetail {
  std::vector<float> pre_activation;  // z1, before the ReLU
  std::vector<float> hidden;          // relu(z1)
  std::vector<float> values;          // rectifier output
};

RectifyDetail rectify_detail(std::span<const float> input,
                             const NsmWeights& w) {
  w.validate();
  if (static_cast<int>(input.size()) != w.s_positions) {
    throw DimensionError("rectify: input length " +
                         std::to_string(input.size()) +
                         " does not match s_positions " +
                         std::to_string(w.s_positions));
  }
  const int s = w.s_positions;
  const int h = w.hidden;
  RectifyDetail out;
  out.pre_activation.resize(h);
  out.hidden.resize(h);
  for (int k = 0; k < h; ++k) {
    double acc = static_cast<double>(w.b1[k]);
    for (int j = 0; j < s; ++j) {
      acc += static_cast<double>(input[j]) *
             w.w1[static_cast<std::size_t>(j) * h + k];
    }
    const float z = static_cast<float>(acc);
    out.pre_activation[k] = z;
    out.hidden[k] = z > 0.0f ? z : 0.0f;
  }
  out.values.resize(s);
  for (int j = 0; j < s; ++j) {
    double acc = static_cast<double>(w.b2[j]);
    for (int k = 0; k < h; ++k) {
      acc += static_cast<double>(out.hidden[k]) *
             w.w2[static_cast<std::size_t>(k) * s + j];
    }
    out.values[j] = static_cast<float>(acc);
  }
  return out;
}

}  // namespace

void NsmWeights::validate() const {
  if (s_positions <= 0 || hidden <= 0) {
    throw DimensionError("rectifier weights dims must be positive, got s=" +
                         std::to_string(s_positions) + " hidden=" +
                         std::to_string(hidden));
  }
  const auto s = static_cast<std::size_t>(s_positions);
  const auto h = static_cast<std::size_t>(hidden);
  if (w1.size() != s * h || b1.size() != h || w2.size() != h * s ||
      b2.size() != s) {
    throw DimensionError("rectifier weight array lengths do not match s=" +
                         std::to_string(s_positions) + " hidden=" +
                         std::to_string(hidden));
  }
  for (const auto* vec : {&w1, &b1, &w2, &b2}) {
    for (float v : *vec) {
      if (!std::isfinite(v)) {
        throw NumericError("rectifier weights contain a non-finite value");
      }
    }
  }
}

std::vector<float> concentrate(const CorrSlice& slice) {
  slice.validate();
  const int q = slice.q_positions();
  const int s = slice.s_positions;
  std::vector<double> sums(s, 0.0);
  for (int i = 0; i < q; ++i) {
    const float* row = slice.data.data() + static_cast<std::size_t>(i) * s;
    for (int j = 0; j < s; ++j) {
      sums[j] += row[j];
    }
  }
  std::vector<float> out(s);
  for (int j = 0; j < s; ++j) {
    out[j] = static_cast<float>(sums[j] / q);
  }
  return out;
}

Rectifier rectify(std::span<const float> input, const NsmWeights& weights) {
  return Rectifier{rectify_detail(input, weights).values};
}

PriorChannel noise_filter(const CorrSlice& slice, const Rectifier& rectifier) {
  slice.validate();
  if (static_cast<int>(rectifier.values.size()) != slice.s_positions) {
    throw DimensionError("noise_filter: rectifier length " +
                         std::to_string(rectifier.values.size()) +
                         " does not match slice s_positions " +
                         std::to_string(slice.s_positions));
  }
  const int q = slice.q_positions();
  const int s = slice.s_positions;
  PriorChannel out;
  out.height = slice.height;
  out.width = slice.width;
  out.data.resize(q);
  for (int i = 0; i < q; ++i) {
    const float* row = slice.data.data() + static_cast<std::size_t>(i) * s;
    double acc = 0.0;
    for (int j = 0; j < s; ++j) {
      acc += static_cast<double>(row[j]) * rectifier.values[j];
    }
    out.data[i] = static_cast<float>(acc);
  }
  return out;
}

NsmWeights init_nsm_weights(int s_positions, int hidden, std::uint64_t seed) {
  if (s_positions <= 0 || hidden <= 0) {
    throw ParameterError("init_nsm_weights: dims must be positive");
  }
  NsmWeights w;
  w.s_positions = s_positions;
  w.hidden = hidden;
  const auto s = static_cast<std::size_t>(s_positions);
  const auto h = static_cast<std::size_t>(hidden);
  SplitMix64 rng(seed);
  const double bound1 = 1.0 / std::sqrt(static_cast<double>(s_positions));
  const double bound2 = 1.0 / std::sqrt(static_cast<double>(hidden));
  w.w1.resize(s * h);
  for (auto& v : w.w1) {
    v = static_cast<float>(rng.next_double(-bound1, bound1));
  }
  w.b1.assign(h, 0.0f);
  w.w2.resize(h * s);
  for (auto& v : w.w2) {
    v = static_cast<float>(rng.next_double(-bound2, bound2));
  }
  w.b2.assign(s, 0.0f);
  return w;
}

ProjectionWeights init_projection_weights(int in_channels, int out_channels,
                                          std::uint64_t seed) {
  if (in_channels <= 0 || out_channels <= 0) {
    throw ParameterError("init_projection_weights: dims must be positive");
  }
  ProjectionWeights w;
  w.in_channels = in_channels;
  w.out_channels = out_channels;
  SplitMix64 rng(seed);
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_channels));
  w.matrix.resize(static_cast<std::size_t>(in_channels) * out_channels);
  for (auto& v : w.matrix) {
    v = static_cast<float>(rng.next_double(-bound, bound));
  }
  w.bias.assign(out_channels, 0.0f);
  return w;
}

NsmGradients nsm_gradients(const CorrSlice& slice, const NsmWeights& weights,
                           const PriorChannel& target) {
  slice.validate();
  weights.validate();
  target.validate();
  if (target.positions() != slice.q_positions()) {
    throw DimensionError("fit: target has " +
                         std::to_string(target.positions()) +
                         " positions, slice has " +
                         std::to_string(slice.q_positions()));
  }
  if (weights.s_positions != slice.s_positions) {
    throw DimensionError("fit: weights expect " +
                         std::to_string(weights.s_positions) +
                         " support positions, slice has " +
                         std::to_string(slice.s_positions));
  }
  const int q = slice.q_positions();
  const int s = slice.s_positions;
  const int h = weights.hidden;

  // Forward through the 32-bit inference path.
  const std::vector<float> compressed = concentrate(slice);
  const RectifyDetail det = rectify_detail(compressed, weights);
  const PriorChannel output = noise_filter(slice, Rectifier{det.values});

  NsmGradients g;
  g.w1.assign(weights.w1.size(), 0.0);
  g.b1.assign(weights.b1.size(), 0.0);
  g.w2.assign(weights.w2.size(), 0.0);
  g.b2.assign(weights.b2.size(), 0.0);

  // d(loss)/d(output) and the loss itself.
  std::vector<double> grad_output(q);
  double loss = 0.0;
  for (int i = 0; i < q; ++i) {
    const double r = static_cast<double>(output.data[i]) - target.data[i];
    loss += r * r;
    grad_output[i] = 2.0 * r / q;
  }
  loss /= q;
  if (!std::isfinite(loss)) {
    throw NumericError("fit: surrogate loss is non-finite (loss=" +
                       std::to_string(loss) + ")");
  }
  g.loss = loss;

  // Backprop through the weighted aggregation: grad_rectifier = slice^T *
  // grad_output.
  std::vector<double> grad_rect(s, 0.0);
  for (int i = 0; i < q; ++i) {
    const float* row = slice.data.data() + static_cast<std::size_t>(i) * s;
    const double go = grad_output[i];
    for (int j = 0; j < s; ++j) {
      grad_rect[j] += go * row[j];
    }
  }

  // Second layer.
  std::vector<double> grad_hidden(h, 0.0);
  for (int j = 0; j < s; ++j) {
    g.b2[j] = grad_rect[j];
  }
  for (int k = 0; k < h; ++k) {
    const double hk = det.hidden[k];
    double acc = 0.0;
    for (int j = 0; j < s; ++j) {
      const std::size_t idx = static_cast<std::size_t>(k) * s + j;
      g.w2[idx] = hk * grad_rect[j];
      acc += static_cast<double>(weights.w2[idx]) * grad_rect[j];
    }
    grad_hidden[k] = acc;
  }

  // ReLU mask uses the same pre-activations the forward pass saw.
  for (int k = 0; k < h; ++k) {
    const double gz =
        det.pre_activation[k] > 0.0f ? grad_hidden[k] : 0.0;
    g.b1[k] = gz;
    for (int j = 0; j < s; ++j) {
      g.w1[static_cast<std::size_t>(j) * h + k] =
          static_cast<double>(compressed[j]) * gz;
    }
  }
  return g;
}

FitStepResult fit_step(const CorrSlice& slice, const NsmWeights& weights,
                       const PriorChannel& target, double learning_rate) {
  if (learning_rate < 0.0) {
    throw ParameterError("fit_step: learning rate must be >= 0");
  }
  const NsmGradients g = nsm_gradients(slice, weights, target);
  NsmWeights updated = weights;
  const auto apply = [learning_rate](std::vector<float>& w,
                                     const std::vector<double>& grad) {
    for (std::size_t i = 0; i < w.size(); ++i) {
      w[i] = static_cast<float>(static_cast<double>(w[i]) -
                                learning_rate * grad[i]);
    }
  };
  apply(updated.w1, g.w1);
  apply(updated.b1, g.b1);
  apply(updated.w2, g.w2);
  apply(updated.b2, g.b2);
  return FitStepResult{std::move(updated), g.loss};
}

}  // namespace priormask
