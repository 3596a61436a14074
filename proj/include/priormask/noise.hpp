#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "priormask/matching.hpp"

namespace priormask {

/// Two-layer perceptron over support positions: encode s_positions -> hidden
/// with a ReLU in between, decode hidden -> s_positions. The output is the
/// raw linear rectifier; downstream min-max normalization restores [0, 1).
struct NsmWeights {
  int s_positions = 0;
  int hidden = 0;
  std::vector<float> w1;  // s_positions x hidden, row-major
  std::vector<float> b1;  // hidden
  std::vector<float> w2;  // hidden x s_positions, row-major
  std::vector<float> b2;  // s_positions

  void validate() const;
};

/// One weight per support position, scaling its contribution.
struct Rectifier {
  std::vector<float> values;
};

/// Column means of a correlation slice: how strongly each support position
/// correlates with the query as a whole.
std::vector<float> concentrate(const CorrSlice& slice);

/// relu(input * w1 + b1) * w2 + b2.
Rectifier rectify(std::span<const float> input, const NsmWeights& weights);

/// Weighted aggregation over support positions: channel[i] = sum_j
/// slice(i, j) * rectifier[j]. Replaces the max reduction with a learned
/// soft selection.
PriorChannel noise_filter(const CorrSlice& slice, const Rectifier& rectifier);

/// Deterministic initialization: weights uniform in [-1/sqrt(fan_in),
/// +1/sqrt(fan_in)] from a SplitMix64 stream, biases zero. Same seed gives
/// bit-identical weights on every platform.
NsmWeights init_nsm_weights(int s_positions, int hidden, std::uint64_t seed);
ProjectionWeights init_projection_weights(int in_channels, int out_channels,
                                          std::uint64_t seed);

/// Gradients of the surrogate loss
///   L = mean_i (noise_filter(slice, rectify(concentrate(slice), w))[i]
///       - target[i])^2
/// with respect to every weight, accumulated in 64-bit floats. The forward
/// pass reuses the 32-bit inference functions above, so a target equal to
/// the current output yields exactly zero loss and gradients.
struct NsmGradients {
  std::vector<double> w1;
  std::vector<double> b1;
  std::vector<double> w2;
  std::vector<double> b2;
  double loss = 0.0;
};

NsmGradients nsm_gradients(const CorrSlice& slice, const NsmWeights& weights,
                           const PriorChannel& target);

struct FitStepResult {
  NsmWeights weights;
  double loss = 0.0;
};

/// One plain gradient-descent step on the surrogate loss.
FitStepResult fit_step(const CorrSlice& slice, const NsmWeights& weights,
                       const PriorChannel& target, double learning_rate);

}  // namespace priormask
