#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "priormask/matching.hpp"
#include "priormask/noise.hpp"
#include "priormask/tensor.hpp"

namespace priormask {

enum class FeatureLevel { middle, high };

std::string_view to_string(FeatureLevel level);
std::optional<FeatureLevel> parse_level(std::string_view name);

/// One annotated support sample: per-level features plus the binary mask at
/// the (pre-pooling) feature resolution.
struct SupportShot {
  std::map<FeatureLevel, FeatureMap> features;
  BinaryMask mask;
};

/// One evaluation unit: per-level query features and K support shots.
struct Episode {
  std::map<FeatureLevel, FeatureMap> query;
  std::vector<SupportShot> shots;
};

struct PipelineConfig {
  PatchSet patches{{1, 3, 5}};
  std::vector<FeatureLevel> levels{FeatureLevel::middle, FeatureLevel::high};
  bool use_nsm = true;
  int project_to = 256;  // target channels when projection weights are used
  bool pool_support = true;
  bool pool_query = false;
  float epsilon = 1e-7f;
  int hidden = 256;  // rectifier hidden width at init time
  int threads = 0;
  bool use_naive_kernel = false;  // run the reference correlation kernels
};

/// Stacked prior channels over the query grid, one per (level, patch),
/// every value in [0, 1].
struct PriorStack {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<float> data;  // (height, width, channels), channels fastest

  float at(int y, int x, int c) const noexcept {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
};

struct ChannelDesc {
  FeatureLevel level;
  int patch = 0;
};

struct PriorResult {
  PriorStack stack;
  std::vector<ChannelDesc> channels;
  std::vector<std::string> warnings;
};

using NsmWeightSet = std::map<std::pair<FeatureLevel, int>, NsmWeights>;
using ProjectionSet = std::map<FeatureLevel, ProjectionWeights>;

/// Full prior generation: per level and shot, project, mask, pool,
/// normalize, run multi-patch regional matching, reduce each patch slice
/// (learned rectifier or plain max), min-max normalize, then average the
/// per-shot channels and stack levels x patches.
PriorResult generate_prior(const Episode& episode, const PipelineConfig& config,
                           const NsmWeightSet* nsm_weights = nullptr,
                           const ProjectionSet* projections = nullptr);

/// Single-level, single-patch max-reduction prior: the reference path every
/// ablation compares against. Identical to generate_prior with patches={1},
/// one level, no rectifier, no projection or pooling.
PriorStack baseline_prior(const Episode& episode, float epsilon = 1e-7f);

}  // namespace priormask
