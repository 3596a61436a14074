#include "priormask/pipeline.hpp"

#include <cstddef>
#include <string>

namespace priormask {

namespace {

// Rethrows stage failures with the stage name prefixed, preserving the
// error type for the caller's exit-code mapping.
template <typename Fn>
auto stage(const std::string& name, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const DimensionError& e) {
    throw DimensionError(name + ": " + e.what());
  } catch (const ParameterError& e) {
    throw ParameterError(name + ": " + e.what());
  } catch (const NumericError& e) {
    throw NumericError(name + ": " + e.what());
  }
}

const FeatureMap& level_features(const std::map<FeatureLevel, FeatureMap>& map,
                                 FeatureLevel level, const std::string& who) {
  const auto it = map.find(level);
  if (it == map.end()) {
    throw DimensionError(who + ": missing features for level '" +
                         std::string(to_string(level)) + "'");
  }
  return it->second;
}

std::string level_tag(FeatureLevel level) {
  return std::string(to_string(level));
}

}  // namespace

std::string_view to_string(FeatureLevel level) {
  return level == FeatureLevel::middle ? "middle" : "high";
}

std::optional<FeatureLevel> parse_level(std::string_view name) {
  if (name == "middle") return FeatureLevel::middle;
  if (name == "high") return FeatureLevel::high;
  return std::nullopt;
}

PriorResult generate_prior(const Episode& episode, const PipelineConfig& config,
                           const NsmWeightSet* nsm_weights,
                           const ProjectionSet* projections) {
  if (config.levels.empty()) {
    throw ParameterError("pipeline: config.levels must be non-empty");
  }
  for (std::size_t i = 0; i < config.levels.size(); ++i) {
    for (std::size_t j = i + 1; j < config.levels.size(); ++j) {
      if (config.levels[i] == config.levels[j]) {
        throw ParameterError("pipeline: duplicate level '" +
                             level_tag(config.levels[i]) + "'");
      }
    }
  }
  if (episode.shots.empty()) {
    throw DimensionError("pipeline: episode needs at least one support shot");
  }
  if (config.use_nsm && nsm_weights == nullptr) {
    throw ParameterError("pipeline: rectifier weights required when nsm is on");
  }

  const int shot_count = static_cast<int>(episode.shots.size());
  const int n_patches = config.patches.count();
  const KernelOptions kernel_opts{config.threads};

  bool any_foreground = false;
  for (const SupportShot& shot : episode.shots) {
    if (!shot.mask.all_zero()) any_foreground = true;
  }

  PriorResult result;
  int stack_h = -1, stack_w = -1;
  std::vector<std::vector<double>> sums;  // one accumulator per channel
  sums.reserve(config.levels.size() * n_patches);

  for (const FeatureLevel level : config.levels) {
    const std::string tag = level_tag(level);

    // Query-side preparation is shot-independent.
    FeatureMap query_feats =
        level_features(episode.query, level, "query[" + tag + "]");
    const ProjectionWeights* proj = nullptr;
    if (projections != nullptr) {
      const auto it = projections->find(level);
      if (it == projections->end()) {
        throw ParameterError("project[" + tag +
                             "]: no projection weights for this level");
      }
      proj = &it->second;
      query_feats = stage("project[query," + tag + "]",
                          [&] { return project_channels(query_feats, *proj); });
    }
    if (config.pool_query) {
      query_feats =
          stage("pool[query," + tag + "]", [&] { return avg_pool_2x2(query_feats); });
    }
    const FeatureMap query_norm = l2_normalize_channels(query_feats);

    if (stack_h == -1) {
      stack_h = query_norm.height();
      stack_w = query_norm.width();
    } else if (stack_h != query_norm.height() ||
               stack_w != query_norm.width()) {
      throw DimensionError(
          "stack: query grids differ across levels (" +
          std::to_string(stack_h) + "x" + std::to_string(stack_w) + " vs " +
          std::to_string(query_norm.height()) + "x" +
          std::to_string(query_norm.width()) + ")");
    }

    std::vector<std::vector<double>> level_sums(
        n_patches,
        std::vector<double>(static_cast<std::size_t>(stack_h) * stack_w, 0.0));

    const FeatureMap& first_support =
        level_features(episode.shots[0].features, level,
                       "support[" + tag + ", shot 0]");

    for (int k = 0; k < shot_count; ++k) {
      const SupportShot& shot = episode.shots[k];
      const std::string shot_tag = tag + ", shot " + std::to_string(k);

      FeatureMap support_feats =
          level_features(shot.features, level, "support[" + shot_tag + "]");
      if (support_feats.height() != first_support.height() ||
          support_feats.width() != first_support.width() ||
          support_feats.channels() != first_support.channels()) {
        throw DimensionError(
            "support[" + shot_tag + "]: dims " +
            std::to_string(support_feats.height()) + "x" +
            std::to_string(support_feats.width()) + "x" +
            std::to_string(support_feats.channels()) +
            " differ from shot 0 (" +
            std::to_string(first_support.height()) + "x" +
            std::to_string(first_support.width()) + "x" +
            std::to_string(first_support.channels()) + ")");
      }
      if (proj != nullptr) {
        support_feats = stage("project[" + shot_tag + "]", [&] {
          return project_channels(support_feats, *proj);
        });
      }
      FeatureMap masked = stage("mask[" + shot_tag + "]", [&] {
        return hadamard_mask(support_feats, shot.mask);
      });
      if (config.pool_support) {
        masked = stage("pool[" + shot_tag + "]",
                       [&] { return avg_pool_2x2(masked); });
      }
      const FeatureMap support_norm = l2_normalize_channels(masked);

      const CorrVolume volume = stage("match[" + shot_tag + "]", [&] {
        return config.use_naive_kernel
                   ? stack_patches_naive(query_norm, support_norm,
                                         config.patches)
                   : stack_patches(query_norm, support_norm, config.patches,
                                   kernel_opts);
      });

      std::vector<PriorChannel> reduced;
      if (config.use_nsm) {
        reduced.reserve(n_patches);
        for (int p = 0; p < n_patches; ++p) {
          const int m = config.patches.sizes[p];
          const std::string nsm_tag =
              "rectify[" + tag + ", m=" + std::to_string(m) + "]";
          const auto wit = nsm_weights->find({level, m});
          if (wit == nsm_weights->end()) {
            throw ParameterError(nsm_tag + ": missing rectifier weights");
          }
          const CorrSlice slice = volume.slice(p);
          if (wit->second.s_positions != slice.s_positions) {
            throw DimensionError(
                nsm_tag + ": weights expect " +
                std::to_string(wit->second.s_positions) +
                " support positions, volume has " +
                std::to_string(slice.s_positions));
          }
          reduced.push_back(stage(nsm_tag, [&] {
            return noise_filter(
                slice, rectify(concentrate(slice), wit->second));
          }));
        }
      } else {
        reduced = max_reduce(volume);
      }

      for (int p = 0; p < n_patches; ++p) {
        const PriorChannel normalized =
            normalize_minmax(reduced[p], config.epsilon);
        std::vector<double>& acc = level_sums[p];
        for (std::size_t i = 0; i < acc.size(); ++i) {
          acc[i] += normalized.data[i];
        }
      }
    }

    for (int p = 0; p < n_patches; ++p) {
      sums.push_back(std::move(level_sums[p]));
      result.channels.push_back(ChannelDesc{level, config.patches.sizes[p]});
    }
  }

  const int total_channels = static_cast<int>(sums.size());
  PriorStack stack;
  stack.height = stack_h;
  stack.width = stack_w;
  stack.channels = total_channels;
  stack.data.resize(static_cast<std::size_t>(stack_h) * stack_w *
                    total_channels);
  for (int c = 0; c < total_channels; ++c) {
    const std::vector<double>& acc = sums[c];
    for (std::size_t i = 0; i < acc.size(); ++i) {
      stack.data[i * total_channels + c] =
          static_cast<float>(acc[i] / shot_count);
    }
  }
  result.stack = std::move(stack);

  if (!any_foreground) {
    result.warnings.push_back(
        "all support masks are empty; the prior stack is all zeros");
  }
  return result;
}

PriorStack baseline_prior(const Episode& episode, float epsilon) {
  FeatureLevel level;
  if (episode.query.contains(FeatureLevel::high)) {
    level = FeatureLevel::high;
  } else if (episode.query.size() == 1) {
    level = episode.query.begin()->first;
  } else {
    throw ParameterError(
        "baseline_prior: episode must provide a single feature level");
  }
  PipelineConfig config;
  config.patches = PatchSet({1});
  config.levels = {level};
  config.use_nsm = false;
  config.pool_support = false;
  config.pool_query = false;
  config.epsilon = epsilon;
  return generate_prior(episode, config).stack;
}

}  // namespace priormask
