#pragma once

#include <span>
#include <string_view>
#include <vector>

#include "priormask/errors.hpp"
#include "priormask/tensor.hpp"

namespace priormask {

/// Ordered set of odd window side lengths, e.g. {1, 3, 5}.
struct PatchSet {
  std::vector<int> sizes;

  explicit PatchSet(std::vector<int> s);
  static PatchSet parse(std::string_view csv);

  int count() const noexcept { return static_cast<int>(sizes.size()); }
};

struct VolumeGeometry {
  int query_height = 0;
  int query_width = 0;
  int support_height = 0;
  int support_width = 0;

  int q_positions() const noexcept { return query_height * query_width; }
  int s_positions() const noexcept { return support_height * support_width; }
  bool operator==(const VolumeGeometry&) const = default;
};

/// One patch slice of a correlation volume: a q_positions x s_positions
/// matrix, row-major, tagged with the query grid shape.
struct CorrSlice {
  int height = 0;  // query grid height
  int width = 0;   // query grid width
  int s_positions = 0;
  std::vector<float> data;

  int q_positions() const noexcept { return height * width; }
  float at(int q, int s) const noexcept {
    return data[static_cast<std::size_t>(q) * s_positions + s];
  }
  void validate() const;
};

/// Correlation volume: (q_positions, s_positions, n_patches) row-major,
/// patch axis fastest. Immutable once built.
class CorrVolume {
 public:
  CorrVolume(VolumeGeometry geometry, int n_patches, std::vector<float> data);

  const VolumeGeometry& geometry() const noexcept { return geometry_; }
  int q_positions() const noexcept { return geometry_.q_positions(); }
  int s_positions() const noexcept { return geometry_.s_positions(); }
  int n_patches() const noexcept { return n_patches_; }

  std::span<const float> values() const noexcept { return data_; }

  float at(int q, int s, int p) const noexcept {
    return data_[(static_cast<std::size_t>(q) * geometry_.s_positions() + s) *
                     n_patches_ +
                 p];
  }

  CorrSlice slice(int patch_index) const;

 private:
  VolumeGeometry geometry_;
  int n_patches_;
  std::vector<float> data_;
};

/// Spatial map of scores over the query grid. Produced unnormalized by the
/// reduction ops; normalize_minmax rescales it into [0, 1).
struct PriorChannel {
  int height = 0;
  int width = 0;
  std::vector<float> data;

  int positions() const noexcept { return height * width; }
  void validate() const;
};

struct KernelOptions {
  int threads = 0;  // 0 = hardware concurrency
};

/// Cosine-similarity matrix between every query and support position.
/// Inputs are expected L2-normalized (and the support already masked).
CorrVolume elementwise_corr(const FeatureMap& query, const FeatureMap& support,
                            const KernelOptions& options = {});

/// Regional similarity for one odd window side length m: each entry is the
/// mean of the per-offset dot products over the m x m window, with
/// out-of-bounds reads on either side contributing zero.
CorrVolume patch_corr(const FeatureMap& query, const FeatureMap& support,
                      int patch_size, const KernelOptions& options = {});

/// Multi-patch volume: slice k holds patch_corr with sizes[k].
CorrVolume stack_patches(const FeatureMap& query, const FeatureMap& support,
                         const PatchSet& patches,
                         const KernelOptions& options = {});

/// Reference kernels: quadruple loop over query position, support position,
/// window offset and channel. Slow; used for cross-checking and benchmarks.
CorrVolume patch_corr_naive(const FeatureMap& query, const FeatureMap& support,
                            int patch_size);
CorrVolume stack_patches_naive(const FeatureMap& query,
                               const FeatureMap& support,
                               const PatchSet& patches);

/// Per patch slice, the max over support positions for each query position.
std::vector<PriorChannel> max_reduce(const CorrVolume& volume);

/// (x - min) / (max - min + epsilon). A constant channel maps to all zeros.
PriorChannel normalize_minmax(const PriorChannel& channel,
                              float epsilon = 1e-7f);

}  // namespace priormask
