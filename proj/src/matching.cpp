#include "priormask/matching.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <string>
#include <thread>
#include <utility>

namespace priormask {

namespace {

// Shared by the naive and optimized kernels so both accumulate channels in
// the same order; the project is compiled with -ffp-contract=off, which
// keeps the two call sites bit-identical.
float dot_f32(const float* a, const float* b, int n) {
  float acc = 0.0f;
  for (int i = 0; i < n; ++i) {
    acc += a[i] * b[i];
  }
  return acc;
}

int resolve_threads(const KernelOptions& options) {
  if (options.threads > 0) return options.threads;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

// Runs fn(begin, end) over [0, total) split into contiguous ranges. Every
// output element is written by exactly one range, so the result does not
// depend on the split.
template <typename Fn>
void parallel_ranges(int total, int threads, Fn&& fn) {
  threads = std::min(threads, total);
  if (threads <= 1 || total <= 1) {
    fn(0, total);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(threads);
  const int chunk = (total + threads - 1) / threads;
  for (int t = 0; t < threads; ++t) {
    const int begin = t * chunk;
    const int end = std::min(total, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([&fn, begin, end] { fn(begin, end); });
  }
  for (auto& th : pool) th.join();
}

void check_kernel_inputs(const FeatureMap& query, const FeatureMap& support) {
  if (query.channels() != support.channels()) {
    throw DimensionError("correlation: query has " +
                         std::to_string(query.channels()) +
                         " channels, support has " +
                         std::to_string(support.channels()));
  }
}

void check_patch_size(const FeatureMap& query, const FeatureMap& support,
                      int m) {
  if (m < 1 || m % 2 == 0) {
    throw ParameterError("patch size must be odd and >= 1, got " +
                         std::to_string(m));
  }
  const int smallest = std::min({query.height(), query.width(),
                                 support.height(), support.width()});
  if (m > 2 * smallest - 1) {
    throw ParameterError("patch size " + std::to_string(m) +
                         " exceeds 2*min(dims)-1 = " +
                         std::to_string(2 * smallest - 1));
  }
}

// Pairwise dot products between all query and support positions, the shared
// core of every patch size. D[q * s_positions + s] = <query_q, support_s>.
std::vector<float> pair_dot_matrix(const FeatureMap& query,
                                   const FeatureMap& support, int threads) {
  const int q_positions = query.positions();
  const int s_positions = support.positions();
  const int channels = query.channels();
  std::vector<float> dots(static_cast<std::size_t>(q_positions) *
                          s_positions);
  const float* qbase = query.values().data();
  const float* sbase = support.values().data();
  parallel_ranges(q_positions, threads, [&](int begin, int end) {
    for (int q = begin; q < end; ++q) {
      const float* qv = qbase + static_cast<std::size_t>(q) * channels;
      float* row = dots.data() + static_cast<std::size_t>(q) * s_positions;
      for (int s = 0; s < s_positions; ++s) {
        row[s] = dot_f32(qv, sbase + static_cast<std::size_t>(s) * channels,
                         channels);
      }
    }
  });
  return dots;
}

// Window-sum pass for one patch size: every output entry is the mean of the
// in-bounds pair dots over the m x m offset window, accumulated in row-major
// window order to match the naive kernel bit for bit.
void accumulate_patch_slice(const std::vector<float>& dots,
                            const VolumeGeometry& g, int m, int n_patches,
                            int patch_index, int threads, float* out) {
  const int radius = (m - 1) / 2;
  const float inv = 1.0f / static_cast<float>(m * m);
  const int hq = g.query_height, wq = g.query_width;
  const int hs = g.support_height, ws = g.support_width;
  const int s_positions = g.s_positions();
  parallel_ranges(hq, threads, [&](int row_begin, int row_end) {
    for (int iy = row_begin; iy < row_end; ++iy) {
      for (int ix = 0; ix < wq; ++ix) {
        const std::size_t q_index = static_cast<std::size_t>(iy) * wq + ix;
        float* out_row = out + (q_index * s_positions) * n_patches;
        for (int jy = 0; jy < hs; ++jy) {
          for (int jx = 0; jx < ws; ++jx) {
            float sum = 0.0f;
            for (int oy = -radius; oy <= radius; ++oy) {
              const int qy = iy + oy;
              const int sy = jy + oy;
              if (qy < 0 || qy >= hq || sy < 0 || sy >= hs) continue;
              const std::size_t q_row = static_cast<std::size_t>(qy) * wq;
              const std::size_t s_row = static_cast<std::size_t>(sy) * ws;
              for (int ox = -radius; ox <= radius; ++ox) {
                const int qx = ix + ox;
                const int sx = jx + ox;
                if (qx < 0 || qx >= wq || sx < 0 || sx >= ws) continue;
                sum += dots[(q_row + qx) * s_positions + s_row + sx];
              }
            }
            out_row[(static_cast<std::size_t>(jy) * ws + jx) * n_patches +
                    patch_index] = sum * inv;
          }
        }
      }
    }
  });
}

}  // namespace

PatchSet::PatchSet(std::vector<int> s) : sizes(std::move(s)) {
  if (sizes.empty()) {
    throw ParameterError("patch set must be non-empty");
  }
  int prev = 0;
  for (int m : sizes) {
    if (m < 1 || m % 2 == 0) {
      throw ParameterError("patch sizes must be odd and >= 1, got " +
                           std::to_string(m));
    }
    if (m <= prev) {
      throw ParameterError("patch sizes must be strictly increasing");
    }
    prev = m;
  }
}

PatchSet PatchSet::parse(std::string_view csv) {
  std::vector<int> sizes;
  std::size_t start = 0;
  while (start <= csv.size()) {
    std::size_t comma = csv.find(',', start);
    if (comma == std::string_view::npos) comma = csv.size();
    std::string_view token = csv.substr(start, comma - start);
    int value = 0;
    const auto [ptr, ec] =
        std::from_chars(token.data(), token.data() + token.size(), value);
    if (ec != std::errc{} || ptr != token.data() + token.size()) {
      throw ParameterError("cannot parse patch size '" + std::string(token) +
                           "'");
    }
    sizes.push_back(value);
    start = comma + 1;
    if (comma == csv.size()) break;
  }
  return PatchSet(std::move(sizes));
}

void CorrSlice::validate() const {
  if (height <= 0 || width <= 0 || s_positions <= 0) {
    throw DimensionError("correlation slice dims must be positive");
  }
  const std::size_t expected =
      static_cast<std::size_t>(height) * width * s_positions;
  if (data.size() != expected) {
    throw DimensionError("correlation slice data length " +
                         std::to_string(data.size()) + " does not match " +
                         std::to_string(height * width) + "x" +
                         std::to_string(s_positions));
  }
  for (float v : data) {
    if (!std::isfinite(v)) {
      throw NumericError("correlation slice contains a non-finite value");
    }
  }
}

CorrVolume::CorrVolume(VolumeGeometry geometry, int n_patches,
                       std::vector<float> data)
    : geometry_(geometry), n_patches_(n_patches), data_(std::move(data)) {
  if (geometry_.query_height <= 0 || geometry_.query_width <= 0 ||
      geometry_.support_height <= 0 || geometry_.support_width <= 0 ||
      n_patches_ <= 0) {
    throw DimensionError("correlation volume dims must be positive");
  }
  const std::size_t expected = static_cast<std::size_t>(q_positions()) *
                               s_positions() * n_patches_;
  if (data_.size() != expected) {
    throw DimensionError("correlation volume data length " +
                         std::to_string(data_.size()) + " does not match " +
                         std::to_string(q_positions()) + "x" +
                         std::to_string(s_positions()) + "x" +
                         std::to_string(n_patches_));
  }
}

CorrSlice CorrVolume::slice(int patch_index) const {
  if (patch_index < 0 || patch_index >= n_patches_) {
    throw ParameterError("patch index " + std::to_string(patch_index) +
                         " out of range [0, " + std::to_string(n_patches_) +
                         ")");
  }
  CorrSlice s;
  s.height = geometry_.query_height;
  s.width = geometry_.query_width;
  s.s_positions = s_positions();
  s.data.resize(static_cast<std::size_t>(q_positions()) * s.s_positions);
  for (std::size_t i = 0; i < s.data.size(); ++i) {
    s.data[i] = data_[i * n_patches_ + patch_index];
  }
  return s;
}

void PriorChannel::validate() const {
  if (height <= 0 || width <= 0) {
    throw DimensionError("prior channel dims must be positive");
  }
  if (data.size() != static_cast<std::size_t>(height) * width) {
    throw DimensionError("prior channel data length " +
                         std::to_string(data.size()) + " does not match " +
                         std::to_string(height) + "x" + std::to_string(width));
  }
  for (float v : data) {
    if (!std::isfinite(v)) {
      throw NumericError("prior channel contains a non-finite value");
    }
  }
}

CorrVolume elementwise_corr(const FeatureMap& query, const FeatureMap& support,
                            const KernelOptions& options) {
  return patch_corr(query, support, 1, options);
}

CorrVolume patch_corr(const FeatureMap& query, const FeatureMap& support,
                      int patch_size, const KernelOptions& options) {
  return stack_patches(query, support, PatchSet({patch_size}), options);
}

CorrVolume stack_patches(const FeatureMap& query, const FeatureMap& support,
                         const PatchSet& patches,
                         const KernelOptions& options) {
  check_kernel_inputs(query, support);
  for (int m : patches.sizes) {
    check_patch_size(query, support, m);
  }
  const VolumeGeometry g{query.height(), query.width(), support.height(),
                         support.width()};
  const int threads = resolve_threads(options);
  const std::vector<float> dots = pair_dot_matrix(query, support, threads);
  const int n_patches = patches.count();
  std::vector<float> out(static_cast<std::size_t>(g.q_positions()) *
                         g.s_positions() * n_patches);
  for (int p = 0; p < n_patches; ++p) {
    accumulate_patch_slice(dots, g, patches.sizes[p], n_patches, p, threads,
                           out.data());
  }
  return CorrVolume(g, n_patches, std::move(out));
}

CorrVolume patch_corr_naive(const FeatureMap& query, const FeatureMap& support,
                            int patch_size) {
  return stack_patches_naive(query, support, PatchSet({patch_size}));
}

CorrVolume stack_patches_naive(const FeatureMap& query,
                               const FeatureMap& support,
                               const PatchSet& patches) {
  check_kernel_inputs(query, support);
  for (int m : patches.sizes) {
    check_patch_size(query, support, m);
  }
  const VolumeGeometry g{query.height(), query.width(), support.height(),
                         support.width()};
  const int hq = g.query_height, wq = g.query_width;
  const int hs = g.support_height, ws = g.support_width;
  const int channels = query.channels();
  const int n_patches = patches.count();
  std::vector<float> out(static_cast<std::size_t>(g.q_positions()) *
                         g.s_positions() * n_patches);
  for (int p = 0; p < n_patches; ++p) {
    const int m = patches.sizes[p];
    const int radius = (m - 1) / 2;
    const float inv = 1.0f / static_cast<float>(m * m);
    for (int iy = 0; iy < hq; ++iy) {
      for (int ix = 0; ix < wq; ++ix) {
        const std::size_t q_index = static_cast<std::size_t>(iy) * wq + ix;
        for (int jy = 0; jy < hs; ++jy) {
          for (int jx = 0; jx < ws; ++jx) {
            float sum = 0.0f;
            for (int oy = -radius; oy <= radius; ++oy) {
              const int qy = iy + oy;
              const int sy = jy + oy;
              if (qy < 0 || qy >= hq || sy < 0 || sy >= hs) continue;
              for (int ox = -radius; ox <= radius; ++ox) {
                const int qx = ix + ox;
                const int sx = jx + ox;
                if (qx < 0 || qx >= wq || sx < 0 || sx >= ws) continue;
                sum += dot_f32(query.position(qy, qx), support.position(sy, sx),
                               channels);
              }
            }
            const std::size_t s_index =
                static_cast<std::size_t>(jy) * ws + jx;
            out[(q_index * g.s_positions() + s_index) * n_patches + p] =
                sum * inv;
          }
        }
      }
    }
  }
  return CorrVolume(g, n_patches, std::move(out));
}

std::vector<PriorChannel> max_reduce(const CorrVolume& volume) {
  const int q_positions = volume.q_positions();
  const int s_positions = volume.s_positions();
  const int n_patches = volume.n_patches();
  std::vector<PriorChannel> channels(n_patches);
  for (int p = 0; p < n_patches; ++p) {
    channels[p].height = volume.geometry().query_height;
    channels[p].width = volume.geometry().query_width;
    channels[p].data.resize(q_positions);
  }
  const float* data = volume.values().data();
  for (int q = 0; q < q_positions; ++q) {
    const float* row =
        data + static_cast<std::size_t>(q) * s_positions * n_patches;
    for (int p = 0; p < n_patches; ++p) {
      float best = row[p];
      for (int s = 1; s < s_positions; ++s) {
        const float v = row[static_cast<std::size_t>(s) * n_patches + p];
        if (v > best) best = v;
      }
      channels[p].data[q] = best;
    }
  }
  return channels;
}

PriorChannel normalize_minmax(const PriorChannel& channel, float epsilon) {
  if (!(epsilon > 0.0f)) {
    throw ParameterError("normalize_minmax: epsilon must be > 0");
  }
  channel.validate();
  float lo = channel.data[0];
  float hi = channel.data[0];
  for (float v : channel.data) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  const float denom = hi - lo + epsilon;
  PriorChannel out;
  out.height = channel.height;
  out.width = channel.width;
  out.data.resize(channel.data.size());
  for (std::size_t i = 0; i < channel.data.size(); ++i) {
    out.data[i] = (channel.data[i] - lo) / denom;
  }
  return out;
}

}  // namespace priormask
