// Acceptance suite: runs every ship-gate criterion at its pinned tolerance
// and prints one PASS/FAIL line per criterion.

#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "priormask/io.hpp"
#include "priormask/matching.hpp"
#include "priormask/noise.hpp"
#include "priormask/pipeline.hpp"
#include "priormask/rng.hpp"
#include "priormask/tensor.hpp"
#include "support/generators.hpp"

namespace {

using namespace priormask;
namespace fs = std::filesystem;

struct Ctx {
  fs::path cli;
  fs::path tmp;
};

struct Failure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void require(bool condition, const std::string& message) {
  if (!condition) throw Failure(message);
}

int run_cli(const Ctx& ctx, const std::string& args, const fs::path& stdout_to,
            const fs::path& stderr_to) {
  const std::string command = ctx.cli.string() + " " + args + " > " +
                              stdout_to.string() + " 2> " + stderr_to.string();
  const int status = std::system(command.c_str());
  require(status != -1, "failed to spawn: " + command);
  return WIFEXITED(status) ? WEXITSTATUS(status) : 128;
}

std::vector<std::uint8_t> slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), "cannot read " + path.string());
  return std::vector<std::uint8_t>((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
}

// --- criterion 1: degenerate-config pipeline equals the reference path ----

void baseline_equivalence(Ctx&) {
  SplitMix64 rng(1001);
  PipelineConfig config;
  config.patches = PatchSet({1});
  config.levels = {FeatureLevel::high};
  config.use_nsm = false;
  config.pool_support = false;
  config.pool_query = false;
  for (int round = 0; round < 25; ++round) {
    const int hq = 4 + static_cast<int>(rng.next_below(9));
    const int wq = 4 + static_cast<int>(rng.next_below(9));
    const int hs = 4 + static_cast<int>(rng.next_below(9));
    const int ws = 4 + static_cast<int>(rng.next_below(9));
    const int d = rng.next_below(2) == 0 ? 8 : 32;
    const int shots = 1 + static_cast<int>(rng.next_below(3));
    const Episode episode =
        testgen::random_episode(hq, wq, hs, ws, d, shots, rng);
    const PriorStack a = generate_prior(episode, config).stack;
    const PriorStack b = baseline_prior(episode);
    require(a.data.size() == b.data.size(), "stack sizes differ");
    require(std::memcmp(a.data.data(), b.data.data(),
                        a.data.size() * sizeof(float)) == 0,
            "episode " + std::to_string(round) + ": stacks not bit-identical");
  }
}

// --- criterion 2: optimized kernel vs quadruple-loop oracle ---------------

void oracle_equivalence(Ctx&) {
  SplitMix64 rng(1002);
  const PatchSet patches({1, 3, 5});
  for (int round = 0; round < 50; ++round) {
    const int hq = 4 + static_cast<int>(rng.next_below(7));
    const int wq = 4 + static_cast<int>(rng.next_below(7));
    const int hs = 3 + static_cast<int>(rng.next_below(6));
    const int ws = 3 + static_cast<int>(rng.next_below(6));
    const int d = rng.next_below(2) == 0 ? 4 : 16;
    const FeatureMap query = testgen::random_unit_features(hq, wq, d, rng);
    const FeatureMap support = l2_normalize_channels(
        hadamard_mask(testgen::random_features(hs, ws, d, rng),
                      testgen::random_mask(hs, ws, rng)));
    const CorrVolume fast = stack_patches(query, support, patches);
    const CorrVolume oracle = stack_patches_naive(query, support, patches);
    const double diff = testgen::max_abs_diff(fast.values(), oracle.values());
    require(diff <= 1e-4, "instance " + std::to_string(round) +
                              ": max-abs-diff " + std::to_string(diff));
  }
}

// --- criterion 3: patch size 1 degenerates to elementwise matching --------

void m1_degeneracy(Ctx&) {
  SplitMix64 rng(1003);
  for (int round = 0; round < 25; ++round) {
    const int hq = 3 + static_cast<int>(rng.next_below(6));
    const int wq = 3 + static_cast<int>(rng.next_below(6));
    const int hs = 3 + static_cast<int>(rng.next_below(6));
    const int ws = 3 + static_cast<int>(rng.next_below(6));
    const int d = 4 + static_cast<int>(rng.next_below(13));
    const FeatureMap query = testgen::random_unit_features(hq, wq, d, rng);
    const FeatureMap support = l2_normalize_channels(
        hadamard_mask(testgen::random_features(hs, ws, d, rng),
                      testgen::random_mask(hs, ws, rng)));
    const CorrVolume a = patch_corr(query, support, 1);
    const CorrVolume b = elementwise_corr(query, support);
    require(std::memcmp(a.values().data(), b.values().data(),
                        a.values().size() * sizeof(float)) == 0,
            "instance " + std::to_string(round) + ": not bit-identical");
  }
}

// --- criterion 4: value-range laws ----------------------------------------

void range_laws(Ctx&) {
  SplitMix64 rng(1004);
  for (int round = 0; round < 10; ++round) {
    const FeatureMap query = testgen::random_unit_features(7, 6, 12, rng);
    const FeatureMap support = l2_normalize_channels(
        hadamard_mask(testgen::random_features(6, 5, 12, rng),
                      testgen::random_mask(6, 5, rng)));
    const CorrVolume volume =
        stack_patches(query, support, PatchSet({1, 3, 5}));
    for (float v : volume.values()) {
      require(v >= -1.0f - 1e-5f && v <= 1.0f + 1e-5f,
              "correlation value " + std::to_string(v) + " outside [-1, 1]");
    }
  }

  // Prior stacks stay inside [0, 1] under the full learned configuration.
  SplitMix64 rng2(1005);
  Episode episode;
  episode.query.emplace(FeatureLevel::middle,
                        testgen::random_features(10, 10, 8, rng2));
  episode.query.emplace(FeatureLevel::high,
                        testgen::random_features(10, 10, 8, rng2));
  std::map<FeatureLevel, FeatureMap> features;
  features.emplace(FeatureLevel::middle,
                   testgen::random_features(10, 10, 8, rng2));
  features.emplace(FeatureLevel::high,
                   testgen::random_features(10, 10, 8, rng2));
  episode.shots.push_back(
      SupportShot{std::move(features), testgen::random_mask(10, 10, rng2)});
  PipelineConfig config;
  config.patches = PatchSet({1, 3, 5});
  config.levels = {FeatureLevel::middle, FeatureLevel::high};
  config.use_nsm = true;
  config.pool_support = true;
  NsmWeightSet weights;
  SplitMix64 master(77);
  for (const FeatureLevel level : config.levels) {
    for (const int m : config.patches.sizes) {
      weights.emplace(std::make_pair(level, m),
                      init_nsm_weights(25, 8, master.next()));
    }
  }
  const PriorStack stack = generate_prior(episode, config, &weights).stack;
  for (float v : stack.data) {
    require(v >= 0.0f && v <= 1.0f,
            "prior value " + std::to_string(v) + " outside [0, 1]");
  }

  // A constant channel must normalize to exactly zero (epsilon 1e-7).
  PriorChannel constant{4, 4, std::vector<float>(16, 0.7f)};
  for (float v : normalize_minmax(constant, 1e-7f).data) {
    require(v == 0.0f, "constant channel did not normalize to zeros");
  }
}

// --- criterion 5: analytic gradients vs central finite differences --------

double loss_forward_f64(const CorrSlice& slice, const std::vector<double>& w1,
                        const std::vector<double>& b1,
                        const std::vector<double>& w2,
                        const std::vector<double>& b2, int hidden,
                        const PriorChannel& target) {
  const int q = slice.q_positions();
  const int s = slice.s_positions;
  std::vector<double> compressed(s, 0.0);
  for (int i = 0; i < q; ++i) {
    for (int j = 0; j < s; ++j) compressed[j] += slice.at(i, j);
  }
  for (double& v : compressed) v /= q;
  std::vector<double> hidden_act(hidden);
  for (int k = 0; k < hidden; ++k) {
    double z = b1[k];
    for (int j = 0; j < s; ++j) {
      z += compressed[j] * w1[static_cast<std::size_t>(j) * hidden + k];
    }
    hidden_act[k] = z > 0.0 ? z : 0.0;
  }
  std::vector<double> rect(s);
  for (int j = 0; j < s; ++j) {
    double r = b2[j];
    for (int k = 0; k < hidden; ++k) {
      r += hidden_act[k] * w2[static_cast<std::size_t>(k) * s + j];
    }
    rect[j] = r;
  }
  double loss = 0.0;
  for (int i = 0; i < q; ++i) {
    double y = 0.0;
    for (int j = 0; j < s; ++j) {
      y += static_cast<double>(slice.at(i, j)) * rect[j];
    }
    const double r = y - target.data[i];
    loss += r * r;
  }
  return loss / q;
}

void nsm_gradient_check(Ctx&) {
  SplitMix64 rng(1006);
  const int q = 16, s = 9, hidden = 4;
  const CorrSlice slice = testgen::random_slice(q, s, rng);
  PriorChannel target;
  target.height = q;
  target.width = 1;
  target.data.resize(q);
  for (auto& v : target.data) {
    v = static_cast<float>(rng.next_double(-1.0, 1.0));
  }

  // usable instance: every ReLU pre-activation clear of the
  // finite-difference interval and at least two active units
  const std::vector<float> compressed = concentrate(slice);
  const auto instance_ok = [&](const NsmWeights& w) {
    int active = 0;
    for (int k = 0; k < hidden; ++k) {
      double z = 0.0;
      for (int j = 0; j < s; ++j) {
        z += static_cast<double>(compressed[j]) *
             w.w1[static_cast<std::size_t>(j) * hidden + k];
      }
      if (std::abs(z) <= 1e-2) return false;
      if (z > 0.0) ++active;
    }
    return active >= 2;
  };
  std::uint64_t seed = 2024;
  NsmWeights weights = init_nsm_weights(s, hidden, seed);
  int attempts = 0;
  while (!instance_ok(weights)) {
    weights = init_nsm_weights(s, hidden, ++seed);
    require(++attempts < 200, "no seed produced a usable instance");
  }

  const NsmGradients analytic = nsm_gradients(slice, weights, target);
  const double delta = 1e-4;
  std::vector<double> w1(weights.w1.begin(), weights.w1.end());
  std::vector<double> b1(weights.b1.begin(), weights.b1.end());
  std::vector<double> w2(weights.w2.begin(), weights.w2.end());
  std::vector<double> b2(weights.b2.begin(), weights.b2.end());
  std::vector<double>* blocks[4] = {&w1, &b1, &w2, &b2};
  const std::vector<double>* grads[4] = {&analytic.w1, &analytic.b1,
                                         &analytic.w2, &analytic.b2};
  int checked = 0;
  for (int which = 0; which < 4; ++which) {
    std::vector<double>& block = *blocks[which];
    for (std::size_t i = 0; i < block.size(); ++i) {
      const double original = block[i];
      block[i] = original + delta;
      const double up = loss_forward_f64(slice, w1, b1, w2, b2, hidden, target);
      block[i] = original - delta;
      const double down =
          loss_forward_f64(slice, w1, b1, w2, b2, hidden, target);
      block[i] = original;
      const double fd = (up - down) / (2.0 * delta);
      const double g = (*grads[which])[i];
      if (std::abs(g) > 1e-8) {
        const double rel =
            std::abs(g - fd) / std::max(std::abs(g), std::abs(fd));
        require(rel <= 1e-3, "block " + std::to_string(which) + " coord " +
                                 std::to_string(i) + ": rel err " +
                                 std::to_string(rel));
        ++checked;
      }
    }
  }
  require(checked > 40, "too few gradient coordinates exceeded 1e-8");
}

// --- criterion 6: gradient descent reaches a realizable target ------------

void fit_convergence(Ctx&) {
  SplitMix64 rng(1007);
  const int q = 16, s = 9, hidden = 4;
  const CorrSlice slice = testgen::random_slice(q, s, rng);
  const NsmWeights truth = init_nsm_weights(s, hidden, 404);
  const PriorChannel target =
      noise_filter(slice, rectify(concentrate(slice), truth));
  NsmWeights weights = init_nsm_weights(s, hidden, 505);
  double lr = 0.5;
  double initial = -1.0, previous = -1.0, last = -1.0;
  for (int step = 0; step < 200; ++step) {
    FitStepResult result = fit_step(slice, weights, target, lr);
    if (initial < 0.0) initial = result.loss;
    if (previous >= 0.0 && result.loss > previous) lr *= 0.5;
    previous = result.loss;
    last = result.loss;
    weights = std::move(result.weights);
  }
  require(initial > 0.0, "initial loss was not positive");
  require(last < 0.1 * initial, "final loss " + std::to_string(last) +
                                    " not below 10% of initial " +
                                    std::to_string(initial));
}

// --- criterion 7: the published configuration arithmetic ------------------

void configuration_arithmetic(Ctx&) {
  SplitMix64 rng(1008);
  const int d = 256;
  Episode episode;
  episode.query.emplace(FeatureLevel::middle,
                        testgen::random_features(60, 60, d, rng));
  episode.query.emplace(FeatureLevel::high,
                        testgen::random_features(60, 60, d, rng));
  std::map<FeatureLevel, FeatureMap> features;
  features.emplace(FeatureLevel::middle,
                   testgen::random_features(60, 60, d, rng));
  features.emplace(FeatureLevel::high,
                   testgen::random_features(60, 60, d, rng));
  episode.shots.push_back(
      SupportShot{std::move(features), testgen::random_mask(60, 60, rng)});

  PipelineConfig full;
  full.patches = PatchSet({1, 3, 5});
  full.levels = {FeatureLevel::middle, FeatureLevel::high};
  full.use_nsm = true;
  full.pool_support = true;  // 60x60 -> 30x30 support grid
  full.hidden = 256;
  NsmWeightSet weights;
  SplitMix64 master(7);
  for (const FeatureLevel level : full.levels) {
    for (const int m : full.patches.sizes) {
      weights.emplace(std::make_pair(level, m),
                      init_nsm_weights(900, 256, master.next()));
    }
  }
  const PriorStack stack = generate_prior(episode, full, &weights).stack;
  require(stack.height == 60 && stack.width == 60 && stack.channels == 6,
          "full configuration gave " + std::to_string(stack.height) + "x" +
              std::to_string(stack.width) + "x" +
              std::to_string(stack.channels) + ", expected 60x60x6");

  PipelineConfig reference;
  reference.patches = PatchSet({1});
  reference.levels = {FeatureLevel::high};
  reference.use_nsm = false;
  reference.pool_support = false;
  const PriorStack single = generate_prior(episode, reference).stack;
  require(single.height == 60 && single.width == 60 && single.channels == 1,
          "reference configuration gave " + std::to_string(single.height) +
              "x" + std::to_string(single.width) + "x" +
              std::to_string(single.channels) + ", expected 60x60x1");
}

// --- criterion 8: invariance suite ----------------------------------------

void invariance_suite(Ctx&) {
  SplitMix64 rng(1009);

  // background features are invisible (exact)
  {
    const Episode episode = testgen::random_episode(6, 6, 5, 5, 8, 1, rng);
    Episode tampered = episode;
    FeatureMap& support = tampered.shots[0].features.at(FeatureLevel::high);
    std::vector<float> altered(support.values().begin(),
                               support.values().end());
    for (int p = 0; p < support.positions(); ++p) {
      if (episode.shots[0].mask.values()[p] == 0.0f) {
        for (int c = 0; c < 8; ++c) {
          altered[static_cast<std::size_t>(p) * 8 + c] =
              static_cast<float>(rng.next_double(-9.0, 9.0));
        }
      }
    }
    support = FeatureMap(5, 5, 8, altered);
    const PriorStack a = baseline_prior(episode);
    const PriorStack b = baseline_prior(tampered);
    require(std::memcmp(a.data.data(), b.data.data(),
                        a.data.size() * sizeof(float)) == 0,
            "background features leaked into the prior");
  }

  // support-position permutation (max path, <= 1e-6)
  {
    const Episode episode = testgen::random_episode(6, 6, 4, 4, 6, 1, rng);
    const FeatureMap& support =
        episode.shots[0].features.at(FeatureLevel::high);
    const int positions = support.positions();
    std::vector<int> perm(positions);
    std::iota(perm.begin(), perm.end(), 0);
    for (int i = positions - 1; i > 0; --i) {
      std::swap(perm[i], perm[rng.next_below(i + 1)]);
    }
    std::vector<float> shuffled_features(support.values().size());
    std::vector<float> shuffled_mask(positions);
    for (int p = 0; p < positions; ++p) {
      for (int c = 0; c < 6; ++c) {
        shuffled_features[static_cast<std::size_t>(p) * 6 + c] =
            support.values()[static_cast<std::size_t>(perm[p]) * 6 + c];
      }
      shuffled_mask[p] = episode.shots[0].mask.values()[perm[p]];
    }
    Episode permuted = episode;
    permuted.shots[0].features.at(FeatureLevel::high) =
        FeatureMap(4, 4, 6, shuffled_features);
    permuted.shots[0].mask = BinaryMask(4, 4, shuffled_mask);
    const PriorStack a = baseline_prior(episode);
    const PriorStack b = baseline_prior(permuted);
    require(testgen::max_abs_diff(a.data, b.data) <= 1e-6,
            "support permutation changed the max-path prior");
  }

  // shot order (<= 1e-6)
  {
    const Episode episode = testgen::random_episode(6, 6, 5, 5, 8, 3, rng);
    Episode reversed = episode;
    std::reverse(reversed.shots.begin(), reversed.shots.end());
    const PriorStack a = baseline_prior(episode);
    const PriorStack b = baseline_prior(reversed);
    require(testgen::max_abs_diff(a.data, b.data) <= 1e-6,
            "shot order changed the prior");
  }

  // affine invariance of min-max normalization (<= 2e-6)
  {
    for (int round = 0; round < 20; ++round) {
      PriorChannel channel{4, 5, {}};
      channel.data.resize(20);
      for (auto& v : channel.data) {
        v = static_cast<float>(rng.next_double(-1.0, 1.0));
      }
      channel.data[0] = -0.5f;
      channel.data[1] = 0.6f;  // range >= 0.1 guaranteed
      const double a = rng.next_double(0.5, 2.0);
      const double b = rng.next_double(-1.0, 1.0);
      PriorChannel mapped = channel;
      for (auto& v : mapped.data) {
        v = static_cast<float>(a * v + b);
      }
      const PriorChannel n1 = normalize_minmax(channel);
      const PriorChannel n2 = normalize_minmax(mapped);
      require(testgen::max_abs_diff(n1.data, n2.data) <= 2e-6,
              "affine transform changed the normalized channel");
    }
  }

  // argmax preservation (exact)
  {
    for (int round = 0; round < 20; ++round) {
      PriorChannel channel{4, 5, {}};
      channel.data.resize(20);
      for (auto& v : channel.data) {
        v = static_cast<float>(rng.next_double(-2.0, 2.0));
      }
      const PriorChannel out = normalize_minmax(channel);
      const auto in_max = std::distance(
          channel.data.begin(),
          std::max_element(channel.data.begin(), channel.data.end()));
      const auto out_max = std::distance(
          out.data.begin(),
          std::max_element(out.data.begin(), out.data.end()));
      require(in_max == out_max, "normalization moved the argmax");
    }
  }
}

// --- criterion 9: CLI determinism -----------------------------------------

void write_level_file(const fs::path& path,
                      const std::map<FeatureLevel, FeatureMap>& features) {
  NamedTensors store;
  for (const auto& [level, map] : features) {
    store.add(std::string(to_string(level)), to_tensor(map));
  }
  save_weights(path, store);
}

void determinism(Ctx& ctx) {
  SplitMix64 rng(1010);
  const fs::path dir = ctx.tmp / "determinism";
  fs::create_directories(dir);

  std::map<FeatureLevel, FeatureMap> query;
  query.emplace(FeatureLevel::middle, testgen::random_features(12, 12, 16, rng));
  query.emplace(FeatureLevel::high, testgen::random_features(12, 12, 16, rng));
  std::map<FeatureLevel, FeatureMap> support;
  support.emplace(FeatureLevel::middle,
                  testgen::random_features(12, 12, 16, rng));
  support.emplace(FeatureLevel::high,
                  testgen::random_features(12, 12, 16, rng));
  write_level_file(dir / "query.pmnw", query);
  write_level_file(dir / "support.pmnw", support);
  save_tensor(dir / "mask.pmtn",
              to_tensor(testgen::random_mask(12, 12, rng)));

  const std::string init_args =
      "init-weights --hs 6 --ws 6 --d 8 --seed 7 --patches 1,3,5 "
      "--levels middle,high --out ";
  require(run_cli(ctx, init_args + (dir / "w1.pmnw").string(),
                  dir / "init1.out", dir / "init1.err") == 0,
          "init-weights run 1 failed");
  require(run_cli(ctx, init_args + (dir / "w2.pmnw").string(),
                  dir / "init2.out", dir / "init2.err") == 0,
          "init-weights run 2 failed");
  require(slurp(dir / "w1.pmnw") == slurp(dir / "w2.pmnw"),
          "same-seed weight files differ");

  const std::string gen_base = "generate --query " +
                               (dir / "query.pmnw").string() + " --support " +
                               (dir / "support.pmnw").string() + " --mask " +
                               (dir / "mask.pmtn").string() + " --weights " +
                               (dir / "w1.pmnw").string() +
                               " --patches 1,3,5 --levels middle,high";
  require(run_cli(ctx,
                  gen_base + " --out " + (dir / "out1.pmtn").string(),
                  dir / "gen1.out", dir / "gen1.err") == 0,
          "generate run 1 failed");
  require(run_cli(ctx,
                  gen_base + " --out " + (dir / "out2.pmtn").string(),
                  dir / "gen2.out", dir / "gen2.err") == 0,
          "generate run 2 failed");
  require(slurp(dir / "out1.pmtn") == slurp(dir / "out2.pmtn"),
          "same-input generate outputs differ");

  require(run_cli(ctx,
                  gen_base + " --threads 1 --out " +
                      (dir / "out_t1.pmtn").string(),
                  dir / "gen3.out", dir / "gen3.err") == 0,
          "generate with --threads 1 failed");
  const TensorData parallel = load_tensor(dir / "out1.pmtn");
  const TensorData serial = load_tensor(dir / "out_t1.pmtn");
  require(parallel.dims == serial.dims, "thread-count changed the shape");
  double diff = 0.0;
  for (std::size_t i = 0; i < parallel.values.size(); ++i) {
    diff = std::max(diff, std::abs(static_cast<double>(parallel.values[i]) -
                                   serial.values[i]));
  }
  require(diff <= 1e-5,
          "threads=1 vs default diff " + std::to_string(diff));
}

// --- criterion 10: serialization round trips and fuzzed headers -----------

void serialization(Ctx&) {
  SplitMix64 rng(1011);

  // bitwise round trips through encode/decode
  for (int round = 0; round < 20; ++round) {
    TensorData tensor;
    const int rank = 1 + static_cast<int>(rng.next_below(4));
    std::uint64_t count = 1;
    for (int i = 0; i < rank; ++i) {
      tensor.dims.push_back(1 + rng.next_below(6));
      count *= tensor.dims.back();
    }
    tensor.values.resize(static_cast<std::size_t>(count));
    for (auto& v : tensor.values) {
      v = static_cast<float>(rng.next_double(-100.0, 100.0));
    }
    const TensorData back = decode_tensor(encode_tensor(tensor));
    require(back.dims == tensor.dims, "round trip changed dims");
    require(std::memcmp(back.values.data(), tensor.values.data(),
                        tensor.values.size() * sizeof(float)) == 0,
            "round trip changed the payload");
  }
  {
    NamedTensors store;
    store.add("nsm.high.m1.w1", TensorData{{9, 4}, std::vector<float>(36, 1.f)});
    store.add("nsm.high.m1.b1", TensorData{{4}, std::vector<float>(4, 0.f)});
    const std::vector<std::uint8_t> bytes = encode_weights(store);
    const NamedTensors back = decode_weights(bytes);
    require(encode_weights(back) == bytes, "weight file round trip differs");
  }

  // 1000 corrupt headers: every one must raise a typed error, none may
  // crash or silently succeed.
  const std::vector<std::uint8_t> tensor_bytes =
      encode_tensor(TensorData{{3, 4, 5}, std::vector<float>(60, 2.0f)});
  NamedTensors store;
  store.add("alpha", TensorData{{2, 3}, std::vector<float>(6, 1.0f)});
  store.add("beta", TensorData{{4}, std::vector<float>(4, 2.0f)});
  const std::vector<std::uint8_t> weight_bytes = encode_weights(store);

  int fuzzed = 0;
  int typed = 0;
  const auto expect_typed_error = [&](const std::vector<std::uint8_t>& bytes,
                                      bool weight_file) {
    ++fuzzed;
    try {
      if (weight_file) {
        (void)decode_weights(bytes);
      } else {
        (void)decode_tensor(bytes);
      }
    } catch (const Error&) {
      ++typed;
    }
  };

  const std::size_t tensor_header = 4 + 4 + 4 + 3 * 8;
  while (fuzzed < 600) {
    std::vector<std::uint8_t> bytes = tensor_bytes;
    const int flips = 1 + static_cast<int>(rng.next_below(4));
    for (int f = 0; f < flips; ++f) {
      bytes[rng.next_below(tensor_header)] ^=
          static_cast<std::uint8_t>(1u << rng.next_below(8));
    }
    if (bytes == tensor_bytes) continue;
    expect_typed_error(bytes, false);
  }
  while (fuzzed < 800) {
    std::vector<std::uint8_t> bytes = tensor_bytes;
    bytes.resize(rng.next_below(bytes.size()));
    expect_typed_error(bytes, false);
  }
  // magic, version, record count and the first name length are structural;
  // name characters themselves are arbitrary data, so flipping them keeps
  // the file valid.
  const std::size_t weight_header = 4 + 4 + 4 + 2;
  while (fuzzed < 1000) {
    std::vector<std::uint8_t> bytes = weight_bytes;
    const int flips = 1 + static_cast<int>(rng.next_below(3));
    for (int f = 0; f < flips; ++f) {
      bytes[rng.next_below(weight_header)] ^=
          static_cast<std::uint8_t>(1u << rng.next_below(8));
    }
    if (bytes == weight_bytes) continue;
    expect_typed_error(bytes, true);
  }
  require(fuzzed == 1000, "expected exactly 1000 fuzz cases");
  require(typed == fuzzed, std::to_string(fuzzed - typed) +
                               " corrupt inputs did not raise typed errors");
}

// --- criterion 11: kernel benchmark ---------------------------------------

void kernel_benchmark(Ctx& ctx) {
  const fs::path dir = ctx.tmp / "bench";
  fs::create_directories(dir);
  const fs::path csv = dir / "bench.csv";
  require(run_cli(ctx,
                  "bench --hq 60 --wq 60 --hs 30 --ws 30 --d 256 "
                  "--patches 1,3,5 --iters 1 --impl both",
                  csv, dir / "bench.err") == 0,
          "bench command failed");

  std::ifstream in(csv);
  std::string line;
  double naive_rate = 0.0, optimized_rate = 0.0;
  while (std::getline(in, line)) {
    std::stringstream row(line);
    std::string field;
    std::vector<std::string> fields;
    while (std::getline(row, field, ',')) fields.push_back(field);
    if (fields.size() < 10) continue;
    if (fields[0] == "naive") naive_rate = std::stod(fields[9]);
    if (fields[0] == "optimized") optimized_rate = std::stod(fields[9]);
  }
  require(naive_rate > 0.0 && optimized_rate > 0.0,
          "could not parse both rates from the bench CSV");
  const double speedup = optimized_rate / naive_rate;
  std::cout << "  [bench] naive " << naive_rate << " evals/s, optimized "
            << optimized_rate << " evals/s, speedup " << speedup << "x\n";
  require(speedup >= 2.0,
          "optimized/naive speedup " + std::to_string(speedup) + " below 2.0");
}

struct Criterion {
  const char* name;
  std::function<void(Ctx&)> run;
  double budget_seconds;  // 0 = no stated budget
};

}  // namespace

int main(int argc, char** argv) {
  Ctx ctx;
  if (argc > 1) {
    ctx.cli = argv[1];
  } else {
    ctx.cli = fs::path(argv[0]).parent_path() / "priormask";
  }
  if (!fs::exists(ctx.cli)) {
    std::cerr << "cli binary not found at " << ctx.cli << "\n";
    return 1;
  }
  ctx.tmp = fs::temp_directory_path() /
            ("priormask-acceptance-" + std::to_string(::getpid()));
  fs::create_directories(ctx.tmp);

  const std::vector<Criterion> criteria = {
      {"baseline-equivalence", baseline_equivalence, 10.0},
      {"oracle-equivalence", oracle_equivalence, 60.0},
      {"m1-degeneracy", m1_degeneracy, 0.0},
      {"range-laws", range_laws, 0.0},
      {"nsm-gradient-check", nsm_gradient_check, 5.0},
      {"fit-convergence", fit_convergence, 10.0},
      {"configuration-arithmetic", configuration_arithmetic, 0.0},
      {"invariance-suite", invariance_suite, 0.0},
      {"determinism", determinism, 0.0},
      {"serialization", serialization, 0.0},
      {"kernel-benchmark", kernel_benchmark, 300.0},
  };

  int failures = 0;
  for (const Criterion& criterion : criteria) {
    const auto start = std::chrono::steady_clock::now();
    std::string failure;
    try {
      Ctx local = ctx;
      criterion.run(local);
    } catch (const std::exception& e) {
      failure = e.what();
    }
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
            .count();
    if (failure.empty() && criterion.budget_seconds > 0.0 &&
        elapsed > criterion.budget_seconds) {
      failure = "exceeded the " + std::to_string(criterion.budget_seconds) +
                "s budget (" + std::to_string(elapsed) + "s)";
    }
    if (failure.empty()) {
      std::cout << "PASS: " << criterion.name << " (" << elapsed << "s)\n";
    } else {
      std::cout << "FAIL: " << criterion.name << ": " << failure << "\n";
      ++failures;
    }
  }

  fs::remove_all(ctx.tmp);
  if (failures == 0) {
    std::cout << "all " << criteria.size() << " acceptance criteria passed\n";
  }
  return failures;
}
