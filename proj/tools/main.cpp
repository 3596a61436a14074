// Command-line front end: prior generation, oracle cross-check, weight
// init/fitting, tensor comparison and the correlation kernel benchmark.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "priormask/io.hpp"
#include "priormask/matching.hpp"
#include "priormask/noise.hpp"
#include "priormask/pipeline.hpp"
#include "priormask/rng.hpp"
#include "priormask/tensor.hpp"

namespace {

using namespace priormask;
using nlohmann::json;

// Exit codes: 0 ok, 1 tolerance/numeric failure, 2 usage or shape error,
// 3 io/format error.
int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const DimensionError*>(&e) != nullptr) return 2;
  if (dynamic_cast<const ParameterError*>(&e) != nullptr) return 2;
  if (dynamic_cast<const IoError*>(&e) != nullptr) return 3;
  if (dynamic_cast<const FormatError*>(&e) != nullptr) return 3;
  return 1;
}

bool parse_on_off(const std::string& value, const std::string& flag) {
  if (value == "on") return true;
  if (value == "off") return false;
  throw ParameterError(flag + " must be 'on' or 'off', got '" + value + "'");
}

std::vector<FeatureLevel> parse_levels(const std::string& csv) {
  std::vector<FeatureLevel> levels;
  std::size_t start = 0;
  while (start <= csv.size()) {
    std::size_t comma = csv.find(',', start);
    if (comma == std::string::npos) comma = csv.size();
    const std::string token = csv.substr(start, comma - start);
    const auto level = parse_level(token);
    if (!level) {
      throw ParameterError("unknown level '" + token +
                           "' (expected 'middle' or 'high')");
    }
    levels.push_back(*level);
    start = comma + 1;
    if (comma == csv.size()) break;
  }
  if (levels.empty()) throw ParameterError("levels list is empty");
  return levels;
}

std::vector<std::string> split_csv(const std::string& csv) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= csv.size()) {
    std::size_t comma = csv.find(',', start);
    if (comma == std::string::npos) comma = csv.size();
    out.push_back(csv.substr(start, comma - start));
    start = comma + 1;
    if (comma == csv.size()) break;
  }
  return out;
}

// Reads the 4-byte magic so one flag can accept either a bare tensor file
// or a named-record container with one tensor per level.
std::string sniff_magic(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  char magic[4] = {0, 0, 0, 0};
  in.read(magic, 4);
  return std::string(magic, magic + in.gcount());
}

std::map<FeatureLevel, FeatureMap> load_level_features(
    const std::filesystem::path& path,
    const std::vector<FeatureLevel>& levels) {
  const std::string magic = sniff_magic(path);
  std::map<FeatureLevel, FeatureMap> out;
  if (magic == "PMTN") {
    if (levels.size() != 1) {
      throw ParameterError("'" + path.string() +
                           "' holds a single tensor but " +
                           std::to_string(levels.size()) +
                           " levels are configured; use a named-record file "
                           "with one tensor per level");
    }
    out.emplace(levels[0], feature_map_from(load_tensor(path)));
    return out;
  }
  const NamedTensors store = load_weights(path);
  for (const FeatureLevel level : levels) {
    const std::string name(to_string(level));
    const TensorData* tensor = store.find(name);
    if (tensor == nullptr) {
      throw FormatError("'" + path.string() + "' has no record named '" +
                        name + "'");
    }
    out.emplace(level, feature_map_from(*tensor));
  }
  return out;
}

std::string nsm_record_prefix(FeatureLevel level, int patch) {
  return "nsm." + std::string(to_string(level)) + ".m" + std::to_string(patch);
}

std::string projection_record_prefix(FeatureLevel level) {
  return "proj." + std::string(to_string(level));
}

struct GenerateArgs {
  std::string query_path;
  std::vector<std::string> support_paths;
  std::vector<std::string> mask_paths;
  std::string patches = "1,3,5";
  std::string levels = "middle,high";
  std::string nsm = "on";
  std::string pool_support = "on";
  std::string pool_query = "off";
  std::string weights_path;
  std::string proj_path;
  std::string out_path;
  std::string heatmap_dir;
  std::string config_path;
  double epsilon = 1e-7;
  int threads = 0;
};

struct GenerateFlags {
  CLI::Option* query = nullptr;
  CLI::Option* support = nullptr;
  CLI::Option* mask = nullptr;
  CLI::Option* patches = nullptr;
  CLI::Option* levels = nullptr;
  CLI::Option* nsm = nullptr;
  CLI::Option* pool_support = nullptr;
  CLI::Option* pool_query = nullptr;
  CLI::Option* weights = nullptr;
  CLI::Option* proj = nullptr;
  CLI::Option* out = nullptr;
  CLI::Option* heatmap = nullptr;
  CLI::Option* epsilon = nullptr;
  CLI::Option* threads = nullptr;
};

GenerateFlags add_generate_flags(CLI::App* cmd, GenerateArgs& args) {
  GenerateFlags flags;
  flags.query = cmd->add_option("--query", args.query_path,
                                "Query feature tensor (or per-level records)");
  flags.support = cmd->add_option(
      "--support", args.support_paths,
      "Support feature tensor, repeat per shot");
  flags.mask = cmd->add_option("--mask", args.mask_paths,
                               "Support mask tensor, repeat per shot");
  flags.patches =
      cmd->add_option("--patches", args.patches, "Patch sizes, e.g. 1,3,5");
  flags.levels =
      cmd->add_option("--levels", args.levels, "Feature levels, e.g. middle,high");
  flags.nsm = cmd->add_option("--nsm", args.nsm,
                              "Learned noise suppression: on|off");
  flags.pool_support = cmd->add_option("--pool-support", args.pool_support,
                                       "2x2-pool masked support: on|off");
  flags.pool_query = cmd->add_option("--pool-query", args.pool_query,
                                     "2x2-pool query features: on|off");
  flags.weights = cmd->add_option("--weights", args.weights_path,
                                  "Rectifier weight file (needed when --nsm on)");
  flags.proj = cmd->add_option("--proj", args.proj_path,
                               "Channel projection weight file");
  flags.out = cmd->add_option("--out", args.out_path, "Output prior tensor");
  flags.heatmap = cmd->add_option("--heatmap", args.heatmap_dir,
                                  "Directory for per-channel PGM heatmaps");
  flags.epsilon = cmd->add_option("--epsilon", args.epsilon,
                                  "Min-max normalization epsilon");
  flags.threads =
      cmd->add_option("--threads", args.threads, "Kernel threads, 0 = auto");
  cmd->add_option("--config", args.config_path,
                  "key=value config file; flags override it");
  return flags;
}

// Applies config-file values to options the command line left untouched.
void merge_config_file(const GenerateArgs& parsed, GenerateArgs& args,
                       const GenerateFlags& flags) {
  if (parsed.config_path.empty()) return;
  const auto entries = parse_key_value_lines(read_text_file(parsed.config_path));
  for (const auto& [key, value] : entries) {
    const auto untouched = [](CLI::Option* opt) { return opt->count() == 0; };
    if (key == "query") {
      if (untouched(flags.query)) args.query_path = value;
    } else if (key == "support") {
      if (untouched(flags.support)) args.support_paths = split_csv(value);
    } else if (key == "mask") {
      if (untouched(flags.mask)) args.mask_paths = split_csv(value);
    } else if (key == "patches") {
      if (untouched(flags.patches)) args.patches = value;
    } else if (key == "levels") {
      if (untouched(flags.levels)) args.levels = value;
    } else if (key == "nsm") {
      if (untouched(flags.nsm)) args.nsm = value;
    } else if (key == "pool-support") {
      if (untouched(flags.pool_support)) args.pool_support = value;
    } else if (key == "pool-query") {
      if (untouched(flags.pool_query)) args.pool_query = value;
    } else if (key == "weights") {
      if (untouched(flags.weights)) args.weights_path = value;
    } else if (key == "proj") {
      if (untouched(flags.proj)) args.proj_path = value;
    } else if (key == "out") {
      if (untouched(flags.out)) args.out_path = value;
    } else if (key == "heatmap") {
      if (untouched(flags.heatmap)) args.heatmap_dir = value;
    } else if (key == "epsilon") {
      if (untouched(flags.epsilon)) {
        try {
          args.epsilon = std::stod(value);
        } catch (const std::exception&) {
          throw ParameterError("config key 'epsilon': bad number '" + value +
                               "'");
        }
      }
    } else if (key == "threads") {
      if (untouched(flags.threads)) {
        try {
          args.threads = std::stoi(value);
        } catch (const std::exception&) {
          throw ParameterError("config key 'threads': bad number '" + value +
                               "'");
        }
      }
    } else {
      throw ParameterError("unknown config key '" + key + "'");
    }
  }
}

int run_generate(const GenerateArgs& args, bool use_naive_kernel) {
  if (args.query_path.empty()) throw ParameterError("--query is required");
  if (args.out_path.empty()) throw ParameterError("--out is required");
  if (args.support_paths.empty()) {
    throw ParameterError("at least one --support is required");
  }
  if (args.support_paths.size() != args.mask_paths.size()) {
    throw ParameterError("got " + std::to_string(args.support_paths.size()) +
                         " --support but " +
                         std::to_string(args.mask_paths.size()) + " --mask");
  }

  PipelineConfig config;
  config.patches = PatchSet::parse(args.patches);
  config.levels = parse_levels(args.levels);
  config.use_nsm = parse_on_off(args.nsm, "--nsm");
  config.pool_support = parse_on_off(args.pool_support, "--pool-support");
  config.pool_query = parse_on_off(args.pool_query, "--pool-query");
  config.epsilon = static_cast<float>(args.epsilon);
  config.threads = args.threads;
  config.use_naive_kernel = use_naive_kernel;

  Episode episode;
  episode.query = load_level_features(args.query_path, config.levels);
  for (std::size_t i = 0; i < args.support_paths.size(); ++i) {
    episode.shots.push_back(SupportShot{
        load_level_features(args.support_paths[i], config.levels),
        binary_mask_from(load_tensor(args.mask_paths[i]))});
  }

  NsmWeightSet nsm_weights;
  if (config.use_nsm) {
    if (args.weights_path.empty()) {
      throw ParameterError("--weights is required when --nsm is on");
    }
    const NamedTensors store = load_weights(args.weights_path);
    for (const FeatureLevel level : config.levels) {
      for (const int m : config.patches.sizes) {
        nsm_weights.emplace(
            std::make_pair(level, m),
            nsm_weights_from(store, nsm_record_prefix(level, m)));
      }
    }
  }

  ProjectionSet projections;
  if (!args.proj_path.empty()) {
    const NamedTensors store = load_weights(args.proj_path);
    for (const FeatureLevel level : config.levels) {
      projections.emplace(level, projection_weights_from(
                                     store, projection_record_prefix(level)));
    }
  }

  const PriorResult result = generate_prior(
      episode, config, config.use_nsm ? &nsm_weights : nullptr,
      projections.empty() ? nullptr : &projections);

  for (const std::string& warning : result.warnings) {
    std::cerr << "warning: " << warning << "\n";
  }

  save_tensor(args.out_path, to_tensor(result.stack));

  const PriorStack& stack = result.stack;
  for (int c = 0; c < stack.channels; ++c) {
    PriorChannel channel;
    channel.height = stack.height;
    channel.width = stack.width;
    channel.data.resize(static_cast<std::size_t>(stack.height) * stack.width);
    for (std::size_t i = 0; i < channel.data.size(); ++i) {
      channel.data[i] = stack.data[i * stack.channels + c];
    }
    if (!args.heatmap_dir.empty()) {
      std::filesystem::create_directories(args.heatmap_dir);
      export_pgm(channel, std::filesystem::path(args.heatmap_dir) /
                              ("channels_" + std::to_string(c) + ".pgm"));
    }
    float lo = channel.data[0], hi = channel.data[0];
    double sum = 0.0;
    for (float v : channel.data) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
      sum += v;
    }
    json line;
    line["channel"] = c;
    line["level"] = std::string(to_string(result.channels[c].level));
    line["patch"] = result.channels[c].patch;
    line["min"] = lo;
    line["max"] = hi;
    line["mean"] = sum / static_cast<double>(channel.data.size());
    std::cout << line.dump() << "\n";
  }
  return 0;
}

int run_compare(const std::string& path_a, const std::string& path_b,
                double tol) {
  const TensorData a = load_tensor(path_a);
  const TensorData b = load_tensor(path_b);
  if (a.dims != b.dims) {
    throw DimensionError("tensor shapes differ between '" + path_a +
                         "' and '" + path_b + "'");
  }
  double max_abs = 0.0;
  double sum_abs = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    const double d = std::abs(static_cast<double>(a.values[i]) - b.values[i]);
    max_abs = std::max(max_abs, d);
    sum_abs += d;
  }
  const double mean_abs =
      a.values.empty() ? 0.0 : sum_abs / static_cast<double>(a.values.size());
  json line;
  line["max_abs_diff"] = max_abs;
  line["mean_abs_diff"] = mean_abs;
  line["tol"] = tol;
  std::cout << line.dump() << "\n";
  return max_abs <= tol ? 0 : 1;
}

int run_init_weights(int hs, int ws, int hidden, std::uint64_t seed,
                     const std::string& patches_csv,
                     const std::string& levels_csv, int proj_in, int proj_out,
                     const std::string& out_path) {
  const PatchSet patches = PatchSet::parse(patches_csv);
  const std::vector<FeatureLevel> levels = parse_levels(levels_csv);
  if (hs <= 0 || ws <= 0) {
    throw ParameterError("--hs and --ws must be positive");
  }
  NamedTensors store;
  SplitMix64 master(seed);
  for (const FeatureLevel level : levels) {
    for (const int m : patches.sizes) {
      add_nsm_weights(store, nsm_record_prefix(level, m),
                      init_nsm_weights(hs * ws, hidden, master.next()));
    }
  }
  if (proj_in > 0) {
    for (const FeatureLevel level : levels) {
      add_projection_weights(
          store, projection_record_prefix(level),
          init_projection_weights(proj_in, proj_out, master.next()));
    }
  }
  save_weights(out_path, store);
  return 0;
}

int run_fit(const std::string& slice_path, const std::string& target_path,
            const std::string& weights_path, const std::string& record_name,
            double learning_rate, int steps, const std::string& out_path) {
  if (steps < 0) throw ParameterError("--steps must be >= 0");
  const CorrSlice slice = corr_slice_from(load_tensor(slice_path));
  const PriorChannel target = prior_channel_from(load_tensor(target_path));
  NamedTensors store = load_weights(weights_path);

  std::string prefix = record_name;
  if (prefix.empty()) {
    for (const auto& [name, tensor] : store.records) {
      if (name.size() > 3 && name.ends_with(".w1")) {
        if (!prefix.empty()) {
          throw ParameterError(
              "weight file has several record groups; pick one with --name");
        }
        prefix = name.substr(0, name.size() - 3);
      }
    }
    if (prefix.empty()) {
      throw FormatError("weight file has no rectifier records");
    }
  }

  NsmWeights weights = nsm_weights_from(store, prefix);
  for (int step = 0; step < steps; ++step) {
    FitStepResult result = fit_step(slice, weights, target, learning_rate);
    json line;
    line["step"] = step;
    line["loss"] = result.loss;
    std::cout << line.dump() << "\n";
    weights = std::move(result.weights);
  }

  for (auto& [name, tensor] : store.records) {
    if (name == prefix + ".w1") tensor.values = weights.w1;
    if (name == prefix + ".b1") tensor.values = weights.b1;
    if (name == prefix + ".w2") tensor.values = weights.w2;
    if (name == prefix + ".b2") tensor.values = weights.b2;
  }
  save_weights(out_path, store);
  return 0;
}

FeatureMap make_random_unit_features(int height, int width, int channels,
                                     SplitMix64& rng) {
  std::vector<float> data(static_cast<std::size_t>(height) * width * channels);
  for (auto& v : data) {
    v = static_cast<float>(rng.next_double(-1.0, 1.0));
  }
  return l2_normalize_channels(FeatureMap(height, width, channels, data));
}

int run_bench(int hq, int wq, int hs, int ws, int channels,
              const std::string& patches_csv, int iters,
              const std::string& impl, int threads, std::uint64_t seed) {
  if (iters < 1) throw ParameterError("--iters must be >= 1");
  const bool run_naive = impl == "naive" || impl == "both";
  const bool run_optimized = impl == "optimized" || impl == "both";
  if (!run_naive && !run_optimized) {
    throw ParameterError("--impl must be naive, optimized or both");
  }
  const PatchSet patches = PatchSet::parse(patches_csv);
  SplitMix64 rng(seed);
  const FeatureMap query = make_random_unit_features(hq, wq, channels, rng);
  const FeatureMap support = make_random_unit_features(hs, ws, channels, rng);
  const KernelOptions options{threads};

  struct BenchRow {
    std::string impl;
    double median_seconds = 0.0;
  };
  std::vector<BenchRow> rows;
  std::vector<float> naive_out;
  std::vector<float> optimized_out;

  const auto time_runs = [&](const std::string& name, auto&& kernel,
                             std::vector<float>& first_output) {
    std::vector<double> times;
    times.reserve(iters);
    for (int i = 0; i < iters; ++i) {
      const auto start = std::chrono::steady_clock::now();
      const CorrVolume volume = kernel();
      const auto stop = std::chrono::steady_clock::now();
      times.push_back(std::chrono::duration<double>(stop - start).count());
      if (i == 0) {
        first_output.assign(volume.values().begin(), volume.values().end());
      }
    }
    std::sort(times.begin(), times.end());
    const double median = times[times.size() / 2];
    rows.push_back(BenchRow{name, median});
  };

  if (run_naive) {
    time_runs("naive",
              [&] { return stack_patches_naive(query, support, patches); },
              naive_out);
  }
  if (run_optimized) {
    time_runs(
        "optimized",
        [&] { return stack_patches(query, support, patches, options); },
        optimized_out);
  }

  if (run_naive && run_optimized) {
    double max_abs = 0.0;
    for (std::size_t i = 0; i < naive_out.size(); ++i) {
      max_abs = std::max(max_abs, std::abs(static_cast<double>(naive_out[i]) -
                                           optimized_out[i]));
    }
    if (max_abs > 1e-4) {
      std::cerr << "error: kernel outputs disagree, max-abs-diff " << max_abs
                << "\n";
      return 1;
    }
  }

  std::string patch_label;
  for (std::size_t i = 0; i < patches.sizes.size(); ++i) {
    if (i > 0) patch_label += ';';
    patch_label += std::to_string(patches.sizes[i]);
  }
  const double evals = static_cast<double>(hq) * wq * hs * ws *
                       static_cast<double>(patches.count());
  std::cout << "impl,hq,wq,hs,ws,d,patches,iters,median_seconds,evals_per_"
               "second\n";
  for (const BenchRow& row : rows) {
    std::cout << row.impl << "," << hq << "," << wq << "," << hs << "," << ws
              << "," << channels << "," << patch_label << "," << iters << ","
              << row.median_seconds << "," << evals / row.median_seconds
              << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Correlation-driven prior mask generation"};
  app.require_subcommand(1);

  GenerateArgs gen_args;
  CLI::App* generate = app.add_subcommand(
      "generate", "Generate a prior stack from query/support features");
  const GenerateFlags gen_flags = add_generate_flags(generate, gen_args);

  GenerateArgs oracle_args;
  CLI::App* oracle = app.add_subcommand(
      "oracle", "Same as generate, but through the reference kernels");
  const GenerateFlags oracle_flags = add_generate_flags(oracle, oracle_args);

  std::string cmp_a, cmp_b;
  double cmp_tol = 0.0;
  CLI::App* compare =
      app.add_subcommand("compare", "Compare two tensor files");
  compare->add_option("a", cmp_a, "First tensor")->required();
  compare->add_option("b", cmp_b, "Second tensor")->required();
  compare->add_option("--tol", cmp_tol, "Max-abs-diff tolerance");

  int iw_hs = 0, iw_ws = 0, iw_d = 256, iw_proj_in = 0, iw_proj_out = 256;
  std::uint64_t iw_seed = 42;
  std::string iw_patches = "1,3,5", iw_levels = "middle,high", iw_out;
  CLI::App* init_weights = app.add_subcommand(
      "init-weights", "Write deterministic rectifier/projection weights");
  init_weights->add_option("--hs", iw_hs, "Support grid height (after pooling)")
      ->required();
  init_weights->add_option("--ws", iw_ws, "Support grid width (after pooling)")
      ->required();
  init_weights->add_option("--d", iw_d, "Rectifier hidden width");
  init_weights->add_option("--seed", iw_seed, "Seed");
  init_weights->add_option("--patches", iw_patches, "Patch sizes");
  init_weights->add_option("--levels", iw_levels, "Feature levels");
  init_weights->add_option("--proj-in", iw_proj_in,
                           "Projection input channels (0 = none)");
  init_weights->add_option("--proj-out", iw_proj_out,
                           "Projection output channels");
  init_weights->add_option("--out", iw_out, "Output weight file")->required();

  std::string fit_slice, fit_target, fit_weights, fit_name, fit_out;
  double fit_lr = 0.1;
  int fit_steps = 200;
  CLI::App* fit = app.add_subcommand(
      "fit", "Gradient-descent fit of rectifier weights on one slice");
  fit->add_option("--slice", fit_slice, "Correlation slice tensor")->required();
  fit->add_option("--target", fit_target, "Target channel tensor")->required();
  fit->add_option("--weights", fit_weights, "Input weight file")->required();
  fit->add_option("--name", fit_name, "Record group, e.g. nsm.high.m1");
  fit->add_option("--lr", fit_lr, "Learning rate");
  fit->add_option("--steps", fit_steps, "Number of steps");
  fit->add_option("--out", fit_out, "Output weight file")->required();

  int b_hq = 60, b_wq = 60, b_hs = 30, b_ws = 30, b_d = 256, b_iters = 3,
      b_threads = 0;
  std::uint64_t b_seed = 1234;
  std::string b_patches = "1,3,5", b_impl = "both";
  CLI::App* bench = app.add_subcommand(
      "bench", "Time the correlation kernels on synthetic features");
  bench->add_option("--hq", b_hq, "Query grid height");
  bench->add_option("--wq", b_wq, "Query grid width");
  bench->add_option("--hs", b_hs, "Support grid height");
  bench->add_option("--ws", b_ws, "Support grid width");
  bench->add_option("--d", b_d, "Feature channels");
  bench->add_option("--patches", b_patches, "Patch sizes");
  bench->add_option("--iters", b_iters, "Timed iterations per impl");
  bench->add_option("--impl", b_impl, "naive|optimized|both");
  bench->add_option("--threads", b_threads, "Kernel threads, 0 = auto");
  bench->add_option("--seed", b_seed, "Seed for synthetic features");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (generate->parsed()) {
      GenerateArgs merged = gen_args;
      merge_config_file(gen_args, merged, gen_flags);
      return run_generate(merged, /*use_naive_kernel=*/false);
    }
    if (oracle->parsed()) {
      GenerateArgs merged = oracle_args;
      merge_config_file(oracle_args, merged, oracle_flags);
      return run_generate(merged, /*use_naive_kernel=*/true);
    }
    if (compare->parsed()) {
      return run_compare(cmp_a, cmp_b, cmp_tol);
    }
    if (init_weights->parsed()) {
      return run_init_weights(iw_hs, iw_ws, iw_d, iw_seed, iw_patches,
                              iw_levels, iw_proj_in, iw_proj_out, iw_out);
    }
    if (fit->parsed()) {
      return run_fit(fit_slice, fit_target, fit_weights, fit_name, fit_lr,
                     fit_steps, fit_out);
    }
    if (bench->parsed()) {
      return run_bench(b_hq, b_wq, b_hs, b_ws, b_d, b_patches, b_iters, b_impl,
                       b_threads, b_seed);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  }
  return 2;
}
