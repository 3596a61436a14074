#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cstring>
#include <string>
#include <utility>
#include <vector>

#include "priormask/io.hpp"
#include "priormask/matching.hpp"
#include "priormask/noise.hpp"
#include "priormask/pipeline.hpp"
#include "priormask/tensor.hpp"

namespace py = pybind11;
using namespace priormask;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

std::vector<float> to_vector(const FloatArray& arr) {
  const auto* ptr = arr.data();
  return std::vector<float>(ptr, ptr + arr.size());
}

FeatureMap feature_map_from_array(const FloatArray& arr) {
  if (arr.ndim() != 3) {
    throw DimensionError("feature array must be (height, width, channels)");
  }
  return FeatureMap(static_cast<int>(arr.shape(0)),
                    static_cast<int>(arr.shape(1)),
                    static_cast<int>(arr.shape(2)), to_vector(arr));
}

BinaryMask mask_from_array(const FloatArray& arr) {
  if (arr.ndim() != 2) {
    throw DimensionError("mask array must be (height, width)");
  }
  return BinaryMask(static_cast<int>(arr.shape(0)),
                    static_cast<int>(arr.shape(1)), to_vector(arr));
}

CorrSlice slice_from_array(const FloatArray& arr) {
  CorrSlice slice;
  if (arr.ndim() == 2) {
    slice.height = static_cast<int>(arr.shape(0));
    slice.width = 1;
    slice.s_positions = static_cast<int>(arr.shape(1));
  } else if (arr.ndim() == 3) {
    slice.height = static_cast<int>(arr.shape(0));
    slice.width = static_cast<int>(arr.shape(1));
    slice.s_positions = static_cast<int>(arr.shape(2));
  } else {
    throw DimensionError("slice array must be 2-d or 3-d");
  }
  slice.data = to_vector(arr);
  slice.validate();
  return slice;
}

py::array_t<float> array_from(const FeatureMap& f) {
  py::array_t<float> out({f.height(), f.width(), f.channels()});
  std::memcpy(out.mutable_data(), f.values().data(),
              f.values().size() * sizeof(float));
  return out;
}

py::array_t<float> array_from_channel(const PriorChannel& c) {
  py::array_t<float> out({c.height, c.width});
  std::memcpy(out.mutable_data(), c.data.data(), c.data.size() * sizeof(float));
  return out;
}

py::array_t<float> array_from_stack(const PriorStack& s) {
  py::array_t<float> out({s.height, s.width, s.channels});
  std::memcpy(out.mutable_data(), s.data.data(), s.data.size() * sizeof(float));
  return out;
}

ProjectionWeights projection_from_arrays(const FloatArray& matrix,
                                         const FloatArray& bias) {
  if (matrix.ndim() != 2 || bias.ndim() != 1) {
    throw DimensionError("projection needs a 2-d matrix and a 1-d bias");
  }
  ProjectionWeights w;
  w.in_channels = static_cast<int>(matrix.shape(0));
  w.out_channels = static_cast<int>(matrix.shape(1));
  w.matrix = to_vector(matrix);
  w.bias = to_vector(bias);
  w.validate();
  return w;
}

FeatureLevel level_from_name(const std::string& name) {
  const auto level = parse_level(name);
  if (!level) {
    throw ParameterError("unknown level '" + name +
                         "' (expected 'middle' or 'high')");
  }
  return *level;
}

std::map<FeatureLevel, FeatureMap> level_map_from_dict(const py::dict& d) {
  std::map<FeatureLevel, FeatureMap> out;
  for (const auto& item : d) {
    out.emplace(level_from_name(py::cast<std::string>(item.first)),
                feature_map_from_array(py::cast<FloatArray>(item.second)));
  }
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Prior mask generation from feature-map correlations";

  py::register_exception<Error>(m, "Error");

  py::class_<CorrVolume>(m, "CorrVolume")
      .def_property_readonly("n_patches", &CorrVolume::n_patches)
      .def_property_readonly("q_positions", &CorrVolume::q_positions)
      .def_property_readonly("s_positions", &CorrVolume::s_positions)
      .def_property_readonly("query_shape",
                             [](const CorrVolume& v) {
                               return py::make_tuple(
                                   v.geometry().query_height,
                                   v.geometry().query_width);
                             })
      .def_property_readonly("support_shape",
                             [](const CorrVolume& v) {
                               return py::make_tuple(
                                   v.geometry().support_height,
                                   v.geometry().support_width);
                             })
      .def("to_numpy",
           [](const CorrVolume& v) {
             py::array_t<float> out(
                 {v.q_positions(), v.s_positions(), v.n_patches()});
             std::memcpy(out.mutable_data(), v.values().data(),
                         v.values().size() * sizeof(float));
             return out;
           })
      .def("slice", [](const CorrVolume& v, int patch_index) {
        const CorrSlice s = v.slice(patch_index);
        py::array_t<float> out({s.q_positions(), s.s_positions});
        std::memcpy(out.mutable_data(), s.data.data(),
                    s.data.size() * sizeof(float));
        return out;
      });

  py::class_<NsmWeights>(m, "NsmWeights")
      .def(py::init([](const FloatArray& w1, const FloatArray& b1,
                       const FloatArray& w2, const FloatArray& b2) {
             if (w1.ndim() != 2 || b1.ndim() != 1 || w2.ndim() != 2 ||
                 b2.ndim() != 1) {
               throw DimensionError(
                   "expected w1 (s, hidden), b1 (hidden), w2 (hidden, s), "
                   "b2 (s)");
             }
             NsmWeights w;
             w.s_positions = static_cast<int>(w1.shape(0));
             w.hidden = static_cast<int>(w1.shape(1));
             w.w1 = to_vector(w1);
             w.b1 = to_vector(b1);
             w.w2 = to_vector(w2);
             w.b2 = to_vector(b2);
             w.validate();
             return w;
           }),
           py::arg("w1"), py::arg("b1"), py::arg("w2"), py::arg("b2"))
      .def_readonly("s_positions", &NsmWeights::s_positions)
      .def_readonly("hidden", &NsmWeights::hidden)
      .def_property_readonly("w1",
                             [](const NsmWeights& w) {
                               py::array_t<float> out(
                                   {w.s_positions, w.hidden});
                               std::memcpy(out.mutable_data(), w.w1.data(),
                                           w.w1.size() * sizeof(float));
                               return out;
                             })
      .def_property_readonly("b1",
                             [](const NsmWeights& w) {
                               py::array_t<float> out(w.hidden);
                               std::memcpy(out.mutable_data(), w.b1.data(),
                                           w.b1.size() * sizeof(float));
                               return out;
                             })
      .def_property_readonly("w2",
                             [](const NsmWeights& w) {
                               py::array_t<float> out(
                                   {w.hidden, w.s_positions});
                               std::memcpy(out.mutable_data(), w.w2.data(),
                                           w.w2.size() * sizeof(float));
                               return out;
                             })
      .def_property_readonly("b2", [](const NsmWeights& w) {
        py::array_t<float> out(w.s_positions);
        std::memcpy(out.mutable_data(), w.b2.data(),
                    w.b2.size() * sizeof(float));
        return out;
      });

  m.def(
      "hadamard_mask",
      [](const FloatArray& features, const FloatArray& mask) {
        return array_from(
            hadamard_mask(feature_map_from_array(features),
                          mask_from_array(mask)));
      },
      py::arg("features"), py::arg("mask"));

  m.def(
      "l2_normalize_channels",
      [](const FloatArray& features, float epsilon) {
        return array_from(
            l2_normalize_channels(feature_map_from_array(features), epsilon));
      },
      py::arg("features"), py::arg("epsilon") = 1e-12f);

  m.def(
      "avg_pool_2x2",
      [](const FloatArray& features) {
        return array_from(avg_pool_2x2(feature_map_from_array(features)));
      },
      py::arg("features"));

  m.def(
      "project_channels",
      [](const FloatArray& features, const FloatArray& matrix,
         const FloatArray& bias) {
        return array_from(project_channels(feature_map_from_array(features),
                                           projection_from_arrays(matrix,
                                                                  bias)));
      },
      py::arg("features"), py::arg("matrix"), py::arg("bias"));

  m.def(
      "elementwise_corr",
      [](const FloatArray& query, const FloatArray& support, int threads) {
        return elementwise_corr(feature_map_from_array(query),
                                feature_map_from_array(support),
                                KernelOptions{threads});
      },
      py::arg("query"), py::arg("support"), py::arg("threads") = 0);

  m.def(
      "patch_corr",
      [](const FloatArray& query, const FloatArray& support, int patch_size,
         int threads) {
        return patch_corr(feature_map_from_array(query),
                          feature_map_from_array(support), patch_size,
                          KernelOptions{threads});
      },
      py::arg("query"), py::arg("support"), py::arg("patch_size"),
      py::arg("threads") = 0);

  m.def(
      "stack_patches",
      [](const FloatArray& query, const FloatArray& support,
         const std::vector<int>& patches, int threads, bool naive) {
        const FeatureMap q = feature_map_from_array(query);
        const FeatureMap s = feature_map_from_array(support);
        const PatchSet set{patches};
        return naive ? stack_patches_naive(q, s, set)
                     : stack_patches(q, s, set, KernelOptions{threads});
      },
      py::arg("query"), py::arg("support"), py::arg("patches"),
      py::arg("threads") = 0, py::arg("naive") = false);

  m.def(
      "max_reduce",
      [](const CorrVolume& volume) {
        py::list out;
        for (const PriorChannel& c : max_reduce(volume)) {
          out.append(array_from_channel(c));
        }
        return out;
      },
      py::arg("volume"));

  m.def(
      "normalize_minmax",
      [](const FloatArray& channel, float epsilon) {
        if (channel.ndim() != 2) {
          throw DimensionError("channel array must be (height, width)");
        }
        PriorChannel c;
        c.height = static_cast<int>(channel.shape(0));
        c.width = static_cast<int>(channel.shape(1));
        c.data = to_vector(channel);
        return array_from_channel(normalize_minmax(c, epsilon));
      },
      py::arg("channel"), py::arg("epsilon") = 1e-7f);

  m.def(
      "concentrate",
      [](const FloatArray& slice) {
        const std::vector<float> means = concentrate(slice_from_array(slice));
        py::array_t<float> out(static_cast<py::ssize_t>(means.size()));
        std::memcpy(out.mutable_data(), means.data(),
                    means.size() * sizeof(float));
        return out;
      },
      py::arg("slice"));

  m.def(
      "rectify",
      [](const FloatArray& input, const NsmWeights& weights) {
        if (input.ndim() != 1) {
          throw DimensionError("rectify input must be 1-d");
        }
        const std::vector<float> in = to_vector(input);
        const Rectifier r = rectify(in, weights);
        py::array_t<float> out(static_cast<py::ssize_t>(r.values.size()));
        std::memcpy(out.mutable_data(), r.values.data(),
                    r.values.size() * sizeof(float));
        return out;
      },
      py::arg("input"), py::arg("weights"));

  m.def(
      "noise_filter",
      [](const FloatArray& slice, const FloatArray& rectifier) {
        if (rectifier.ndim() != 1) {
          throw DimensionError("rectifier must be 1-d");
        }
        const PriorChannel c = noise_filter(slice_from_array(slice),
                                            Rectifier{to_vector(rectifier)});
        py::array_t<float> out(static_cast<py::ssize_t>(c.data.size()));
        std::memcpy(out.mutable_data(), c.data.data(),
                    c.data.size() * sizeof(float));
        return out;
      },
      py::arg("slice"), py::arg("rectifier"));

  m.def("init_nsm_weights", &init_nsm_weights, py::arg("s_positions"),
        py::arg("hidden"), py::arg("seed"));

  m.def(
      "init_projection_weights",
      [](int in_channels, int out_channels, std::uint64_t seed) {
        const ProjectionWeights w =
            init_projection_weights(in_channels, out_channels, seed);
        py::array_t<float> matrix({w.in_channels, w.out_channels});
        std::memcpy(matrix.mutable_data(), w.matrix.data(),
                    w.matrix.size() * sizeof(float));
        py::array_t<float> bias(w.out_channels);
        std::memcpy(bias.mutable_data(), w.bias.data(),
                    w.bias.size() * sizeof(float));
        return py::make_tuple(matrix, bias);
      },
      py::arg("in_channels"), py::arg("out_channels"), py::arg("seed"));

  m.def(
      "fit_step",
      [](const FloatArray& slice, const NsmWeights& weights,
         const FloatArray& target, double learning_rate) {
        const CorrSlice s = slice_from_array(slice);
        PriorChannel t;
        t.height = s.height;
        t.width = s.width;
        t.data = to_vector(target);
        FitStepResult result = fit_step(s, weights, t, learning_rate);
        return py::make_tuple(std::move(result.weights), result.loss);
      },
      py::arg("slice"), py::arg("weights"), py::arg("target"),
      py::arg("learning_rate"));

  m.def(
      "generate_prior",
      [](const py::dict& query, const py::list& shots,
         const std::vector<int>& patches,
         const std::vector<std::string>& levels, bool use_nsm,
         const py::dict& weights, const py::object& projections,
         bool pool_support, bool pool_query, float epsilon, int threads,
         bool naive) {
        Episode episode;
        episode.query = level_map_from_dict(query);
        for (const auto& shot : shots) {
          const py::tuple pair = py::cast<py::tuple>(shot);
          episode.shots.push_back(
              SupportShot{level_map_from_dict(py::cast<py::dict>(pair[0])),
                          mask_from_array(py::cast<FloatArray>(pair[1]))});
        }

        PipelineConfig config;
        config.patches = PatchSet{patches};
        config.levels.clear();
        for (const std::string& name : levels) {
          config.levels.push_back(level_from_name(name));
        }
        config.use_nsm = use_nsm;
        config.pool_support = pool_support;
        config.pool_query = pool_query;
        config.epsilon = epsilon;
        config.threads = threads;
        config.use_naive_kernel = naive;

        NsmWeightSet weight_set;
        for (const auto& item : weights) {
          const std::string key = py::cast<std::string>(item.first);
          const std::size_t colon = key.find(':');
          if (colon == std::string::npos) {
            throw ParameterError("weight key '" + key +
                                 "' must look like 'high:3'");
          }
          weight_set.emplace(
              std::make_pair(level_from_name(key.substr(0, colon)),
                             std::stoi(key.substr(colon + 1))),
              py::cast<NsmWeights>(item.second));
        }

        ProjectionSet projection_set;
        if (!projections.is_none()) {
          for (const auto& item : py::cast<py::dict>(projections)) {
            const py::tuple pair = py::cast<py::tuple>(item.second);
            projection_set.emplace(
                level_from_name(py::cast<std::string>(item.first)),
                projection_from_arrays(py::cast<FloatArray>(pair[0]),
                                       py::cast<FloatArray>(pair[1])));
          }
        }

        const PriorResult result = generate_prior(
            episode, config, weight_set.empty() ? nullptr : &weight_set,
            projection_set.empty() ? nullptr : &projection_set);

        py::list channel_labels;
        for (const ChannelDesc& desc : result.channels) {
          channel_labels.append(py::make_tuple(
              std::string(to_string(desc.level)), desc.patch));
        }
        py::dict out;
        out["stack"] = array_from_stack(result.stack);
        out["channels"] = channel_labels;
        out["warnings"] = result.warnings;
        return out;
      },
      py::arg("query"), py::arg("shots"),
      py::arg("patches") = std::vector<int>{1, 3, 5},
      py::arg("levels") = std::vector<std::string>{"middle", "high"},
      py::arg("use_nsm") = true, py::arg("weights") = py::dict(),
      py::arg("projections") = py::none(), py::arg("pool_support") = true,
      py::arg("pool_query") = false, py::arg("epsilon") = 1e-7f,
      py::arg("threads") = 0, py::arg("naive") = false);

  m.def(
      "baseline_prior",
      [](const FloatArray& query, const py::list& supports,
         const py::list& masks, float epsilon) {
        Episode episode;
        episode.query.emplace(FeatureLevel::high,
                              feature_map_from_array(query));
        if (py::len(supports) != py::len(masks)) {
          throw ParameterError("supports and masks differ in length");
        }
        for (std::size_t i = 0; i < py::len(supports); ++i) {
          std::map<FeatureLevel, FeatureMap> features;
          features.emplace(
              FeatureLevel::high,
              feature_map_from_array(py::cast<FloatArray>(supports[i])));
          episode.shots.push_back(SupportShot{
              std::move(features),
              mask_from_array(py::cast<FloatArray>(masks[i]))});
        }
        return array_from_stack(baseline_prior(episode, epsilon));
      },
      py::arg("query"), py::arg("supports"), py::arg("masks"),
      py::arg("epsilon") = 1e-7f);

  m.def(
      "save_tensor",
      [](const std::filesystem::path& path, const FloatArray& array) {
        TensorData tensor;
        for (py::ssize_t i = 0; i < array.ndim(); ++i) {
          tensor.dims.push_back(static_cast<std::uint64_t>(array.shape(i)));
        }
        tensor.values = to_vector(array);
        save_tensor(path, tensor);
      },
      py::arg("path"), py::arg("array"));

  m.def(
      "load_tensor",
      [](const std::filesystem::path& path) {
        const TensorData tensor = load_tensor(path);
        std::vector<py::ssize_t> shape;
        for (std::uint64_t d : tensor.dims) {
          shape.push_back(static_cast<py::ssize_t>(d));
        }
        py::array_t<float> out(shape);
        std::memcpy(out.mutable_data(), tensor.values.data(),
                    tensor.values.size() * sizeof(float));
        return out;
      },
      py::arg("path"));

  m.def(
      "save_named_tensors",
      [](const std::filesystem::path& path, const py::dict& tensors) {
        NamedTensors store;
        for (const auto& item : tensors) {
          const FloatArray array = py::cast<FloatArray>(item.second);
          TensorData tensor;
          for (py::ssize_t i = 0; i < array.ndim(); ++i) {
            tensor.dims.push_back(static_cast<std::uint64_t>(array.shape(i)));
          }
          tensor.values = to_vector(array);
          store.add(py::cast<std::string>(item.first), std::move(tensor));
        }
        save_weights(path, store);
      },
      py::arg("path"), py::arg("tensors"));

  m.def(
      "load_named_tensors",
      [](const std::filesystem::path& path) {
        const NamedTensors store = load_weights(path);
        py::dict out;
        for (const auto& [name, tensor] : store.records) {
          std::vector<py::ssize_t> shape;
          for (std::uint64_t d : tensor.dims) {
            shape.push_back(static_cast<py::ssize_t>(d));
          }
          py::array_t<float> array(shape);
          std::memcpy(array.mutable_data(), tensor.values.data(),
                      tensor.values.size() * sizeof(float));
          out[py::str(name)] = array;
        }
        return out;
      },
      py::arg("path"));

  m.def(
      "export_pgm",
      [](const FloatArray& channel, const std::filesystem::path& path) {
        if (channel.ndim() != 2) {
          throw DimensionError("heatmap array must be (height, width)");
        }
        PriorChannel c;
        c.height = static_cast<int>(channel.shape(0));
        c.width = static_cast<int>(channel.shape(1));
        c.data = to_vector(channel);
        export_pgm(c, path);
      },
      py::arg("channel"), py::arg("path"));
}
