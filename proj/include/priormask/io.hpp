#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "priormask/matching.hpp"
#include "priormask/noise.hpp"
#include "priormask/pipeline.hpp"
#include "priormask/tensor.hpp"

namespace priormask {

/// Raw tensor as stored on disk: unsigned dims plus a flat f32 payload.
///
/// File layout (all integers little-endian):
///   magic "PMTN" | version u32 = 1 | ndim u32 | dims ndim x u64 |
///   payload product(dims) x f32, row-major.
struct TensorData {
  std::vector<std::uint64_t> dims;
  std::vector<float> values;

  std::uint64_t element_count() const;
};

std::vector<std::uint8_t> encode_tensor(const TensorData& tensor);
TensorData decode_tensor(const std::vector<std::uint8_t>& bytes);

void save_tensor(const std::filesystem::path& path, const TensorData& tensor);
TensorData load_tensor(const std::filesystem::path& path);

/// Ordered, uniquely named tensor records.
///
/// File layout: magic "PMNW" | version u32 = 1 | record count u32 |
/// per record: name length u16 | UTF-8 name | embedded tensor (full layout
/// above, magic included).
struct NamedTensors {
  std::vector<std::pair<std::string, TensorData>> records;

  const TensorData* find(const std::string& name) const;
  const TensorData& require(const std::string& name) const;
  void add(std::string name, TensorData tensor);
  bool contains(const std::string& name) const { return find(name) != nullptr; }
};

std::vector<std::uint8_t> encode_weights(const NamedTensors& weights);
NamedTensors decode_weights(const std::vector<std::uint8_t>& bytes);

void save_weights(const std::filesystem::path& path,
                  const NamedTensors& weights);
NamedTensors load_weights(const std::filesystem::path& path);

/// Binary PGM ("P5", maxval 255); pixel = round-half-up(value * 255).
/// Values must lie in [0, 1].
void export_pgm(const PriorChannel& channel,
                const std::filesystem::path& path);

// Conversions between file tensors and domain types. Each checks rank,
// dimension bounds and value invariants before constructing.
TensorData to_tensor(const FeatureMap& features);
TensorData to_tensor(const BinaryMask& mask);
TensorData to_tensor(const PriorChannel& channel);
TensorData to_tensor(const PriorStack& stack);
TensorData to_tensor(const CorrVolume& volume);

FeatureMap feature_map_from(const TensorData& tensor);
BinaryMask binary_mask_from(const TensorData& tensor);
PriorChannel prior_channel_from(const TensorData& tensor);
PriorStack prior_stack_from(const TensorData& tensor);
CorrSlice corr_slice_from(const TensorData& tensor);

// Rectifier / projection weights as groups of named records under a prefix:
// "<prefix>.w1" [s, hidden], ".b1" [hidden], ".w2" [hidden, s], ".b2" [s];
// "<prefix>.matrix" [in, out], ".bias" [out].
void add_nsm_weights(NamedTensors& store, const std::string& prefix,
                     const NsmWeights& weights);
NsmWeights nsm_weights_from(const NamedTensors& store,
                            const std::string& prefix);
void add_projection_weights(NamedTensors& store, const std::string& prefix,
                            const ProjectionWeights& weights);
ProjectionWeights projection_weights_from(const NamedTensors& store,
                                          const std::string& prefix);

/// Plain-text configuration: one "key=value" per line, '#' comments, blank
/// lines ignored. Returns pairs in file order; duplicate keys are errors.
std::vector<std::pair<std::string, std::string>> parse_key_value_lines(
    const std::string& text);

std::string read_text_file(const std::filesystem::path& path);

}  // namespace priormask
