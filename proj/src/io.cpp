#include "priormask/io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

namespace priormask {

namespace {

constexpr char kTensorMagic[4] = {'P', 'M', 'T', 'N'};
constexpr char kWeightMagic[4] = {'P', 'M', 'N', 'W'};
constexpr std::uint32_t kFormatVersion = 1;

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xff));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) {
    out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
  }
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) {
    out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
  }
}

void put_f32(std::vector<std::uint8_t>& out, float v) {
  put_u32(out, std::bit_cast<std::uint32_t>(v));
}

// Sequential reader over an in-memory buffer; every read checks the
// remaining length first, so corrupt headers cannot run past the end.
class ByteReader {
 public:
  explicit ByteReader(const std::vector<std::uint8_t>& bytes)
      : bytes_(bytes) {}

  std::size_t remaining() const { return bytes_.size() - offset_; }
  std::size_t offset() const { return offset_; }

  void require(std::size_t n, const char* what) const {
    if (remaining() < n) {
      throw TruncatedFileError(std::string("file truncated while reading ") +
                               what);
    }
  }

  std::uint16_t get_u16(const char* what) {
    require(2, what);
    std::uint16_t v = 0;
    for (int i = 0; i < 2; ++i) {
      v |= static_cast<std::uint16_t>(bytes_[offset_ + i]) << (8 * i);
    }
    offset_ += 2;
    return v;
  }

  std::uint32_t get_u32(const char* what) {
    require(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(bytes_[offset_ + i]) << (8 * i);
    }
    offset_ += 4;
    return v;
  }

  std::uint64_t get_u64(const char* what) {
    require(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
      v |= static_cast<std::uint64_t>(bytes_[offset_ + i]) << (8 * i);
    }
    offset_ += 8;
    return v;
  }

  void get_bytes(void* dst, std::size_t n, const char* what) {
    require(n, what);
    std::memcpy(dst, bytes_.data() + offset_, n);
    offset_ += n;
  }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::size_t offset_ = 0;
};

void check_magic(ByteReader& reader, const char (&magic)[4],
                 const char* kind) {
  char found[4];
  try {
    reader.get_bytes(found, 4, "magic");
  } catch (const TruncatedFileError&) {
    throw BadMagicError(std::string("not a ") + kind +
                        " file: shorter than the magic");
  }
  if (std::memcmp(found, magic, 4) != 0) {
    throw BadMagicError(std::string("not a ") + kind + " file: bad magic");
  }
}

void check_version(ByteReader& reader) {
  const std::uint32_t version = reader.get_u32("version");
  if (version != kFormatVersion) {
    throw VersionMismatchError("unsupported format version " +
                               std::to_string(version) + ", expected " +
                               std::to_string(kFormatVersion));
  }
}

// Decodes one tensor starting at the reader position; validates the full
// header before allocating payload storage.
TensorData decode_tensor_at(ByteReader& reader) {
  check_magic(reader, kTensorMagic, "tensor");
  check_version(reader);
  const std::uint32_t ndim = reader.get_u32("rank");
  if (static_cast<std::uint64_t>(ndim) * 8 > reader.remaining()) {
    throw TruncatedFileError("file truncated while reading " +
                             std::to_string(ndim) + " dims");
  }
  TensorData tensor;
  tensor.dims.resize(ndim);
  std::uint64_t count = 1;
  for (std::uint32_t i = 0; i < ndim; ++i) {
    const std::uint64_t d = reader.get_u64("dims");
    tensor.dims[i] = d;
    if (d != 0 && count > std::numeric_limits<std::uint64_t>::max() / d) {
      throw DimOverflowError("dimension product overflows 64 bits");
    }
    count *= d;
  }
  if (count > std::numeric_limits<std::uint64_t>::max() / 4) {
    throw DimOverflowError("payload byte length overflows 64 bits");
  }
  const std::uint64_t payload_bytes = count * 4;
  if (payload_bytes > reader.remaining()) {
    throw TruncatedFileError("payload shorter than the declared " +
                             std::to_string(payload_bytes) + " bytes");
  }
  tensor.values.resize(static_cast<std::size_t>(count));
  if (count > 0) {
    std::vector<std::uint32_t> raw(static_cast<std::size_t>(count));
    reader.get_bytes(raw.data(), static_cast<std::size_t>(payload_bytes),
                     "payload");
    for (std::size_t i = 0; i < raw.size(); ++i) {
      std::uint32_t le = raw[i];
      if constexpr (std::endian::native == std::endian::big) {
        le = ((le & 0xff) << 24) | ((le & 0xff00) << 8) |
             ((le >> 8) & 0xff00) | (le >> 24);
      }
      tensor.values[i] = std::bit_cast<float>(le);
    }
  }
  return tensor;
}

void write_file(const std::filesystem::path& path,
                const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw IoError("cannot open '" + path.string() + "' for writing");
  }
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) {
    throw IoError("write to '" + path.string() + "' failed");
  }
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open '" + path.string() + "' for reading");
  }
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (in.bad()) {
    throw IoError("read from '" + path.string() + "' failed");
  }
  return bytes;
}

int dim_as_int(std::uint64_t d, const char* what) {
  if (d == 0 || d > static_cast<std::uint64_t>(
                        std::numeric_limits<int>::max())) {
    throw DimensionError(std::string(what) + " dimension " +
                         std::to_string(d) + " is out of range");
  }
  return static_cast<int>(d);
}

std::string rank_error(const char* what, std::size_t got,
                       const char* expected) {
  return std::string(what) + " tensor has rank " + std::to_string(got) +
         ", expected " + expected;
}

}  // namespace

std::uint64_t TensorData::element_count() const {
  std::uint64_t count = 1;
  for (std::uint64_t d : dims) count *= d;
  return count;
}

std::vector<std::uint8_t> encode_tensor(const TensorData& tensor) {
  if (tensor.element_count() != tensor.values.size()) {
    throw DimensionError("tensor payload length " +
                         std::to_string(tensor.values.size()) +
                         " does not match its dims");
  }
  std::vector<std::uint8_t> out;
  out.reserve(12 + tensor.dims.size() * 8 + tensor.values.size() * 4);
  out.insert(out.end(), kTensorMagic, kTensorMagic + 4);
  put_u32(out, kFormatVersion);
  put_u32(out, static_cast<std::uint32_t>(tensor.dims.size()));
  for (std::uint64_t d : tensor.dims) put_u64(out, d);
  for (float v : tensor.values) put_f32(out, v);
  return out;
}

TensorData decode_tensor(const std::vector<std::uint8_t>& bytes) {
  ByteReader reader(bytes);
  TensorData tensor = decode_tensor_at(reader);
  if (reader.remaining() != 0) {
    throw FormatError(std::to_string(reader.remaining()) +
                      " trailing bytes after the tensor payload");
  }
  return tensor;
}

void save_tensor(const std::filesystem::path& path, const TensorData& tensor) {
  write_file(path, encode_tensor(tensor));
}

TensorData load_tensor(const std::filesystem::path& path) {
  return decode_tensor(read_file(path));
}

const TensorData* NamedTensors::find(const std::string& name) const {
  for (const auto& [record_name, tensor] : records) {
    if (record_name == name) return &tensor;
  }
  return nullptr;
}

const TensorData& NamedTensors::require(const std::string& name) const {
  const TensorData* found = find(name);
  if (found == nullptr) {
    throw FormatError("weight file has no record named '" + name + "'");
  }
  return *found;
}

void NamedTensors::add(std::string name, TensorData tensor) {
  if (find(name) != nullptr) {
    throw FormatError("duplicate weight record name '" + name + "'");
  }
  records.emplace_back(std::move(name), std::move(tensor));
}

std::vector<std::uint8_t> encode_weights(const NamedTensors& weights) {
  for (std::size_t i = 0; i < weights.records.size(); ++i) {
    const std::string& name = weights.records[i].first;
    if (name.size() > 0xffff) {
      throw FormatError("record name longer than 65535 bytes");
    }
    for (std::size_t j = i + 1; j < weights.records.size(); ++j) {
      if (name == weights.records[j].first) {
        throw FormatError("duplicate weight record name '" + name + "'");
      }
    }
  }
  std::vector<std::uint8_t> out;
  out.insert(out.end(), kWeightMagic, kWeightMagic + 4);
  put_u32(out, kFormatVersion);
  put_u32(out, static_cast<std::uint32_t>(weights.records.size()));
  for (const auto& [name, tensor] : weights.records) {
    put_u16(out, static_cast<std::uint16_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    const std::vector<std::uint8_t> body = encode_tensor(tensor);
    out.insert(out.end(), body.begin(), body.end());
  }
  return out;
}

NamedTensors decode_weights(const std::vector<std::uint8_t>& bytes) {
  ByteReader reader(bytes);
  check_magic(reader, kWeightMagic, "weight");
  check_version(reader);
  const std::uint32_t count = reader.get_u32("record count");
  NamedTensors weights;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint16_t name_len = reader.get_u16("record name length");
    std::string name(name_len, '\0');
    reader.get_bytes(name.data(), name_len, "record name");
    if (weights.find(name) != nullptr) {
      throw FormatError("duplicate weight record name '" + name + "'");
    }
    TensorData tensor = decode_tensor_at(reader);
    weights.records.emplace_back(std::move(name), std::move(tensor));
  }
  if (reader.remaining() != 0) {
    throw FormatError(std::to_string(reader.remaining()) +
                      " trailing bytes after the last record");
  }
  return weights;
}

void save_weights(const std::filesystem::path& path,
                  const NamedTensors& weights) {
  write_file(path, encode_weights(weights));
}

NamedTensors load_weights(const std::filesystem::path& path) {
  return decode_weights(read_file(path));
}

void export_pgm(const PriorChannel& channel,
                const std::filesystem::path& path) {
  channel.validate();
  for (float v : channel.data) {
    if (v < 0.0f || v > 1.0f) {
      throw RangeError("pgm export: value " + std::to_string(v) +
                       " outside [0, 1]");
    }
  }
  std::vector<std::uint8_t> raster(channel.data.size());
  for (std::size_t i = 0; i < channel.data.size(); ++i) {
    raster[i] = static_cast<std::uint8_t>(
        std::floor(static_cast<double>(channel.data[i]) * 255.0 + 0.5));
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw IoError("cannot open '" + path.string() + "' for writing");
  }
  out << "P5\n" << channel.width << " " << channel.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(raster.data()),
            static_cast<std::streamsize>(raster.size()));
  if (!out) {
    throw IoError("write to '" + path.string() + "' failed");
  }
}

TensorData to_tensor(const FeatureMap& features) {
  TensorData t;
  t.dims = {static_cast<std::uint64_t>(features.height()),
            static_cast<std::uint64_t>(features.width()),
            static_cast<std::uint64_t>(features.channels())};
  t.values.assign(features.values().begin(), features.values().end());
  return t;
}

TensorData to_tensor(const BinaryMask& mask) {
  TensorData t;
  t.dims = {static_cast<std::uint64_t>(mask.height()),
            static_cast<std::uint64_t>(mask.width())};
  t.values.assign(mask.values().begin(), mask.values().end());
  return t;
}

TensorData to_tensor(const PriorChannel& channel) {
  TensorData t;
  t.dims = {static_cast<std::uint64_t>(channel.height),
            static_cast<std::uint64_t>(channel.width)};
  t.values = channel.data;
  return t;
}

TensorData to_tensor(const PriorStack& stack) {
  TensorData t;
  t.dims = {static_cast<std::uint64_t>(stack.height),
            static_cast<std::uint64_t>(stack.width),
            static_cast<std::uint64_t>(stack.channels)};
  t.values = stack.data;
  return t;
}

TensorData to_tensor(const CorrVolume& volume) {
  TensorData t;
  t.dims = {static_cast<std::uint64_t>(volume.q_positions()),
            static_cast<std::uint64_t>(volume.s_positions()),
            static_cast<std::uint64_t>(volume.n_patches())};
  t.values.assign(volume.values().begin(), volume.values().end());
  return t;
}

FeatureMap feature_map_from(const TensorData& tensor) {
  if (tensor.dims.size() != 3) {
    throw DimensionError(rank_error("feature map", tensor.dims.size(), "3"));
  }
  return FeatureMap(dim_as_int(tensor.dims[0], "feature map"),
                    dim_as_int(tensor.dims[1], "feature map"),
                    dim_as_int(tensor.dims[2], "feature map"), tensor.values);
}

BinaryMask binary_mask_from(const TensorData& tensor) {
  if (tensor.dims.size() != 2) {
    throw DimensionError(rank_error("mask", tensor.dims.size(), "2"));
  }
  return BinaryMask(dim_as_int(tensor.dims[0], "mask"),
                    dim_as_int(tensor.dims[1], "mask"), tensor.values);
}

PriorChannel prior_channel_from(const TensorData& tensor) {
  PriorChannel channel;
  if (tensor.dims.size() == 1) {
    channel.height = dim_as_int(tensor.dims[0], "prior channel");
    channel.width = 1;
  } else if (tensor.dims.size() == 2) {
    channel.height = dim_as_int(tensor.dims[0], "prior channel");
    channel.width = dim_as_int(tensor.dims[1], "prior channel");
  } else {
    throw DimensionError(
        rank_error("prior channel", tensor.dims.size(), "1 or 2"));
  }
  channel.data = tensor.values;
  channel.validate();
  return channel;
}

PriorStack prior_stack_from(const TensorData& tensor) {
  if (tensor.dims.size() != 3) {
    throw DimensionError(rank_error("prior stack", tensor.dims.size(), "3"));
  }
  PriorStack stack;
  stack.height = dim_as_int(tensor.dims[0], "prior stack");
  stack.width = dim_as_int(tensor.dims[1], "prior stack");
  stack.channels = dim_as_int(tensor.dims[2], "prior stack");
  stack.data = tensor.values;
  return stack;
}

CorrSlice corr_slice_from(const TensorData& tensor) {
  CorrSlice slice;
  if (tensor.dims.size() == 2) {
    slice.height = dim_as_int(tensor.dims[0], "correlation slice");
    slice.width = 1;
    slice.s_positions = dim_as_int(tensor.dims[1], "correlation slice");
  } else if (tensor.dims.size() == 3) {
    slice.height = dim_as_int(tensor.dims[0], "correlation slice");
    slice.width = dim_as_int(tensor.dims[1], "correlation slice");
    slice.s_positions = dim_as_int(tensor.dims[2], "correlation slice");
  } else {
    throw DimensionError(
        rank_error("correlation slice", tensor.dims.size(), "2 or 3"));
  }
  slice.data = tensor.values;
  slice.validate();
  return slice;
}

void add_nsm_weights(NamedTensors& store, const std::string& prefix,
                     const NsmWeights& weights) {
  weights.validate();
  const auto s = static_cast<std::uint64_t>(weights.s_positions);
  const auto h = static_cast<std::uint64_t>(weights.hidden);
  store.add(prefix + ".w1", TensorData{{s, h}, weights.w1});
  store.add(prefix + ".b1", TensorData{{h}, weights.b1});
  store.add(prefix + ".w2", TensorData{{h, s}, weights.w2});
  store.add(prefix + ".b2", TensorData{{s}, weights.b2});
}

NsmWeights nsm_weights_from(const NamedTensors& store,
                            const std::string& prefix) {
  const TensorData& w1 = store.require(prefix + ".w1");
  const TensorData& b1 = store.require(prefix + ".b1");
  const TensorData& w2 = store.require(prefix + ".w2");
  const TensorData& b2 = store.require(prefix + ".b2");
  if (w1.dims.size() != 2 || w2.dims.size() != 2 || b1.dims.size() != 1 ||
      b2.dims.size() != 1) {
    throw DimensionError("record group '" + prefix +
                         "' has unexpected tensor ranks");
  }
  NsmWeights weights;
  weights.s_positions = dim_as_int(w1.dims[0], "rectifier w1");
  weights.hidden = dim_as_int(w1.dims[1], "rectifier w1");
  weights.w1 = w1.values;
  weights.b1 = b1.values;
  weights.w2 = w2.values;
  weights.b2 = b2.values;
  weights.validate();
  return weights;
}

void add_projection_weights(NamedTensors& store, const std::string& prefix,
                            const ProjectionWeights& weights) {
  weights.validate();
  store.add(prefix + ".matrix",
            TensorData{{static_cast<std::uint64_t>(weights.in_channels),
                        static_cast<std::uint64_t>(weights.out_channels)},
                       weights.matrix});
  store.add(prefix + ".bias",
            TensorData{{static_cast<std::uint64_t>(weights.out_channels)},
                       weights.bias});
}

ProjectionWeights projection_weights_from(const NamedTensors& store,
                                          const std::string& prefix) {
  const TensorData& matrix = store.require(prefix + ".matrix");
  const TensorData& bias = store.require(prefix + ".bias");
  if (matrix.dims.size() != 2 || bias.dims.size() != 1) {
    throw DimensionError("record group '" + prefix +
                         "' has unexpected tensor ranks");
  }
  ProjectionWeights weights;
  weights.in_channels = dim_as_int(matrix.dims[0], "projection matrix");
  weights.out_channels = dim_as_int(matrix.dims[1], "projection matrix");
  weights.matrix = matrix.values;
  weights.bias = bias.values;
  weights.validate();
  return weights;
}

std::vector<std::pair<std::string, std::string>> parse_key_value_lines(
    const std::string& text) {
  std::vector<std::pair<std::string, std::string>> entries;
  std::size_t line_start = 0;
  int line_no = 0;
  const auto trim = [](std::string s) {
    const char* ws = " \t\r";
    const std::size_t begin = s.find_first_not_of(ws);
    if (begin == std::string::npos) return std::string();
    const std::size_t end = s.find_last_not_of(ws);
    return s.substr(begin, end - begin + 1);
  };
  while (line_start <= text.size()) {
    std::size_t line_end = text.find('\n', line_start);
    if (line_end == std::string::npos) line_end = text.size();
    std::string line = text.substr(line_start, line_end - line_start);
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (!line.empty()) {
      const std::size_t eq = line.find('=');
      if (eq == std::string::npos) {
        throw FormatError("config line " + std::to_string(line_no) +
                          ": expected key=value, got '" + line + "'");
      }
      std::string key = trim(line.substr(0, eq));
      std::string value = trim(line.substr(eq + 1));
      if (key.empty()) {
        throw FormatError("config line " + std::to_string(line_no) +
                          ": empty key");
      }
      for (const auto& [existing, _] : entries) {
        if (existing == key) {
          throw FormatError("config line " + std::to_string(line_no) +
                            ": duplicate key '" + key + "'");
        }
      }
      entries.emplace_back(std::move(key), std::move(value));
    }
    if (line_end == text.size()) break;
    line_start = line_end + 1;
  }
  return entries;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open '" + path.string() + "' for reading");
  }
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  if (in.bad()) {
    throw IoError("read from '" + path.string() + "' failed");
  }
  return text;
}

}  // namespace priormask
