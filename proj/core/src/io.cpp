#include "pda/io.hpp"

#include <cstring>
#include <fstream>

namespace pda {
namespace {

// Byte-by-byte little-endian assembly, independent of host endianness.
void append_u32(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
  out.push_back(static_cast<char>((v >> 16) & 0xff));
  out.push_back(static_cast<char>((v >> 24) & 0xff));
}

void append_f32(std::string& out, double v) {
  const float f = static_cast<float>(v);
  std::uint32_t bits;
  std::memcpy(&bits, &f, sizeof(bits));
  append_u32(out, bits);
}

void append_u8(std::string& out, std::uint8_t v) { out.push_back(static_cast<char>(v)); }

class Cursor {
 public:
  Cursor(const std::string& bytes, std::string name)
      : bytes_(bytes), name_(std::move(name)) {}

  void expect_magic(const char* magic) {
    if (bytes_.size() < pos_ + 4 || std::memcmp(bytes_.data() + pos_, magic, 4) != 0) {
      throw IoError(name_ + ": bad magic, expected " + magic);
    }
    pos_ += 4;
  }

  std::uint8_t read_u8() {
    need(1);
    return static_cast<std::uint8_t>(bytes_[pos_++]);
  }

  std::uint32_t read_u32() {
    need(4);
    const auto* p = reinterpret_cast<const unsigned char*>(bytes_.data() + pos_);
    pos_ += 4;
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
  }

  double read_f32() {
    const std::uint32_t bits = read_u32();
    float f;
    std::memcpy(&f, &bits, sizeof(f));
    return static_cast<double>(f);
  }

  void read_f32_block(std::vector<double>& out, std::size_t count) {
    out.resize(count);
    for (std::size_t i = 0; i < count; ++i) out[i] = read_f32();
  }

  void expect_end() {
    if (pos_ != bytes_.size()) throw IoError(name_ + ": trailing bytes");
  }

 private:
  void need(std::size_t n) {
    if (bytes_.size() < pos_ + n) throw IoError(name_ + ": truncated file");
  }

  const std::string& bytes_;
  std::string name_;
  std::size_t pos_ = 0;
};

constexpr std::uint32_t kFormatVersion = 1;

}  // namespace

void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return bytes;
}

void save_memory(const PrototypeMemory& memory, const std::filesystem::path& path) {
  std::string out;
  out += "PDAM";
  append_u32(out, kFormatVersion);
  append_u32(out, static_cast<std::uint32_t>(memory.num_classes()));
  append_u32(out, static_cast<std::uint32_t>(memory.slots_per_class()));
  append_u32(out, static_cast<std::uint32_t>(memory.dim()));
  append_u8(out, memory.frozen() ? 1 : 0);
  append_u8(out, 0);
  append_u8(out, 0);
  append_u8(out, 0);
  for (double v : memory.raw()) append_f32(out, v);
  write_file(path, out);
}

PrototypeMemory load_memory(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  Cursor c(bytes, path.string());
  c.expect_magic("PDAM");
  const std::uint32_t version = c.read_u32();
  if (version != kFormatVersion) {
    throw IoError(path.string() + ": unsupported version " + std::to_string(version));
  }
  const std::uint32_t classes = c.read_u32();
  const std::uint32_t slots = c.read_u32();
  const std::uint32_t dim = c.read_u32();
  const std::uint8_t frozen = c.read_u8();
  if (frozen > 1) throw IoError(path.string() + ": bad frozen flag");
  for (int i = 0; i < 3; ++i) {
    if (c.read_u8() != 0) throw IoError(path.string() + ": nonzero padding");
  }
  std::vector<double> values;
  c.read_f32_block(values, static_cast<std::size_t>(classes) * slots * dim);
  c.expect_end();
  try {
    return PrototypeMemory(classes, slots, dim, std::move(values), frozen == 1);
  } catch (const PdaError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

void save_params(const PdaParams& params, const AlignerParams* aligner,
                 const std::filesystem::path& path) {
  std::string out;
  out += "PDAP";
  append_u32(out, kFormatVersion);
  append_u32(out, static_cast<std::uint32_t>(params.dim()));
  for (double v : params.projection.data) append_f32(out, v);
  append_f32(out, params.log_scale);
  append_f32(out, params.bg_bias);
  append_f32(out, params.temperature);
  append_u8(out, aligner != nullptr ? 1 : 0);
  if (aligner != nullptr) {
    append_u32(out, static_cast<std::uint32_t>(aligner->feat_channels));
    append_u32(out, static_cast<std::uint32_t>(aligner->proto_dim));
    append_u32(out, static_cast<std::uint32_t>(aligner->height));
    append_u32(out, static_cast<std::uint32_t>(aligner->width));
    for (double v : aligner->weight) append_f32(out, v);
  }
  write_file(path, out);
}

LoadedParams load_params(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  Cursor c(bytes, path.string());
  c.expect_magic("PDAP");
  const std::uint32_t version = c.read_u32();
  if (version != kFormatVersion) {
    throw IoError(path.string() + ": unsupported version " + std::to_string(version));
  }
  const std::uint32_t dim = c.read_u32();

  LoadedParams loaded;
  loaded.params.projection = Matrix(dim, dim);
  c.read_f32_block(loaded.params.projection.data, static_cast<std::size_t>(dim) * dim);
  loaded.params.log_scale = c.read_f32();
  loaded.params.bg_bias = c.read_f32();
  loaded.params.temperature = c.read_f32();
  const std::uint8_t has_aligner = c.read_u8();
  if (has_aligner > 1) throw IoError(path.string() + ": bad aligner flag");
  if (has_aligner == 1) {
    AlignerParams a;
    a.feat_channels = c.read_u32();
    a.proto_dim = c.read_u32();
    a.height = c.read_u32();
    a.width = c.read_u32();
    c.read_f32_block(a.weight, a.input_dim() * a.output_dim());
    loaded.aligner = std::move(a);
  }
  c.expect_end();
  if (!(loaded.params.temperature > 0.0)) {
    throw IoError(path.string() + ": non-positive temperature");
  }
  return loaded;
}

void save_episode(const Episode& episode, const EpisodeConfig& config,
                  const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const std::size_t classes = config.num_classes();

  std::string support;
  support += "PDAS";
  append_u32(support, kFormatVersion);
  append_u32(support, static_cast<std::uint32_t>(classes));
  append_u32(support, static_cast<std::uint32_t>(config.dim));
  append_u32(support, static_cast<std::uint32_t>(episode.support.entries.size()));
  for (const auto& entry : episode.support.entries) {
    append_u32(support, static_cast<std::uint32_t>(entry.class_id));
    for (double v : entry.feature) append_f32(support, v);
  }
  write_file(dir / "support.bin", support);

  std::string query;
  query += "PDAQ";
  append_u32(query, kFormatVersion);
  append_u32(query, static_cast<std::uint32_t>(classes));
  append_u32(query, static_cast<std::uint32_t>(config.dim));
  append_u32(query, static_cast<std::uint32_t>(config.map_channels));
  append_u32(query, static_cast<std::uint32_t>(config.map_height));
  append_u32(query, static_cast<std::uint32_t>(config.map_width));
  append_u32(query, static_cast<std::uint32_t>(episode.query.size()));
  for (const auto& item : episode.query) {
    append_u32(query, static_cast<std::uint32_t>(item.true_class));
    for (double v : item.feature) append_f32(query, v);
    for (double v : item.z_cls) append_f32(query, v);
    for (double v : item.fmap.data()) append_f32(query, v);
  }
  write_file(dir / "query.bin", query);

  std::string modes;
  modes += "PDAG";
  append_u32(modes, kFormatVersion);
  append_u32(modes, static_cast<std::uint32_t>(classes));
  append_u32(modes, static_cast<std::uint32_t>(config.modes_per_class));
  append_u32(modes, static_cast<std::uint32_t>(config.dim));
  for (const auto& mode : episode.support_modes) {
    for (double v : mode) append_f32(modes, v);
  }
  for (const auto& mode : episode.query_modes) {
    for (double v : mode) append_f32(modes, v);
  }
  write_file(dir / "modes.bin", modes);
}

Episode load_episode(const std::filesystem::path& dir) {
  Episode episode;

  {
    const std::string bytes = read_file(dir / "support.bin");
    Cursor c(bytes, (dir / "support.bin").string());
    c.expect_magic("PDAS");
    if (c.read_u32() != kFormatVersion) throw IoError("support.bin: unsupported version");
    const std::uint32_t classes = c.read_u32();
    const std::uint32_t dim = c.read_u32();
    const std::uint32_t count = c.read_u32();
    episode.support.num_classes = classes;
    for (std::uint32_t i = 0; i < count; ++i) {
      SupportEntry entry;
      entry.class_id = c.read_u32();
      c.read_f32_block(entry.feature, dim);
      episode.support.entries.push_back(std::move(entry));
    }
    c.expect_end();
  }

  {
    const std::string bytes = read_file(dir / "query.bin");
    Cursor c(bytes, (dir / "query.bin").string());
    c.expect_magic("PDAQ");
    if (c.read_u32() != kFormatVersion) throw IoError("query.bin: unsupported version");
    const std::uint32_t classes = c.read_u32();
    const std::uint32_t dim = c.read_u32();
    const std::uint32_t channels = c.read_u32();
    const std::uint32_t height = c.read_u32();
    const std::uint32_t width = c.read_u32();
    const std::uint32_t count = c.read_u32();
    for (std::uint32_t i = 0; i < count; ++i) {
      const std::uint32_t true_class = c.read_u32();
      FeatureVector feature;
      c.read_f32_block(feature, dim);
      LogitVector z_cls;
      c.read_f32_block(z_cls, classes + 1);
      std::vector<double> map_data;
      c.read_f32_block(map_data, static_cast<std::size_t>(channels) * height * width);
      episode.query.push_back(QueryItem{std::move(feature),
                                        RoiFeatureMap(channels, height, width,
                                                      std::move(map_data)),
                                        true_class, std::move(z_cls)});
    }
    c.expect_end();
  }

  {
    const std::string bytes = read_file(dir / "modes.bin");
    Cursor c(bytes, (dir / "modes.bin").string());
    c.expect_magic("PDAG");
    if (c.read_u32() != kFormatVersion) throw IoError("modes.bin: unsupported version");
    const std::uint32_t classes = c.read_u32();
    const std::uint32_t modes = c.read_u32();
    const std::uint32_t dim = c.read_u32();
    for (std::uint32_t i = 0; i < classes * modes; ++i) {
      FeatureVector v;
      c.read_f32_block(v, dim);
      episode.support_modes.push_back(std::move(v));
    }
    for (std::uint32_t i = 0; i < classes * modes; ++i) {
      FeatureVector v;
      c.read_f32_block(v, dim);
      episode.query_modes.push_back(std::move(v));
    }
    c.expect_end();
  }

  return episode;
}

std::string fnv1a_hex(const void* data, std::size_t size) {
  const auto* bytes = static_cast<const unsigned char*>(data);
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < size; ++i) {
    hash ^= bytes[i];
    hash *= 0x100000001b3ULL;
  }
  static const char* kHex = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = kHex[hash & 0xf];
    hash >>= 4;
  }
  return out;
}

std::string fnv1a_hex(const std::string& text) { return fnv1a_hex(text.data(), text.size()); }

std::string file_hash_hex(const std::filesystem::path& path) {
  return fnv1a_hex(read_file(path));
}

}  // namespace pda
