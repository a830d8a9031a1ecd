#include "uxai/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "uxai/error.hpp"
#include "uxai/hash.hpp"

namespace uxai {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[4] = {'U', 'X', 'N', '1'};

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u32(std::uint32_t v) { bytes(&v, 4); }
  void f32(std::span<const float> v) { bytes(v.data(), v.size_bytes()); }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}
  void bytes(void* p, std::size_t n) {
    if (pos_ + n > in_.size()) throw FormatError("checkpoint truncated at byte " + std::to_string(pos_));
    std::memcpy(p, in_.data() + pos_, n);
    pos_ += n;
  }
  std::uint8_t u8() {
    std::uint8_t v;
    bytes(&v, 1);
    return v;
  }
  std::uint32_t u32() {
    std::uint32_t v;
    bytes(&v, 4);
    return v;
  }
  void f32(std::span<float> v) { bytes(v.data(), v.size_bytes()); }
  bool done() const { return pos_ == in_.size(); }

 private:
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Network& net) {
  Writer w;
  w.bytes(kMagic, 4);
  w.u32(static_cast<std::uint32_t>(net.size()));
  for (const auto& layer : net.layers()) {
    w.u8(static_cast<std::uint8_t>(layer_kind(layer)));
    const Shape dims = primary_parameter_shape(layer);
    w.u32(static_cast<std::uint32_t>(dims.size()));
    for (auto d : dims) w.u32(static_cast<std::uint32_t>(d));
    for (const auto* p : parameters(layer)) w.f32(p->values());
  }
  return w.take();
}

Network decode_checkpoint(std::span<const std::uint8_t> bytes, const Network& architecture) {
  Reader r(bytes);
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) throw FormatError("not a UXN1 checkpoint");
  const auto count = r.u32();
  if (count != architecture.size()) {
    throw FormatError("checkpoint has " + std::to_string(count) + " layers, architecture has " +
                      std::to_string(architecture.size()));
  }
  Network net = architecture;
  for (std::size_t i = 0; i < count; ++i) {
    const auto tag = r.u8();
    Layer& layer = net.mutable_layer(i);
    if (tag != static_cast<std::uint8_t>(layer_kind(layer))) {
      throw FormatError("layer " + std::to_string(i) + ": kind tag " + std::to_string(tag) + " does not match " +
                        std::string(layer_name(layer)));
    }
    const auto rank = r.u32();
    Shape dims(rank);
    for (auto& d : dims) d = r.u32();
    if (dims != primary_parameter_shape(layer)) {
      throw FormatError("layer " + std::to_string(i) + ": dims " + shape_string(dims) + " do not match architecture " +
                        shape_string(primary_parameter_shape(layer)));
    }
    for (auto* p : parameters(layer)) r.f32(p->values());
  }
  if (!r.done()) throw FormatError("trailing bytes after checkpoint payload");
  return net;
}

void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot open " + tmp.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw FormatError("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void write_file_atomic(const std::filesystem::path& path, const std::string& text) {
  write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void save_checkpoint(const std::filesystem::path& path, const Network& net) {
  write_file_atomic(path, encode_checkpoint(net));
}

Network load_checkpoint(const std::filesystem::path& path, const Network& architecture) {
  return decode_checkpoint(read_file(path), architecture);
}

void save_ensemble(const std::filesystem::path& manifest_path, const std::vector<Network>& members) {
  if (members.empty()) throw InvalidArgument("ensemble has no members");
  const auto arch = members.front().architecture_hash();
  std::ostringstream manifest;
  manifest << "architecture " << hex64(arch) << "\n";
  const auto stem = manifest_path.stem().string();
  for (std::size_t i = 0; i < members.size(); ++i) {
    if (members[i].architecture_hash() != arch) throw InvalidArgument("ensemble members differ in architecture");
    const std::filesystem::path file = stem + ".member" + std::to_string(i) + ".uxn";
    save_checkpoint(manifest_path.parent_path() / file, members[i]);
    manifest << file.string() << "\n";
  }
  write_file_atomic(manifest_path, manifest.str());
}

EnsembleManifest read_manifest(const std::filesystem::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw FormatError("cannot open manifest " + manifest_path.string());
  EnsembleManifest m;
  std::string word, hex;
  if (!(in >> word >> hex) || word != "architecture") throw FormatError("manifest must start with 'architecture <hash>'");
  m.architecture_hash = std::stoull(hex, nullptr, 16);
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::filesystem::path p = line;
    m.members.push_back(p.is_relative() ? manifest_path.parent_path() / p : p);
  }
  if (m.members.empty()) throw FormatError("manifest lists no members");
  return m;
}

std::vector<Network> load_ensemble(const std::filesystem::path& manifest_path, const Network& architecture) {
  const auto m = read_manifest(manifest_path);
  if (m.architecture_hash != architecture.architecture_hash()) {
    throw FormatError("manifest architecture " + hex64(m.architecture_hash) + " does not match " +
                      hex64(architecture.architecture_hash()));
  }
  std::vector<Network> members;
  for (const auto& p : m.members) members.push_back(load_checkpoint(p, architecture));
  return members;
}

}  // namespace uxai
