#include "vnp/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>

#include "vnp/error.hpp"

namespace vnp {

namespace {

constexpr char kMagic[8] = {'V', 'N', 'P', 'C', 'K', 'P', 'T', '\0'};

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out.insert(out.end(), b, b + n);
  }
  template <class T>
  void le(T v) {
    using U = std::make_unsigned_t<T>;
    auto u = static_cast<U>(v);
    for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(u >> (8 * i)));
  }
  void f32(float v) { le(std::bit_cast<std::uint32_t>(v)); }
  void string(const std::string& s) {
    le<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  void records(const std::map<std::string, Tensor<float>>& m) {
    le<std::uint32_t>(static_cast<std::uint32_t>(m.size()));
    for (const auto& [name, t] : m) {
      string(name);
      le<std::uint32_t>(static_cast<std::uint32_t>(t.rank()));
      for (std::size_t d : t.shape()) le<std::uint64_t>(d);
      for (float v : t.data()) f32(v);
    }
  }

  std::vector<std::uint8_t> out;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : buf(b) {}

  void need(std::size_t n) const {
    if (pos + n > buf.size()) throw FormatError("checkpoint: truncated at byte " + std::to_string(pos));
  }
  template <class T>
  T le() {
    using U = std::make_unsigned_t<T>;
    need(sizeof(T));
    U u = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) u |= static_cast<U>(static_cast<U>(buf[pos + i]) << (8 * i));
    pos += sizeof(T);
    return static_cast<T>(u);
  }
  float f32() { return std::bit_cast<float>(le<std::uint32_t>()); }
  std::string string() {
    const auto n = le<std::uint32_t>();
    need(n);
    std::string s(reinterpret_cast<const char*>(buf.data() + pos), n);
    pos += n;
    return s;
  }
  std::map<std::string, Tensor<float>> records() {
    std::map<std::string, Tensor<float>> m;
    const auto count = le<std::uint32_t>();
    for (std::uint32_t r = 0; r < count; ++r) {
      std::string name = string();
      const auto rank = le<std::uint32_t>();
      if (rank > 8) throw FormatError("checkpoint: implausible rank for " + name);
      Shape shape(rank);
      std::size_t n = 1;
      for (auto& d : shape) {
        d = static_cast<std::size_t>(le<std::uint64_t>());
        n *= d;
      }
      need(n * 4);
      std::vector<float> data(n);
      for (auto& v : data) v = f32();
      m.emplace(std::move(name), Tensor<float>(std::move(shape), std::move(data)));
    }
    return m;
  }

  std::span<const std::uint8_t> buf;
  std::size_t pos = 0;
};

std::string hex(std::uint64_t h) {
  char out[17];
  std::snprintf(out, sizeof out, "%016llx", static_cast<unsigned long long>(h));
  return out;
}

}  // namespace

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::vector<std::uint8_t> serialize(const Checkpoint& ckpt) {
  Writer w;
  w.bytes(kMagic, sizeof kMagic);
  w.le<std::uint32_t>(kCheckpointVersion);
  w.le<std::uint64_t>(ckpt.config_json.size());
  w.bytes(ckpt.config_json.data(), ckpt.config_json.size());
  w.le<std::int64_t>(ckpt.step);
  std::map<std::string, Tensor<float>> params(ckpt.params.begin(), ckpt.params.end());
  w.records(params);
  w.le<std::int64_t>(ckpt.adam.step);
  w.records(ckpt.adam.m);
  w.records(ckpt.adam.v);
  w.le<std::uint64_t>(fnv1a64(w.out));
  return std::move(w.out);
}

Checkpoint deserialize(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < sizeof kMagic + 8 || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0)
    throw FormatError("checkpoint: bad magic");
  Reader tail(bytes.subspan(bytes.size() - 8));
  const auto stored = tail.le<std::uint64_t>();
  if (stored != fnv1a64(bytes.first(bytes.size() - 8))) throw FormatError("checkpoint: content hash mismatch");

  Reader r(bytes.first(bytes.size() - 8));
  r.pos = sizeof kMagic;
  const auto version = r.le<std::uint32_t>();
  if (version != kCheckpointVersion) throw FormatError("checkpoint: unsupported version " + std::to_string(version));
  const auto len = r.le<std::uint64_t>();
  r.need(len);
  Checkpoint c;
  c.config_json.assign(reinterpret_cast<const char*>(bytes.data() + r.pos), len);
  r.pos += len;
  c.step = r.le<std::int64_t>();
  for (auto& [name, t] : r.records()) c.params.set(name, std::move(t));
  c.adam.step = r.le<std::int64_t>();
  c.adam.m = r.records();
  c.adam.v = r.records();
  if (r.pos != r.buf.size()) throw FormatError("checkpoint: trailing bytes");
  return c;
}

std::string content_hash(const Checkpoint& ckpt) {
  const auto bytes = serialize(ckpt);
  Reader tail(std::span<const std::uint8_t>(bytes).subspan(bytes.size() - 8));
  return hex(tail.le<std::uint64_t>());
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto bytes = serialize(ckpt);
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write checkpoint " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

namespace {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot read checkpoint " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  try {
    return deserialize(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

std::string checkpoint_file_hash(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  (void)deserialize(bytes);
  Reader tail(std::span<const std::uint8_t>(bytes).subspan(bytes.size() - 8));
  return hex(tail.le<std::uint64_t>());
}

}  // namespace vnp
