#include "sppr/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

#include "sppr/data.hpp"

namespace sppr {

namespace {

constexpr char kMagic[4] = {'S', 'P', 'P', 'R'};

class Writer {
 public:
  void bytes(const void* data, std::size_t n) {
    out_.append(static_cast<const char*>(data), n);
  }
  template <typename T>
  void le(T value) {
    static_assert(std::is_unsigned_v<T>);
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      out_.push_back(static_cast<char>((value >> (8 * i)) & 0xFF));
    }
  }
  void f64(double v) { le(std::bit_cast<std::uint64_t>(v)); }
  void name(const std::string& s) {
    if (s.size() > std::numeric_limits<std::uint16_t>::max()) {
      throw CheckpointError("checkpoint: name too long");
    }
    le(static_cast<std::uint16_t>(s.size()));
    bytes(s.data(), s.size());
  }
  std::string& str() { return out_; }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view in) : in_(in) {}
  void need(std::size_t n, const char* what) const {
    if (pos_ + n > in_.size()) {
      throw CheckpointError(std::string("checkpoint: truncated while reading ") + what);
    }
  }
  template <typename T>
  T le(const char* what) {
    need(sizeof(T), what);
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      v |= static_cast<T>(static_cast<unsigned char>(in_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(T);
    return v;
  }
  double f64() { return std::bit_cast<double>(le<std::uint64_t>("tensor values")); }
  std::string name(const char* what) {
    const auto n = le<std::uint16_t>(what);
    need(n, what);
    std::string s(in_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }

 private:
  std::string_view in_;
  std::size_t pos_ = 0;
};

std::uint32_t crc32_of(std::string_view bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, reinterpret_cast<const Bytef*>(bytes.data()),
              static_cast<uInt>(bytes.size()));
  return static_cast<std::uint32_t>(crc);
}

}  // namespace

std::string serialize_checkpoint(const Checkpoint& checkpoint) {
  if (checkpoint.size() > std::numeric_limits<std::uint8_t>::max()) {
    throw CheckpointError("checkpoint: too many networks");
  }
  Writer w;
  w.bytes(kMagic, 4);
  w.le(kCheckpointVersion);
  w.le(static_cast<std::uint8_t>(checkpoint.size()));
  for (const auto& net : checkpoint) {
    w.name(net.name);
    w.le(static_cast<std::uint32_t>(net.tensors.size()));
    for (const auto& t : net.tensors) {
      if (shape_size(t.shape) != t.values.size()) {
        throw CheckpointError("checkpoint: tensor '" + t.name + "' has " +
                              std::to_string(t.values.size()) + " values for shape " +
                              shape_string(t.shape));
      }
      w.name(t.name);
      w.le(static_cast<std::uint8_t>(t.shape.size()));
      for (auto d : t.shape) w.le(static_cast<std::uint32_t>(d));
      for (double v : t.values) w.f64(v);
    }
  }
  w.le(crc32_of(w.str()));
  return std::move(w.str());
}

Checkpoint parse_checkpoint(std::string_view bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw CheckpointError("checkpoint: bad magic (not an SPPR file)");
  }
  if (bytes.size() < 4 + 4 + 1 + 4) throw CheckpointError("checkpoint: truncated header");
  const std::string_view body = bytes.substr(0, bytes.size() - 4);
  Reader tail(bytes.substr(bytes.size() - 4));
  if (tail.le<std::uint32_t>("crc") != crc32_of(body)) {
    throw CheckpointError("checkpoint: CRC mismatch (file corrupted)");
  }
  Reader r(body);
  r.le<std::uint32_t>("magic");
  const auto version = r.le<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw CheckpointError("checkpoint: unsupported version " + std::to_string(version));
  }
  Checkpoint out(r.le<std::uint8_t>("network count"));
  for (auto& net : out) {
    net.name = r.name("network name");
    net.tensors.resize(r.le<std::uint32_t>("tensor count"));
    for (auto& t : net.tensors) {
      t.name = r.name("tensor name");
      t.shape.resize(r.le<std::uint8_t>("rank"));
      for (auto& d : t.shape) d = r.le<std::uint32_t>("dims");
      const std::size_t n = shape_size(t.shape);
      r.need(8 * n, "tensor values");
      t.values.resize(n);
      for (auto& v : t.values) v = r.f64();
    }
  }
  if (r.pos() != body.size()) throw CheckpointError("checkpoint: trailing bytes before CRC");
  return out;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  write_text_atomic(path, serialize_checkpoint(checkpoint));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("checkpoint: cannot open '" + path.string() + "'");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_checkpoint(bytes);
}

CheckpointNetwork to_checkpoint(const std::string& name, const ModelParams& params) {
  CheckpointNetwork net{name, {}};
  for (const auto& [tname, t] : params.named_tensors()) {
    net.tensors.push_back({tname, t.shape(), {t.values().begin(), t.values().end()}});
  }
  return net;
}

ModelParams params_from_checkpoint(const CheckpointNetwork& network,
                                   const LstmStackConfig& config) {
  ModelParams params = init_params(config, 0);
  auto named = params.named_tensors();
  for (auto& [name, tensor] : named) {
    const CheckpointTensor* src = nullptr;
    for (const auto& t : network.tensors) {
      if (t.name == name) src = &t;
    }
    if (src == nullptr) {
      throw CheckpointError("checkpoint: network '" + network.name + "' lacks tensor '" +
                            name + "'");
    }
    if (src->shape != tensor.shape()) {
      throw CheckpointError("checkpoint: " + network.name + "." + name + " has shape " +
                            shape_string(src->shape) + ", configuration expects " +
                            shape_string(tensor.shape()));
    }
    auto dst = tensor.mutable_values();
    std::copy(src->values.begin(), src->values.end(), dst.begin());
  }
  if (named.size() != network.tensors.size()) {
    throw CheckpointError("checkpoint: network '" + network.name + "' has " +
                          std::to_string(network.tensors.size()) + " tensors, expected " +
                          std::to_string(named.size()));
  }
  return params;
}

const CheckpointNetwork* find_network(const Checkpoint& checkpoint, std::string_view name) {
  for (const auto& net : checkpoint) {
    if (net.name == name) return &net;
  }
  return nullptr;
}

}  // namespace sppr
