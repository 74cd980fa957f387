#include "m2pt/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace m2pt {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

class Writer {
 public:
  template <typename U>
  void put(U v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    out.insert(out.end(), p, p + sizeof(U));
  }
  void bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    out.insert(out.end(), p, p + n);
  }
  std::vector<std::uint8_t> out;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& in) : in_(in) {}

  template <typename U>
  U get(const char* what) {
    U v;
    take(&v, sizeof(U), what);
    return v;
  }
  void take(void* dst, std::size_t n, const char* what) {
    if (n > in_.size() - pos_) {
      throw FormatError(std::string("checkpoint truncated while reading ") + what + " at byte " +
                        std::to_string(pos_));
    }
    std::memcpy(dst, in_.data() + pos_, n);
    pos_ += n;
  }
  std::size_t remaining() const { return in_.size() - pos_; }

 private:
  const std::vector<std::uint8_t>& in_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const ParameterStore<float>& params, const std::string& config_echo) {
  Writer w;
  w.bytes(kCheckpointMagic, 4);
  w.put<std::uint32_t>(kCheckpointVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(params.entries().size()));
  for (const auto& [name, t] : params.entries()) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(name.size()));
    w.bytes(name.data(), name.size());
    w.put<std::uint32_t>(kDtypeF32);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) w.put<std::uint64_t>(d);
    w.bytes(t.data(), t.size() * sizeof(float));
  }
  w.put<std::uint64_t>(config_echo.size());
  w.bytes(config_echo.data(), config_echo.size());
  return std::move(w.out);
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  char magic[4];
  r.take(magic, 4, "magic");
  if (std::memcmp(magic, kCheckpointMagic, 4) != 0) throw FormatError("not a checkpoint file (bad magic)");
  const auto version = r.get<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                      std::to_string(kCheckpointVersion) + ")");
  }
  const auto count = r.get<std::uint32_t>("entry count");
  Checkpoint ck;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = r.get<std::uint32_t>("name length");
    if (name_len > r.remaining()) throw FormatError("checkpoint truncated inside entry " + std::to_string(i));
    std::string name(name_len, '\0');
    r.take(name.data(), name_len, "name");
    const auto dtype = r.get<std::uint32_t>("dtype");
    if (dtype != kDtypeF32) throw FormatError("tensor '" + name + "' has unknown dtype " + std::to_string(dtype));
    const auto rank = r.get<std::uint32_t>("rank");
    if (rank > 8) throw FormatError("tensor '" + name + "' has implausible rank " + std::to_string(rank));
    Shape shape(rank);
    std::uint64_t numel = 1;
    for (auto& d : shape) {
      d = r.get<std::uint64_t>("dims");
      numel *= d;
    }
    if (numel > r.remaining() / sizeof(float)) {
      throw FormatError("checkpoint truncated inside payload of '" + name + "'");
    }
    Tensor<float> t(shape);
    r.take(t.data(), t.size() * sizeof(float), "payload");
    try {
      ck.params.add(name, std::move(t));
    } catch (const RegistryError&) {
      throw FormatError("checkpoint repeats tensor '" + name + "'");
    }
  }
  const auto echo_len = r.get<std::uint64_t>("config echo length");
  if (echo_len > r.remaining()) throw FormatError("checkpoint truncated inside config echo");
  ck.config_echo.resize(echo_len);
  r.take(ck.config_echo.data(), echo_len, "config echo");
  if (r.remaining() != 0) throw FormatError("checkpoint has trailing bytes");
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const ParameterStore<float>& params,
                     const std::string& config_echo) {
  const auto bytes = encode_checkpoint(params, config_echo);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write checkpoint " + path.string());
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw IoError("failed writing checkpoint " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("checkpoint not found: " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

std::string load_checkpoint(const std::filesystem::path& path, ParameterStore<float>& target) {
  Checkpoint ck = read_checkpoint(path);
  for (const auto& [name, t] : target.entries()) {
    if (!ck.params.contains(name)) {
      throw ConfigError("checkpoint lacks tensor '" + name + "' required by the current configuration");
    }
    const Tensor<float>& src = ck.params.get(name);
    if (src.shape() != t.shape()) {
      throw ConfigError("tensor '" + name + "' has shape " + shape_to_string(src.shape()) +
                        " in the checkpoint but " + shape_to_string(t.shape()) + " under the current configuration");
    }
  }
  for (const auto& name : ck.params.names()) {
    if (!target.contains(name)) {
      throw ConfigError("checkpoint tensor '" + name + "' does not exist under the current configuration");
    }
  }
  target = std::move(ck.params);
  return ck.config_echo;
}

}  // namespace m2pt
