#include "xdsp/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "xdsp/io.hpp"

namespace xdsp::train {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'X', 'D', 'S', 'P'};

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  Reader(const std::uint8_t* data, std::size_t size) : data_(data), size_(size) {}

  template <typename T>
  T get() {
    if (pos_ + sizeof(T) > size_) throw FormatError("checkpoint: truncated file");
    T v;
    std::memcpy(&v, data_ + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  std::string get_bytes(std::size_t n) {
    if (pos_ + n > size_) throw FormatError("checkpoint: truncated file");
    std::string s(reinterpret_cast<const char*>(data_ + pos_), n);
    pos_ += n;
    return s;
  }

  std::size_t remaining() const { return size_ - pos_; }

 private:
  const std::uint8_t* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::string out;
  out.append(kMagic, 4);
  put<std::uint32_t>(out, ckpt.version);
  std::string meta = ckpt.metadata.dump();
  put<std::uint64_t>(out, meta.size());
  out += meta;
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const TensorBlob& t : ckpt.tensors) {
    put<std::uint16_t>(out, static_cast<std::uint16_t>(t.name.size()));
    out += t.name;
    put<std::uint8_t>(out, t.dtype);
    put<std::uint8_t>(out, static_cast<std::uint8_t>(t.dims.size()));
    for (std::uint64_t d : t.dims) put<std::uint64_t>(out, d);
    out.append(reinterpret_cast<const char*>(t.data.data()), t.data.size());
  }
  io::atomic_write(path, out);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::string bytes = io::read_file(path);
  Reader r(reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size());
  std::string magic = r.get_bytes(4);
  if (std::memcmp(magic.data(), kMagic, 4) != 0)
    throw FormatError("checkpoint: bad magic in " + path);
  Checkpoint ckpt;
  ckpt.version = r.get<std::uint32_t>();
  if (ckpt.version != kCheckpointVersion)
    throw VersionError("checkpoint: file version " + std::to_string(ckpt.version) +
                       ", this build reads version " + std::to_string(kCheckpointVersion));
  std::uint64_t meta_len = r.get<std::uint64_t>();
  std::string meta = r.get_bytes(static_cast<std::size_t>(meta_len));
  try {
    ckpt.metadata = nlohmann::json::parse(meta);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint: bad metadata JSON: ") + e.what());
  }
  std::uint32_t count = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    TensorBlob t;
    std::uint16_t name_len = r.get<std::uint16_t>();
    t.name = r.get_bytes(name_len);
    t.dtype = r.get<std::uint8_t>();
    if (t.dtype > 1) throw FormatError("checkpoint: unknown dtype code for " + t.name);
    std::uint8_t rank = r.get<std::uint8_t>();
    std::uint64_t scalars = 1;
    for (std::uint8_t k = 0; k < rank; ++k) {
      std::uint64_t d = r.get<std::uint64_t>();
      if (d == 0 || d > (1ULL << 32)) throw FormatError("checkpoint: bad dimension for " + t.name);
      t.dims.push_back(d);
      scalars *= d;
    }
    std::size_t width = t.dtype == 0 ? 4 : 8;
    std::string payload = r.get_bytes(static_cast<std::size_t>(scalars) * width);
    t.data.assign(payload.begin(), payload.end());
    ckpt.tensors.push_back(std::move(t));
  }
  if (r.remaining() != 0) throw FormatError("checkpoint: trailing bytes in " + path);
  return ckpt;
}

}  // namespace xdsp::train
