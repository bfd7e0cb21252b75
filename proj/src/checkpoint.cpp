#include "stfd/checkpoint.hpp"

#include <bit>
#include <cmath>

#include "stfd/io.hpp"

namespace stfd {
namespace {

void put_u8(std::string& out, std::uint8_t v) { out.push_back(static_cast<char>(v)); }

void put_u16(std::string& out, std::uint16_t v) {
  put_u8(out, static_cast<std::uint8_t>(v & 0xff));
  put_u8(out, static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int k = 0; k < 4; ++k) put_u8(out, static_cast<std::uint8_t>((v >> (8 * k)) & 0xff));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) {
      throw FormatError(std::string("checkpoint truncated while reading ") + what);
    }
  }
  std::uint8_t u8(const char* what) {
    need(1, what);
    return static_cast<std::uint8_t>(bytes_[pos_++]);
  }
  std::uint16_t u16(const char* what) {
    need(2, what);
    std::uint16_t v = 0;
    for (int k = 0; k < 2; ++k) v |= static_cast<std::uint16_t>(static_cast<std::uint8_t>(bytes_[pos_++]) << (8 * k));
    return v;
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int k = 0; k < 4; ++k) v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(bytes_[pos_++])) << (8 * k);
    return v;
  }
  std::string_view take(std::size_t n, const char* what) {
    need(n, what);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string serialize_checkpoint(const ParamStore<float>& params) {
  std::string out = "STFD";
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& e : params) {
    if (e.name.size() > 0xffff) throw FormatError("parameter name too long: " + e.name);
    if (e.tensor.rank() > 0xff) throw FormatError("tensor rank too large: " + e.name);
    if (!e.tensor.value().allFinite()) throw DataError("non-finite values in parameter " + e.name);
    put_u16(out, static_cast<std::uint16_t>(e.name.size()));
    out += e.name;
    put_u8(out, static_cast<std::uint8_t>(e.tensor.rank()));
    for (Index d : e.tensor.shape()) put_u32(out, static_cast<std::uint32_t>(d));
    for (Index i = 0; i < e.tensor.size(); ++i) put_u32(out, std::bit_cast<std::uint32_t>(e.tensor.value()[i]));
  }
  return out;
}

ParamStore<float> deserialize_checkpoint(std::string_view bytes) {
  Reader r(bytes);
  if (r.take(4, "magic") != "STFD") throw FormatError("checkpoint: bad magic");
  const std::uint32_t version = r.u32("version");
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint: unsupported version " + std::to_string(version));
  }
  const std::uint32_t count = r.u32("entry count");
  ParamStore<float> store;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint16_t len = r.u16("name length");
    std::string name(r.take(len, "name"));
    const std::uint8_t rank = r.u8("rank");
    Shape shape;
    std::uint64_t n = 1;
    for (std::uint8_t k = 0; k < rank; ++k) {
      const std::uint32_t d = r.u32("dims");
      shape.push_back(static_cast<Index>(d));
      n *= d;
      if (n > r.remaining() / 4 + 1) throw FormatError("checkpoint: declared size exceeds file length");
    }
    if (n * 4 > r.remaining()) throw FormatError("checkpoint truncated in payload of " + name);
    Vec<float> values(static_cast<Index>(n));
    for (std::uint64_t j = 0; j < n; ++j) values[static_cast<Index>(j)] = std::bit_cast<float>(r.u32("payload"));
    if (store.contains(name)) throw FormatError("checkpoint: duplicate name " + name);
    store.add(std::move(name), Tensor<float>(std::move(shape), std::move(values)));
  }
  if (r.remaining() != 0) throw FormatError("checkpoint: trailing bytes after last entry");
  return store;
}

void save_checkpoint(const ParamStore<float>& params, const std::string& path) {
  write_file(path, serialize_checkpoint(params));
}

ParamStore<float> load_checkpoint(const std::string& path) {
  return deserialize_checkpoint(read_file(path));
}

}  // namespace stfd
