#include "moonnet/checkpoint.hpp"

#include <zlib.h>

#include <array>
#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

namespace moonnet {

namespace {

using Bytes = std::vector<std::uint8_t>;

template <typename U>
void put_le(Bytes& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  template <typename U>
  U get() {
    need(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(U(bytes_[pos_ + i]) << (8 * i));
    pos_ += sizeof(U);
    return v;
  }

  std::string get_string(std::size_t len) {
    need(len);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), len);
    pos_ += len;
    return s;
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (remaining() < n) {
      throw CheckpointError(CheckpointErrorKind::Truncated, "checkpoint: unexpected end of data");
    }
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

std::uint32_t crc_of(std::span<const std::uint8_t> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, bytes.data(), static_cast<uInt>(bytes.size()));
  return static_cast<std::uint32_t>(crc);
}

std::vector<int> stored_dims(const Shape& s) {
  std::vector<int> dims = {s.n, s.c, s.h, s.w};
  while (dims.size() > 1 && dims.back() == 1) dims.pop_back();
  return dims;
}

std::string meta_path(const std::string& path) { return path + ".meta"; }

}  // namespace

Checkpoint capture(Module<float>& module) {
  Checkpoint ck;
  for (auto* p : module.params()) ck.tensors.push_back({p->name, p->value});
  for (auto* b : module.buffers()) ck.tensors.push_back({b->name, b->value});
  return ck;
}

void restore(Module<float>& module, const Checkpoint& ckpt) {
  std::vector<std::pair<std::string, Tensor4*>> slots;
  for (auto* p : module.params()) slots.emplace_back(p->name, &p->value);
  for (auto* b : module.buffers()) slots.emplace_back(b->name, &b->value);
  if (slots.size() != ckpt.tensors.size()) {
    throw CheckpointError(CheckpointErrorKind::Mismatch,
                          "checkpoint holds " + std::to_string(ckpt.tensors.size()) +
                              " tensors, model expects " + std::to_string(slots.size()));
  }
  for (std::size_t i = 0; i < slots.size(); ++i) {
    const auto& src = ckpt.tensors[i];
    if (src.name != slots[i].first) {
      throw CheckpointError(CheckpointErrorKind::Mismatch,
                            "tensor " + std::to_string(i) + ": expected '" + slots[i].first +
                                "', found '" + src.name + "'");
    }
    if (src.value.shape() != slots[i].second->shape()) {
      throw CheckpointError(CheckpointErrorKind::Mismatch,
                            src.name + ": shape " + src.value.shape().str() + " vs model " +
                                slots[i].second->shape().str());
    }
  }
  for (std::size_t i = 0; i < slots.size(); ++i) *slots[i].second = ckpt.tensors[i].value;
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  Bytes out(kCheckpointMagic, kCheckpointMagic + 8);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& t : ckpt.tensors) {
    if (t.name.size() > std::numeric_limits<std::uint16_t>::max()) {
      throw CheckpointError(CheckpointErrorKind::Io, "tensor name too long: " + t.name);
    }
    put_le<std::uint16_t>(out, static_cast<std::uint16_t>(t.name.size()));
    out.insert(out.end(), t.name.begin(), t.name.end());
    const auto dims = stored_dims(t.value.shape());
    out.push_back(static_cast<std::uint8_t>(dims.size()));
    for (int d : dims) put_le<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    for (float v : t.value.values()) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
  }
  put_le<std::uint32_t>(out, crc_of(out));
  return out;
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kCheckpointMagic, 8) != 0) {
    throw CheckpointError(CheckpointErrorKind::BadMagic, "checkpoint: bad magic");
  }
  if (bytes.size() < 8 + 4 + 4) {
    throw CheckpointError(CheckpointErrorKind::Truncated, "checkpoint: file too short");
  }
  const auto body = bytes.first(bytes.size() - 4);
  Reader tail(bytes.last(4));
  if (tail.get<std::uint32_t>() != crc_of(body)) {
    throw CheckpointError(CheckpointErrorKind::CrcMismatch, "checkpoint: CRC mismatch");
  }

  Reader r(body.subspan(8));
  Checkpoint ck;
  const auto count = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = r.get<std::uint16_t>();
    std::string name = r.get_string(len);
    const auto rank = r.get<std::uint8_t>();
    if (rank < 1 || rank > 4) {
      throw CheckpointError(CheckpointErrorKind::Mismatch,
                            name + ": unsupported rank " + std::to_string(rank));
    }
    std::array<int, 4> dims = {1, 1, 1, 1};
    for (int d = 0; d < rank; ++d) {
      const auto v = r.get<std::uint32_t>();
      if (v == 0 || v > static_cast<std::uint32_t>(std::numeric_limits<int>::max())) {
        throw CheckpointError(CheckpointErrorKind::Mismatch, name + ": bad dimension");
      }
      dims[d] = static_cast<int>(v);
    }
    const Shape shape{dims[0], dims[1], dims[2], dims[3]};
    if (r.remaining() / 4 < shape.numel()) {
      throw CheckpointError(CheckpointErrorKind::Truncated, name + ": values truncated");
    }
    Tensor4 t(shape);
    for (auto& v : t.values()) v = std::bit_cast<float>(r.get<std::uint32_t>());
    ck.tensors.push_back({std::move(name), std::move(t)});
  }
  if (r.remaining() != 0) {
    throw CheckpointError(CheckpointErrorKind::Mismatch, "checkpoint: trailing bytes");
  }
  return ck;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  const auto bytes = encode_checkpoint(ckpt);
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError(CheckpointErrorKind::Io, "cannot write " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw CheckpointError(CheckpointErrorKind::Io, "write failed: " + path);
  }
  const std::string meta = meta_path(path);
  if (ckpt.config_text.empty() && ckpt.rng_state.empty()) {
    std::error_code ec;
    std::filesystem::remove(meta, ec);
    return;
  }
  std::ofstream m(meta, std::ios::binary | std::ios::trunc);
  if (!m) throw CheckpointError(CheckpointErrorKind::Io, "cannot write " + meta);
  m << "[rng]\n" << ckpt.rng_state << "\n[config]\n" << ckpt.config_text;
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(CheckpointErrorKind::Io, "cannot open " + path);
  const Bytes bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  Checkpoint ck = decode_checkpoint(bytes);

  std::ifstream m(meta_path(path), std::ios::binary);
  if (m) {
    std::ostringstream ss;
    ss << m.rdbuf();
    const std::string text = ss.str();
    const auto rng_at = text.find("[rng]\n");
    const auto cfg_at = text.find("\n[config]\n");
    if (rng_at != 0 || cfg_at == std::string::npos) {
      throw CheckpointError(CheckpointErrorKind::Mismatch, "malformed " + meta_path(path));
    }
    ck.rng_state = text.substr(6, cfg_at - 6);
    ck.config_text = text.substr(cfg_at + 10);
  }
  return ck;
}

}  // namespace moonnet
