#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "moonnet/layers.hpp"

namespace moonnet {

enum class CheckpointErrorKind { BadMagic, CrcMismatch, Truncated, Io, Mismatch };

class CheckpointError : public std::runtime_error {
 public:
  CheckpointError(CheckpointErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  CheckpointErrorKind kind() const { return kind_; }

 private:
  CheckpointErrorKind kind_;
};

inline constexpr char kCheckpointMagic[9] = "MOONNET1";

struct NamedTensor {
  std::string name;
  Tensor4 value;
  bool operator==(const NamedTensor&) const = default;
};

/// Parameters followed by buffers, in module traversal order. The config echo
/// and RNG state travel in a `<path>.meta` text sidecar next to the binary.
struct Checkpoint {
  std::vector<NamedTensor> tensors;
  std::string config_text;
  std::string rng_state;
  bool operator==(const Checkpoint&) const = default;
};

Checkpoint capture(Module<float>& module);
/// Copies every tensor into the module. Names, count and shapes must match.
void restore(Module<float>& module, const Checkpoint& ckpt);

/// Binary layout (little-endian): magic "MOONNET1", u32 count, then per
/// tensor u16 name length, name bytes, u8 rank, u32 dims[rank], f32 values;
/// trailing u32 CRC-32 of everything before it. Trailing unit dims are not
/// stored, so a (64, 16, 1, 1) weight has rank 2.
std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace moonnet
