#include <gtest/gtest.h>

#include <zlib.h>

#include <cstring>
#include <filesystem>
#include <fstream>

#include "moonnet/checkpoint.hpp"
#include "moonnet/rng.hpp"
#include "moonnet/train.hpp"

using namespace moonnet;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("moonnet_ckpt_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::vector<std::uint8_t> read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Checkpoint small_checkpoint() {
  Checkpoint ck;
  ck.tensors.push_back({"a.weight", Tensor4(Shape{2, 3, 1, 1}, {1, 2, 3, 4, 5, 6})});
  ck.tensors.push_back({"a.bias", Tensor4(Shape{2, 1, 1, 1}, {-0.5f, 0.25f})});
  return ck;
}

CheckpointErrorKind decode_error(const std::vector<std::uint8_t>& bytes) {
  try {
    decode_checkpoint(bytes);
  } catch (const CheckpointError& e) {
    return e.kind();
  }
  ADD_FAILURE() << "decode succeeded";
  return CheckpointErrorKind::Io;
}

}  // namespace

TEST(CheckpointFormat, ExactByteLayout) {
  const auto bytes = encode_checkpoint(small_checkpoint());
  std::vector<std::uint8_t> want = {'M', 'O', 'O', 'N', 'N', 'E', 'T', '1', 2, 0, 0, 0};
  auto push_u32 = [&](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) want.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  };
  auto push_f32 = [&](float f) {
    std::uint32_t u;
    std::memcpy(&u, &f, 4);
    push_u32(u);
  };
  want.insert(want.end(), {8, 0});
  for (char c : std::string("a.weight")) want.push_back(c);
  want.push_back(2);  // rank: trailing unit dims dropped
  push_u32(2);
  push_u32(3);
  for (float f : {1.f, 2.f, 3.f, 4.f, 5.f, 6.f}) push_f32(f);
  want.insert(want.end(), {6, 0});
  for (char c : std::string("a.bias")) want.push_back(c);
  want.push_back(1);
  push_u32(2);
  push_f32(-0.5f);
  push_f32(0.25f);
  push_u32(static_cast<std::uint32_t>(crc32(crc32(0, Z_NULL, 0), want.data(), want.size())));
  EXPECT_EQ(bytes, want);
  EXPECT_EQ(decode_checkpoint(bytes), small_checkpoint());
}

TEST(CheckpointFormat, DistinctLoadErrors) {
  const auto good = encode_checkpoint(small_checkpoint());
  auto bad_magic = good;
  bad_magic[0] = 'X';
  EXPECT_EQ(decode_error(bad_magic), CheckpointErrorKind::BadMagic);
  for (std::size_t i = 8; i < good.size(); ++i) {
    auto flipped = good;
    flipped[i] ^= 0x10;
    EXPECT_EQ(decode_error(flipped), CheckpointErrorKind::CrcMismatch) << "byte " << i;
  }
  EXPECT_EQ(decode_error({good.begin(), good.begin() + 10}), CheckpointErrorKind::Truncated);

  // A well-formed CRC over a body that ends mid-tensor is a truncation.
  std::vector<std::uint8_t> cut(good.begin(), good.begin() + 30);
  const auto crc = static_cast<std::uint32_t>(crc32(crc32(0, Z_NULL, 0), cut.data(), cut.size()));
  for (int i = 0; i < 4; ++i) cut.push_back(static_cast<std::uint8_t>(crc >> (8 * i)));
  EXPECT_EQ(decode_error(cut), CheckpointErrorKind::Truncated);
}

TEST(CheckpointFile, MissingFileIsIoError) {
  try {
    load_checkpoint("/nonexistent/dir/x.ckpt");
    FAIL();
  } catch (const CheckpointError& e) {
    EXPECT_EQ(e.kind(), CheckpointErrorKind::Io);
  }
}

TEST(CheckpointFile, SaveLoadSaveIsByteIdenticalAndForwardIsBitwise) {
  const auto dir = scratch("rt");
  ExperimentConfig cfg;
  cfg.width = 0.125;
  PresenceNet net = build_model(cfg);
  // Move the weights and BN running stats away from init first.
  Rng rng(3);
  net.set_training(true);
  net.forward(random_tensor<float>(Shape{2, 3, 64, 64}, rng, 0, 1));
  for (auto* p : net.params()) {
    for (float& v : p->value.values()) v += 0.01f * static_cast<float>(std::uniform_real_distribution<>(-1, 1)(rng));
  }
  net.set_training(false);
  const auto x = random_tensor<float>(Shape{2, 3, 64, 64}, rng, 0, 1);
  const auto before = net.forward(x);

  Checkpoint ck = capture(net);
  ck.config_text = cfg.to_text();
  ck.rng_state = "stream=1 next_sample=0";
  save_checkpoint(ck, (dir / "a.ckpt").string());
  const Checkpoint loaded = load_checkpoint((dir / "a.ckpt").string());
  EXPECT_EQ(loaded, ck);
  save_checkpoint(loaded, (dir / "b.ckpt").string());
  EXPECT_EQ(read_bytes(dir / "a.ckpt"), read_bytes(dir / "b.ckpt"));
  EXPECT_EQ(read_bytes(dir / "a.ckpt.meta"), read_bytes(dir / "b.ckpt.meta"));

  PresenceNet fresh = build_model(cfg);
  restore(fresh, loaded);
  fresh.set_training(false);
  EXPECT_EQ(fresh.forward(x), before);
}

TEST(CheckpointFile, RestoreRejectsOtherArchitectures) {
  ExperimentConfig a;
  a.width = 0.125;
  ExperimentConfig b = a;
  b.design_id = 1;
  PresenceNet na = build_model(a);
  PresenceNet nb = build_model(b);
  try {
    restore(nb, capture(na));
    FAIL();
  } catch (const CheckpointError& e) {
    EXPECT_EQ(e.kind(), CheckpointErrorKind::Mismatch);
  }
}
