#include <gtest/gtest.h>

#include <set>

#include "moonnet/backbone.hpp"
#include "moonnet/errors.hpp"
#include "moonnet/rng.hpp"

using namespace moonnet;

namespace {

using A = AttentionKind;

Tensor4 input(Shape s, std::uint64_t seed) {
  Rng rng(seed);
  return random_tensor<float>(s, rng, 0.0, 1.0);
}

}  // namespace

TEST(Designs, AttentionSequences) {
  const std::array<std::array<A, 5>, 7> want = {{
      {A::None, A::None, A::None, A::None, A::None},
      {A::SE, A::SE, A::SE, A::SE, A::SE},
      {A::CBAM, A::CBAM, A::CBAM, A::CBAM, A::CBAM},
      {A::CBAM, A::SE, A::CBAM, A::SE, A::CBAM},
      {A::CBAM, A::SE, A::CBAM, A::SE, A::CBAM},
      {A::SE, A::CBAM, A::SE, A::CBAM, A::SE},
      {A::SE, A::SE, A::CBAM, A::SE, A::CBAM},
  }};
  for (int d = 0; d < kNumDesigns; ++d) EXPECT_EQ(design_attention(d), want[d]) << "design " << d;
  EXPECT_THROW(design_attention(7), ConfigError);
  EXPECT_THROW(design_attention(-1), ConfigError);
}

TEST(Designs, Ladders) {
  EXPECT_EQ(build_design(5, 0.25, GateKind::ResidualTanh).channels(),
            (std::vector<int>{32, 64, 128, 256, 512}));
  EXPECT_EQ(build_design(1, 1.0, GateKind::ResidualTanh).channels(),
            (std::vector<int>{64, 128, 256, 512, 1024}));
  EXPECT_EQ(build_design(0, 0.25, GateKind::ResidualTanh).ladder, ChannelLadder::Doubled);
  for (int d : {1, 2, 3}) EXPECT_EQ(default_ladder(d), ChannelLadder::Base);
  for (int d : {0, 4, 5, 6}) EXPECT_EQ(default_ladder(d), ChannelLadder::Doubled);
  EXPECT_EQ(scale_channels(64, 0.01), 1);
  EXPECT_EQ(scale_channels(100, 0.125), 13);  // 12.5 rounds away from zero
  EXPECT_THROW(build_design(5, 0.0, GateKind::ResidualTanh), ConfigError);
  EXPECT_THROW(build_design(5, 1.5, GateKind::ResidualTanh), ConfigError);
  EXPECT_THROW(parse_ladder("tripled"), ConfigError);
}

TEST(Backbone, StageShapesAt64) {
  Backbone<float> bb(build_design(5, 0.25, GateKind::ResidualTanh), 1);
  const auto outs = bb.forward_all(input(Shape{1, 3, 64, 64}, 2));
  const std::vector<Shape> want = {Shape{1, 32, 32, 32}, Shape{1, 64, 16, 16}, Shape{1, 128, 8, 8},
                                   Shape{1, 256, 4, 4}, Shape{1, 512, 2, 2}};
  ASSERT_EQ(outs.size(), want.size());
  for (std::size_t i = 0; i < want.size(); ++i) EXPECT_EQ(outs[i].shape(), want[i]);
}

TEST(Backbone, RejectsBadInputs) {
  Backbone<float> bb(build_design(1, 0.0625, GateKind::ResidualTanh), 1);
  EXPECT_THROW(bb.forward(Tensor4(Shape{1, 3, 48, 64})), ShapeError);
  EXPECT_THROW(bb.forward(Tensor4(Shape{1, 1, 64, 64})), ShapeError);
}

TEST(Backbone, ParameterCountOrdering) {
  const auto count = [](int d, ChannelLadder ladder) {
    Backbone<float> bb(build_design(d, 0.25, GateKind::ResidualTanh, ladder), 0);
    return bb.parameter_count();
  };
  const auto p0 = count(0, ChannelLadder::Base);
  const auto p1 = count(1, ChannelLadder::Base);
  const auto p2 = count(2, ChannelLadder::Base);
  EXPECT_LT(p0, p1);
  EXPECT_LT(p1, p2);
}

TEST(Backbone, ParameterNamesAreUnique) {
  Backbone<float> bb(build_design(6, 0.125, GateKind::ResidualTanh), 0);
  std::set<std::string> names;
  for (auto* p : bb.params()) EXPECT_TRUE(names.insert(p->name).second) << p->name;
  for (auto* b : bb.buffers()) EXPECT_TRUE(names.insert(b->name).second) << b->name;
}

TEST(Backbone, ResidualTanhDesignsMatchPlainBackboneAtInit) {
  Backbone<float> plain(build_design(0, 0.125, GateKind::ResidualTanh), 42);
  const auto x = input(Shape{2, 3, 64, 64}, 3);
  const auto ref = plain.forward_all(x);
  for (int d : {4, 5, 6}) {
    Backbone<float> gated(build_design(d, 0.125, GateKind::ResidualTanh), 42);
    const auto got = gated.forward_all(x);
    for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_EQ(got[i], ref[i]) << "design " << d;
  }
}

TEST(Backbone, SigmoidDesignDepartsFromPlainBackbone) {
  Backbone<float> plain(build_design(0, 0.125, GateKind::ResidualTanh), 42);
  Backbone<float> gated(build_design(5, 0.125, GateKind::SigmoidOriginal), 42);
  plain.set_training(false);
  gated.set_training(false);
  const auto x = input(Shape{1, 3, 64, 64}, 4);
  EXPECT_NE(plain.forward(x), gated.forward(x));
}

TEST(Backbone, SameSeedIsDeterministic) {
  const auto design = build_design(3, 0.125, GateKind::ResidualTanh);
  Backbone<float> a(design, 9), b(design, 9);
  const auto x = input(Shape{1, 3, 32, 32}, 5);
  EXPECT_EQ(a.forward(x), b.forward(x));
}

TEST(Backbone, TruncatedDesign) {
  const auto d = build_design(5, 0.25, GateKind::ResidualTanh).truncated(2);
  EXPECT_EQ(d.channels(), (std::vector<int>{32, 64}));
  Backbone<float> bb(d, 0);
  EXPECT_EQ(bb.forward(input(Shape{1, 3, 8, 8}, 6)).shape(), (Shape{1, 64, 2, 2}));
  EXPECT_THROW(build_design(5, 0.25, GateKind::ResidualTanh).truncated(6), ConfigError);
}

TEST(BranchAttention, IdentityAtInitPerBranch) {
  Rng rng(7);
  std::vector<Tensor4> branches = {random_tensor<float>(Shape{1, 8, 16, 16}, rng),
                                   random_tensor<float>(Shape{1, 16, 8, 8}, rng),
                                   random_tensor<float>(Shape{1, 32, 4, 4}, rng)};
  const auto out = per_branch_attention(branches, {A::SE, A::CBAM, A::None},
                                        GateKind::ResidualTanh);
  ASSERT_EQ(out.size(), branches.size());
  for (std::size_t i = 0; i < out.size(); ++i) EXPECT_EQ(out[i], branches[i]);
  const auto halved = per_branch_attention(branches, {A::SE, A::SE, A::SE},
                                           GateKind::SigmoidOriginal);
  EXPECT_EQ(halved[1][0], 0.5f * branches[1][0]);
}

TEST(BranchAttention, Errors) {
  std::vector<Tensor4> one = {Tensor4(Shape{1, 8, 2, 2})};
  EXPECT_THROW(per_branch_attention(one, {A::SE, A::SE}, GateKind::ResidualTanh), ConfigError);
  EXPECT_THROW(per_branch_attention<float>({}, {}, GateKind::ResidualTanh), ConfigError);
}
