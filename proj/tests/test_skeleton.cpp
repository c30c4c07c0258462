#include <gtest/gtest.h>

#include <random>

#include "mxfer/motion.hpp"
#include "mxfer/skeleton.hpp"

namespace {

using namespace mxfer;

std::string fixture(const std::string& name) { return std::string(MXFER_FIXTURES) + "/" + name; }

Skeleton load_skeleton(const std::string& name) { return Skeleton::from_raw(load_bvh(fixture(name)).joints); }

TEST(Skeleton, FromRawSplitsEndSites) {
  const auto s = load_skeleton("chain3.bvh");
  ASSERT_EQ(s.joint_count(), 2u);
  ASSERT_EQ(s.end_sites().size(), 1u);
  EXPECT_EQ(s.end_sites()[0].parent, 1u);
  EXPECT_EQ(s.joint(1).parent, 0u);
  EXPECT_EQ(s.raw_width(), 9u);
  EXPECT_EQ(s.joint(1).raw_column, 6u);
  EXPECT_EQ(s.index_of("Child"), 1u);
  EXPECT_THROW(s.index_of("Nope"), Error);
}

TEST(Skeleton, ToRawRoundTrip) {
  const auto raw = load_bvh(fixture("quadruped.bvh")).joints;
  EXPECT_EQ(Skeleton::from_raw(raw).to_raw(), raw);
}

TEST(Skeleton, RejectsTwoRotationChannels) {
  auto raw = load_bvh(fixture("chain3.bvh")).joints;
  raw[1].channels = {Channel::Zrotation, Channel::Xrotation};
  try {
    Skeleton::from_raw(raw);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ChannelMismatch);
  }
}

TEST(ChannelLayout, Ranges) {
  const ChannelLayout l{4, 6};
  EXPECT_EQ(l.width(), 27u);
  EXPECT_EQ(ChannelLayout::root_velocity, (ChannelLayout::Range{0, 3}));
  EXPECT_EQ(l.channel_range(0), (ChannelLayout::Range{3, 9}));
  EXPECT_EQ(l.channel_range(3), (ChannelLayout::Range{21, 27}));
  EXPECT_THROW(l.channel_range(4), Error);
  EXPECT_EQ((ChannelLayout{4, 3}).width(), 15u);
}

TEST(Skeleton, BuildAssignsChannels) {
  const auto s = Skeleton::build({"a", "b", "c"}, {std::nullopt, 0, 1},
                                 {Vec3::Zero(), Vec3(0, 1, 0), Vec3(0, 2, 0)}, {{2, Vec3(0, 1, 0)}});
  EXPECT_EQ(s.raw_width(), 12u);
  EXPECT_EQ(s.joint(2).raw_column, 9u);
  EXPECT_EQ(s.median_bone_length(), 1.0);
  EXPECT_TRUE(Skeleton::from_raw(s.to_raw()).same_structure(s));
  EXPECT_THROW(Skeleton::build({"a", "b"}, {std::nullopt, 1}, {Vec3::Zero(), Vec3::Ones()}), Error);
}

// Reference positions computed by the fixture generator's own FK.
TEST(ForwardKinematics, Biped22MatchesReference) {
  const auto file = load_bvh(fixture("biped22.bvh"));
  const auto skel = Skeleton::from_raw(file.joints);
  const auto conv = raw_to_features(skel, file.motion);
  const auto pos = motion_positions(skel, conv.motion, conv.initial_root_position);
  struct Ref {
    std::size_t frame;
    const char* name;
    Vec3 p;
  };
  const Ref refs[] = {
      {0, "Hips", {0.0, 91.5, 0.0}},
      {0, "LeftToe", {9.000000000, 4.858342066, -18.726692411}},
      {0, "RightHand", {-33.195629655, 89.283830951, -3.724679513}},
      {0, "Head", {0.150473691, 149.500000000, 1.994331384}},
      {37, "Hips", {-0.136197, 90.881678, 33.3}},
      {37, "LeftToe", {8.814465479, 0.738107570, 34.998773965}},
      {37, "RightHand", {-32.325793502, 88.036658253, 28.120748393}},
      {37, "Head", {-0.190545063, 148.881678000, 35.299261436}},
  };
  for (const auto& r : refs) {
    SCOPED_TRACE(std::string(r.name) + " @ " + std::to_string(r.frame));
    EXPECT_LE((pos[r.frame][skel.index_of(r.name)] - r.p).norm(), 1e-4);
  }
}

TEST(ForwardKinematics, IdentityPoseIsRestPose) {
  const auto skel = load_skeleton("hexapod.bvh");
  std::vector<Mat3> rots(skel.joint_count(), Mat3::Identity());
  const auto fk = forward_kinematics(skel, rots, Vec3(1, 2, 3));
  for (std::size_t j = 1; j < skel.joint_count(); ++j) {
    const auto p = *skel.joint(j).parent;
    EXPECT_LE((fk.positions[j] - fk.positions[p] - skel.joint(j).rest_offset).norm(), 1e-12);
  }
}

TEST(ForwardKinematics, BoneLengthsPreservedUnderRandomRotations) {
  const auto skel = load_skeleton("bird.bvh");
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-3.14, 3.14);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Mat3> rots(skel.joint_count());
    for (auto& r : rots) r = euler_to_matrix({2, 0, 1}, {u(rng), u(rng), u(rng)});
    const auto fk = forward_kinematics(skel, rots, Vec3::Zero());
    for (std::size_t j = 1; j < skel.joint_count(); ++j) {
      const double len = (fk.positions[j] - fk.positions[*skel.joint(j).parent]).norm();
      EXPECT_NEAR(len, skel.joint(j).rest_offset.norm(), 1e-9);
    }
  }
}

TEST(BoneDirection, RootUsesFirstChild) {
  const auto s = load_skeleton("chain3.bvh");
  EXPECT_LE((bone_direction(s, 0) - Vec3(0, 1, 0)).norm(), 1e-12);
  EXPECT_LE((bone_direction(s, 1) - Vec3(0, 1, 0)).norm(), 1e-12);
  EXPECT_THROW(bone_direction(s, 2), Error);
}

TEST(BoneDirection, ZeroLengthBoneThrows) {
  const auto s = Skeleton::build({"a", "b"}, {std::nullopt, 0}, {Vec3::Zero(), Vec3::Zero()});
  try {
    bone_direction(s, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DegenerateBone);
  }
}

TEST(AlignRestPose, MapsSourceBoneOntoTargetBone) {
  const auto src = Skeleton::build({"r", "x"}, {std::nullopt, 0}, {Vec3::Zero(), Vec3(2, 0, 0)});
  const auto tgt = Skeleton::build({"r", "y"}, {std::nullopt, 0}, {Vec3::Zero(), Vec3(0, 0, 3)});
  BindingSet b;
  b.pairs = {{1, 1, std::nullopt}};
  const auto a = align_rest_pose(src, tgt, b);
  ASSERT_EQ(a.size(), 1u);
  EXPECT_TRUE(is_rotation(a[0], 1e-9));
  EXPECT_LE((a[0] * Vec3(1, 0, 0) - Vec3(0, 0, 1)).norm(), 1e-12);

  const Mat3 override_rot = axis_rotation(1, 0.3);
  b.pairs[0].alignment = override_rot;
  EXPECT_EQ(align_rest_pose(src, tgt, b)[0], override_rot);

  b.pairs = {{5, 1, std::nullopt}};
  EXPECT_THROW(align_rest_pose(src, tgt, b), Error);
}

TEST(Bindings, Validation) {
  BindingSet b;
  b.pairs = {{1, 1, std::nullopt}, {1, 2, std::nullopt}};
  try {
    validate_bindings(b, 3, 3);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DuplicateTarget);
  }
  b.pairs = {{0, 3, std::nullopt}};
  EXPECT_THROW(validate_bindings(b, 3, 3), Error);
  b.pairs = {{0, 0, Mat3::Identity() * 2.0}};
  EXPECT_THROW(validate_bindings(b, 3, 3), Error);
  b.pairs.clear();
  EXPECT_NO_THROW(validate_bindings(b, 3, 3));
  b.bind_root_velocity = false;
  EXPECT_THROW(validate_bindings(b, 3, 3), Error);
}

}  // namespace
