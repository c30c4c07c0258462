#pragma once

#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "mxfer/motion.hpp"
#include "mxfer/skeleton.hpp"

namespace mxfer::synth {

// Random tree of `joints` joints; each joint hangs off one of the three
// previously created joints, giving branchy but reasonably deep trees.
inline Skeleton random_skeleton(std::size_t joints, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n;
  std::uniform_real_distribution<double> len(0.5, 1.5);
  std::vector<std::string> names;
  std::vector<std::optional<std::size_t>> parents;
  std::vector<Vec3> offsets;
  for (std::size_t j = 0; j < joints; ++j) {
    names.push_back("j" + std::to_string(j));
    if (j == 0) {
      parents.push_back(std::nullopt);
      offsets.push_back(Vec3::Zero());
      continue;
    }
    std::uniform_int_distribution<std::size_t> pick(j >= 3 ? j - 3 : 0, j - 1);
    parents.push_back(pick(rng));
    offsets.push_back(Vec3(n(rng), n(rng), n(rng)).normalized() * len(rng));
  }
  return Skeleton::build(names, parents, offsets);
}

// `base` with `extra` joints appended, each hanging off a random earlier joint.
// Joint indices and rest offsets of `base` are preserved.
inline Skeleton extend_skeleton(const Skeleton& base, std::size_t extra, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n;
  std::uniform_real_distribution<double> len(0.5, 1.5);
  std::vector<std::string> names;
  std::vector<std::optional<std::size_t>> parents;
  std::vector<Vec3> offsets;
  for (const auto& j : base.joints()) {
    names.push_back(j.name);
    parents.push_back(j.parent);
    offsets.push_back(j.rest_offset);
  }
  for (std::size_t k = 0; k < extra; ++k) {
    std::uniform_int_distribution<std::size_t> pick(0, names.size() - 1);
    parents.push_back(pick(rng));
    names.push_back("x" + std::to_string(k));
    offsets.push_back(Vec3(n(rng), n(rng), n(rng)).normalized() * len(rng));
  }
  return Skeleton::build(names, parents, offsets);
}

// Straight chain along +Y.
inline Skeleton chain_skeleton(std::size_t joints, double bone = 1.0) {
  std::vector<std::string> names;
  std::vector<std::optional<std::size_t>> parents;
  std::vector<Vec3> offsets;
  for (std::size_t j = 0; j < joints; ++j) {
    names.push_back("c" + std::to_string(j));
    parents.push_back(j == 0 ? std::nullopt : std::optional<std::size_t>(j - 1));
    offsets.push_back(j == 0 ? Vec3::Zero() : Vec3(0, bone, 0));
  }
  return Skeleton::build(names, parents, offsets);
}

struct Gait {
  double period = 32.0;   // frames per cycle
  double phase = 0.0;     // radians added to every joint
  double amplitude = 0.5; // radians
  double speed = 0.05;    // root forward velocity per frame
  std::uint64_t style = 0;  // per-joint phase and axis pattern
  // Joints from `free_from` on draw their pattern from `free_style` instead.
  std::size_t free_from = std::numeric_limits<std::size_t>::max();
  std::uint64_t free_style = 0;
};

// Every joint swings about a style-dependent axis at the gait frequency with
// a style-dependent phase offset; the root travels along +Z with a vertical bob.
inline Motion periodic_motion(const Skeleton& skel, std::size_t frames, const Gait& g, double fps = 30.0) {
  std::mt19937_64 base(g.style);
  std::mt19937_64 free(g.free_style);
  std::uniform_real_distribution<double> u(0.0, 2.0 * std::numbers::pi);
  std::normal_distribution<double> n;
  const std::size_t joints = skel.joint_count();
  std::vector<double> offset(joints);
  std::vector<Vec3> axis(joints);
  std::vector<double> harmonic(joints);
  for (std::size_t j = 0; j < joints; ++j) {
    auto& rng = j < g.free_from ? base : free;
    offset[j] = u(rng);
    axis[j] = Vec3(n(rng), n(rng), n(rng)).normalized();
    harmonic[j] = 0.3 * std::abs(n(rng));
  }
  const ChannelLayout layout = skel.layout(6);
  Motion m;
  m.fps = fps;
  m.layout = layout;
  m.mode = FeatureMode::rotation6d;
  m.features.resize(static_cast<Eigen::Index>(frames), static_cast<Eigen::Index>(layout.width()));
  const double w = 2.0 * std::numbers::pi / g.period;
  for (std::size_t f = 0; f < frames; ++f) {
    const double t = w * static_cast<double>(f) + g.phase;
    const auto row = static_cast<Eigen::Index>(f);
    m.features.row(row).head<3>() << 0.0, 0.02 * std::cos(2.0 * t), g.speed;
    for (std::size_t j = 0; j < joints; ++j) {
      const double angle = g.amplitude * (std::sin(t + offset[j]) + harmonic[j] * std::sin(2.0 * t + offset[j]));
      const Mat3 r = Eigen::AngleAxisd(angle, axis[j]).toRotationMatrix();
      m.features.row(row).segment<6>(static_cast<Eigen::Index>(layout.channel_range(j).begin)) =
          encode_rotation_6d(r).transpose();
    }
  }
  return m;
}

}  // namespace mxfer::synth
