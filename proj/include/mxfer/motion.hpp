#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mxfer/bvh.hpp"
#include "mxfer/error.hpp"
#include "mxfer/rotation.hpp"
#include "mxfer/skeleton.hpp"

namespace mxfer {

enum class FeatureMode { rotation6d, local_position, velocity };

constexpr std::string_view feature_mode_name(FeatureMode m) {
  switch (m) {
    case FeatureMode::rotation6d: return "rotation6d";
    case FeatureMode::local_position: return "local_position";
    case FeatureMode::velocity: return "velocity";
  }
  return "";
}

inline FeatureMode parse_feature_mode(std::string_view s) {
  for (auto m : {FeatureMode::rotation6d, FeatureMode::local_position, FeatureMode::velocity}) {
    if (feature_mode_name(m) == s) return m;
  }
  throw Error(ErrorCode::InvalidConfig, "unknown feature mode '" + std::string(s) + "'");
}

constexpr std::size_t joint_width(FeatureMode m) { return m == FeatureMode::rotation6d ? 6 : 3; }

// F x D feature matrix. Channels [0, 3) hold the world-frame root velocity in
// length units per frame; the rest is laid out by `layout`.
struct Motion {
  Matrix features;
  double fps = 30.0;
  ChannelLayout layout;
  FeatureMode mode = FeatureMode::rotation6d;

  std::size_t frames() const { return static_cast<std::size_t>(features.rows()); }
  std::size_t width() const { return static_cast<std::size_t>(features.cols()); }
};

namespace detail {

inline std::array<int, 3> rotation_axes(const Joint& j) {
  std::array<int, 3> axes{};
  std::size_t k = 0;
  for (Channel c : j.channels) {
    if (is_rotation_channel(c)) axes[k++] = channel_axis(c);
  }
  return axes;
}

inline bool has_rotation(const Joint& j) {
  return std::any_of(j.channels.begin(), j.channels.end(), is_rotation_channel);
}

inline Mat3 raw_joint_rotation(const Joint& j, const Eigen::Ref<const Eigen::RowVectorXd>& row) {
  Mat3 r = Mat3::Identity();
  for (std::size_t k = 0; k < j.channels.size(); ++k) {
    const Channel c = j.channels[k];
    if (!is_rotation_channel(c)) continue;
    r = r * axis_rotation(channel_axis(c), deg_to_rad(row(static_cast<Eigen::Index>(j.raw_column + k))));
  }
  return r;
}

inline Vec3 raw_root_position(const Joint& root, const Eigen::Ref<const Eigen::RowVectorXd>& row) {
  Vec3 p = root.rest_offset;
  for (std::size_t k = 0; k < root.channels.size(); ++k) {
    const Channel c = root.channels[k];
    if (!is_rotation_channel(c)) p[channel_axis(c)] = row(static_cast<Eigen::Index>(root.raw_column + k));
  }
  return p;
}

inline void check_finite(const Matrix& m, std::string_view what) {
  if (!m.allFinite()) throw Error(ErrorCode::DegenerateInput, std::string(what) + " contains non-finite values");
}

}  // namespace detail

struct FeatureConversion {
  Motion motion;
  Vec3 initial_root_position = Vec3::Zero();
};

// Per-frame root positions from the raw channels (offset used for missing axes).
inline std::vector<Vec3> raw_root_positions(const Skeleton& skel, const RawMotion& raw) {
  std::vector<Vec3> out(raw.frame_count);
  for (std::size_t f = 0; f < raw.frame_count; ++f) {
    out[f] = detail::raw_root_position(skel.joint(0), raw.values.row(static_cast<Eigen::Index>(f)));
  }
  return out;
}

inline FeatureConversion raw_to_features(const Skeleton& skel, const RawMotion& raw) {
  if (static_cast<std::size_t>(raw.values.cols()) != skel.raw_width() ||
      static_cast<std::size_t>(raw.values.rows()) != raw.frame_count) {
    throw Error(ErrorCode::ChannelMismatch, "raw motion has " + std::to_string(raw.values.cols()) +
                                                " channels, skeleton expects " + std::to_string(skel.raw_width()));
  }
  require(raw.frame_count >= 1, ErrorCode::EmptyMotion, "motion has no frames");
  require(raw.frame_time > 0.0, ErrorCode::ShapeMismatch, "frame time must be positive");

  const ChannelLayout layout = skel.layout(6);
  const auto frames = static_cast<Eigen::Index>(raw.frame_count);
  FeatureConversion out;
  out.motion.layout = layout;
  out.motion.mode = FeatureMode::rotation6d;
  out.motion.fps = 1.0 / raw.frame_time;
  out.motion.features.resize(frames, static_cast<Eigen::Index>(layout.width()));

  const auto roots = raw_root_positions(skel, raw);
  out.initial_root_position = roots[0];
  for (Eigen::Index f = 0; f < frames; ++f) {
    Vec3 v = Vec3::Zero();
    if (frames > 1) {
      const auto a = f + 1 < frames ? f : f - 1;
      v = roots[static_cast<std::size_t>(a + 1)] - roots[static_cast<std::size_t>(a)];
    }
    out.motion.features.row(f).head<3>() = v.transpose();
    for (std::size_t j = 0; j < skel.joint_count(); ++j) {
      const Mat3 r = detail::raw_joint_rotation(skel.joint(j), raw.values.row(f));
      out.motion.features.row(f).segment<6>(static_cast<Eigen::Index>(layout.channel_range(j).begin)) =
          encode_rotation_6d(r).transpose();
    }
  }
  return out;
}

struct RawConversion {
  RawMotion raw;
  // One entry per (frame, joint) whose Euler extraction was near gimbal lock.
  std::vector<std::string> gimbal_warnings;
};

inline RawConversion features_to_raw(const Skeleton& skel, const Motion& motion, const Vec3& initial_root_position) {
  require(motion.mode == FeatureMode::rotation6d, ErrorCode::ShapeMismatch, "features_to_raw needs rotation6d features");
  const ChannelLayout layout = skel.layout(6);
  require(motion.width() == layout.width(), ErrorCode::ShapeMismatch, "feature width does not match the skeleton");
  detail::check_finite(motion.features, "motion");

  RawConversion out;
  const auto frames = motion.features.rows();
  out.raw.frame_count = static_cast<std::size_t>(frames);
  out.raw.frame_time = 1.0 / motion.fps;
  out.raw.values.setZero(frames, static_cast<Eigen::Index>(skel.raw_width()));

  Vec3 root = initial_root_position;
  for (Eigen::Index f = 0; f < frames; ++f) {
    if (f > 0) root += motion.features.row(f - 1).head<3>().transpose();
    for (std::size_t j = 0; j < skel.joint_count(); ++j) {
      const Joint& joint = skel.joint(j);
      const Vec3 pos = j == 0 ? root : joint.rest_offset;
      std::optional<EulerExtraction> euler;
      if (detail::has_rotation(joint)) {
        const Vec6 six = motion.features.row(f).segment<6>(static_cast<Eigen::Index>(layout.channel_range(j).begin));
        euler = matrix_to_euler(detail::rotation_axes(joint), decode_rotation_6d(six));
        if (euler->near_gimbal) {
          out.gimbal_warnings.push_back("frame " + std::to_string(f) + ", joint '" + joint.name + "'");
        }
      }
      std::size_t rot_k = 0;
      for (std::size_t k = 0; k < joint.channels.size(); ++k) {
        const Channel c = joint.channels[k];
        double& dst = out.raw.values(f, static_cast<Eigen::Index>(joint.raw_column + k));
        dst = is_rotation_channel(c) ? rad_to_deg(euler->radians[rot_k++]) : pos[channel_axis(c)];
      }
    }
  }
  return out;
}

// Root trajectory recovered by integrating the velocity channels.
inline std::vector<Vec3> integrate_root(const Motion& motion, const Vec3& initial_root_position) {
  std::vector<Vec3> out(motion.frames());
  Vec3 p = initial_root_position;
  for (std::size_t f = 0; f < out.size(); ++f) {
    if (f > 0) p += motion.features.row(static_cast<Eigen::Index>(f - 1)).head<3>().transpose();
    out[f] = p;
  }
  return out;
}

// Global joint positions of every frame: frames x joints.
inline std::vector<std::vector<Vec3>> motion_positions(const Skeleton& skel, const Motion& motion,
                                                       const Vec3& initial_root_position) {
  require(motion.mode == FeatureMode::rotation6d, ErrorCode::ShapeMismatch, "positions need rotation6d features");
  const auto roots = integrate_root(motion, initial_root_position);
  std::vector<std::vector<Vec3>> out(motion.frames());
  for (std::size_t f = 0; f < out.size(); ++f) {
    out[f] = forward_kinematics(skel, motion.features.row(static_cast<Eigen::Index>(f)), roots[f]);
  }
  return out;
}

// Re-expresses rotation6d features as root-relative joint positions or their
// frame differences. Root velocity stays in channels [0, 3).
inline Motion to_feature_mode(const Skeleton& skel, const Motion& motion, FeatureMode mode) {
  require(motion.mode == FeatureMode::rotation6d, ErrorCode::ShapeMismatch, "conversion starts from rotation6d");
  if (mode == FeatureMode::rotation6d) return motion;

  const auto frames = motion.features.rows();
  const ChannelLayout layout = skel.layout(3);
  Matrix local(frames, static_cast<Eigen::Index>(layout.width()));
  for (Eigen::Index f = 0; f < frames; ++f) {
    local.row(f).head<3>() = motion.features.row(f).head<3>();
    const auto pos = forward_kinematics(skel, motion.features.row(f), Vec3::Zero());
    for (std::size_t j = 0; j < pos.size(); ++j) {
      local.row(f).segment<3>(static_cast<Eigen::Index>(layout.channel_range(j).begin)) = pos[j].transpose();
    }
  }

  Motion out;
  out.fps = motion.fps;
  out.layout = layout;
  out.mode = mode;
  if (mode == FeatureMode::local_position) {
    out.features = std::move(local);
    return out;
  }
  out.features.resize(frames, local.cols());
  for (Eigen::Index f = 0; f < frames; ++f) {
    out.features.row(f).head<3>() = local.row(f).head<3>();
    if (frames == 1) {
      out.features.row(f).tail(local.cols() - 3).setZero();
      continue;
    }
    const auto a = f + 1 < frames ? f : f - 1;
    out.features.row(f).tail(local.cols() - 3) = local.row(a + 1).tail(local.cols() - 3) - local.row(a).tail(local.cols() - 3);
  }
  return out;
}

// Per-channel z-scoring statistics.
struct NormalizationStats {
  Eigen::RowVectorXd mean;
  Eigen::RowVectorXd std;

  static constexpr double std_floor = 1e-6;

  static NormalizationStats identity(std::size_t width) {
    return {Eigen::RowVectorXd::Zero(static_cast<Eigen::Index>(width)),
            Eigen::RowVectorXd::Ones(static_cast<Eigen::Index>(width))};
  }

  std::size_t width() const { return static_cast<std::size_t>(mean.size()); }

  Matrix apply(const Matrix& x) const {
    require(static_cast<std::size_t>(x.cols()) == width(), ErrorCode::ShapeMismatch, "stats width mismatch");
    return (x.rowwise() - mean).array().rowwise() / std.array();
  }

  Matrix invert(const Matrix& z) const {
    require(static_cast<std::size_t>(z.cols()) == width(), ErrorCode::ShapeMismatch, "stats width mismatch");
    return (z.array().rowwise() * std.array()).matrix().rowwise() + mean;
  }
};

// Mean and population standard deviation over every frame of every motion.
inline NormalizationStats fit_normalization(std::span<const Motion> motions) {
  require(!motions.empty(), ErrorCode::TooFew, "no motions to fit normalization on");
  const auto width = motions[0].features.cols();
  Eigen::RowVectorXd sum = Eigen::RowVectorXd::Zero(width);
  double count = 0.0;
  for (const auto& m : motions) {
    require(m.features.cols() == width && m.mode == motions[0].mode, ErrorCode::ShapeMismatch,
            "motions differ in layout or feature mode");
    sum += m.features.colwise().sum();
    count += static_cast<double>(m.features.rows());
  }
  NormalizationStats s;
  s.mean = sum / count;
  Eigen::RowVectorXd sq = Eigen::RowVectorXd::Zero(width);
  for (const auto& m : motions) sq += (m.features.rowwise() - s.mean).array().square().matrix().colwise().sum();
  s.std = (sq / count).array().sqrt().max(NormalizationStats::std_floor).matrix();
  return s;
}

}  // namespace mxfer
