#pragma once

#include <algorithm>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mxfer/binding.hpp"
#include "mxfer/bvh.hpp"
#include "mxfer/error.hpp"
#include "mxfer/rotation.hpp"

namespace mxfer {

struct Joint {
  std::string name;
  std::optional<std::size_t> parent;
  Vec3 rest_offset = Vec3::Zero();
  std::vector<Channel> channels;
  // First column of this joint's channels in the raw motion matrix.
  std::size_t raw_column = 0;
};

struct EndSite {
  std::size_t parent = 0;
  Vec3 offset = Vec3::Zero();
};

// Index functions for the feature matrix: [0, 3) is the root velocity and joint
// j owns [3 + w*j, 3 + w*(j+1)), where w is 6 for rotations and 3 for positions.
struct ChannelLayout {
  std::size_t joint_count = 0;
  std::size_t joint_width = 6;

  struct Range {
    std::size_t begin = 0;
    std::size_t end = 0;
    std::size_t size() const { return end - begin; }
    bool operator==(const Range&) const = default;
  };

  static constexpr Range root_velocity{0, 3};

  std::size_t width() const { return 3 + joint_width * joint_count; }

  Range channel_range(std::size_t joint) const {
    if (joint >= joint_count) {
      throw Error(ErrorCode::OutOfRange, "joint " + std::to_string(joint) + " >= joint count " +
                                             std::to_string(joint_count));
    }
    return {3 + joint_width * joint, 3 + joint_width * (joint + 1)};
  }

  bool operator==(const ChannelLayout&) const = default;
};

class Skeleton {
 public:
  Skeleton() = default;

  // Splits end sites out of a parsed hierarchy. Parents always precede their
  // children because the input is in depth-first order.
  static Skeleton from_raw(const std::vector<RawJoint>& raw) {
    require(!raw.empty() && !raw[0].parent, ErrorCode::ShapeMismatch, "hierarchy must start with a root");
    Skeleton s;
    std::vector<std::optional<std::size_t>> remap(raw.size());
    std::size_t column = 0;
    for (std::size_t i = 0; i < raw.size(); ++i) {
      const RawJoint& r = raw[i];
      if (i > 0 && !r.parent) throw Error(ErrorCode::ShapeMismatch, "skeleton has more than one root");
      if (r.is_end_site) {
        require(r.parent && remap[*r.parent], ErrorCode::ShapeMismatch, "end site without a parent joint");
        s.end_sites_.push_back({*remap[*r.parent], r.offset});
        continue;
      }
      Joint j;
      j.name = r.name;
      if (r.parent) {
        require(remap[*r.parent].has_value(), ErrorCode::ShapeMismatch, "joint parent is an end site");
        j.parent = remap[*r.parent];
      }
      j.rest_offset = r.offset;
      j.channels = r.channels;
      j.raw_column = column;
      column += r.channels.size();
      const auto rot = std::count_if(r.channels.begin(), r.channels.end(), is_rotation_channel);
      if (rot != 0 && rot != 3) {
        throw Error(ErrorCode::ChannelMismatch, "joint '" + r.name + "' has " + std::to_string(rot) +
                                                    " rotation channels; 0 or 3 are supported");
      }
      remap[i] = s.joints_.size();
      s.joints_.push_back(std::move(j));
    }
    s.raw_width_ = column;
    s.rebuild_children();
    return s;
  }

  std::vector<RawJoint> to_raw() const {
    std::vector<RawJoint> out;
    // Depth-first, children in index order, end sites after child joints.
    auto visit = [&](auto&& self, std::size_t j, std::optional<std::size_t> parent_raw) -> void {
      RawJoint r;
      r.name = joints_[j].name;
      r.parent = parent_raw;
      r.offset = joints_[j].rest_offset;
      r.channels = joints_[j].channels;
      out.push_back(r);
      const std::size_t me = out.size() - 1;
      for (std::size_t c : children_[j]) self(self, c, me);
      for (const auto& e : end_sites_) {
        if (e.parent == j) {
          RawJoint site;
          site.name = "End Site";
          site.parent = me;
          site.offset = e.offset;
          site.is_end_site = true;
          out.push_back(site);
        }
      }
    };
    visit(visit, 0, std::nullopt);
    return out;
  }

  // Programmatic construction: the root gets position + ZXY rotation channels,
  // every other joint ZXY rotation channels.
  static Skeleton build(const std::vector<std::string>& names, const std::vector<std::optional<std::size_t>>& parents,
                        const std::vector<Vec3>& offsets, const std::vector<EndSite>& end_sites = {}) {
    require(names.size() == parents.size() && names.size() == offsets.size() && !names.empty(),
            ErrorCode::ShapeMismatch, "joint arrays differ in length");
    Skeleton s;
    for (std::size_t i = 0; i < names.size(); ++i) {
      Joint j;
      j.name = names[i];
      j.parent = parents[i];
      if (i == 0) {
        require(!parents[0], ErrorCode::ShapeMismatch, "joint 0 must be the root");
        j.channels = {Channel::Xposition, Channel::Yposition, Channel::Zposition,
                      Channel::Zrotation, Channel::Xrotation, Channel::Yrotation};
      } else {
        require(parents[i] && *parents[i] < i, ErrorCode::ShapeMismatch, "parents must precede children");
        j.channels = {Channel::Zrotation, Channel::Xrotation, Channel::Yrotation};
      }
      j.rest_offset = offsets[i];
      s.joints_.push_back(std::move(j));
    }
    for (const auto& e : end_sites) require(e.parent < names.size(), ErrorCode::ShapeMismatch, "bad end site parent");
    s.end_sites_ = end_sites;
    s.rebuild_children();
    // Raw columns follow the depth-first order that to_raw() writes.
    std::size_t column = 0;
    auto visit = [&](auto&& self, std::size_t j) -> void {
      s.joints_[j].raw_column = column;
      column += s.joints_[j].channels.size();
      for (std::size_t c : s.children_[j]) self(self, c);
    };
    visit(visit, 0);
    s.raw_width_ = column;
    return s;
  }

  std::size_t joint_count() const { return joints_.size(); }
  const std::vector<Joint>& joints() const { return joints_; }
  const Joint& joint(std::size_t j) const { return joints_.at(j); }
  const std::vector<EndSite>& end_sites() const { return end_sites_; }
  const std::vector<std::size_t>& children(std::size_t j) const { return children_.at(j); }
  std::size_t raw_width() const { return raw_width_; }

  std::optional<std::size_t> find(std::string_view name) const {
    for (std::size_t i = 0; i < joints_.size(); ++i) {
      if (joints_[i].name == name) return i;
    }
    return std::nullopt;
  }

  std::size_t index_of(std::string_view name) const {
    if (auto i = find(name)) return *i;
    throw Error(ErrorCode::UnknownJoint, "no joint named '" + std::string(name) + "'");
  }

  ChannelLayout layout(std::size_t joint_width = 6) const { return {joints_.size(), joint_width}; }

  // Median length of the non-root bones (including end-site bones); used to
  // make thresholds scale-free.
  double median_bone_length() const {
    std::vector<double> lengths;
    for (std::size_t j = 1; j < joints_.size(); ++j) lengths.push_back(joints_[j].rest_offset.norm());
    for (const auto& e : end_sites_) lengths.push_back(e.offset.norm());
    std::erase_if(lengths, [](double v) { return v < 1e-9; });
    if (lengths.empty()) return 1.0;
    std::nth_element(lengths.begin(), lengths.begin() + static_cast<std::ptrdiff_t>(lengths.size() / 2), lengths.end());
    return lengths[lengths.size() / 2];
  }

  bool same_structure(const Skeleton& other) const {
    if (joints_.size() != other.joints_.size()) return false;
    for (std::size_t i = 0; i < joints_.size(); ++i) {
      if (joints_[i].name != other.joints_[i].name || joints_[i].parent != other.joints_[i].parent) return false;
    }
    return true;
  }

 private:
  void rebuild_children() {
    children_.assign(joints_.size(), {});
    for (std::size_t j = 1; j < joints_.size(); ++j) children_[*joints_[j].parent].push_back(j);
  }

  std::vector<Joint> joints_;
  std::vector<EndSite> end_sites_;
  std::vector<std::vector<std::size_t>> children_;
  std::size_t raw_width_ = 0;
};

struct PoseFK {
  std::vector<Vec3> positions;
  std::vector<Mat3> global_rotations;
};

// Global joint positions and orientations from local rotations.
inline PoseFK forward_kinematics(const Skeleton& skel, std::span<const Mat3> local_rotations, const Vec3& root_position) {
  require(local_rotations.size() == skel.joint_count(), ErrorCode::ShapeMismatch,
          "expected one rotation per joint");
  PoseFK out;
  const std::size_t n = skel.joint_count();
  out.positions.resize(n);
  out.global_rotations.resize(n);
  out.positions[0] = root_position;
  out.global_rotations[0] = local_rotations[0];
  for (std::size_t j = 1; j < n; ++j) {
    const std::size_t p = *skel.joint(j).parent;
    out.positions[j] = out.positions[p] + out.global_rotations[p] * skel.joint(j).rest_offset;
    out.global_rotations[j] = out.global_rotations[p] * local_rotations[j];
  }
  return out;
}

// Positions from one feature row in the 6D-rotation layout (width 3 + 6J).
inline std::vector<Vec3> forward_kinematics(const Skeleton& skel, const Eigen::Ref<const Eigen::RowVectorXd>& pose,
                                            const Vec3& root_position) {
  const ChannelLayout layout = skel.layout();
  if (static_cast<std::size_t>(pose.size()) != layout.width()) {
    throw Error(ErrorCode::ShapeMismatch, "pose width " + std::to_string(pose.size()) + " != " +
                                              std::to_string(layout.width()));
  }
  std::vector<Mat3> rots(skel.joint_count());
  for (std::size_t j = 0; j < skel.joint_count(); ++j) {
    const auto r = layout.channel_range(j);
    rots[j] = decode_rotation_6d(pose.segment(static_cast<Eigen::Index>(r.begin), 6).transpose());
  }
  return forward_kinematics(skel, rots, root_position).positions;
}

inline Vec3 direction_or_throw(const Vec3& v, std::size_t joint) {
  const double n = v.norm();
  if (n < 1e-9) throw Error(ErrorCode::DegenerateBone, "bone of joint " + std::to_string(joint) + " has zero length");
  return v / n;
}

// Unit rest direction of one joint: its own offset for non-root joints, and the
// direction toward the first child (or end site) for the root.
inline Vec3 bone_direction(const Skeleton& skel, std::size_t j) {
  if (j >= skel.joint_count()) throw Error(ErrorCode::OutOfRange, "joint " + std::to_string(j) + " out of range");
  if (j > 0) return direction_or_throw(skel.joint(j).rest_offset, j);
  if (!skel.children(0).empty()) return direction_or_throw(skel.joint(skel.children(0).front()).rest_offset, 0);
  auto it = std::find_if(skel.end_sites().begin(), skel.end_sites().end(),
                         [](const EndSite& e) { return e.parent == 0; });
  if (it == skel.end_sites().end()) throw Error(ErrorCode::DegenerateBone, "root has no child to define a direction");
  return direction_or_throw(it->offset, 0);
}

inline std::vector<Vec3> bone_directions(const Skeleton& skel) {
  std::vector<Vec3> dirs(skel.joint_count());
  for (std::size_t j = 0; j < skel.joint_count(); ++j) dirs[j] = bone_direction(skel, j);
  return dirs;
}

// Per bound pair, the minimal rotation taking the source bone's rest direction
// onto the target bone's. Pairs carrying an explicit override return it as is.
inline std::vector<Mat3> align_rest_pose(const Skeleton& source, const Skeleton& target, const BindingSet& bindings) {
  validate_bindings(bindings, target.joint_count(), source.joint_count());
  std::vector<Mat3> out;
  out.reserve(bindings.pairs.size());
  for (const auto& p : bindings.pairs) {
    out.push_back(p.alignment ? *p.alignment
                              : minimal_rotation(bone_direction(source, p.source), bone_direction(target, p.target)));
  }
  return out;
}

}  // namespace mxfer
