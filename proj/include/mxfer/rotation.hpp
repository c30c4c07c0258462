#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "mxfer/error.hpp"

namespace mxfer {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;

// Row-major so that a run of consecutive frames is one contiguous block.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

constexpr double deg_to_rad(double deg) { return deg * std::numbers::pi / 180.0; }
constexpr double rad_to_deg(double rad) { return rad * 180.0 / std::numbers::pi; }

inline Mat3 axis_rotation(int axis, double radians) {
  return Eigen::AngleAxisd(radians, Vec3::Unit(axis)).toRotationMatrix();
}

// Intrinsic composition R = R_a0(e0) * R_a1(e1) * R_a2(e2), the BVH convention
// where channels are listed left to right in application order.
inline Mat3 euler_to_matrix(const std::array<int, 3>& axes, const std::array<double, 3>& radians) {
  return axis_rotation(axes[0], radians[0]) * axis_rotation(axes[1], radians[1]) *
         axis_rotation(axes[2], radians[2]);
}

struct EulerExtraction {
  std::array<double, 3> radians{};
  bool near_gimbal = false;
};

// Inverse of euler_to_matrix for three distinct axes. The middle angle lies in
// [-pi/2, pi/2]; the outer two in (-pi, pi]. Near gimbal lock the last angle is
// pinned to zero and the flag is raised.
inline EulerExtraction matrix_to_euler(const std::array<int, 3>& axes, const Mat3& r) {
  const int i = axes[0];
  const int j = axes[1];
  const int k = axes[2];
  const double s = ((j - i + 3) % 3 == 1) ? 1.0 : -1.0;

  EulerExtraction out;
  const double sb = std::clamp(s * r(i, k), -1.0, 1.0);
  const double b = std::asin(sb);
  const double cb = std::sqrt(std::max(0.0, 1.0 - sb * sb));
  if (cb > 1e-6) {
    out.radians = {std::atan2(-s * r(j, k), r(k, k)), b, std::atan2(-s * r(i, j), r(i, i))};
    return out;
  }
  out.near_gimbal = true;
  const Mat3 n = r * axis_rotation(j, b).transpose();
  const int u = (i + 1) % 3;
  const int w = (i + 2) % 3;
  out.radians = {std::atan2(n(w, u), n(u, u)), b, 0.0};
  return out;
}

inline bool is_rotation(const Mat3& r, double tol) {
  return (r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff() <= tol &&
         std::abs(r.determinant() - 1.0) <= tol;
}

// First two columns, concatenated.
inline Vec6 encode_rotation_6d(const Mat3& r) {
  if (!is_rotation(r, 1e-6)) throw Error(ErrorCode::NotARotation, "matrix is not orthonormal within 1e-6");
  Vec6 v;
  v << r.col(0), r.col(1);
  return v;
}

// Gram-Schmidt on the two stored columns.
inline Mat3 decode_rotation_6d(const Eigen::Ref<const Vec6>& v) {
  const Vec3 a = v.head<3>();
  const Vec3 c = v.tail<3>();
  const double na = a.norm();
  if (!(na > 1e-9)) throw Error(ErrorCode::DegenerateInput, "first 6D column has vanishing norm");
  const Vec3 b1 = a / na;
  const Vec3 rest = c - b1.dot(c) * b1;
  const double nr = rest.norm();
  if (!(nr > 1e-9)) throw Error(ErrorCode::DegenerateInput, "6D columns are parallel or second column vanishes");
  const Vec3 b2 = rest / nr;
  Mat3 r;
  r.col(0) = b1;
  r.col(1) = b2;
  r.col(2) = b1.cross(b2);
  return r;
}

// Smallest rotation taking unit vector `from` onto unit vector `to`. For
// anti-parallel input the axis is the cross product of `from` with the
// lowest-index basis vector not parallel to it.
inline Mat3 minimal_rotation(const Vec3& from, const Vec3& to) {
  const Vec3 f = from.normalized();
  const Vec3 t = to.normalized();
  const double c = std::clamp(f.dot(t), -1.0, 1.0);
  const Vec3 axis = f.cross(t);
  const double s = axis.norm();
  if (s < 1e-12) {
    if (c > 0.0) return Mat3::Identity();
    for (int e = 0; e < 3; ++e) {
      const Vec3 perp = f.cross(Vec3::Unit(e));
      if (perp.norm() > 1e-6) {
        return Eigen::AngleAxisd(std::numbers::pi, perp.normalized()).toRotationMatrix();
      }
    }
  }
  return Eigen::AngleAxisd(std::atan2(s, c), axis / s).toRotationMatrix();
}

}  // namespace mxfer
