#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace scaletwin {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

/// Rigid-body transform in SE(3): p' = R p + t.
///
/// The rotation is validated on construction (RᵀR = I and det R = +1, both to
/// 1e-9). Products that drift past that bound are re-orthonormalized, so every
/// live Transform3 satisfies the invariant.
class Transform3 {
 public:
  static constexpr double kTolerance = 1e-9;

  Transform3() = default;
  Transform3(const Mat3& rotation, const Vec3& translation);

  static Transform3 identity() { return {}; }
  static Transform3 from_translation(double x, double y, double z);
  /// Rotation about +z by `yaw` followed by translation `t`.
  static Transform3 from_yaw(double yaw, const Vec3& t = Vec3::Zero());
  /// Intrinsic Z-Y-X (yaw, pitch, roll) rotation plus translation.
  static Transform3 from_euler(double roll, double pitch, double yaw, const Vec3& t = Vec3::Zero());

  const Mat3& rotation() const noexcept { return rotation_; }
  const Vec3& translation() const noexcept { return translation_; }

  Mat4 matrix() const;
  Vec3 apply(const Vec3& point) const { return rotation_ * point + translation_; }
  /// Heading of the body +x axis projected onto the world xy plane.
  double yaw() const;

  bool approx_equal(const Transform3& other, double tol = kTolerance) const;

 private:
  struct Unchecked {};
  Transform3(Unchecked, const Mat3& rotation, const Vec3& translation)
      : rotation_(rotation), translation_(translation) {}

  friend Transform3 compose(const Transform3& a, const Transform3& b);
  friend Transform3 invert(const Transform3& t);

  Mat3 rotation_ = Mat3::Identity();
  Vec3 translation_ = Vec3::Zero();
};

/// Homogeneous product a·b (apply b first, then a).
Transform3 compose(const Transform3& a, const Transform3& b);
/// Closed-form inverse (Rᵀ, −Rᵀt).
Transform3 invert(const Transform3& t);

inline Transform3 operator*(const Transform3& a, const Transform3& b) { return compose(a, b); }

/// Largest entry of |RᵀR − I| together with |det R − 1|.
double orthonormality_error(const Mat3& r);

struct Quaternion {
  double w = 1.0;
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  double norm() const;
};

struct EulerAngles {
  double roll = 0.0;   // about x
  double pitch = 0.0;  // about y
  double yaw = 0.0;    // about z
};

// Intrinsic ZYX convention throughout: R = Rz(yaw)·Ry(pitch)·Rx(roll).
Quaternion euler_to_quaternion(double roll, double pitch, double yaw);
EulerAngles quaternion_to_euler(const Quaternion& q);
EulerAngles rotation_to_euler(const Mat3& r);
Mat3 euler_to_rotation(double roll, double pitch, double yaw);

/// Wraps an angle to (−π, π].
double wrap_angle(double a);

}  // namespace scaletwin
