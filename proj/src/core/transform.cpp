#include "core/transform.hpp"

#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace scaletwin {

namespace {

Mat3 reorthonormalize(const Mat3& r) {
  Eigen::JacobiSVD<Mat3> svd(r, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 out = svd.matrixU() * svd.matrixV().transpose();
  if (out.determinant() < 0.0) {
    Mat3 u = svd.matrixU();
    u.col(2) *= -1.0;
    out = u * svd.matrixV().transpose();
  }
  return out;
}

}  // namespace

double orthonormality_error(const Mat3& r) {
  const double ortho = (r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff();
  return std::max(ortho, std::abs(r.determinant() - 1.0));
}

Transform3::Transform3(const Mat3& rotation, const Vec3& translation)
    : rotation_(rotation), translation_(translation) {
  if (!rotation.allFinite() || !translation.allFinite()) {
    throw std::invalid_argument("Transform3: non-finite component");
  }
  if (orthonormality_error(rotation) > kTolerance) {
    throw std::invalid_argument("Transform3: rotation is not orthonormal with det +1");
  }
}

Transform3 Transform3::from_translation(double x, double y, double z) {
  return Transform3(Mat3::Identity(), Vec3(x, y, z));
}

Transform3 Transform3::from_yaw(double yaw, const Vec3& t) {
  return Transform3(euler_to_rotation(0.0, 0.0, yaw), t);
}

Transform3 Transform3::from_euler(double roll, double pitch, double yaw, const Vec3& t) {
  return Transform3(euler_to_rotation(roll, pitch, yaw), t);
}

Mat4 Transform3::matrix() const {
  Mat4 m = Mat4::Identity();
  m.topLeftCorner<3, 3>() = rotation_;
  m.topRightCorner<3, 1>() = translation_;
  return m;
}

double Transform3::yaw() const { return std::atan2(rotation_(1, 0), rotation_(0, 0)); }

bool Transform3::approx_equal(const Transform3& other, double tol) const {
  return (rotation_ - other.rotation_).cwiseAbs().maxCoeff() <= tol &&
         (translation_ - other.translation_).cwiseAbs().maxCoeff() <= tol;
}

Transform3 compose(const Transform3& a, const Transform3& b) {
  Mat3 r = a.rotation_ * b.rotation_;
  if (orthonormality_error(r) > Transform3::kTolerance) r = reorthonormalize(r);
  return Transform3(Transform3::Unchecked{}, r, a.rotation_ * b.translation_ + a.translation_);
}

Transform3 invert(const Transform3& t) {
  const Mat3 rt = t.rotation_.transpose();
  return Transform3(Transform3::Unchecked{}, rt, -(rt * t.translation_));
}

double Quaternion::norm() const { return std::sqrt(w * w + x * x + y * y + z * z); }

Mat3 euler_to_rotation(double roll, double pitch, double yaw) {
  const double cr = std::cos(roll), sr = std::sin(roll);
  const double cp = std::cos(pitch), sp = std::sin(pitch);
  const double cy = std::cos(yaw), sy = std::sin(yaw);
  Mat3 r;
  r << cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr,
       sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr,
       -sp,     cp * sr,                cp * cr;
  return r;
}

Quaternion euler_to_quaternion(double roll, double pitch, double yaw) {
  const double cr = std::cos(roll * 0.5), sr = std::sin(roll * 0.5);
  const double cp = std::cos(pitch * 0.5), sp = std::sin(pitch * 0.5);
  const double cy = std::cos(yaw * 0.5), sy = std::sin(yaw * 0.5);
  Quaternion q;
  q.w = cr * cp * cy + sr * sp * sy;
  q.x = sr * cp * cy - cr * sp * sy;
  q.y = cr * sp * cy + sr * cp * sy;
  q.z = cr * cp * sy - sr * sp * cy;
  const double n = q.norm();
  q.w /= n;
  q.x /= n;
  q.y /= n;
  q.z /= n;
  return q;
}

EulerAngles quaternion_to_euler(const Quaternion& q) {
  EulerAngles e;
  e.roll = std::atan2(2.0 * (q.w * q.x + q.y * q.z), 1.0 - 2.0 * (q.x * q.x + q.y * q.y));
  const double s = std::clamp(2.0 * (q.w * q.y - q.z * q.x), -1.0, 1.0);
  e.pitch = std::asin(s);
  e.yaw = std::atan2(2.0 * (q.w * q.z + q.x * q.y), 1.0 - 2.0 * (q.y * q.y + q.z * q.z));
  return e;
}

EulerAngles rotation_to_euler(const Mat3& r) {
  EulerAngles e;
  e.pitch = std::asin(std::clamp(-r(2, 0), -1.0, 1.0));
  e.roll = std::atan2(r(2, 1), r(2, 2));
  e.yaw = std::atan2(r(1, 0), r(0, 0));
  return e;
}

double wrap_angle(double a) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  a = std::fmod(a, two_pi);
  if (a <= -std::numbers::pi) a += two_pi;
  if (a > std::numbers::pi) a -= two_pi;
  return a;
}

}  // namespace scaletwin
