#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace c2p {

using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

/// Cross-product matrix: skew(v) * w == v.cross(w).
Mat3 skew(const Vec3& v);

/// Right Jacobian of SO(3): Exp(phi + d) ~= Exp(phi) Exp(Jr(phi) d).
Mat3 right_jacobian(const Vec3& phi);

/// Unit quaternion rotation (Hamilton convention). Every constructor and
/// composition renormalizes, so the stored quaternion always has unit norm.
class Rotation {
 public:
  Rotation() : q_(Eigen::Quaterniond::Identity()) {}
  explicit Rotation(const Eigen::Quaterniond& q);
  explicit Rotation(const Mat3& R);

  static Rotation identity() { return Rotation(); }
  static Rotation exp(const Vec3& phi);
  static Rotation from_euler_zyx(double yaw, double pitch, double roll);

  Vec3 log() const;
  Mat3 matrix() const { return q_.toRotationMatrix(); }
  const Eigen::Quaterniond& quaternion() const { return q_; }

  Rotation inverse() const { return Rotation(q_.conjugate()); }
  Rotation operator*(const Rotation& other) const { return Rotation(q_ * other.q_); }
  Vec3 operator*(const Vec3& v) const { return q_ * v; }

  /// Right-perturbation retraction used by the error state: this * Exp(dtheta).
  Rotation boxplus(const Vec3& dtheta) const { return *this * exp(dtheta); }
  /// Inverse of boxplus: Log(this^-1 * other).
  Vec3 boxminus(const Rotation& other) const { return (inverse() * other).log(); }

 private:
  Eigen::Quaterniond q_;
};

inline Rotation exp_so3(const Vec3& phi) { return Rotation::exp(phi); }
inline Vec3 log_so3(const Rotation& R) { return R.log(); }

/// 4x4 rigid transform [R p; 0 1]. The bottom row is kept exactly (0,0,0,1).
class HomogeneousTransform {
 public:
  HomogeneousTransform() : m_(Mat4::Identity()) {}
  HomogeneousTransform(const Mat3& R, const Vec3& p);

  static HomogeneousTransform identity() { return HomogeneousTransform(); }
  static HomogeneousTransform translation(const Vec3& p) { return {Mat3::Identity(), p}; }

  const Mat4& matrix() const { return m_; }
  Mat3 rotation() const { return m_.topLeftCorner<3, 3>(); }
  Vec3 translation() const { return m_.topRightCorner<3, 1>(); }

  HomogeneousTransform inverse() const;
  HomogeneousTransform operator*(const HomogeneousTransform& other) const;

 private:
  Mat4 m_;
};

Vec3 transform_point(const HomogeneousTransform& T, const Vec3& p);

/// Rigid pose of a body frame expressed in the global frame.
struct Pose {
  Rotation rotation;
  Vec3 position = Vec3::Zero();

  static Pose identity() { return {}; }

  Vec3 transform(const Vec3& p) const { return rotation * p + position; }
  Pose compose(const Pose& other) const {
    return {rotation * other.rotation, rotation * other.position + position};
  }
  Pose inverse() const {
    Rotation inv = rotation.inverse();
    return {inv, -(inv * position)};
  }
  HomogeneousTransform to_transform() const { return {rotation.matrix(), position}; }
};

/// Geodesic interpolation between two poses, alpha in [0, 1].
Pose interpolate(const Pose& a, const Pose& b, double alpha);

}  // namespace c2p
