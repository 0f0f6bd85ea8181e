#include "c2p/geometry.hpp"

#include <cmath>

namespace c2p {

namespace {
constexpr double kSmallAngle = 1e-8;
}

Mat3 skew(const Vec3& v) {
  Mat3 S;
  S << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
      -v.y(), v.x(), 0.0;
  return S;
}

Mat3 right_jacobian(const Vec3& phi) {
  const double theta = phi.norm();
  const Mat3 K = skew(phi);
  if (theta < 1e-5) {
    return Mat3::Identity() - 0.5 * K + K * K / 6.0;
  }
  const double t2 = theta * theta;
  return Mat3::Identity() - (1.0 - std::cos(theta)) / t2 * K +
         (theta - std::sin(theta)) / (t2 * theta) * K * K;
}

Rotation::Rotation(const Eigen::Quaterniond& q) : q_(q.normalized()) {}

Rotation::Rotation(const Mat3& R) : q_(Eigen::Quaterniond(R).normalized()) {}

Rotation Rotation::exp(const Vec3& phi) {
  const double theta = phi.norm();
  if (theta < kSmallAngle) {
    // second-order Taylor of cos/sin halves
    Eigen::Quaterniond q(1.0 - theta * theta / 8.0, 0.5 * phi.x(), 0.5 * phi.y(), 0.5 * phi.z());
    return Rotation(q);
  }
  const double half = 0.5 * theta;
  const Vec3 v = std::sin(half) / theta * phi;
  return Rotation(Eigen::Quaterniond(std::cos(half), v.x(), v.y(), v.z()));
}

Rotation Rotation::from_euler_zyx(double yaw, double pitch, double roll) {
  Eigen::Quaterniond q = Eigen::AngleAxisd(yaw, Vec3::UnitZ()) *
                         Eigen::AngleAxisd(pitch, Vec3::UnitY()) *
                         Eigen::AngleAxisd(roll, Vec3::UnitX());
  return Rotation(q);
}

Vec3 Rotation::log() const {
  Eigen::Quaterniond q = q_;
  if (q.w() < 0.0) q.coeffs() = -q.coeffs();
  const Vec3 v = q.vec();
  const double sn = v.norm();
  if (sn < kSmallAngle) {
    return 2.0 * v / q.w();
  }
  const double theta = 2.0 * std::atan2(sn, q.w());
  return theta / sn * v;
}

HomogeneousTransform::HomogeneousTransform(const Mat3& R, const Vec3& p) : m_(Mat4::Identity()) {
  m_.topLeftCorner<3, 3>() = R;
  m_.topRightCorner<3, 1>() = p;
}

HomogeneousTransform HomogeneousTransform::inverse() const {
  const Mat3 Rt = rotation().transpose();
  return {Rt, -Rt * translation()};
}

HomogeneousTransform HomogeneousTransform::operator*(const HomogeneousTransform& other) const {
  return {rotation() * other.rotation(), rotation() * other.translation() + translation()};
}

Vec3 transform_point(const HomogeneousTransform& T, const Vec3& p) {
  return T.rotation() * p + T.translation();
}

Pose interpolate(const Pose& a, const Pose& b, double alpha) {
  const Vec3 dtheta = a.rotation.boxminus(b.rotation);
  return {a.rotation.boxplus(alpha * dtheta), (1.0 - alpha) * a.position + alpha * b.position};
}

}  // namespace c2p
