#pragma once

// Plücker spatial algebra in world coordinates (reference point = world origin).
// Motion vectors are [angular; linear], force vectors are [moment; force].

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace softquad {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Quat = Eigen::Quaterniond;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;
using VecX = Eigen::VectorXd;

inline Mat3 skew(const Vec3& v) {
  Mat3 s;
  s << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
      -v.y(), v.x(), 0.0;
  return s;
}

inline Vec3 angular(const Vec6& v) { return v.head<3>(); }
inline Vec3 linear(const Vec6& v) { return v.tail<3>(); }

inline Vec6 make_spatial(const Vec3& ang, const Vec3& lin) {
  Vec6 out;
  out << ang, lin;
  return out;
}

/// v x u for motion vectors.
inline Vec6 cross_motion(const Vec6& v, const Vec6& u) {
  const Vec3 w = v.head<3>();
  const Vec3 vo = v.tail<3>();
  return make_spatial(w.cross(u.head<3>()), w.cross(u.tail<3>()) + vo.cross(u.head<3>()));
}

/// v x* f for force vectors.
inline Vec6 cross_force(const Vec6& v, const Vec6& f) {
  const Vec3 w = v.head<3>();
  const Vec3 vo = v.tail<3>();
  return make_spatial(w.cross(f.head<3>()) + vo.cross(f.tail<3>()), w.cross(f.tail<3>()));
}

/// Spatial force of a point force applied at a world point.
inline Vec6 point_wrench(const Vec3& point, const Vec3& force) {
  return make_spatial(point.cross(force), force);
}

/// Rigid-body spatial inertia about the world origin, given mass, world COM and
/// the rotational inertia about the COM expressed in world axes.
inline Mat6 spatial_inertia(double mass, const Vec3& com, const Mat3& inertia_com) {
  const Mat3 c = skew(com);
  Mat6 out;
  out.topLeftCorner<3, 3>() = inertia_com - mass * c * c;
  out.topRightCorner<3, 3>() = mass * c;
  out.bottomLeftCorner<3, 3>() = -mass * c;
  out.bottomRightCorner<3, 3>() = mass * Mat3::Identity();
  return out;
}

/// Quaternion for a rotation vector (axis * angle).
inline Quat exp_map(const Vec3& rotvec) {
  const double angle = rotvec.norm();
  if (angle < 1e-12) {
    Quat q(1.0, 0.5 * rotvec.x(), 0.5 * rotvec.y(), 0.5 * rotvec.z());
    return q.normalized();
  }
  return Quat(Eigen::AngleAxisd(angle, rotvec / angle));
}

}  // namespace softquad
